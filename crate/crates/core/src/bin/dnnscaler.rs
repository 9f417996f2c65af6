fn main() {
    std::process::exit(dnnscaler::cli::main_with_args(std::env::args_os()));
}
