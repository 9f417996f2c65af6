//! Command-line front end: profile a DNN, run or compare scenarios, replay
//! SLO changes and sweep combined settings.
//!
//! Exit codes: 0 on success, 2 for usage or configuration problems, 1 when a
//! run fails. Log verbosity comes from the `DNNSCALER_LOG` environment
//! variable (`error`, `warn`, `info`, `debug`, `trace`).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::catalog::Catalog;
use crate::error::Error;
use crate::harness::{
    self, combination_sweep, job_seed, output, ControllerKind, RunConfig, Scenario,
};
use crate::perfmodel::ModelParams;
use crate::profiler::{decide, profile, ProfilerConfig, SimBackend};

pub const LOG_ENV: &str = "DNNSCALER_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "dnnscaler",
    version,
    about = "Simulated DNN inference-serving controller"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Profile one DNN and print the batching vs multi-tenancy decision.
    Profile(ProfileArgs),
    /// Run a scenario and write per-period metrics and job summaries.
    Run(RunArgs),
    /// Run a scenario under DNNScaler and Clipper and print the gains.
    Compare(ScenarioArgs),
    /// Run every job of a scenario through its SLO schedule.
    Sensitivity(ScenarioArgs),
    /// Measure a grid of (batch size, MTL) settings for one DNN.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Catalog JSON with DNN profiles.
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub dnn: String,
    #[arg(long, default_value_t = crate::profiler::DEFAULT_M)]
    pub m: u32,
    #[arg(long, default_value_t = crate::profiler::DEFAULT_N)]
    pub n: u32,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = harness_seed())]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the noise level of every profile.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Controller to run: dnnscaler, clipper, both, static-bsN or
    /// static-mtlN. Repeatable; overrides the scenario.
    #[arg(long)]
    pub controller: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub dnn: String,
    /// Comma-separated batch sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub bs: Vec<u32>,
    /// Comma-separated MTLs.
    #[arg(long, value_delimiter = ',', required = true)]
    pub mtl: Vec<u32>,
    #[arg(long)]
    pub out: PathBuf,
    /// Batches measured per instance at each point.
    #[arg(long, default_value_t = 20)]
    pub batches: u32,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = harness_seed())]
    pub seed: u64,
}

const fn harness_seed() -> u64 {
    harness::DEFAULT_SEED
}

/// Failure split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(Error),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e)
}

/// Config-class errors map to exit 2 even when raised mid-run.
fn runtime(e: Error) -> CliError {
    if e.is_config() {
        CliError::Usage(e)
    } else {
        CliError::Runtime(e)
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ =
        env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute<W: Write>(command: Command, out: &mut W) -> Result<(), CliError> {
    match command {
        Command::Profile(a) => cmd_profile(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Compare(a) => cmd_compare(&a, out),
        Command::Sensitivity(a) => cmd_sensitivity(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Runtime(Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    })
}

pub fn cmd_profile<W: Write>(a: &ProfileArgs, out: &mut W) -> Result<(), CliError> {
    let cfg = ProfilerConfig {
        m: a.m,
        n: a.n,
        ..ProfilerConfig::default()
    };
    cfg.validate().map_err(usage)?;
    let catalog = Catalog::load(&a.catalog).map_err(usage)?;
    let profile_entry = catalog.get(&a.dnn).map_err(usage)?;
    let model = crate::perfmodel::GpuModel::from_profile(
        profile_entry,
        &ModelParams::default(),
        Some(a.sigma),
    )
    .map_err(usage)?;
    let mut backend = SimBackend::new(model, a.m.max(1), a.n.max(1), a.seed);
    let report = profile(&mut backend, &cfg).map_err(runtime)?;
    let approach = decide(&report, cfg.eps);

    writeln!(out, "dnn            {}", a.dnn).map_err(io)?;
    writeln!(out, "base tput      {:.2} items/s", report.base_throughput).map_err(io)?;
    writeln!(out, "BS={:<3} tput    {:.2} items/s", a.m, report.tput_bs_m).map_err(io)?;
    writeln!(
        out,
        "MTL={:<3} tput   {:.2} items/s",
        a.n, report.tput_mtl_n
    )
    .map_err(io)?;
    writeln!(out, "TI_B           {:.2}%", report.ti_b).map_err(io)?;
    writeln!(out, "TI_MT          {:.2}%", report.ti_mt).map_err(io)?;
    writeln!(out, "decision       {}", approach_name(approach)).map_err(io)?;
    let json = serde_json::json!({
        "dnn_id": a.dnn,
        "report": report,
        "decision": approach,
    });
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&json).expect("json value")
    )
    .map_err(io)?;
    Ok(())
}

fn approach_name(a: crate::profiler::Approach) -> &'static str {
    match a {
        crate::profiler::Approach::Batching => "batching",
        crate::profiler::Approach::MultiTenancy => "multi_tenancy",
    }
}

fn load_scenario(a: &ScenarioArgs) -> Result<Scenario, CliError> {
    let mut s = Scenario::load(&a.config).map_err(usage)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(sigma) = a.sigma {
        s.config.sigma = Some(sigma);
        s.config.validate().map_err(usage)?;
    }
    Ok(s)
}

fn parse_controllers(names: &[String]) -> Result<Vec<ControllerKind>, CliError> {
    let mut out = Vec::new();
    for name in names {
        if name == "both" {
            out.extend([ControllerKind::DnnScaler, ControllerKind::Clipper]);
        } else {
            out.push(name.parse().map_err(usage)?);
        }
    }
    out.dedup();
    Ok(out)
}

fn print_summaries<W: Write>(
    report: &harness::ScenarioReport,
    out: &mut W,
) -> Result<(), CliError> {
    writeln!(
        out,
        "{:<11} {:>4} {:<26} {:>10} {:>12} {:>12} {:>8} {:>9}",
        "controller", "job", "dnn", "knob", "avg tput", "steady tput", "p95", "comply"
    )
    .map_err(io)?;
    for run in &report.runs {
        for job in &run.jobs {
            match &job.result {
                Ok(t) => {
                    let s = &t.summary;
                    writeln!(
                        out,
                        "{:<11} {:>4} {:<26} {:>10} {:>12.2} {:>12.2} {:>8.1} {:>8.1}%",
                        run.controller.to_string(),
                        s.job_id,
                        s.dnn_id,
                        s.steady_knob.to_string(),
                        s.avg_throughput,
                        s.steady_throughput,
                        s.p95_overall.unwrap_or(f64::NAN),
                        s.slo_compliance_fraction * 100.0,
                    )
                    .map_err(io)?;
                }
                Err(e) => writeln!(
                    out,
                    "{:<11} {:>4} {:<26} failed: {e}",
                    run.controller.to_string(),
                    job.job_id,
                    job.dnn_id
                )
                .map_err(io)?,
            }
        }
    }
    Ok(())
}

fn print_comparison<W: Write>(c: &harness::Comparison, out: &mut W) -> Result<(), CliError> {
    writeln!(
        out,
        "{:>4} {:<26} {:<14} {:>12} {:>12} {:>10}",
        "job", "dnn", "approach", "dnnscaler", "clipper", "gain %"
    )
    .map_err(io)?;
    for r in &c.rows {
        writeln!(
            out,
            "{:>4} {:<26} {:<14} {:>12.2} {:>12.2} {:>10.1}",
            r.job_id,
            r.dnn_id,
            r.approach.map_or("-", approach_name),
            r.dnnscaler_steady_throughput,
            r.clipper_steady_throughput,
            r.improvement_pct
        )
        .map_err(io)?;
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}%"));
    writeln!(out, "average gain: {}", fmt(c.avg_improvement_pct)).map_err(io)?;
    writeln!(
        out,
        "average gain (multi-tenancy jobs): {}",
        fmt(c.avg_improvement_mt_pct)
    )
    .map_err(io)?;
    writeln!(
        out,
        "average gain (batching jobs): {}",
        fmt(c.avg_improvement_batching_pct)
    )
    .map_err(io)?;
    Ok(())
}

fn any_failed(report: &harness::ScenarioReport) -> Option<&Error> {
    report
        .runs
        .iter()
        .flat_map(|r| r.jobs.iter())
        .find_map(|j| j.result.as_ref().err())
}

pub fn cmd_run<W: Write>(a: &RunArgs, out: &mut W) -> Result<(), CliError> {
    let mut s = load_scenario(&a.scenario)?;
    if !a.controller.is_empty() {
        s.controllers = parse_controllers(&a.controller)?;
    }
    let report = harness::run_scenario(&s).map_err(runtime)?;
    output::write_report(&a.scenario.out, &report).map_err(runtime)?;
    print_summaries(&report, out)?;
    if let Some(c) = &report.comparison {
        print_comparison(c, out)?;
    }
    match any_failed(&report) {
        Some(e) => Err(CliError::Runtime(Error::Backend(format!(
            "at least one job failed: {e}"
        )))),
        None => Ok(()),
    }
}

pub fn cmd_compare<W: Write>(a: &ScenarioArgs, out: &mut W) -> Result<(), CliError> {
    let mut s = load_scenario(a)?;
    s.controllers = vec![ControllerKind::DnnScaler, ControllerKind::Clipper];
    let report = harness::run_scenario(&s).map_err(runtime)?;
    output::write_report(&a.out, &report).map_err(runtime)?;
    let comparison = report
        .comparison
        .as_ref()
        .expect("both controllers requested");
    print_comparison(comparison, out)?;
    match any_failed(&report) {
        Some(e) => Err(CliError::Runtime(Error::Backend(format!(
            "at least one job failed: {e}"
        )))),
        None => Ok(()),
    }
}

pub fn cmd_sensitivity<W: Write>(a: &ScenarioArgs, out: &mut W) -> Result<(), CliError> {
    let s = load_scenario(a)?;
    if let Some(job) = s.jobs.iter().find(|j| j.slo_schedule.is_empty()) {
        return Err(usage(Error::InvalidJob {
            job_id: job.job_id,
            reason: "sensitivity run needs a non-empty slo_schedule".into(),
        }));
    }
    let env = s.env().map_err(usage)?;
    let traces: Vec<_> = s
        .jobs
        .par_iter()
        .map(|j| harness::sensitivity(j, &env, s.seed))
        .collect();
    output::create_dir(&a.out).map_err(runtime)?;
    for (job, trace) in s.jobs.iter().zip(&traces) {
        match trace {
            Ok(t) => {
                output::write_trace_files(&a.out, &format!("sensitivity_job{}", job.job_id), t)
                    .map_err(runtime)?;
                let sm = &t.summary;
                let knobs: Vec<String> = changes(&t.records);
                writeln!(
                    out,
                    "job {} ({}): knobs {} | readaptation periods {:?}",
                    job.job_id,
                    job.dnn_id,
                    knobs.join(" -> "),
                    sm.readaptation_periods
                )
                .map_err(io)?;
            }
            Err(e) => writeln!(out, "job {} failed: {e}", job.job_id).map_err(io)?,
        }
    }
    match traces.into_iter().find_map(|t| t.err()) {
        Some(e) => Err(runtime(e)),
        None => Ok(()),
    }
}

/// Distinct consecutive knob settings in a trace.
fn changes(records: &[crate::domain::MetricsRecord]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in records {
        let k = r.knob.to_string();
        if out.last() != Some(&k) {
            out.push(k);
        }
    }
    out
}

pub fn cmd_sweep<W: Write>(a: &SweepArgs, out: &mut W) -> Result<(), CliError> {
    let catalog = Catalog::load(&a.catalog).map_err(usage)?;
    let config = RunConfig {
        sigma: Some(a.sigma),
        ..RunConfig::default()
    };
    config.validate().map_err(usage)?;
    let model = config.gpu_model(&catalog, &a.dnn).map_err(usage)?;
    let mut rng = ChaCha8Rng::seed_from_u64(job_seed(a.seed, 0));
    let points = combination_sweep(&model, &a.bs, &a.mtl, a.batches, &mut rng).map_err(usage)?;
    output::create_dir(&a.out).map_err(runtime)?;
    let path = a.out.join("sweep.csv");
    output::write_sweep_file(&path, &points).map_err(runtime)?;
    writeln!(
        out,
        "{:>5} {:>5} {:>12} {:>10}",
        "bs", "mtl", "throughput", "p95 ms"
    )
    .map_err(io)?;
    for p in &points {
        writeln!(
            out,
            "{:>5} {:>5} {:>12.2} {:>10.2}",
            p.bs, p.mtl, p.throughput, p.p95_ms
        )
        .map_err(io)?;
    }
    writeln!(out, "wrote {}", display(&path)).map_err(io)?;
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
