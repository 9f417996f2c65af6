//! Drives the batch-size scaler against a noise-free latency curve and
//! prints every decision next to the brute-force answer.
//!
//! ```text
//! cargo run --example batch_search -- 19.18 7.99 419
//! ```

use dnnscaler::scaler::{band, BatchScalerState, DEFAULT_ALPHA};

fn main() -> dnnscaler::Result<()> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let (a, b, slo) = match args[..] {
        [a, b, slo] => (a, b, slo),
        _ => (19.18, 7.99, 419.0),
    };
    let latency = |bs: u32| a + b * bs as f64;

    let mut s = BatchScalerState::new(128, 1)?;
    for step in 1..=20 {
        let bs = s.current_bs;
        let p95 = latency(bs);
        let verdict = band(p95, slo, DEFAULT_ALPHA);
        match s.step(p95, slo, DEFAULT_ALPHA) {
            Some(next) => println!("{step:>2}: bs {bs:>3} p95 {p95:>7.1} ms {verdict:?} -> {next}"),
            None => {
                println!("{step:>2}: bs {bs:>3} p95 {p95:>7.1} ms {verdict:?}, holding");
                break;
            }
        }
    }
    let best = (1..=128).rev().find(|&bs| latency(bs) <= slo);
    println!(
        "settled at {}, largest feasible batch {:?}",
        s.current_bs, best
    );
    Ok(())
}
