//! Runs the 30-job workload under both controllers and prints the per-job
//! throughput gain of DNNScaler over the Clipper-style baseline.
//!
//! ```text
//! cargo run --release --example clipper_vs_dnnscaler
//! ```

use std::path::Path;

use dnnscaler::{run_scenario, Scenario};

fn main() -> dnnscaler::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenario_30_jobs.json");
    let scenario = Scenario::load(&path)?;
    let report = run_scenario(&scenario)?;
    let Some(c) = report.comparison else {
        println!("scenario did not request both controllers");
        return Ok(());
    };
    println!(
        "{:>4} {:<24} {:<14} {:>10} {:>10} {:>9}",
        "job", "dnn", "approach", "ours/s", "clipper/s", "gain %"
    );
    for r in &c.rows {
        println!(
            "{:>4} {:<24} {:<14} {:>10.1} {:>10.1} {:>9.1}",
            r.job_id,
            r.dnn_id,
            r.approach.map_or("-".to_string(), |a| format!("{a:?}")),
            r.dnnscaler_steady_throughput,
            r.clipper_steady_throughput,
            r.improvement_pct
        );
    }
    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}%"));
    println!(
        "average gain {} (multi-tenancy jobs {}, batching jobs {})",
        show(c.avg_improvement_pct),
        show(c.avg_improvement_mt_pct),
        show(c.avg_improvement_batching_pct)
    );
    Ok(())
}
