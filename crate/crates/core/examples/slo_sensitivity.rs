//! Replays the SLO-change scenarios and prints how the knob moved after
//! each step.
//!
//! ```text
//! cargo run --example slo_sensitivity
//! ```

use std::path::Path;

use dnnscaler::harness::sensitivity;
use dnnscaler::Scenario;

fn main() -> dnnscaler::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sensitivity.json");
    let mut scenario = Scenario::load(&path)?;
    scenario.config.sigma = Some(0.0);
    let env = scenario.env()?;

    for job in &scenario.jobs {
        let trace = sensitivity(job, &env, scenario.seed)?;
        let mut knobs: Vec<String> = Vec::new();
        for r in &trace.records {
            let k = r.knob.to_string();
            if knobs.last() != Some(&k) {
                knobs.push(k);
            }
        }
        println!(
            "job {} {} SLO {} -> {:?}: {} (periods to re-enter band: {:?})",
            job.job_id,
            job.dnn_id,
            job.slo,
            job.slo_schedule.iter().map(|s| s.1).collect::<Vec<_>>(),
            knobs.join(" -> "),
            trace.summary.readaptation_periods
        );
    }
    Ok(())
}
