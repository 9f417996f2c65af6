//! Compares power draw and throughput per watt of static settings against
//! the adaptive controller for one job.
//!
//! ```text
//! cargo run --example power_efficiency
//! ```

use std::path::Path;

use dnnscaler::harness::job_seed;
use dnnscaler::{run_job, Catalog, ControllerKind, JobSpec, Knob, RunConfig, RunEnv};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dnnscaler::Result<()> {
    let catalog =
        Catalog::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/catalog.json"))?;
    let env = RunEnv::new(catalog, RunConfig::default(), None)?;
    let spec = JobSpec {
        job_id: 1,
        dnn_id: "inc-v1@imagenet".into(),
        dataset_tag: "imagenet".into(),
        slo: 35.0,
        duration: 120.0,
        slo_schedule: vec![],
    };
    let controllers = [
        ControllerKind::StaticKnob(Knob::batching(1)),
        ControllerKind::StaticKnob(Knob::batching(8)),
        ControllerKind::StaticKnob(Knob::multi_tenancy(4)),
        ControllerKind::Clipper,
        ControllerKind::DnnScaler,
    ];
    println!(
        "{:<14} {:>10} {:>9} {:>12} {:>11}",
        "controller", "items/s", "watts", "items/s/W", "within SLO"
    );
    for c in &controllers {
        let rng = ChaCha8Rng::seed_from_u64(job_seed(42, spec.job_id));
        let s = run_job(&spec, &env, c, rng)?.summary;
        println!(
            "{:<14} {:>10.1} {:>9.1} {:>12.3} {:>10.1}%",
            c.to_string(),
            s.avg_throughput,
            s.avg_power,
            s.power_efficiency,
            100.0 * s.overall_compliance
        );
    }
    Ok(())
}
