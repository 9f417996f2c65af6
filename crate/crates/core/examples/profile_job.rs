//! Profiles every DNN in the bundled catalog and prints which knob the
//! profiler would hand to the scaler.
//!
//! ```text
//! cargo run --example profile_job
//! ```

use std::path::Path;

use dnnscaler::profiler::{decide, profile, ProfilerConfig, SimBackend, DEFAULT_EPS};
use dnnscaler::{Catalog, GpuModel};

fn main() -> dnnscaler::Result<()> {
    let catalog =
        Catalog::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/catalog.json"))?;
    let cfg = ProfilerConfig::default();

    println!(
        "{:<24} {:>10} {:>9} {:>9}  decision",
        "dnn", "base/s", "TI_B %", "TI_MT %"
    );
    for p in catalog.profiles() {
        let model = GpuModel::from_profile(p, &Default::default(), Some(0.0))?;
        let mut backend = SimBackend::new(model, 128, 10, 42);
        let report = profile(&mut backend, &cfg)?;
        println!(
            "{:<24} {:>10.2} {:>9.2} {:>9.2}  {:?}",
            p.id,
            report.base_throughput,
            report.ti_b,
            report.ti_mt,
            decide(&report, DEFAULT_EPS)
        );
    }
    Ok(())
}
