//! Seeds the multi-tenancy level from a completed latency matrix, then lets
//! the additive-increase scaler walk it under a tightening SLO.
//!
//! ```text
//! cargo run --example mt_scaling
//! ```

use std::path::Path;

use dnnscaler::harness::{RunConfig, RunEnv};
use dnnscaler::matcomp::pick_mtl;
use dnnscaler::scaler::{mt_estimates, MtAction, MtScalerState, DEFAULT_ALPHA};
use dnnscaler::Catalog;

fn main() -> dnnscaler::Result<()> {
    let catalog =
        Catalog::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/catalog.json"))?;
    let config = RunConfig {
        sigma: Some(0.0),
        ..RunConfig::default()
    };
    let env = RunEnv::new(catalog, config, None)?;
    let dnn = "inc-v1@imagenet";
    let model = env.config.gpu_model(&env.catalog, dnn)?.mt;

    // Only MTL 1 and 8 are measured; the other columns come from the peers.
    let estimates = mt_estimates(
        ((1, model.latency(1)), (8, model.latency(8))),
        &env.reference_rows(dnn),
        env.config.max_mtl,
        &env.config.completion,
    )?;
    for (k, est) in estimates.iter().enumerate() {
        println!(
            "MTL {:>2}: estimated {est:>6.2} ms, model {:>6.2} ms",
            k + 1,
            model.latency(k as u32 + 1)
        );
    }

    let mut slo = 48.0;
    let init = pick_mtl(&estimates, slo, env.config.max_mtl);
    let mut s = MtScalerState::new(init, env.config.max_mtl, 1)?;
    println!("starting at MTL {init} for SLO {slo} ms");
    for period in 1..=16 {
        if period == 9 {
            slo /= 2.0;
            s.on_slo_change();
            println!("SLO drops to {slo} ms");
        }
        let before = s.mtl;
        let action = s.step(model.latency(before), slo, DEFAULT_ALPHA);
        if action != MtAction::Hold {
            println!("period {period:>2}: {action:?} {before} -> {}", s.mtl);
        }
    }
    println!("final MTL {}", s.mtl);
    Ok(())
}
