//! Measures a grid of batch sizes crossed with instance counts for one DNN.
//!
//! ```text
//! cargo run --example combination_sweep -- mobv1-05@caltech
//! ```

use std::path::Path;

use dnnscaler::harness::{combination_sweep, RunConfig};
use dnnscaler::Catalog;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dnnscaler::Result<()> {
    let dnn = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "inc-v1@imagenet".into());
    let catalog =
        Catalog::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/catalog.json"))?;
    let model = RunConfig::default().gpu_model(&catalog, &dnn)?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let bs = [1, 2, 4, 8, 16, 32];
    let mtl = [1, 2, 4, 8];
    let grid = combination_sweep(&model, &bs, &mtl, 20, &mut rng)?;

    println!("{dnn}: throughput in items/s (p95 ms)");
    print!("{:>6}", "bs\\mtl");
    for k in mtl {
        print!("{k:>18}");
    }
    println!();
    for row in grid.chunks(mtl.len()) {
        print!("{:>6}", row[0].bs);
        for p in row {
            print!("{:>10.1} ({:>5.1})", p.throughput, p.p95_ms);
        }
        println!();
    }
    Ok(())
}
