//! Fills in a latency matrix where only two columns of the last row were
//! measured, and compares the estimate with the hidden truth.
//!
//! ```text
//! cargo run --example matrix_completion
//! ```

use dnnscaler::matcomp::{complete, CompletionConfig, LatencyMatrix};

fn main() -> dnnscaler::Result<()> {
    // Latency at MTL k for a few DNNs with different single-instance cost and capacity.
    let truth: Vec<Vec<f64>> = [
        (8.0, 2.0),
        (20.0, 3.5),
        (4.5, 1.5),
        (60.0, 5.0),
        (12.0, 2.5),
    ]
    .iter()
    .map(|&(l1, c): &(f64, f64)| (1..=10).map(|k| l1 * (k as f64 / c).max(1.0)).collect())
    .collect();
    let last = truth.len() - 1;
    let data: Vec<Vec<Option<f64>>> = truth
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &x)| (i != last || j == 0 || j == 7).then_some(x))
                .collect()
        })
        .collect();

    let ids = (0..truth.len()).map(|i| format!("dnn{i}")).collect();
    let m = LatencyMatrix::from_rows(ids, (1..=10).collect(), &data)?;
    let res = complete(&m, &CompletionConfig::default())?;
    println!(
        "residual {:.2e} after {} sweeps (converged: {})",
        res.residual, res.iterations, res.converged
    );
    for (k, (est, real)) in res.row(last).iter().zip(&truth[last]).enumerate() {
        let mark = if data[last][k].is_some() {
            "observed"
        } else {
            ""
        };
        println!("MTL {:>2}: {est:>7.2} vs {real:>7.2} ms {mark}", k + 1);
    }
    Ok(())
}
