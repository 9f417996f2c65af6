//! Measures combined batching and multi-tenancy settings without a
//! controller in the loop.

use rand::Rng;
use serde::Serialize;

use crate::domain::{percentile, SLO_QUANTILE};
use crate::error::{Error, Result};
use crate::perfmodel::{noise_factor, GpuModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub bs: u32,
    pub mtl: u32,
    /// Items per second across all instances.
    pub throughput: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
}

/// Runs `k` instances, each serving `batches` batches of `bs`, for every
/// `(bs, k)` pair. Pairs are emitted in `bs_list`-major order.
pub fn combination_sweep<R: Rng + ?Sized>(
    model: &GpuModel,
    bs_list: &[u32],
    mtl_list: &[u32],
    batches: u32,
    rng: &mut R,
) -> Result<Vec<SweepPoint>> {
    if bs_list.is_empty() || mtl_list.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one bs and one mtl".into(),
        ));
    }
    if batches == 0 {
        return Err(Error::Config(
            "sweep needs at least one batch per instance".into(),
        ));
    }
    if bs_list.contains(&0) || mtl_list.contains(&0) {
        return Err(Error::Config("sweep values must be at least 1".into()));
    }
    let sigma = model.batching.sigma;
    let mut points = Vec::with_capacity(bs_list.len() * mtl_list.len());
    for &bs in bs_list {
        for &k in mtl_list {
            let base = model.combined_latency(bs, k);
            let mut latencies = Vec::with_capacity((k * batches) as usize);
            let mut elapsed: f64 = 0.0;
            for _ in 0..k {
                let mut busy = 0.0;
                for _ in 0..batches {
                    let l = base * noise_factor(sigma, rng);
                    busy += l;
                    latencies.push(l);
                }
                elapsed = elapsed.max(busy);
            }
            let items = (k as u64 * batches as u64 * bs as u64) as f64;
            points.push(SweepPoint {
                bs,
                mtl: k,
                throughput: items * 1000.0 / elapsed,
                p95_ms: percentile(&latencies, SLO_QUANTILE)?,
                mean_ms: latencies.iter().sum::<f64>() / latencies.len() as f64,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perfmodel::{BatchingModel, MtModel, PowerModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> GpuModel {
        GpuModel {
            batching: BatchingModel::new(10.0, 2.0, 0.0).unwrap(),
            mt: MtModel::new(12.0, 2.0, 0.0).unwrap(),
            power: PowerModel::default(),
        }
    }

    #[test]
    fn gain_then_flat_past_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = combination_sweep(&model(), &[8], &[1, 2, 3, 4], 5, &mut rng).unwrap();
        assert!(pts[1].throughput > 1.9 * pts[0].throughput);
        assert!((pts[3].throughput - pts[1].throughput).abs() < 1e-9);
    }

    #[test]
    fn empty_lists_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(combination_sweep(&model(), &[], &[1], 5, &mut rng).is_err());
    }
}
