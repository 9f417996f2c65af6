//! Analytic stand-in for the GPU.
//!
//! Batch latency is affine in the batch size, `a + b * bs`. With `k`
//! co-located instances each request takes `l1 * max(1, k / c)`: up to `c`
//! instances run side by side, beyond that they time-share. Both are scaled by
//! a multiplicative lognormal factor `exp(sigma * z)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{DnnProfile, Knob, KnobKind};
use crate::error::{Error, Result};

pub const DEFAULT_SIGMA: f64 = 0.05;
pub const DEFAULT_LAUNCH_DELAY_MS: f64 = 500.0;
pub const DEFAULT_TERMINATE_DELAY_MS: f64 = 100.0;
pub const IDLE_POWER_W: f64 = 50.0;
pub const MAX_POWER_W: f64 = 250.0;
pub const DEFAULT_U1: f64 = 0.12;
pub const DEFAULT_BATCH_SLOPE: f64 = 1.0;

/// Draws the multiplicative noise factor `exp(sigma * z)`.
///
/// A normal variate is consumed even when `sigma == 0` so that the random
/// stream does not depend on the noise level.
pub fn noise_factor<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if sigma == 0.0 {
        1.0
    } else {
        (sigma * z).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchingModel {
    /// Fixed per-batch overhead, ms.
    pub a: f64,
    /// Marginal cost per item, ms.
    pub b: f64,
    pub sigma: f64,
}

impl BatchingModel {
    pub fn new(a: f64, b: f64, sigma: f64) -> Result<Self> {
        if !(a >= 0.0 && b > 0.0 && sigma >= 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidModel(format!(
                "batching model needs a >= 0, b > 0, sigma >= 0 (a={a}, b={b}, sigma={sigma})"
            )));
        }
        Ok(BatchingModel { a, b, sigma })
    }

    /// Noise-free batch latency in ms.
    pub fn latency(&self, bs: u32) -> f64 {
        self.a + self.b * bs as f64
    }

    /// Noise-free throughput in items/s.
    pub fn throughput(&self, bs: u32) -> f64 {
        bs as f64 * 1000.0 / self.latency(bs)
    }
}

/// Fits `a + b * bs = 1000 * bs / throughput` to the measured points: exactly
/// for two points, by least squares for more.
pub fn calibrate_batching(points: &[(u32, f64)], sigma: f64) -> Result<BatchingModel> {
    if points.len() < 2 {
        return Err(Error::SingularSystem(
            "need at least two batching points".into(),
        ));
    }
    if let Some(&(bs, t)) = points.iter().find(|&&(bs, t)| bs == 0 || !(t > 0.0)) {
        return Err(Error::InvalidModel(format!(
            "batching point ({bs}, {t}) needs bs >= 1 and positive throughput"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(bs, _)| bs as f64).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|&(bs, t)| bs as f64 * 1000.0 / t)
        .collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::SingularSystem(
            "batching points share one batch size".into(),
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let b = sxy / sxx;
    let a = mean_y - b * mean_x;
    BatchingModel::new(a, b, sigma)
}

/// Latency of one batch of `bs` items, ms. Every item of the batch observes it.
pub fn batch_latency<R: Rng + ?Sized>(m: &BatchingModel, bs: u32, rng: &mut R) -> f64 {
    m.latency(bs) * noise_factor(m.sigma, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtModel {
    /// Single-instance per-request latency, ms.
    pub l1: f64,
    /// Instances the GPU sustains before they time-share.
    pub capacity: f64,
    pub sigma: f64,
    pub launch_delay: f64,
    pub terminate_delay: f64,
}

impl MtModel {
    pub fn new(l1: f64, capacity: f64, sigma: f64) -> Result<Self> {
        if !(l1 > 0.0 && capacity >= 1.0 && sigma >= 0.0) || !l1.is_finite() {
            return Err(Error::InvalidModel(format!(
                "mt model needs l1 > 0, capacity >= 1, sigma >= 0 (l1={l1}, c={capacity})"
            )));
        }
        Ok(MtModel {
            l1,
            capacity,
            sigma,
            launch_delay: DEFAULT_LAUNCH_DELAY_MS,
            terminate_delay: DEFAULT_TERMINATE_DELAY_MS,
        })
    }

    pub fn with_delays(mut self, launch_ms: f64, terminate_ms: f64) -> Self {
        self.launch_delay = launch_ms;
        self.terminate_delay = terminate_ms;
        self
    }

    /// Noise-free per-request latency with `k` instances, ms.
    pub fn latency(&self, k: u32) -> f64 {
        self.l1 * (k as f64 / self.capacity).max(1.0)
    }

    /// Noise-free aggregate throughput with `k` instances, items/s.
    pub fn throughput(&self, k: u32) -> f64 {
        1000.0 / self.l1 * (k as f64).min(self.capacity)
    }
}

/// `l1 = 1000 / tput(1)`; `capacity = tput(n) / tput(1)` clamped to `[1, n]`,
/// where `n` is the largest measured MTL.
pub fn calibrate_mt(points: &[(u32, f64)], sigma: f64) -> Result<MtModel> {
    let base = points
        .iter()
        .find(|&&(k, _)| k == 1)
        .map(|&(_, t)| t)
        .ok_or_else(|| Error::InvalidModel("missing mtl=1 point".into()))?;
    let &(n, tput_n) = points
        .iter()
        .filter(|&&(k, _)| k > 1)
        .max_by_key(|&&(k, _)| k)
        .ok_or_else(|| Error::InvalidModel("need a point with mtl > 1".into()))?;
    if !(base > 0.0 && tput_n > 0.0) {
        return Err(Error::InvalidModel("throughputs must be positive".into()));
    }
    let capacity = (tput_n / base).clamp(1.0, n as f64);
    MtModel::new(1000.0 / base, capacity, sigma)
}

/// Per-request latency with `k` co-located instances, ms.
pub fn mt_latency<R: Rng + ?Sized>(m: &MtModel, k: u32, rng: &mut R) -> f64 {
    m.latency(k) * noise_factor(m.sigma, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub p_idle: f64,
    pub p_max: f64,
    /// Utilization of one instance at BS=1.
    pub u1: f64,
    /// Utilization slope for batching.
    pub batch_slope: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            p_idle: IDLE_POWER_W,
            p_max: MAX_POWER_W,
            u1: DEFAULT_U1,
            batch_slope: DEFAULT_BATCH_SLOPE,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.p_idle && self.p_idle < self.p_max) {
            return Err(Error::InvalidModel("need 0 < p_idle < p_max".into()));
        }
        if !(self.u1 > 0.0 && self.u1 <= 1.0) {
            return Err(Error::InvalidModel("need 0 < u1 <= 1".into()));
        }
        if !(self.batch_slope > 0.0) {
            return Err(Error::InvalidModel("batch slope must be positive".into()));
        }
        Ok(())
    }

    /// SM utilization in `[0, 1]` for a knob setting.
    pub fn utilization(&self, knob: Knob, batching: &BatchingModel) -> f64 {
        let k = knob.value as f64;
        let u = match knob.kind {
            KnobKind::MultiTenancy => k * self.u1,
            KnobKind::Batching => {
                let busy = batching.b * k / (batching.a + batching.b * k);
                self.u1 * busy * self.batch_slope
            }
        };
        u.min(1.0)
    }

    pub fn power(&self, utilization: f64) -> f64 {
        let u = utilization.clamp(0.0, 1.0);
        self.p_idle + (self.p_max - self.p_idle) * u
    }
}

/// Free-standing form of [`PowerModel::utilization`].
pub fn utilization(pm: &PowerModel, knob: Knob, batching: &BatchingModel) -> f64 {
    pm.utilization(knob, batching)
}

/// Free-standing form of [`PowerModel::power`].
pub fn power(pm: &PowerModel, utilization: f64) -> f64 {
    pm.power(utilization)
}

/// Currently running instances of one DNN.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceSet {
    pub mtl: u32,
    pub max_mtl: u32,
}

impl InstanceSet {
    pub fn new(mtl: u32, max_mtl: u32) -> Result<Self> {
        if mtl == 0 || mtl > max_mtl {
            return Err(Error::MtlOutOfRange {
                requested: mtl as i64,
                max: max_mtl,
            });
        }
        Ok(InstanceSet { mtl, max_mtl })
    }
}

/// Launches (`delta > 0`) or terminates (`delta < 0`) instances and returns
/// the simulated time the change takes, in ms. The set keeps serving at its
/// old level during that time.
pub fn apply_instance_change(set: &mut InstanceSet, delta: i32, model: &MtModel) -> Result<f64> {
    let target = set.mtl as i64 + delta as i64;
    if target < 1 || target > set.max_mtl as i64 {
        return Err(Error::MtlOutOfRange {
            requested: target,
            max: set.max_mtl,
        });
    }
    set.mtl = target as u32;
    Ok(match delta.signum() {
        1 => model.launch_delay * delta as f64,
        -1 => model.terminate_delay * (-delta) as f64,
        _ => 0.0,
    })
}

/// Knobs shared by every DNN when building models from a catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub sigma: f64,
    pub launch_delay_ms: f64,
    pub terminate_delay_ms: f64,
    pub p_idle: f64,
    pub p_max: f64,
    pub u1: f64,
    pub batch_slope: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            sigma: DEFAULT_SIGMA,
            launch_delay_ms: DEFAULT_LAUNCH_DELAY_MS,
            terminate_delay_ms: DEFAULT_TERMINATE_DELAY_MS,
            p_idle: IDLE_POWER_W,
            p_max: MAX_POWER_W,
            u1: DEFAULT_U1,
            batch_slope: DEFAULT_BATCH_SLOPE,
        }
    }
}

/// Everything the simulator knows about one DNN on the GPU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpuModel {
    pub batching: BatchingModel,
    pub mt: MtModel,
    pub power: PowerModel,
}

impl GpuModel {
    /// Calibrates from a profile. A per-profile `sigma` or `u1` wins over
    /// `params` unless `force_sigma` is set.
    pub fn from_profile(
        profile: &DnnProfile,
        params: &ModelParams,
        force_sigma: Option<f64>,
    ) -> Result<Self> {
        profile.validate()?;
        let sigma = force_sigma.or(profile.sigma).unwrap_or(params.sigma);
        let batching = calibrate_batching(&profile.batching_points, sigma)?;
        let mt = calibrate_mt(&profile.mt_points, sigma)?
            .with_delays(params.launch_delay_ms, params.terminate_delay_ms);
        let power = PowerModel {
            p_idle: params.p_idle,
            p_max: params.p_max,
            u1: profile.u1.unwrap_or(params.u1),
            batch_slope: params.batch_slope,
        };
        power.validate()?;
        Ok(GpuModel {
            batching,
            mt,
            power,
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.batching.sigma = sigma;
        self.mt.sigma = sigma;
        self
    }

    /// Noise-free latency of a knob setting, ms.
    pub fn latency(&self, knob: Knob) -> f64 {
        match knob.kind {
            KnobKind::Batching => self.batching.latency(knob.value),
            KnobKind::MultiTenancy => self.mt.latency(knob.value),
        }
    }

    /// Noise-free throughput of a knob setting, items/s.
    pub fn throughput(&self, knob: Knob) -> f64 {
        match knob.kind {
            KnobKind::Batching => self.batching.throughput(knob.value),
            KnobKind::MultiTenancy => self.mt.throughput(knob.value),
        }
    }

    /// Noise-free per-batch latency of one of `k` instances each running
    /// batches of `bs`, ms.
    pub fn combined_latency(&self, bs: u32, k: u32) -> f64 {
        self.batching.latency(bs) * (k as f64 / self.mt.capacity).max(1.0)
    }

    pub fn knob_power(&self, knob: Knob) -> f64 {
        self.power
            .power(self.power.utilization(knob, &self.batching))
    }
}
