//! Run-time probe choosing between Batching and Multi-Tenancy.
//!
//! Throughput is measured at BS=1, BS=m and MTL=n. The MTL=1 figure is the
//! BS=1 figure, so both improvements share one denominator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{percentile, throughput_improvement, SLO_QUANTILE};
use crate::error::{Error, Result};
use crate::perfmodel::{batch_latency, mt_latency, GpuModel};

pub const DEFAULT_M: u32 = 32;
pub const DEFAULT_N: u32 = 8;
pub const DEFAULT_BATCHES_PER_POINT: u32 = 10;
pub const DEFAULT_EPS: f64 = 0.5;

/// Result of one probe run.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub items: u64,
    /// Wall time of the probe on the simulated clock, ms.
    pub elapsed_ms: f64,
    /// Observed per-request latencies, ms. For batching one entry per batch
    /// (every item of a batch shares its latency).
    pub latencies: Vec<f64>,
}

impl Measurement {
    pub fn throughput(&self) -> f64 {
        if self.elapsed_ms > 0.0 {
            self.items as f64 * 1000.0 / self.elapsed_ms
        } else {
            0.0
        }
    }

    pub fn p95(&self) -> Result<f64> {
        percentile(&self.latencies, SLO_QUANTILE)
    }
}

/// Something the profiler can run inference on.
pub trait Backend {
    /// Runs `batches` back-to-back batches of `bs` items on one instance.
    fn run_batches(&mut self, bs: u32, batches: u32) -> Result<Measurement>;

    /// Runs `mtl` co-located instances at BS=1 until each has served
    /// `requests_per_instance` requests.
    fn run_instances(&mut self, mtl: u32, requests_per_instance: u32) -> Result<Measurement>;
}

/// [`Backend`] over the analytic GPU model.
#[derive(Debug, Clone)]
pub struct SimBackend {
    pub model: GpuModel,
    pub max_bs: u32,
    pub max_mtl: u32,
    rng: ChaCha8Rng,
}

impl SimBackend {
    pub fn new(model: GpuModel, max_bs: u32, max_mtl: u32, seed: u64) -> Self {
        SimBackend {
            model,
            max_bs,
            max_mtl,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_rng(model: GpuModel, max_bs: u32, max_mtl: u32, rng: ChaCha8Rng) -> Self {
        SimBackend {
            model,
            max_bs,
            max_mtl,
            rng,
        }
    }

    pub fn into_rng(self) -> ChaCha8Rng {
        self.rng
    }
}

impl Backend for SimBackend {
    fn run_batches(&mut self, bs: u32, batches: u32) -> Result<Measurement> {
        if bs == 0 || bs > self.max_bs {
            return Err(Error::Backend(format!(
                "batch size {bs} outside [1, {}]",
                self.max_bs
            )));
        }
        let latencies: Vec<f64> = (0..batches)
            .map(|_| batch_latency(&self.model.batching, bs, &mut self.rng))
            .collect();
        Ok(Measurement {
            items: bs as u64 * batches as u64,
            elapsed_ms: latencies.iter().sum(),
            latencies,
        })
    }

    fn run_instances(&mut self, mtl: u32, requests_per_instance: u32) -> Result<Measurement> {
        if mtl == 0 || mtl > self.max_mtl {
            return Err(Error::Backend(format!(
                "MTL {mtl} outside [1, {}]",
                self.max_mtl
            )));
        }
        let mut latencies = Vec::with_capacity((mtl * requests_per_instance) as usize);
        let mut elapsed: f64 = 0.0;
        for _ in 0..mtl {
            let mut busy = 0.0;
            for _ in 0..requests_per_instance {
                let l = mt_latency(&self.model.mt, mtl, &mut self.rng);
                busy += l;
                latencies.push(l);
            }
            elapsed = elapsed.max(busy);
        }
        Ok(Measurement {
            items: latencies.len() as u64,
            elapsed_ms: elapsed,
            latencies,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfilerConfig {
    /// Probe batch size.
    pub m: u32,
    /// Probe number of instances.
    pub n: u32,
    pub batches_per_point: u32,
    /// Tie band on the improvement difference, percentage points.
    pub eps: f64,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        ProfilerConfig {
            m: DEFAULT_M,
            n: DEFAULT_N,
            batches_per_point: DEFAULT_BATCHES_PER_POINT,
            eps: DEFAULT_EPS,
        }
    }
}

impl ProfilerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m <= 1 {
            return Err(Error::Config(format!("m must exceed 1, got {}", self.m)));
        }
        if self.n <= 1 {
            return Err(Error::Config(format!("n must exceed 1, got {}", self.n)));
        }
        if self.batches_per_point == 0 {
            return Err(Error::Config("batches_per_point must be at least 1".into()));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Config("eps must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Batching,
    MultiTenancy,
}

/// Evidence gathered by [`profile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    /// Throughput at BS=1 (equal to MTL=1), items/s.
    pub base_throughput: f64,
    pub tput_bs_m: f64,
    pub tput_mtl_n: f64,
    /// Improvement of BS=m over the base, percent.
    pub ti_b: f64,
    /// Improvement of MTL=n over the base, percent.
    pub ti_mt: f64,
    /// p95 latency at BS=1 / MTL=1, ms.
    pub lat_base: f64,
    /// p95 latency at BS=m, ms.
    pub lat_b: f64,
    /// p95 latency at MTL=n, ms.
    pub lat_mt: f64,
    pub m: u32,
    pub n: u32,
    /// Simulated time spent probing, ms.
    pub elapsed_ms: f64,
    /// Busy time of the BS=1, BS=m and MTL=n probes, ms.
    pub probe_ms: [f64; 3],
    /// Items served while probing.
    pub items: u64,
}

impl ProfileReport {
    /// Builds a report from raw throughputs and latencies.
    pub fn from_measurements(
        base_throughput: f64,
        tput_bs_m: f64,
        tput_mtl_n: f64,
        latencies: (f64, f64, f64),
        m: u32,
        n: u32,
    ) -> Result<Self> {
        Ok(ProfileReport {
            base_throughput,
            tput_bs_m,
            tput_mtl_n,
            ti_b: throughput_improvement(tput_bs_m, base_throughput)?,
            ti_mt: throughput_improvement(tput_mtl_n, base_throughput)?,
            lat_base: latencies.0,
            lat_b: latencies.1,
            lat_mt: latencies.2,
            m,
            n,
            elapsed_ms: 0.0,
            probe_ms: [0.0; 3],
            items: 0,
        })
    }
}

/// Probes the backend at BS=1, BS=m and MTL=n.
pub fn profile<B: Backend + ?Sized>(
    backend: &mut B,
    cfg: &ProfilerConfig,
) -> Result<ProfileReport> {
    cfg.validate()?;
    let base = backend.run_batches(1, cfg.batches_per_point)?;
    let batched = backend.run_batches(cfg.m, cfg.batches_per_point)?;
    let shared = backend.run_instances(cfg.n, cfg.batches_per_point)?;

    let base_throughput = base.throughput();
    if !(base_throughput > 0.0) {
        return Err(Error::Backend("base throughput is zero".into()));
    }
    let mut report = ProfileReport::from_measurements(
        base_throughput,
        batched.throughput(),
        shared.throughput(),
        (base.p95()?, batched.p95()?, shared.p95()?),
        cfg.m,
        cfg.n,
    )?;
    report.elapsed_ms = base.elapsed_ms + batched.elapsed_ms + shared.elapsed_ms;
    report.probe_ms = [base.elapsed_ms, batched.elapsed_ms, shared.elapsed_ms];
    report.items = base.items + batched.items + shared.items;
    Ok(report)
}

/// Picks the approach with the larger improvement; within `eps` percentage
/// points, the one whose probe latency was lower.
#[allow(clippy::if_same_then_else)]
pub fn decide(report: &ProfileReport, eps: f64) -> Approach {
    if report.ti_b > report.ti_mt + eps {
        Approach::Batching
    } else if report.ti_mt > report.ti_b + eps {
        Approach::MultiTenancy
    } else if report.lat_mt < report.lat_b {
        Approach::MultiTenancy
    } else {
        Approach::Batching
    }
}

/// Same rule on raw throughput gains instead of normalized improvements.
#[allow(clippy::if_same_then_else)]
pub fn decide_by_raw_gain(report: &ProfileReport) -> Approach {
    let gain_b = report.tput_bs_m - report.base_throughput;
    let gain_mt = report.tput_mtl_n - report.base_throughput;
    if gain_b > gain_mt {
        Approach::Batching
    } else if gain_mt > gain_b {
        Approach::MultiTenancy
    } else if report.lat_mt < report.lat_b {
        Approach::MultiTenancy
    } else {
        Approach::Batching
    }
}
