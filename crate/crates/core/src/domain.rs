//! Core value types and the two statistics every controller relies on:
//! nearest-rank percentiles and percentage throughput improvement.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of samples per control decision.
pub const DEFAULT_WINDOW: usize = 100;

/// Tail-latency quantile targeted by every SLO in this crate.
pub const SLO_QUANTILE: f64 = 0.95;

/// A DNN (on a given dataset) together with its measured calibration points.
///
/// Throughputs are items per second; `batching_points` are `(batch size,
/// throughput)` pairs and `mt_points` are `(instances, throughput)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnnProfile {
    pub id: String,
    /// Parameter count in millions.
    pub param_count: f64,
    /// Mega-FLOP per inference.
    pub flops: f64,
    pub batching_points: Vec<(u32, f64)>,
    pub mt_points: Vec<(u32, f64)>,
    /// Per-DNN lognormal noise override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Per-DNN single-instance utilization override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<f64>,
}

impl DnnProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidProfile {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if !(self.param_count > 0.0) {
            return Err(bad("param_count must be positive"));
        }
        if !(self.flops > 0.0) {
            return Err(bad("flops must be positive"));
        }
        let all_points = self.batching_points.iter().chain(&self.mt_points);
        if all_points.clone().any(|&(k, t)| k == 0 || !(t > 0.0)) {
            return Err(bad("points need knob >= 1 and positive throughput"));
        }
        let b1 = self
            .batching_point(1)
            .ok_or_else(|| bad("missing batching point for bs=1"))?;
        let m1 = self
            .mt_point(1)
            .ok_or_else(|| bad("missing multi-tenancy point for mtl=1"))?;
        if ((b1 - m1) / b1).abs() > 1e-9 {
            return Err(bad("throughput at bs=1 and mtl=1 must agree"));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0) {
                return Err(bad("sigma must be non-negative"));
            }
        }
        if let Some(u) = self.u1 {
            if !(u > 0.0 && u <= 1.0) {
                return Err(bad("u1 must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn batching_point(&self, bs: u32) -> Option<f64> {
        self.batching_points
            .iter()
            .find(|(k, _)| *k == bs)
            .map(|(_, t)| *t)
    }

    pub fn mt_point(&self, mtl: u32) -> Option<f64> {
        self.mt_points
            .iter()
            .find(|(k, _)| *k == mtl)
            .map(|(_, t)| *t)
    }

    /// Throughput at BS=1 / MTL=1.
    pub fn base_throughput(&self) -> Option<f64> {
        self.batching_point(1)
    }
}

/// One inference job: a DNN, a p95 latency target and a run length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub job_id: u32,
    pub dnn_id: String,
    #[serde(default)]
    pub dataset_tag: String,
    /// p95 latency target in milliseconds.
    pub slo: f64,
    /// Simulated run length in seconds.
    pub duration: f64,
    /// `(time s, new slo ms)` steps applied during the run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slo_schedule: Vec<(f64, f64)>,
}

impl JobSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidJob {
            job_id: self.job_id,
            reason,
        };
        if !(self.duration > 0.0) {
            return Err(Error::ZeroDuration);
        }
        if !(self.slo > 0.0) {
            return Err(bad(format!("slo must be positive, got {}", self.slo)));
        }
        let mut prev = f64::NEG_INFINITY;
        for &(t, slo) in &self.slo_schedule {
            if !(t > prev) {
                return Err(bad("slo_schedule times must be strictly increasing".into()));
            }
            if !(t >= 0.0 && t < self.duration) {
                return Err(bad(format!("slo_schedule time {t} outside [0, duration)")));
            }
            if !(slo > 0.0) {
                return Err(bad(format!("scheduled slo must be positive, got {slo}")));
            }
            prev = t;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnobKind {
    Batching,
    MultiTenancy,
}

impl fmt::Display for KnobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnobKind::Batching => f.write_str("batching"),
            KnobKind::MultiTenancy => f.write_str("multi_tenancy"),
        }
    }
}

/// The control knob: a batch size or a number of co-located instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knob {
    pub kind: KnobKind,
    pub value: u32,
}

impl Knob {
    pub fn batching(bs: u32) -> Self {
        Knob {
            kind: KnobKind::Batching,
            value: bs,
        }
    }

    pub fn multi_tenancy(mtl: u32) -> Self {
        Knob {
            kind: KnobKind::MultiTenancy,
            value: mtl,
        }
    }

    pub fn validate(&self, max: u32) -> Result<()> {
        if self.value == 0 || self.value > max {
            return Err(Error::Config(format!(
                "{} knob value {} outside [1, {max}]",
                self.kind, self.value
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Knob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KnobKind::Batching => write!(f, "BS={}", self.value),
            KnobKind::MultiTenancy => write!(f, "MTL={}", self.value),
        }
    }
}

/// Bounded FIFO of latency samples (ms). Evicts the oldest sample on overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyWindow {
    capacity: usize,
    samples: VecDeque<f64>,
}

impl LatencyWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        LatencyWindow {
            capacity,
            samples: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, latency_ms: f64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(latency_ms);
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().copied()
    }

    pub fn percentile(&self, q: f64) -> Result<f64> {
        let v: Vec<f64> = self.samples.iter().copied().collect();
        percentile(&v, q)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.samples.is_empty() {
            None
        } else {
            Some(self.samples.iter().sum::<f64>() / self.samples.len() as f64)
        }
    }
}

/// One control period of a job trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// End of the period, simulated seconds since job start.
    pub time: f64,
    pub job_id: u32,
    /// Knob in effect during the period.
    pub knob: Knob,
    pub p95: f64,
    pub mean_latency: f64,
    /// Items completed per second over the period.
    pub throughput: f64,
    pub power: f64,
    pub slo: f64,
    pub violated: bool,
    /// Period length in seconds.
    pub period: f64,
    /// Items completed during the period.
    pub items: u64,
    /// Items whose latency was within the SLO in force when they completed.
    pub within_slo: u64,
}

/// Nearest-rank percentile: the `ceil(q * n)`-th smallest sample.
pub fn percentile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidQuantile(q));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(q, sorted.len()) - 1])
}

/// 1-based rank used by [`percentile`].
pub(crate) fn nearest_rank(q: f64, n: usize) -> usize {
    // Guard against q*n landing a hair above an integer (0.95 * 100).
    let raw = q * n as f64;
    let rounded = raw.round();
    let rank = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (rank as usize).clamp(1, n)
}

/// Nearest-rank percentile over `(value, weight)` pairs; each pair stands for
/// `weight` identical samples.
pub fn weighted_percentile(samples: &[(f64, u32)], q: f64) -> Result<f64> {
    let total: u64 = samples.iter().map(|&(_, w)| w as u64).sum();
    if total == 0 {
        return Err(Error::NoSamples);
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidQuantile(q));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rank = nearest_rank(q, total as usize) as u64;
    let mut seen = 0u64;
    for (v, w) in sorted {
        seen += w as u64;
        if seen >= rank {
            return Ok(v);
        }
    }
    unreachable!("rank never exceeds total weight")
}

/// Percentage improvement of `t_new` over `t_base`.
pub fn throughput_improvement(t_new: f64, t_base: f64) -> Result<f64> {
    if !(t_base > 0.0) {
        return Err(Error::InvalidBaseline(t_base));
    }
    Ok((t_new - t_base) / t_base * 100.0)
}
