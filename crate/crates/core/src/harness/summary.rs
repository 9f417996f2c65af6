//! Per-job summaries and the DNNScaler vs Clipper comparison table.

use serde::Serialize;

use super::engine::RunOutput;
use super::{ControllerKind, ControllerRun};
use crate::domain::{throughput_improvement, weighted_percentile, JobSpec, Knob, SLO_QUANTILE};
use crate::profiler::{Approach, ProfileReport};
use crate::scaler::{band, BandVerdict};

/// Full control periods after the last knob change needed to call a job
/// converged.
pub const MIN_STEADY_PERIODS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobSummary {
    pub job_id: u32,
    pub dnn_id: String,
    pub controller: String,
    /// Profiler choice; absent for controllers that do not profile.
    pub approach: Option<Approach>,
    pub profile: Option<ProfileReport>,
    /// Knob the control loop started from.
    pub initial_knob: Knob,
    /// Completed items over the whole run divided by its length, items/s.
    pub avg_throughput: f64,
    pub completed_items: u64,
    pub elapsed_s: f64,
    pub profiling_s: f64,
    /// Item-weighted p95 over everything served under control, ms.
    pub p95_overall: Option<f64>,
    /// Fraction of items within the SLO over the steady segment.
    pub slo_compliance_fraction: f64,
    /// Fraction of items within the SLO over all control periods.
    pub overall_compliance: f64,
    pub avg_power: f64,
    pub power_efficiency: f64,
    pub steady_knob: Knob,
    pub steady_throughput: f64,
    /// Largest window p95 seen in the steady segment, ms.
    pub steady_max_p95: Option<f64>,
    pub steady_records: usize,
    pub decisions: usize,
    pub knob_changes: usize,
    /// 1-based index of the decision that made the final knob change; 0 if
    /// the knob never changed.
    pub settle_decisions: usize,
    /// Control periods from each SLO step to the first in-band period.
    pub readaptation_periods: Vec<Option<usize>>,
    pub converged: bool,
    pub infeasible: bool,
}

impl JobSummary {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_run(
        spec: &JobSpec,
        controller: &ControllerKind,
        approach: Option<Approach>,
        profile: Option<ProfileReport>,
        initial_knob: Knob,
        final_knob: Knob,
        profiling_s: f64,
        alpha: f64,
        out: &RunOutput,
    ) -> Self {
        let records = &out.records;
        let elapsed_s = out.elapsed_ms / 1000.0;
        let avg_throughput = out.completed as f64 / elapsed_s;
        let avg_power = out.energy_wms / out.elapsed_ms;

        let steady_from = out.change_records.last().map_or(0, |&i| i + 1);
        let steady = &records[steady_from.min(records.len())..];
        let full_steady = steady.iter().filter(|r| r.period > 0.0).count();

        let fraction = |rs: &[crate::domain::MetricsRecord]| {
            let items: u64 = rs.iter().map(|r| r.items).sum();
            (items > 0).then(|| rs.iter().map(|r| r.within_slo).sum::<u64>() as f64 / items as f64)
        };
        let overall_compliance = fraction(records).unwrap_or(1.0);
        let slo_compliance_fraction = fraction(steady).unwrap_or(overall_compliance);

        let steady_period: f64 = steady.iter().map(|r| r.period).sum();
        let steady_throughput = if steady_period > 0.0 {
            steady.iter().map(|r| r.items).sum::<u64>() as f64 / steady_period
        } else {
            records.last().map_or(avg_throughput, |r| r.throughput)
        };
        let steady_max_p95 = steady.iter().map(|r| r.p95).reduce(f64::max);

        let readaptation_periods = out
            .slo_step_records
            .iter()
            .map(|&from| {
                records[from.min(records.len())..]
                    .iter()
                    .position(|r| band(r.p95, r.slo, alpha) == BandVerdict::InBand)
                    .map(|i| i + 1)
            })
            .collect();

        JobSummary {
            job_id: spec.job_id,
            dnn_id: spec.dnn_id.clone(),
            controller: controller.to_string(),
            approach,
            profile,
            initial_knob,
            avg_throughput,
            completed_items: out.completed,
            elapsed_s,
            profiling_s,
            p95_overall: weighted_percentile(&out.latencies, SLO_QUANTILE).ok(),
            slo_compliance_fraction,
            overall_compliance,
            avg_power,
            power_efficiency: avg_throughput / avg_power,
            steady_knob: final_knob,
            steady_throughput,
            steady_max_p95,
            steady_records: steady.len(),
            decisions: records.len(),
            knob_changes: out.change_records.len(),
            settle_decisions: steady_from,
            readaptation_periods,
            converged: !out.infeasible && full_steady >= MIN_STEADY_PERIODS,
            infeasible: out.infeasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub job_id: u32,
    pub dnn_id: String,
    pub approach: Option<Approach>,
    pub dnnscaler_steady_throughput: f64,
    pub clipper_steady_throughput: f64,
    /// Steady throughput gain of DNNScaler over Clipper, percent.
    pub improvement_pct: f64,
    pub dnnscaler_avg_throughput: f64,
    pub clipper_avg_throughput: f64,
    pub dnnscaler_power_efficiency: f64,
    pub clipper_power_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub avg_improvement_pct: Option<f64>,
    /// Average over jobs where the profiler chose multi-tenancy.
    pub avg_improvement_mt_pct: Option<f64>,
    pub avg_improvement_batching_pct: Option<f64>,
}

/// Pairs up jobs that succeeded under both controllers.
pub fn compare(dnnscaler: &ControllerRun, clipper: &ControllerRun) -> Comparison {
    let rows: Vec<ComparisonRow> = dnnscaler
        .traces()
        .filter_map(|d| {
            let c = clipper.trace(d.summary.job_id)?;
            let (ds, cs) = (&d.summary, &c.summary);
            Some(ComparisonRow {
                job_id: ds.job_id,
                dnn_id: ds.dnn_id.clone(),
                approach: ds.approach,
                dnnscaler_steady_throughput: ds.steady_throughput,
                clipper_steady_throughput: cs.steady_throughput,
                improvement_pct: throughput_improvement(ds.steady_throughput, cs.steady_throughput)
                    .ok()?,
                dnnscaler_avg_throughput: ds.avg_throughput,
                clipper_avg_throughput: cs.avg_throughput,
                dnnscaler_power_efficiency: ds.power_efficiency,
                clipper_power_efficiency: cs.power_efficiency,
            })
        })
        .collect();
    let mean = |filter: &dyn Fn(&ComparisonRow) -> bool| {
        let picked: Vec<f64> = rows
            .iter()
            .filter(|r| filter(r))
            .map(|r| r.improvement_pct)
            .collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    };
    Comparison {
        avg_improvement_pct: mean(&|_| true),
        avg_improvement_mt_pct: mean(&|r| r.approach == Some(Approach::MultiTenancy)),
        avg_improvement_batching_pct: mean(&|r| r.approach == Some(Approach::Batching)),
        rows,
    }
}
