//! Scenario execution: runs jobs against the simulated GPU under a chosen
//! controller and summarises throughput, latency, compliance and power.

mod engine;
pub mod output;
mod scenario;
mod summary;
mod sweep;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baseline::ClipperState;
use crate::catalog::Catalog;
use crate::domain::{JobSpec, Knob, KnobKind, LatencyWindow, MetricsRecord};
use crate::error::{Error, Result};
use crate::matcomp::{CompletionConfig, LatencyCatalog};
use crate::perfmodel::{GpuModel, ModelParams};
use crate::profiler::{decide, profile, Approach, ProfileReport, ProfilerConfig, SimBackend};
use crate::scaler::{mt_estimates, BatchScalerState, MtScalerState};
use crate::scaler::{DEFAULT_ABS_MAX_BS, DEFAULT_ALPHA, DEFAULT_MAX_MTL};

use engine::{Controller, Engine};

pub use scenario::{ControllerKind, Scenario, ScenarioFile, DEFAULT_SEED};
pub use summary::{compare, Comparison, ComparisonRow, JobSummary, MIN_STEADY_PERIODS};
pub use sweep::{combination_sweep, SweepPoint};

/// Tunables shared by every job of a scenario.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub alpha: f64,
    pub profiler: ProfilerConfig,
    pub abs_max_bs: u32,
    pub max_mtl: u32,
    /// Latency samples per control decision.
    pub window: usize,
    /// Forces this noise level on every profile when set.
    pub sigma: Option<f64>,
    pub model: ModelParams,
    pub completion: CompletionConfig,
    pub clipper_step: u32,
    pub clipper_backoff: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: DEFAULT_ALPHA,
            profiler: ProfilerConfig::default(),
            abs_max_bs: DEFAULT_ABS_MAX_BS,
            max_mtl: DEFAULT_MAX_MTL,
            window: crate::domain::DEFAULT_WINDOW,
            sigma: None,
            model: ModelParams::default(),
            completion: CompletionConfig::default(),
            clipper_step: crate::baseline::DEFAULT_STEP,
            clipper_backoff: crate::baseline::DEFAULT_BACKOFF,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.profiler.validate()?;
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if self.window == 0 {
            return fail("window must hold at least one sample".into());
        }
        if self.abs_max_bs == 0 || self.max_mtl == 0 {
            return fail("abs_max_bs and max_mtl must be at least 1".into());
        }
        if self.profiler.m > self.abs_max_bs {
            return fail(format!(
                "m = {} exceeds abs_max_bs = {}",
                self.profiler.m, self.abs_max_bs
            ));
        }
        if self.profiler.n > self.max_mtl {
            return fail(format!(
                "n = {} exceeds max_mtl = {}",
                self.profiler.n, self.max_mtl
            ));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!(
                    "sigma must be a finite non-negative number, got {s}"
                ));
            }
        }
        Ok(())
    }

    /// Columns of the latency matrix used to seed multi-tenancy.
    pub fn mtl_columns(&self) -> usize {
        self.max_mtl.max(self.profiler.n) as usize
    }

    pub fn gpu_model(&self, catalog: &Catalog, dnn_id: &str) -> Result<GpuModel> {
        GpuModel::from_profile(catalog.get(dnn_id)?, &self.model, self.sigma)
    }
}

/// Catalog, reference latency rows and config needed to run any job.
#[derive(Debug, Clone)]
pub struct RunEnv {
    pub catalog: Catalog,
    pub config: RunConfig,
    /// `(dnn id, noise-free latency at MTL 1..)` reference rows.
    latency_rows: Vec<(String, Vec<f64>)>,
}

impl RunEnv {
    /// Reference rows are swept from the catalog's own calibrated models
    /// unless a latency catalog is supplied.
    pub fn new(
        catalog: Catalog,
        config: RunConfig,
        latency_catalog: Option<&LatencyCatalog>,
    ) -> Result<Self> {
        config.validate()?;
        let n_cols = config.mtl_columns();
        let latency_rows = match latency_catalog {
            Some(lc) => lc
                .rows
                .iter()
                .filter_map(|r| {
                    let row = (1..=n_cols as u32)
                        .map(|k| r.latency_ms.get(&k).copied())
                        .collect::<Option<Vec<f64>>>()?;
                    Some((r.dnn_id.clone(), row))
                })
                .collect(),
            None => catalog
                .profiles()
                .iter()
                .map(|p| {
                    let model = GpuModel::from_profile(p, &config.model, Some(0.0))?;
                    let row = (1..=n_cols as u32).map(|k| model.mt.latency(k)).collect();
                    Ok((p.id.clone(), row))
                })
                .collect::<Result<_>>()?,
        };
        Ok(RunEnv {
            catalog,
            config,
            latency_rows,
        })
    }

    /// Reference rows for every DNN other than `exclude`.
    pub fn reference_rows(&self, exclude: &str) -> Vec<Vec<f64>> {
        self.latency_rows
            .iter()
            .filter(|(id, _)| id != exclude)
            .map(|(_, row)| row.clone())
            .collect()
    }
}

/// Per-period records plus the run summary of one job.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct JobTrace {
    pub records: Vec<MetricsRecord>,
    pub summary: JobSummary,
}

/// Result of one job under one controller. Failures stay per job.
#[derive(Debug)]
pub struct JobOutcome {
    pub job_id: u32,
    pub dnn_id: String,
    pub result: Result<JobTrace>,
}

/// All jobs of a scenario under one controller.
#[derive(Debug)]
pub struct ControllerRun {
    pub controller: ControllerKind,
    pub jobs: Vec<JobOutcome>,
}

impl ControllerRun {
    pub fn traces(&self) -> impl Iterator<Item = &JobTrace> {
        self.jobs.iter().filter_map(|j| j.result.as_ref().ok())
    }

    pub fn trace(&self, job_id: u32) -> Option<&JobTrace> {
        self.jobs
            .iter()
            .find(|j| j.job_id == job_id)
            .and_then(|j| j.result.as_ref().ok())
    }
}

#[derive(Debug)]
pub struct ScenarioReport {
    pub runs: Vec<ControllerRun>,
    /// Present when both DNNScaler and Clipper were run.
    pub comparison: Option<Comparison>,
}

impl ScenarioReport {
    pub fn run(&self, controller: &ControllerKind) -> Option<&ControllerRun> {
        self.runs.iter().find(|r| &r.controller == controller)
    }
}

/// Order-independent per-job seed.
pub fn job_seed(seed: u64, job_id: u32) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(job_id as u64))
}

/// Runs one job for its full duration under `controller`.
pub fn run_job(
    spec: &JobSpec,
    env: &RunEnv,
    controller: &ControllerKind,
    rng: ChaCha8Rng,
) -> Result<JobTrace> {
    spec.validate()?;
    let cfg = &env.config;
    let model = cfg.gpu_model(&env.catalog, &spec.dnn_id)?;
    if let ControllerKind::StaticKnob(knob) = controller {
        let max = match knob.kind {
            KnobKind::Batching => cfg.abs_max_bs,
            KnobKind::MultiTenancy => cfg.max_mtl,
        };
        knob.validate(max)?;
    }

    let mut engine = Engine::new(
        model,
        rng,
        cfg.alpha,
        spec.job_id,
        spec.duration,
        spec.slo,
        &spec.slo_schedule,
    );
    let mut profile_report: Option<ProfileReport> = None;
    let mut approach = None;

    let (mut ctl, mt_start) = match controller {
        ControllerKind::StaticKnob(knob) => {
            let ctl = Controller::Static {
                knob: *knob,
                window: LatencyWindow::new(cfg.window),
            };
            (ctl, (knob.value, 0.0))
        }
        ControllerKind::Clipper => {
            let state = ClipperState::with_params(
                cfg.clipper_step,
                cfg.clipper_backoff,
                cfg.abs_max_bs,
                cfg.window,
            )?;
            (Controller::Clipper(state), (1, 0.0))
        }
        ControllerKind::DnnScaler => {
            let rng = std::mem::replace(engine.rng_mut(), ChaCha8Rng::seed_from_u64(0));
            let mut backend = SimBackend::from_rng(model, cfg.abs_max_bs, cfg.max_mtl, rng);
            let report = profile(&mut backend, &cfg.profiler)?;
            *engine.rng_mut() = backend.into_rng();
            charge_profiling(&mut engine, &model, &report, cfg);

            let chosen = decide(&report, cfg.profiler.eps);
            log::debug!(
                "job {}: TI_B {:.2}% TI_MT {:.2}% -> {:?}",
                spec.job_id,
                report.ti_b,
                report.ti_mt,
                chosen
            );
            let out = match chosen {
                Approach::Batching => (
                    Controller::Batch(BatchScalerState::new(cfg.abs_max_bs, cfg.window)?),
                    (1, 0.0),
                ),
                Approach::MultiTenancy => {
                    let estimates = mt_estimates(
                        ((1, report.lat_base), (report.n, report.lat_mt)),
                        &env.reference_rows(&spec.dnn_id),
                        cfg.max_mtl,
                        &cfg.completion,
                    )?;
                    let init = crate::matcomp::pick_mtl(&estimates, spec.slo, cfg.max_mtl);
                    let state = MtScalerState::new(init, cfg.max_mtl, cfg.window)?;
                    let delay = model.mt.launch_delay * (init - 1) as f64;
                    (Controller::Mt(state), (1, delay))
                }
            };
            profile_report = Some(report);
            approach = Some(chosen);
            out
        }
    };

    let profiling_s = engine.now_ms() / 1000.0;
    let initial_knob = ctl.knob();
    match initial_knob.kind {
        KnobKind::Batching => engine.run_batching(&mut ctl),
        KnobKind::MultiTenancy => engine.run_multi_tenancy(&mut ctl, mt_start.0, mt_start.1),
    }
    let out = engine.finish(&mut ctl);
    let summary = JobSummary::from_run(
        spec,
        controller,
        approach,
        profile_report,
        initial_knob,
        ctl.knob(),
        profiling_s,
        cfg.alpha,
        &out,
    );
    Ok(JobTrace {
        records: out.records,
        summary,
    })
}

/// Profiling time, items and energy count toward the job's totals. Instances
/// for the MTL probe are launched before and torn down after it at idle power.
fn charge_profiling(engine: &mut Engine<'_>, model: &GpuModel, r: &ProfileReport, cfg: &RunConfig) {
    let per_point = cfg.profiler.batches_per_point as u64;
    let extra = (r.n - 1) as f64;
    let steps = [
        (
            r.probe_ms[0],
            per_point,
            model.knob_power(Knob::batching(1)),
        ),
        (
            r.probe_ms[1],
            per_point * r.m as u64,
            model.knob_power(Knob::batching(r.m)),
        ),
        (extra * model.mt.launch_delay, 0, model.power.p_idle),
        (
            r.probe_ms[2],
            per_point * r.n as u64,
            model.knob_power(Knob::multi_tenancy(r.n)),
        ),
        (extra * model.mt.terminate_delay, 0, model.power.p_idle),
    ];
    for (ms, items, watts) in steps {
        if !engine.charge(ms, items, watts) {
            break;
        }
    }
}

/// [`run_job`] for a job whose SLO changes mid-run, under DNNScaler.
pub fn sensitivity(spec: &JobSpec, env: &RunEnv, seed: u64) -> Result<JobTrace> {
    if spec.slo_schedule.is_empty() {
        return Err(Error::InvalidJob {
            job_id: spec.job_id,
            reason: "sensitivity run needs a non-empty slo_schedule".into(),
        });
    }
    run_job(
        spec,
        env,
        &ControllerKind::DnnScaler,
        ChaCha8Rng::seed_from_u64(job_seed(seed, spec.job_id)),
    )
}

/// Runs every job under every requested controller. Jobs run in parallel;
/// each gets its own seed, so results do not depend on scheduling.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport> {
    if s.jobs.is_empty() {
        return Err(Error::EmptyScenario);
    }
    if s.controllers.is_empty() {
        return Err(Error::Config("scenario requests no controllers".into()));
    }
    let env = s.env()?;
    let runs: Vec<ControllerRun> = s
        .controllers
        .iter()
        .map(|controller| {
            let jobs = s
                .jobs
                .par_iter()
                .map(|spec| {
                    let rng = ChaCha8Rng::seed_from_u64(job_seed(s.seed, spec.job_id));
                    let result = run_job(spec, &env, controller, rng);
                    if let Err(e) = &result {
                        log::warn!("job {} ({}) failed: {e}", spec.job_id, controller);
                    }
                    JobOutcome {
                        job_id: spec.job_id,
                        dnn_id: spec.dnn_id.clone(),
                        result,
                    }
                })
                .collect();
            ControllerRun {
                controller: *controller,
                jobs,
            }
        })
        .collect();

    let comparison = match (
        runs.iter()
            .find(|r| r.controller == ControllerKind::DnnScaler),
        runs.iter()
            .find(|r| r.controller == ControllerKind::Clipper),
    ) {
        (Some(d), Some(c)) => Some(compare(d, c)),
        _ => None,
    };
    Ok(ScenarioReport { runs, comparison })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DnnProfile;

    fn profile_job3() -> DnnProfile {
        DnnProfile {
            id: "job3".into(),
            param_count: 11.2e6,
            flops: 3.0e9,
            batching_points: vec![(1, 36.81), (32, 116.42)],
            mt_points: vec![(1, 36.81), (8, 60.0)],
            sigma: None,
            u1: None,
        }
    }

    fn env(sigma: f64) -> RunEnv {
        let mut other = profile_job3();
        other.id = "other".into();
        other.mt_points = vec![(1, 100.0), (8, 400.0)];
        other.batching_points = vec![(1, 100.0), (32, 500.0)];
        let catalog = Catalog::new(vec![profile_job3(), other]).unwrap();
        let config = RunConfig {
            sigma: Some(sigma),
            ..RunConfig::default()
        };
        RunEnv::new(catalog, config, None).unwrap()
    }

    fn job(duration: f64) -> JobSpec {
        JobSpec {
            job_id: 3,
            dnn_id: "job3".into(),
            dataset_tag: String::new(),
            slo: 419.0,
            duration,
            slo_schedule: vec![],
        }
    }

    #[test]
    fn static_bs1_matches_base_throughput() {
        let t = run_job(
            &job(60.0),
            &env(0.0),
            &ControllerKind::StaticKnob(Knob::batching(1)),
            ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let rel = (t.summary.avg_throughput - 36.81).abs() / 36.81;
        assert!(rel < 0.01, "{}", t.summary.avg_throughput);
    }

    #[test]
    fn zero_duration_rejected() {
        let err = run_job(
            &job(0.0),
            &env(0.0),
            &ControllerKind::DnnScaler,
            ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "zero duration");
    }

    #[test]
    fn unknown_dnn_rejected() {
        let mut spec = job(10.0);
        spec.dnn_id = "nope".into();
        let err = run_job(
            &spec,
            &env(0.0),
            &ControllerKind::Clipper,
            ChaCha8Rng::seed_from_u64(1),
        );
        assert!(matches!(err, Err(Error::UnknownDnn(_))));
    }

    #[test]
    fn eq1_consistency() {
        let t = run_job(
            &job(120.0),
            &env(0.05),
            &ControllerKind::DnnScaler,
            ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let s = &t.summary;
        let direct = s.completed_items as f64 / s.elapsed_s;
        assert!((s.avg_throughput - direct).abs() / direct < 1e-3);
        assert_eq!(s.power_efficiency, s.avg_throughput / s.avg_power);
    }

    #[test]
    fn seeds_differ_per_job() {
        assert_ne!(job_seed(42, 1), job_seed(42, 2));
        assert_eq!(job_seed(42, 7), job_seed(42, 7));
    }

    #[test]
    fn sensitivity_needs_schedule() {
        assert!(sensitivity(&job(10.0), &env(0.0), 1).is_err());
    }
}
