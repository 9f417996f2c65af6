//! Scenario harness behaviour checked against model oracles.

mod common;

use dnnscaler::domain::{JobSpec, Knob, KnobKind};
use dnnscaler::harness::{
    combination_sweep, job_seed, run_job, run_scenario, sensitivity, ControllerKind, RunConfig,
    RunEnv, Scenario,
};
use dnnscaler::perfmodel::{batch_latency, mt_latency};
use dnnscaler::profiler::Approach;
use dnnscaler::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{best_mtl, catalog, fixtures};

fn env(sigma: f64) -> RunEnv {
    let config = RunConfig {
        sigma: Some(sigma),
        ..RunConfig::default()
    };
    RunEnv::new(catalog(), config, None).unwrap()
}

fn job(job_id: u32, dnn: &str, slo: f64, duration: f64) -> JobSpec {
    JobSpec {
        job_id,
        dnn_id: dnn.into(),
        dataset_tag: String::new(),
        slo,
        duration,
        slo_schedule: vec![],
    }
}

fn rng(seed: u64, id: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(job_seed(seed, id))
}

fn scenario(name: &str, sigma: Option<f64>) -> Scenario {
    let mut s = Scenario::load(&fixtures().join(name)).unwrap();
    s.config.sigma = sigma;
    s
}

#[test]
fn inception_v1_settles_on_the_best_mtl() {
    let env = env(0.0);
    let spec = job(1, "inc-v1@imagenet", 35.0, 120.0);
    let t = run_job(&spec, &env, &ControllerKind::DnnScaler, rng(42, 1)).unwrap();
    assert_eq!(t.summary.approach, Some(Approach::MultiTenancy));
    let mt = env.config.gpu_model(&env.catalog, &spec.dnn_id).unwrap().mt;
    let opt = best_mtl(mt.l1, mt.capacity, spec.slo, env.config.max_mtl).unwrap();
    assert_eq!(t.summary.steady_knob, Knob::multi_tenancy(opt));
    assert!(t.summary.converged);
}

#[test]
fn static_bs1_reproduces_base_throughput() {
    let t = run_job(
        &job(3, "inc-v4@imagenet", 419.0, 120.0),
        &env(0.0),
        &ControllerKind::StaticKnob(Knob::batching(1)),
        rng(42, 3),
    )
    .unwrap();
    let rel = (t.summary.avg_throughput - 36.81).abs() / 36.81;
    assert!(rel < 0.01, "throughput {}", t.summary.avg_throughput);
}

#[test]
fn zero_duration_is_rejected() {
    let err = run_job(
        &job(3, "inc-v4@imagenet", 419.0, 0.0),
        &env(0.0),
        &ControllerKind::DnnScaler,
        rng(42, 3),
    )
    .unwrap_err();
    assert!(err.to_string().contains("duration"), "{err}");
}

#[test]
fn unknown_dnn_is_rejected_before_running() {
    let err = run_job(
        &job(7, "no-such-net", 50.0, 10.0),
        &env(0.0),
        &ControllerKind::Clipper,
        rng(42, 7),
    )
    .unwrap_err();
    assert!(matches!(err, Error::UnknownDnn(_)), "{err:?}");
}

#[test]
fn same_seed_gives_identical_traces() {
    let env = env(0.05);
    let spec = job(9, "inc-v1@imagenet", 35.0, 60.0);
    for controller in [ControllerKind::DnnScaler, ControllerKind::Clipper] {
        let a = run_job(&spec, &env, &controller, rng(7, 9)).unwrap();
        let b = run_job(&spec, &env, &controller, rng(7, 9)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn job_order_does_not_change_results() {
    let s = scenario("scenario_small.json", Some(0.05));
    let mut reversed = s.clone();
    reversed.jobs.reverse();
    let a = run_scenario(&s).unwrap();
    let b = run_scenario(&reversed).unwrap();
    for run in &a.runs {
        let other = b.run(&run.controller).unwrap();
        for j in &s.jobs {
            assert_eq!(run.trace(j.job_id), other.trace(j.job_id));
        }
    }
}

#[test]
fn empty_scenario_is_an_error() {
    let mut s = scenario("scenario_small.json", None);
    s.jobs.clear();
    assert!(matches!(run_scenario(&s), Err(Error::EmptyScenario)));
}

#[test]
fn one_failing_job_does_not_stop_the_others() {
    let mut s = scenario("scenario_small.json", Some(0.0));
    s.jobs[0].duration = 0.0;
    let report = run_scenario(&s).unwrap();
    for run in &report.runs {
        assert!(run.jobs[0].result.is_err());
        assert!(run.jobs[1..].iter().all(|j| j.result.is_ok()));
    }
}

#[test]
fn summaries_are_internally_consistent() {
    let report = run_scenario(&scenario("scenario_30_jobs.json", Some(0.05))).unwrap();
    for run in &report.runs {
        for t in run.traces() {
            let s = &t.summary;
            let eq1 = s.completed_items as f64 / s.elapsed_s;
            assert!(
                (s.avg_throughput - eq1).abs() <= 1e-3 * eq1,
                "job {}",
                s.job_id
            );
            assert!(
                (s.power_efficiency - s.avg_throughput / s.avg_power).abs()
                    <= 1e-9 * s.power_efficiency
            );
            assert!((0.0..=1.0).contains(&s.slo_compliance_fraction));
            assert!((0.0..=1.0).contains(&s.overall_compliance));
            assert!(t.records.windows(2).all(|w| w[0].time <= w[1].time));
            let items: u64 = t.records.iter().map(|r| r.items).sum();
            assert!(items <= s.completed_items);
        }
    }
}

#[test]
fn dnnscaler_never_loses_to_bs1() {
    let mut s = scenario("scenario_30_jobs.json", Some(0.0));
    s.controllers = vec![
        ControllerKind::DnnScaler,
        ControllerKind::StaticKnob(Knob::batching(1)),
    ];
    let report = run_scenario(&s).unwrap();
    let ours = report.run(&ControllerKind::DnnScaler).unwrap();
    let base = report.run(&s.controllers[1]).unwrap();
    for j in &s.jobs {
        let (Some(o), Some(b)) = (ours.trace(j.job_id), base.trace(j.job_id)) else {
            continue;
        };
        if o.summary.infeasible {
            continue;
        }
        assert!(
            o.summary.steady_throughput >= b.summary.steady_throughput * (1.0 - 1e-9),
            "job {}: {} < {}",
            j.job_id,
            o.summary.steady_throughput,
            b.summary.steady_throughput
        );
    }
}

#[test]
fn slo_step_to_the_same_value_changes_nothing() {
    let env = env(0.0);
    for (dnn, slo) in [("inc-v1@imagenet", 35.0), ("inc-v4@imagenet", 419.0)] {
        let plain = run_job(
            &job(5, dnn, slo, 120.0),
            &env,
            &ControllerKind::DnnScaler,
            rng(42, 5),
        )
        .unwrap();
        let mut stepped = job(5, dnn, slo, 120.0);
        stepped.slo_schedule = vec![(60.0, slo)];
        let t = sensitivity(&stepped, &env, 42).unwrap();
        let knobs =
            |r: &[dnnscaler::domain::MetricsRecord]| r.iter().map(|x| x.knob).collect::<Vec<_>>();
        assert_eq!(knobs(&plain.records), knobs(&t.records), "{dnn}");
    }
}

#[test]
fn sensitivity_requires_a_schedule() {
    let err = sensitivity(&job(5, "inc-v1@imagenet", 35.0, 60.0), &env(0.0), 42).unwrap_err();
    assert!(err.is_config() || matches!(err, Error::InvalidJob { .. }));
}

#[test]
fn halved_slo_sheds_instances() {
    let env = env(0.0);
    let mut spec = job(101, "inc-v1@imagenet", 48.0, 120.0);
    spec.slo_schedule = vec![(60.0, 24.0)];
    let t = sensitivity(&spec, &env, 42).unwrap();
    let before = t.records.iter().rev().find(|r| r.time < 60.0).unwrap().knob;
    let after = t.records.last().unwrap().knob;
    assert_eq!(before.kind, KnobKind::MultiTenancy);
    assert!(after.value < before.value, "{before} -> {after}");
    let mt = env.config.gpu_model(&env.catalog, &spec.dnn_id).unwrap().mt;
    assert!(mt.latency(after.value) <= 24.0);
}

#[test]
fn sweep_edges_match_the_single_knob_paths() {
    let model = env(0.0)
        .config
        .gpu_model(&catalog(), "inc-v1@imagenet")
        .unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for k in 1..=8 {
        let p = combination_sweep(&model, &[1], &[k], 5, &mut r).unwrap()[0];
        assert!((p.p95_ms - mt_latency(&model.mt, k, &mut r)).abs() < 1e-9 * p.p95_ms);
        let p = combination_sweep(&model, &[k], &[1], 5, &mut r).unwrap()[0];
        assert!((p.p95_ms - batch_latency(&model.batching, k, &mut r)).abs() < 1e-9 * p.p95_ms);
    }
}

#[test]
fn sweep_gain_flattens_past_capacity() {
    let mut model = env(0.0)
        .config
        .gpu_model(&catalog(), "inc-v1@imagenet")
        .unwrap();
    model.mt.capacity = 2.0;
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let pts = combination_sweep(&model, &[8], &[1, 2, 3, 4], 10, &mut r).unwrap();
    assert!(pts[1].throughput > 1.5 * pts[0].throughput);
    for w in pts[1..].windows(2) {
        assert!((w[1].throughput - w[0].throughput).abs() <= 1e-9 * w[0].throughput);
    }
}

#[test]
fn sweep_rejects_empty_grids() {
    let model = env(0.0)
        .config
        .gpu_model(&catalog(), "inc-v1@imagenet")
        .unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    assert!(combination_sweep(&model, &[], &[1], 5, &mut r)
        .unwrap_err()
        .is_config());
}
