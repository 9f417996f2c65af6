//! Property tests for the invariants of each module.

mod common;

use dnnscaler::baseline::ClipperState;
use dnnscaler::domain::{percentile, throughput_improvement, Knob, LatencyWindow};
use dnnscaler::matcomp::{complete, pick_mtl, CompletionConfig, LatencyMatrix};
use dnnscaler::perfmodel::{
    batch_latency, calibrate_batching, calibrate_mt, mt_latency, BatchingModel, MtModel, PowerModel,
};
use dnnscaler::profiler::{
    decide, decide_by_raw_gain, profile, ProfileReport, ProfilerConfig, SimBackend,
};
use dnnscaler::scaler::{BatchScalerState, MtAction, MtScalerState, DEFAULT_ALPHA};
use dnnscaler::{DnnProfile, GpuModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{best_bs, drive_batch_search, drive_clipper};

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..1e4, 1..200)
}

proptest! {
    #[test]
    fn improvement_is_scale_invariant(a in 0.1f64..1e4, b in 0.1f64..1e4, c in 1e-3f64..1e3) {
        let plain = throughput_improvement(a, b).unwrap();
        let scaled = throughput_improvement(c * a, c * b).unwrap();
        prop_assert!((plain - scaled).abs() <= 1e-9 * plain.abs().max(1.0));
    }

    #[test]
    fn percentile_is_monotone_in_q(s in samples(), q1 in 0.01f64..=1.0, q2 in 0.01f64..=1.0) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(percentile(&s, lo).unwrap() <= percentile(&s, hi).unwrap());
    }

    #[test]
    fn percentile_is_a_sample(s in samples(), q in 0.01f64..=1.0) {
        let p = percentile(&s, q).unwrap();
        prop_assert!(s.contains(&p));
    }

    #[test]
    fn window_is_bounded_fifo(cap in 1usize..50, pushes in prop::collection::vec(0.0f64..100.0, 0..150)) {
        let mut w = LatencyWindow::new(cap);
        for &x in &pushes {
            w.push(x);
            prop_assert!(w.len() <= cap);
        }
        let kept: Vec<f64> = w.samples().collect();
        let start = pushes.len().saturating_sub(cap);
        prop_assert_eq!(kept, pushes[start..].to_vec());
    }

    #[test]
    fn noise_free_latency_is_monotone(a in 0.0f64..100.0, b in 0.01f64..20.0, l1 in 0.5f64..200.0, c in 1.0f64..8.0) {
        let bm = BatchingModel::new(a, b, 0.0).unwrap();
        let mm = MtModel::new(l1, c, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 1..128 {
            prop_assert!(batch_latency(&bm, k + 1, &mut rng) > batch_latency(&bm, k, &mut rng));
        }
        for k in 1..16 {
            prop_assert!(mt_latency(&mm, k + 1, &mut rng) >= mt_latency(&mm, k, &mut rng));
        }
    }

    #[test]
    fn mt_throughput_saturates(l1 in 0.5f64..200.0, c in 1.0f64..8.0) {
        let mm = MtModel::new(l1, c, 0.0).unwrap();
        let start = c.ceil() as u32;
        for k in start.max(1)..16 {
            prop_assert!(mm.throughput(k + 1) <= mm.throughput(k) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn power_stays_in_range(u in -1.0f64..2.0, u1 in 0.01f64..=1.0, k in 1u32..=128, mt in any::<bool>()) {
        let pm = PowerModel { u1, ..PowerModel::default() };
        let p = pm.power(u);
        prop_assert!((pm.p_idle..=pm.p_max).contains(&p));
        let bm = BatchingModel::new(5.0, 1.0, 0.0).unwrap();
        let knob = if mt { Knob::multi_tenancy(k.min(10)) } else { Knob::batching(k) };
        let util = pm.utilization(knob, &bm);
        prop_assert!((0.0..=1.0).contains(&util));
    }

    #[test]
    fn calibration_round_trips(t1 in 1.0f64..500.0, gain_b in 1.01f64..30.0, gain_mt in 1.0f64..8.0) {
        let t32 = t1 * gain_b;
        let bm = calibrate_batching(&[(1, t1), (32, t32)], 0.0).unwrap();
        prop_assert!((bm.throughput(1) - t1).abs() <= 1e-3 * t1);
        prop_assert!((bm.throughput(32) - t32).abs() <= 1e-3 * t32);
        let t8 = t1 * gain_mt;
        let mm = calibrate_mt(&[(1, t1), (8, t8)], 0.0).unwrap();
        prop_assert!((mm.throughput(1) - t1).abs() <= 1e-3 * t1);
        prop_assert!((mm.throughput(8) - t8).abs() <= 1e-3 * t8);
    }

    #[test]
    fn same_seed_same_latency_stream(seed in any::<u64>(), sigma in 0.0f64..0.3) {
        let bm = BatchingModel::new(10.0, 2.0, sigma).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        for bs in 1..50 {
            prop_assert_eq!(
                batch_latency(&bm, bs, &mut r1).to_bits(),
                batch_latency(&bm, bs, &mut r2).to_bits()
            );
        }
    }

    #[test]
    fn decision_ignores_uniform_scaling(
        base in 1.0f64..1e3, gb in 0.5f64..20.0, gm in 0.5f64..10.0, c in 1e-2f64..1e2,
        lb in 1.0f64..500.0, lm in 1.0f64..500.0,
    ) {
        let r = ProfileReport::from_measurements(base, base * gb, base * gm, (1.0, lb, lm), 32, 8).unwrap();
        let s = ProfileReport::from_measurements(c * base, c * base * gb, c * base * gm, (1.0, lb, lm), 32, 8).unwrap();
        prop_assert_eq!(decide(&r, 0.5), decide(&s, 0.5));
    }

    #[test]
    fn normalized_and_raw_decisions_agree(base in 1.0f64..1e3, gb in 0.5f64..20.0, gm in 0.5f64..10.0) {
        prop_assume!((gb - gm).abs() > 1e-9);
        let r = ProfileReport::from_measurements(base, base * gb, base * gm, (1.0, 2.0, 2.0), 32, 8).unwrap();
        prop_assert_eq!(decide(&r, 0.0), decide_by_raw_gain(&r));
    }

    #[test]
    fn profile_reports_exact_gain_and_is_deterministic(t1 in 5.0f64..500.0, gb in 1.1f64..20.0, gm in 1.0f64..8.0, seed in any::<u64>()) {
        let p = DnnProfile {
            id: "p".into(),
            param_count: 1.0,
            flops: 1.0,
            batching_points: vec![(1, t1), (32, t1 * gb)],
            mt_points: vec![(1, t1), (8, t1 * gm)],
            sigma: None,
            u1: None,
        };
        let model = GpuModel::from_profile(&p, &Default::default(), Some(0.0)).unwrap();
        let cfg = ProfilerConfig::default();
        let a = profile(&mut SimBackend::new(model, 128, 10, seed), &cfg).unwrap();
        let b = profile(&mut SimBackend::new(model, 128, 10, seed ^ 1), &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.ti_b, throughput_improvement(a.tput_bs_m, a.base_throughput).unwrap());
    }
}

fn rank1_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<Vec<bool>>)> {
    (3usize..8, 3usize..10).prop_flat_map(|(rows, cols)| {
        (
            prop::collection::vec(1.0f64..100.0, cols),
            prop::collection::vec(0.1f64..10.0, rows),
            prop::collection::vec(prop::collection::vec(any::<bool>(), cols), rows),
        )
    })
}

fn rank1_matrix(
    template: &[f64],
    scales: &[f64],
    mask: &[Vec<bool>],
) -> (Vec<Vec<Option<f64>>>, Vec<Vec<f64>>) {
    let truth: Vec<Vec<f64>> = scales
        .iter()
        .map(|s| template.iter().map(|t| s * t).collect())
        .collect();
    let data = truth
        .iter()
        .zip(mask)
        .enumerate()
        .map(|(i, (row, m))| {
            let any_seen = m.iter().any(|&x| x);
            row.iter()
                .zip(m)
                .enumerate()
                // Row 0 is complete; every other row keeps at least its first entry.
                .map(|(j, (&x, &seen))| (i == 0 || seen || (!any_seen && j == 0)).then_some(x))
                .collect()
        })
        .collect();
    (data, truth)
}

fn to_matrix(data: &[Vec<Option<f64>>]) -> LatencyMatrix {
    LatencyMatrix::from_rows(
        (0..data.len()).map(|i| format!("r{i}")).collect(),
        (1..=data[0].len() as u32).collect(),
        data,
    )
    .unwrap()
}

fn rank1() -> CompletionConfig {
    CompletionConfig {
        rank: 1,
        ..CompletionConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank1_is_recovered_exactly((template, scales, mask) in rank1_case()) {
        let (data, truth) = rank1_matrix(&template, &scales, &mask);
        let res = complete(&to_matrix(&data), &rank1()).unwrap();
        for (i, row) in truth.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                prop_assert!((res.get(i, j) - t).abs() / t < 1e-6, "({i},{j}) {} vs {t}", res.get(i, j));
            }
        }
    }

    #[test]
    fn converged_fits_match_observations((template, scales, mask) in rank1_case()) {
        let (data, _) = rank1_matrix(&template, &scales, &mask);
        let cfg = rank1();
        let res = complete(&to_matrix(&data), &cfg).unwrap();
        prop_assume!(res.converged);
        for (i, row) in data.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if let Some(x) = x {
                    prop_assert!((res.get(i, j) - x).abs() / x < 1e-6);
                }
            }
        }
    }

    #[test]
    fn completion_is_scale_equivariant((template, scales, mask) in rank1_case(), c in 0.01f64..100.0) {
        let (data, _) = rank1_matrix(&template, &scales, &mask);
        let scaled: Vec<Vec<Option<f64>>> = data
            .iter()
            .map(|r| r.iter().map(|x| x.map(|v| v * c)).collect())
            .collect();
        let a = complete(&to_matrix(&data), &rank1()).unwrap();
        let b = complete(&to_matrix(&scaled), &rank1()).unwrap();
        for i in 0..data.len() {
            for j in 0..data[0].len() {
                let want = a.get(i, j) * c;
                prop_assert!((b.get(i, j) - want).abs() <= 1e-6 * want);
            }
        }
    }

    #[test]
    fn completion_is_permutation_equivariant((template, scales, mask) in rank1_case(), shift in 1usize..8) {
        let (data, _) = rank1_matrix(&template, &scales, &mask);
        let n = data.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let permuted: Vec<Vec<Option<f64>>> = perm.iter().map(|&i| data[i].clone()).collect();
        let a = complete(&to_matrix(&data), &rank1()).unwrap();
        let b = complete(&to_matrix(&permuted), &rank1()).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for j in 0..data[0].len() {
                let want = a.get(old_i, j);
                prop_assert!((b.get(new_i, j) - want).abs() <= 1e-6 * want);
            }
        }
    }

    #[test]
    fn pick_mtl_respects_its_estimates(mut est in prop::collection::vec(1.0f64..500.0, 1..12), slo in 1.0f64..600.0) {
        est.sort_by(f64::total_cmp);
        let max = est.len() as u32;
        let k = pick_mtl(&est, slo, max);
        prop_assert!((1..=max).contains(&k));
        if est.iter().any(|&e| e < slo) {
            prop_assert!(est[k as usize - 1] < slo);
        }
    }
}

proptest! {
    #[test]
    fn batch_search_terminates_safely(a in 0.0f64..80.0, b in 0.01f64..20.0, slo in 1.0f64..3000.0) {
        // Fixed point within 2 * ceil(log2(128)) = 14 decisions.
        let (r, infeasible) = drive_batch_search(a, b, slo, DEFAULT_ALPHA, 40);
        prop_assert!(r.settle <= 14, "settled after {} decisions: {:?}", r.settle, r.trace);
        prop_assert!(r.min_seen >= 1 && r.max_seen <= 128);
        if a + b <= slo {
            prop_assert!(!infeasible);
            prop_assert!(a + b * r.knob as f64 <= slo);
        } else {
            prop_assert!(infeasible);
            prop_assert_eq!(r.knob, 1);
        }
    }

    #[test]
    fn batch_fixed_point_is_in_band_or_at_max(a in 0.0f64..80.0, b in 0.01f64..20.0, target in 1.0f64..200.0) {
        let slo = a + b * target;
        let (r, _) = drive_batch_search(a, b, slo, DEFAULT_ALPHA, 40);
        let lat = a + b * r.knob as f64;
        let opt = best_bs(a, b, slo, 128).unwrap();
        prop_assert!(lat <= slo);
        prop_assert!(r.knob <= opt);
        prop_assert!(r.knob == 128 || lat >= DEFAULT_ALPHA * slo || r.knob + 1 > opt,
            "bs {} latency {lat} below band, optimum {opt}", r.knob);
    }

    #[test]
    fn mt_scaler_stays_in_range(l1 in 1.0f64..100.0, c in 1.0f64..6.0, init in 1u32..=10, slo in 1.0f64..2000.0, max in 1u32..=10) {
        let init = init.min(max);
        let mut s = MtScalerState::new(init, max, 100).unwrap();
        for _ in 0..40 {
            let lat = l1 * (s.mtl as f64 / c).max(1.0);
            let before = s.mtl;
            match s.step(lat, slo, DEFAULT_ALPHA) {
                MtAction::Add => prop_assert_eq!(s.mtl, before + 1),
                MtAction::RemoveLast => prop_assert_eq!(s.mtl + 1, before),
                MtAction::Hold => prop_assert_eq!(s.mtl, before),
            }
            prop_assert!((1..=max).contains(&s.mtl));
        }
    }

    #[test]
    fn knob_changes_clear_the_window(a in 0.0f64..50.0, b in 0.1f64..10.0, slo in 20.0f64..500.0) {
        let mut s = BatchScalerState::new(128, 5).unwrap();
        for _ in 0..20 {
            for _ in 0..5 {
                s.window.push(a + b * s.current_bs as f64);
            }
            let p95 = s.window.percentile(0.95).unwrap();
            if s.step(p95, slo, DEFAULT_ALPHA).is_some() {
                prop_assert!(s.window.is_empty());
            }
        }
    }

    #[test]
    fn clipper_lands_near_the_optimum(a in 0.0f64..40.0, b in 0.05f64..10.0, target in 2.0f64..120.0) {
        let slo = a + b * target;
        let opt = best_bs(a, b, slo, 128).unwrap();
        let r = drive_clipper(a, b, slo, 200);
        let peak = r.max_seen;
        // The last increase overshoots the optimum by less than one step.
        prop_assert!(peak == 128 || peak <= opt + 4, "peak {peak}, optimum {opt}");
        if opt >= 2 && peak != 128 {
            prop_assert!(a + b * r.knob as f64 <= slo, "settled at {} over SLO", r.knob);
        }
        // Reaching the optimum by +4 steps takes at least (opt - 1) / 4 increases.
        prop_assert!(r.changes as u32 >= (opt.min(128) - 1) / 4);
    }
}

#[test]
fn clipper_state_rejects_bad_parameters() {
    assert!(ClipperState::with_params(0, 0.1, 128, 10).is_err());
    assert!(ClipperState::with_params(4, 1.0, 128, 10).is_err());
}
