//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use dnnscaler::baseline::ClipperState;
use dnnscaler::scaler::{BatchScalerState, MtAction, MtScalerState};
use dnnscaler::Catalog;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn catalog() -> Catalog {
    Catalog::load(&fixtures().join("catalog.json")).expect("bundled catalog loads")
}

/// One measured profiling row: job, base throughput, MTL=8 throughput and
/// gain, BS=32 throughput and gain, and whether multi-tenancy won.
pub struct ProfileRow {
    pub job: u32,
    pub base: f64,
    pub mtl8: f64,
    pub ti_mt: f64,
    pub bs32: f64,
    pub ti_b: f64,
    pub mt_wins: bool,
}

pub const PROFILE_ROWS: [ProfileRow; 10] = [
    ProfileRow {
        job: 1,
        base: 118.66,
        mtl8: 237.28,
        ti_mt: 99.96,
        bs32: 125.67,
        ti_b: 5.91,
        mt_wins: true,
    },
    ProfileRow {
        job: 2,
        base: 104.46,
        mtl8: 169.85,
        ti_mt: 62.59,
        bs32: 125.33,
        ti_b: 19.97,
        mt_wins: true,
    },
    ProfileRow {
        job: 3,
        base: 36.81,
        mtl8: 39.61,
        ti_mt: 7.63,
        bs32: 116.41,
        ti_b: 216.28,
        mt_wins: false,
    },
    ProfileRow {
        job: 9,
        base: 48.49,
        mtl8: 148.28,
        ti_mt: 205.81,
        bs32: 125.44,
        ti_b: 158.70,
        mt_wins: true,
    },
    ProfileRow {
        job: 10,
        base: 103.62,
        mtl8: 137.43,
        ti_mt: 32.63,
        bs32: 126.55,
        ti_b: 22.13,
        mt_wins: true,
    },
    ProfileRow {
        job: 11,
        base: 62.75,
        mtl8: 78.63,
        ti_mt: 25.32,
        bs32: 125.99,
        ti_b: 100.79,
        mt_wins: false,
    },
    ProfileRow {
        job: 15,
        base: 102.82,
        mtl8: 169.31,
        ti_mt: 64.67,
        bs32: 235.05,
        ti_b: 128.61,
        mt_wins: false,
    },
    ProfileRow {
        job: 19,
        base: 241.14,
        mtl8: 1050.58,
        ti_mt: 335.67,
        bs32: 267.84,
        ti_b: 11.07,
        mt_wins: true,
    },
    ProfileRow {
        job: 26,
        base: 492.00,
        mtl8: 2163.80,
        ti_mt: 339.80,
        bs32: 7145.89,
        ti_b: 1352.43,
        mt_wins: false,
    },
    ProfileRow {
        job: 29,
        base: 15.46,
        mtl8: 41.27,
        ti_mt: 166.89,
        bs32: 19.82,
        ti_b: 28.16,
        mt_wins: true,
    },
];

/// Largest bs in 1..=max with `a + b*bs <= slo`.
pub fn best_bs(a: f64, b: f64, slo: f64, max: u32) -> Option<u32> {
    (1..=max).rev().find(|&bs| a + b * bs as f64 <= slo)
}

/// Largest k in 1..=max with `l1 * max(1, k/c) <= slo`.
pub fn best_mtl(l1: f64, c: f64, slo: f64, max: u32) -> Option<u32> {
    (1..=max)
        .rev()
        .find(|&k| l1 * (k as f64 / c).max(1.0) <= slo)
}

/// Outcome of driving a controller with noise-free latencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Settled {
    pub knob: u32,
    /// 1-based index of the last decision that changed the knob; 0 if none.
    pub settle: usize,
    pub changes: usize,
    pub trace: Vec<u32>,
    pub min_seen: u32,
    pub max_seen: u32,
}

fn settle_loop(mut step: impl FnMut(u32) -> Option<u32>, start: u32, decisions: usize) -> Settled {
    let mut knob = start;
    let mut out = Settled {
        knob,
        settle: 0,
        changes: 0,
        trace: vec![knob],
        min_seen: knob,
        max_seen: knob,
    };
    for i in 1..=decisions {
        if let Some(next) = step(knob) {
            knob = next;
            out.settle = i;
            out.changes += 1;
            out.trace.push(knob);
            out.min_seen = out.min_seen.min(knob);
            out.max_seen = out.max_seen.max(knob);
        }
    }
    out.knob = knob;
    out
}

pub fn drive_batch_search(
    a: f64,
    b: f64,
    slo: f64,
    alpha: f64,
    decisions: usize,
) -> (Settled, bool) {
    let mut s = BatchScalerState::new(128, 100).unwrap();
    let r = settle_loop(|bs| s.step(a + b * bs as f64, slo, alpha), 1, decisions);
    (r, s.infeasible)
}

pub fn drive_clipper(a: f64, b: f64, slo: f64, decisions: usize) -> Settled {
    let mut s = ClipperState::new(128, 100).unwrap();
    settle_loop(|bs| s.step(a + b * bs as f64, slo), 1, decisions)
}

pub fn drive_mt(
    l1: f64,
    c: f64,
    init: u32,
    slo: f64,
    alpha: f64,
    max_mtl: u32,
    decisions: usize,
) -> Settled {
    let mut s = MtScalerState::new(init, max_mtl, 100).unwrap();
    settle_loop(
        |k| match s.step(l1 * (k as f64 / c).max(1.0), slo, alpha) {
            MtAction::Hold => None,
            MtAction::Add | MtAction::RemoveLast => Some(s.mtl),
        },
        init,
        decisions,
    )
}
