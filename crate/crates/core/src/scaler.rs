//! The two knob controllers.
//!
//! Batching: a pseudo-binary search over `[min_bs, max_bs]` that jumps to the
//! midpoint above when latency is under the alpha band and to the midpoint
//! below when it exceeds the SLO. Multi-Tenancy: start from the MTL picked on
//! completed latency estimates, then add or remove one instance at a time.
//! Both hold while the tail latency sits inside `[alpha * SLO, SLO]`.

use serde::{Deserialize, Serialize};

use crate::domain::{LatencyWindow, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::matcomp::{estimate_row, pick_mtl, CompletionConfig};

pub const DEFAULT_ALPHA: f64 = 0.85;
pub const DEFAULT_ABS_MAX_BS: u32 = 128;
pub const DEFAULT_MAX_MTL: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandVerdict {
    /// p95 < alpha * SLO
    Below,
    /// alpha * SLO <= p95 <= SLO
    InBand,
    /// p95 > SLO
    Above,
}

pub fn band(p95: f64, slo: f64, alpha: f64) -> BandVerdict {
    if p95 > slo {
        BandVerdict::Above
    } else if p95 < alpha * slo {
        BandVerdict::Below
    } else {
        BandVerdict::InBand
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchScalerState {
    pub min_bs: u32,
    pub max_bs: u32,
    pub current_bs: u32,
    pub abs_max_bs: u32,
    pub window: LatencyWindow,
    /// Set when BS=1 already violates the SLO.
    pub infeasible: bool,
    /// Whether `max_bs` has been observed above the SLO (as opposed to being
    /// the configured ceiling).
    max_violates: bool,
}

impl BatchScalerState {
    pub fn new(abs_max_bs: u32, window: usize) -> Result<Self> {
        if abs_max_bs == 0 {
            return Err(Error::Config("abs_max_bs must be at least 1".into()));
        }
        Ok(BatchScalerState {
            min_bs: 1,
            max_bs: abs_max_bs,
            current_bs: 1,
            abs_max_bs,
            window: LatencyWindow::new(window),
            infeasible: false,
            max_violates: false,
        })
    }

    /// Starts the search at an arbitrary batch size with bounds `[min, max]`.
    pub fn with_bounds(min_bs: u32, current_bs: u32, max_bs: u32, abs_max_bs: u32) -> Result<Self> {
        if !(1 <= min_bs && min_bs <= current_bs && current_bs <= max_bs && max_bs <= abs_max_bs) {
            return Err(Error::Config(format!(
                "need 1 <= min {min_bs} <= current {current_bs} <= max {max_bs} <= abs max {abs_max_bs}"
            )));
        }
        Ok(BatchScalerState {
            min_bs,
            max_bs,
            current_bs,
            abs_max_bs,
            window: LatencyWindow::new(DEFAULT_WINDOW),
            infeasible: false,
            max_violates: false,
        })
    }

    /// Re-opens the search range after the SLO changes.
    pub fn on_slo_change(&mut self) {
        self.min_bs = 1;
        self.max_bs = self.abs_max_bs;
        self.max_violates = false;
        self.infeasible = false;
    }

    /// One control decision. Returns the new batch size when it changes.
    pub fn step(&mut self, p95: f64, slo: f64, alpha: f64) -> Option<u32> {
        batch_step(self, p95, slo, alpha)
    }
}

/// One decision of the batch-size search. Returns the new batch size if it
/// changed; the latency window is cleared whenever it does.
pub fn batch_step(s: &mut BatchScalerState, p95: f64, slo: f64, alpha: f64) -> Option<u32> {
    let next = match band(p95, slo, alpha) {
        BandVerdict::InBand => {
            s.infeasible = false;
            return None;
        }
        BandVerdict::Below => {
            s.infeasible = false;
            if s.current_bs >= s.abs_max_bs {
                return None;
            }
            let next = (s.current_bs + s.max_bs).div_ceil(2);
            // Nothing left between the current size and a size known to violate.
            if next == s.current_bs || (next == s.max_bs && s.max_violates) {
                return None;
            }
            s.min_bs = s.current_bs;
            next
        }
        BandVerdict::Above => {
            if s.current_bs == 1 {
                s.infeasible = true;
                return None;
            }
            if s.current_bs == s.min_bs {
                s.max_bs = s.current_bs;
                s.min_bs = 1;
            } else {
                s.max_bs = s.current_bs;
            }
            s.max_violates = true;
            (s.min_bs + s.max_bs) / 2
        }
    };
    s.current_bs = next;
    s.window.clear();
    Some(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtAction {
    Hold,
    Add,
    RemoveLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Guard {
    Off,
    /// Armed by a removal; records the next verdict.
    Pending,
    /// Adds stay blocked until the verdict moves away from this one.
    Armed(BandVerdict),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtScalerState {
    pub mtl: u32,
    pub max_mtl: u32,
    pub window: LatencyWindow,
    pub last_action: MtAction,
    /// Set when a single instance already violates the SLO.
    pub infeasible: bool,
    /// Smallest MTL observed above the SLO since the guard was armed.
    ceiling: Option<u32>,
    guard: Guard,
}

impl MtScalerState {
    pub fn new(initial_mtl: u32, max_mtl: u32, window: usize) -> Result<Self> {
        if initial_mtl == 0 || initial_mtl > max_mtl {
            return Err(Error::MtlOutOfRange {
                requested: initial_mtl as i64,
                max: max_mtl,
            });
        }
        Ok(MtScalerState {
            mtl: initial_mtl,
            max_mtl,
            window: LatencyWindow::new(window),
            last_action: MtAction::Hold,
            infeasible: false,
            ceiling: None,
            guard: Guard::Off,
        })
    }

    pub fn on_slo_change(&mut self) {
        self.ceiling = None;
        self.guard = Guard::Off;
        self.infeasible = false;
    }

    pub fn step(&mut self, p95: f64, slo: f64, alpha: f64) -> MtAction {
        mt_step(self, p95, slo, alpha)
    }
}

/// One AIMD decision on the number of instances.
///
/// Under the band: add one instance (unless at `max_mtl`). Over the SLO:
/// terminate the most recently added one. After a removal, the MTL that
/// violated becomes a ceiling for adds until the band verdict changes, which
/// stops add/remove ping-pong at the boundary.
pub fn mt_step(s: &mut MtScalerState, p95: f64, slo: f64, alpha: f64) -> MtAction {
    let verdict = band(p95, slo, alpha);
    match s.guard {
        Guard::Pending => s.guard = Guard::Armed(verdict),
        Guard::Armed(seen) if seen != verdict => {
            s.guard = Guard::Off;
            s.ceiling = None;
        }
        _ => {}
    }
    let action = match verdict {
        BandVerdict::InBand => {
            s.infeasible = false;
            MtAction::Hold
        }
        BandVerdict::Below => {
            s.infeasible = false;
            let blocked = s.ceiling.is_some_and(|c| s.mtl + 1 >= c);
            if s.mtl < s.max_mtl && !blocked {
                MtAction::Add
            } else {
                MtAction::Hold
            }
        }
        BandVerdict::Above => {
            if s.mtl > 1 {
                MtAction::RemoveLast
            } else {
                s.infeasible = true;
                MtAction::Hold
            }
        }
    };
    match action {
        MtAction::Add => s.mtl += 1,
        MtAction::RemoveLast => {
            s.ceiling = Some(s.mtl);
            s.guard = Guard::Pending;
            s.mtl -= 1;
        }
        MtAction::Hold => {}
    }
    if action != MtAction::Hold {
        s.window.clear();
    }
    s.last_action = action;
    action
}

/// Initial MTL: complete the latency row from the two profiled points and
/// take the largest MTL whose estimate is under the SLO.
pub fn mt_init(
    profile_latencies: ((u32, f64), (u32, f64)),
    catalog_rows: &[Vec<f64>],
    slo: f64,
    max_mtl: u32,
    cfg: &CompletionConfig,
) -> Result<u32> {
    let estimates = mt_estimates(profile_latencies, catalog_rows, max_mtl, cfg)?;
    Ok(pick_mtl(&estimates, slo, max_mtl))
}

/// Completed latency estimates for MTL 1..=max(max_mtl, probe MTL).
pub fn mt_estimates(
    profile_latencies: ((u32, f64), (u32, f64)),
    catalog_rows: &[Vec<f64>],
    max_mtl: u32,
    cfg: &CompletionConfig,
) -> Result<Vec<f64>> {
    let (first, second) = profile_latencies;
    let n_cols = max_mtl.max(first.0).max(second.0) as usize;
    let mut observed = vec![first];
    if second.0 != first.0 {
        observed.push(second);
    }
    estimate_row(catalog_rows, &observed, n_cols, cfg)
}
