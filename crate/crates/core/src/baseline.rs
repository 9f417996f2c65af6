//! Clipper-style AIMD batch sizing, used as the comparison baseline.
//!
//! The batch size grows by a fixed step while the tail latency meets the SLO
//! and backs off by a fraction on the first violation. Once backed off it
//! holds, and only another violation moves it again.

use crate::domain::LatencyWindow;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: u32 = 4;
pub const DEFAULT_BACKOFF: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct ClipperState {
    pub current_bs: u32,
    pub step: u32,
    pub backoff: f64,
    pub abs_max_bs: u32,
    pub window: LatencyWindow,
    pub converged: bool,
}

impl ClipperState {
    pub fn new(abs_max_bs: u32, window: usize) -> Result<Self> {
        Self::with_params(DEFAULT_STEP, DEFAULT_BACKOFF, abs_max_bs, window)
    }

    pub fn with_params(step: u32, backoff: f64, abs_max_bs: u32, window: usize) -> Result<Self> {
        if step == 0 || !(backoff > 0.0 && backoff < 1.0) || abs_max_bs == 0 {
            return Err(Error::Config(format!(
                "clipper needs step >= 1, 0 < backoff < 1, abs_max_bs >= 1 (got {step}, {backoff}, {abs_max_bs})"
            )));
        }
        Ok(ClipperState {
            current_bs: 1,
            step,
            backoff,
            abs_max_bs,
            window: LatencyWindow::new(window),
            converged: false,
        })
    }

    pub fn step(&mut self, p95: f64, slo: f64) -> Option<u32> {
        clipper_step(self, p95, slo)
    }
}

/// One AIMD decision. Returns the new batch size if it changed.
pub fn clipper_step(s: &mut ClipperState, p95: f64, slo: f64) -> Option<u32> {
    let next = if p95 > slo {
        s.converged = true;
        ((s.current_bs as f64 * (1.0 - s.backoff)).floor() as u32).max(1)
    } else if !s.converged {
        (s.current_bs + s.step).min(s.abs_max_bs)
    } else {
        s.current_bs
    };
    if next == s.current_bs {
        return None;
    }
    s.current_bs = next;
    s.window.clear();
    Some(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(bs: u32) -> ClipperState {
        let mut s = ClipperState::new(128, 100).unwrap();
        s.current_bs = bs;
        s
    }

    #[test]
    fn additive_increase() {
        let mut s = state(1);
        assert_eq!(clipper_step(&mut s, 10.0, 20.0), Some(5));
        assert!(!s.converged);
    }

    #[test]
    fn multiplicative_decrease() {
        let mut s = state(40);
        assert_eq!(clipper_step(&mut s, 30.0, 20.0), Some(36));
        assert!(s.converged);
    }

    #[test]
    fn floor_at_one() {
        let mut s = state(1);
        assert_eq!(clipper_step(&mut s, 30.0, 20.0), None);
        assert_eq!(s.current_bs, 1);
        assert!(s.converged);
    }

    #[test]
    fn settles_after_backoff() {
        let mut s = state(36);
        s.converged = true;
        assert_eq!(clipper_step(&mut s, 10.0, 20.0), None);
        assert_eq!(clipper_step(&mut s, 25.0, 20.0), Some(32));
    }

    #[test]
    fn capped_at_abs_max() {
        let mut s = state(126);
        assert_eq!(clipper_step(&mut s, 1.0, 20.0), Some(128));
        assert_eq!(clipper_step(&mut s, 1.0, 20.0), None);
    }
}
