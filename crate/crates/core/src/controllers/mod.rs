//! Stepsize controllers.
//!
//! Each controller is a small state machine: the engine feeds it per-step
//! observations and it answers with a [`Decision`]. On a decay the state is
//! updated in place (phase counter, stepsize, threshold, restart log); the
//! engine is responsible for any iterate surgery such as re-initializing the
//! auxiliary sequence.

mod coupling;
mod distance;
mod pflug;
mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::Vec64;

pub use coupling::coupling_observe;
pub use distance::{checkpoint_after, distance_observe};
pub use pflug::{pflug_burn_in, pflug_observe, PFLUG_BURN_IN_CAP};
pub use schedule::{fixed_schedule, Schedule};

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("invalid controller parameter: {0}")]
    InvalidParams(String),
    #[error("coupling reference distance {0:e} is not positive")]
    Degenerate(f64),
    #[error("schedules are indexed from k = 1")]
    ZeroIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControllerKind {
    CouplingStatic,
    CouplingAdaptive,
    DistanceBased,
    Pflug,
    FixedSchedule { schedule: Schedule },
}

impl ControllerKind {
    pub fn is_coupling(&self) -> bool {
        matches!(self, ControllerKind::CouplingStatic | ControllerKind::CouplingAdaptive)
    }
}

/// Which distance normalizes the coupling statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Re-armed after every re-initialization.
    #[default]
    Phase,
    /// The initial `‖θ1₀ − θ2₀‖²` for the whole run.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub gamma0: f64,
    pub r: f64,
    pub b: usize,
    pub beta0: f64,
    pub eta: f64,
    pub check_every: usize,
    /// Phase-relative iterations before a decay may fire. `None` means 0 for
    /// the coupling controllers; Pflug and distance-based derive it from `γ`
    /// and `mu_estimate`.
    pub burn_in: Option<usize>,
    /// Consecutive triggering checks required before a decay.
    pub patience: usize,
    pub denominator: Denominator,
    pub slope_threshold: f64,
    pub checkpoint_ratio: f64,
    pub mu_estimate: f64,
    pub kind: ControllerKind,
}

impl ControllerParams {
    pub fn new(kind: ControllerKind, gamma0: f64) -> Self {
        Self {
            gamma0,
            r: 0.5,
            b: 100,
            beta0: 1e-2,
            eta: 0.75,
            check_every: 1,
            burn_in: None,
            patience: 1,
            denominator: Denominator::Phase,
            slope_threshold: 0.5,
            checkpoint_ratio: 1.5,
            mu_estimate: 0.0,
            kind,
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::InvalidParams(m.to_string()));
        if let ControllerKind::FixedSchedule { schedule } = &self.kind {
            return schedule.validate();
        }
        if !(self.gamma0 > 0.0) || !self.gamma0.is_finite() {
            return bad("gamma0 must be positive");
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return bad("r must lie in (0, 1)");
        }
        if !(self.beta0 > 0.0 && self.beta0 < 1.0) {
            return bad("beta0 must lie in (0, 1)");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if self.check_every == 0 {
            return bad("check_every must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if !(self.checkpoint_ratio > 1.0) {
            return bad("checkpoint_ratio must exceed 1");
        }
        if !self.slope_threshold.is_finite() {
            return bad("slope_threshold must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartEvent {
    pub k: u64,
    pub old_gamma: f64,
    pub new_gamma: f64,
    pub statistic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Continue,
    Decay { new_gamma: f64, reinit_auxiliary: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// The method's statistic at this step (NaN when none was computed).
    pub statistic: f64,
}

impl Decision {
    pub fn is_decay(&self) -> bool {
        matches!(self.action, Action::Decay { .. })
    }

    fn cont(statistic: f64) -> Self {
        Self {
            action: Action::Continue,
            statistic,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PflugAcc {
    pub sum: f64,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistanceAcc {
    pub anchor: Option<Vec64>,
    /// Next phase-relative checkpoint.
    pub next_checkpoint: u64,
    /// Last usable checkpoint `(k_rel, Ω)`.
    pub last: Option<(u64, f64)>,
    pub log: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub gamma_current: f64,
    pub beta_current: f64,
    pub d0_sq: f64,
    pub phase_index: u32,
    /// Iteration at which the current phase started.
    pub phase_start: u64,
    pub streak: usize,
    pub pflug: PflugAcc,
    pub distance: DistanceAcc,
    pub restart_log: Vec<RestartEvent>,
    global_armed: bool,
}

impl ControllerState {
    pub fn new(params: &ControllerParams) -> Self {
        Self {
            gamma_current: params.gamma0,
            beta_current: params.beta0,
            d0_sq: 0.0,
            phase_index: 0,
            phase_start: 0,
            streak: 0,
            pflug: PflugAcc::default(),
            distance: DistanceAcc {
                next_checkpoint: 1,
                ..DistanceAcc::default()
            },
            restart_log: Vec::new(),
            global_armed: false,
        }
    }

    /// Set the coupling reference distance for the current phase. Under
    /// [`Denominator::Global`] only the first call has an effect.
    pub fn arm_d0(&mut self, params: &ControllerParams, d0_sq: f64) -> Result<(), ControllerError> {
        if params.denominator == Denominator::Global && self.global_armed {
            return Ok(());
        }
        if !(d0_sq > 0.0) || !d0_sq.is_finite() {
            return Err(ControllerError::Degenerate(d0_sq));
        }
        self.d0_sq = d0_sq;
        self.global_armed = true;
        Ok(())
    }

    /// Stepsize for step `k` (1-based).
    pub fn gamma_for(&self, params: &ControllerParams, k: u64) -> Result<f64, ControllerError> {
        match &params.kind {
            ControllerKind::FixedSchedule { schedule } => fixed_schedule(schedule, k),
            _ => Ok(self.gamma_current),
        }
    }

    fn burn_in(&self, params: &ControllerParams) -> u64 {
        match (params.burn_in, params.kind) {
            (Some(b), _) => b as u64,
            (None, ControllerKind::Pflug | ControllerKind::DistanceBased) => {
                pflug_burn_in(self.gamma_current, params.mu_estimate)
            }
            (None, _) => 0,
        }
    }

    /// Phase-relative iteration count is past the burn-in window.
    fn past_burn_in(&self, params: &ControllerParams, k: u64) -> bool {
        k.saturating_sub(self.phase_start) > self.burn_in(params)
    }

    /// Count a triggering check; true once `patience` consecutive checks
    /// have triggered.
    fn trigger(&mut self, params: &ControllerParams, fired: bool) -> bool {
        if fired {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= params.patience
    }

    /// Enter the next phase. Exact phase algebra: `γ = γ₀ rᵐ`,
    /// `β = β₀ ηᵐ`.
    fn decay(&mut self, params: &ControllerParams, k: u64, statistic: f64, reinit: bool) -> Decision {
        let old = self.gamma_current;
        self.phase_index += 1;
        let m = self.phase_index as i32;
        self.gamma_current = params.gamma0 * params.r.powi(m);
        if params.kind == ControllerKind::CouplingAdaptive {
            self.beta_current = params.beta0 * params.eta.powi(m);
        }
        self.phase_start = k;
        self.streak = 0;
        self.pflug = PflugAcc::default();
        self.restart_log.push(RestartEvent {
            k,
            old_gamma: old,
            new_gamma: self.gamma_current,
            statistic,
        });
        Decision {
            action: Action::Decay {
                new_gamma: self.gamma_current,
                reinit_auxiliary: reinit,
            },
            statistic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let p = ControllerParams::new(ControllerKind::CouplingStatic, 0.1);
        assert_eq!(p.validate(), Ok(()));
        assert_eq!((p.r, p.b, p.beta0, p.eta, p.check_every), (0.5, 100, 1e-2, 0.75, 1));
    }

    #[test]
    fn rejects_out_of_range() {
        let base = ControllerParams::new(ControllerKind::CouplingAdaptive, 0.1);
        for p in [
            ControllerParams { r: 1.0, ..base.clone() },
            ControllerParams { beta0: 0.0, ..base.clone() },
            ControllerParams { eta: 0.0, ..base.clone() },
            ControllerParams { gamma0: -1.0, ..base.clone() },
            ControllerParams { check_every: 0, ..base.clone() },
        ] {
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn arm_rejects_zero_and_global_keeps_first() {
        let mut p = ControllerParams::new(ControllerKind::CouplingStatic, 0.1);
        let mut s = ControllerState::new(&p);
        assert_eq!(s.arm_d0(&p, 0.0), Err(ControllerError::Degenerate(0.0)));
        p.denominator = Denominator::Global;
        s.arm_d0(&p, 2.0).unwrap();
        s.arm_d0(&p, 5.0).unwrap();
        assert_eq!(s.d0_sq, 2.0);
    }
}
