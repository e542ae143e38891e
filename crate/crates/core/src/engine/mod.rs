//! The coupled SGD loop.
//!
//! Every run advances a primary iterate `θ1` and an auxiliary iterate `θ2`
//! on the same samples, whatever the controller; baselines simply ignore
//! `θ2`. This keeps the sampling stream identical across controllers, so
//! runs with the same seed and stream see the same data.

mod state;
mod trace;

use thiserror::Error;

use crate::controllers::{
    coupling_observe, distance_observe, pflug_observe, ControllerError, ControllerKind, ControllerParams,
    ControllerState, Decision,
};
use crate::numkit::{RngStream, Vec64};
use crate::problems::{ProblemError, ProblemKind, ProblemSpec};

pub use state::{coupled_step, reinit_auxiliary, update_average, CoupledState, D0_FLOOR};
pub use trace::{RunStatus, RunTrace, StateSummary, TraceRecord};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

/// Divergence threshold on `‖θ1‖²`.
pub const DIVERGENCE_NORM_SQ: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_iters: u64,
    pub record_stride: u64,
    pub batch_size: usize,
    pub averaging: bool,
    /// `θ2₀ = θ1₀ + spread·z`, `z ~ N(0, I)`.
    pub init_spread: f64,
    pub seed: u64,
    pub stream: u64,
    /// Label stored in the trace.
    pub label: String,
    pub theta1_init: Option<Vec64>,
    pub theta2_init: Option<Vec64>,
    /// Evaluate `f` at records even when that needs a full data pass.
    pub force_objective: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_iters: 1_000,
            record_stride: 1,
            batch_size: 1,
            averaging: false,
            init_spread: 1.0,
            seed: 0,
            stream: 0,
            label: String::new(),
            theta1_init: None,
            theta2_init: None,
            force_objective: false,
        }
    }
}

/// Stream for auxiliary draws (initial spread, degenerate re-inits), kept
/// apart from the sampling stream.
fn aux_stream(seed: u64, stream: u64) -> RngStream {
    RngStream::new(seed ^ 0xA5A5_5A5A_C3C3_3C3C, stream)
}

fn objective_is_cheap(problem: &ProblemSpec) -> bool {
    !matches!(problem.kind, ProblemKind::Logistic | ProblemKind::Svm) || problem.data.is_none()
}

struct Recorder<'a> {
    problem: &'a ProblemSpec,
    with_f: bool,
    records: Vec<TraceRecord>,
}

impl Recorder<'_> {
    fn gap(&self, theta: &Vec64) -> Option<f64> {
        if !self.with_f {
            return None;
        }
        self.problem
            .objective(theta)
            .map(|f| f - self.problem.reference.f_star)
    }

    fn record(&mut self, s: &CoupledState, gamma: f64, stat: f64, restart: bool) {
        let rec = TraceRecord {
            k: s.k,
            gamma,
            stat: stat.is_finite().then_some(stat),
            dist_sq: s.theta1.dist_sq(&s.theta2).unwrap_or(f64::NAN),
            err: self.problem.dist_sq_to_opt(&s.theta1),
            f_gap: self.gap(&s.theta1),
            err_avg: s.avg1.as_ref().and_then(|a| self.gap(a)),
            dist_avg: s.avg1.as_ref().map(|a| self.problem.dist_sq_to_opt(a)),
            restart,
        };
        match self.records.last_mut() {
            Some(last) if last.k == rec.k => *last = rec,
            _ => self.records.push(rec),
        }
    }
}

fn summary(problem: &ProblemSpec, s: &CoupledState, gamma: f64, phases: u32) -> StateSummary {
    StateSummary {
        k: s.k,
        gamma,
        phases,
        err: problem.dist_sq_to_opt(&s.theta1),
        dist_sq: s.theta1.dist_sq(&s.theta2).unwrap_or(f64::NAN),
        dist_avg: s.avg1.as_ref().map(|a| problem.dist_sq_to_opt(a)),
    }
}

/// Execute one run. Bit-deterministic in `(problem, controller, cfg)`.
/// Divergence is not an error: the trace up to the abort is returned with
/// a [`RunStatus::Diverged`] marker.
pub fn run(problem: &ProblemSpec, controller: &ControllerParams, cfg: &RunConfig) -> Result<RunTrace, EngineError> {
    controller.validate()?;
    if cfg.record_stride == 0 || cfg.batch_size == 0 {
        return Err(EngineError::InvalidConfig("record_stride and batch_size must be positive".into()));
    }
    let d = problem.d;
    let mut rng = RngStream::new(cfg.seed, cfg.stream);
    let mut aux = aux_stream(cfg.seed, cfg.stream);
    let theta1 = cfg.theta1_init.clone().unwrap_or_else(|| problem.initial_point.clone());
    let theta2 = match &cfg.theta2_init {
        Some(t) => t.clone(),
        None => {
            let mut t = theta1.clone();
            for v in t.as_mut_slice() {
                *v += cfg.init_spread * aux.normal();
            }
            t
        }
    };
    if theta1.len() != d || theta2.len() != d {
        return Err(EngineError::InvalidConfig("initial points have the wrong dimension".into()));
    }
    let sampler = problem.sampler(&mut rng, cfg.batch_size);
    let mut state = CoupledState::new(theta1, theta2, controller.b, cfg.averaging, sampler);
    let mut ctl = ControllerState::new(controller);
    if controller.kind.is_coupling() {
        ctl.arm_d0(controller, state.d0_sq)?;
    }
    if controller.kind == ControllerKind::DistanceBased {
        ctl.distance.anchor = Some(state.theta1.clone());
    }

    let mut rec = Recorder {
        problem,
        with_f: cfg.force_objective || objective_is_cheap(problem),
        records: Vec::new(),
    };
    let gamma0 = match controller.kind {
        ControllerKind::FixedSchedule { .. } => ctl.gamma_for(controller, 1)?,
        _ => ctl.gamma_current,
    };
    rec.record(&state, gamma0, f64::NAN, false);
    let initial = summary(problem, &state, gamma0, 0);

    let mut g_prev: Option<Vec64> = None;
    let mut status = RunStatus::Completed;
    let mut gamma = gamma0;
    for k in 1..=cfg.n_iters {
        gamma = ctl.gamma_for(controller, k)?;
        coupled_step(&mut state, problem, gamma, &mut rng)?;
        if state.is_diverged() {
            rec.record(&state, gamma, f64::NAN, false);
            status = RunStatus::Diverged {
                k,
                reason: if state.theta1.is_finite() && state.theta2.is_finite() {
                    "iterate norm exceeded 1e12".into()
                } else {
                    "non-finite iterate".into()
                },
            };
            break;
        }
        update_average(&mut state);
        let decision = match controller.kind {
            ControllerKind::CouplingStatic | ControllerKind::CouplingAdaptive => {
                coupling_observe(&mut ctl, controller, &state.theta1, &state.theta2, k)?
            }
            ControllerKind::Pflug => {
                let g = Vec64::from_vec(state.last_gradient().to_vec());
                let d = match &g_prev {
                    Some(prev) => pflug_observe(&mut ctl, controller, prev, &g, k),
                    None => Decision {
                        action: crate::controllers::Action::Continue,
                        statistic: f64::NAN,
                    },
                };
                g_prev = Some(g);
                d
            }
            ControllerKind::DistanceBased => distance_observe(&mut ctl, controller, &state.theta1, k),
            ControllerKind::FixedSchedule { .. } => Decision {
                action: crate::controllers::Action::Continue,
                statistic: f64::NAN,
            },
        };
        let mut restart = false;
        if let crate::controllers::Action::Decay { reinit_auxiliary: reinit, .. } = decision.action {
            restart = true;
            if reinit {
                let d0 = reinit_auxiliary(&mut state, ctl.gamma_current, &mut aux);
                ctl.arm_d0(controller, d0)?;
            }
        }
        if restart || k % cfg.record_stride == 0 || k == cfg.n_iters {
            rec.record(&state, gamma, decision.statistic, restart);
        }
    }
    let final_gamma = match status {
        RunStatus::Completed if cfg.n_iters > 0 => ctl.gamma_for(controller, cfg.n_iters)?,
        _ => gamma,
    };
    Ok(RunTrace {
        controller: cfg.label.clone(),
        seed: cfg.seed,
        stream: cfg.stream,
        final_state: summary(problem, &state, final_gamma, ctl.phase_index),
        initial,
        status,
        restart_log: ctl.restart_log,
        records: rec.records,
    })
}
