use serde::{Deserialize, Serialize};

use crate::controllers::RestartEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    pub gamma: f64,
    /// Controller statistic at this step, if one was computed.
    pub stat: Option<f64>,
    /// `‖θ1 − θ2‖²`
    pub dist_sq: f64,
    /// `‖θ1 − θ*‖²`
    pub err: f64,
    /// `f(θ1) − f*`, when the objective is cheap to evaluate.
    pub f_gap: Option<f64>,
    /// `f(avg) − f*` with averaging on and a cheap objective.
    pub err_avg: Option<f64>,
    /// `‖avg − θ*‖²` with averaging on.
    pub dist_avg: Option<f64>,
    pub restart: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { k: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub k: u64,
    pub gamma: f64,
    pub phases: u32,
    pub err: f64,
    pub dist_sq: f64,
    pub dist_avg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub controller: String,
    pub seed: u64,
    pub stream: u64,
    pub status: RunStatus,
    pub initial: StateSummary,
    pub final_state: StateSummary,
    pub restart_log: Vec<RestartEvent>,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    /// Iteration of the first decay, if any.
    pub fn first_decay(&self) -> Option<u64> {
        self.restart_log.first().map(|e| e.k)
    }
}
