//! Experiment configuration: TOML in, validated struct out.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerKind, ControllerParams, Denominator, Schedule};
use crate::problems::{Overrides, ProblemKind, ProblemSpec};

use super::{HarnessError, HarnessResult};

/// Environment variable overriding `replication.master_seed`.
pub const MASTER_SEED_ENV: &str = "CSGD_MASTER_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub replication: ReplicationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default = "default_controllers")]
    pub controllers: Vec<ControllerConfig>,
    /// Full-scale settings applied by `--full`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<FullScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub d: usize,
    /// Dataset size; 0 selects the streaming form where one exists.
    #[serde(default)]
    pub n_data: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default = "d_n_iters")]
    pub n_iters: u64,
    #[serde(default = "one_usize")]
    pub batch_size: usize,
    #[serde(default)]
    pub averaging: bool,
    #[serde(default = "d_stride")]
    pub record_stride: u64,
    #[serde(default = "one_f64")]
    pub init_spread: f64,
    #[serde(default)]
    pub force_objective: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationConfig {
    #[serde(default = "d_reps")]
    pub n_reps: usize,
    #[serde(default)]
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "d_dir")]
    pub dir: PathBuf,
    /// Any of `csv`, `json`, `svg`.
    #[serde(default = "d_formats")]
    pub formats: Vec<String>,
    /// Aggregate positive metrics as geometric means (log-space stderr).
    #[serde(default)]
    pub geometric: bool,
    #[serde(default)]
    pub x_scale: XScale,
    /// Write one JSON trace per replication.
    #[serde(default = "yes")]
    pub traces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullScale {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_data: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_iters: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerType {
    CouplingStatic,
    CouplingAdaptive,
    DistanceBased,
    Pflug,
    FixedSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleType {
    Constant,
    InvSqrt,
    InvMuK,
    UniformOpt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ControllerType,
    /// Defaults to the problem's recommended stepsize.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default = "d_r")]
    pub r: f64,
    #[serde(default = "d_b")]
    pub b: usize,
    #[serde(default = "d_beta0")]
    pub beta0: f64,
    #[serde(default = "d_eta")]
    pub eta: f64,
    #[serde(default = "one_usize")]
    pub check_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default = "one_usize")]
    pub patience: usize,
    #[serde(default)]
    pub denominator: Denominator,
    #[serde(default = "d_slope")]
    pub slope_threshold: f64,
    #[serde(default = "d_q")]
    pub checkpoint_ratio: f64,
    /// Pflug burn-in and `1/(μk)` schedules; defaults to the problem's `μ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleType>,
    /// `C` of `C/√k` (default 1) or the multiplier of the uniform-convex
    /// schedule (default `gamma0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Exponent of `k^{−1/(τ+1)}`; defaults to `1 − 2/p` for the uniformly
    /// convex kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

fn d_n_iters() -> u64 {
    100_000
}
fn d_stride() -> u64 {
    1_000
}
fn d_reps() -> usize {
    10
}
fn d_dir() -> PathBuf {
    PathBuf::from("out")
}
fn d_formats() -> Vec<String> {
    vec!["csv".into(), "json".into(), "svg".into()]
}
fn d_r() -> f64 {
    0.5
}
fn d_b() -> usize {
    100
}
fn d_beta0() -> f64 {
    1e-2
}
fn d_eta() -> f64 {
    0.75
}
fn d_slope() -> f64 {
    0.5
}
fn d_q() -> f64 {
    1.5
}
fn one_usize() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_iters: d_n_iters(),
            batch_size: 1,
            averaging: false,
            record_stride: d_stride(),
            init_spread: 1.0,
            force_objective: false,
        }
    }
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            n_reps: d_reps(),
            master_seed: 0,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: d_dir(),
            formats: d_formats(),
            geometric: false,
            x_scale: XScale::Linear,
            traces: true,
        }
    }
}

impl ControllerConfig {
    pub fn new(name: &str, kind: ControllerType) -> Self {
        Self {
            name: name.to_string(),
            kind,
            gamma0: None,
            r: d_r(),
            b: d_b(),
            beta0: d_beta0(),
            eta: d_eta(),
            check_every: 1,
            burn_in: None,
            patience: 1,
            denominator: Denominator::Phase,
            slope_threshold: d_slope(),
            checkpoint_ratio: d_q(),
            mu: None,
            schedule: None,
            c: None,
            tau: None,
        }
    }

    /// Resolve against a built problem.
    pub fn params(&self, problem: &ProblemSpec) -> HarnessResult<ControllerParams> {
        let gamma0 = self.gamma0.unwrap_or_else(|| problem.default_gamma0());
        let mu = self.mu.unwrap_or(problem.constants.mu);
        let kind = match self.kind {
            ControllerType::CouplingStatic => ControllerKind::CouplingStatic,
            ControllerType::CouplingAdaptive => ControllerKind::CouplingAdaptive,
            ControllerType::DistanceBased => ControllerKind::DistanceBased,
            ControllerType::Pflug => ControllerKind::Pflug,
            ControllerType::FixedSchedule => {
                let schedule = match self.schedule.unwrap_or(ScheduleType::Constant) {
                    ScheduleType::Constant => Schedule::Constant { gamma: gamma0 },
                    ScheduleType::InvSqrt => Schedule::InvSqrt { c: self.c.unwrap_or(1.0) },
                    ScheduleType::InvMuK => Schedule::InvMuK { mu },
                    ScheduleType::UniformOpt => {
                        let tau = match (self.tau, &problem.params) {
                            (Some(t), _) => t,
                            (None, crate::problems::ProblemParams::UniformConvex(p)) => p.tau_exp,
                            (None, _) => {
                                return Err(HarnessError::Config(format!(
                                    "controllers.{}: uniform_opt needs tau for kind {}",
                                    self.name,
                                    problem.kind.as_str()
                                )))
                            }
                        };
                        Schedule::UniformOpt { c: self.c.unwrap_or(gamma0), tau }
                    }
                };
                ControllerKind::FixedSchedule { schedule }
            }
        };
        let p = ControllerParams {
            gamma0,
            r: self.r,
            b: self.b,
            beta0: self.beta0,
            eta: self.eta,
            check_every: self.check_every,
            burn_in: self.burn_in,
            patience: self.patience,
            denominator: self.denominator,
            slope_threshold: self.slope_threshold,
            checkpoint_ratio: self.checkpoint_ratio,
            mu_estimate: mu,
            kind,
        };
        p.validate()
            .map_err(|e| HarnessError::Config(format!("controllers.{}: {e}", self.name)))?;
        Ok(p)
    }
}

fn default_controllers() -> Vec<ControllerConfig> {
    vec![
        ControllerConfig::new("coupling_static", ControllerType::CouplingStatic),
        ControllerConfig::new("coupling_adaptive", ControllerType::CouplingAdaptive),
    ]
}

/// Overrides applied after parsing and before validation. Precedence for
/// the master seed: `seed` here, then the environment, then the file.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_iters: Option<u64>,
    pub reps: Option<usize>,
    pub full: bool,
    /// Value of `CSGD_MASTER_SEED`, if set.
    pub env_seed: Option<String>,
}

impl ConfigOverrides {
    pub fn with_env(mut self) -> Self {
        self.env_seed = std::env::var(MASTER_SEED_ENV).ok();
        self
    }
}

impl ExperimentConfig {
    pub fn minimal(kind: ProblemKind, d: usize) -> Self {
        toml::from_str(&format!("[problem]\nkind = \"{}\"\nd = {d}\n", kind.as_str())).expect("minimal config parses")
    }

    pub fn parse(text: &str) -> HarnessResult<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &ConfigOverrides) -> HarnessResult<()> {
        if o.full {
            let full = self.full.clone().unwrap_or(FullScale {
                n_data: None,
                n_iters: None,
                record_stride: None,
            });
            if let Some(n) = full.n_data {
                self.problem.n_data = n;
            } else if self.problem.n_data > 0 {
                self.problem.n_data = 1_000_000;
            }
            if let Some(n) = full.n_iters {
                self.engine.n_iters = n;
            }
            if let Some(s) = full.record_stride {
                self.engine.record_stride = s;
            }
        }
        if let Some(env) = &o.env_seed {
            self.replication.master_seed = env
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{MASTER_SEED_ENV}: not an unsigned integer: '{env}'")))?;
        }
        if let Some(s) = o.seed {
            self.replication.master_seed = s;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(n) = o.n_iters {
            self.engine.n_iters = n;
        }
        if let Some(r) = o.reps {
            self.replication.n_reps = r;
        }
        Ok(())
    }

    pub fn validate(&self) -> HarnessResult<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.problem.d == 0 {
            return bad("problem.d: must be at least 1".into());
        }
        if self.replication.n_reps == 0 {
            return bad("replication.n_reps: must be at least 1".into());
        }
        if self.replication.n_reps > 1 << 16 {
            return bad("replication.n_reps: at most 65536".into());
        }
        if self.engine.record_stride == 0 {
            return bad("engine.record_stride: must be positive".into());
        }
        if self.engine.batch_size == 0 {
            return bad("engine.batch_size: must be positive".into());
        }
        if !(self.engine.init_spread > 0.0 && self.engine.init_spread.is_finite()) {
            return bad("engine.init_spread: must be positive".into());
        }
        if self.controllers.is_empty() {
            return bad("controllers: at least one controller is required".into());
        }
        let mut seen = HashSet::new();
        for c in &self.controllers {
            if c.name.is_empty() || !c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                return bad(format!("controllers.name: '{}' must be non-empty [A-Za-z0-9_-]", c.name));
            }
            if !seen.insert(c.name.as_str()) {
                return bad(format!("controllers.name: duplicate '{}'", c.name));
            }
            if c.schedule.is_some() && c.kind != ControllerType::FixedSchedule {
                return bad(format!("controllers.{}: schedule is only valid for fixed_schedule", c.name));
            }
            if let Some(g) = c.gamma0 {
                if !(g > 0.0 && g.is_finite()) {
                    return bad(format!("controllers.{}.gamma0: must be positive", c.name));
                }
            }
            if !(c.r > 0.0 && c.r < 1.0) {
                return bad(format!("controllers.{}.r: must lie in (0, 1)", c.name));
            }
            if !(c.beta0 > 0.0 && c.beta0 < 1.0) {
                return bad(format!("controllers.{}.beta0: must lie in (0, 1)", c.name));
            }
            if !(c.eta > 0.0 && c.eta <= 1.0) {
                return bad(format!("controllers.{}.eta: must lie in (0, 1]", c.name));
            }
            if c.check_every == 0 || c.patience == 0 {
                return bad(format!("controllers.{}: check_every and patience must be positive", c.name));
            }
        }
        for f in &self.output.formats {
            if !matches!(f.as_str(), "csv" | "json" | "svg") {
                return bad(format!("output.formats: unknown format '{f}'"));
            }
        }
        Ok(())
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }
}

/// Read, override, validate.
pub fn load_config(path: &Path, overrides: &ConfigOverrides) -> HarnessResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.apply(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_fills_defaults() {
        let c = ExperimentConfig::parse("[problem]\nkind = \"least_squares\"\nd = 5\n").unwrap();
        assert_eq!(c.replication.n_reps, 10);
        assert_eq!(c.controllers.len(), 2);
        let s = &c.controllers[0];
        assert_eq!((s.r, s.beta0, s.b, s.eta), (0.5, 1e-2, 100, 0.75));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_field_is_named() {
        let e = ExperimentConfig::parse("[problem]\nkind = \"logistic\"\nd = 5\nbogus_field = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus_field"), "{e}");
        let e = ExperimentConfig::parse("[problem]\nkind = \"logistic\"\nd = 5\n[engine]\nn_iter = 3\n").unwrap_err();
        assert!(e.to_string().contains("n_iter"), "{e}");
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::minimal(ProblemKind::Logistic, 5);
        c.controllers.push(ControllerConfig {
            schedule: Some(ScheduleType::InvSqrt),
            c: Some(0.3),
            ..ControllerConfig::new("avg", ControllerType::FixedSchedule)
        });
        c.problem.params.h_diag = Some(vec![1.0, 0.1]);
        c.engine.averaging = true;
        let back = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut c = ExperimentConfig::minimal(ProblemKind::LeastSquares, 3);
        c.controllers[1].name = c.controllers[0].name.clone();
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_precedence() {
        let mut c = ExperimentConfig::minimal(ProblemKind::LeastSquares, 3);
        c.replication.master_seed = 1;
        let mut o = ConfigOverrides {
            env_seed: Some("2".into()),
            ..Default::default()
        };
        c.apply(&o).unwrap();
        assert_eq!(c.replication.master_seed, 2);
        o.seed = Some(3);
        c.apply(&o).unwrap();
        assert_eq!(c.replication.master_seed, 3);
        o.env_seed = Some("x".into());
        assert!(c.apply(&o).is_err());
    }
}
