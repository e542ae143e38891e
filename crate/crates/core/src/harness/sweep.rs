//! One-knob parameter sweeps with shared seeds across values.

use std::path::PathBuf;
use std::str::FromStr;

use super::{
    build_problem, compute_comparison, emit_csv, figure_restarts, fmt_f64, write_comparison, write_figures,
    AggregateCurve, ComparisonOutput, ControllerType, ExperimentConfig, HarnessError, HarnessResult, ScheduleType,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Knob {
    R,
    Beta0,
    B,
    Eta,
    SlopeThreshold,
    BurnIn,
    /// `C` of the `C/√k` schedule.
    C,
}

impl FromStr for Knob {
    type Err = HarnessError;
    fn from_str(s: &str) -> HarnessResult<Self> {
        Ok(match s {
            "r" => Knob::R,
            "beta0" | "beta" => Knob::Beta0,
            "b" => Knob::B,
            "eta" => Knob::Eta,
            "slope_threshold" => Knob::SlopeThreshold,
            "burn_in" => Knob::BurnIn,
            "c" | "C" => Knob::C,
            _ => {
                return Err(HarnessError::Config(format!(
                    "unknown knob '{s}' (expected r, beta0, b, eta, slope_threshold, burn_in, C)"
                )))
            }
        })
    }
}

impl Knob {
    pub fn as_str(&self) -> &'static str {
        match self {
            Knob::R => "r",
            Knob::Beta0 => "beta0",
            Knob::B => "b",
            Knob::Eta => "eta",
            Knob::SlopeThreshold => "slope_threshold",
            Knob::BurnIn => "burn_in",
            Knob::C => "C",
        }
    }

    fn integral(&self) -> bool {
        matches!(self, Knob::B | Knob::BurnIn)
    }

    pub fn label(&self, v: f64) -> String {
        if self.integral() {
            format!("{}", v as u64)
        } else {
            fmt_f64(v)
        }
    }

    /// Set the knob on every controller it applies to; returns how many.
    pub fn apply(&self, cfg: &mut ExperimentConfig, v: f64) -> HarnessResult<usize> {
        if self.integral() && !(v >= 0.0 && v.fract() == 0.0) {
            return Err(HarnessError::Config(format!("{}: expected a non-negative integer, got {v}", self.as_str())));
        }
        let mut n = 0;
        for c in &mut cfg.controllers {
            let decays = c.kind != ControllerType::FixedSchedule;
            let coupling = matches!(c.kind, ControllerType::CouplingStatic | ControllerType::CouplingAdaptive);
            match self {
                Knob::R if decays => c.r = v,
                Knob::Beta0 if coupling => c.beta0 = v,
                Knob::B if coupling => c.b = v as usize,
                Knob::Eta if c.kind == ControllerType::CouplingAdaptive => c.eta = v,
                Knob::SlopeThreshold if c.kind == ControllerType::DistanceBased => c.slope_threshold = v,
                Knob::BurnIn if decays => c.burn_in = Some(v as usize),
                Knob::C if c.schedule == Some(ScheduleType::InvSqrt) => c.c = Some(v),
                _ => continue,
            }
            n += 1;
        }
        Ok(n)
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub value: f64,
    pub dir: PathBuf,
    pub output: ComparisonOutput,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub knob: Knob,
    pub cells: Vec<SweepCell>,
    /// `err` curves of every cell, relabelled `<controller> <knob>=<value>`.
    pub overlay: Vec<AggregateCurve>,
}

/// Run one comparison per value under `<out>/<knob>_<value>/`, all with the
/// base config's seeds, then write `sweep_<knob>.csv` and
/// `sweep_<knob>.svg` in `<out>`.
pub fn sweep(cfg: &ExperimentConfig, knob: Knob, values: &[f64], write: bool) -> HarnessResult<SweepOutput> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let base = cfg.output.dir.clone();
    let mut cells = Vec::new();
    let mut overlay = Vec::new();
    let mut markers = Vec::new();
    for &v in values {
        let mut c = cfg.clone();
        if knob.apply(&mut c, v)? == 0 {
            return Err(HarnessError::Config(format!(
                "knob {} does not apply to any configured controller",
                knob.as_str()
            )));
        }
        let label = knob.label(v);
        c.output.dir = base.join(format!("{}_{label}", knob.as_str()));
        c.validate()?;
        let out = compute_comparison(&c, &problem)?;
        if write {
            write_comparison(&c, &problem, &out)?;
        }
        let tag = |name: &str| format!("{name} {}={label}", knob.as_str());
        for cur in out.curves.iter().filter(|x| x.metric == "err") {
            overlay.push(AggregateCurve {
                controller: tag(&cur.controller),
                ..cur.clone()
            });
        }
        markers.extend(figure_restarts(&out).into_iter().map(|(n, k)| (tag(&n), k)));
        cells.push(SweepCell {
            value: v,
            dir: c.output.dir.clone(),
            output: out,
        });
    }
    if write {
        std::fs::create_dir_all(&base).map_err(|e| HarnessError::Io(format!("{}: {e}", base.display())))?;
        if cfg.wants("csv") {
            emit_csv(&overlay, &base.join(format!("sweep_{}.csv", knob.as_str())))?;
        }
        if cfg.wants("svg") && !overlay.is_empty() {
            let title = format!("{} d={}: sweep over {}", problem.kind.as_str(), problem.d, knob.as_str());
            let figs = write_figures(&base, &overlay, &markers, &title, cfg.output.x_scale)?;
            for (p, _) in figs {
                let dest = base.join(format!("sweep_{}.svg", knob.as_str()));
                std::fs::rename(&p, &dest).map_err(|e| HarnessError::Io(format!("{}: {e}", dest.display())))?;
            }
        }
    }
    Ok(SweepOutput { knob, cells, overlay })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemKind;

    #[test]
    fn knob_parsing() {
        assert_eq!("beta0".parse::<Knob>().unwrap(), Knob::Beta0);
        assert_eq!("C".parse::<Knob>().unwrap(), Knob::C);
        assert!("gamma".parse::<Knob>().is_err());
    }

    #[test]
    fn integral_knobs_reject_fractions() {
        let mut c = ExperimentConfig::minimal(ProblemKind::LeastSquares, 3);
        assert!(Knob::B.apply(&mut c, 2.5).is_err());
        assert_eq!(Knob::B.apply(&mut c, 7.0).unwrap(), 2);
        assert_eq!(c.controllers[0].b, 7);
        assert_eq!(Knob::C.apply(&mut c, 1.0).unwrap(), 0);
    }

    #[test]
    fn default_value_matches_comparison() {
        let mut cfg = ExperimentConfig::minimal(ProblemKind::LeastSquares, 3);
        cfg.engine.n_iters = 1_000;
        cfg.engine.record_stride = 100;
        cfg.replication.n_reps = 2;
        let s = sweep(&cfg, Knob::R, &[0.5], false).unwrap();
        let problem = build_problem(&cfg).unwrap();
        let base = compute_comparison(&cfg, &problem).unwrap();
        assert_eq!(s.cells[0].output.curves, base.curves);
        assert!(sweep(&cfg, Knob::R, &[], false).is_err());
    }
}
