//! Experiment orchestration: configs in, curves, traces and figures out.

mod aggregate;
mod config;
mod csv_out;
mod svg;
mod sweep;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::controllers::ControllerParams;
use crate::engine::{run, EngineError, RunConfig, RunTrace};
use crate::problems::{make_problem, ProblemError, ProblemSpec};

pub use aggregate::{aggregate, mean_stderr, AggregateCurve, CurvePoint, METRICS};
pub use config::{
    load_config, ConfigOverrides, ControllerConfig, ControllerType, EngineConfig, ExperimentConfig, FullScale,
    OutputConfig, ProblemConfig, ReplicationConfig, ScheduleType, XScale, MASTER_SEED_ENV,
};
pub use csv_out::{emit_csv, emit_restarts, fmt_f64, read_curves_csv, read_restarts_csv, RestartRow};
pub use svg::{emit_svg, render_svg, PlotSpec, SvgReport, LOG_FLOOR};
pub use sweep::{sweep, Knob, SweepCell, SweepOutput};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("plot error: {0}")]
    Plot(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub type HarnessResult<T> = Result<T, HarnessError>;

/// 64-bit FNV-1a.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Stream id of one (controller, replication) cell. Depends on the name,
/// not the position, so reordering controllers changes nothing.
pub fn cell_stream(controller: &str, rep: usize) -> u64 {
    (fnv1a(controller) << 16) | rep as u64
}

#[derive(Debug, Clone)]
pub struct ControllerOutcome {
    pub name: String,
    pub params: ControllerParams,
    /// One per replication, in replication order.
    pub traces: Vec<RunTrace>,
}

impl ControllerOutcome {
    pub fn completed(&self) -> impl Iterator<Item = &RunTrace> {
        self.traces.iter().filter(|t| !t.diverged())
    }

    pub fn n_diverged(&self) -> usize {
        self.traces.iter().filter(|t| t.diverged()).count()
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonOutput {
    pub curves: Vec<AggregateCurve>,
    pub restarts: Vec<RestartRow>,
    pub controllers: Vec<ControllerOutcome>,
    pub warnings: Vec<String>,
}

impl ComparisonOutput {
    pub fn curve(&self, controller: &str, metric: &str) -> Option<&AggregateCurve> {
        self.curves.iter().find(|c| c.controller == controller && c.metric == metric)
    }

    pub fn n_diverged(&self) -> usize {
        self.controllers.iter().map(|c| c.n_diverged()).sum()
    }

    /// True when some controller has no completed replication.
    pub fn any_controller_lost(&self) -> bool {
        self.controllers.iter().any(|c| c.completed().next().is_none())
    }
}

pub fn build_problem(cfg: &ExperimentConfig) -> HarnessResult<ProblemSpec> {
    let p = &cfg.problem;
    Ok(make_problem(p.kind, p.d, p.n_data, p.seed, &p.params)?)
}

pub fn run_config(cfg: &ExperimentConfig, name: &str, rep: usize) -> RunConfig {
    RunConfig {
        n_iters: cfg.engine.n_iters,
        record_stride: cfg.engine.record_stride,
        batch_size: cfg.engine.batch_size,
        averaging: cfg.engine.averaging,
        init_spread: cfg.engine.init_spread,
        seed: cfg.replication.master_seed,
        stream: cell_stream(name, rep),
        label: name.to_string(),
        theta1_init: None,
        theta2_init: None,
        force_objective: cfg.engine.force_objective,
    }
}

/// Run every (controller, replication) cell and aggregate. Nothing is
/// written to disk.
pub fn compute_comparison(cfg: &ExperimentConfig, problem: &ProblemSpec) -> HarnessResult<ComparisonOutput> {
    cfg.validate()?;
    let reps = cfg.replication.n_reps;
    let params: Vec<ControllerParams> = cfg
        .controllers
        .iter()
        .map(|c| c.params(problem))
        .collect::<HarnessResult<_>>()?;
    let mut streams = HashSet::new();
    for c in &cfg.controllers {
        for rep in 0..reps {
            if !streams.insert(cell_stream(&c.name, rep)) {
                return Err(HarnessError::Config(format!(
                    "controllers.name: '{}' collides with another controller's seed stream; rename it",
                    c.name
                )));
            }
        }
    }
    let cells: Vec<(usize, usize)> = (0..cfg.controllers.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();
    let traces: Vec<RunTrace> = cells
        .par_iter()
        .map(|&(c, rep)| {
            let name = &cfg.controllers[c].name;
            run(problem, &params[c], &run_config(cfg, name, rep))
        })
        .collect::<Result<_, _>>()?;
    let mut traces = traces.into_iter();
    let mut controllers = Vec::new();
    let mut curves = Vec::new();
    let mut restarts = Vec::new();
    let mut warnings = Vec::new();
    for (c, p) in cfg.controllers.iter().zip(params) {
        let ts: Vec<RunTrace> = traces.by_ref().take(reps).collect();
        let outcome = ControllerOutcome {
            name: c.name.clone(),
            params: p,
            traces: ts,
        };
        let done: Vec<&RunTrace> = outcome.completed().collect();
        let nd = outcome.n_diverged();
        if nd > 0 {
            warnings.push(format!(
                "{}: {nd} of {reps} replications diverged and were excluded",
                c.name
            ));
        }
        curves.extend(aggregate(
            &c.name,
            &done,
            cfg.engine.record_stride,
            cfg.engine.n_iters,
            cfg.output.geometric,
        ));
        for (rep, t) in outcome.traces.iter().enumerate() {
            restarts.extend(t.restart_log.iter().map(|e| RestartRow {
                controller: c.name.clone(),
                rep,
                k: e.k,
                old_gamma: e.old_gamma,
                new_gamma: e.new_gamma,
                statistic: e.statistic,
            }));
        }
        controllers.push(outcome);
    }
    Ok(ComparisonOutput {
        curves,
        restarts,
        controllers,
        warnings,
    })
}

/// Markers for figures: the restarts of each controller's first
/// completed replication.
pub fn figure_restarts(out: &ComparisonOutput) -> Vec<(String, u64)> {
    let mut v = Vec::new();
    for c in &out.controllers {
        if let Some(t) = c.completed().next() {
            v.extend(t.restart_log.iter().map(|e| (c.name.clone(), e.k)));
        }
    }
    v
}

/// Same selection from persisted restart rows.
pub fn figure_restarts_from_rows(rows: &[RestartRow], curves: &[AggregateCurve]) -> Vec<(String, u64)> {
    let mut first_rep: Vec<(&str, usize)> = Vec::new();
    for r in rows {
        if !first_rep.iter().any(|(n, _)| *n == r.controller) {
            first_rep.push((&r.controller, r.rep));
        }
    }
    rows.iter()
        .filter(|r| first_rep.iter().any(|(n, rep)| *n == r.controller && *rep == r.rep))
        .filter(|r| curves.iter().any(|c| c.controller == r.controller))
        .map(|r| (r.controller.clone(), r.k))
        .collect()
}

fn io(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> HarnessResult<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| io(path, e))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| io(path, e))
}

/// One figure per aggregated metric: `figure_<metric>.svg`.
pub fn write_figures(
    dir: &Path,
    curves: &[AggregateCurve],
    restarts: &[(String, u64)],
    title: &str,
    x_scale: XScale,
) -> HarnessResult<Vec<(PathBuf, SvgReport)>> {
    let mut metrics: Vec<&str> = Vec::new();
    for c in curves {
        if !metrics.contains(&c.metric.as_str()) {
            metrics.push(&c.metric);
        }
    }
    let mut out = Vec::new();
    for m in metrics {
        let spec = PlotSpec {
            title: format!("{title}: {m}"),
            metric: m.to_string(),
            x_scale,
            restarts: restarts.to_vec(),
        };
        let path = dir.join(format!("figure_{m}.svg"));
        let rep = emit_svg(curves, &spec, &path)?;
        out.push((path, rep));
    }
    Ok(out)
}

pub fn effective_config_json(cfg: &ExperimentConfig, problem: &ProblemSpec) -> HarnessResult<serde_json::Value> {
    let resolved: Vec<serde_json::Value> = cfg
        .controllers
        .iter()
        .map(|c| Ok(json!({ "name": c.name, "params": c.params(problem)? })))
        .collect::<HarnessResult<_>>()?;
    let k = &problem.constants;
    Ok(json!({
        "config": cfg,
        "problem": {
            "kind": problem.kind.as_str(),
            "d": problem.d,
            "n": problem.n,
            "L": k.l,
            "mu": k.mu,
            "sigma_sq": k.sigma_sq,
            "r_sq": k.r_sq,
            "f_star": problem.reference.f_star,
            "default_gamma0": problem.default_gamma0(),
        },
        "controllers": resolved,
    }))
}

pub fn summary_json(out: &ComparisonOutput) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = out
        .controllers
        .iter()
        .map(|c| {
            let done: Vec<&RunTrace> = c.completed().collect();
            let finals: Vec<f64> = done.iter().map(|t| t.final_state.err).collect();
            let (mean, se) = if finals.is_empty() { (f64::NAN, f64::NAN) } else { mean_stderr(&finals) };
            let first: Vec<Option<u64>> = c.traces.iter().map(|t| t.first_decay()).collect();
            json!({
                "controller": c.name,
                "completed": done.len(),
                "diverged": c.n_diverged(),
                "final_err_mean": mean,
                "final_err_stderr": se,
                "restarts": c.traces.iter().map(|t| t.restart_log.len()).collect::<Vec<_>>(),
                "first_decay": first,
            })
        })
        .collect();
    json!({ "controllers": rows, "warnings": out.warnings })
}

/// Persist every artifact of a comparison under `cfg.output.dir`.
pub fn write_comparison(cfg: &ExperimentConfig, problem: &ProblemSpec, out: &ComparisonOutput) -> HarnessResult<()> {
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_json(&dir.join("effective_config.json"), &effective_config_json(cfg, problem)?)?;
    if cfg.wants("csv") {
        emit_csv(&out.curves, &dir.join("curves.csv"))?;
        emit_restarts(&out.restarts, &dir.join("restarts.csv"))?;
    }
    if cfg.wants("json") {
        write_json(&dir.join("summary.json"), &summary_json(out))?;
        if cfg.output.traces {
            let tdir = dir.join("traces");
            std::fs::create_dir_all(&tdir).map_err(|e| io(&tdir, e))?;
            for c in &out.controllers {
                for (rep, t) in c.traces.iter().enumerate() {
                    write_json(&tdir.join(format!("{}_{rep}.json", c.name)), t)?;
                }
            }
        }
    }
    if cfg.wants("svg") && !out.curves.is_empty() {
        let title = format!("{} d={}", problem.kind.as_str(), problem.d);
        write_figures(dir, &out.curves, &figure_restarts(out), &title, cfg.output.x_scale)?;
    }
    Ok(())
}

/// Build the problem, run all cells, write artifacts.
pub fn run_comparison(cfg: &ExperimentConfig) -> HarnessResult<ComparisonOutput> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let out = compute_comparison(cfg, &problem)?;
    write_comparison(cfg, &problem, &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemKind;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::minimal(ProblemKind::LeastSquares, 3);
        c.engine.n_iters = 2_000;
        c.engine.record_stride = 100;
        c.replication.n_reps = 3;
        c
    }

    #[test]
    fn streams_are_name_based() {
        assert_ne!(cell_stream("a", 0), cell_stream("b", 0));
        assert_eq!(cell_stream("a", 3) & 0xFFFF, 3);
    }

    #[test]
    fn controller_order_does_not_matter() {
        let cfg = small();
        let problem = build_problem(&cfg).unwrap();
        let a = compute_comparison(&cfg, &problem).unwrap();
        let mut rev = cfg.clone();
        rev.controllers.reverse();
        let b = compute_comparison(&rev, &problem).unwrap();
        for c in &a.curves {
            assert_eq!(Some(c), b.curve(&c.controller, &c.metric));
        }
    }

    #[test]
    fn single_rep_matches_trace() {
        let mut cfg = small();
        cfg.replication.n_reps = 1;
        let problem = build_problem(&cfg).unwrap();
        let out = compute_comparison(&cfg, &problem).unwrap();
        let t = &out.controllers[0].traces[0];
        let c = out.curve(&cfg.controllers[0].name, "err").unwrap();
        let grid: Vec<_> = t.records.iter().filter(|r| r.k % 100 == 0).collect();
        assert_eq!(grid.len(), c.points.len());
        for (r, p) in grid.iter().zip(&c.points) {
            assert_eq!((r.k, r.err, 0.0), (p.k, p.mean, p.stderr));
        }
    }

    #[test]
    fn restart_rows_from_csv_match() {
        let cfg = small();
        let problem = build_problem(&cfg).unwrap();
        let out = compute_comparison(&cfg, &problem).unwrap();
        assert_eq!(figure_restarts(&out), figure_restarts_from_rows(&out.restarts, &out.curves));
    }
}
