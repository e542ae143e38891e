//! Command-line front end. `csgd <run|compare|sweep|verify|plot>`.
//!
//! Exit codes: 0 success, 1 a verify check failed, 2 bad config or
//! arguments, 3 divergence, 4 I/O failure. Logs go to stderr; results go to
//! stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::engine::run;
use crate::harness::{
    self, build_problem, figure_restarts_from_rows, load_config, read_curves_csv, read_restarts_csv, run_config,
    ConfigOverrides, ExperimentConfig, HarnessError, Knob, XScale,
};
use crate::oracle::{run_suite, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "csgd", version, about = "Coupling-based stepsize control for constant-stepsize SGD")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one controller once and write its trace.
    Run(RunArgs),
    /// Run every configured controller over all replications.
    Compare(CommonArgs),
    /// Repeat the comparison over values of one knob.
    Sweep(SweepArgs),
    /// Run the theory oracle suite; JSON lines on stdout.
    Verify(VerifyArgs),
    /// Re-render figures from a persisted curves.csv.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; beats CSGD_MASTER_SEED and the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "n-iters")]
    pub n_iters: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Full-scale problem and horizon from the config's [full] block.
    #[arg(long)]
    pub full: bool,
    /// Print a JSON result object on stdout.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Controller name; defaults to the first configured.
    #[arg(long)]
    pub controller: Option<String>,
    /// Replication index whose seed stream is used.
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub knob: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub values: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Comma-separated check names.
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accepted for symmetry; output is always JSON lines.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// A curves.csv written by compare or sweep.
    pub curves: PathBuf,
    /// Output directory; defaults to the CSV's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only this metric; defaults to all.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long = "log-x")]
    pub log_x: bool,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub quiet: bool,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    quiet: bool,
}

impl Io<'_> {
    fn log(&mut self, msg: &str) {
        if !self.quiet {
            let _ = writeln!(self.err, "{msg}");
        }
    }

    fn fail(&mut self, e: &HarnessError) -> i32 {
        let _ = writeln!(self.err, "error: {e}");
        exit_code(e)
    }
}

pub fn exit_code(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn overrides(c: &CommonArgs) -> ConfigOverrides {
    ConfigOverrides {
        seed: c.seed,
        out: c.out.clone(),
        n_iters: c.n_iters,
        reps: c.reps,
        full: c.full,
        env_seed: None,
    }
    .with_env()
}

fn load(c: &CommonArgs) -> Result<ExperimentConfig, HarnessError> {
    load_config(&c.config, &overrides(c))
}

fn write_json_file(path: &Path, v: &serde_json::Value) -> Result<(), HarnessError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| HarnessError::Io(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn cmd_run(a: &RunArgs, io: &mut Io) -> Result<i32, HarnessError> {
    let cfg = load(&a.common)?;
    let ctl = match &a.controller {
        Some(n) => cfg
            .controllers
            .iter()
            .find(|c| &c.name == n)
            .ok_or_else(|| HarnessError::Config(format!("no controller named '{n}'")))?,
        None => &cfg.controllers[0],
    };
    let problem = build_problem(&cfg)?;
    let params = ctl.params(&problem)?;
    io.log(&format!("running {} on {} d={}", ctl.name, problem.kind.as_str(), problem.d));
    let trace = run(&problem, &params, &run_config(&cfg, &ctl.name, a.rep))?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    write_json_file(&dir.join("effective_config.json"), &harness::effective_config_json(&cfg, &problem)?)?;
    let trace_json = serde_json::to_value(&trace).map_err(|e| HarnessError::Io(e.to_string()))?;
    write_json_file(&dir.join("trace.json"), &trace_json)?;
    let summary = json!({
        "controller": ctl.name,
        "status": trace.status,
        "final": trace.final_state,
        "restarts": trace.restart_log.len(),
        "first_decay": trace.first_decay(),
    });
    write_json_file(&dir.join("summary.json"), &summary)?;
    if a.common.json {
        let _ = writeln!(io.out, "{summary}");
    } else {
        let _ = writeln!(
            io.out,
            "{}: k={} err={:e} gamma={:e} restarts={}",
            ctl.name,
            trace.final_state.k,
            trace.final_state.err,
            trace.final_state.gamma,
            trace.restart_log.len()
        );
    }
    if trace.diverged() {
        io.log(&format!("{}: run diverged", ctl.name));
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

fn report(out: &harness::ComparisonOutput, json_mode: bool, io: &mut Io) {
    for w in &out.warnings {
        io.log(&format!("warning: {w}"));
    }
    let s = harness::summary_json(out);
    if json_mode {
        let _ = writeln!(io.out, "{s}");
        return;
    }
    for c in s["controllers"].as_array().into_iter().flatten() {
        let _ = writeln!(
            io.out,
            "{}: completed={} diverged={} final_err={}",
            c["controller"].as_str().unwrap_or(""),
            c["completed"],
            c["diverged"],
            c["final_err_mean"]
        );
    }
}

fn cmd_compare(a: &CommonArgs, io: &mut Io) -> Result<i32, HarnessError> {
    let cfg = load(a)?;
    io.log(&format!(
        "comparing {} controllers x {} reps, writing to {}",
        cfg.controllers.len(),
        cfg.replication.n_reps,
        cfg.output.dir.display()
    ));
    let out = harness::run_comparison(&cfg)?;
    report(&out, a.json, io);
    Ok(if out.any_controller_lost() { EXIT_DIVERGED } else { EXIT_OK })
}

fn cmd_sweep(a: &SweepArgs, io: &mut Io) -> Result<i32, HarnessError> {
    let cfg = load(&a.common)?;
    let knob: Knob = a.knob.parse()?;
    io.log(&format!("sweeping {} over {:?}", knob.as_str(), a.values));
    let s = harness::sweep(&cfg, knob, &a.values, true)?;
    let mut lost = false;
    let mut rows = Vec::new();
    for c in &s.cells {
        for w in &c.output.warnings {
            io.log(&format!("warning: {}={}: {w}", knob.as_str(), knob.label(c.value)));
        }
        lost |= c.output.any_controller_lost();
        rows.push(json!({ "value": c.value, "dir": c.dir, "summary": harness::summary_json(&c.output) }));
    }
    if a.common.json {
        let _ = writeln!(io.out, "{}", json!({ "knob": knob.as_str(), "cells": rows }));
    } else {
        for c in &s.cells {
            let _ = writeln!(io.out, "{}={} -> {}", knob.as_str(), knob.label(c.value), c.dir.display());
        }
    }
    Ok(if lost { EXIT_DIVERGED } else { EXIT_OK })
}

fn cmd_verify(a: &VerifyArgs, io: &mut Io) -> i32 {
    let mut opts = VerifyOptions {
        only: a.only.clone(),
        ..VerifyOptions::default()
    };
    if let Some(s) = a.seed {
        opts.seed = s;
    }
    run_verify(&opts, io.out, io.err)
}

/// Run the oracle suite and report as `csgd verify` does. Exposed so the
/// report path can be exercised with a substituted rate function.
pub fn run_verify(opts: &VerifyOptions, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let results = match run_suite(opts) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut failed = Vec::new();
    for r in &results {
        let _ = writeln!(out, "{}", serde_json::to_string(r).expect("check result serializes"));
        if !r.passed {
            failed.push(r.check.as_str());
        }
    }
    if failed.is_empty() {
        EXIT_OK
    } else {
        let _ = writeln!(err, "verify failed: {}", failed.join(", "));
        EXIT_VERIFY_FAILED
    }
}

fn cmd_plot(a: &PlotArgs, io: &mut Io) -> Result<i32, HarnessError> {
    let mut curves = read_curves_csv(&a.curves)?;
    if let Some(m) = &a.metric {
        curves.retain(|c| &c.metric == m);
    }
    if curves.is_empty() {
        return Err(HarnessError::Plot("nothing to plot".into()));
    }
    let src_dir = a.curves.parent().map(Path::to_path_buf).unwrap_or_default();
    let restarts_path = src_dir.join("restarts.csv");
    let markers = if restarts_path.exists() {
        figure_restarts_from_rows(&read_restarts_csv(&restarts_path)?, &curves)
    } else {
        io.log("no restarts.csv next to the curves; drawing without restart markers");
        Vec::new()
    };
    let dir = a.out.clone().unwrap_or(src_dir);
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    let scale = if a.log_x { XScale::Log } else { XScale::Linear };
    let title = a
        .curves
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "curves".into());
    let figs = harness::write_figures(&dir, &curves, &markers, &title, scale)?;
    let mut files = Vec::new();
    for (p, r) in &figs {
        if r.clipped > 0 {
            io.log(&format!("warning: {}: {} points clipped at 1e-16", p.display(), r.clipped));
        }
        files.push(p.display().to_string());
    }
    if a.json {
        let _ = writeln!(io.out, "{}", json!({ "figures": files }));
    } else {
        for f in files {
            let _ = writeln!(io.out, "{f}");
        }
    }
    Ok(EXIT_OK)
}

/// Parse `args` (including the program name) and execute.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let quiet = match &cli.command {
        Command::Run(a) => a.common.quiet || a.common.json,
        Command::Compare(a) => a.quiet || a.json,
        Command::Sweep(a) => a.common.quiet || a.common.json,
        Command::Verify(a) => a.quiet,
        Command::Plot(a) => a.quiet || a.json,
    };
    let mut io = Io { out, err, quiet };
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a, &mut io),
        Command::Compare(a) => cmd_compare(a, &mut io),
        Command::Sweep(a) => cmd_sweep(a, &mut io),
        Command::Verify(a) => Ok(cmd_verify(a, &mut io)),
        Command::Plot(a) => cmd_plot(a, &mut io),
    };
    match res {
        Ok(code) => code,
        Err(e) => io.fail(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(std::iter::once("csgd").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn missing_config_is_exit_2() {
        let (code, out, err) = call(&["run", "--config", "/nonexistent/x.toml"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(out.is_empty());
        assert!(err.contains("cannot read config"));
    }

    #[test]
    fn unknown_subcommand_is_exit_2() {
        assert_eq!(call(&["frobnicate"]).0, EXIT_CONFIG);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn verify_only_lemma1() {
        let (code, out, _) = call(&["verify", "--only", "lemma1"]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(v["check"], "lemma1");
        assert_eq!(v["passed"], true);
        assert_eq!(call(&["verify", "--only", "nope"]).0, EXIT_CONFIG);
    }

    #[test]
    fn zero_iterations_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[problem]\nkind = \"least_squares\"\nd = 3\n").unwrap();
        let out_dir = dir.path().join("o");
        let (code, out, _) = call(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--n-iters",
            "0",
            "--out",
            out_dir.to_str().unwrap(),
            "--json",
        ]);
        assert_eq!(code, EXIT_OK, "{out}");
        let t: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("trace.json")).unwrap()).unwrap();
        assert_eq!(t["final_state"]["k"], 0);
        assert!(t["restart_log"].as_array().unwrap().is_empty());
    }
}
