//! CSV persistence for curves and restart events.

use std::path::Path;

use super::aggregate::{AggregateCurve, CurvePoint};
use super::{HarnessError, HarnessResult};

pub const CURVES_HEADER: [&str; 5] = ["iteration", "controller", "metric", "mean", "stderr"];
pub const RESTARTS_HEADER: [&str; 6] = ["controller", "rep", "iteration", "old_gamma", "new_gamma", "statistic"];

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartRow {
    pub controller: String,
    pub rep: usize,
    pub k: u64,
    pub old_gamma: f64,
    pub new_gamma: f64,
    pub statistic: f64,
}

fn io(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn writer(path: &Path) -> HarnessResult<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io(path, e))
}

/// One row per (point, controller, metric), in curve order.
pub fn emit_csv(curves: &[AggregateCurve], path: &Path) -> HarnessResult<()> {
    let mut w = writer(path)?;
    w.write_record(CURVES_HEADER).map_err(|e| io(path, e))?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                p.k.to_string(),
                c.controller.clone(),
                c.metric.clone(),
                fmt_f64(p.mean),
                fmt_f64(p.stderr),
            ])
            .map_err(|e| io(path, e))?;
        }
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn emit_restarts(rows: &[RestartRow], path: &Path) -> HarnessResult<()> {
    let mut w = writer(path)?;
    w.write_record(RESTARTS_HEADER).map_err(|e| io(path, e))?;
    for r in rows {
        w.write_record([
            r.controller.clone(),
            r.rep.to_string(),
            r.k.to_string(),
            fmt_f64(r.old_gamma),
            fmt_f64(r.new_gamma),
            fmt_f64(r.statistic),
        ])
        .map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

fn parse<T: std::str::FromStr>(path: &Path, line: u64, field: &str) -> HarnessResult<T> {
    field
        .parse()
        .map_err(|_| HarnessError::Format(format!("{}:{line}: bad value '{field}'", path.display())))
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> HarnessResult<()> {
    if got.iter().ne(want.iter().copied()) {
        return Err(HarnessError::Format(format!(
            "{}: expected header {}",
            path.display(),
            want.join(",")
        )));
    }
    Ok(())
}

/// Inverse of [`emit_csv`]; consecutive rows with the same controller and
/// metric form one curve.
pub fn read_curves_csv(path: &Path) -> HarnessResult<Vec<AggregateCurve>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    check_header(path, r.headers().map_err(|e| io(path, e))?, &CURVES_HEADER)?;
    let mut out: Vec<AggregateCurve> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))?;
        let line = i as u64 + 2;
        if rec.len() != 5 {
            return Err(HarnessError::Format(format!("{}:{line}: expected 5 fields", path.display())));
        }
        let p = CurvePoint {
            k: parse(path, line, &rec[0])?,
            mean: parse(path, line, &rec[3])?,
            stderr: parse(path, line, &rec[4])?,
        };
        match out.last_mut() {
            Some(c) if c.controller == rec[1] && c.metric == rec[2] => c.points.push(p),
            _ => out.push(AggregateCurve {
                controller: rec[1].to_string(),
                metric: rec[2].to_string(),
                points: vec![p],
            }),
        }
    }
    Ok(out)
}

pub fn read_restarts_csv(path: &Path) -> HarnessResult<Vec<RestartRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    check_header(path, r.headers().map_err(|e| io(path, e))?, &RESTARTS_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))?;
        let line = i as u64 + 2;
        if rec.len() != 6 {
            return Err(HarnessError::Format(format!("{}:{line}: expected 6 fields", path.display())));
        }
        out.push(RestartRow {
            controller: rec[0].to_string(),
            rep: parse(path, line, &rec[1])?,
            k: parse(path, line, &rec[2])?,
            old_gamma: parse(path, line, &rec[3])?,
            new_gamma: parse(path, line, &rec[4])?,
            statistic: parse(path, line, &rec[5])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        emit_csv(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "iteration,controller,metric,mean,stderr\n");
        assert!(read_curves_csv(&p).unwrap().is_empty());
    }

    #[test]
    fn round_trip_and_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let curves = vec![
            AggregateCurve {
                controller: "a,\"b\"".into(),
                metric: "err".into(),
                points: vec![
                    CurvePoint { k: 0, mean: 0.1, stderr: 0.0 },
                    CurvePoint { k: 10, mean: 1e-20, stderr: 3.0e7 },
                ],
            },
            AggregateCurve {
                controller: "a,\"b\"".into(),
                metric: "gamma".into(),
                points: vec![CurvePoint { k: 0, mean: 1.0 / 3.0, stderr: 0.0 }],
            },
        ];
        emit_csv(&curves, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"a,\"\"b\"\"\""));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_curves_csv(&p).unwrap(), curves);
    }

    #[test]
    fn restarts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let rows = vec![RestartRow {
            controller: "x".into(),
            rep: 2,
            k: 44,
            old_gamma: 0.2,
            new_gamma: 0.1,
            statistic: 0.004,
        }];
        emit_restarts(&rows, &p).unwrap();
        assert_eq!(read_restarts_csv(&p).unwrap(), rows);
    }
}
