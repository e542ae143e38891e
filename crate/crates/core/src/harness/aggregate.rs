//! Cross-replication reduction of traces into mean/stderr curves.

use serde::{Deserialize, Serialize};

use crate::engine::{RunTrace, TraceRecord};

/// Metric names in output order, with their per-record accessor.
pub const METRICS: [(&str, fn(&TraceRecord) -> Option<f64>); 5] = [
    ("err", |r| Some(r.err)),
    ("f_gap", |r| r.f_gap),
    ("dist_avg", |r| r.dist_avg),
    ("err_avg", |r| r.err_avg),
    ("gamma", |r| Some(r.gamma)),
];

/// Values at or below this are clamped before taking logs.
const GEOMETRIC_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: u64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub controller: String,
    pub metric: String,
    pub points: Vec<CurvePoint>,
}

/// Sample mean and standard error of the mean (0 for a single value).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn on_grid(k: u64, stride: u64, n_iters: u64) -> bool {
    k % stride == 0 || k == n_iters
}

/// Reduce completed traces of one controller. Records off the stride grid
/// (restart records) are ignored. With `geometric`, the mean is
/// `exp(mean(ln x))` and the stderr is that of `ln x`.
pub fn aggregate(controller: &str, traces: &[&RunTrace], stride: u64, n_iters: u64, geometric: bool) -> Vec<AggregateCurve> {
    if traces.is_empty() {
        return Vec::new();
    }
    let grids: Vec<Vec<&TraceRecord>> = traces
        .iter()
        .map(|t| t.records.iter().filter(|r| on_grid(r.k, stride, n_iters)).collect())
        .collect();
    let len = grids.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::new();
    for (name, get) in METRICS {
        let mut points = Vec::with_capacity(len);
        let mut complete = true;
        for i in 0..len {
            let vals: Option<Vec<f64>> = grids.iter().map(|g| get(g[i])).collect();
            let Some(mut vals) = vals else {
                complete = false;
                break;
            };
            let (mean, stderr) = if geometric {
                vals.iter_mut().for_each(|v| *v = v.max(GEOMETRIC_FLOOR).ln());
                let (m, s) = mean_stderr(&vals);
                (m.exp(), s)
            } else {
                mean_stderr(&vals)
            };
            points.push(CurvePoint { k: grids[0][i].k, mean, stderr });
        }
        if complete && len > 0 {
            out.push(AggregateCurve {
                controller: controller.to_string(),
                metric: name.to_string(),
                points,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{RunStatus, StateSummary};

    fn trace(errs: &[(u64, f64)]) -> RunTrace {
        let s = StateSummary {
            k: 0,
            gamma: 0.1,
            phases: 0,
            err: 0.0,
            dist_sq: 0.0,
            dist_avg: None,
        };
        RunTrace {
            controller: "c".into(),
            seed: 0,
            stream: 0,
            status: RunStatus::Completed,
            initial: s.clone(),
            final_state: s,
            restart_log: vec![],
            records: errs
                .iter()
                .map(|&(k, err)| TraceRecord {
                    k,
                    gamma: 0.1,
                    stat: None,
                    dist_sq: 1.0,
                    err,
                    f_gap: None,
                    err_avg: None,
                    dist_avg: None,
                    restart: false,
                })
                .collect(),
        }
    }

    #[test]
    fn single_rep_is_identity() {
        let t = trace(&[(0, 4.0), (7, 9.0), (10, 2.0), (20, 1.0)]);
        let c = aggregate("c", &[&t], 10, 20, false);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].metric, "err");
        let ks: Vec<u64> = c[0].points.iter().map(|p| p.k).collect();
        assert_eq!(ks, vec![0, 10, 20]);
        assert_eq!(c[0].points[1].mean, 2.0);
        assert_eq!(c[0].points[1].stderr, 0.0);
    }

    #[test]
    fn two_reps() {
        let a = trace(&[(0, 1.0), (5, 3.0)]);
        let b = trace(&[(0, 3.0), (5, 3.0)]);
        let c = aggregate("c", &[&a, &b], 5, 5, false);
        assert_eq!(c[0].points[0].mean, 2.0);
        assert!((c[0].points[0].stderr - 1.0).abs() < 1e-15);
        let g = aggregate("c", &[&a, &b], 5, 5, true);
        assert!((g[0].points[0].mean - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn no_traces_no_curves() {
        assert!(aggregate("c", &[], 1, 1, false).is_empty());
    }
}
