//! The self-contained oracle suite behind `csgd verify`.

use serde::Serialize;
use serde_json::{json, Value};

use crate::controllers::{ControllerKind, ControllerParams, Schedule};
use crate::engine::{coupled_step, run, CoupledState, RunConfig};
use crate::numkit::{Mat64, RngStream, Vec64};
use crate::problems::{make_problem, Overrides, ProblemKind, ProblemSpec};

use super::{
    ar1_stationary_error, contraction_rate, dk_curve, gamma0, jacobi_eigen, lemma1_check, proximity_ratio_quadratic,
    stationary_error_estimate, OracleError, OracleResult,
};

/// `(γ, L, μ) ↦ ϱ`
pub type RhoFn = fn(f64, f64, f64) -> f64;

pub const CHECK_NAMES: [&str; 8] = [
    "contraction_rate",
    "dk_closed_form",
    "coupling_identity",
    "sandwich",
    "lemma1",
    "theorem1_floor",
    "proximity_ratio",
    "stationary_ar1",
];

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub only: Option<Vec<String>>,
    pub seed: u64,
    pub rho: RhoFn,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            only: None,
            seed: 20_240_601,
            rho: super::varrho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub passed: bool,
    pub detail: Value,
}

/// Run the selected checks in a fixed order. Unknown names are rejected.
pub fn run_suite(opts: &VerifyOptions) -> Result<Vec<CheckResult>, String> {
    if let Some(only) = &opts.only {
        for name in only {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(format!("unknown check '{name}' (known: {})", CHECK_NAMES.join(", ")));
            }
        }
    }
    let mut out = Vec::new();
    for name in CHECK_NAMES {
        if let Some(only) = &opts.only {
            if !only.iter().any(|o| o == name) {
                continue;
            }
        }
        let res = match name {
            "contraction_rate" => check_contraction(),
            "dk_closed_form" => check_dk(opts.seed),
            "coupling_identity" => check_coupling_identity(opts.seed),
            "sandwich" => check_sandwich(opts.seed),
            "lemma1" => check_lemma1(opts.seed),
            "theorem1_floor" => check_theorem1(opts.seed, opts.rho),
            "proximity_ratio" => check_proximity(opts.seed),
            "stationary_ar1" => check_ar1(opts.seed),
            _ => unreachable!(),
        };
        let (passed, detail) = match res {
            Ok(v) => v,
            Err(e) => (false, json!({ "error": e.to_string() })),
        };
        out.push(CheckResult {
            check: name.to_string(),
            passed,
            detail,
        });
    }
    Ok(out)
}

type Check = OracleResult<(bool, Value)>;

/// Random symmetric positive definite matrix with spectrum in `[lo, hi]`.
pub fn random_spd(d: usize, lo: f64, hi: f64, rng: &mut RngStream) -> OracleResult<Mat64> {
    let h: Vec<f64> = (0..d).map(|_| lo + (hi - lo) * rng.uniform()).collect();
    let o = Overrides {
        h_diag: Some(h),
        rotate: Some(true),
        ..Overrides::default()
    };
    let spec = make_problem(ProblemKind::QuadraticSemiStochastic, d, 0, rng.next_u64(), &o)?;
    match spec.params {
        crate::problems::ProblemParams::Quadratic(p) => Ok(p.h),
        _ => unreachable!(),
    }
}

fn random_vec(d: usize, rng: &mut RngStream) -> Vec64 {
    Vec64::from_vec((0..d).map(|_| rng.normal()).collect())
}

fn check_contraction() -> Check {
    let ex = contraction_rate(0.1, 1.0, 2.0)?;
    let (mu, l) = (0.3, 2.0);
    let n = 20_000;
    let cell = 2.0 / l / n as f64;
    let mut best = (f64::INFINITY, 0.0);
    let mut all_below_one = true;
    for i in 1..n {
        let g = i as f64 * cell;
        let r = contraction_rate(g, mu, l)?;
        all_below_one &= r < 1.0;
        if r < best.0 {
            best = (r, g);
        }
    }
    let argmin_ok = (best.1 - 1.0 / l).abs() <= cell;
    let example_ok = (ex - 0.82).abs() < 1e-15;
    Ok((
        example_ok && all_below_one && argmin_ok,
        json!({ "example": ex, "argmin": best.1, "expected_argmin": 1.0 / l, "all_below_one": all_below_one }),
    ))
}

fn check_dk(seed: u64) -> Check {
    let mut rng = RngStream::new(seed, 1);
    let h = random_spd(5, 0.1, 1.0, &mut rng)?;
    let (vals, vecs) = jacobi_eigen(&h)?;
    let l = vals.iter().cloned().fold(f64::MIN, f64::max);
    let gamma = 0.5 / l;
    let d0 = random_vec(5, &mut rng);
    let k = 20;
    let closed = dk_curve(&h, gamma, &d0, k)?[k];
    let mut spectral = 0.0;
    for j in 0..5 {
        let proj: f64 = (0..5).map(|i| vecs.get(i, j) * d0[i]).sum();
        spectral += (1.0 - gamma * vals[j]).powi(2 * k as i32) * proj * proj;
    }
    let rel = (closed - spectral).abs() / spectral;
    let iso = dk_curve(&Mat64::identity(2), 0.1, &Vec64::from_vec(vec![2.0, 0.0]), 1)?;
    let ok = rel <= 1e-10 && iso[0] == 4.0 && (iso[1] - 3.24).abs() < 1e-14;
    Ok((ok, json!({ "k": k, "closed_form": closed, "spectral": spectral, "rel_err": rel })))
}

/// Largest relative deviation between the engine's `‖D_k‖²` and the closed
/// form on a random quadratic, over `k ≤ k_max`.
pub fn coupling_identity_error(seed: u64, d: usize, k_max: usize, gamma_l: f64) -> OracleResult<f64> {
    let mut rng = RngStream::new(seed, 2);
    let h = random_spd(d, 0.1, 1.0, &mut rng)?;
    let a = random_vec(d, &mut rng);
    let problem = ProblemSpec::quadratic(h.clone(), a, 0.0, &vec![1.0; d])?;
    let gamma = gamma_l / problem.constants.l;
    let theta1 = random_vec(d, &mut rng);
    let theta2 = theta1.add(&random_vec(d, &mut rng))?;
    let d0 = theta1.sub(&theta2)?;
    let curve = dk_curve(&h, gamma, &d0, k_max)?;
    let mut run_rng = RngStream::new(seed, 3);
    let sampler = problem.sampler(&mut run_rng, 1);
    let mut state = CoupledState::new(theta1, theta2, 0, false, sampler);
    let mut worst: f64 = 0.0;
    for expected in curve.iter().skip(1) {
        coupled_step(&mut state, &problem, gamma, &mut run_rng)?;
        let measured = state.theta1.dist_sq(&state.theta2)?;
        worst = worst.max((measured - expected).abs() / expected);
    }
    Ok(worst)
}

fn check_coupling_identity(seed: u64) -> Check {
    let worst = coupling_identity_error(seed, 5, 1_000, 0.01)?;
    Ok((worst <= 1e-10, json!({ "k_max": 1000, "max_rel_err": worst })))
}

fn check_sandwich(seed: u64) -> Check {
    let mut rng = RngStream::new(seed, 4);
    let mut violations = 0u64;
    let mut evaluated = 0u64;
    let mut first = None;
    let mut skipped = 0u64;
    for _ in 0..20 {
        let h = random_spd(5, 0.1, 1.0, &mut rng)?;
        let (lmin, lmax, _) = super::exact_extremes(&h)?;
        let d0 = random_vec(5, &mut rng);
        let n0 = d0.norm_sq();
        for f in [0.1, 0.5, 0.9] {
            let gamma = f / lmax;
            let curve = dk_curve(&h, gamma, &d0, 1_000)?;
            for (k, dk) in curve.iter().enumerate() {
                // Past this the bounds themselves underflow.
                if *dk < 1e-250 {
                    skipped += 1;
                    continue;
                }
                let lo = (1.0 - gamma * lmax).powi(2 * k as i32) * n0;
                let hi = (1.0 - gamma * lmin).powi(2 * k as i32) * n0;
                evaluated += 1;
                if !(lo <= *dk && *dk <= hi) {
                    violations += 1;
                    if first.is_none() {
                        first = Some(json!({ "k": k, "gamma": gamma, "lo": lo, "dk": dk, "hi": hi }));
                    }
                }
            }
        }
    }
    Ok((violations == 0, json!({ "evaluated": evaluated, "violations": violations, "underflow_skipped": skipped, "first_violation": first })))
}

fn check_lemma1(seed: u64) -> Check {
    let mut rng = RngStream::new(seed, 5);
    let mut worst = f64::NEG_INFINITY;
    let mut all = true;
    let mut pairs = vec![(1.0, 0.1), (10.0, 10.0)];
    for _ in 0..20 {
        let l = 10f64.powf(-2.0 + 5.0 * rng.uniform()).min(1e3);
        let mu = l * rng.uniform_open0();
        pairs.push((l, mu));
    }
    for (l, mu) in pairs {
        let r = lemma1_check(l, mu, 10_000);
        all &= r.passed;
        worst = worst.max(r.worst_margin);
    }
    Ok((all, json!({ "pairs": 22, "worst_margin": worst })))
}

/// Replication mean and standard error of `‖D_k‖²` on logistic regression
/// at `γ = 1/(8L)`, checked against `ϱᵏ · mean ‖D₀‖²` minus three standard
/// errors at every recorded iteration.
pub fn theorem1_floor_check(
    seed: u64,
    n_data: usize,
    reps: usize,
    k_max: u64,
    stride: u64,
    rho: RhoFn,
) -> OracleResult<(bool, Value)> {
    let problem = make_problem(ProblemKind::Logistic, 5, n_data, seed, &Overrides::default())?;
    let (l, mu) = (problem.constants.l, problem.constants.mu);
    let gamma = 1.0 / (8.0 * l);
    let ctl = ControllerParams::new(
        ControllerKind::FixedSchedule {
            schedule: Schedule::Constant { gamma },
        },
        gamma,
    );
    use rayon::prelude::*;
    let traces = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let cfg = RunConfig {
                n_iters: k_max,
                record_stride: stride,
                seed,
                stream: rep,
                ..RunConfig::default()
            };
            run(&problem, &ctl, &cfg).map_err(|e| OracleError::Engine(e.to_string()))
        })
        .collect::<OracleResult<Vec<_>>>()?;
    let n_rec = traces[0].records.len();
    let r = reps as f64;
    let d0_mean = traces.iter().map(|t| t.records[0].dist_sq).sum::<f64>() / r;
    let varrho = rho(gamma, l, mu);
    let mut worst_slack = f64::INFINITY;
    let mut failures = Vec::new();
    for i in 0..n_rec {
        let k = traces[0].records[i].k;
        let vals: Vec<f64> = traces.iter().map(|t| t.records[i].dist_sq).collect();
        let mean = vals.iter().sum::<f64>() / r;
        let se = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0) / r).sqrt();
        let floor = varrho.powf(k as f64) * d0_mean;
        let slack = mean + 3.0 * se - floor;
        worst_slack = worst_slack.min(slack);
        if !(slack >= 0.0) {
            failures.push(k);
        }
    }
    // The proof chains ϱ ≥ (1 − γμ)^{4L/μ} for γ ≤ γ₀.
    let g0 = gamma0(l, mu);
    let mut chain_ok = true;
    for i in 1..=1_000 {
        let g = g0 * i as f64 / 1_000.0;
        chain_ok &= rho(g, l, mu) >= (1.0 - g * mu).powf(4.0 * l / mu);
    }
    let ok = failures.is_empty() && chain_ok && gamma <= g0;
    Ok((
        ok,
        json!({
            "gamma": gamma, "L": l, "mu": mu, "varrho": varrho, "reps": reps,
            "records": n_rec, "worst_slack": worst_slack,
            "failing_k": failures.iter().take(10).collect::<Vec<_>>(), "chaining_holds": chain_ok,
        }),
    ))
}

fn check_theorem1(seed: u64, rho: RhoFn) -> Check {
    theorem1_floor_check(seed, 20_000, 50, 10_000, 100, rho)
}

fn check_proximity(seed: u64) -> Check {
    let mut rng = RngStream::new(seed, 6);
    let mut ok = true;
    let mut worst_rel = 0.0f64;
    for _ in 0..10 {
        let h = random_spd(4, 0.1, 1.0, &mut rng)?;
        let (lmin, lmax, q) = super::exact_extremes(&h)?;
        let gamma = 0.5 / lmax;
        let k = 50;
        let base = (1.0 - gamma * lmin).powi(2 * k as i32);
        let on = proximity_ratio_quadratic(&h, gamma, &q, k)?;
        worst_rel = worst_rel.max((on - base).abs() / base);
        let d0 = random_vec(4, &mut rng);
        ok &= proximity_ratio_quadratic(&h, gamma, &d0, k)? >= base * (1.0 - 1e-9);
    }
    let perp = matches!(
        proximity_ratio_quadratic(&Mat64::from_diag(&[0.5, 1.0]), 0.5, &Vec64::basis(2, 1), 3),
        Err(OracleError::DegenerateDirection)
    );
    Ok((ok && perp && worst_rel < 1e-8, json!({ "eigendirection_rel_err": worst_rel, "orthogonal_rejected": perp })))
}

/// AR(1) comparison at `γ ∈ {0.01, 0.005}/h`.
pub fn ar1_check(seed: u64, d: usize, h: f64, c: f64, horizon: u64, reps: usize) -> OracleResult<(bool, Value)> {
    let o = Overrides {
        h_diag: Some(vec![h; d]),
        rotate: Some(false),
        noise_sigma: Some(c),
        ..Overrides::default()
    };
    let problem = make_problem(ProblemKind::QuadraticSemiStochastic, d, 0, seed, &o)?;
    let mut rows = Vec::new();
    let mut ok = true;
    let mut per_gamma = Vec::new();
    for f in [0.01, 0.005] {
        let gamma = f / h;
        let est = stationary_error_estimate(&problem, gamma, horizon, 0.2, reps, seed)?;
        let exact = ar1_stationary_error(d, gamma, h, c);
        let inside = est.ci.0 <= exact && exact <= est.ci.1;
        ok &= inside;
        per_gamma.push(est.mean / gamma);
        rows.push(json!({ "gamma": gamma, "estimate": est.mean, "stderr": est.stderr, "closed_form": exact, "inside_ci": inside }));
    }
    let ratio = per_gamma[0] / per_gamma[1];
    let linear = (ratio - 1.0).abs() <= 0.25;
    Ok((ok && linear, json!({ "points": rows, "slope_ratio": ratio })))
}

fn check_ar1(seed: u64) -> Check {
    ar1_check(seed, 2, 1.0, 1.0, 200_000, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_check_is_rejected() {
        let o = VerifyOptions {
            only: Some(vec!["nope".into()]),
            ..VerifyOptions::default()
        };
        assert!(run_suite(&o).is_err());
    }

    #[test]
    fn only_filters() {
        let o = VerifyOptions {
            only: Some(vec!["lemma1".into()]),
            ..VerifyOptions::default()
        };
        let r = run_suite(&o).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].check, "lemma1");
        assert!(r[0].passed);
    }

    #[test]
    fn flipped_rho_fails_theorem1() {
        fn flipped(g: f64, l: f64, mu: f64) -> f64 {
            1.0 + 2.0 * g * l + g * g * mu * mu
        }
        let (ok, _) = theorem1_floor_check(5, 5_000, 20, 2_000, 100, flipped).unwrap();
        assert!(!ok);
        let (ok, detail) = theorem1_floor_check(5, 5_000, 20, 2_000, 100, crate::oracle::varrho).unwrap();
        assert!(ok, "{detail}");
    }
}
