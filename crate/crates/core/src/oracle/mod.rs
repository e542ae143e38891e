//! Closed-form rate quantities and brute-force estimators used as ground
//! truth by the verification suite and the acceptance tests.

mod verify;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::numkit::{power_iteration_extreme_eigs, Mat64, NumError, RngStream, Vec64, DEFAULT_EIG_TOL};
use crate::problems::{ProblemError, ProblemSpec};

pub use verify::{
    ar1_check, coupling_identity_error, random_spd, run_suite, theorem1_floor_check, CheckResult, RhoFn, VerifyOptions,
    CHECK_NAMES,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{what} = {value} is outside its admissible range")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("initial difference is orthogonal to the top eigenvector of I − γH")]
    DegenerateDirection,
    #[error("horizon too short: need at least {needed} iterations for the transient to fade")]
    HorizonTooShort { needed: u64 },
    #[error("problem is not strongly convex (μ = {0})")]
    NotStronglyConvex(f64),
    #[error(transparent)]
    Numeric(#[from] NumError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("engine: {0}")]
    Engine(String),
}

pub type OracleResult<T> = Result<T, OracleError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryQuantities {
    pub rho: f64,
    pub varrho: f64,
    pub gamma0: f64,
    pub k0: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Top eigenvector of `I − γH` (the eigenvector of `λ_min(H)`).
    pub q_max: Vec64,
}

impl TheoryQuantities {
    pub fn new(h: &Mat64, gamma: f64) -> OracleResult<Self> {
        let e = power_iteration_extreme_eigs(h, DEFAULT_EIG_TOL)?;
        let (l, mu) = (e.lambda_max, e.lambda_min);
        Ok(Self {
            rho: 1.0 - 2.0 * gamma * mu * (1.0 - gamma * l / 2.0),
            varrho: varrho(gamma, l, mu),
            gamma0: gamma0(l, mu),
            k0: 4.0 * l / mu,
            lambda_min: mu,
            lambda_max: l,
            q_max: e.q_min,
        })
    }
}

/// `ρ = 1 − 2γμ(1 − γL/2)` for `γ ∈ (0, 2/L)`.
pub fn contraction_rate(gamma: f64, mu: f64, l: f64) -> OracleResult<f64> {
    if !(gamma > 0.0 && gamma < 2.0 / l) {
        return Err(OracleError::OutOfRange { what: "gamma", value: gamma });
    }
    Ok(1.0 - 2.0 * gamma * mu * (1.0 - gamma * l / 2.0))
}

/// `ϱ = 1 − 2γL + γ²μ²`
pub fn varrho(gamma: f64, l: f64, mu: f64) -> f64 {
    1.0 - 2.0 * gamma * l + gamma * gamma * mu * mu
}

/// `γ₀ = min{1/(4L), 2L/μ}`
pub fn gamma0(l: f64, mu: f64) -> f64 {
    (1.0 / (4.0 * l)).min(2.0 * l / mu)
}

/// `(λ_min, λ_max, eigenvector of λ_min)` from the full Jacobi decomposition.
pub fn exact_extremes(h: &Mat64) -> OracleResult<(f64, f64, Vec64)> {
    let (vals, vecs) = jacobi_eigen(h)?;
    let (mut lo, mut hi) = (0, 0);
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[lo] {
            lo = i;
        }
        if *v > vals[hi] {
            hi = i;
        }
    }
    let q = Vec64::from_vec((0..h.rows()).map(|r| vecs.get(r, lo)).collect());
    Ok((vals[lo], vals[hi], q))
}

fn check_gamma_below_inv_l(h: &Mat64, gamma: f64) -> OracleResult<()> {
    let l = exact_extremes(h)?.1;
    if !(gamma > 0.0 && gamma * l < 1.0) {
        return Err(OracleError::OutOfRange { what: "gamma", value: gamma });
    }
    Ok(())
}

/// `‖(I − γH)ᵏD₀‖²` for `k = 0..=k_max`, by repeated matvec.
pub fn dk_curve(h: &Mat64, gamma: f64, d0: &Vec64, k_max: usize) -> OracleResult<Vec<f64>> {
    check_gamma_below_inv_l(h, gamma)?;
    if h.rows() != d0.len() {
        return Err(NumError::LengthMismatch { left: h.rows(), right: d0.len() }.into());
    }
    let m = h.scaled_plus_identity(-gamma, 1.0);
    let mut v = d0.as_slice().to_vec();
    let mut next = vec![0.0; v.len()];
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(d0.norm_sq());
    for _ in 0..k_max {
        m.matvec_into(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
        out.push(v.iter().map(|x| x * x).sum());
    }
    Ok(out)
}

/// `D₀ᵀ(I − γH)^{2k}D₀` for symmetric `H` and `γ ∈ (0, 1/L)`.
pub fn dk_closed_form(h: &Mat64, gamma: f64, d0: &Vec64, k: usize) -> OracleResult<f64> {
    Ok(*dk_curve(h, gamma, d0, k)?.last().expect("non-empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub gamma0: f64,
    pub k0: f64,
    /// `max_γ (LHS − RHS)`; the check passes when this is at most 1e-12.
    pub worst_margin: f64,
    pub worst_gamma: f64,
    pub passed: bool,
}

/// Evaluate `(1 − γμ)^{k₀} ≤ 1 − 2γL + γ²μ` on a uniform grid over
/// `[0, γ₀]`.
pub fn lemma1_check(l: f64, mu: f64, grid_size: usize) -> Lemma1Report {
    let g0 = gamma0(l, mu);
    let k0 = 4.0 * l / mu;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_gamma = 0.0;
    let n = grid_size.max(2);
    for i in 0..n {
        let gamma = g0 * i as f64 / (n - 1) as f64;
        let lhs = (1.0 - gamma * mu).powf(k0);
        let rhs = 1.0 - 2.0 * gamma * l + gamma * gamma * mu;
        let margin = lhs - rhs;
        if margin > worst {
            worst = margin;
            worst_gamma = gamma;
        }
    }
    Lemma1Report {
        gamma0: g0,
        k0,
        worst_margin: worst,
        worst_gamma,
        passed: worst <= 1e-12,
    }
}

/// `ϱᵏ` for `γ ∈ (0, γ₀]`.
pub fn theorem1_floor(gamma: f64, l: f64, mu: f64, k: u64) -> OracleResult<f64> {
    if !(gamma > 0.0 && gamma <= gamma0(l, mu)) {
        return Err(OracleError::OutOfRange { what: "gamma", value: gamma });
    }
    Ok(varrho(gamma, l, mu).powf(k as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// `(mean − 3·stderr, mean + 3·stderr)`
    pub ci: (f64, f64),
    pub rep_means: Vec<f64>,
}

/// Stream namespace for the stationary-error chains.
const STATIONARY_STREAM: u64 = 0x57A7_0000;

/// Average of `‖θ − θ*‖²` over the final `tail_frac` of `reps` independent
/// constant-`γ` SGD chains.
pub fn stationary_error_estimate(
    problem: &ProblemSpec,
    gamma: f64,
    horizon: u64,
    tail_frac: f64,
    reps: usize,
    seed: u64,
) -> OracleResult<StationaryEstimate> {
    let c = problem.constants;
    if !(c.mu > 0.0) {
        return Err(OracleError::NotStronglyConvex(c.mu));
    }
    if !(tail_frac > 0.0 && tail_frac <= 1.0) {
        return Err(OracleError::OutOfRange { what: "tail_frac", value: tail_frac });
    }
    if reps == 0 {
        return Err(OracleError::OutOfRange { what: "reps", value: 0.0 });
    }
    let rho = contraction_rate(gamma, c.mu, c.l)?;
    let needed = ((1e-3f64).ln() / rho.ln() / (1.0 - tail_frac)).ceil();
    let needed = if needed.is_finite() { needed as u64 } else { u64::MAX };
    if horizon < needed {
        return Err(OracleError::HorizonTooShort { needed });
    }
    let tail_start = horizon - ((horizon as f64 * tail_frac).round() as u64).max(1);
    let rep_means: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| -> OracleResult<f64> {
            let mut rng = RngStream::new(seed, STATIONARY_STREAM + rep as u64);
            let mut sampler = problem.sampler(&mut rng, 1);
            let mut theta = problem.initial_point.clone();
            let mut g = vec![0.0; problem.d];
            let mut acc = 0.0;
            for k in 1..=horizon {
                let batch = problem.draw_batch(&mut sampler, &mut rng);
                problem.gradient_into(theta.as_slice(), &batch, &mut g)?;
                for (t, gi) in theta.as_mut_slice().iter_mut().zip(&g) {
                    *t -= gamma * gi;
                }
                if k > tail_start {
                    acc += problem.dist_sq_to_opt(&theta);
                }
            }
            Ok(acc / (horizon - tail_start) as f64)
        })
        .collect::<OracleResult<_>>()?;
    let n = reps as f64;
    let mean = rep_means.iter().sum::<f64>() / n;
    let stderr = if reps > 1 {
        (rep_means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(StationaryEstimate {
        mean,
        stderr,
        ci: (mean - 3.0 * stderr, mean + 3.0 * stderr),
        rep_means,
    })
}

/// Stationary `E‖θ − θ*‖²` of SGD on `½h‖θ‖²` with additive `N(0, c²I)`
/// noise: `d·γc²/(2h − γh²)`.
pub fn ar1_stationary_error(d: usize, gamma: f64, h: f64, c: f64) -> f64 {
    d as f64 * gamma * c * c / (2.0 * h - gamma * h * h)
}

/// `dk_closed_form / (D₀ᵀq_max)²`
pub fn proximity_ratio_quadratic(h: &Mat64, gamma: f64, d0: &Vec64, k: usize) -> OracleResult<f64> {
    let q = exact_extremes(h)?.2;
    let proj = d0.dot(&q)?;
    if proj.abs() <= 1e-12 * d0.norm() {
        return Err(OracleError::DegenerateDirection);
    }
    Ok(dk_closed_form(h, gamma, d0, k)? / (proj * proj))
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues and the matching eigenvectors (columns).
pub fn jacobi_eigen(m: &Mat64) -> OracleResult<(Vec<f64>, Mat64)> {
    if !m.is_square() {
        return Err(NumError::NotSquare { rows: m.rows(), cols: m.cols() }.into());
    }
    let n = m.rows();
    let mut a = m.sym_part();
    let mut v = Mat64::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * a.get(i, j))
            .sum();
        let scale: f64 = a.as_slice().iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            let vals = (0..n).map(|i| a.get(i, i)).collect();
            return Ok((vals, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Err(NumError::NonConvergence { iterations: 100, residual: f64::NAN }.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contraction_examples() {
        assert!((contraction_rate(0.1, 1.0, 2.0).unwrap() - 0.82).abs() < 1e-15);
        assert!((contraction_rate(0.5, 0.3, 2.0).unwrap() - (1.0 - 0.3 / 2.0)).abs() < 1e-15);
        assert!(contraction_rate(1e-12, 1.0, 2.0).unwrap() > 1.0 - 1e-11);
        assert!(contraction_rate(1.0, 1.0, 2.0).is_err());
        assert!(contraction_rate(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn dk_examples() {
        let h = Mat64::identity(2);
        let d0 = Vec64::from_vec(vec![2.0, 0.0]);
        assert_eq!(dk_closed_form(&h, 0.1, &d0, 0).unwrap(), 4.0);
        assert!((dk_closed_form(&h, 0.1, &d0, 1).unwrap() - 3.24).abs() < 1e-14);
        assert!(dk_closed_form(&h, 1.0, &d0, 1).is_err());
    }

    #[test]
    fn lemma1_examples() {
        let r = lemma1_check(1.0, 0.1, 10_000);
        assert_eq!(r.gamma0, 0.25);
        assert!(r.passed, "{r:?}");
        let r = lemma1_check(10.0, 10.0, 10_000);
        assert_eq!(r.gamma0, 0.025);
        assert!(r.passed, "{r:?}");
        // The γ = 0 endpoint has both sides equal to one.
        assert!(r.worst_margin >= 0.0 && r.worst_margin <= 1e-12);
    }

    #[test]
    fn theorem1_examples() {
        assert_eq!(theorem1_floor(0.1, 2.0, 1.0, 0).unwrap(), 1.0);
        let (l, mu) = (2.0, 0.5);
        let g = 1.0 / (4.0 * l);
        let v = theorem1_floor(g, l, mu, 1).unwrap();
        assert!((v - (0.5 + mu * mu / (16.0 * l * l))).abs() < 1e-15);
        assert!(theorem1_floor(0.2, l, mu, 1).is_err());
    }

    #[test]
    fn proximity_on_eigendirection() {
        let h = Mat64::from_diag(&[0.5, 1.0, 2.0]);
        let gamma = 0.2;
        let q = Vec64::basis(3, 0);
        let r = proximity_ratio_quadratic(&h, gamma, &q, 7).unwrap();
        assert!((r - (1.0f64 - gamma * 0.5).powi(14)).abs() < 1e-12);
        let perp = Vec64::from_vec(vec![0.0, 1.0, 1.0]);
        assert!(matches!(
            proximity_ratio_quadratic(&h, gamma, &perp, 7),
            Err(OracleError::DegenerateDirection)
        ));
    }

    #[test]
    fn jacobi_reconstructs() {
        let m = Mat64::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 1.0]]).unwrap();
        let (vals, vecs) = jacobi_eigen(&m).unwrap();
        let mut rec = Mat64::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                rec.set(i, j, (0..3).map(|k| vecs.get(i, k) * vals[k] * vecs.get(j, k)).sum());
            }
        }
        for (a, b) in rec.as_slice().iter().zip(m.as_slice()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_noise_stationary_error_vanishes() {
        let p = ProblemSpec::quadratic(Mat64::identity(2), Vec64::from_vec(vec![1.0, -1.0]), 0.0, &[0.0, 0.0])
            .unwrap();
        let e = stationary_error_estimate(&p, 0.1, 2_000, 0.2, 3, 1).unwrap();
        assert!(e.mean < 1e-30, "{e:?}");
    }

    #[test]
    fn horizon_is_checked() {
        let p = ProblemSpec::quadratic(Mat64::identity(2), Vec64::zeros(2), 0.0, &[1.0, 1.0]).unwrap();
        assert!(matches!(
            stationary_error_estimate(&p, 0.01, 100, 0.2, 2, 1),
            Err(OracleError::HorizonTooShort { .. })
        ));
    }
}
