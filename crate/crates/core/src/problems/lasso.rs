//! Sparse regression with an L1 penalty:
//! `f(θ) = (1/n) Σ (yᵢ − ⟨xᵢ,θ⟩)² + λ‖θ‖₁`.

use std::sync::Arc;

use crate::numkit::{dot_slices, power_iteration_extreme_eigs, Vec64, DEFAULT_EIG_TOL};

use super::glm::gradient_variance;
use super::reference::{Provenance, ReferenceSolution};
use super::{
    problem_rng, resolve_h_diag, Constants, Dataset, GramStats, Overrides, ProblemError, ProblemKind,
    ProblemParams, ProblemResult, ProblemSpec,
};

#[derive(Debug, Clone)]
pub struct LassoParams {
    pub lambda: f64,
    pub sparsity: usize,
    pub sigma_noise: f64,
    /// Planted `s`-sparse vector.
    pub theta_tilde: Vec64,
    pub h_diag: Vec64,
}

const PROX_CAP: usize = 500_000;

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn grad_rows(lambda: f64, data: &Dataset, rows: &[usize], theta: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let w = 1.0 / rows.len() as f64;
    for &i in rows {
        let x = data.row(i);
        let c = -2.0 * w * (data.y[i] - dot_slices(x, theta));
        for (o, xj) in out.iter_mut().zip(x) {
            *o += c * xj;
        }
    }
    for (o, t) in out.iter_mut().zip(theta) {
        *o += lambda * sign(*t);
    }
}

fn smooth_gradient(gs: &GramStats, theta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; theta.len()];
    gs.gram.matvec_into(theta, &mut out);
    for (o, c) in out.iter_mut().zip(gs.xty.iter()) {
        *o = 2.0 * (*o - c);
    }
    out
}

pub(crate) fn full_subgradient(lambda: f64, gs: &GramStats, theta: &Vec64) -> Vec64 {
    let mut g = smooth_gradient(gs, theta.as_slice());
    for (o, t) in g.iter_mut().zip(theta.iter()) {
        *o += lambda * sign(*t);
    }
    Vec64::from_vec(g)
}

pub(crate) fn objective(lambda: f64, gs: &GramStats, theta: &Vec64) -> f64 {
    let mut gt = vec![0.0; theta.len()];
    gs.gram.matvec_into(theta.as_slice(), &mut gt);
    dot_slices(theta.as_slice(), &gt) - 2.0 * dot_slices(theta.as_slice(), gs.xty.as_slice())
        + gs.yy
        + lambda * theta.l1_norm()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Proximal gradient descent with step `1/L`; stops on the norm of the
/// gradient mapping.
pub(crate) fn proximal_gradient(lambda: f64, gs: &GramStats) -> ProblemResult<ReferenceSolution> {
    let d = gs.xty.len();
    let lf = 2.0 * power_iteration_extreme_eigs(&gs.gram, DEFAULT_EIG_TOL)?.lambda_max;
    let tol = super::REFERENCE_GRAD_TOL * (2.0 * gs.xty.norm()).max(1.0);
    let mut theta = vec![0.0; d];
    let mut residual = f64::INFINITY;
    for _ in 0..PROX_CAP {
        let g = smooth_gradient(gs, &theta);
        let next: Vec<f64> = theta
            .iter()
            .zip(&g)
            .map(|(t, gi)| soft_threshold(t - gi / lf, lambda / lf))
            .collect();
        residual = lf
            * theta
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        theta = next;
        if residual <= tol {
            let theta = Vec64::from_vec(theta);
            return Ok(ReferenceSolution {
                f_star: objective(lambda, gs, &theta),
                theta,
                provenance: Provenance::HighAccuracySolve,
                grad_norm: residual,
            });
        }
    }
    Err(ProblemError::SolverNonConvergence {
        solver: "lasso proximal gradient",
        iterations: PROX_CAP,
        residual,
    })
}

pub(crate) fn build(d: usize, n: usize, seed: u64, o: &Overrides) -> ProblemResult<ProblemSpec> {
    if n == 0 {
        return Err(ProblemError::NeedsDataset(ProblemKind::Lasso));
    }
    let lambda = o.lambda.unwrap_or(1e-4);
    let sparsity = o.sparsity.unwrap_or(d.min(60));
    let sigma_noise = o.noise_sigma.unwrap_or(1.0);
    if sparsity > d {
        return Err(ProblemError::Infeasible(format!("sparsity {sparsity} exceeds d = {d}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(ProblemError::Infeasible("lambda must be non-negative".into()));
    }
    if !(sigma_noise >= 0.0) || !sigma_noise.is_finite() {
        return Err(ProblemError::Infeasible("noise_sigma must be non-negative".into()));
    }
    let h = resolve_h_diag(d, o)?;

    let mut rng = problem_rng(seed, 0);
    let mut idx: Vec<usize> = (0..d).collect();
    for i in 0..sparsity {
        let j = i + rng.index(d - i);
        idx.swap(i, j);
    }
    let mut theta_tilde = vec![0.0; d];
    for &j in &idx[..sparsity] {
        let v = rng.normal();
        theta_tilde[j] = if v == 0.0 { 1.0 } else { v };
    }

    let mut rng = problem_rng(seed, 1);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        for hj in &h {
            x.push(hj.sqrt() * rng.normal());
        }
        y.push(dot_slices(&x[start..], &theta_tilde) + sigma_noise * rng.normal());
    }
    let data = Dataset::new(d, x, y)?;
    let gs = data.gram_stats();
    let eig = power_iteration_extreme_eigs(&gs.gram, DEFAULT_EIG_TOL)?;
    let reference = proximal_gradient(lambda, &gs)?;
    let sigma_sq = gradient_variance(&data, |xi, yi, g| {
        let c = -2.0 * (yi - dot_slices(xi, reference.theta.as_slice()));
        for (o, xj) in g.iter_mut().zip(xi) {
            *o += c * xj;
        }
    });
    Ok(ProblemSpec {
        kind: ProblemKind::Lasso,
        d,
        n,
        seed,
        constants: Constants {
            l: 2.0 * eig.lambda_max,
            mu: (2.0 * eig.lambda_min).max(0.0),
            sigma_sq,
            r_sq: h.iter().sum(),
        },
        params: ProblemParams::Lasso(LassoParams {
            lambda,
            sparsity,
            sigma_noise,
            theta_tilde: Vec64::from_vec(theta_tilde),
            h_diag: Vec64::from_vec(h),
        }),
        data: Some(Arc::new(data)),
        gram: Some(Arc::new(gs)),
        reference,
        initial_point: Vec64::zeros(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, Batch};

    fn spec_with(lambda: f64, x: Vec<f64>, y: Vec<f64>) -> ProblemSpec {
        let o = Overrides {
            lambda: Some(lambda),
            ..Overrides::default()
        };
        let mut spec = make_problem(ProblemKind::Lasso, 2, 50, 1, &o).unwrap();
        spec.data = Some(Arc::new(Dataset::new(2, x, y).unwrap()));
        spec
    }

    #[test]
    fn zero_residual_at_origin_is_zero() {
        let spec = spec_with(0.5, vec![1.0, 2.0], vec![0.0]);
        let g = spec.gradient(&Vec64::zeros(2), &Batch::rows(vec![0])).unwrap();
        assert_eq!(g.g.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_residual_gives_penalty_sign() {
        // x = (1, 1) and θ = (1, −1) leave a zero residual for y = 0.
        let spec = spec_with(0.5, vec![1.0, 1.0], vec![0.0]);
        let g = spec.gradient(&Vec64::from_vec(vec![1.0, -1.0]), &Batch::rows(vec![0])).unwrap();
        assert_eq!(g.g.as_slice(), &[0.5, -0.5]);
    }

    #[test]
    fn planted_vector_has_exact_sparsity() {
        let o = Overrides {
            sparsity: Some(60),
            ..Overrides::default()
        };
        let spec = make_problem(ProblemKind::Lasso, 100, 2_000, 4, &o).unwrap();
        let ProblemParams::Lasso(p) = &spec.params else { panic!() };
        assert_eq!(p.theta_tilde.iter().filter(|v| **v != 0.0).count(), 60);
        assert_eq!(p.lambda, 1e-4);
    }

    #[test]
    fn oversized_sparsity_is_infeasible() {
        let o = Overrides {
            sparsity: Some(11),
            ..Overrides::default()
        };
        let r = make_problem(ProblemKind::Lasso, 10, 100, 4, &o);
        assert!(matches!(r, Err(ProblemError::Infeasible(_))));
    }
}
