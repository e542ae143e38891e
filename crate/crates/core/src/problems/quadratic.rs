//! Semi-stochastic quadratic `½θᵀHθ + aᵀθ + c` with additive noise `ξ` that
//! does not depend on `θ`.

use crate::numkit::{dot_slices, power_iteration_extreme_eigs, Mat64, RngStream, Vec64, DEFAULT_EIG_TOL};

use super::reference::{Provenance, ReferenceSolution};
use super::{
    problem_rng, resolve_h_diag, Constants, Overrides, ProblemError, ProblemKind, ProblemParams,
    ProblemResult, ProblemSpec,
};

#[derive(Debug, Clone)]
pub struct QuadraticParams {
    pub h: Mat64,
    pub a: Vec64,
    pub c: f64,
    /// Diagonal noise covariance `C`.
    pub noise_cov: Mat64,
    noise_std: Vec<f64>,
}

impl QuadraticParams {
    pub fn new(h: Mat64, a: Vec64, c: f64, noise_var: &[f64]) -> ProblemResult<Self> {
        let d = a.len();
        if h.rows() != d || h.cols() != d || noise_var.len() != d {
            return Err(ProblemError::Infeasible("quadratic shapes disagree".into()));
        }
        if !h.is_symmetric(1e-12 * h.gershgorin().1.abs().max(1.0)) {
            return Err(ProblemError::Infeasible("H must be symmetric".into()));
        }
        if noise_var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(ProblemError::Infeasible("noise variances must be non-negative".into()));
        }
        Ok(Self {
            noise_cov: Mat64::from_diag(noise_var),
            noise_std: noise_var.iter().map(|v| v.sqrt()).collect(),
            h,
            a,
            c,
        })
    }

    pub(crate) fn draw_noise(&self, rng: &mut RngStream, bs: usize) -> Vec64 {
        let mut xi = vec![0.0; self.a.len()];
        for _ in 0..bs {
            for (v, s) in xi.iter_mut().zip(&self.noise_std) {
                *v += s * rng.normal();
            }
        }
        if bs > 1 {
            let w = 1.0 / bs as f64;
            xi.iter_mut().for_each(|v| *v *= w);
        }
        Vec64::from_vec(xi)
    }

    pub(crate) fn grad(&self, theta: &[f64], xi: &[f64], out: &mut [f64]) {
        self.h.matvec_into(theta, out);
        for ((o, a), x) in out.iter_mut().zip(self.a.iter()).zip(xi) {
            *o += a + x;
        }
    }

    pub(crate) fn full_gradient(&self, theta: &Vec64) -> Vec64 {
        let mut out = vec![0.0; theta.len()];
        self.grad(theta.as_slice(), &vec![0.0; theta.len()], &mut out);
        Vec64::from_vec(out)
    }

    pub(crate) fn objective(&self, theta: &Vec64) -> f64 {
        let mut ht = vec![0.0; theta.len()];
        self.h.matvec_into(theta.as_slice(), &mut ht);
        0.5 * dot_slices(theta.as_slice(), &ht) + dot_slices(self.a.as_slice(), theta.as_slice()) + self.c
    }

    /// `θ* = −H⁻¹a`
    pub(crate) fn solve(&self) -> ProblemResult<ReferenceSolution> {
        let theta = self.h.cholesky()?.solve(&self.a)?.scale(-1.0)?;
        Ok(ReferenceSolution {
            f_star: self.objective(&theta),
            grad_norm: self.full_gradient(&theta).norm(),
            theta,
            provenance: Provenance::ClosedForm,
        })
    }
}

/// Orthonormalize a Gaussian matrix (modified Gram–Schmidt, two passes).
pub(crate) fn random_orthogonal(d: usize, rng: &mut RngStream) -> Mat64 {
    let mut cols: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    for i in 0..d {
        for _ in 0..2 {
            for j in 0..i {
                let p = dot_slices(&cols[i], &cols[j]);
                let (head, tail) = cols.split_at_mut(i);
                for (v, q) in tail[0].iter_mut().zip(&head[j]) {
                    *v -= p * q;
                }
            }
        }
        let nrm = dot_slices(&cols[i], &cols[i]).sqrt();
        cols[i].iter_mut().for_each(|v| *v /= nrm);
    }
    let mut q = Mat64::zeros(d, d);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            q.set(i, j, *v);
        }
    }
    q
}

/// `Q diag(λ) Qᵀ`, symmetrized.
pub(crate) fn rotate_spectrum(q: &Mat64, lambda: &[f64]) -> Mat64 {
    let d = lambda.len();
    let mut m = Mat64::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v: f64 = (0..d).map(|k| q.get(i, k) * lambda[k] * q.get(j, k)).sum();
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

pub(crate) fn build(d: usize, n: usize, seed: u64, o: &Overrides) -> ProblemResult<ProblemSpec> {
    if n != 0 {
        return Err(ProblemError::StreamingOnly(ProblemKind::QuadraticSemiStochastic));
    }
    let lambda = resolve_h_diag(d, o)?;
    let sigma = o.noise_sigma.unwrap_or(1.0);
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(ProblemError::Infeasible("noise_sigma must be non-negative".into()));
    }
    let h = if o.rotate.unwrap_or(true) {
        let q = random_orthogonal(d, &mut problem_rng(seed, 3));
        rotate_spectrum(&q, &lambda)
    } else {
        Mat64::from_diag(&lambda)
    };
    let mut rng = problem_rng(seed, 0);
    let a = Vec64::from_vec((0..d).map(|_| rng.normal()).collect());
    let params = QuadraticParams::new(h, a, 0.0, &vec![sigma * sigma; d])?;
    let eig = power_iteration_extreme_eigs(&params.h, DEFAULT_EIG_TOL)?;
    let reference = params.solve()?;
    Ok(ProblemSpec {
        kind: ProblemKind::QuadraticSemiStochastic,
        d,
        n,
        seed,
        constants: Constants {
            l: eig.lambda_max,
            mu: eig.lambda_min.max(0.0),
            sigma_sq: sigma * sigma * d as f64,
            r_sq: params.h.trace(),
        },
        params: ProblemParams::Quadratic(params),
        data: None,
        gram: None,
        reference,
        initial_point: Vec64::zeros(d),
    })
}

impl ProblemSpec {
    /// A quadratic problem with explicit `H`, `a`, `c` and diagonal noise
    /// variances.
    pub fn quadratic(h: Mat64, a: Vec64, c: f64, noise_var: &[f64]) -> ProblemResult<ProblemSpec> {
        let d = a.len();
        if d == 0 {
            return Err(ProblemError::InvalidDimension);
        }
        let params = QuadraticParams::new(h, a, c, noise_var)?;
        let eig = power_iteration_extreme_eigs(&params.h, DEFAULT_EIG_TOL)?;
        if !(eig.lambda_min > 0.0) {
            return Err(ProblemError::Infeasible("H must be positive definite".into()));
        }
        let reference = params.solve()?;
        Ok(ProblemSpec {
            kind: ProblemKind::QuadraticSemiStochastic,
            d,
            n: 0,
            seed: 0,
            constants: Constants {
                l: eig.lambda_max,
                mu: eig.lambda_min,
                sigma_sq: noise_var.iter().sum(),
                r_sq: params.h.trace(),
            },
            params: ProblemParams::Quadratic(params),
            data: None,
            gram: None,
            reference,
            initial_point: Vec64::zeros(d),
        })
    }
}
