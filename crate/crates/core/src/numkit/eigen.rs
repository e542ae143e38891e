//! Extreme eigenpairs of small dense symmetric matrices.
//!
//! `λ_max` comes from power iteration on `M − sI` with `s` the Gershgorin
//! lower bound (clamped at zero), which makes the iterated matrix positive
//! semidefinite. `λ_min` comes from inverse iteration on `M − sI` with `s`
//! a shift strictly below the spectrum; when `M` itself is positive definite
//! the shift is zero. Both stop on the eigen-residual `‖Mv − λv‖`.

use super::vector::dot_slices;
use super::{Mat64, NumError, NumResult, RngStream, Vec64};

pub const DEFAULT_EIG_TOL: f64 = 1e-10;
pub const EIG_ITERATION_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeEigs {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Unit eigenvector of `lambda_max`.
    pub q_max: Vec64,
    /// Unit eigenvector of `lambda_min`.
    pub q_min: Vec64,
    pub iterations: usize,
}

fn start_vector(d: usize) -> Vec<f64> {
    // Fixed pseudo-random start: never structurally orthogonal to an
    // eigenvector the way e₁ or 𝟙 can be.
    let mut rng = RngStream::new(0x5EED_E16E, 0);
    let mut v: Vec<f64> = (0..d).map(|_| 0.5 + rng.uniform()).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot_slices(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

fn residual(m: &Mat64, v: &[f64], lambda: f64, scratch: &mut [f64]) -> f64 {
    m.matvec_into(v, scratch);
    scratch
        .iter()
        .zip(v)
        .map(|(mv, x)| {
            let r = mv - lambda * x;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Shifted inverse iteration from a stalled power-iteration estimate. Some
/// eigenvalue lies within `res` of `lambda`; shifting `2·res` past it on the
/// side of the wanted extreme makes that extreme the one nearest the shift,
/// even when a second eigenvalue sits within the stall gap.
fn refine(m: &Mat64, v: &mut Vec<f64>, lambda: &mut f64, res: &mut f64, upper: bool, target: f64) -> NumResult<()> {
    let mut scratch = vec![0.0; v.len()];
    for _ in 0..200 {
        let off = 2.0 * res.max(target);
        let sigma = if upper { *lambda + off } else { *lambda - off };
        let x = m.scaled_plus_identity(1.0, -sigma).solve(&Vec64::from_vec(v.clone()))?;
        let mut x = x.as_slice().to_vec();
        if normalize(&mut x) == 0.0 || !x.iter().all(|t| t.is_finite()) {
            return Err(NumError::NonFinite("shifted inverse iteration"));
        }
        m.matvec_into(&x, &mut scratch);
        let rq = dot_slices(&x, &scratch);
        let r = residual(m, &x, rq, &mut scratch);
        *v = x;
        *lambda = rq;
        *res = r;
        if r <= target {
            break;
        }
    }
    Ok(())
}

/// Smallest and largest eigenvalues (with unit eigenvectors) of a symmetric
/// matrix, each to residual `‖Mv − λv‖ ≤ tol · scale` where `scale` is the
/// Gershgorin spectral radius bound.
pub fn power_iteration_extreme_eigs(m: &Mat64, tol: f64) -> NumResult<ExtremeEigs> {
    if !m.is_square() {
        return Err(NumError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !m.is_finite() {
        return Err(NumError::NonFinite("eigen input"));
    }
    let d = m.rows();
    let (g_lo, g_hi) = m.gershgorin();
    let scale = g_lo.abs().max(g_hi.abs());
    if d == 0 || scale == 0.0 {
        let q = if d == 0 { Vec64::zeros(0) } else { Vec64::basis(d, 0) };
        return Ok(ExtremeEigs {
            lambda_min: 0.0,
            lambda_max: 0.0,
            q_max: q.clone(),
            q_min: q,
            iterations: 0,
        });
    }
    let target = tol * scale;
    let mut scratch = vec![0.0; d];

    // Largest: power iteration on M − sI, s = min(0, g_lo).
    let shift = g_lo.min(0.0);
    let shifted = m.scaled_plus_identity(1.0, -shift);
    let mut v = start_vector(d);
    let mut w = vec![0.0; d];
    let mut lambda_max = f64::NAN;
    let mut it_max = 0;
    let mut res = f64::INFINITY;
    while it_max < EIG_ITERATION_CAP {
        it_max += 1;
        shifted.matvec_into(&v, &mut w);
        let rq = dot_slices(&v, &w);
        lambda_max = rq + shift;
        res = residual(m, &v, lambda_max, &mut scratch);
        if res <= target {
            break;
        }
        if normalize(&mut w) == 0.0 {
            // v sits in the null space of M − sI: every eigenvalue equals s.
            lambda_max = shift;
            res = 0.0;
            break;
        }
        std::mem::swap(&mut v, &mut w);
    }
    if res > target {
        refine(m, &mut v, &mut lambda_max, &mut res, true, target)?;
    }
    if res > target {
        return Err(NumError::NonConvergence {
            iterations: it_max,
            residual: res,
        });
    }
    let q_max = Vec64::from_vec(v);

    // Smallest: inverse iteration on M − sI, s = 0 if M is PD, else below g_lo.
    let factor = match m.cholesky() {
        Ok(c) => c,
        Err(_) => m
            .scaled_plus_identity(1.0, -(g_lo - scale * 1e-3))
            .cholesky()?,
    };
    let mut v = start_vector(d);
    let mut lambda_min = f64::NAN;
    let mut it_min = 0;
    res = f64::INFINITY;
    while it_min < EIG_ITERATION_CAP {
        it_min += 1;
        lambda_min = {
            m.matvec_into(&v, &mut scratch);
            dot_slices(&v, &scratch)
        };
        res = residual(m, &v, lambda_min, &mut scratch);
        if res <= target {
            break;
        }
        factor.solve_in_place(&mut v);
        if normalize(&mut v) == 0.0 || !v.iter().all(|x| x.is_finite()) {
            return Err(NumError::NonFinite("inverse iteration"));
        }
    }
    if res > target {
        refine(m, &mut v, &mut lambda_min, &mut res, false, target)?;
    }
    if res > target {
        return Err(NumError::NonConvergence {
            iterations: it_min,
            residual: res,
        });
    }

    Ok(ExtremeEigs {
        lambda_min,
        lambda_max,
        q_max,
        q_min: Vec64::from_vec(v),
        iterations: it_max + it_min,
    })
}
