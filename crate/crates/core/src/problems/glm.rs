//! Logistic and least-squares regression on Gaussian inputs `x ~ N(0, H)`
//! with diagonal `H`.

use std::sync::Arc;

use crate::numkit::{dot_slices, power_iteration_extreme_eigs, Mat64, RngStream, Vec64, DEFAULT_EIG_TOL};

use super::reference::{Provenance, ReferenceSolution};
use super::{
    problem_rng, resolve_h_diag, Constants, Dataset, GramStats, Overrides, ProblemError, ProblemKind,
    ProblemParams, ProblemResult, ProblemSpec,
};

#[derive(Debug, Clone)]
pub struct GlmParams {
    pub h_diag: Vec64,
    /// Planted parameter.
    pub theta_star: Vec64,
    /// Least-squares output noise.
    pub sigma_noise: f64,
}

/// Rows of the Hessian subsample used to certify logistic `μ`.
const MU_SUBSAMPLE: usize = 5_000;
/// Random directions probed on the certification ball (each with both signs).
const MU_DIRECTIONS: usize = 4;
/// Safety factor applied to the smallest observed Hessian eigenvalue.
const MU_SAFETY: f64 = 0.5;
const NEWTON_CAP: usize = 100;

impl GlmParams {
    pub(crate) fn draw_samples(&self, kind: ProblemKind, rng: &mut RngStream, bs: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.h_diag.len();
        let mut x = Vec::with_capacity(bs * d);
        let mut y = Vec::with_capacity(bs);
        for _ in 0..bs {
            let start = x.len();
            for j in 0..d {
                x.push(self.h_diag[j].sqrt() * rng.normal());
            }
            y.push(self.label(kind, &x[start..], rng));
        }
        (x, y)
    }

    fn label(&self, kind: ProblemKind, x: &[f64], rng: &mut RngStream) -> f64 {
        let z = dot_slices(x, self.theta_star.as_slice());
        match kind {
            ProblemKind::Logistic => {
                if rng.uniform() < sigmoid(z) {
                    1.0
                } else {
                    -1.0
                }
            }
            _ => z + self.sigma_noise * rng.normal(),
        }
    }

    /// `H(θ − θ*)`
    pub(crate) fn population_ls_gradient(&self, theta: &Vec64) -> Vec64 {
        Vec64::from_vec(
            theta
                .iter()
                .zip(self.theta_star.iter())
                .zip(self.h_diag.iter())
                .map(|((t, s), h)| h * (t - s))
                .collect(),
        )
    }

    pub(crate) fn population_ls_objective(&self, theta: &Vec64) -> f64 {
        let q: f64 = theta
            .iter()
            .zip(self.theta_star.iter())
            .zip(self.h_diag.iter())
            .map(|((t, s), h)| h * (t - s) * (t - s))
            .sum();
        0.5 * q + 0.5 * self.sigma_noise * self.sigma_noise
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(−t))` without overflow.
pub(crate) fn softplus_neg(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// Scalar multiplier `c` such that the per-sample gradient is `c·x`.
#[inline]
fn coef(kind: ProblemKind, z: f64, y: f64) -> f64 {
    match kind {
        // −y·sigmoid(−yz)
        ProblemKind::Logistic => -y * sigmoid(-y * z),
        _ => -(y - z),
    }
}

fn accumulate(kind: ProblemKind, x: &[f64], y: f64, theta: &[f64], w: f64, out: &mut [f64]) {
    let c = w * coef(kind, dot_slices(x, theta), y);
    for (o, xi) in out.iter_mut().zip(x) {
        *o += c * xi;
    }
}

pub(crate) fn grad_rows(kind: ProblemKind, data: &Dataset, rows: &[usize], theta: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let w = 1.0 / rows.len() as f64;
    for &i in rows {
        accumulate(kind, data.row(i), data.y[i], theta, w, out);
    }
}

pub(crate) fn grad_samples(kind: ProblemKind, d: usize, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let w = 1.0 / y.len() as f64;
    for (i, &yi) in y.iter().enumerate() {
        accumulate(kind, &x[i * d..(i + 1) * d], yi, theta, w, out);
    }
}

pub(crate) fn full_gradient_data(kind: ProblemKind, data: &Dataset, theta: &Vec64) -> Vec64 {
    let mut out = vec![0.0; data.d];
    let w = 1.0 / data.n as f64;
    for i in 0..data.n {
        accumulate(kind, data.row(i), data.y[i], theta.as_slice(), w, &mut out);
    }
    Vec64::from_vec(out)
}

pub(crate) fn objective_data(kind: ProblemKind, data: &Dataset, theta: &Vec64) -> f64 {
    let mut s = 0.0;
    for i in 0..data.n {
        let z = dot_slices(data.row(i), theta.as_slice());
        s += match kind {
            ProblemKind::Logistic => softplus_neg(data.y[i] * z),
            _ => 0.5 * (data.y[i] - z) * (data.y[i] - z),
        };
    }
    s / data.n as f64
}

/// `Gθ − c`
pub(crate) fn ls_full_gradient(gs: &GramStats, theta: &Vec64) -> Vec64 {
    let mut out = vec![0.0; theta.len()];
    gs.gram.matvec_into(theta.as_slice(), &mut out);
    for (o, c) in out.iter_mut().zip(gs.xty.iter()) {
        *o -= c;
    }
    Vec64::from_vec(out)
}

/// `½θᵀGθ − θᵀc + ½yy`
pub(crate) fn ls_objective(gs: &GramStats, theta: &Vec64) -> f64 {
    let mut gt = vec![0.0; theta.len()];
    gs.gram.matvec_into(theta.as_slice(), &mut gt);
    0.5 * dot_slices(theta.as_slice(), &gt) - dot_slices(theta.as_slice(), gs.xty.as_slice()) + 0.5 * gs.yy
}

/// Logistic Hessian `(1/m) Σ s(1−s) x xᵀ` over the first `m` rows.
pub(crate) fn logistic_hessian(data: &Dataset, m: usize, theta: &Vec64) -> Mat64 {
    let d = data.d;
    let mut h = vec![0.0; d * d];
    for i in 0..m {
        let x = data.row(i);
        let s = sigmoid(dot_slices(x, theta.as_slice()));
        let w = s * (1.0 - s);
        for a in 0..d {
            let wa = w * x[a];
            let row = &mut h[a * d..(a + 1) * d];
            for b in a..d {
                row[b] += wa * x[b];
            }
        }
    }
    let inv = 1.0 / m as f64;
    for a in 0..d {
        for b in a..d {
            let v = h[a * d + b] * inv;
            h[a * d + b] = v;
            h[b * d + a] = v;
        }
    }
    Mat64::from_row_major(d, d, h).expect("square by construction")
}

/// Damped Newton on the empirical logistic loss.
pub(crate) fn logistic_newton(data: &Dataset) -> ProblemResult<ReferenceSolution> {
    let kind = ProblemKind::Logistic;
    let d = data.d;
    let mut theta = Vec64::zeros(d);
    let tol = super::REFERENCE_GRAD_TOL * full_gradient_data(kind, data, &theta).norm().max(1.0);
    let mut f = objective_data(kind, data, &theta);
    let mut g = full_gradient_data(kind, data, &theta);
    for _ in 0..NEWTON_CAP {
        let gnorm = g.norm();
        if gnorm <= tol {
            return Ok(ReferenceSolution {
                theta,
                f_star: f,
                provenance: Provenance::HighAccuracySolve,
                grad_norm: gnorm,
            });
        }
        let hess = logistic_hessian(data, data.n, &theta);
        let step = hess.cholesky()?.solve(&g)?;
        let slope = -g.dot(&step)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = theta.clone();
            cand.axpy(-t, &step)?;
            let fc = objective_data(kind, data, &cand);
            let gc = full_gradient_data(kind, data, &cand);
            // Near the optimum objective differences drown in rounding, so
            // a gradient decrease is also accepted.
            if fc <= f + 1e-4 * t * slope || gc.norm() < gnorm {
                theta = cand;
                f = fc;
                g = gc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(ProblemError::SolverNonConvergence {
        solver: "logistic Newton",
        iterations: NEWTON_CAP,
        residual: g.norm(),
    })
}

pub(crate) fn ls_solve(gs: &GramStats) -> ProblemResult<Vec64> {
    Ok(gs.gram.cholesky()?.solve(&gs.xty)?)
}

/// Variance of the per-sample gradients (as produced by `per_sample`) over
/// the dataset.
pub(crate) fn gradient_variance(
    data: &Dataset,
    per_sample: impl Fn(&[f64], f64, &mut [f64]),
) -> f64 {
    let d = data.d;
    let mut mean = vec![0.0; d];
    let mut sq = 0.0;
    let mut g = vec![0.0; d];
    for i in 0..data.n {
        g.fill(0.0);
        per_sample(data.row(i), data.y[i], &mut g);
        sq += dot_slices(&g, &g);
        for (m, gi) in mean.iter_mut().zip(&g) {
            *m += gi;
        }
    }
    let n = data.n as f64;
    let mean_sq = dot_slices(&mean, &mean) / (n * n);
    (sq / n - mean_sq).max(0.0)
}

pub(crate) fn generate(
    kind: ProblemKind,
    params: &GlmParams,
    n: usize,
    seed: u64,
) -> Dataset {
    let mut rng = problem_rng(seed, 1);
    let (x, y) = params.draw_samples(kind, &mut rng, n);
    Dataset::new(params.h_diag.len(), x, y).expect("consistent shapes")
}

pub(crate) fn build(kind: ProblemKind, d: usize, n: usize, seed: u64, o: &Overrides) -> ProblemResult<ProblemSpec> {
    let h = resolve_h_diag(d, o)?;
    let sigma_noise = o.noise_sigma.unwrap_or(1.0);
    if !(sigma_noise >= 0.0) || !sigma_noise.is_finite() {
        return Err(ProblemError::Infeasible("noise_sigma must be non-negative".into()));
    }
    let mut rng = problem_rng(seed, 0);
    let theta_star = Vec64::from_vec((0..d).map(|_| rng.normal()).collect());
    let params = GlmParams {
        h_diag: Vec64::from_vec(h.clone()),
        theta_star,
        sigma_noise,
    };
    let r_sq: f64 = h.iter().sum();
    let initial_point = Vec64::zeros(d);

    if n == 0 {
        if kind == ProblemKind::Logistic {
            return Err(ProblemError::NeedsDataset(kind));
        }
        let hmax = h.iter().cloned().fold(f64::MIN, f64::max);
        let hmin = h.iter().cloned().fold(f64::MAX, f64::min);
        let reference = ReferenceSolution {
            theta: params.theta_star.clone(),
            f_star: 0.5 * sigma_noise * sigma_noise,
            provenance: Provenance::ClosedForm,
            grad_norm: 0.0,
        };
        return Ok(ProblemSpec {
            kind,
            d,
            n,
            seed,
            constants: Constants {
                l: hmax,
                mu: hmin,
                sigma_sq: sigma_noise * sigma_noise * r_sq,
                r_sq,
            },
            params: ProblemParams::Glm(params),
            data: None,
            gram: None,
            reference,
            initial_point,
        });
    }

    let data = generate(kind, &params, n, seed);
    let gs = data.gram_stats();
    let eig = power_iteration_extreme_eigs(&gs.gram, DEFAULT_EIG_TOL)?;
    let (reference, constants) = match kind {
        ProblemKind::Logistic => {
            let reference = logistic_newton(&data)?;
            let mu = certify_logistic_mu(&data, &reference.theta, &initial_point, seed)?;
            let sigma_sq = gradient_variance(&data, |x, y, g| {
                accumulate(kind, x, y, reference.theta.as_slice(), 1.0, g)
            });
            let l = eig.lambda_max / 4.0;
            (reference, Constants { l, mu: mu.min(l), sigma_sq, r_sq })
        }
        _ => {
            let theta = ls_solve(&gs)?;
            let grad_norm = ls_full_gradient(&gs, &theta).norm();
            let reference = ReferenceSolution {
                f_star: ls_objective(&gs, &theta),
                theta,
                provenance: Provenance::ClosedForm,
                grad_norm,
            };
            let sigma_sq = gradient_variance(&data, |x, y, g| {
                accumulate(kind, x, y, reference.theta.as_slice(), 1.0, g)
            });
            (
                reference,
                Constants {
                    l: eig.lambda_max,
                    mu: eig.lambda_min.max(0.0),
                    sigma_sq,
                    r_sq,
                },
            )
        }
    };
    Ok(ProblemSpec {
        kind,
        d,
        n,
        seed,
        constants,
        params: ProblemParams::Glm(params),
        data: Some(Arc::new(data)),
        gram: Some(Arc::new(gs)),
        reference,
        initial_point,
    })
}

/// Smallest Hessian eigenvalue over `θ*` and probe points on the sphere of
/// radius `2‖θ₀ − θ*‖` around it, scaled by a safety factor.
fn certify_logistic_mu(data: &Dataset, theta_star: &Vec64, theta0: &Vec64, seed: u64) -> ProblemResult<f64> {
    let m = data.n.min(MU_SUBSAMPLE);
    let radius = 2.0 * theta0.dist_sq(theta_star)?.sqrt();
    let mut points = vec![theta_star.clone()];
    if radius > 0.0 {
        let mut rng = problem_rng(seed, 7);
        for _ in 0..MU_DIRECTIONS {
            let u = Vec64::from_vec((0..data.d).map(|_| rng.normal()).collect());
            let u = u.scale(radius / u.norm())?;
            points.push(theta_star.add(&u)?);
            points.push(theta_star.sub(&u)?);
        }
    }
    let mut mu = f64::INFINITY;
    for p in &points {
        let h = logistic_hessian(data, m, p);
        mu = mu.min(power_iteration_extreme_eigs(&h, DEFAULT_EIG_TOL)?.lambda_min);
    }
    Ok((MU_SAFETY * mu).max(0.0))
}
