//! L2-regularized hinge loss on a noisy linearly separable design.

use std::sync::Arc;

use crate::numkit::{dot_slices, Vec64};

use super::glm::gradient_variance;
use super::reference::{Provenance, ReferenceSolution};
use super::{
    problem_rng, Constants, Dataset, Overrides, ProblemError, ProblemKind, ProblemParams, ProblemResult,
    ProblemSpec,
};

#[derive(Debug, Clone)]
pub struct SvmParams {
    pub lambda: f64,
    pub input_sigma: f64,
}

const SDCA_EPOCHS: usize = 2_000;
const GAP_TARGET: f64 = 1e-12;

#[inline]
fn accumulate(lambda: f64, x: &[f64], y: f64, theta: &[f64], w: f64, out: &mut [f64]) {
    let active = y * dot_slices(x, theta) < 1.0;
    for j in 0..out.len() {
        let mut g = lambda * theta[j];
        if active {
            g -= y * x[j];
        }
        out[j] += w * g;
    }
}

pub(crate) fn grad_rows(lambda: f64, data: &Dataset, rows: &[usize], theta: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let w = 1.0 / rows.len() as f64;
    for &i in rows {
        accumulate(lambda, data.row(i), data.y[i], theta, w, out);
    }
}

pub(crate) fn full_subgradient(lambda: f64, data: &Dataset, theta: &Vec64) -> Vec64 {
    let mut out = vec![0.0; data.d];
    let w = 1.0 / data.n as f64;
    for i in 0..data.n {
        accumulate(lambda, data.row(i), data.y[i], theta.as_slice(), w, &mut out);
    }
    Vec64::from_vec(out)
}

pub(crate) fn objective(lambda: f64, data: &Dataset, theta: &Vec64) -> f64 {
    let mut hinge = 0.0;
    for i in 0..data.n {
        hinge += (1.0 - data.y[i] * dot_slices(data.row(i), theta.as_slice())).max(0.0);
    }
    hinge / data.n as f64 + 0.5 * lambda * theta.norm_sq()
}

/// Stochastic dual coordinate ascent; the duality gap certifies accuracy.
pub(crate) fn sdca(lambda: f64, data: &Dataset, seed: u64) -> ProblemResult<ReferenceSolution> {
    let n = data.n;
    let d = data.d;
    let ln = lambda * n as f64;
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let sq: Vec<f64> = (0..n).map(|i| dot_slices(data.row(i), data.row(i))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = problem_rng(seed, 8);
    let mut gap = f64::INFINITY;
    let mut primal = 0.0;
    for _ in 0..SDCA_EPOCHS {
        for i in (1..n).rev() {
            order.swap(i, rng.index(i + 1));
        }
        for &i in &order {
            if sq[i] == 0.0 {
                alpha[i] = 1.0;
                continue;
            }
            let x = data.row(i);
            let y = data.y[i];
            let margin = y * dot_slices(x, &w);
            let a = (alpha[i] + (1.0 - margin) * ln / sq[i]).clamp(0.0, 1.0);
            let delta = a - alpha[i];
            if delta != 0.0 {
                alpha[i] = a;
                let c = delta * y / ln;
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += c * xj;
                }
            }
        }
        let theta = Vec64::from_vec(w.clone());
        primal = objective(lambda, data, &theta);
        let dual = alpha.iter().sum::<f64>() / n as f64 - 0.5 * lambda * theta.norm_sq();
        gap = primal - dual;
        if gap <= GAP_TARGET * primal.abs().max(1.0) {
            break;
        }
    }
    if gap > super::REFERENCE_GRAD_TOL * primal.abs().max(1.0) {
        return Err(ProblemError::SolverNonConvergence {
            solver: "SVM dual coordinate ascent",
            iterations: SDCA_EPOCHS,
            residual: gap,
        });
    }
    Ok(ReferenceSolution {
        theta: Vec64::from_vec(w),
        f_star: primal,
        provenance: Provenance::HighAccuracySolve,
        grad_norm: gap.max(0.0),
    })
}

pub(crate) fn build(d: usize, n: usize, seed: u64, o: &Overrides) -> ProblemResult<ProblemSpec> {
    if n == 0 {
        return Err(ProblemError::NeedsDataset(ProblemKind::Svm));
    }
    let lambda = o.lambda.unwrap_or(0.1);
    let input_sigma = o.input_sigma.unwrap_or(1.0);
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(ProblemError::Infeasible("lambda must be positive".into()));
    }
    if !(input_sigma > 0.0) || !input_sigma.is_finite() {
        return Err(ProblemError::Infeasible("input_sigma must be positive".into()));
    }
    let mut rng = problem_rng(seed, 1);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        for _ in 0..d {
            x.push(input_sigma * rng.normal());
        }
        let z = input_sigma * rng.normal();
        y.push(if x[start] + z >= 0.0 { 1.0 } else { -1.0 });
    }
    let data = Dataset::new(d, x, y)?;
    let reference = sdca(lambda, &data, seed)?;
    let sigma_sq = gradient_variance(&data, |xi, yi, g| {
        accumulate(lambda, xi, yi, reference.theta.as_slice(), 1.0, g)
    });
    Ok(ProblemSpec {
        kind: ProblemKind::Svm,
        d,
        n,
        seed,
        constants: Constants {
            l: lambda,
            mu: lambda,
            sigma_sq,
            r_sq: d as f64 * input_sigma * input_sigma,
        },
        params: ProblemParams::Svm(SvmParams { lambda, input_sigma }),
        data: Some(Arc::new(data)),
        gram: None,
        reference,
        initial_point: Vec64::zeros(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, Batch};

    fn spec_with(x: Vec<f64>, y: Vec<f64>) -> ProblemSpec {
        let mut spec = make_problem(ProblemKind::Svm, 2, 50, 1, &Overrides::default()).unwrap();
        spec.data = Some(Arc::new(Dataset::new(2, x, y).unwrap()));
        spec
    }

    #[test]
    fn inactive_hinge_gives_ridge_term() {
        let spec = spec_with(vec![1.0, 0.0], vec![1.0]);
        let theta = Vec64::from_vec(vec![2.0, 1.0]);
        let g = spec.gradient(&theta, &Batch::rows(vec![0])).unwrap();
        assert_eq!(g.g.as_slice(), &[0.2, 0.1]);
    }

    #[test]
    fn active_hinge_at_origin() {
        let spec = spec_with(vec![1.0, 0.0], vec![1.0]);
        let g = spec.gradient(&Vec64::zeros(2), &Batch::rows(vec![0])).unwrap();
        assert_eq!(g.g.as_slice(), &[-1.0, 0.0]);
    }

    #[test]
    fn margin_tie_takes_zero_hinge_branch() {
        let spec = spec_with(vec![1.0, 0.0], vec![1.0]);
        let theta = Vec64::from_vec(vec![1.0, 0.0]);
        let g = spec.gradient(&theta, &Batch::rows(vec![0])).unwrap();
        assert_eq!(g.g.as_slice(), &[0.1, 0.0]);
    }

    #[test]
    fn mu_is_lambda() {
        let spec = make_problem(ProblemKind::Svm, 20, 500, 2, &Overrides::default()).unwrap();
        assert_eq!(spec.constants.mu, 0.1);
        assert!(spec.reference.grad_norm <= 1e-10);
    }
}
