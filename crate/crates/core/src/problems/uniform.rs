//! `f(θ) = ‖θ‖ᵖ/p` with additive `N(0, I)` gradient noise.

use crate::numkit::{RngStream, Vec64};

use super::reference::{Provenance, ReferenceSolution};
use super::{problem_rng, Constants, Overrides, ProblemError, ProblemKind, ProblemParams, ProblemResult, ProblemSpec};

#[derive(Debug, Clone)]
pub struct UniformConvexParams {
    pub p_exp: f64,
    /// Exponent of the matching polynomial schedule, `1 − 2/p`.
    pub tau_exp: f64,
}

pub(crate) fn grad(p_exp: f64, theta: &[f64], xi: &[f64], out: &mut [f64]) {
    let norm_sq: f64 = theta.iter().map(|t| t * t).sum();
    let scale = if norm_sq == 0.0 {
        0.0
    } else {
        norm_sq.powf(0.5 * (p_exp - 2.0))
    };
    for ((o, t), x) in out.iter_mut().zip(theta).zip(xi) {
        *o = scale * t + x;
    }
}

pub(crate) fn draw_noise(d: usize, rng: &mut RngStream, bs: usize) -> Vec64 {
    let mut xi = vec![0.0; d];
    for _ in 0..bs {
        for v in xi.iter_mut() {
            *v += rng.normal();
        }
    }
    if bs > 1 {
        let w = 1.0 / bs as f64;
        xi.iter_mut().for_each(|v| *v *= w);
    }
    Vec64::from_vec(xi)
}

pub(crate) fn build(d: usize, n: usize, seed: u64, o: &Overrides) -> ProblemResult<ProblemSpec> {
    if n != 0 {
        return Err(ProblemError::StreamingOnly(ProblemKind::UniformlyConvex));
    }
    let p_exp = o.p_exp.unwrap_or(2.5);
    if !(p_exp > 2.0) || !p_exp.is_finite() {
        return Err(ProblemError::Infeasible("p_exp must exceed 2".into()));
    }
    let mut rng = problem_rng(seed, 0);
    let initial_point = Vec64::from_vec((0..d).map(|_| rng.normal()).collect());
    let l = (p_exp - 1.0) * (2.0 * initial_point.norm()).powf(p_exp - 2.0);
    Ok(ProblemSpec {
        kind: ProblemKind::UniformlyConvex,
        d,
        n,
        seed,
        constants: Constants {
            l,
            mu: 0.0,
            sigma_sq: d as f64,
            r_sq: 0.0,
        },
        params: ProblemParams::UniformConvex(UniformConvexParams {
            p_exp,
            tau_exp: 1.0 - 2.0 / p_exp,
        }),
        data: None,
        gram: None,
        reference: ReferenceSolution {
            theta: Vec64::zeros(d),
            f_star: 0.0,
            provenance: Provenance::ClosedForm,
            grad_norm: 0.0,
        },
        initial_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, Batch};

    fn spec() -> ProblemSpec {
        make_problem(ProblemKind::UniformlyConvex, 3, 0, 1, &Overrides::default()).unwrap()
    }

    #[test]
    fn origin_without_noise_is_zero() {
        let g = spec().gradient(&Vec64::zeros(3), &Batch::noise(Vec64::zeros(3))).unwrap();
        assert_eq!(g.g.as_slice(), &[0.0; 3]);
    }

    #[test]
    fn unit_vector_is_fixed() {
        let e1 = Vec64::basis(3, 0);
        let g = spec().gradient(&e1, &Batch::noise(Vec64::zeros(3))).unwrap();
        assert_eq!(g.g.as_slice(), e1.as_slice());
    }

    #[test]
    fn reference_is_origin() {
        let s = spec();
        assert_eq!(s.reference.theta.as_slice(), &[0.0; 3]);
        assert_eq!(s.reference.f_star, 0.0);
        let ProblemParams::UniformConvex(p) = &s.params else { panic!() };
        assert!((p.tau_exp - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_small_exponent() {
        let o = Overrides {
            p_exp: Some(2.0),
            ..Overrides::default()
        };
        assert!(make_problem(ProblemKind::UniformlyConvex, 3, 0, 1, &o).is_err());
    }
}
