use serde::{Deserialize, Serialize};

use crate::numkit::Vec64;

use super::{glm, lasso, lsa, svm, ProblemError, ProblemKind, ProblemParams, ProblemResult, ProblemSpec};

/// Stationarity target for the iterative reference solvers, relative to
/// `max(1, ‖∇f(0)‖)`.
pub const REFERENCE_GRAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    HighAccuracySolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub theta: Vec64,
    pub f_star: f64,
    pub provenance: Provenance,
    /// Optimality residual at `theta` (gradient norm, gradient-mapping norm,
    /// duality gap or fixed-point residual depending on the kind).
    pub grad_norm: f64,
}

pub(crate) fn solve(spec: &ProblemSpec) -> ProblemResult<ReferenceSolution> {
    match (&spec.params, spec.kind) {
        (ProblemParams::Glm(p), ProblemKind::LeastSquares) => match &spec.gram {
            Some(gs) => {
                let theta = glm::ls_solve(gs)?;
                Ok(ReferenceSolution {
                    f_star: glm::ls_objective(gs, &theta),
                    grad_norm: glm::ls_full_gradient(gs, &theta).norm(),
                    theta,
                    provenance: Provenance::ClosedForm,
                })
            }
            None => Ok(ReferenceSolution {
                theta: p.theta_star.clone(),
                f_star: 0.5 * p.sigma_noise * p.sigma_noise,
                provenance: Provenance::ClosedForm,
                grad_norm: 0.0,
            }),
        },
        (ProblemParams::Glm(_), _) => {
            let data = spec.data.as_deref().ok_or(ProblemError::NeedsDataset(spec.kind))?;
            glm::logistic_newton(data)
        }
        (ProblemParams::Svm(p), _) => {
            let data = spec.data.as_deref().ok_or(ProblemError::NeedsDataset(spec.kind))?;
            svm::sdca(p.lambda, data, spec.seed)
        }
        (ProblemParams::Lasso(p), _) => {
            let gs = spec.gram.as_deref().ok_or(ProblemError::NeedsDataset(spec.kind))?;
            lasso::proximal_gradient(p.lambda, gs)
        }
        (ProblemParams::UniformConvex(_), _) => Ok(ReferenceSolution {
            theta: Vec64::zeros(spec.d),
            f_star: 0.0,
            provenance: Provenance::ClosedForm,
            grad_norm: 0.0,
        }),
        (ProblemParams::Quadratic(p), _) => p.solve(),
        (ProblemParams::Lsa(p), _) => lsa::solve(p),
    }
}
