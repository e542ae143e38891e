//! Synthetic stochastic objectives.
//!
//! A [`ProblemSpec`] owns everything needed to run SGD on one objective: the
//! (optional) materialized dataset, kind-specific parameters, certified
//! constants, the reference solution and the standard starting point. It is
//! immutable after [`make_problem`] and cheap to clone (datasets are shared).
//!
//! Sampling is split in two: [`ProblemSpec::draw_batch`] consumes randomness
//! and yields a [`Batch`]; [`ProblemSpec::gradient`] is a pure function of
//! `(θ, batch)`. Coupled iterates evaluate the same batch.

mod dataset;
mod glm;
mod lasso;
mod lsa;
mod quadratic;
mod reference;
mod svm;
mod uniform;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{NumError, RngStream, Vec64};

pub use dataset::{read_dataset, write_dataset, Dataset, DATASET_MAGIC, DATASET_VERSION};
pub use glm::GlmParams;
pub use lasso::LassoParams;
pub use lsa::LsaParams;
pub use quadratic::QuadraticParams;
pub use reference::{Provenance, ReferenceSolution, REFERENCE_GRAD_TOL};
pub use svm::SvmParams;
pub use uniform::UniformConvexParams;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension must be positive")]
    InvalidDimension,
    #[error("infeasible override: {0}")]
    Infeasible(String),
    #[error("{0:?} needs a materialized dataset (n_data > 0)")]
    NeedsDataset(ProblemKind),
    #[error("{0:?} is streaming-only (n_data must be 0)")]
    StreamingOnly(ProblemKind),
    #[error("operation expects a {expected:?} problem, got {got:?}")]
    WrongKind {
        expected: ProblemKind,
        got: ProblemKind,
    },
    #[error("invalid chain state {state} (chain has {states} states)")]
    InvalidState { state: usize, states: usize },
    #[error("batch does not match problem kind {0:?}")]
    BatchMismatch(ProblemKind),
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    SolverNonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error(transparent)]
    Numeric(#[from] NumError),
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset file: {0}")]
    Format(String),
}

pub type ProblemResult<T> = Result<T, ProblemError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Logistic,
    LeastSquares,
    Svm,
    Lasso,
    UniformlyConvex,
    #[serde(rename = "quadratic")]
    QuadraticSemiStochastic,
    Lsa,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Logistic => "logistic",
            ProblemKind::LeastSquares => "least_squares",
            ProblemKind::Svm => "svm",
            ProblemKind::Lasso => "lasso",
            ProblemKind::UniformlyConvex => "uniformly_convex",
            ProblemKind::QuadraticSemiStochastic => "quadratic",
            ProblemKind::Lsa => "lsa",
        }
    }

    /// Whether the objective is differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, ProblemKind::Svm | ProblemKind::Lasso)
    }
}

/// Certified problem constants.
///
/// `l` is the smoothness constant of the (full or population) objective;
/// for the non-smooth kinds it covers the smooth part only. `mu` is 0 when
/// strong convexity is absent. `sigma_sq` bounds `E‖ε(θ*)‖²` and `r_sq` is
/// the trace of the input covariance (0 for kinds without inputs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub l: f64,
    pub mu: f64,
    pub sigma_sq: f64,
    pub r_sq: f64,
}

/// Kind-specific overrides accepted from configuration. Every field is
/// optional; unset fields take the kind's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Input covariance diagonal (GLM kinds, Lasso) or Hessian spectrum
    /// (quadratic). Defaults to `1/j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_diag: Option<Vec<f64>>,
    /// Output noise (least squares, Lasso) or gradient noise (quadratic)
    /// standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    /// Regularization strength (SVM, Lasso).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Number of non-zeros in the planted Lasso vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<usize>,
    /// SVM input standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_sigma: Option<f64>,
    /// Uniform-convexity exponent `p > 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_exp: Option<f64>,
    /// LSA Markov chain size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_states: Option<usize>,
    /// Rotate the quadratic Hessian by a random orthogonal matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotate: Option<bool>,
}

/// Kind-specific parameters.
#[derive(Debug, Clone)]
pub enum ProblemParams {
    Glm(GlmParams),
    Svm(SvmParams),
    Lasso(LassoParams),
    UniformConvex(UniformConvexParams),
    Quadratic(QuadraticParams),
    Lsa(LsaParams),
}

/// Empirical second moments of a dataset: `G = XᵀX/n`, `c = Xᵀy/n`,
/// `yy = yᵀy/n`.
#[derive(Debug, Clone)]
pub struct GramStats {
    pub gram: crate::numkit::Mat64,
    pub xty: Vec64,
    pub yy: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub d: usize,
    /// Dataset size, 0 for streaming problems.
    pub n: usize,
    pub seed: u64,
    pub constants: Constants,
    pub params: ProblemParams,
    pub data: Option<Arc<Dataset>>,
    pub gram: Option<Arc<GramStats>>,
    pub reference: ReferenceSolution,
    /// Standard starting point for the primary iterate.
    pub initial_point: Vec64,
}

/// Opaque handle identifying the sample/noise consumed by one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BatchToken(pub u128);

/// A drawn minibatch. Gradient evaluation is a pure function of
/// `(θ, batch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub token: BatchToken,
    pub data: BatchData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchData {
    /// Row indices into the materialized dataset.
    Rows(Vec<usize>),
    /// Freshly generated inputs (row-major, `len = batch · d`) and outputs.
    Samples { x: Vec<f64>, y: Vec<f64> },
    /// Additive gradient noise, already batch-averaged.
    Noise(Vec64),
    /// Current Markov chain state.
    ChainState(usize),
}

impl Batch {
    pub fn rows(rows: Vec<usize>) -> Self {
        Self {
            token: BatchToken(0),
            data: BatchData::Rows(rows),
        }
    }

    pub fn samples(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            token: BatchToken(0),
            data: BatchData::Samples { x, y },
        }
    }

    pub fn noise(xi: Vec64) -> Self {
        Self {
            token: BatchToken(0),
            data: BatchData::Noise(xi),
        }
    }

    pub fn chain_state(x: usize) -> Self {
        Self {
            token: BatchToken(0),
            data: BatchData::ChainState(x),
        }
    }
}

/// A stochastic gradient `∇f_k(θ) = ∇f(θ) + ε_k(θ)` together with the
/// batch that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub g: Vec64,
    pub token: BatchToken,
}

/// Per-run sampling state (only LSA carries any).
#[derive(Debug, Clone)]
pub struct Sampler {
    pub batch_size: usize,
    pub chain_state: Option<usize>,
}

pub(crate) const PROBLEM_STREAM_BASE: u64 = 0xD47A_0000;

pub(crate) fn problem_rng(seed: u64, purpose: u64) -> RngStream {
    RngStream::new(seed, PROBLEM_STREAM_BASE + purpose)
}

pub(crate) fn default_h_diag(d: usize) -> Vec<f64> {
    (1..=d).map(|j| 1.0 / j as f64).collect()
}

pub(crate) fn resolve_h_diag(d: usize, o: &Overrides) -> ProblemResult<Vec<f64>> {
    match &o.h_diag {
        None => Ok(default_h_diag(d)),
        Some(h) => {
            if h.len() != d {
                return Err(ProblemError::Infeasible(format!(
                    "h_diag has length {} but d = {d}",
                    h.len()
                )));
            }
            if h.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(ProblemError::Infeasible(
                    "h_diag entries must be positive".into(),
                ));
            }
            Ok(h.clone())
        }
    }
}

/// Assemble a problem: generate data, certify constants, solve for `θ*`.
pub fn make_problem(
    kind: ProblemKind,
    d: usize,
    n: usize,
    seed: u64,
    overrides: &Overrides,
) -> ProblemResult<ProblemSpec> {
    if d == 0 {
        return Err(ProblemError::InvalidDimension);
    }
    match kind {
        ProblemKind::Logistic | ProblemKind::LeastSquares => {
            glm::build(kind, d, n, seed, overrides)
        }
        ProblemKind::Svm => svm::build(d, n, seed, overrides),
        ProblemKind::Lasso => lasso::build(d, n, seed, overrides),
        ProblemKind::UniformlyConvex => uniform::build(d, n, seed, overrides),
        ProblemKind::QuadraticSemiStochastic => quadratic::build(d, n, seed, overrides),
        ProblemKind::Lsa => lsa::build(d, n, seed, overrides),
    }
}

impl ProblemSpec {
    /// Initial per-run sampling state.
    pub fn sampler(&self, rng: &mut RngStream, batch_size: usize) -> Sampler {
        let chain_state = match &self.params {
            ProblemParams::Lsa(p) => Some(p.sample_stationary(rng)),
            _ => None,
        };
        Sampler {
            batch_size: batch_size.max(1),
            chain_state,
        }
    }

    /// Draw the sample/noise for one iteration.
    pub fn draw_batch(&self, sampler: &mut Sampler, rng: &mut RngStream) -> Batch {
        let token = BatchToken(rng.counter());
        let bs = sampler.batch_size;
        let data = match (&self.params, &self.data) {
            (ProblemParams::Lsa(p), _) => {
                let x = sampler.chain_state.unwrap_or(0);
                sampler.chain_state = Some(p.next_state(x, rng));
                BatchData::ChainState(x)
            }
            (ProblemParams::Quadratic(p), _) => BatchData::Noise(p.draw_noise(rng, bs)),
            (ProblemParams::UniformConvex(_), _) => {
                BatchData::Noise(uniform::draw_noise(self.d, rng, bs))
            }
            (_, Some(data)) => BatchData::Rows((0..bs).map(|_| rng.index(data.n)).collect()),
            (ProblemParams::Glm(p), None) => {
                let (x, y) = p.draw_samples(self.kind, rng, bs);
                BatchData::Samples { x, y }
            }
            // Svm and Lasso always carry a dataset.
            (_, None) => BatchData::Rows(Vec::new()),
        };
        Batch { token, data }
    }

    /// Stochastic gradient at `θ` for a drawn batch. For LSA this is the
    /// negated update direction `−(A(x)θ + b(x))`, so every kind updates as
    /// `θ ← θ − γ g`.
    pub fn gradient(&self, theta: &Vec64, batch: &Batch) -> ProblemResult<GradientSample> {
        if theta.len() != self.d {
            return Err(NumError::LengthMismatch {
                left: self.d,
                right: theta.len(),
            }
            .into());
        }
        let mut out = Vec64::zeros(self.d);
        self.gradient_into(theta.as_slice(), batch, out.as_mut_slice())?;
        if !out.is_finite() {
            return Err(NumError::NonFinite("gradient").into());
        }
        Ok(GradientSample {
            g: out,
            token: batch.token,
        })
    }

    /// Unchecked-length gradient into a caller-provided buffer.
    pub fn gradient_into(&self, theta: &[f64], batch: &Batch, out: &mut [f64]) -> ProblemResult<()> {
        let d = self.d;
        match (&self.params, &batch.data) {
            (ProblemParams::Glm(_), BatchData::Rows(rows)) => {
                let data = self.dataset();
                glm::grad_rows(self.kind, data, rows, theta, out);
            }
            (ProblemParams::Glm(_), BatchData::Samples { x, y }) => {
                glm::grad_samples(self.kind, d, x, y, theta, out);
            }
            (ProblemParams::Svm(p), BatchData::Rows(rows)) => {
                svm::grad_rows(p.lambda, self.dataset(), rows, theta, out);
            }
            (ProblemParams::Lasso(p), BatchData::Rows(rows)) => {
                lasso::grad_rows(p.lambda, self.dataset(), rows, theta, out);
            }
            (ProblemParams::UniformConvex(p), BatchData::Noise(xi)) => {
                uniform::grad(p.p_exp, theta, xi.as_slice(), out);
            }
            (ProblemParams::Quadratic(p), BatchData::Noise(xi)) => {
                p.grad(theta, xi.as_slice(), out);
            }
            (ProblemParams::Lsa(p), BatchData::ChainState(x)) => {
                if *x >= p.states() {
                    return Err(ProblemError::InvalidState {
                        state: *x,
                        states: p.states(),
                    });
                }
                p.neg_direction(*x, theta, out);
            }
            _ => return Err(ProblemError::BatchMismatch(self.kind)),
        }
        Ok(())
    }

    fn dataset(&self) -> &Dataset {
        self.data
            .as_deref()
            .expect("row batches are only drawn for problems with a dataset")
    }

    /// Full-batch (empirical) or population gradient `∇f(θ)`; for LSA,
    /// `−(Āθ + b̄)`.
    pub fn full_gradient(&self, theta: &Vec64) -> ProblemResult<Vec64> {
        if theta.len() != self.d {
            return Err(NumError::LengthMismatch {
                left: self.d,
                right: theta.len(),
            }
            .into());
        }
        let g = match &self.params {
            ProblemParams::Glm(p) => match (&self.data, &self.gram) {
                (_, Some(gs)) if self.kind == ProblemKind::LeastSquares => {
                    glm::ls_full_gradient(gs, theta)
                }
                (Some(data), _) => glm::full_gradient_data(self.kind, data, theta),
                (None, _) => p.population_ls_gradient(theta),
            },
            ProblemParams::Svm(p) => svm::full_subgradient(p.lambda, self.dataset(), theta),
            ProblemParams::Lasso(p) => {
                lasso::full_subgradient(p.lambda, self.gram.as_deref().expect("lasso gram"), theta)
            }
            ProblemParams::UniformConvex(p) => {
                let mut out = Vec64::zeros(self.d);
                uniform::grad(p.p_exp, theta.as_slice(), &vec![0.0; self.d], out.as_mut_slice());
                out
            }
            ProblemParams::Quadratic(p) => p.full_gradient(theta),
            ProblemParams::Lsa(p) => p.mean_neg_direction(theta),
        };
        if g.is_finite() {
            Ok(g)
        } else {
            Err(NumError::NonFinite("full gradient").into())
        }
    }

    /// Objective value `f(θ)`; `None` for LSA, which solves a fixed-point
    /// equation rather than minimizing anything.
    pub fn objective(&self, theta: &Vec64) -> Option<f64> {
        match &self.params {
            ProblemParams::Glm(p) => Some(match (&self.data, &self.gram) {
                (_, Some(gs)) if self.kind == ProblemKind::LeastSquares => {
                    glm::ls_objective(gs, theta)
                }
                (Some(data), _) => glm::objective_data(self.kind, data, theta),
                (None, _) => p.population_ls_objective(theta),
            }),
            ProblemParams::Svm(p) => Some(svm::objective(p.lambda, self.dataset(), theta)),
            ProblemParams::Lasso(p) => Some(lasso::objective(
                p.lambda,
                self.gram.as_deref().expect("lasso gram"),
                theta,
            )),
            ProblemParams::UniformConvex(p) => Some(theta.norm().powf(p.p_exp) / p.p_exp),
            ProblemParams::Quadratic(p) => Some(p.objective(theta)),
            ProblemParams::Lsa(_) => None,
        }
    }

    /// `‖θ − θ*‖²`
    pub fn dist_sq_to_opt(&self, theta: &Vec64) -> f64 {
        theta.dist_sq(&self.reference.theta).unwrap_or(f64::INFINITY)
    }

    /// Default initial stepsize for the diagnostic controllers.
    pub fn default_gamma0(&self) -> f64 {
        let c = &self.constants;
        match self.kind {
            ProblemKind::Logistic | ProblemKind::Svm => 4.0 / c.r_sq,
            ProblemKind::LeastSquares | ProblemKind::Lasso => 1.0 / (2.0 * c.r_sq),
            ProblemKind::UniformlyConvex | ProblemKind::Lsa => 1.0 / (4.0 * c.l),
            ProblemKind::QuadraticSemiStochastic => 0.5 / c.l,
        }
    }

    /// Dump the materialized dataset, if any.
    pub fn dump_dataset(&self, path: &std::path::Path) -> ProblemResult<bool> {
        match &self.data {
            Some(d) => {
                write_dataset(path, d)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }
}

macro_rules! kind_grad {
    ($(#[$doc:meta])* $name:ident, $kind:path) => {
        $(#[$doc])*
        pub fn $name(spec: &ProblemSpec, theta: &Vec64, batch: &Batch) -> ProblemResult<GradientSample> {
            if spec.kind != $kind {
                return Err(ProblemError::WrongKind { expected: $kind, got: spec.kind });
            }
            spec.gradient(theta, batch)
        }
    };
}

kind_grad!(
    /// Batch average of `−yᵢxᵢ / (1 + exp(yᵢ⟨xᵢ,θ⟩))`.
    logistic_grad, ProblemKind::Logistic
);
kind_grad!(
    /// Batch average of `−(yᵢ − ⟨xᵢ,θ⟩)xᵢ`.
    least_squares_grad, ProblemKind::LeastSquares
);
kind_grad!(
    /// Per sample `λθ` if `yᵢ⟨xᵢ,θ⟩ ≥ 1` else `λθ − yᵢxᵢ`, batch-averaged.
    svm_subgrad, ProblemKind::Svm
);
kind_grad!(
    /// Batch-averaged `−2(yᵢ − ⟨xᵢ,θ⟩)xᵢ` plus `λ·sign(θ)`, `sign(0) = 0`.
    lasso_subgrad, ProblemKind::Lasso
);
kind_grad!(
    /// `‖θ‖^{p−2}θ + ξ`.
    uniform_convex_grad, ProblemKind::UniformlyConvex
);
kind_grad!(
    /// `Hθ + a + ξ`.
    quadratic_grad, ProblemKind::QuadraticSemiStochastic
);

/// One LSA transition: returns `A(x)θ + b(x)` and the next chain state.
pub fn lsa_direction(
    spec: &ProblemSpec,
    theta: &Vec64,
    chain_state: usize,
    rng: &mut RngStream,
) -> ProblemResult<(Vec64, usize)> {
    let ProblemParams::Lsa(p) = &spec.params else {
        return Err(ProblemError::WrongKind {
            expected: ProblemKind::Lsa,
            got: spec.kind,
        });
    };
    if chain_state >= p.states() {
        return Err(ProblemError::InvalidState {
            state: chain_state,
            states: p.states(),
        });
    }
    let mut out = vec![0.0; spec.d];
    p.neg_direction(chain_state, theta.as_slice(), &mut out);
    let dir = Vec64::from_vec(out.into_iter().map(|v| -v).collect());
    Ok((dir, p.next_state(chain_state, rng)))
}

/// The reference solution, recomputed from scratch.
pub fn solve_reference(spec: &ProblemSpec) -> ProblemResult<ReferenceSolution> {
    reference::solve(spec)
}
