//! Linear stochastic approximation driven by a finite Markov chain:
//! `θ ← θ + γ(A(x)θ + b(x))`, solving `Āθ + b̄ = 0` under the stationary law.

use crate::numkit::{dot_slices, power_iteration_extreme_eigs, Mat64, RngStream, Vec64, DEFAULT_EIG_TOL};

use super::quadratic::{random_orthogonal, rotate_spectrum};
use super::reference::{Provenance, ReferenceSolution};
use super::{problem_rng, Constants, Overrides, ProblemError, ProblemKind, ProblemParams, ProblemResult, ProblemSpec};

#[derive(Debug, Clone)]
pub struct LsaParams {
    /// Row-stochastic transition matrix.
    pub p: Mat64,
    pub a_table: Vec<Mat64>,
    pub b_table: Vec<Vec64>,
    pub pi: Vec64,
    pub a_bar: Mat64,
    pub b_bar: Vec64,
    row_cdf: Vec<Vec<f64>>,
    pi_cdf: Vec<f64>,
}

/// Required margin: `sym(Ā) ≺ −MARGIN·I`.
const MARGIN: f64 = 0.1;
const PERTURBATION: f64 = 0.5;

fn cdf(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

impl LsaParams {
    pub fn new(p: Mat64, a_table: Vec<Mat64>, b_table: Vec<Vec64>) -> ProblemResult<Self> {
        let n = p.rows();
        if n == 0 || !p.is_square() || a_table.len() != n || b_table.len() != n {
            return Err(ProblemError::Infeasible("chain tables disagree in size".into()));
        }
        for i in 0..n {
            let row = p.row(i);
            if row.iter().any(|v| !(*v >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(ProblemError::Infeasible(format!("row {i} of P is not stochastic")));
            }
        }
        if !positive_power(&p) {
            return Err(ProblemError::Infeasible("chain is not irreducible and aperiodic".into()));
        }
        let pi = stationary(&p)?;
        let d = b_table[0].len();
        let mut a_bar = Mat64::zeros(d, d);
        let mut b_bar = Vec64::zeros(d);
        for x in 0..n {
            a_bar = a_bar.add(&a_table[x].scale(pi[x]))?;
            b_bar.axpy(pi[x], &b_table[x])?;
        }
        Ok(Self {
            row_cdf: (0..n).map(|i| cdf(p.row(i))).collect(),
            pi_cdf: cdf(pi.as_slice()),
            p,
            a_table,
            b_table,
            pi,
            a_bar,
            b_bar,
        })
    }

    pub fn states(&self) -> usize {
        self.pi.len()
    }

    pub fn next_state(&self, x: usize, rng: &mut RngStream) -> usize {
        pick(&self.row_cdf[x], rng.uniform())
    }

    pub fn sample_stationary(&self, rng: &mut RngStream) -> usize {
        pick(&self.pi_cdf, rng.uniform())
    }

    /// `−(A(x)θ + b(x))`
    pub(crate) fn neg_direction(&self, x: usize, theta: &[f64], out: &mut [f64]) {
        self.a_table[x].matvec_into(theta, out);
        for (o, b) in out.iter_mut().zip(self.b_table[x].iter()) {
            *o = -(*o + b);
        }
    }

    /// `−(Āθ + b̄)`
    pub(crate) fn mean_neg_direction(&self, theta: &Vec64) -> Vec64 {
        let mut out = vec![0.0; theta.len()];
        self.a_bar.matvec_into(theta.as_slice(), &mut out);
        for (o, b) in out.iter_mut().zip(self.b_bar.iter()) {
            *o = -(*o + b);
        }
        Vec64::from_vec(out)
    }
}

/// `P^N` has all-positive entries.
fn positive_power(p: &Mat64) -> bool {
    let mut m = p.clone();
    for _ in 1..p.rows() {
        m = m.matmul(p).expect("square");
    }
    m.as_slice().iter().all(|v| *v > 0.0)
}

/// Solve `πP = π`, `Σπ = 1`.
fn stationary(p: &Mat64) -> ProblemResult<Vec64> {
    let n = p.rows();
    let mut a = p.transpose().scaled_plus_identity(1.0, -1.0);
    for j in 0..n {
        a.set(n - 1, j, 1.0);
    }
    let pi = a.solve(&Vec64::basis(n, n - 1))?;
    Ok(pi)
}

pub(crate) fn solve(p: &LsaParams) -> ProblemResult<ReferenceSolution> {
    let theta = p.a_bar.lu()?.solve(&p.b_bar)?.scale(-1.0)?;
    let residual = p.mean_neg_direction(&theta).norm();
    if residual > 1e-10 * p.b_bar.norm().max(1.0) {
        return Err(ProblemError::SolverNonConvergence {
            solver: "LSA linear solve",
            iterations: 1,
            residual,
        });
    }
    Ok(ReferenceSolution {
        theta,
        f_star: 0.0,
        provenance: Provenance::ClosedForm,
        grad_norm: residual,
    })
}

pub(crate) fn build(d: usize, n: usize, seed: u64, o: &Overrides) -> ProblemResult<ProblemSpec> {
    if n != 0 {
        return Err(ProblemError::StreamingOnly(ProblemKind::Lsa));
    }
    let states = o.chain_states.unwrap_or(8);
    if states == 0 {
        return Err(ProblemError::Infeasible("chain_states must be positive".into()));
    }
    let mut rng = problem_rng(seed, 4);
    let mut p = Mat64::zeros(states, states);
    for i in 0..states {
        let e: Vec<f64> = (0..states).map(|_| rng.exponential()).collect();
        let s: f64 = e.iter().sum();
        for (j, v) in e.iter().enumerate() {
            p.set(i, j, v / s);
        }
    }
    let pi = stationary(&p)?;

    let spectrum: Vec<f64> = (0..d).map(|_| 0.5 + 1.5 * rng.uniform()).collect();
    let m = rotate_spectrum(&random_orthogonal(d, &mut problem_rng(seed, 3)), &spectrum);
    let scale = 1.0 / (d as f64).sqrt();
    let g: Vec<Mat64> = (0..states)
        .map(|_| {
            let v = (0..d * d).map(|_| scale * rng.normal()).collect();
            Mat64::from_row_major(d, d, v).expect("square")
        })
        .collect();
    let mut g_bar = Mat64::zeros(d, d);
    for (x, gx) in g.iter().enumerate() {
        g_bar = g_bar.add(&gx.scale(pi[x]))?;
    }
    let s: Vec<Mat64> = g.iter().map(|gx| gx.add(&g_bar.scale(-1.0))).collect::<Result<_, _>>()?;
    let b_table: Vec<Vec64> = (0..states)
        .map(|_| Vec64::from_vec((0..d).map(|_| rng.normal()).collect()))
        .collect();

    let mut weight = PERTURBATION;
    let params = loop {
        let a_table = s
            .iter()
            .map(|sx| m.add(&sx.scale(weight)).map(|v| v.scale(-1.0)))
            .collect::<Result<Vec<_>, _>>()?;
        let params = LsaParams::new(p.clone(), a_table, b_table.clone())?;
        let top = power_iteration_extreme_eigs(&params.a_bar.sym_part(), DEFAULT_EIG_TOL)?.lambda_max;
        if top < -MARGIN {
            break params;
        }
        weight *= 0.5;
        if weight < 1e-12 {
            return Err(ProblemError::Infeasible("could not make sym(Ā) negative definite".into()));
        }
    };
    let reference = solve(&params)?;
    let constants = lsa_constants(&params, &reference.theta)?;
    Ok(ProblemSpec {
        kind: ProblemKind::Lsa,
        d,
        n,
        seed,
        constants,
        params: ProblemParams::Lsa(params),
        data: None,
        gram: None,
        reference,
        initial_point: Vec64::zeros(d),
    })
}

fn lsa_constants(p: &LsaParams, theta_star: &Vec64) -> ProblemResult<Constants> {
    let mut l: f64 = 0.0;
    let mut sigma_sq = 0.0;
    let d = theta_star.len();
    let mut buf = vec![0.0; d];
    for x in 0..p.states() {
        let ax = &p.a_table[x];
        let ata = ax.transpose().matmul(ax)?;
        l = l.max(power_iteration_extreme_eigs(&ata, DEFAULT_EIG_TOL)?.lambda_max.sqrt());
        p.neg_direction(x, theta_star.as_slice(), &mut buf);
        sigma_sq += p.pi[x] * dot_slices(&buf, &buf);
    }
    let mu = -power_iteration_extreme_eigs(&p.a_bar.sym_part(), DEFAULT_EIG_TOL)?.lambda_max;
    Ok(Constants {
        l,
        mu: mu.min(l),
        sigma_sq,
        r_sq: 0.0,
    })
}

impl ProblemSpec {
    /// An LSA problem from explicit chain tables.
    pub fn lsa(p: Mat64, a_table: Vec<Mat64>, b_table: Vec<Vec64>) -> ProblemResult<ProblemSpec> {
        let params = LsaParams::new(p, a_table, b_table)?;
        let d = params.b_bar.len();
        let reference = solve(&params)?;
        let constants = lsa_constants(&params, &reference.theta)?;
        Ok(ProblemSpec {
            kind: ProblemKind::Lsa,
            d,
            n: 0,
            seed: 0,
            constants,
            params: ProblemParams::Lsa(params),
            data: None,
            gram: None,
            reference,
            initial_point: Vec64::zeros(d),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{lsa_direction, make_problem};

    fn spec() -> ProblemSpec {
        make_problem(ProblemKind::Lsa, 5, 0, 7, &Overrides::default()).unwrap()
    }

    #[test]
    fn stationary_average_vanishes_at_solution() {
        let s = spec();
        let ProblemParams::Lsa(p) = &s.params else { panic!() };
        let mut acc = Vec64::zeros(5);
        let mut rng = RngStream::new(0, 0);
        for x in 0..p.states() {
            let (dir, _) = lsa_direction(&s, &s.reference.theta, x, &mut rng).unwrap();
            acc.axpy(p.pi[x], &dir).unwrap();
        }
        assert!(acc.norm() <= 1e-10, "{}", acc.norm());
    }

    #[test]
    fn chain_is_valid() {
        let s = spec();
        let ProblemParams::Lsa(p) = &s.params else { panic!() };
        assert_eq!(p.states(), 8);
        assert!((p.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let top = power_iteration_extreme_eigs(&p.a_bar.sym_part(), DEFAULT_EIG_TOL)
            .unwrap()
            .lambda_max;
        assert!(top < -0.1);
        assert!(s.constants.mu > 0.1 - 1e-12);
    }

    #[test]
    fn single_state_is_deterministic_recursion() {
        let a = Mat64::from_rows(&[vec![-2.0, 0.5], vec![0.0, -1.0]]).unwrap();
        let b = Vec64::from_vec(vec![1.0, 3.0]);
        let s = ProblemSpec::lsa(Mat64::identity(1), vec![a.clone()], vec![b.clone()]).unwrap();
        let mut rng = RngStream::new(0, 0);
        let mut theta = Vec64::zeros(2);
        for _ in 0..2_000 {
            let (dir, next) = lsa_direction(&s, &theta, 0, &mut rng).unwrap();
            assert_eq!(next, 0);
            theta.axpy(0.1, &dir).unwrap();
        }
        let fixed = a.solve(&b).unwrap().scale(-1.0).unwrap();
        assert!(theta.dist_sq(&fixed).unwrap() < 1e-20);
        assert!(s.reference.theta.dist_sq(&fixed).unwrap() < 1e-24);
    }

    #[test]
    fn invalid_state_is_rejected() {
        let s = spec();
        let mut rng = RngStream::new(0, 0);
        assert!(lsa_direction(&s, &Vec64::zeros(5), 8, &mut rng).is_err());
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let p = Mat64::from_rows(&[vec![0.5, 0.6], vec![0.5, 0.5]]).unwrap();
        let a = vec![Mat64::identity(1).scale(-1.0); 2];
        let b = vec![Vec64::zeros(1); 2];
        assert!(LsaParams::new(p, a, b).is_err());
    }
}
