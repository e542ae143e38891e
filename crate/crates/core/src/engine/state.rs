use std::collections::VecDeque;

use crate::numkit::{RngStream, Vec64};
use crate::problems::{ProblemResult, ProblemSpec, Sampler};

/// Two SGD iterates driven by the same samples, plus the auxiliary history
/// needed for backward re-initialization.
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub theta1: Vec64,
    pub theta2: Vec64,
    pub k: u64,
    pub d0_sq: f64,
    /// The last `≤ b+1` auxiliary iterates, oldest first.
    pub history: VecDeque<Vec64>,
    pub capacity: usize,
    pub avg1: Option<Vec64>,
    pub sampler: Sampler,
    g1: Vec<f64>,
    g2: Vec<f64>,
}

/// Floor below which the re-armed reference distance counts as degenerate,
/// relative to `max(1, ‖θ1‖²)`.
pub const D0_FLOOR: f64 = 1e-12;

impl CoupledState {
    pub fn new(theta1: Vec64, theta2: Vec64, b: usize, averaging: bool, sampler: Sampler) -> Self {
        let d = theta1.len();
        let mut history = VecDeque::with_capacity(b + 1);
        history.push_back(theta2.clone());
        let d0_sq = theta1.dist_sq(&theta2).unwrap_or(f64::NAN);
        Self {
            avg1: averaging.then(|| theta1.clone()),
            theta1,
            theta2,
            k: 0,
            d0_sq,
            history,
            capacity: b + 1,
            sampler,
            g1: vec![0.0; d],
            g2: vec![0.0; d],
        }
    }

    /// Stochastic gradient of the primary iterate at the last step.
    pub fn last_gradient(&self) -> &[f64] {
        &self.g1
    }

    pub fn is_diverged(&self) -> bool {
        !self.theta1.is_finite() || !self.theta2.is_finite() || self.theta1.norm_sq() > 1e12
    }
}

/// One SGD step for both iterates on a single shared batch.
pub fn coupled_step(state: &mut CoupledState, problem: &ProblemSpec, gamma: f64, rng: &mut RngStream) -> ProblemResult<()> {
    let batch = problem.draw_batch(&mut state.sampler, rng);
    problem.gradient_into(state.theta1.as_slice(), &batch, &mut state.g1)?;
    problem.gradient_into(state.theta2.as_slice(), &batch, &mut state.g2)?;
    for (t, g) in state.theta1.as_mut_slice().iter_mut().zip(&state.g1) {
        *t -= gamma * g;
    }
    for (t, g) in state.theta2.as_mut_slice().iter_mut().zip(&state.g2) {
        *t -= gamma * g;
    }
    if state.history.len() == state.capacity {
        state.history.pop_front();
    }
    state.history.push_back(state.theta2.clone());
    state.k += 1;
    Ok(())
}

/// `θ2 ← θ2_{k−b}` (the oldest stored iterate when fewer are available),
/// then re-arm `D0`. A degenerate `D0` is repaired by perturbing `θ2` around
/// `θ1` at scale `√γ`. Returns the new `D0`.
pub fn reinit_auxiliary(state: &mut CoupledState, gamma: f64, aux: &mut RngStream) -> f64 {
    let back = state.history.front().expect("history is never empty").clone();
    state.theta2 = back;
    let mut d0 = state.theta1.dist_sq(&state.theta2).unwrap_or(f64::NAN);
    let floor = D0_FLOOR * state.theta1.norm_sq().max(1.0);
    if !(d0 >= floor) {
        let s = gamma.sqrt();
        let mut t2 = state.theta1.clone();
        for v in t2.as_mut_slice() {
            *v += s * aux.normal();
        }
        state.theta2 = t2;
        d0 = state.theta1.dist_sq(&state.theta2).unwrap_or(f64::NAN);
    }
    *state.history.back_mut().expect("non-empty") = state.theta2.clone();
    state.d0_sq = d0;
    d0
}

/// `avg ← avg + (θ1 − avg)/k`, the mean of `θ1` over steps `1..=k`.
pub fn update_average(state: &mut CoupledState) {
    let n = state.k.max(1) as f64;
    if let Some(avg) = state.avg1.as_mut() {
        for (a, t) in avg.as_mut_slice().iter_mut().zip(state.theta1.iter()) {
            *a += (t - *a) / n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Mat64;

    fn quad() -> ProblemSpec {
        ProblemSpec::quadratic(Mat64::identity(2), Vec64::zeros(2), 0.0, &[1.0, 1.0]).unwrap()
    }

    fn state(b: usize) -> CoupledState {
        let p = quad();
        let mut rng = RngStream::new(1, 1);
        let sampler = p.sampler(&mut rng, 1);
        CoupledState::new(Vec64::from_vec(vec![1.0, 0.0]), Vec64::from_vec(vec![0.0, 1.0]), b, true, sampler)
    }

    #[test]
    fn zero_step_leaves_iterates() {
        let p = quad();
        let mut s = state(3);
        let (a, b) = (s.theta1.clone(), s.theta2.clone());
        coupled_step(&mut s, &p, 0.0, &mut RngStream::new(2, 2)).unwrap();
        assert_eq!(s.theta1, a);
        assert_eq!(s.theta2, b);
        assert_eq!(s.k, 1);
    }

    #[test]
    fn history_keeps_last_b_plus_one() {
        let p = quad();
        let mut s = state(3);
        let mut rng = RngStream::new(2, 2);
        let mut all = vec![s.theta2.clone()];
        for _ in 0..10 {
            coupled_step(&mut s, &p, 0.1, &mut rng).unwrap();
            all.push(s.theta2.clone());
            let want = &all[all.len().saturating_sub(4)..];
            assert_eq!(s.history.iter().cloned().collect::<Vec<_>>(), want);
        }
    }

    #[test]
    fn b_zero_reinit_is_identity() {
        let p = quad();
        let mut s = state(0);
        coupled_step(&mut s, &p, 0.1, &mut RngStream::new(2, 2)).unwrap();
        let before = s.theta2.clone();
        let d0 = reinit_auxiliary(&mut s, 0.1, &mut RngStream::new(3, 3));
        assert_eq!(s.theta2, before);
        assert_eq!(d0, s.theta1.dist_sq(&s.theta2).unwrap());
    }

    #[test]
    fn short_history_uses_oldest() {
        let p = quad();
        let mut s = state(100);
        let first = s.theta2.clone();
        let mut rng = RngStream::new(2, 2);
        for _ in 0..5 {
            coupled_step(&mut s, &p, 0.1, &mut rng).unwrap();
        }
        reinit_auxiliary(&mut s, 0.1, &mut RngStream::new(3, 3));
        assert_eq!(s.theta2, first);
        assert_eq!(s.history.back().unwrap(), &first);
    }

    #[test]
    fn degenerate_reinit_is_perturbed() {
        let p = quad();
        let mut rng = RngStream::new(1, 1);
        let sampler = p.sampler(&mut rng, 1);
        let v = Vec64::from_vec(vec![0.5, 0.5]);
        let mut s = CoupledState::new(v.clone(), v, 2, false, sampler);
        let d0 = reinit_auxiliary(&mut s, 0.01, &mut RngStream::new(3, 3));
        assert!(d0 > 0.0 && d0.is_finite());
    }

    #[test]
    fn running_mean_matches_brute_force() {
        let p = quad();
        let mut s = state(1);
        let mut rng = RngStream::new(4, 4);
        let mut stored = vec![];
        for _ in 0..1_000 {
            coupled_step(&mut s, &p, 0.05, &mut rng).unwrap();
            update_average(&mut s);
            stored.push(s.theta1.clone());
        }
        let avg = s.avg1.as_ref().unwrap();
        for j in 0..2 {
            let brute: f64 = stored.iter().map(|t| t[j]).sum::<f64>() / stored.len() as f64;
            assert!((avg[j] - brute).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_and_alternating_averages() {
        let p = quad();
        let mut rng = RngStream::new(1, 1);
        let sampler = p.sampler(&mut rng, 1);
        let c = Vec64::from_vec(vec![2.0, -3.0]);
        let mut s = CoupledState::new(c.clone(), c.clone(), 0, true, sampler);
        for _ in 0..7 {
            s.k += 1;
            update_average(&mut s);
            assert_eq!(s.avg1.as_ref().unwrap(), &c);
        }
        let v = Vec64::from_vec(vec![1.0, 0.0]);
        s.k = 0;
        s.theta1 = v.clone();
        s.avg1 = Some(v.clone());
        for k in 1..=10u64 {
            s.k = k;
            s.theta1 = if k % 2 == 0 { v.clone() } else { v.scale(-1.0).unwrap() };
            update_average(&mut s);
            if k % 2 == 0 {
                assert!(s.avg1.as_ref().unwrap().norm() < 1e-15);
            }
        }
    }
}
