use csgd::numkit::{RngStream, Vec64};
use csgd::problems::{make_problem, Batch, BatchData, Overrides, ProblemKind, ProblemParams, ProblemSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn build(kind: ProblemKind, d: usize, n: usize, seed: u64) -> ProblemSpec {
    make_problem(kind, d, n, seed, &Overrides::default()).expect("problem builds")
}

fn point(d: usize, rng: &mut RngStream, scale: f64) -> Vec64 {
    Vec64::from_vec((0..d).map(|_| scale * rng.normal()).collect())
}

fn max_abs_diff(a: &Vec64, b: &Vec64) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Averaging the per-row gradient over every row must give the empirical
/// gradient.
fn rows_average_matches_full(spec: &ProblemSpec, theta: &Vec64) -> f64 {
    let n = spec.n;
    let mut acc = Vec64::zeros(spec.d);
    for i in 0..n {
        let g = spec.gradient(theta, &Batch::rows(vec![i])).unwrap().g;
        acc.axpy(1.0 / n as f64, &g).unwrap();
    }
    let full = spec.full_gradient(theta).unwrap();
    max_abs_diff(&acc, &full) / full.norm().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn finite_sum_gradients_are_unbiased(seed in 0u64..1000, d in 1usize..6, which in 0usize..4) {
        let kind = [ProblemKind::Logistic, ProblemKind::LeastSquares, ProblemKind::Svm, ProblemKind::Lasso][which];
        let spec = build(kind, d, 200, seed);
        let mut rng = RngStream::new(seed, 99);
        // Generic points avoid the hinge and sign kinks.
        let theta = point(d, &mut rng, 0.7);
        prop_assert!(rows_average_matches_full(&spec, &theta) < 1e-10);
    }

    #[test]
    fn full_batch_equals_full_gradient(seed in 0u64..1000, d in 1usize..6) {
        let spec = build(ProblemKind::Logistic, d, 150, seed);
        let mut rng = RngStream::new(seed, 5);
        let theta = point(d, &mut rng, 1.0);
        let g = spec.gradient(&theta, &Batch::rows((0..spec.n).collect())).unwrap().g;
        prop_assert!(max_abs_diff(&g, &spec.full_gradient(&theta).unwrap()) < 1e-12);
    }

    #[test]
    fn smooth_objectives_match_finite_differences(seed in 0u64..1000, d in 1usize..5, which in 0usize..4) {
        let kind = [
            ProblemKind::Logistic,
            ProblemKind::LeastSquares,
            ProblemKind::QuadraticSemiStochastic,
            ProblemKind::UniformlyConvex,
        ][which];
        let n = if matches!(kind, ProblemKind::Logistic | ProblemKind::LeastSquares) { 300 } else { 0 };
        let spec = build(kind, d, n, seed);
        let mut rng = RngStream::new(seed, 7);
        let theta = point(d, &mut rng, 1.0);
        let g = spec.full_gradient(&theta).unwrap();
        let h = 1e-5;
        for j in 0..d {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up.as_mut_slice()[j] += h;
            dn.as_mut_slice()[j] -= h;
            let fd = (spec.objective(&up).unwrap() - spec.objective(&dn).unwrap()) / (2.0 * h);
            prop_assert!((fd - g.as_slice()[j]).abs() <= 1e-6 * (1.0 + g.norm()), "coord {j}: fd {fd} vs {}", g.as_slice()[j]);
        }
    }

    #[test]
    fn certified_constants_bound_gradient_differences(seed in 0u64..1000, d in 1usize..6, which in 0usize..3) {
        let kind = [ProblemKind::Logistic, ProblemKind::LeastSquares, ProblemKind::QuadraticSemiStochastic][which];
        let n = if kind == ProblemKind::QuadraticSemiStochastic { 0 } else { 400 };
        let spec = build(kind, d, n, seed);
        let c = spec.constants;
        let mut rng = RngStream::new(seed, 11);
        // Logistic μ is only certified near θ*, so probe a small ball there.
        let center = spec.reference.theta.clone();
        for _ in 0..5 {
            let x = center.add(&point(d, &mut rng, 0.1)).unwrap();
            let y = center.add(&point(d, &mut rng, 0.1)).unwrap();
            let gx = spec.full_gradient(&x).unwrap();
            let gy = spec.full_gradient(&y).unwrap();
            let dx = x.sub(&y).unwrap();
            let dg = gx.sub(&gy).unwrap();
            let slack = 1e-12 * (1.0 + dx.norm_sq());
            prop_assert!(dg.norm() <= c.l * dx.norm() * (1.0 + 1e-9) + slack);
            prop_assert!(dg.dot(&dx).unwrap() >= c.mu * dx.norm_sq() - slack);
        }
    }

    #[test]
    fn streaming_noise_has_zero_mean(seed in 0u64..1000, d in 1usize..4, quad in any::<bool>()) {
        let kind = if quad { ProblemKind::QuadraticSemiStochastic } else { ProblemKind::UniformlyConvex };
        let spec = build(kind, d, 0, seed);
        let mut rng = RngStream::new(seed, 13);
        let theta = point(d, &mut rng, 0.5);
        let full = spec.full_gradient(&theta).unwrap();
        let mut sampler = spec.sampler(&mut rng, 1);
        let m = 20_000;
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for _ in 0..m {
            let b = spec.draw_batch(&mut sampler, &mut rng);
            let g = spec.gradient(&theta, &b).unwrap().g;
            for j in 0..d {
                let e = g.as_slice()[j] - full.as_slice()[j];
                mean[j] += e / m as f64;
                sq[j] += e * e / m as f64;
            }
        }
        for j in 0..d {
            let se = (sq[j] / m as f64).sqrt();
            prop_assert!(mean[j].abs() <= 5.0 * se + 1e-12, "coord {j}: mean {} se {se}", mean[j]);
        }
    }
}

#[test]
fn least_squares_reference_solves_normal_equations() {
    for seed in [1u64, 2, 3] {
        let spec = build(ProblemKind::LeastSquares, 6, 500, seed);
        let data = spec.data.as_ref().expect("finite least squares carries data");
        let x = DMatrix::from_row_slice(data.n, data.d, &data.x);
        let y = DVector::from_column_slice(&data.y);
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let sol = xtx.cholesky().expect("XᵀX is SPD").solve(&xty);
        let ours = spec.reference.theta.as_slice();
        let err = sol.iter().zip(ours).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10 * (1.0 + sol.norm()), "seed {seed}: {err}");
    }
}

#[test]
fn smooth_references_are_stationary() {
    for kind in [ProblemKind::Logistic, ProblemKind::LeastSquares, ProblemKind::UniformlyConvex, ProblemKind::QuadraticSemiStochastic] {
        let n = if matches!(kind, ProblemKind::Logistic | ProblemKind::LeastSquares) { 400 } else { 0 };
        let spec = build(kind, 4, n, 21);
        let g0 = spec.full_gradient(&Vec64::zeros(4)).unwrap().norm().max(1.0);
        let g = spec.full_gradient(&spec.reference.theta).unwrap().norm();
        assert!(g <= 1e-9 * g0, "{kind:?}: {g}");
    }
}

#[test]
fn lsa_chain_occupancy_matches_stationary_law() {
    let spec = build(ProblemKind::Lsa, 3, 0, 4);
    let ProblemParams::Lsa(p) = &spec.params else { unreachable!() };
    let states = p.states();
    let mut rng = RngStream::new(4, 17);
    let mut sampler = spec.sampler(&mut rng, 1);
    let m = 200_000usize;
    let mut counts = vec![0usize; states];
    for _ in 0..m {
        match spec.draw_batch(&mut sampler, &mut rng).data {
            BatchData::ChainState(x) => counts[x] += 1,
            other => panic!("unexpected batch {other:?}"),
        }
    }
    for x in 0..states {
        let freq = counts[x] as f64 / m as f64;
        let pi = p.pi.as_slice()[x];
        // Generous band: the chain is correlated, so the iid standard error
        // understates the spread.
        assert!((freq - pi).abs() < 0.02, "state {x}: {freq} vs {pi}");
    }
}

#[test]
fn lsa_reference_is_a_fixed_point() {
    let spec = build(ProblemKind::Lsa, 4, 0, 8);
    let r = spec.full_gradient(&spec.reference.theta).unwrap().norm();
    assert!(r < 1e-10, "{r}");
}

#[test]
fn same_seed_same_problem() {
    for kind in [ProblemKind::Logistic, ProblemKind::Svm, ProblemKind::Lasso] {
        let a = build(kind, 3, 100, 42);
        let b = build(kind, 3, 100, 42);
        assert_eq!(a.data, b.data);
        assert_eq!(a.reference, b.reference);
        assert_eq!(a.constants, b.constants);
    }
}
