mod oracles;
mod support;

use ibbt::belief::{dominates, kalman_step, propagate_covariances, propagate_edge, PropagationContext};
use ibbt::dynamics::connect;
use ibbt::environment::SamplePool;
use ibbt::linalg::{frobenius, min_eigenvalue};
use ibbt::{BeliefNode, ChanceConfig, LtvStep, ModelSpec};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use oracles::kalman_reference;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{closed_loop_covariance_errors, di, edge, open_scenario, twenty_step_edge};
use rand_distr::{Distribution, StandardNormal};

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v) * scale)
}

fn psd(n: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n, 1.0).prop_map(move |m| &m * m.transpose() * scale)
}

#[derive(Debug, Clone)]
struct Instance {
    step: LtvStep,
    d: DMatrix<f64>,
    k: DMatrix<f64>,
    p_hat: DMatrix<f64>,
    p_tilde: DMatrix<f64>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (3usize..=4).prop_flat_map(|n| {
        (1usize..=n, 1usize..=2).prop_flat_map(move |(m, nu)| {
            (
                matrix(n, n, 1.2),
                matrix(n, nu, 0.5),
                matrix(n, n, 0.3),
                matrix(m, n, 1.0),
                // well conditioned measurement noise
                matrix(m, m, 0.2).prop_map(move |e| DMatrix::identity(m, m) * 0.3 + e),
                matrix(nu, n, 1.0),
                psd(n, 0.5),
                psd(n, 0.5),
            )
                .prop_map(|(a, b, g, c, d, k, p_hat, p_tilde)| Instance {
                    step: LtvStep { a, b, g, c, dt: 0.1 },
                    d,
                    k,
                    p_hat,
                    p_tilde,
                })
        })
    })
}

fn spectral_floor(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn kalman_identity_and_psd(inst in instance()) {
        let r = kalman_step(&inst.step, &inst.d, &inst.k, &inst.p_hat, &inst.p_tilde).unwrap();
        prop_assert!(frobenius(&(&r.p - (&r.p_hat + &r.p_tilde))) < 1e-9);
        for m in [&r.p, &r.p_hat, &r.p_tilde] {
            prop_assert!(frobenius(&(m - m.transpose())) < 1e-9);
            prop_assert!(spectral_floor(m) >= -1e-9, "min eigenvalue {}", spectral_floor(m));
        }
    }

    #[test]
    fn kalman_matches_joseph_form_reference(inst in instance()) {
        let r = kalman_step(&inst.step, &inst.d, &inst.k, &inst.p_hat, &inst.p_tilde).unwrap();
        let s = &inst.step;
        let (p, p_hat, p_tilde) = kalman_reference(&s.a, &s.b, &s.g, &s.c, &inst.d, &inst.k, &inst.p_hat, &inst.p_tilde);
        let scale = 1.0 + frobenius(&p);
        prop_assert!(frobenius(&(&r.p - &p)) < 1e-9 * scale);
        prop_assert!(frobenius(&(&r.p_hat - &p_hat)) < 1e-9 * scale);
        prop_assert!(frobenius(&(&r.p_tilde - &p_tilde)) < 1e-9 * scale);
    }

    #[test]
    fn error_covariance_monotone_in_measurement_noise(inst in instance(), extra_seed in any::<u64>()) {
        let m = inst.d.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(extra_seed);
        let e = DMatrix::<f64>::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
        // D₂D₂ᵀ = D₁D₁ᵀ + EEᵀ
        let dd = &inst.d * inst.d.transpose() + &e * e.transpose();
        let d2 = dd.cholesky().unwrap().l();
        let small = kalman_step(&inst.step, &inst.d, &inst.k, &inst.p_hat, &inst.p_tilde).unwrap();
        let large = kalman_step(&inst.step, &d2, &inst.k, &inst.p_hat, &inst.p_tilde).unwrap();
        prop_assert!(min_eigenvalue(&(&large.p_tilde - &small.p_tilde)) >= -1e-9);
    }
}

fn quarter() -> impl Strategy<Value = f64> {
    (1u8..=4).prop_map(|k| k as f64 * 0.25)
}

fn node_strategy() -> impl Strategy<Value = BeliefNode> {
    (
        prop::collection::vec(quarter(), 3),
        prop::collection::vec(quarter(), 3),
        0u8..3,
    )
        .prop_map(|(p, pt, c)| {
            let mut n = BeliefNode::root(
                ibbt::VertexId(0),
                DMatrix::from_diagonal(&DVector::from_vec(p)),
                DMatrix::from_diagonal(&DVector::from_vec(pt)),
            );
            n.cost = c as f64;
            n.heuristic = 1.0;
            n
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn dominance_is_strict_partial_order(nodes in prop::collection::vec(node_strategy(), 2..8)) {
        for a in &nodes {
            prop_assert!(!dominates(a, a, 0.0).unwrap());
        }
        for a in &nodes {
            for b in &nodes {
                if a.same_triple(b) {
                    continue;
                }
                if dominates(a, b, 0.0).unwrap() {
                    prop_assert!(!dominates(b, a, 0.0).unwrap());
                    for c in &nodes {
                        if !b.same_triple(c) && !a.same_triple(c) && dominates(b, c, 0.0).unwrap() {
                            prop_assert!(dominates(a, c, 0.0).unwrap());
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn propagation_is_additive_over_concatenation() {
    let model = ModelSpec::double_integrator(0.1);
    let scenario = open_scenario(model.clone());
    let chance = ChanceConfig::new(0.05);
    let pool = SamplePool::new(3, 4, 200);
    let ctx = PropagationContext {
        model: &model,
        scenario: &scenario,
        chance: &chance,
        pool: &pool,
        lambda_p: 0.1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut pick = || -> f64 { rand::Rng::random_range(&mut rng, -2.0..2.0) };
        let (x0, x1, x2) = (
            di([pick(), pick(), 0.3 * pick(), 0.3 * pick()]),
            di([pick(), pick(), 0.3 * pick(), 0.3 * pick()]),
            di([pick(), pick(), 0.3 * pick(), 0.3 * pick()]),
        );
        let t1 = connect(&model, &x0, &x1).unwrap();
        let t2 = connect(&model, &x1, &x2).unwrap();
        let joined = t1.concat(&t2, &model).unwrap();
        let root = {
            let mut n = BeliefNode::root(ibbt::VertexId(0), DMatrix::identity(4, 4) * 0.02, DMatrix::identity(4, 4) * 0.01);
            n.cost = 1.5;
            n
        };
        let mid = propagate_edge(&edge(0, t1), &root, &ctx).unwrap().unwrap();
        let end = propagate_edge(&edge(1, t2), &mid, &ctx).unwrap().unwrap();
        let direct = propagate_edge(&edge(2, joined), &root, &ctx).unwrap().unwrap();
        assert!((end.cost - direct.cost).abs() < 1e-9, "{} vs {}", end.cost, direct.cost);
        assert!(frobenius(&(&end.p - &direct.p)) < 1e-9);
        assert!(frobenius(&(&end.p_tilde - &direct.p_tilde)) < 1e-9);
    }
}

#[test]
fn zero_length_edge_keeps_belief() {
    let model = ModelSpec::double_integrator(0.1);
    let scenario = open_scenario(model.clone());
    let chance = ChanceConfig::new(0.05);
    let pool = SamplePool::new(0, 1, 100);
    let ctx = PropagationContext {
        model: &model,
        scenario: &scenario,
        chance: &chance,
        pool: &pool,
        lambda_p: 0.1,
    };
    let x = di([1.0, 1.0, 0.0, 0.0]);
    let t = connect(&model, &x, &x).unwrap();
    let mut root = BeliefNode::root(ibbt::VertexId(0), DMatrix::identity(4, 4) * 0.1, DMatrix::identity(4, 4) * 0.05);
    root.cost = 2.0;
    let out = propagate_edge(&edge(0, t), &root, &ctx).unwrap().unwrap();
    assert_eq!(out.p, root.p);
    assert_eq!(out.p_tilde, root.p_tilde);
    assert_eq!(out.cost, 2.0);
}

#[test]
fn propagation_matches_independent_recursion() {
    let model = ModelSpec::double_integrator(0.1);
    let scenario = open_scenario(model.clone());
    let traj = twenty_step_edge(&model);
    let p0 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.1, 0.025, 0.025]));
    let pt0 = &p0 * 0.6;
    let e = edge(0, traj.clone());
    let trace = propagate_covariances(&e, &p0, &pt0, &model, &scenario).unwrap();

    // Reference: matrices typed out from the model definition.
    let dt: f64 = 0.1;
    let mut a = DMatrix::identity(4, 4);
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    let mut b = DMatrix::zeros(4, 2);
    b[(0, 0)] = 0.5 * dt * dt;
    b[(1, 1)] = 0.5 * dt * dt;
    b[(2, 0)] = dt;
    b[(3, 1)] = dt;
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![0.03, 0.03, 0.02, 0.02])) * dt.sqrt();
    let c = DMatrix::identity(4, 4);
    let gains = traj.gains(&model);
    let mut p_hat = &p0 - &pt0;
    let mut p_tilde = pt0.clone();
    let mut used_info = false;
    for (k, gain) in gains.iter().enumerate() {
        let x = &traj.states[k + 1];
        let inside = (0.8..=1.6).contains(&x[0]) && (-1.0..=1.0).contains(&x[1]);
        used_info |= inside;
        let d = DMatrix::identity(4, 4) * if inside { 0.01 } else { 1.0 };
        let (p, ph, pt) = kalman_reference(&a, &b, &g, &c, &d, gain, &p_hat, &p_tilde);
        assert!(frobenius(&(&trace.p[k + 1] - &p)) < 1e-12, "step {k}");
        assert!(frobenius(&(&trace.p_tilde[k + 1] - &pt)) < 1e-12, "step {k}");
        p_hat = ph;
        p_tilde = pt;
    }
    assert!(used_info);
}

#[test]
fn closed_loop_rollouts_match_predicted_covariance() {
    let errs = closed_loop_covariance_errors(10_000, 17);
    let worst = errs.iter().copied().fold(0.0, f64::max);
    assert!(worst < 0.10, "worst relative error {worst}");
}
