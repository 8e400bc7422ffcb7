//! Shared harnesses for the oracle tests and the acceptance suite.
#![allow(dead_code)]

use crate::oracles::{dijkstra_to_goal, dubins_length_reference, kalman_reference, sample_covariance};
use ibbt::belief::{kalman_step, propagate_covariances};
use ibbt::dynamics::{connect, simulate_closed_loop};
use ibbt::graph::value_iteration;
use ibbt::linalg::{frobenius, min_eigenvalue};
use ibbt::{Edge, Graph, LtvStep, ModelSpec, Polygon, Rect, Scenario, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

pub fn open_scenario(model: ModelSpec) -> Scenario {
    let n = model.state_dim();
    let mut s = Scenario::new(
        Rect::new(-50.0, -50.0, 50.0, 50.0),
        DVector::zeros(n),
        DVector::from_element(n, 1.0),
        model,
    );
    s.info_regions.push(Polygon::rect(0.8, -1.0, 1.6, 1.0));
    s
}

pub fn edge(id: usize, traj: Trajectory) -> Edge {
    Edge {
        id: ibbt::EdgeId(id),
        from: ibbt::VertexId(0),
        to: ibbt::VertexId(1),
        traj,
    }
}

pub fn di(xs: [f64; 4]) -> DVector<f64> {
    DVector::from_row_slice(&xs)
}

/// A straight 20-step double-integrator edge through an information region.
pub fn twenty_step_edge(model: &ModelSpec) -> Trajectory {
    let t = connect(model, &di([0.0, 0.0, 0.0, 0.0]), &di([2.0, 0.0, 0.0, 0.0])).unwrap();
    assert_eq!(t.len(), 20);
    t
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0) * scale)
}

/// Worst violation over `count` random Kalman inputs in dimensions 3 and 4:
/// the identity `P = P̂ + P̃`, symmetry, the PSD floor and the distance to the
/// Joseph-form reference, each relative to `1 + ‖P‖`.
pub fn kalman_worst_violation(count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let n = 3 + i % 2;
        let m = rng.random_range(1..=n);
        let nu = rng.random_range(1..=2);
        let step = LtvStep {
            a: uniform(&mut rng, n, n, 1.2),
            b: uniform(&mut rng, n, nu, 0.5),
            g: uniform(&mut rng, n, n, 0.3),
            c: uniform(&mut rng, m, n, 1.0),
            dt: 0.1,
        };
        let d = DMatrix::identity(m, m) * 0.3 + uniform(&mut rng, m, m, 0.2);
        let k = uniform(&mut rng, nu, n, 1.0);
        let h = uniform(&mut rng, n, n, 1.0);
        let t = uniform(&mut rng, n, n, 1.0);
        let p_hat = &h * h.transpose() * 0.5;
        let p_tilde = &t * t.transpose() * 0.5;
        let r = kalman_step(&step, &d, &k, &p_hat, &p_tilde).unwrap();
        let (p, ph, pt) = kalman_reference(&step.a, &step.b, &step.g, &step.c, &d, &k, &p_hat, &p_tilde);
        let scale = 1.0 + frobenius(&p);
        worst = worst.max(frobenius(&(&r.p - (&r.p_hat + &r.p_tilde))));
        for mat in [&r.p, &r.p_hat, &r.p_tilde] {
            worst = worst.max(frobenius(&(mat - mat.transpose())));
            worst = worst.max(-min_eigenvalue(mat));
        }
        for (got, want) in [(&r.p, &p), (&r.p_hat, &ph), (&r.p_tilde, &pt)] {
            worst = worst.max(frobenius(&(got - want)) / scale);
        }
    }
    worst
}

/// Relative Frobenius error of empirical closed-loop covariances against
/// the predicted `P` at every step of the 20-step edge.
pub fn closed_loop_covariance_errors(rollouts: usize, seed: u64) -> Vec<f64> {
    let model = ModelSpec::double_integrator(0.1);
    let scenario = open_scenario(model.clone());
    let traj = twenty_step_edge(&model);
    let p0 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.1, 0.025, 0.025]));
    let pt0 = &p0 * 0.6;
    let ph0 = &p0 - &pt0;
    let e = edge(0, traj.clone());
    let trace = propagate_covariances(&e, &p0, &pt0, &model, &scenario).unwrap();
    let chol_hat = ph0.clone().cholesky().unwrap().l();
    let chol_tilde = pt0.clone().cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deviations: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(rollouts); traj.states.len()];
    for _ in 0..rollouts {
        let z1 = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
        let z2 = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
        let xhat0 = &chol_hat * z1;
        let x0 = &traj.states[0] + &xhat0 + &chol_tilde * z2;
        let r = simulate_closed_loop(&model, &traj, &scenario, &x0, &xhat0, &pt0, &mut rng).unwrap();
        for (k, x) in r.states.iter().enumerate() {
            deviations[k].push(x - &traj.states[k]);
        }
    }
    deviations
        .iter()
        .zip(&trace.p)
        .map(|(devs, p)| frobenius(&(sample_covariance(devs) - p)) / frobenius(p))
        .collect()
}

pub fn random_config<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(-PI..PI)]
}

/// Worst |connect length − reference| over `pairs` random configuration
/// pairs, and whether every length was at least the Euclidean distance.
pub fn dubins_connect_vs_reference(pairs: usize, seed: u64) -> (f64, bool) {
    let model = ModelSpec::dubins(0.1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut euclid_ok = true;
    for _ in 0..pairs {
        let (q0, q1) = (random_config(&mut rng), random_config(&mut rng));
        let traj = connect(&model, &DVector::from_row_slice(&q0), &DVector::from_row_slice(&q1)).expect("Dubins always connects");
        let length = traj.nominal_cost;
        worst = worst.max((length - dubins_length_reference(q0, q1, 1.0)).abs());
        euclid_ok &= length >= (q1[0] - q0[0]).hypot(q1[1] - q0[1]) - 1e-12;
    }
    (worst, euclid_ok)
}

pub fn stub_traj(cost: f64) -> Trajectory {
    Trajectory::with_cost(vec![DVector::zeros(4)], Vec::new(), 0.1, cost)
}

/// Random directed graph with `n` vertices and edge list `(from, to, cost)`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize) -> (Graph, Vec<(usize, usize, f64)>) {
    let mut g = Graph::empty();
    for i in 0..n {
        g.add_vertex(DVector::from_element(4, i as f64));
    }
    let m = rng.random_range(0..=4 * n);
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a == b {
            continue;
        }
        let c = rng.random_range(0.01..10.0);
        g.add_edge(ibbt::VertexId(a), ibbt::VertexId(b), stub_traj(c)).unwrap();
        edges.push((a, b, c));
    }
    (g, edges)
}

/// Number of random graphs (out of `count`) on which value iteration and
/// the Dijkstra oracle disagree in any vertex.
pub fn value_iteration_mismatches(count: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..count {
        let n = rng.random_range(2..=200);
        let (mut g, edges) = random_graph(&mut rng, n);
        let goal = rng.random_range(0..n);
        value_iteration(&mut g, ibbt::VertexId(goal));
        let want = dijkstra_to_goal(n, &edges, goal);
        if (0..n).any(|v| g.h(ibbt::VertexId(v)) != want[v]) {
            bad += 1;
        }
    }
    bad
}
