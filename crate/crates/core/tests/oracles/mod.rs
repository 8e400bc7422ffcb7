//! Reference implementations used only by tests. Each one is written from
//! first principles and shares no code with the library.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

/// One covariance update written with an explicit inverse and the Joseph
/// form for the error covariance. Returns `(P, P̂, P̃)`.
#[allow(clippy::too_many_arguments)]
pub fn kalman_reference(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    g: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    k: &DMatrix<f64>,
    p_hat: &DMatrix<f64>,
    p_tilde: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let prior = a * p_tilde * a.transpose() + g * g.transpose();
    let s = c * &prior * c.transpose() + d * d.transpose();
    let l = &prior * c.transpose() * s.try_inverse().expect("innovation invertible");
    let i_lc = DMatrix::identity(n, n) - &l * c;
    let err = &i_lc * &prior * i_lc.transpose() + &l * d * d.transpose() * l.transpose();
    let closed = a + b * k;
    let est = &closed * p_hat * closed.transpose() + &l * c * &prior;
    (&est + &err, est, err)
}

/// Sample covariance of the rows of `xs` around their mean.
pub fn sample_covariance(xs: &[DVector<f64>]) -> DMatrix<f64> {
    let n = xs[0].len();
    let m = xs.len() as f64;
    let mean = xs.iter().fold(DVector::zeros(n), |acc, x| acc + x) / m;
    xs.iter()
        .map(|x| {
            let d = x - &mean;
            &d * d.transpose()
        })
        .fold(DMatrix::zeros(n, n), |acc, v| acc + v)
        / (m - 1.0)
}

fn arc(from: f64, to: f64, turn: f64) -> f64 {
    let raw = (turn * (to - from)).rem_euclid(2.0 * PI);
    if raw > 2.0 * PI - 1e-10 {
        0.0
    } else {
        raw
    }
}

fn circle_center(q: [f64; 3], turn: f64, rho: f64) -> [f64; 2] {
    [q[0] - turn * rho * q[2].sin(), q[1] + turn * rho * q[2].cos()]
}

/// Heading at a point on a circle of radius `rho` around `c` when turning
/// with sign `turn` (left = +1).
fn heading_on_circle(c: [f64; 2], p: [f64; 2], turn: f64, rho: f64) -> f64 {
    // c = p + turn·rho·(-sin φ, cos φ)
    let nx = (c[0] - p[0]) / (turn * rho);
    let ny = (c[1] - p[1]) / (turn * rho);
    (-nx).atan2(ny)
}

/// Shortest forward Dubins length by explicit circle geometry: for every
/// word, build the turning circles at both ends and the tangent segment
/// (or tangent circle) between them, and keep the shortest candidate.
pub fn dubins_length_reference(q0: [f64; 3], q1: [f64; 3], rho: f64) -> f64 {
    let mut best = f64::INFINITY;
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            let c1 = circle_center(q0, s1, rho);
            let c2 = circle_center(q1, s2, rho);
            let (dx, dy) = (c2[0] - c1[0], c2[1] - c1[1]);
            let d = dx.hypot(dy);
            // Tangent segment: c2 - c1 = ℓ·u(φ) + (s2 - s1)·rho·n(φ).
            let off = (s2 - s1) * rho;
            if d >= off.abs() && d > 0.0 {
                let psi = dy.atan2(dx);
                let phi = psi - (off / d).asin();
                let len = (d * d - off * off).max(0.0).sqrt();
                let total = rho * arc(q0[2], phi, s1) + len + rho * arc(phi, q1[2], s2);
                best = best.min(total);
            }
            // Turn-turn-turn through a middle circle tangent to both ends.
            if s1 == s2 && d <= 4.0 * rho && d > 0.0 {
                let h = (4.0 * rho * rho - 0.25 * d * d).max(0.0).sqrt();
                let mid = [0.5 * (c1[0] + c2[0]), 0.5 * (c1[1] + c2[1])];
                let perp = [-dy / d, dx / d];
                for side in [1.0, -1.0] {
                    let cm = [mid[0] + side * h * perp[0], mid[1] + side * h * perp[1]];
                    let t1 = [0.5 * (c1[0] + cm[0]), 0.5 * (c1[1] + cm[1])];
                    let t2 = [0.5 * (cm[0] + c2[0]), 0.5 * (cm[1] + c2[1])];
                    let phi1 = heading_on_circle(c1, t1, s1, rho);
                    let phi2 = heading_on_circle(c2, t2, s1, rho);
                    let total = rho * (arc(q0[2], phi1, s1) + arc(phi1, phi2, -s1) + arc(phi2, q1[2], s1));
                    best = best.min(total);
                }
            }
        }
    }
    best
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Cost-to-go to `goal` by Dijkstra on the reversed edge list
/// `(from, to, cost)`.
pub fn dijkstra_to_goal(n: usize, edges: &[(usize, usize, f64)], goal: usize) -> Vec<f64> {
    let mut rev: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(from, to, c) in edges {
        rev[to].push((from, c));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[goal] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, goal));
    while let Some(Item(d, v)) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for &(u, c) in &rev[v] {
            let cand = c + d;
            if cand < dist[u] {
                dist[u] = cand;
                heap.push(Item(cand, u));
            }
        }
    }
    dist
}

/// Minimum-energy double-integrator transfer over `steps` steps solved as
/// a least-norm problem on the stacked input sequence (per axis), rather
/// than through the Gramian.
pub fn di_min_energy_controls(x0: &[f64; 4], x1: &[f64; 4], steps: usize, dt: f64) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; steps];
    for axis in 0..2 {
        // Column j: terminal (p, v) after a unit impulse at step j from rest.
        let m = DMatrix::from_fn(2, steps, |r, j| {
            let (mut p, mut v) = (0.0, 0.0);
            for k in 0..steps {
                let u = if k == j { 1.0 } else { 0.0 };
                p += dt * v + 0.5 * dt * dt * u;
                v += dt * u;
            }
            if r == 0 {
                p
            } else {
                v
            }
        });
        let (p, v) = (x0[axis], x0[axis + 2]);
        let free = DVector::from_vec(vec![p + steps as f64 * dt * v, v]);
        let target = DVector::from_vec(vec![x1[axis], x1[axis + 2]]);
        let svd = m.clone().svd(true, true);
        let u = svd.solve(&(target - free), 1e-14).expect("svd solve");
        for j in 0..steps {
            out[j][axis] = u[j];
        }
    }
    out
}
