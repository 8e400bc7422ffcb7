//! SVG rendering of scenarios, graphs, belief trees and solutions.

use std::fmt::Write;

use ibbt::dynamics::simulate_closed_loop;
use ibbt::linalg::{eig2_sym, position_block, wrap_angle};
use ibbt::{CovMatrix, ModelKind, PathStep, Planner, Scenario, StateVec};
use nalgebra::{DVector, Matrix2, SymmetricEigen, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::output::fmt12;

/// `√χ²₂(0.95)`: scale from standard deviations to the 95% ellipse.
pub fn chi2_95_scale() -> f64 {
    (-2.0 * 0.05f64.ln()).sqrt()
}

/// Graph edges are drawn through every `EDGE_STRIDE`-th nominal state.
const EDGE_STRIDE: usize = 5;

/// Pixels per workspace unit.
const PX_PER_UNIT: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub center: Vector2<f64>,
    /// Semi-axis along the major eigenvector.
    pub rx: f64,
    pub ry: f64,
    /// Major-axis direction, degrees counterclockwise from +x.
    pub angle_deg: f64,
}

impl Ellipse {
    /// 95% confidence ellipse of a 2D Gaussian.
    pub fn confidence95(center: Vector2<f64>, cov: &Matrix2<f64>) -> Self {
        let (l1, l2) = eig2_sym(cov);
        let b = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
        let a = cov[(0, 0)];
        let angle = if b.abs() < 1e-15 {
            if a >= cov[(1, 1)] {
                0.0
            } else {
                90.0
            }
        } else {
            (l1 - a).atan2(b).to_degrees()
        };
        let k = chi2_95_scale();
        Ellipse {
            center,
            rx: k * l1.max(0.0).sqrt(),
            ry: k * l2.max(0.0).sqrt(),
            angle_deg: angle,
        }
    }
}

/// Everything one picture shows. Empty fields are skipped.
#[derive(Clone, Debug, Default)]
pub struct Scene {
    pub graph_edges: Vec<Vec<Vector2<f64>>>,
    pub tree_ellipses: Vec<Ellipse>,
    pub rollouts: Vec<Vec<Vector2<f64>>>,
    pub solution: Vec<Vector2<f64>>,
    pub solution_ellipses: Vec<Ellipse>,
}

impl Scene {
    /// Graph, live belief nodes and the best solution of `planner`.
    pub fn from_planner(planner: &Planner) -> Self {
        let graph = planner.graph();
        let model = &planner.scenario().model;
        let graph_edges = graph
            .edges()
            .iter()
            .map(|e| {
                let n = e.traj.states.len();
                e.traj
                    .states
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| k % EDGE_STRIDE == 0 || *k + 1 == n)
                    .map(|(_, x)| model.position(x))
                    .collect()
            })
            .collect();
        let tree_ellipses = planner
            .tree()
            .iter()
            .map(|(_, n)| {
                let c = model.position(&graph.vertex(n.vertex).state);
                Ellipse::confidence95(c, &position_block(&n.p))
            })
            .collect();
        let path = planner.best_path();
        let mut scene = Scene {
            graph_edges,
            tree_ellipses,
            ..Scene::default()
        };
        scene.set_solution(planner, path);
        scene
    }

    fn set_solution(&mut self, planner: &Planner, path: &[PathStep]) {
        let graph = planner.graph();
        let model = &planner.scenario().model;
        self.solution.clear();
        self.solution_ellipses.clear();
        for (i, step) in path.iter().enumerate() {
            if i == 0 {
                self.solution.push(model.position(&graph.vertex(step.vertex).state));
            } else {
                let e = graph.edge(step.edge.expect("non-root steps have an edge"));
                self.solution.extend(e.traj.states.iter().skip(1).map(|x| model.position(x)));
            }
            let c = model.position(&graph.vertex(step.vertex).state);
            self.solution_ellipses.push(Ellipse::confidence95(c, &position_block(&step.belief.p)));
        }
    }
}

fn gaussian_draw<R: Rng + ?Sized>(cov: &CovMatrix, rng: &mut R) -> DVector<f64> {
    let n = cov.nrows();
    let eig = SymmetricEigen::new(cov.clone());
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let scaled = DVector::from_fn(n, |i, _| eig.eigenvalues[i].max(0.0).sqrt() * z[i]);
    &eig.eigenvectors * scaled
}

/// Closed-loop Monte-Carlo executions of a solution path, as position
/// traces.
pub fn solution_rollouts<R: Rng + ?Sized>(
    planner: &Planner,
    path: &[PathStep],
    count: usize,
    rng: &mut R,
) -> Vec<Vec<Vector2<f64>>> {
    let scenario = planner.scenario();
    let model = &scenario.model;
    let graph = planner.graph();
    let Some(root) = path.first() else {
        return Vec::new();
    };
    (0..count)
        .map(|_| {
            let xhat0 = gaussian_draw(&root.belief.p_hat(), rng);
            let xtilde0 = gaussian_draw(&root.belief.p_tilde, rng);
            let mut x: StateVec = &graph.vertex(root.vertex).state + &xhat0 + xtilde0;
            if model.kind == ModelKind::Dubins {
                x[2] = wrap_angle(x[2]);
            }
            let mut xhat = xhat0;
            let mut trace = vec![model.position(&x)];
            for w in path.windows(2) {
                let edge = graph.edge(w[1].edge.expect("non-root steps have an edge"));
                let Ok(r) = simulate_closed_loop(model, &edge.traj, scenario, &x, &xhat, &w[0].belief.p_tilde, rng)
                else {
                    break;
                };
                trace.extend(r.states.iter().skip(1).map(|s| model.position(s)));
                x = r.states.last().expect("rollouts are nonempty").clone();
                xhat = r.estimates.last().expect("rollouts are nonempty").clone();
            }
            trace
        })
        .collect()
}

fn points(pts: &[Vector2<f64>]) -> String {
    pts.iter()
        .map(|p| format!("{},{}", fmt12(p.x), fmt12(p.y)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn ellipse(out: &mut String, e: &Ellipse, class: &str) {
    let (cx, cy) = (fmt12(e.center.x), fmt12(e.center.y));
    let _ = writeln!(
        out,
        r#"    <ellipse class="{class}" cx="{cx}" cy="{cy}" rx="{}" ry="{}" transform="rotate({} {cx} {cy})"/>"#,
        fmt12(e.rx),
        fmt12(e.ry),
        fmt12(e.angle_deg),
    );
}

/// SVG document for `scene` over `scenario`. World coordinates are kept
/// (y up) inside a flipped group, so every number in the file is in
/// workspace units.
pub fn render_svg(scenario: &Scenario, scene: &Scene) -> String {
    let b = &scenario.bounds;
    let (w, h) = (b.width(), b.height());
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="{} {} {} {}">"#,
        fmt12(w * PX_PER_UNIT),
        fmt12(h * PX_PER_UNIT),
        fmt12(b.min.x),
        fmt12(b.min.y),
        fmt12(w),
        fmt12(h),
    );
    let s = 0.01 * w.max(h);
    let _ = writeln!(
        out,
        "  <style>\
.bounds{{fill:white;stroke:black;stroke-width:{s2}}} \
.obstacle{{fill:#808080;stroke:none}} \
.info{{fill:#4a7bd0;fill-opacity:0.35;stroke:#2c5aa0;stroke-width:{s1}}} \
.edge{{fill:none;stroke:#d8d8d8;stroke-width:{s0}}} \
.belief{{fill:none;stroke:#d08a3a;stroke-opacity:0.3;stroke-width:{s0}}} \
.rollout{{fill:none;stroke:#505050;stroke-opacity:0.6;stroke-width:{s0}}} \
.solution{{fill:none;stroke:#1a9a3a;stroke-width:{s3}}} \
.solution-belief{{fill:none;stroke:#1a9a3a;stroke-width:{s1}}} \
.start{{fill:#1a9a3a}} .goal{{fill:#c02020}}</style>",
        s0 = fmt12(0.15 * s),
        s1 = fmt12(0.3 * s),
        s2 = fmt12(0.5 * s),
        s3 = fmt12(0.6 * s),
    );
    let _ = writeln!(
        out,
        r#"  <g transform="matrix(1 0 0 -1 0 {})">"#,
        fmt12(b.min.y + b.max.y)
    );
    let _ = writeln!(
        out,
        r#"    <rect class="bounds" x="{}" y="{}" width="{}" height="{}"/>"#,
        fmt12(b.min.x),
        fmt12(b.min.y),
        fmt12(w),
        fmt12(h)
    );
    for e in &scene.graph_edges {
        let _ = writeln!(out, r#"    <polyline class="edge" points="{}"/>"#, points(e));
    }
    for e in &scene.tree_ellipses {
        ellipse(&mut out, e, "belief");
    }
    for poly in &scenario.info_regions {
        let _ = writeln!(out, r#"    <polygon class="info" points="{}"/>"#, points(poly.vertices()));
    }
    for poly in &scenario.obstacles {
        let _ = writeln!(out, r#"    <polygon class="obstacle" points="{}"/>"#, points(poly.vertices()));
    }
    for r in &scene.rollouts {
        let _ = writeln!(out, r#"    <polyline class="rollout" points="{}"/>"#, points(r));
    }
    if !scene.solution.is_empty() {
        let _ = writeln!(
            out,
            r#"    <polyline id="solution" class="solution" points="{}"/>"#,
            points(&scene.solution)
        );
    }
    for e in &scene.solution_ellipses {
        ellipse(&mut out, e, "solution-belief");
    }
    let model = &scenario.model;
    for (class, x) in [("start", &scenario.start), ("goal", &scenario.goal)] {
        if x.len() == model.state_dim() {
            let p = model.position(x);
            let _ = writeln!(
                out,
                r#"    <circle class="{class}" cx="{}" cy="{}" r="{}"/>"#,
                fmt12(p.x),
                fmt12(p.y),
                fmt12(s)
            );
        }
    }
    out.push_str("  </g>\n</svg>\n");
    out
}
