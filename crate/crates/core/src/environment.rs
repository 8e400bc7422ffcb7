//! Workspace geometry, measurement-noise map, free-space sampling and the
//! Monte-Carlo collision-probability estimator.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use thiserror::Error;

use crate::dynamics::{ModelKind, ModelSpec};
use crate::linalg::{chol2_psd, eig2_sym};
use crate::{CovMatrix, EdgeId, StateVec};

/// Attempts before [`sample_free`] gives up on a scenario.
pub const REJECTION_BUDGET: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("covariance is not positive semidefinite")]
    NotPsd,
    #[error("no free sample after {0} attempts")]
    RejectionBudget(usize),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect {
            min: Vector2::new(x0.min(x1), y0.min(y1)),
            max: Vector2::new(x0.max(x1), y0.max(y1)),
        }
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Distance from an interior point to the boundary; zero outside.
    pub fn inner_clearance(&self, p: &Vector2<f64>) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        (p.x - self.min.x)
            .min(self.max.x - p.x)
            .min(p.y - self.min.y)
            .min(self.max.y - p.y)
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// Convex polygon, stored counter-clockwise. Containment is closed: the
/// boundary belongs to the polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<Vector2<f64>>,
    aabb: Rect,
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

impl Polygon {
    pub fn new(mut vertices: Vec<Vector2<f64>>) -> Result<Self, EnvError> {
        if vertices.len() < 3 {
            return Err(EnvError::InvalidPolygon(format!("{} vertices, need at least 3", vertices.len())));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(EnvError::InvalidPolygon("non-finite vertex".into()));
        }
        let n = vertices.len();
        let area2: f64 = (0..n).map(|i| cross(&vertices[i], &vertices[(i + 1) % n])).sum();
        if area2.abs() < 1e-12 {
            return Err(EnvError::InvalidPolygon("zero area".into()));
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if cross(&(b - a), &(c - b)) < -1e-12 {
                return Err(EnvError::InvalidPolygon("not convex".into()));
            }
        }
        let mut aabb = Rect::new(vertices[0].x, vertices[0].y, vertices[0].x, vertices[0].y);
        for v in &vertices {
            aabb.min = aabb.min.inf(v);
            aabb.max = aabb.max.sup(v);
        }
        Ok(Polygon { vertices, aabb })
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let r = Rect::new(x0, y0, x1, y1);
        Polygon::new(vec![
            r.min,
            Vector2::new(r.max.x, r.min.y),
            r.max,
            Vector2::new(r.min.x, r.max.y),
        ])
        .expect("non-degenerate rectangle")
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    pub fn bounding_box(&self) -> &Rect {
        &self.aabb
    }

    pub fn centroid(&self) -> Vector2<f64> {
        let n = self.vertices.len();
        let (mut cx, mut cy, mut a) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let c = cross(&p, &q);
            a += c;
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Vector2::new(cx / (3.0 * a), cy / (3.0 * a))
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        if !self.aabb.contains(p) {
            return false;
        }
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            cross(&(b - a), &(p - a)) >= 0.0
        })
    }

    /// Euclidean distance to the polygon; zero inside.
    pub fn distance(&self, p: &Vector2<f64>) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (a + ab * t - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Measurement noise matrices inside and outside information-rich regions.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub d_info: DMatrix<f64>,
    pub d_default: DMatrix<f64>,
}

impl NoiseSpec {
    pub fn for_model(kind: ModelKind) -> Self {
        match kind {
            ModelKind::DoubleIntegrator2D => NoiseSpec {
                d_info: DMatrix::identity(4, 4) * 0.01,
                d_default: DMatrix::identity(4, 4),
            },
            ModelKind::Dubins => NoiseSpec {
                d_info: DMatrix::identity(3, 3) * 0.1,
                d_default: DMatrix::identity(3, 3) * 2.0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChanceConfig {
    /// Per-step collision probability bound δ.
    pub delta: f64,
    pub mc_samples: usize,
    /// Check every `check_stride`-th step (and always the last).
    pub check_stride: usize,
}

impl ChanceConfig {
    pub fn new(delta: f64) -> Self {
        ChanceConfig {
            delta,
            mc_samples: 1000,
            check_stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub bounds: Rect,
    pub obstacles: Vec<Polygon>,
    pub info_regions: Vec<Polygon>,
    pub start: StateVec,
    pub p0: CovMatrix,
    pub p_tilde0: CovMatrix,
    pub goal: StateVec,
    pub delta: f64,
    pub model: ModelSpec,
    pub noise: NoiseSpec,
    /// Half-width of the velocity sampling box (double integrator).
    pub velocity_box: f64,
}

impl Scenario {
    /// Scenario with default noise, covariances `0.01·I` and δ = 0.05.
    pub fn new(bounds: Rect, start: StateVec, goal: StateVec, model: ModelSpec) -> Self {
        let n = model.state_dim();
        let p0 = DMatrix::identity(n, n) * 0.01;
        Scenario {
            bounds,
            obstacles: Vec::new(),
            info_regions: Vec::new(),
            start,
            p_tilde0: p0.clone(),
            p0,
            goal,
            delta: 0.05,
            noise: NoiseSpec::for_model(model.kind),
            model,
            velocity_box: 1.0,
        }
    }

    /// Every semantic problem with the scenario, empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let n = self.model.state_dim();
        if let Err(e) = self.model.validate() {
            issues.push(format!("model: {e}"));
        }
        if !(self.bounds.width() > 0.0 && self.bounds.height() > 0.0) {
            issues.push("bounds: empty workspace".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            issues.push(format!("delta: {} is not in (0, 1)", self.delta));
        }
        if !(self.velocity_box >= 0.0) {
            issues.push("velocity_box: must be nonnegative".into());
        }
        for (name, x) in [("start", &self.start), ("goal", &self.goal)] {
            if x.len() != n {
                issues.push(format!("{name}: state has {} entries, expected {n}", x.len()));
                continue;
            }
            let pos = Vector2::new(x[0], x[1]);
            if !self.bounds.contains(&pos) {
                issues.push(format!("{name}: position outside bounds"));
            }
            for (i, obs) in self.obstacles.iter().enumerate() {
                if obs.contains(&pos) {
                    issues.push(format!("{name}: inside obstacle {i}"));
                }
            }
        }
        for (name, m) in [("P0", &self.p0), ("Ptilde0", &self.p_tilde0)] {
            if m.shape() != (n, n) {
                issues.push(format!("{name}: must be {n}x{n}"));
            } else if !crate::linalg::is_psd_with_slack(m, 1e-12) {
                issues.push(format!("{name}: not positive semidefinite"));
            }
        }
        if self.p0.shape() == (n, n)
            && self.p_tilde0.shape() == (n, n)
            && !crate::linalg::is_psd_with_slack(&(&self.p0 - &self.p_tilde0), 1e-12)
        {
            issues.push("start: P0 - Ptilde0 is not positive semidefinite".into());
        }
        for (name, d) in [("D_info", &self.noise.d_info), ("D_default", &self.noise.d_default)] {
            if d.shape() != (n, n) {
                issues.push(format!("{name}: must be {n}x{n}"));
            } else if (d * d.transpose()).cholesky().is_none() {
                issues.push(format!("{name}: must be positive definite"));
            }
        }
        issues
    }

    pub fn position_in_obstacle(&self, p: &Vector2<f64>) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }

    /// Outside the workspace or inside an obstacle.
    pub fn in_collision(&self, p: &Vector2<f64>) -> bool {
        !self.bounds.contains(p) || self.position_in_obstacle(p)
    }

    pub fn obstacle_free(&self, states: &[StateVec]) -> bool {
        obstacle_free(states, self)
    }

    pub fn measurement_noise_at(&self, pos: &Vector2<f64>) -> &DMatrix<f64> {
        if self.info_regions.iter().any(|r| r.contains(pos)) {
            &self.noise.d_info
        } else {
            &self.noise.d_default
        }
    }

    /// Distance from `p` to the nearest collision region (obstacle or
    /// workspace boundary).
    pub fn clearance(&self, p: &Vector2<f64>) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(self.bounds.inner_clearance(p), f64::min)
    }

    /// Fraction of the given standard-normal samples, mapped through
    /// `mean + L z` with `L Lᵀ = cov`, that collide.
    pub fn collision_probability_with(
        &self,
        mean: &Vector2<f64>,
        cov: &Matrix2<f64>,
        samples: &StandardSamples,
    ) -> Result<f64, EnvError> {
        let l = chol2_psd(cov).ok_or(EnvError::NotPsd)?;
        if samples.z.is_empty() {
            return Ok(0.0);
        }
        let (lmax, _) = eig2_sym(cov);
        if lmax.max(0.0).sqrt() * samples.max_norm < self.clearance(mean) {
            return Ok(0.0);
        }
        let hits = samples.z.iter().filter(|z| self.in_collision(&(mean + l * *z))).count();
        Ok(hits as f64 / samples.z.len() as f64)
    }
}

/// True iff every state's position lies inside the workspace and strictly
/// outside every obstacle.
pub fn obstacle_free(states: &[StateVec], scenario: &Scenario) -> bool {
    states.iter().all(|x| !scenario.in_collision(&Vector2::new(x[0], x[1])))
}

/// Draws `n` position samples from `N(mean, cov)` and returns the fraction
/// that collide (inside an obstacle or outside the workspace).
pub fn collision_probability<R: Rng + ?Sized>(
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
    scenario: &Scenario,
    n: usize,
    rng: &mut R,
) -> Result<f64, EnvError> {
    let samples = StandardSamples::draw(n.max(1), rng);
    scenario.collision_probability_with(mean, cov, &samples)
}

pub fn measurement_noise_at<'a>(pos: &Vector2<f64>, scenario: &'a Scenario) -> &'a DMatrix<f64> {
    scenario.measurement_noise_at(pos)
}

/// Uniform rejection sampling of a collision-free state.
pub fn sample_free<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<StateVec, EnvError> {
    let b = &scenario.bounds;
    for _ in 0..REJECTION_BUDGET {
        let x = b.min.x + (b.max.x - b.min.x) * rng.random::<f64>();
        let y = b.min.y + (b.max.y - b.min.y) * rng.random::<f64>();
        let pos = Vector2::new(x, y);
        if scenario.position_in_obstacle(&pos) {
            continue;
        }
        return Ok(match scenario.model.kind {
            ModelKind::DoubleIntegrator2D => {
                let vb = scenario.velocity_box;
                let vx = -vb + 2.0 * vb * rng.random::<f64>();
                let vy = -vb + 2.0 * vb * rng.random::<f64>();
                DVector::from_vec(vec![x, y, vx, vy])
            }
            // (-π, π]
            ModelKind::Dubins => DVector::from_vec(vec![x, y, PI - 2.0 * PI * rng.random::<f64>()]),
        });
    }
    Err(EnvError::RejectionBudget(REJECTION_BUDGET))
}

/// A fixed set of standard-normal 2-vectors.
#[derive(Clone, Debug)]
pub struct StandardSamples {
    pub z: Vec<Vector2<f64>>,
    /// Largest ‖z‖ in the set.
    pub max_norm: f64,
}

impl StandardSamples {
    pub fn draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let z: Vec<Vector2<f64>> = (0..n)
            .map(|_| Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let max_norm = z.iter().map(|v| v.norm()).fold(0.0, f64::max);
        StandardSamples { z, max_norm }
    }
}

/// Pre-drawn sample sets shared by all chance checks of a run. The set used
/// at a given (edge, step) depends only on those indices, so repeated
/// propagations over the same edge see the same samples regardless of
/// search order or obstacle count.
#[derive(Clone, Debug)]
pub struct SamplePool {
    sets: Vec<StandardSamples>,
    seed: u64,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SamplePool {
    pub fn new(seed: u64, sets: usize, samples_per_set: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x5EED_C0DE));
        let sets = (0..sets.max(1))
            .map(|_| StandardSamples::draw(samples_per_set, &mut rng))
            .collect();
        SamplePool { sets, seed }
    }

    pub fn select(&self, edge: EdgeId, step: usize) -> &StandardSamples {
        let h = mix64(mix64(self.seed ^ edge.0 as u64).wrapping_add(step as u64));
        &self.sets[(h % self.sets.len() as u64) as usize]
    }

    pub fn samples_per_set(&self) -> usize {
        self.sets[0].z.len()
    }
}
