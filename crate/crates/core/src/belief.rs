//! Gaussian beliefs along nominal trajectories.
//!
//! Deviations from the nominal are split into the filter estimate `x̂` and
//! the estimation error `x̃`; their covariances `P̂` and `P̃` add up to the
//! state covariance `P`. Only `P` and `P̃` are carried on a belief node since
//! `P̂ = P - P̃`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dynamics::{LtvStep, ModelSpec};
use crate::environment::{ChanceConfig, SamplePool, Scenario};
use crate::graph::Edge;
use crate::linalg::{clamp_psd, is_psd_with_slack, position_block, symmetrize};
use crate::{CovMatrix, EdgeId, NodeId, VertexId};

/// Costs within this margin count as equal in the dominance test.
pub const COST_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("innovation covariance is singular (degenerate measurement noise)")]
    SingularInnovation,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("belief nodes live on different vertices ({0} vs {1})")]
    VertexMismatch(VertexId, VertexId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KalmanStepResult {
    pub p: CovMatrix,
    pub p_hat: CovMatrix,
    pub p_tilde: CovMatrix,
    /// Kalman gain `L`.
    pub l: DMatrix<f64>,
}

/// One predict/update of the covariance recursion:
///
/// ```text
/// P̃⁻ = A P̃ Aᵀ + G Gᵀ
/// L  = P̃⁻ Cᵀ (C P̃⁻ Cᵀ + D Dᵀ)⁻¹
/// P̃' = (I − L C) P̃⁻
/// P̂' = (A + B K) P̂ (A + B K)ᵀ + L C P̃⁻
/// P' = P̂' + P̃'
/// ```
pub fn kalman_step(
    step: &LtvStep,
    d: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    p_hat_prev: &CovMatrix,
    p_tilde_prev: &CovMatrix,
) -> Result<KalmanStepResult, BeliefError> {
    let n = step.a.nrows();
    if p_hat_prev.shape() != (n, n) || p_tilde_prev.shape() != (n, n) {
        return Err(BeliefError::Dimension(format!("covariances must be {n}x{n}")));
    }
    if step.c.ncols() != n || d.nrows() != step.c.nrows() || gain.ncols() != n || gain.nrows() != step.b.ncols() {
        return Err(BeliefError::Dimension("inconsistent step matrices".into()));
    }
    let prior = symmetrize(&(&step.a * p_tilde_prev * step.a.transpose() + &step.g * step.g.transpose()));
    let pc = &prior * step.c.transpose();
    let innovation = symmetrize(&(&step.c * &pc + d * d.transpose()));
    let chol = innovation.cholesky().ok_or(BeliefError::SingularInnovation)?;
    // L = P̃⁻Cᵀ S⁻¹, solved as S Lᵀ = C P̃⁻
    let l = chol.solve(&pc.transpose()).transpose();
    let lc = &l * &step.c;
    let identity = DMatrix::<f64>::identity(n, n);
    let p_tilde = clamp_psd(&((&identity - &lc) * &prior));
    let closed = &step.a + &step.b * gain;
    let p_hat = clamp_psd(&(&closed * p_hat_prev * closed.transpose() + &lc * &prior));
    let p = &p_hat + &p_tilde;
    Ok(KalmanStepResult { p, p_hat, p_tilde, l })
}

/// A belief attached to a graph vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefNode {
    pub vertex: VertexId,
    /// State covariance `P`.
    pub p: CovMatrix,
    /// Estimation-error covariance `P̃`.
    pub p_tilde: CovMatrix,
    /// Cost-to-come.
    pub cost: f64,
    /// Cost-to-go heuristic, mirrored from the owning vertex.
    pub heuristic: f64,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub in_edge: Option<EdgeId>,
    /// Number of the vertex's outgoing edges already propagated from this node.
    pub expanded: usize,
}

impl BeliefNode {
    pub fn root(vertex: VertexId, p: CovMatrix, p_tilde: CovMatrix) -> Self {
        BeliefNode {
            vertex,
            p,
            p_tilde,
            cost: 0.0,
            heuristic: f64::INFINITY,
            parent: None,
            children: Vec::new(),
            in_edge: None,
            expanded: 0,
        }
    }

    /// Total heuristic cost `f = c + h`.
    pub fn f(&self) -> f64 {
        self.cost + self.heuristic
    }

    pub fn p_hat(&self) -> CovMatrix {
        &self.p - &self.p_tilde
    }

    /// Bitwise equality of the (f, P, P̃) triple.
    pub fn same_triple(&self, other: &BeliefNode) -> bool {
        self.f().to_bits() == other.f().to_bits() && self.p == other.p && self.p_tilde == other.p_tilde
    }
}

/// True when `na` dominates `nb`: no worse in `f` and no larger in both
/// covariances (Loewner order with slack `eps`). Bitwise-identical triples do
/// not dominate each other. When both `f` are infinite the cost-to-come is
/// compared instead.
pub fn dominates(na: &BeliefNode, nb: &BeliefNode, eps: f64) -> Result<bool, BeliefError> {
    if na.vertex != nb.vertex {
        return Err(BeliefError::VertexMismatch(na.vertex, nb.vertex));
    }
    // Without a finite cost-to-go, f carries no ordering; fall back to c.
    let (fa, fb) = if na.f().is_infinite() && nb.f().is_infinite() {
        (na.cost, nb.cost)
    } else {
        (na.f(), nb.f())
    };
    if fa > fb + COST_SLACK {
        return Ok(false);
    }
    if na.same_triple(nb) {
        return Ok(false);
    }
    Ok(is_psd_with_slack(&(&nb.p - &na.p), eps) && is_psd_with_slack(&(&nb.p_tilde - &na.p_tilde), eps))
}

/// The first chance-constraint violation found along an edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Infeasible {
    pub step: usize,
    pub probability: f64,
}

/// Everything [`propagate_edge`] needs besides the edge and the node.
#[derive(Clone, Copy, Debug)]
pub struct PropagationContext<'a> {
    pub model: &'a ModelSpec,
    pub scenario: &'a Scenario,
    pub chance: &'a ChanceConfig,
    pub pool: &'a SamplePool,
    /// Weight on `Σ trace(Pₖ)·dt` added to the nominal edge cost.
    pub lambda_p: f64,
}

/// Covariance trajectory along an edge, without chance checks.
#[derive(Clone, Debug)]
pub struct CovarianceTrace {
    pub p: Vec<CovMatrix>,
    pub p_tilde: Vec<CovMatrix>,
}

/// Runs the covariance recursion along `edge` starting from `(P, P̃)`.
/// Entry `k` of the result belongs to nominal state `k`.
pub fn propagate_covariances(
    edge: &Edge,
    p0: &CovMatrix,
    p_tilde0: &CovMatrix,
    model: &ModelSpec,
    scenario: &Scenario,
) -> Result<CovarianceTrace, BeliefError> {
    let fb = edge.traj.feedback(model);
    let mut p_hat = p0 - p_tilde0;
    let mut p_tilde = p_tilde0.clone();
    let mut out = CovarianceTrace {
        p: vec![p0.clone()],
        p_tilde: vec![p_tilde0.clone()],
    };
    for (k, step) in fb.steps.iter().enumerate() {
        let d = scenario.measurement_noise_at(&model.position(&edge.traj.states[k + 1]));
        let r = kalman_step(step, d, &fb.gains[k], &p_hat, &p_tilde)?;
        out.p.push(r.p);
        out.p_tilde.push(r.p_tilde.clone());
        p_hat = r.p_hat;
        p_tilde = r.p_tilde;
    }
    Ok(out)
}

/// Propagates `node` across `edge`: covariance recursion, chance constraint
/// at every checked step, and cost accumulation. On success the returned
/// node sits on `edge.to`; the caller links it into the tree.
pub fn propagate_edge(
    edge: &Edge,
    node: &BeliefNode,
    ctx: &PropagationContext<'_>,
) -> Result<Result<BeliefNode, Infeasible>, BeliefError> {
    let model = ctx.model;
    let fb = edge.traj.feedback(model);
    let n_steps = fb.steps.len();
    let mut p_hat = node.p_hat();
    let mut p_tilde = node.p_tilde.clone();
    let mut p = node.p.clone();
    let mut uncertainty = 0.0;
    for (k, step) in fb.steps.iter().enumerate() {
        let nominal = &edge.traj.states[k + 1];
        let pos = model.position(nominal);
        let d = ctx.scenario.measurement_noise_at(&pos);
        let r = kalman_step(step, d, &fb.gains[k], &p_hat, &p_tilde)?;
        p_hat = r.p_hat;
        p_tilde = r.p_tilde;
        p = r.p;
        uncertainty += p.trace() * step.dt;
        let idx = k + 1;
        if idx % ctx.chance.check_stride == 0 || idx == n_steps {
            let samples = ctx.pool.select(edge.id, idx);
            let prob = ctx
                .scenario
                .collision_probability_with(&pos, &position_block(&p), samples)
                .map_err(|e| BeliefError::Dimension(e.to_string()))?;
            if prob >= ctx.chance.delta {
                return Ok(Err(Infeasible { step: idx, probability: prob }));
            }
        }
    }
    Ok(Ok(BeliefNode {
        vertex: edge.to,
        p,
        p_tilde,
        cost: node.cost + edge.traj.nominal_cost + ctx.lambda_p * uncertainty,
        heuristic: node.heuristic,
        parent: None,
        children: Vec::new(),
        in_edge: Some(edge.id),
        expanded: 0,
    }))
}
