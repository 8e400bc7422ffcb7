//! Graph of nominal trajectories: batch RRG construction, nearest/near
//! queries and the cost-to-go heuristic.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{steer, ModelSpec, Trajectory};
use crate::environment::{obstacle_free, sample_free, EnvError, Scenario};
use crate::{EdgeId, StateVec, VertexId};

/// Samples closer than this to an existing vertex are discarded.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("self-loop at vertex {0}")]
    SelfLoop(VertexId),
    #[error("edge cost {0} is negative or not finite")]
    BadCost(f64),
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error(transparent)]
    Sampling(#[from] EnvError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub state: StateVec,
    /// Nominal cost-to-go; `+∞` when the goal is unreachable.
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: VertexId,
    pub to: VertexId,
    pub traj: Trajectory,
}

impl Edge {
    pub fn nominal_cost(&self) -> f64 {
        self.traj.nominal_cost
    }
}

/// Directed graph with append-only vertex, edge and adjacency lists.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    out_adj: Vec<Vec<EdgeId>>,
    in_adj: Vec<Vec<EdgeId>>,
}

impl Graph {
    /// Start vertex (id 0, `h = ∞`) and goal vertex (id 1, `h = 0`).
    pub fn new(start: StateVec, goal: StateVec) -> Self {
        let mut g = Graph::default();
        g.add_vertex(start);
        let goal = g.add_vertex(goal);
        g.vertices[goal.0].h = 0.0;
        g
    }

    /// Graph without distinguished vertices.
    pub fn empty() -> Self {
        Graph::default()
    }

    pub const START: VertexId = VertexId(0);
    pub const GOAL: VertexId = VertexId(1);

    pub fn add_vertex(&mut self, state: StateVec) -> VertexId {
        let id = VertexId(self.vertices.len());
        self.vertices.push(Vertex {
            id,
            state,
            h: f64::INFINITY,
        });
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        id
    }

    pub fn add_edge(&mut self, from: VertexId, to: VertexId, traj: Trajectory) -> Result<EdgeId, GraphError> {
        for v in [from, to] {
            if v.0 >= self.vertices.len() {
                return Err(GraphError::UnknownVertex(v));
            }
        }
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        if !(traj.nominal_cost >= 0.0 && traj.nominal_cost.is_finite()) {
            return Err(GraphError::BadCost(traj.nominal_cost));
        }
        let id = EdgeId(self.edges.len());
        self.edges.push(Edge { id, from, to, traj });
        self.out_adj[from.0].push(id);
        self.in_adj[to.0].push(id);
        Ok(id)
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.out_adj[v.0]
    }

    pub fn in_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.in_adj[v.0]
    }

    pub fn h(&self, v: VertexId) -> f64 {
        self.vertices[v.0].h
    }

    pub fn set_h(&mut self, v: VertexId, h: f64) {
        self.vertices[v.0].h = h;
    }

    /// Vertex closest to `x` under the model metric; lowest id wins ties.
    pub fn nearest(&self, model: &ModelSpec, x: &StateVec) -> Result<VertexId, GraphError> {
        let mut best: Option<(f64, VertexId)> = None;
        for v in &self.vertices {
            let d = model.distance(&v.state, x);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, v.id));
            }
        }
        best.map(|(_, id)| id).ok_or(GraphError::Empty)
    }

    /// Vertices within `radius` of `x`, excluding exact duplicates of `x`.
    pub fn near(&self, model: &ModelSpec, x: &StateVec, radius: f64) -> Vec<VertexId> {
        self.vertices
            .iter()
            .filter(|v| {
                let d = model.distance(&v.state, x);
                d <= radius && d > DUPLICATE_TOLERANCE
            })
            .map(|v| v.id)
            .collect()
    }

    /// One record per line:
    ///
    /// ```text
    /// V <id> <h> <state…>
    /// E <id> <from> <to> <nominal_cost> <steps>
    /// ```
    ///
    /// Vertices first, then edges, each in id order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = write!(out, "V {} {}", v.id, v.h);
            for s in v.state.iter() {
                let _ = write!(out, " {s}");
            }
            out.push('\n');
        }
        for e in &self.edges {
            let _ = writeln!(out, "E {} {} {} {} {}", e.id, e.from, e.to, e.traj.nominal_cost, e.traj.len());
        }
        out
    }
}

/// Radius schedule `r(n) = min(r_max, γ·(ln n / n)^{1/2})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearParams {
    pub gamma: f64,
    pub r_max: f64,
}

impl NearParams {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        NearParams {
            gamma: 2.5 * (scenario.bounds.area() / std::f64::consts::PI).sqrt(),
            r_max: 0.25 * scenario.bounds.diagonal(),
        }
    }

    pub fn radius(&self, n: usize) -> f64 {
        if n <= 1 {
            return self.r_max;
        }
        let n = n as f64;
        self.r_max.min(self.gamma * (n.ln() / n).sqrt())
    }
}

/// Source of candidate states for [`rrg_batch`].
pub trait StateSampler {
    /// Next candidate, or `None` when the source is exhausted.
    fn sample(&mut self, scenario: &Scenario) -> Result<Option<StateVec>, EnvError>;

    /// True once [`StateSampler::sample`] will only return `None`.
    fn exhausted(&self) -> bool {
        false
    }
}

/// Uniform free-space sampling with optional goal bias.
#[derive(Clone, Debug)]
pub struct FreeSampler {
    rng: ChaCha8Rng,
    goal_bias: f64,
}

impl FreeSampler {
    pub fn new(seed: u64, goal_bias: f64) -> Self {
        FreeSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            goal_bias,
        }
    }
}

impl StateSampler for FreeSampler {
    fn sample(&mut self, scenario: &Scenario) -> Result<Option<StateVec>, EnvError> {
        if self.goal_bias > 0.0 && self.rng.random::<f64>() < self.goal_bias {
            return Ok(Some(scenario.goal.clone()));
        }
        sample_free(scenario, &mut self.rng).map(Some)
    }
}

/// Replays a fixed list of states, then reports exhaustion.
#[derive(Clone, Debug)]
pub struct ReplaySampler {
    states: Vec<StateVec>,
    next: usize,
}

impl ReplaySampler {
    pub fn new(states: Vec<StateVec>) -> Self {
        ReplaySampler { states, next: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.states.len() - self.next
    }
}

impl StateSampler for ReplaySampler {
    fn sample(&mut self, _scenario: &Scenario) -> Result<Option<StateVec>, EnvError> {
        let s = self.states.get(self.next).cloned();
        if s.is_some() {
            self.next += 1;
        }
        Ok(s)
    }

    fn exhausted(&self) -> bool {
        self.remaining() == 0
    }
}

/// Tries to connect `from → to` and adds the edge when the nominal
/// trajectory is obstacle-free.
fn try_edge(graph: &mut Graph, scenario: &Scenario, from: VertexId, to: VertexId) -> Option<EdgeId> {
    let traj = steer(&scenario.model, &graph.vertex(from).state, &graph.vertex(to).state).ok()?;
    if !obstacle_free(&traj.states, scenario) {
        return None;
    }
    graph.add_edge(from, to, traj).ok()
}

/// Draws up to `m` samples and grows the graph RRG-style. Returns the
/// vertices added during the call.
pub fn rrg_batch(
    graph: &mut Graph,
    scenario: &Scenario,
    m: usize,
    sampler: &mut dyn StateSampler,
    near: &NearParams,
) -> Result<Vec<VertexId>, GraphError> {
    let model = &scenario.model;
    let mut added = Vec::new();
    for _ in 0..m {
        let Some(x) = sampler.sample(scenario)? else {
            break;
        };
        let v_nearest = graph.nearest(model, &x)?;
        if model.distance(&graph.vertex(v_nearest).state, &x) <= DUPLICATE_TOLERANCE {
            continue;
        }
        let Ok(traj) = steer(model, &graph.vertex(v_nearest).state, &x) else {
            continue;
        };
        if !obstacle_free(&traj.states, scenario) {
            continue;
        }
        let radius = near.radius(graph.vertex_count());
        let v_near: Vec<VertexId> = graph
            .near(model, &x, radius)
            .into_iter()
            .filter(|&v| v != v_nearest)
            .collect();
        let v_new = graph.add_vertex(x);
        graph.add_edge(v_nearest, v_new, traj)?;
        try_edge(graph, scenario, v_new, v_nearest);
        for v in v_near {
            try_edge(graph, scenario, v, v_new);
            try_edge(graph, scenario, v_new, v);
        }
        added.push(v_new);
    }
    Ok(added)
}

/// Bellman backups `h(v) = min_e c(e) + h(e.to)` to a fixed point, warm
/// started from the stored values with `goal` pinned at zero. Gauss-Seidel
/// sweeps visit vertices in increasing order of their current `h`. Returns
/// the number of sweeps.
pub fn value_iteration(graph: &mut Graph, goal: VertexId) -> usize {
    let n = graph.vertex_count();
    graph.set_h(goal, 0.0);
    if let Some(sweeps) = sweep_to_fixed_point(graph, goal, n + 1) {
        return sweeps;
    }
    // Warm values below the true cost-to-go on a goal-free cycle never
    // settle; a cold start from +∞ always converges within n sweeps.
    for v in &mut graph.vertices {
        v.h = f64::INFINITY;
    }
    graph.set_h(goal, 0.0);
    n + 1 + sweep_to_fixed_point(graph, goal, n + 1).expect("cold value iteration converges")
}

/// Same result as [`value_iteration`] without reusing previous values.
pub fn value_iteration_cold(graph: &mut Graph, goal: VertexId) -> usize {
    for v in &mut graph.vertices {
        v.h = f64::INFINITY;
    }
    value_iteration(graph, goal)
}

fn sweep_to_fixed_point(graph: &mut Graph, goal: VertexId, max_sweeps: usize) -> Option<usize> {
    let n = graph.vertex_count();
    let mut order: Vec<usize> = (0..n).collect();
    for sweep in 1..=max_sweeps {
        order.sort_by(|&a, &b| graph.vertices[a].h.total_cmp(&graph.vertices[b].h).then(a.cmp(&b)));
        let mut changed = false;
        for &v in &order {
            if v == goal.0 {
                continue;
            }
            let best = graph.out_adj[v]
                .iter()
                .map(|e| {
                    let e = &graph.edges[e.0];
                    e.traj.nominal_cost + graph.vertices[e.to.0].h
                })
                .fold(f64::INFINITY, f64::min);
            if best != graph.vertices[v].h {
                graph.vertices[v].h = best;
                changed = true;
            }
        }
        if !changed {
            return Some(sweep);
        }
    }
    None
}
