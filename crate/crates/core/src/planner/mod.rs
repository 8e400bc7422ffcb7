//! Anytime belief-tree search over a growing graph of nominal trajectories.
//!
//! [`PlannerMode::Ibbt`] adds samples in batches, recomputes the nominal
//! cost-to-go and runs an ordered search that stops as soon as a goal belief
//! is popped. [`PlannerMode::Rrbt`] adds one sample per iteration and
//! searches exhaustively, ordered by cost-to-come.

mod queue;
mod tree;

pub use queue::BeliefQueue;
pub use tree::{Append, BeliefTree};

use std::time::{Duration, Instant};

use log::{debug, info};
use thiserror::Error;

use crate::belief::{propagate_edge, BeliefError, BeliefNode, PropagationContext};
use crate::environment::{ChanceConfig, SamplePool, Scenario};
use crate::graph::{rrg_batch, value_iteration, FreeSampler, Graph, GraphError, NearParams, StateSampler};
use crate::{EdgeId, NodeId, VertexId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PlannerMode {
    Ibbt,
    Rrbt,
}

impl PlannerMode {
    pub fn name(self) -> &'static str {
        match self {
            PlannerMode::Ibbt => "ibbt",
            PlannerMode::Rrbt => "rrbt",
        }
    }
}

/// When to stop the outer loop. Unset limits are unbounded; at least one
/// of them (or `stop_at_first_solution`) should be set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    pub max_seconds: Option<f64>,
    pub max_batches: Option<usize>,
    pub stop_at_first_solution: bool,
}

impl StopRule {
    pub fn batches(n: usize) -> Self {
        StopRule {
            max_seconds: None,
            max_batches: Some(n),
            stop_at_first_solution: false,
        }
    }

    pub fn seconds(s: f64) -> Self {
        StopRule {
            max_seconds: Some(s),
            max_batches: None,
            stop_at_first_solution: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    pub mode: PlannerMode,
    /// Samples per batch; RRBT always uses 1.
    pub batch_size: usize,
    pub eps_dominance: f64,
    pub stop: StopRule,
    pub seed: u64,
    pub lambda_p: f64,
    pub chance: ChanceConfig,
    /// Near-radius constants; derived from the workspace when `None`.
    pub near: Option<NearParams>,
    /// Probability of sampling the goal state instead of free space.
    pub goal_bias: f64,
    /// Number of pre-drawn Monte-Carlo sample sets.
    pub mc_pools: usize,
}

impl PlannerConfig {
    pub fn new(mode: PlannerMode, delta: f64) -> Self {
        PlannerConfig {
            mode,
            batch_size: 25,
            eps_dominance: 1e-6,
            stop: StopRule::batches(20),
            seed: 0,
            lambda_p: 0.1,
            chance: ChanceConfig::new(delta),
            near: None,
            goal_bias: 0.0,
            mc_pools: 64,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(self.eps_dominance >= 0.0) {
            return bad("dominance slack must be nonnegative");
        }
        if !(self.lambda_p >= 0.0) {
            return bad("lambda_P must be nonnegative");
        }
        if !(self.chance.delta > 0.0 && self.chance.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if self.chance.mc_samples < 100 {
            return bad("mc_samples must be at least 100");
        }
        if self.chance.check_stride == 0 {
            return bad("check_stride must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return bad("goal bias must lie in [0, 1]");
        }
        if self.mc_pools == 0 {
            return bad("mc_pools must be at least 1");
        }
        if let Some(s) = self.stop.max_seconds {
            if !(s > 0.0) {
                return bad("max_seconds must be positive");
            }
        }
        if self.stop.max_batches == Some(0) {
            return bad("max_batches must be positive");
        }
        Ok(())
    }

    fn effective_batch(&self) -> usize {
        match self.mode {
            PlannerMode::Ibbt => self.batch_size,
            PlannerMode::Rrbt => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PlanStats {
    pub batches: usize,
    pub vertices: usize,
    pub edges: usize,
    pub nodes_created: usize,
    pub nodes_removed: usize,
    pub nodes_rejected: usize,
    pub propagations: usize,
    pub infeasible: usize,
    pub queue_pops: usize,
}

/// One point of the anytime cost trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub wall_s: f64,
    pub batch: usize,
    pub cost: f64,
    /// Queue pops performed when the solution was found.
    pub pops: usize,
}

/// A belief along the solution, with the edge that led to it.
#[derive(Clone, Debug, PartialEq)]
pub struct PathStep {
    pub vertex: VertexId,
    pub edge: Option<EdgeId>,
    pub node: NodeId,
    pub belief: BeliefNode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub mode: PlannerMode,
    /// Root to goal; empty without a solution.
    pub solution: Vec<PathStep>,
    /// Cost-to-come of the goal belief, `+∞` without a solution.
    pub cost: f64,
    pub trace: Vec<TracePoint>,
    pub stats: PlanStats,
}

impl PlanResult {
    pub fn solved(&self) -> bool {
        !self.solution.is_empty()
    }

    pub fn first_solution(&self) -> Option<&TracePoint> {
        self.trace.first()
    }
}

/// Progress notifications from [`Planner::run`].
#[derive(Clone, Debug, PartialEq)]
pub enum PlanEvent {
    Batch {
        batch: usize,
        elapsed: f64,
        vertices: usize,
        edges: usize,
        nodes: usize,
        best_cost: f64,
    },
    Solution {
        batch: usize,
        elapsed: f64,
        cost: f64,
        path: Vec<PathStep>,
    },
}

pub struct Planner {
    scenario: Scenario,
    config: PlannerConfig,
    graph: Graph,
    tree: BeliefTree,
    queue: BeliefQueue,
    pool: SamplePool,
    sampler: Box<dyn StateSampler>,
    near: NearParams,
    root: NodeId,
    best_cost: f64,
    best_node: Option<NodeId>,
    best_path: Vec<PathStep>,
    trace: Vec<TracePoint>,
    stats: PlanStats,
    started: Instant,
    deadline: Option<Instant>,
    timed_out: bool,
}

impl Planner {
    pub fn new(scenario: Scenario, config: PlannerConfig) -> Result<Self, PlanError> {
        let sampler = Box::new(FreeSampler::new(config.seed, config.goal_bias));
        Self::with_sampler(scenario, config, sampler)
    }

    /// Planner drawing graph samples from `sampler` instead of free space.
    /// The scenario's chance bound overrides `config.chance.delta`.
    pub fn with_sampler(
        scenario: Scenario,
        mut config: PlannerConfig,
        sampler: Box<dyn StateSampler>,
    ) -> Result<Self, PlanError> {
        let issues = scenario.validate();
        if !issues.is_empty() {
            return Err(PlanError::InvalidScenario(issues));
        }
        config.chance.delta = scenario.delta;
        config.validate()?;
        let graph = Graph::new(scenario.start.clone(), scenario.goal.clone());
        let mut tree = BeliefTree::new();
        let mut root = BeliefNode::root(Graph::START, scenario.p0.clone(), scenario.p_tilde0.clone());
        if config.mode == PlannerMode::Rrbt {
            root.heuristic = 0.0;
        }
        let (f, c) = (root.f(), root.cost);
        let root = tree.insert_root(root);
        let mut queue = BeliefQueue::new();
        queue.push(root, f, c);
        let pool = SamplePool::new(config.seed, config.mc_pools, config.chance.mc_samples);
        let near = config.near.unwrap_or_else(|| NearParams::for_scenario(&scenario));
        Ok(Planner {
            scenario,
            config,
            graph,
            tree,
            queue,
            pool,
            sampler,
            near,
            root,
            best_cost: f64::INFINITY,
            best_node: None,
            best_path: Vec::new(),
            trace: Vec::new(),
            stats: PlanStats::default(),
            started: Instant::now(),
            deadline: None,
            timed_out: false,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn tree(&self) -> &BeliefTree {
        &self.tree
    }

    pub fn queue(&self) -> &BeliefQueue {
        &self.queue
    }

    pub fn pool(&self) -> &SamplePool {
        &self.pool
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn best_cost(&self) -> f64 {
        self.best_cost
    }

    pub fn propagation_context(&self) -> PropagationContext<'_> {
        PropagationContext {
            model: &self.scenario.model,
            scenario: &self.scenario,
            chance: &self.config.chance,
            pool: &self.pool,
            lambda_p: self.config.lambda_p,
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn out_of_time(&mut self) -> bool {
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                self.timed_out = true;
            }
        }
        self.timed_out
    }

    /// True once the stop rule fires or the sampler is exhausted.
    pub fn should_stop(&mut self) -> bool {
        let stop = self.config.stop;
        if stop.stop_at_first_solution && self.best_node.is_some() {
            return true;
        }
        if stop.max_batches.is_some_and(|b| self.stats.batches >= b) {
            return true;
        }
        if self.sampler.exhausted() {
            return true;
        }
        self.out_of_time()
    }

    /// Restarts the wall clock and the time budget. [`Planner::run`] calls
    /// this; callers driving [`Planner::iterate`] directly should too.
    pub fn start_clock(&mut self) {
        self.started = Instant::now();
        self.timed_out = false;
        self.deadline = self
            .config
            .stop
            .max_seconds
            .map(|s| self.started + Duration::from_secs_f64(s));
    }

    /// Path to the best goal belief found so far.
    pub fn best_path(&self) -> &[PathStep] {
        &self.best_path
    }

    /// Runs iterations until the stop rule fires, reporting progress to
    /// `on_event`.
    pub fn run(&mut self, mut on_event: impl FnMut(&PlanEvent)) -> Result<PlanResult, PlanError> {
        self.start_clock();
        while !self.should_stop() {
            let improved = self.iterate()?;
            on_event(&PlanEvent::Batch {
                batch: self.stats.batches,
                elapsed: self.elapsed(),
                vertices: self.graph.vertex_count(),
                edges: self.graph.edge_count(),
                nodes: self.tree.live(),
                best_cost: self.best_cost,
            });
            if improved {
                let point = *self.trace.last().expect("improvement recorded");
                on_event(&PlanEvent::Solution {
                    batch: point.batch,
                    elapsed: point.wall_s,
                    cost: point.cost,
                    path: self.best_path.clone(),
                });
            }
        }
        Ok(self.result())
    }

    /// One outer iteration: grow the graph, update heuristics and queue,
    /// search. Returns whether the best solution improved.
    pub fn iterate(&mut self) -> Result<bool, PlanError> {
        self.stats.batches += 1;
        let batch = self.config.effective_batch();
        let new = rrg_batch(&mut self.graph, &self.scenario, batch, self.sampler.as_mut(), &self.near)?;
        if self.config.mode == PlannerMode::Ibbt {
            value_iteration(&mut self.graph, Graph::GOAL);
            self.refresh_heuristics();
        }
        for &v in &new {
            let sources: Vec<VertexId> = self.graph.in_edges(v).iter().map(|&e| self.graph.edge(e).from).collect();
            for u in sources {
                for &n in self.tree.at_vertex(u) {
                    let node = self.tree.get(n).expect("live");
                    self.queue.push(n, node.f(), node.cost);
                }
            }
        }
        self.queue.prune(self.best_cost);
        for &n in self.tree.at_vertex(Graph::GOAL) {
            let node = self.tree.get(n).expect("live");
            self.queue.push(n, node.f(), node.cost);
        }
        let exhaustive = self.config.mode == PlannerMode::Rrbt;
        let flag = self.graph_search(exhaustive)?;
        debug!(
            "batch {}: {} vertices, {} edges, {} nodes, queue {}",
            self.stats.batches,
            self.graph.vertex_count(),
            self.graph.edge_count(),
            self.tree.live(),
            self.queue.len()
        );
        if !flag {
            return Ok(false);
        }
        Ok(self.record_best())
    }

    fn refresh_heuristics(&mut self) {
        let ids: Vec<NodeId> = self.tree.iter().map(|(id, _)| id).collect();
        for id in ids {
            let node = self.tree.get_mut(id).expect("live");
            let h = self.graph.h(node.vertex);
            if node.heuristic.to_bits() != h.to_bits() {
                node.heuristic = h;
                let (f, c) = (node.f(), node.cost);
                if self.queue.contains(id) {
                    self.queue.push(id, f, c);
                }
            }
        }
    }

    fn record_best(&mut self) -> bool {
        let best = self
            .tree
            .at_vertex(Graph::GOAL)
            .iter()
            .map(|&n| (self.tree.get(n).expect("live").cost, n))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((cost, node)) = best else {
            return false;
        };
        if cost >= self.best_cost {
            return false;
        }
        self.best_cost = cost;
        self.best_node = Some(node);
        self.best_path = self.path_steps(node);
        self.trace.push(TracePoint {
            wall_s: self.elapsed(),
            batch: self.stats.batches,
            cost,
            pops: self.stats.queue_pops,
        });
        info!("{} solution cost {cost:.6} at batch {}", self.config.mode.name(), self.stats.batches);
        true
    }

    fn path_steps(&self, node: NodeId) -> Vec<PathStep> {
        self.tree
            .path_to(node)
            .into_iter()
            .map(|id| {
                let n = self.tree.get(id).expect("live");
                let mut belief = n.clone();
                belief.children.clear();
                PathStep {
                    vertex: n.vertex,
                    edge: n.in_edge,
                    node: id,
                    belief,
                }
            })
            .collect()
    }

    /// Pops nodes in order and expands them. In ordered mode the search
    /// returns `true` as soon as a goal belief is popped; in exhaustive
    /// mode it drains the queue and returns whether the goal holds any
    /// belief. Ordered mode also stops once the best remaining `f` is
    /// infinite. Stops early, returning `false`, when the time budget runs
    /// out.
    pub fn graph_search(&mut self, exhaustive: bool) -> Result<bool, PlanError> {
        loop {
            // Nodes that cannot reach the goal on the current graph wait in
            // the queue until a later batch gives them a finite cost-to-go.
            match self.queue.peek() {
                None => break,
                Some((_, f, _)) if !exhaustive && f == f64::INFINITY => break,
                Some(_) => {}
            }
            let id = self.queue.pop_best().expect("peeked");
            self.stats.queue_pops += 1;
            if self.out_of_time() {
                let node = self.tree.get(id).expect("queued nodes are live");
                let (f, c) = (node.f(), node.cost);
                self.queue.push(id, f, c);
                return Ok(false);
            }
            let vertex = self.tree.get(id).expect("queued nodes are live").vertex;
            if vertex == Graph::GOAL {
                if exhaustive {
                    continue;
                }
                return Ok(true);
            }
            self.expand(id)?;
        }
        Ok(exhaustive && !self.tree.at_vertex(Graph::GOAL).is_empty())
    }

    /// Propagates `id` along every outgoing edge it has not yet tried.
    fn expand(&mut self, id: NodeId) -> Result<(), PlanError> {
        let vertex = self.tree.get(id).expect("live").vertex;
        loop {
            let Some(node) = self.tree.get(id) else {
                return Ok(());
            };
            let out = self.graph.out_edges(vertex);
            if node.expanded >= out.len() {
                return Ok(());
            }
            let edge_id = out[node.expanded];
            self.tree.get_mut(id).expect("live").expanded += 1;
            let node = self.tree.get(id).expect("live");
            let edge = self.graph.edge(edge_id);
            self.stats.propagations += 1;
            let ctx = PropagationContext {
                model: &self.scenario.model,
                scenario: &self.scenario,
                chance: &self.config.chance,
                pool: &self.pool,
                lambda_p: self.config.lambda_p,
            };
            let mut new = match propagate_edge(edge, node, &ctx)? {
                Ok(n) => n,
                Err(_) => {
                    self.stats.infeasible += 1;
                    continue;
                }
            };
            new.parent = Some(id);
            new.heuristic = match self.config.mode {
                PlannerMode::Ibbt => self.graph.h(edge.to),
                PlannerMode::Rrbt => 0.0,
            };
            let (f, c) = (new.f(), new.cost);
            match self.tree.append_belief(new, self.config.eps_dominance, &mut self.queue)? {
                Append::Accepted { id: nid, removed } => {
                    self.stats.nodes_removed += removed.len();
                    self.queue.push(nid, f, c);
                    if self.best_node.is_some_and(|b| removed.contains(&b)) {
                        self.best_node = None;
                    }
                }
                Append::Rejected => self.stats.nodes_rejected += 1,
            }
        }
    }

    /// Snapshot of the best solution found so far.
    pub fn result(&self) -> PlanResult {
        let mut stats = self.stats;
        stats.vertices = self.graph.vertex_count();
        stats.edges = self.graph.edge_count();
        stats.nodes_created = self.tree.created();
        PlanResult {
            mode: self.config.mode,
            solution: self.best_path.clone(),
            cost: self.best_cost,
            trace: self.trace.clone(),
            stats,
        }
    }
}

/// Runs the ordered batch planner (the mode in `config` is overridden).
pub fn plan(scenario: Scenario, mut config: PlannerConfig) -> Result<PlanResult, PlanError> {
    config.mode = PlannerMode::Ibbt;
    Planner::new(scenario, config)?.run(|_| {})
}

/// Runs the one-sample exhaustive baseline (the mode in `config` is
/// overridden).
pub fn rrbt_plan(scenario: Scenario, mut config: PlannerConfig) -> Result<PlanResult, PlanError> {
    config.mode = PlannerMode::Rrbt;
    Planner::new(scenario, config)?.run(|_| {})
}
