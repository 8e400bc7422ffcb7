//! Belief-space motion planning with chance constraints.
//!
//! The planner splits a stochastic motion-planning problem in two:
//!
//! * a deterministic graph of nominal trajectories, grown in batches with an
//!   RRG variant whose edges come from a steering function ([`dynamics::connect`]);
//! * a belief tree searched over that graph, where every edge propagates a
//!   Kalman-filter covariance pair under an LQG tracking controller and checks
//!   a per-step collision chance constraint ([`belief::propagate_edge`]).
//!
//! Shortest nominal cost-to-go on the graph ([`graph::value_iteration`]) is an
//! admissible heuristic for the belief search, which is ordered by
//! `f = c + h` and prunes belief nodes by a partial order on (cost, covariance).
//! The RRBT baseline (one sample per iteration, exhaustive search ordered by
//! cost-to-come) is available through [`planner::PlannerMode::Rrbt`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod dynamics;
pub mod environment;
pub mod graph;
pub mod linalg;
pub mod planner;

pub use belief::{BeliefNode, KalmanStepResult};
pub use dynamics::{LtvStep, ModelKind, ModelSpec, Trajectory};
pub use environment::{ChanceConfig, NoiseSpec, Polygon, Rect, Scenario};
pub use graph::{Edge, Graph, NearParams, Vertex};
pub use planner::{PathStep, PlanEvent, PlanResult, PlanStats, Planner, PlannerConfig, PlannerMode, StopRule, TracePoint};

use std::fmt;

/// State vector (`[x, y, vx, vy]` or `[x, y, θ]`).
pub type StateVec = nalgebra::DVector<f64>;
/// Symmetric positive semidefinite covariance matrix.
pub type CovMatrix = nalgebra::DMatrix<f64>;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub usize);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Index of a vertex in a [`Graph`].
    VertexId
);
id_type!(
    /// Index of an edge in a [`Graph`].
    EdgeId
);
id_type!(
    /// Index of a belief node in a [`planner::BeliefTree`].
    NodeId
);
