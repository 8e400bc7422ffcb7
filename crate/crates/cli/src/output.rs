//! Result JSON and anytime CSV.
//!
//! Every float written by this crate is first rounded to 12 significant
//! digits ([`round12`]) so repeated runs compare byte for byte.

use ibbt::{CovMatrix, Graph, PlanResult, Planner, StateVec};
use nalgebra::Vector2;
use serde_json::{json, Value};

use crate::scenario::ScenarioFile;

/// Rounds to 12 significant digits; non-finite values pass through.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Shortest text of [`round12`]`(x)`; `inf`, `-inf` or `nan` otherwise.
pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        let r = round12(x);
        if r == 0.0 {
            "0".into()
        } else {
            format!("{r}")
        }
    }
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(round12(x))
    } else {
        json!(fmt12(x))
    }
}

fn vector(v: &StateVec) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn matrix(m: &CovMatrix) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array(m.row(i).iter().map(|&x| num(x)).collect())).collect())
}

/// Positions of the nominal trajectory along the solution, vertices
/// included once.
pub fn solution_positions(planner: &Planner, result: &PlanResult) -> Vec<Vector2<f64>> {
    let graph = planner.graph();
    let model = &planner.scenario().model;
    let mut out = Vec::new();
    if let Some(first) = result.solution.first() {
        out.push(model.position(&graph.vertex(first.vertex).state));
    }
    for step in result.solution.iter().skip(1) {
        let edge = graph.edge(step.edge.expect("non-root steps have an edge"));
        out.extend(edge.traj.states.iter().skip(1).map(|x| model.position(x)));
    }
    out
}

/// The result document. It holds no wall-clock values, so identical
/// inputs give identical text.
pub fn result_json(name: &str, planner: &Planner, result: &PlanResult) -> Value {
    let graph: &Graph = planner.graph();
    let model = &planner.scenario().model;
    let path: Vec<Value> = result
        .solution
        .iter()
        .map(|s| {
            let state = &graph.vertex(s.vertex).state;
            let pos = model.position(state);
            json!({
                "vertex": s.vertex.0,
                "edge": s.edge.map(|e| e.0),
                "node": s.node.0,
                "state": vector(state),
                "position": [num(pos.x), num(pos.y)],
                "cost": num(s.belief.cost),
                "P": matrix(&s.belief.p),
                "Ptilde": matrix(&s.belief.p_tilde),
            })
        })
        .collect();
    let trajectory: Vec<Value> = solution_positions(planner, result)
        .iter()
        .map(|p| json!([num(p.x), num(p.y)]))
        .collect();
    let trace: Vec<Value> = result
        .trace
        .iter()
        .map(|t| json!({"batch": t.batch, "cost": num(t.cost), "pops": t.pops}))
        .collect();
    let st = &result.stats;
    let config = planner.config();
    json!({
        "scenario": name,
        "planner": result.mode.name(),
        "seed": config.seed,
        "solved": result.solved(),
        "cost": num(result.cost),
        "path": path,
        "trajectory": trajectory,
        "trace": trace,
        "stats": {
            "batches": st.batches,
            "vertices": st.vertices,
            "edges": st.edges,
            "nodes_created": st.nodes_created,
            "nodes_removed": st.nodes_removed,
            "nodes_rejected": st.nodes_rejected,
            "propagations": st.propagations,
            "infeasible": st.infeasible,
            "queue_pops": st.queue_pops,
        },
        "scenario_file": serde_json::to_value(ScenarioFile::from_parts(name, planner.scenario(), config))
            .expect("scenario files serialize"),
    })
}

pub fn to_pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize") + "\n"
}

pub const ANYTIME_HEADER: &str = "wall_s,batch,cost";

/// Anytime trace as CSV with columns `wall_s,batch,cost`.
pub fn anytime_csv(result: &PlanResult) -> String {
    let mut out = String::from(ANYTIME_HEADER);
    out.push('\n');
    for t in &result.trace {
        out.push_str(&format!("{},{},{}\n", fmt12(t.wall_s), t.batch, fmt12(t.cost)));
    }
    out
}
