use std::fs;
use std::path::{Path, PathBuf};

use ibbt::planner::PlanError;
use ibbt::{PlanResult, Planner, PlannerConfig};
use log::{debug, info};
use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use thiserror::Error;

use crate::output::{anytime_csv, result_json, to_pretty};
use crate::render::{render_svg, solution_rollouts, Ellipse, Scene};
use crate::scenario::{LoadedScenario, ScenarioFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NO_SOLUTION: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("{0}")]
    BadResult(String),
}

fn write(path: PathBuf, contents: &str) -> Result<(), RunError> {
    fs::write(&path, contents).map_err(|source| RunError::Io { path, source })
}

#[derive(Clone, Copy, Debug)]
pub struct PlanOptions {
    /// Write `solution_NNN.svg` for every improvement.
    pub render: bool,
    /// Monte-Carlo executions drawn over each rendered solution.
    pub rollouts: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            render: true,
            rollouts: 0,
        }
    }
}

pub struct PlanOutcome {
    pub result: PlanResult,
    pub exit_code: i32,
}

/// Plans on `loaded.scenario` with `config` and writes `result.json`,
/// `anytime.csv`, `graph.txt` and one SVG per emitted solution into `out`.
pub fn run_plan(
    loaded: &LoadedScenario,
    config: PlannerConfig,
    out: &Path,
    opts: PlanOptions,
) -> Result<PlanOutcome, RunError> {
    fs::create_dir_all(out).map_err(|source| RunError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let seed = config.seed;
    let mut planner = Planner::new(loaded.scenario.clone(), config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emitted = 0;
    planner.start_clock();
    while !planner.should_stop() {
        let improved = planner.iterate()?;
        let st = planner.result().stats;
        debug!(
            "event=batch batch={} elapsed={:.4} vertices={} edges={} nodes={} best_cost={}",
            st.batches,
            planner.elapsed(),
            st.vertices,
            st.edges,
            planner.tree().live(),
            planner.best_cost()
        );
        if improved {
            emitted += 1;
            info!(
                "event=solution index={emitted} batch={} elapsed={:.4} cost={:.9}",
                st.batches,
                planner.elapsed(),
                planner.best_cost()
            );
            if opts.render {
                let mut scene = Scene::from_planner(&planner);
                scene.rollouts = solution_rollouts(&planner, planner.best_path(), opts.rollouts, &mut rng);
                let svg = render_svg(planner.scenario(), &scene);
                write(out.join(format!("solution_{emitted:03}.svg")), &svg)?;
            }
        }
    }
    let result = planner.result();
    write(out.join("result.json"), &to_pretty(&result_json(&loaded.name, &planner, &result)))?;
    write(out.join("anytime.csv"), &anytime_csv(&result))?;
    write(out.join("graph.txt"), &planner.graph().dump())?;
    let exit_code = if result.solved() { EXIT_OK } else { EXIT_NO_SOLUTION };
    Ok(PlanOutcome { result, exit_code })
}

fn bad(msg: &str) -> RunError {
    RunError::BadResult(msg.to_string())
}

fn pair(v: &Value) -> Option<Vector2<f64>> {
    Some(Vector2::new(v.get(0)?.as_f64()?, v.get(1)?.as_f64()?))
}

/// Re-renders a result document: environment, solution trajectory and
/// the solution's covariance ellipses.
pub fn render_result(text: &str) -> Result<String, RunError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| RunError::BadResult(e.to_string()))?;
    let file: ScenarioFile = serde_json::from_value(doc.get("scenario_file").cloned().ok_or_else(|| bad("missing scenario_file"))?)
        .map_err(|e| RunError::BadResult(format!("scenario_file: {e}")))?;
    let loaded = file
        .build()
        .map_err(|issues| RunError::BadResult(format!("scenario_file: {}", issues.join("; "))))?;
    let mut scene = Scene::default();
    for p in doc.get("trajectory").and_then(Value::as_array).into_iter().flatten() {
        scene.solution.push(pair(p).ok_or_else(|| bad("trajectory entries must be [x, y]"))?);
    }
    for step in doc.get("path").and_then(Value::as_array).into_iter().flatten() {
        let c = step.get("position").and_then(pair).ok_or_else(|| bad("path entries need a position"))?;
        let p = step.get("P").ok_or_else(|| bad("path entries need P"))?;
        let at = |i: usize, j: usize| p.get(i).and_then(|r| r.get(j)).and_then(Value::as_f64);
        let cov = match (at(0, 0), at(0, 1), at(1, 0), at(1, 1)) {
            (Some(a), Some(b), Some(c), Some(d)) => Matrix2::new(a, b, c, d),
            _ => return Err(bad("P must be at least 2x2")),
        };
        scene.solution_ellipses.push(Ellipse::confidence95(c, &cov));
    }
    Ok(render_svg(&loaded.scenario, &scene))
}
