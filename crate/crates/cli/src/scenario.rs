//! On-disk scenario format.
//!
//! A scenario file is a JSON object:
//!
//! ```json
//! {
//!   "name": "corridor",
//!   "bounds": { "min": [0, 0], "max": [10, 4] },
//!   "obstacles": [[[4, 0], [6, 0], [6, 1.5], [4, 1.5]]],
//!   "info_regions": [],
//!   "start": { "state": [1, 2, 0, 0], "P0": 0.01, "Ptilde0": [0.01, 0.01, 0.01, 0.01] },
//!   "goal": [9, 2, 0, 0],
//!   "delta": 0.05,
//!   "model": { "kind": "double_integrator", "dt": 0.1 },
//!   "planner": { "mode": "ibbt", "batch_size": 25, "max_batches": 20 }
//! }
//! ```
//!
//! Matrices may be written as a scalar (multiple of the identity), a
//! diagonal, or a full row-major array of rows. Every key other than
//! `bounds`, `start`, `goal` and `model` is optional; unknown keys are
//! rejected.

use std::fmt;
use std::fs;
use std::path::Path;

use ibbt::{
    ChanceConfig, ModelKind, ModelSpec, NearParams, NoiseSpec, PlannerConfig, PlannerMode, Polygon, Rect,
    Scenario, StopRule,
};
use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: at `{field}`: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("{path}: invalid scenario:\n  {}", .issues.join("\n  "))]
    Invalid { path: String, issues: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn to_matrix(&self, n: usize, field: &str, issues: &mut Vec<String>) -> Option<DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(s) => Some(DMatrix::identity(n, n) * *s),
            MatrixSpec::Diagonal(d) => {
                if d.len() != n {
                    issues.push(format!("{field}: diagonal has {} entries, expected {n}", d.len()));
                    return None;
                }
                Some(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
            }
            MatrixSpec::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    issues.push(format!("{field}: must be {n}x{n}"));
                    return None;
                }
                Some(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }

    fn full(m: &DMatrix<f64>) -> Self {
        MatrixSpec::Full((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartFile {
    pub state: Vec<f64>,
    #[serde(rename = "P0", default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<MatrixSpec>,
    #[serde(rename = "Ptilde0", default, skip_serializing_if = "Option::is_none")]
    pub p_tilde0: Option<MatrixSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindFile {
    DoubleIntegrator,
    Dubins,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFile {
    pub info: MatrixSpec,
    pub default: MatrixSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kind: KindFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process_noise: Option<MatrixSpec>,
    #[serde(rename = "lqr_Q", default, skip_serializing_if = "Option::is_none")]
    pub lqr_q: Option<MatrixSpec>,
    #[serde(rename = "lqr_R", default, skip_serializing_if = "Option::is_none")]
    pub lqr_r: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering_speed_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_box: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_noise: Option<NoiseFile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeFile {
    Ibbt,
    Rrbt,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NearFile {
    pub gamma: f64,
    pub r_max: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_dominance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(rename = "lambda_P", default, skip_serializing_if = "Option::is_none")]
    pub lambda_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_pools: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_batches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_first_solution: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near: Option<NearFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub bounds: BoundsFile,
    #[serde(default)]
    pub obstacles: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub info_regions: Vec<Vec<[f64; 2]>>,
    pub start: StartFile,
    pub goal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub model: ModelFile,
    #[serde(default)]
    pub planner: PlannerFile,
}

/// A parsed scenario with the planner defaults it carries.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedScenario {
    pub name: String,
    pub scenario: Scenario,
    pub config: PlannerConfig,
}

impl fmt::Display for KindFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KindFile::DoubleIntegrator => "double_integrator",
            KindFile::Dubins => "dubins",
        })
    }
}

pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_TURN_RADIUS: f64 = 1.0;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_MAX_BATCHES: usize = 20;

fn polygons(raw: &[Vec<[f64; 2]>], field: &str, issues: &mut Vec<String>) -> Vec<Polygon> {
    raw.iter()
        .enumerate()
        .filter_map(|(i, pts)| {
            let pts = pts.iter().map(|p| Vector2::new(p[0], p[1])).collect();
            Polygon::new(pts).map_err(|e| issues.push(format!("{field}[{i}]: {e}"))).ok()
        })
        .collect()
}

impl ScenarioFile {
    /// Parses JSON text; errors carry the line, column and key path.
    pub fn parse(text: &str, path: &str) -> Result<Self, LoadError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            LoadError::Parse {
                path: path.to_string(),
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })
    }

    /// Builds the scenario and planner configuration, collecting every
    /// semantic problem rather than stopping at the first.
    pub fn build(&self) -> Result<LoadedScenario, Vec<String>> {
        let mut issues = Vec::new();
        let m = &self.model;
        let dt = m.dt.unwrap_or(DEFAULT_DT);
        let mut model = match m.kind {
            KindFile::DoubleIntegrator => ModelSpec::double_integrator(dt),
            KindFile::Dubins => ModelSpec::dubins(dt, m.turn_radius.unwrap_or(DEFAULT_TURN_RADIUS)),
        };
        if m.kind == KindFile::DoubleIntegrator && m.turn_radius.is_some() {
            issues.push("model.turn_radius: only valid for dubins".into());
        }
        let n = model.state_dim();
        let nu = model.control_dim();
        if let Some(g) = m.process_noise.as_ref().and_then(|s| s.to_matrix(n, "model.process_noise", &mut issues)) {
            model.process_noise = g;
        }
        if let Some(q) = m.lqr_q.as_ref().and_then(|s| s.to_matrix(n, "model.lqr_Q", &mut issues)) {
            model.lqr_q = q;
        }
        if let Some(r) = m.lqr_r.as_ref().and_then(|s| s.to_matrix(nu, "model.lqr_R", &mut issues)) {
            model.lqr_r = r;
        }
        if let Some(s) = m.steering_speed_scale {
            model.steering_speed_scale = s;
        }
        if let Some(w) = m.control_weight {
            model.control_weight = w;
        }
        let mut noise = NoiseSpec::for_model(model.kind);
        if let Some(nf) = &m.measurement_noise {
            if let Some(d) = nf.info.to_matrix(n, "model.measurement_noise.info", &mut issues) {
                noise.d_info = d;
            }
            if let Some(d) = nf.default.to_matrix(n, "model.measurement_noise.default", &mut issues) {
                noise.d_default = d;
            }
        }
        let [x0, y0] = self.bounds.min;
        let [x1, y1] = self.bounds.max;
        if !(x1 > x0 && y1 > y0) {
            issues.push("bounds: max must exceed min on both axes".into());
        }
        let bounds = Rect::new(x0, y0, x1, y1);
        let start = DVector::from_column_slice(&self.start.state);
        let goal = DVector::from_column_slice(&self.goal);
        let mut scenario = Scenario::new(bounds, start, goal, model);
        scenario.noise = noise;
        scenario.obstacles = polygons(&self.obstacles, "obstacles", &mut issues);
        scenario.info_regions = polygons(&self.info_regions, "info_regions", &mut issues);
        scenario.delta = self.delta.unwrap_or(DEFAULT_DELTA);
        if let Some(vb) = m.velocity_box {
            scenario.velocity_box = vb;
        }
        let p0 = self.start.p0.as_ref().and_then(|s| s.to_matrix(n, "start.P0", &mut issues));
        let pt0 = self.start.p_tilde0.as_ref().and_then(|s| s.to_matrix(n, "start.Ptilde0", &mut issues));
        match (p0, pt0) {
            (Some(p), Some(pt)) => {
                scenario.p0 = p;
                scenario.p_tilde0 = pt;
            }
            (Some(p), None) => {
                scenario.p_tilde0 = p.clone();
                scenario.p0 = p;
            }
            (None, Some(pt)) => {
                scenario.p0 = pt.clone();
                scenario.p_tilde0 = pt;
            }
            (None, None) => {}
        }
        issues.extend(scenario.validate());

        let p = &self.planner;
        let mode = match p.mode {
            Some(ModeFile::Rrbt) => PlannerMode::Rrbt,
            _ => PlannerMode::Ibbt,
        };
        let mut config = PlannerConfig::new(mode, scenario.delta);
        if let Some(b) = p.batch_size {
            config.batch_size = b;
        }
        if let Some(e) = p.eps_dominance {
            config.eps_dominance = e;
        }
        if let Some(s) = p.seed {
            config.seed = s;
        }
        if let Some(l) = p.lambda_p {
            config.lambda_p = l;
        }
        config.chance = ChanceConfig {
            delta: scenario.delta,
            mc_samples: p.mc_samples.unwrap_or(config.chance.mc_samples),
            check_stride: p.check_stride.unwrap_or(config.chance.check_stride),
        };
        if let Some(k) = p.mc_pools {
            config.mc_pools = k;
        }
        if let Some(g) = p.goal_bias {
            config.goal_bias = g;
        }
        config.stop = match (p.max_seconds, p.max_batches) {
            (None, None) => StopRule::batches(DEFAULT_MAX_BATCHES),
            (s, b) => StopRule {
                max_seconds: s,
                max_batches: b,
                stop_at_first_solution: false,
            },
        };
        config.stop.stop_at_first_solution = p.stop_at_first_solution.unwrap_or(false);
        config.near = p.near.as_ref().map(|n| NearParams {
            gamma: n.gamma,
            r_max: n.r_max,
        });
        if let Some(near) = &config.near {
            if !(near.gamma > 0.0 && near.r_max > 0.0) {
                issues.push("planner.near: gamma and r_max must be positive".into());
            }
        }
        if let Err(e) = config.validate() {
            issues.push(format!("planner: {e}"));
        }
        if !issues.is_empty() {
            return Err(issues);
        }
        Ok(LoadedScenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            scenario,
            config,
        })
    }

    /// Fully explicit file describing `scenario` and `config`.
    pub fn from_parts(name: &str, scenario: &Scenario, config: &PlannerConfig) -> Self {
        let pts = |polys: &[Polygon]| -> Vec<Vec<[f64; 2]>> {
            polys.iter().map(|p| p.vertices().iter().map(|v| [v.x, v.y]).collect()).collect()
        };
        let model = &scenario.model;
        let kind = match model.kind {
            ModelKind::DoubleIntegrator2D => KindFile::DoubleIntegrator,
            ModelKind::Dubins => KindFile::Dubins,
        };
        ScenarioFile {
            name: Some(name.to_string()),
            description: None,
            bounds: BoundsFile {
                min: [scenario.bounds.min.x, scenario.bounds.min.y],
                max: [scenario.bounds.max.x, scenario.bounds.max.y],
            },
            obstacles: pts(&scenario.obstacles),
            info_regions: pts(&scenario.info_regions),
            start: StartFile {
                state: scenario.start.iter().copied().collect(),
                p0: Some(MatrixSpec::full(&scenario.p0)),
                p_tilde0: Some(MatrixSpec::full(&scenario.p_tilde0)),
            },
            goal: scenario.goal.iter().copied().collect(),
            delta: Some(scenario.delta),
            model: ModelFile {
                kind,
                dt: Some(model.dt),
                process_noise: Some(MatrixSpec::full(&model.process_noise)),
                lqr_q: Some(MatrixSpec::full(&model.lqr_q)),
                lqr_r: Some(MatrixSpec::full(&model.lqr_r)),
                turn_radius: (kind == KindFile::Dubins).then_some(model.turn_radius),
                steering_speed_scale: Some(model.steering_speed_scale),
                control_weight: Some(model.control_weight),
                velocity_box: Some(scenario.velocity_box),
                measurement_noise: Some(NoiseFile {
                    info: MatrixSpec::full(&scenario.noise.d_info),
                    default: MatrixSpec::full(&scenario.noise.d_default),
                }),
            },
            planner: PlannerFile {
                mode: Some(match config.mode {
                    PlannerMode::Ibbt => ModeFile::Ibbt,
                    PlannerMode::Rrbt => ModeFile::Rrbt,
                }),
                batch_size: Some(config.batch_size),
                eps_dominance: Some(config.eps_dominance),
                seed: Some(config.seed),
                lambda_p: Some(config.lambda_p),
                mc_samples: Some(config.chance.mc_samples),
                check_stride: Some(config.chance.check_stride),
                mc_pools: Some(config.mc_pools),
                goal_bias: Some(config.goal_bias),
                max_seconds: config.stop.max_seconds,
                max_batches: config.stop.max_batches,
                stop_at_first_solution: Some(config.stop.stop_at_first_solution),
                near: config.near.map(|n| NearFile {
                    gamma: n.gamma,
                    r_max: n.r_max,
                }),
            },
        }
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, LoadError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_scenario(&text, &shown)
}

/// [`load_scenario`] on in-memory text; `path` only labels errors.
pub fn parse_scenario(text: &str, path: &str) -> Result<LoadedScenario, LoadError> {
    let file = ScenarioFile::parse(text, path)?;
    file.build().map_err(|issues| LoadError::Invalid {
        path: path.to_string(),
        issues,
    })
}

/// Pretty JSON for `scenario` and `config`.
pub fn scenario_to_json(name: &str, scenario: &Scenario, config: &PlannerConfig) -> String {
    let file = ScenarioFile::from_parts(name, scenario, config);
    serde_json::to_string_pretty(&file).expect("scenario files serialize") + "\n"
}

pub fn write_scenario(path: &Path, name: &str, scenario: &Scenario, config: &PlannerConfig) -> std::io::Result<()> {
    fs::write(path, scenario_to_json(name, scenario, config))
}
