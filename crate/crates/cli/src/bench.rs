//! Planner-versus-planner benchmark over seeds.

use std::fs;
use std::path::Path;

use ibbt::planner::PlanError;
use ibbt::{PlanStats, Planner, PlannerConfig, PlannerMode, Scenario, TracePoint};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::{fmt12, to_pretty};
use crate::run::RunError;

/// One planner run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub planner: PlannerMode,
    pub seed: u64,
    /// Wall time of the first solution, `+∞` if none.
    pub first_time: f64,
    pub first_cost: f64,
    /// Queue pops until the first solution, or over the whole run when
    /// unsolved.
    pub first_pops: usize,
    pub final_cost: f64,
    pub trace: Vec<TracePoint>,
    pub stats: PlanStats,
    pub wall_s: f64,
}

impl RunRecord {
    /// Best cost emitted at or before `t` seconds, `+∞` if none.
    pub fn cost_at(&self, t: f64) -> f64 {
        cost_at(&self.trace, t)
    }
}

pub fn cost_at(trace: &[TracePoint], t: f64) -> f64 {
    trace
        .iter()
        .take_while(|p| p.wall_s <= t)
        .last()
        .map_or(f64::INFINITY, |p| p.cost)
}

/// Median with the upper middle element for even counts; `+∞` entries
/// sort last.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            b
        } else {
            0.5 * (a + b)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub planner: PlannerMode,
    pub runs: usize,
    pub solved: usize,
    pub median_first_time: f64,
    pub median_first_cost: f64,
    pub median_first_pops: f64,
    pub median_final_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub scenario: String,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<Summary>,
}

impl BenchmarkReport {
    pub fn summary(&self, mode: PlannerMode) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.planner == mode)
    }

    pub fn records_for(&self, mode: PlannerMode) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(move |r| r.planner == mode)
    }
}

/// Runs one planner on one seed with the stop rule in `config`.
pub fn run_once(scenario: &Scenario, config: &PlannerConfig, mode: PlannerMode, seed: u64) -> Result<RunRecord, PlanError> {
    let mut cfg = config.clone();
    cfg.mode = mode;
    cfg.seed = seed;
    let mut planner = Planner::new(scenario.clone(), cfg)?;
    let r = planner.run(|_| {})?;
    let wall_s = planner.elapsed();
    let first = r.first_solution().copied();
    Ok(RunRecord {
        planner: mode,
        seed,
        first_time: first.map_or(f64::INFINITY, |p| p.wall_s),
        first_cost: first.map_or(f64::INFINITY, |p| p.cost),
        first_pops: first.map_or(r.stats.queue_pops, |p| p.pops),
        final_cost: r.cost,
        trace: r.trace,
        stats: r.stats,
        wall_s,
    })
}

pub struct BenchmarkOptions {
    pub seeds: Vec<u64>,
    pub planners: Vec<PlannerMode>,
    /// Worker threads; `None` uses rayon's global pool.
    pub threads: Option<usize>,
}

/// Runs every planner on every seed, one planner instance per task.
pub fn run_benchmark(
    name: &str,
    scenario: &Scenario,
    config: &PlannerConfig,
    opts: &BenchmarkOptions,
) -> Result<BenchmarkReport, PlanError> {
    let jobs: Vec<(PlannerMode, u64)> = opts
        .planners
        .iter()
        .flat_map(|&m| opts.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let work = || -> Result<Vec<RunRecord>, PlanError> {
        jobs.par_iter()
            .map(|&(m, s)| run_once(scenario, config, m, s))
            .collect()
    };
    let records = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool builds")
            .install(work)?,
        None => work()?,
    };
    let summaries = opts
        .planners
        .iter()
        .map(|&m| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.planner == m).collect();
            let col = |f: fn(&RunRecord) -> f64| median(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            Summary {
                planner: m,
                runs: rs.len(),
                solved: rs.iter().filter(|r| r.first_cost.is_finite()).count(),
                median_first_time: col(|r| r.first_time),
                median_first_cost: col(|r| r.first_cost),
                median_first_pops: col(|r| r.first_pops as f64),
                median_final_cost: col(|r| r.final_cost),
            }
        })
        .collect();
    Ok(BenchmarkReport {
        scenario: name.to_string(),
        records,
        summaries,
    })
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(crate::output::round12(x))
    } else {
        json!(fmt12(x))
    }
}

pub fn report_json(report: &BenchmarkReport) -> Value {
    let records: Vec<Value> = report
        .records
        .iter()
        .map(|r| {
            json!({
                "planner": r.planner.name(),
                "seed": r.seed,
                "first_solution_time": num(r.first_time),
                "first_solution_cost": num(r.first_cost),
                "first_solution_pops": r.first_pops,
                "final_cost": num(r.final_cost),
                "wall_s": num(r.wall_s),
                "trace": r.trace.iter().map(|p| json!({
                    "wall_s": num(p.wall_s), "batch": p.batch, "cost": num(p.cost), "pops": p.pops,
                })).collect::<Vec<_>>(),
                "stats": {
                    "batches": r.stats.batches,
                    "vertices": r.stats.vertices,
                    "edges": r.stats.edges,
                    "nodes_created": r.stats.nodes_created,
                    "nodes_removed": r.stats.nodes_removed,
                    "propagations": r.stats.propagations,
                    "queue_pops": r.stats.queue_pops,
                },
            })
        })
        .collect();
    let summaries: Vec<Value> = report
        .summaries
        .iter()
        .map(|s| {
            json!({
                "planner": s.planner.name(),
                "runs": s.runs,
                "solved": s.solved,
                "median_first_solution_time": num(s.median_first_time),
                "median_first_solution_cost": num(s.median_first_cost),
                "median_first_solution_pops": num(s.median_first_pops),
                "median_final_cost": num(s.median_final_cost),
            })
        })
        .collect();
    json!({"scenario": report.scenario, "records": records, "summary": summaries})
}

pub const BENCHMARK_CSV_HEADER: &str = "planner,seed,wall_s,batch,cost";

/// Every emitted solution of every run, for cost-versus-time plots.
pub fn benchmark_csv(report: &BenchmarkReport) -> String {
    let mut out = String::from(BENCHMARK_CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        for p in &r.trace {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.planner.name(),
                r.seed,
                fmt12(p.wall_s),
                p.batch,
                fmt12(p.cost)
            ));
        }
    }
    out
}

/// Writes `report.json` and `benchmark.csv` into `dir`.
pub fn write_report(report: &BenchmarkReport, dir: &Path) -> Result<(), RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let p = dir.join("report.json");
    fs::write(&p, to_pretty(&report_json(report))).map_err(io(&p))?;
    let p = dir.join("benchmark.csv");
    fs::write(&p, benchmark_csv(report)).map_err(io(&p))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(wall_s: f64, cost: f64) -> TracePoint {
        TracePoint {
            wall_s,
            batch: 0,
            cost,
            pops: 0,
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[1.0, f64::INFINITY]), f64::INFINITY);
        assert_eq!(median(&[1.0, 2.0, f64::INFINITY]), 2.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn checkpoint_cost() {
        let trace = [tp(0.5, 10.0), tp(1.0, 8.0), tp(3.0, 7.0)];
        assert_eq!(cost_at(&trace, 0.1), f64::INFINITY);
        assert_eq!(cost_at(&trace, 0.5), 10.0);
        assert_eq!(cost_at(&trace, 2.0), 8.0);
        assert_eq!(cost_at(&trace, 9.0), 7.0);
    }
}
