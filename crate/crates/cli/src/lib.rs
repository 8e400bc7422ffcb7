//! Scenario files, planner runs, benchmarks and SVG output for `ibbt`.

pub mod bench;
pub mod output;
pub mod render;
pub mod run;
pub mod scenario;

pub use bench::{run_benchmark, BenchmarkOptions, BenchmarkReport, RunRecord};
pub use run::{render_result, run_plan, PlanOptions, PlanOutcome, RunError};
pub use scenario::{load_scenario, parse_scenario, write_scenario, LoadError, LoadedScenario, ScenarioFile};
