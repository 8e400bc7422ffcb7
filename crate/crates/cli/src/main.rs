use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ibbt::PlannerMode;
use ibbt_cli::bench::{run_benchmark, write_report, BenchmarkOptions};
use ibbt_cli::output::fmt12;
use ibbt_cli::run::{render_result, run_plan, PlanOptions, EXIT_USAGE};
use ibbt_cli::scenario::{load_scenario, LoadedScenario};

#[derive(Parser)]
#[command(name = "ibbt", version, about = "Belief-space motion planning with chance constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Ibbt,
    Rrbt,
}

impl From<PlannerArg> for PlannerMode {
    fn from(p: PlannerArg) -> Self {
        match p {
            PlannerArg::Ibbt => PlannerMode::Ibbt,
            PlannerArg::Rrbt => PlannerMode::Rrbt,
        }
    }
}

/// Overrides shared by `plan` and `benchmark`.
#[derive(clap::Args)]
struct Overrides {
    /// Samples per batch.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Per-step collision probability bound.
    #[arg(long)]
    delta: Option<f64>,
    /// Monte-Carlo samples per chance check.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Wall-clock budget in seconds. Giving this or --max-batches replaces
    /// the scenario's stop rule.
    #[arg(long)]
    max_seconds: Option<f64>,
    /// Batch budget.
    #[arg(long)]
    max_batches: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Plan once and write result.json, anytime.csv, graph.txt and SVGs.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        planner: Option<PlannerArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Monte-Carlo executions drawn over each solution picture.
        #[arg(long, default_value_t = 0)]
        rollouts: usize,
        /// Skip the per-solution SVGs.
        #[arg(long)]
        no_svg: bool,
    },
    /// Run planners over seeds 0..N and write report.json and benchmark.csv.
    Benchmark {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seeds: u64,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "ibbt,rrbt")]
        planners: Vec<PlannerArg>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "bench")]
        out: PathBuf,
        /// Worker threads (default: one per core).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Draw a result.json as SVG.
    Render {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn apply(loaded: &mut LoadedScenario, o: &Overrides) {
    let c = &mut loaded.config;
    if let Some(b) = o.batch_size {
        c.batch_size = b;
    }
    if let Some(d) = o.delta {
        loaded.scenario.delta = d;
        c.chance.delta = d;
    }
    if let Some(k) = o.mc_samples {
        c.chance.mc_samples = k;
    }
    if o.max_seconds.is_some() || o.max_batches.is_some() {
        c.stop.max_seconds = o.max_seconds;
        c.stop.max_batches = o.max_batches;
    }
}

fn load(path: &Path, o: &Overrides) -> Result<LoadedScenario, String> {
    let mut loaded = load_scenario(path).map_err(|e| e.to_string())?;
    apply(&mut loaded, o);
    let mut issues = loaded.scenario.validate();
    if let Err(e) = loaded.config.validate() {
        issues.push(e.to_string());
    }
    if issues.is_empty() {
        Ok(loaded)
    } else {
        Err(format!("{}: invalid settings:\n  {}", path.display(), issues.join("\n  ")))
    }
}

fn execute(cmd: Command) -> Result<i32, String> {
    match cmd {
        Command::Plan {
            scenario,
            planner,
            seed,
            overrides,
            out,
            rollouts,
            no_svg,
        } => {
            let loaded = load(&scenario, &overrides)?;
            let mut config = loaded.config.clone();
            if let Some(p) = planner {
                config.mode = p.into();
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            let opts = PlanOptions {
                render: !no_svg,
                rollouts,
            };
            let outcome = run_plan(&loaded, config, &out, opts).map_err(|e| e.to_string())?;
            let r = &outcome.result;
            println!(
                "{}: cost {} after {} batches ({} solutions); output in {}",
                r.mode.name(),
                fmt12(r.cost),
                r.stats.batches,
                r.trace.len(),
                out.display()
            );
            Ok(outcome.exit_code)
        }
        Command::Benchmark {
            scenario,
            seeds,
            planners,
            overrides,
            out,
            threads,
        } => {
            let loaded = load(&scenario, &overrides)?;
            let opts = BenchmarkOptions {
                seeds: (0..seeds).collect(),
                planners: planners.into_iter().map(Into::into).collect(),
                threads,
            };
            let report =
                run_benchmark(&loaded.name, &loaded.scenario, &loaded.config, &opts).map_err(|e| e.to_string())?;
            write_report(&report, &out).map_err(|e| e.to_string())?;
            for s in &report.summaries {
                println!(
                    "{}: solved {}/{}, median first solution {} s, cost {}, pops {}",
                    s.planner.name(),
                    s.solved,
                    s.runs,
                    fmt12(s.median_first_time),
                    fmt12(s.median_first_cost),
                    fmt12(s.median_first_pops)
                );
            }
            Ok(0)
        }
        Command::Render { result, out } => {
            let text = std::fs::read_to_string(&result).map_err(|e| format!("{}: {e}", result.display()))?;
            let svg = render_result(&text).map_err(|e| format!("{}: {e}", result.display()))?;
            std::fs::write(&out, svg).map_err(|e| format!("{}: {e}", out.display()))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IBBT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
