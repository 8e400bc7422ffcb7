use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use approx::assert_relative_eq;
use ibbt::{Graph, ModelKind, NoiseSpec, PlannerMode, Polygon, StopRule};
use ibbt_cli::bench::{run_benchmark, BenchmarkOptions};
use ibbt_cli::render::{render_svg, Scene};
use ibbt_cli::run::{run_plan, PlanOptions, EXIT_NO_SOLUTION, EXIT_OK};
use ibbt_cli::scenario::{load_scenario, parse_scenario, scenario_to_json, LoadedScenario};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use proptest::prelude::*;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

fn load(name: &str) -> LoadedScenario {
    load_scenario(&fixture(name)).unwrap_or_else(|e| panic!("{e}"))
}

fn quiet() -> PlanOptions {
    PlanOptions {
        render: false,
        rollouts: 0,
    }
}

#[test]
fn all_fixtures_load() {
    for name in ["double_integrator_env1", "double_integrator_env2", "dubins", "corridor"] {
        let l = load(name);
        assert_eq!(l.name, name);
    }
}

#[test]
fn env1_noise_matches_model_parameters() {
    let l = load("double_integrator_env1");
    let s = &l.scenario;
    assert_eq!(s.model.kind, ModelKind::DoubleIntegrator2D);
    assert_eq!(s.noise.d_info, DMatrix::identity(4, 4) * 0.01);
    assert_eq!(s.noise.d_default, DMatrix::identity(4, 4));
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![0.03, 0.03, 0.02, 0.02]));
    assert_eq!(s.model.process_noise, g);
    // G for one step is √dt times the stored matrix.
    let step = s.model.noise_input(0.1);
    assert_relative_eq!(step, g * 0.1f64.sqrt(), epsilon = 1e-15);
    assert_eq!(s.noise, NoiseSpec::for_model(ModelKind::DoubleIntegrator2D));
}

#[test]
fn dubins_fixture_noise() {
    let s = load("dubins").scenario;
    assert_eq!(s.noise.d_info, DMatrix::identity(3, 3) * 0.1);
    assert_eq!(s.noise.d_default, DMatrix::identity(3, 3) * 2.0);
    assert_eq!(s.model.lqr_q, DMatrix::identity(3, 3) * 2.0);
    assert_eq!(s.model.lqr_r, DMatrix::identity(1, 1));
    assert_eq!(s.model.process_noise, DMatrix::identity(3, 3) * 0.02);
}

#[test]
fn fixtures_round_trip() {
    for name in ["double_integrator_env1", "double_integrator_env2", "dubins", "corridor"] {
        let l = load(name);
        let text = scenario_to_json(&l.name, &l.scenario, &l.config);
        assert_eq!(parse_scenario(&text, "rt").unwrap(), l, "{name}");
    }
}

fn arb_rect() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.5f64..8.0, 0.5f64..8.0, 0.1f64..1.5, 0.1f64..1.5).prop_map(|(x, y, w, h)| (x, y, x + w, y + h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_scenarios_round_trip(
        obstacles in prop::collection::vec(arb_rect(), 0..4),
        regions in prop::collection::vec(arb_rect(), 0..3),
        p in 0.001f64..0.5,
        frac in 0.0f64..1.0,
        delta in 0.001f64..0.5,
        dt in 0.01f64..0.3,
        seed in any::<u64>(),
        batch in 1usize..100,
        lambda in 0.0f64..2.0,
        dubins in any::<bool>(),
    ) {
        let kind = if dubins { "dubins" } else { "double_integrator" };
        let dims = if dubins { 3 } else { 4 };
        let zeros = vec!["0"; dims - 2].join(", ");
        let poly = |r: &(f64, f64, f64, f64)| format!("[[{},{}],[{},{}],[{},{}],[{},{}]]", r.0, r.1, r.2, r.1, r.2, r.3, r.0, r.3);
        let obs: Vec<String> = obstacles.iter().map(poly).collect();
        let reg: Vec<String> = regions.iter().map(poly).collect();
        let text = format!(
            r#"{{"bounds": {{"min": [0, 0], "max": [10, 10]}},
                "obstacles": [{}], "info_regions": [{}],
                "start": {{"state": [0.2, 0.2, {zeros}], "P0": {p}, "Ptilde0": {}}},
                "goal": [9.8, 9.8, {zeros}], "delta": {delta},
                "model": {{"kind": "{kind}", "dt": {dt}}},
                "planner": {{"seed": {seed}, "batch_size": {batch}, "lambda_P": {lambda}}}}}"#,
            obs.join(","), reg.join(","), p * frac,
        );
        let l = parse_scenario(&text, "gen").unwrap();
        let back = parse_scenario(&scenario_to_json(&l.name, &l.scenario, &l.config), "rt").unwrap();
        prop_assert_eq!(back, l);
    }
}

#[test]
fn unreachable_goal_exits_2_with_inf_cost() {
    let mut l = load("corridor");
    l.scenario.obstacles.push(Polygon::rect(4.0, 0.0, 4.5, 4.0));
    let mut config = l.config.clone();
    config.stop = StopRule::batches(3);
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_plan(&l, config, dir.path(), PlanOptions::default()).unwrap();
    assert_eq!(outcome.exit_code, EXIT_NO_SOLUTION);
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(doc["cost"], Value::String("inf".into()));
    assert_eq!(doc["solved"], Value::Bool(false));
    assert_eq!(doc["path"].as_array().unwrap().len(), 0);
    let csv = fs::read_to_string(dir.path().join("anytime.csv")).unwrap();
    assert_eq!(csv, "wall_s,batch,cost\n");
    assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".svg")));
}

#[test]
fn same_seed_gives_identical_result_json() {
    let l = load("double_integrator_env1");
    let mut config = l.config.clone();
    config.stop = StopRule::batches(4);
    config.seed = 11;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_plan(&l, config.clone(), a.path(), quiet()).unwrap();
    run_plan(&l, config, b.path(), quiet()).unwrap();
    let ja = fs::read(a.path().join("result.json")).unwrap();
    let jb = fs::read(b.path().join("result.json")).unwrap();
    assert_eq!(ja, jb);
    assert_eq!(fs::read(a.path().join("graph.txt")).unwrap(), fs::read(b.path().join("graph.txt")).unwrap());
}

#[test]
fn corridor_costs_nonincreasing() {
    let l = load("corridor");
    for seed in 0..3 {
        let mut config = l.config.clone();
        config.seed = seed;
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_plan(&l, config, dir.path(), quiet()).unwrap();
        assert_eq!(outcome.exit_code, EXIT_OK);
        let csv = fs::read_to_string(dir.path().join("anytime.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("wall_s,batch,cost"));
        let costs: Vec<f64> = lines.map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
        assert!(!costs.is_empty());
        assert!(costs.windows(2).all(|w| w[1] <= w[0]), "{costs:?}");
    }
}

fn svg_doc(text: &str) -> roxmltree::Document<'_> {
    roxmltree::Document::parse(text).expect("well-formed SVG")
}

#[test]
fn empty_graph_renders_environment_only() {
    let l = load("double_integrator_env2");
    let svg = render_svg(&l.scenario, &Scene::default());
    let doc = svg_doc(&svg);
    let count = |tag: &str| doc.descendants().filter(|n| n.has_tag_name(tag)).count();
    assert_eq!(count("polygon"), l.scenario.obstacles.len() + l.scenario.info_regions.len());
    assert_eq!(count("polyline"), 0);
    assert_eq!(count("ellipse"), 0);
}

#[test]
fn identity_covariance_ellipse_in_svg() {
    let l = load("corridor");
    let scene = Scene {
        solution_ellipses: vec![ibbt_cli::render::Ellipse::confidence95(Vector2::zeros(), &Matrix2::identity())],
        ..Scene::default()
    };
    let svg = render_svg(&l.scenario, &scene);
    let doc = svg_doc(&svg);
    let e = doc.descendants().find(|n| n.has_tag_name("ellipse")).unwrap();
    let chi2_quantile = -2.0 * 0.05f64.ln();
    for attr in ["rx", "ry"] {
        let r: f64 = e.attribute(attr).unwrap().parse().unwrap();
        assert_relative_eq!(r, 2.4477, epsilon = 1e-4);
        assert_relative_eq!(r, chi2_quantile.sqrt(), epsilon = 1e-11);
    }
}

fn polyline_points(node: roxmltree::Node<'_, '_>) -> Vec<[f64; 2]> {
    node.attribute("points")
        .unwrap()
        .split_whitespace()
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            [x.parse().unwrap(), y.parse().unwrap()]
        })
        .collect()
}

#[test]
fn solved_fixture_svg_matches_result_json() {
    let l = load("double_integrator_env1");
    let mut config = l.config.clone();
    config.stop = StopRule::batches(6);
    config.seed = 3;
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_plan(&l, config, dir.path(), PlanOptions { render: true, rollouts: 3 }).unwrap();
    assert_eq!(outcome.exit_code, EXIT_OK);
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    let trajectory: Vec<[f64; 2]> = doc["trajectory"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| [p[0].as_f64().unwrap(), p[1].as_f64().unwrap()])
        .collect();
    let positions: Vec<[f64; 2]> = doc["path"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| [s["position"][0].as_f64().unwrap(), s["position"][1].as_f64().unwrap()])
        .collect();
    assert!(positions.iter().all(|p| trajectory.contains(p)));
    assert_eq!(trajectory.first(), positions.first());
    assert_eq!(trajectory.last(), positions.last());

    let last = outcome.result.trace.len();
    let svg_path = dir.path().join(format!("solution_{last:03}.svg"));
    let text = fs::read_to_string(svg_path).unwrap();
    let svg = svg_doc(&text);
    let line = svg.descendants().find(|n| n.attribute("id") == Some("solution")).unwrap();
    assert_eq!(polyline_points(line), trajectory);
    let rollouts = svg.descendants().filter(|n| n.attribute("class") == Some("rollout")).count();
    assert_eq!(rollouts, 3);

    // Re-rendering from the JSON alone draws the same polyline.
    let again = ibbt_cli::run::render_result(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    let again = svg_doc(&again);
    let line = again.descendants().find(|n| n.attribute("id") == Some("solution")).unwrap();
    assert_eq!(polyline_points(line), trajectory);
    let ellipses: Vec<_> = again.descendants().filter(|n| n.has_tag_name("ellipse")).collect();
    assert_eq!(ellipses.len(), positions.len());
    // Axes are 2.4477·√λ of the plotted marginal.
    for (e, step) in ellipses.iter().zip(doc["path"].as_array().unwrap()) {
        let p = &step["P"];
        let m = Matrix2::new(
            p[0][0].as_f64().unwrap(),
            p[0][1].as_f64().unwrap(),
            p[1][0].as_f64().unwrap(),
            p[1][1].as_f64().unwrap(),
        );
        let eig = m.symmetric_eigen();
        let (hi, lo) = (eig.eigenvalues.max(), eig.eigenvalues.min());
        let rx: f64 = e.attribute("rx").unwrap().parse().unwrap();
        let ry: f64 = e.attribute("ry").unwrap().parse().unwrap();
        let k = (-2.0 * 0.05f64.ln()).sqrt();
        assert_relative_eq!(rx, k * hi.sqrt(), max_relative = 1e-9);
        assert_relative_eq!(ry, k * lo.sqrt(), max_relative = 1e-9);
    }
}

#[test]
fn graph_dump_lists_vertices_then_edges() {
    let l = load("corridor");
    let mut config = l.config.clone();
    config.stop = StopRule::batches(2);
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_plan(&l, config, dir.path(), quiet()).unwrap();
    let dump = fs::read_to_string(dir.path().join("graph.txt")).unwrap();
    let v = dump.lines().filter(|l| l.starts_with("V ")).count();
    let e = dump.lines().filter(|l| l.starts_with("E ")).count();
    assert_eq!(v, outcome.result.stats.vertices);
    assert_eq!(e, outcome.result.stats.edges);
    let goal = dump.lines().nth(Graph::GOAL.0).unwrap();
    assert!(goal.starts_with("V 1 0 "));
}

#[test]
fn benchmark_single_planner_single_seed() {
    let l = load("corridor");
    let mut config = l.config.clone();
    config.stop = StopRule::batches(3);
    let opts = BenchmarkOptions {
        seeds: vec![5],
        planners: vec![PlannerMode::Ibbt],
        threads: Some(1),
    };
    let report = run_benchmark(&l.name, &l.scenario, &config, &opts).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.summaries.len(), 1);
    let r = &report.records[0];
    assert_eq!((r.planner, r.seed), (PlannerMode::Ibbt, 5));
    assert_eq!(report.summaries[0].median_first_cost, r.first_cost);
    let dir = tempfile::tempdir().unwrap();
    ibbt_cli::bench::write_report(&report, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("benchmark.csv")).unwrap();
    assert!(csv.starts_with("planner,seed,wall_s,batch,cost\n"));
    assert_eq!(csv.lines().count(), 1 + r.trace.len());
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(doc["records"].as_array().unwrap().len(), 1);
}

#[test]
fn benchmark_records_reproducible_from_seed() {
    let l = load("corridor");
    let mut config = l.config.clone();
    config.stop = StopRule::batches(3);
    let opts = BenchmarkOptions {
        seeds: vec![1, 2],
        planners: vec![PlannerMode::Ibbt, PlannerMode::Rrbt],
        threads: Some(2),
    };
    let a = run_benchmark(&l.name, &l.scenario, &config, &opts).unwrap();
    let b = run_benchmark(&l.name, &l.scenario, &config, &opts).unwrap();
    assert_eq!(a.records.len(), 4);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!((x.planner, x.seed), (y.planner, y.seed));
        assert_eq!(x.final_cost.to_bits(), y.final_cost.to_bits());
        assert_eq!(x.stats, y.stats);
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ibbt"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan");
    let status = bin()
        .args(["plan", "--scenario"])
        .arg(fixture("corridor"))
        .args(["--max-batches", "4", "--seed", "2", "--out"])
        .arg(&out)
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("result.json").exists());
    let svg = dir.path().join("r.svg");
    let status = bin()
        .args(["render", "--result"])
        .arg(out.join("result.json"))
        .arg("--out")
        .arg(&svg)
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    svg_doc(&fs::read_to_string(&svg).unwrap());

    let usage = bin().args(["plan", "--no-such-flag"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
    let missing = bin().args(["plan", "--scenario", "/nonexistent.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let bad_delta = bin()
        .args(["plan", "--scenario"])
        .arg(fixture("corridor"))
        .args(["--delta", "1.5", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(bad_delta.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_delta.stderr).contains("delta"));

    let walled = dir.path().join("walled.json");
    let text = fs::read_to_string(fixture("corridor")).unwrap().replace(
        r#""obstacles": ["#,
        r#""obstacles": [[[4.0, 0.0], [4.5, 0.0], [4.5, 4.0], [4.0, 4.0]], "#,
    );
    fs::write(&walled, text).unwrap();
    let status = bin()
        .args(["plan", "--scenario"])
        .arg(&walled)
        .args(["--max-batches", "2", "--out"])
        .arg(dir.path().join("w"))
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn binary_benchmark_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["benchmark", "--scenario"])
        .arg(fixture("corridor"))
        .args(["--seeds", "2", "--planners", "ibbt,rrbt", "--max-batches", "2", "--threads", "1", "--out"])
        .arg(dir.path())
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(doc["records"].as_array().unwrap().len(), 4);
    assert_eq!(doc["summary"].as_array().unwrap().len(), 2);
}
