use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"
schema = 1

[grid]
nodes = 9

[loads]
samples = 1000
rate_hz = 10.0
unloaded = [3, 6]

[preprocess]
window = 10
"#;

fn ybus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ybus")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ybus(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, scenario: &str) -> PathBuf {
    let file = dir.join("scenario.toml");
    fs::write(&file, scenario).unwrap();
    let out = dir.join("sim");
    ok(&["simulate", "--scenario", p(&file), "--out", p(&out)]);
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn output_hashes(manifest: &Value) -> Vec<(String, String)> {
    manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            let name = Path::new(e["path"].as_str().unwrap()).file_name().unwrap().to_string_lossy().into_owned();
            (name, e["sha256"].as_str().unwrap().to_string())
        })
        .collect()
}

#[test]
fn simulate_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let (sa, sb) = (simulate(a.path(), SMALL), simulate(b.path(), SMALL));
    for f in ["measurements.csv", "measurements.meta.json", "exact.csv", "truth.triplets", "scenario.toml"] {
        assert_eq!(fs::read(sa.join(f)).unwrap(), fs::read(sb.join(f)).unwrap(), "{f} differs");
    }
    let (ma, mb) = (json(&sa.join("manifest.json")), json(&sb.join("manifest.json")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(output_hashes(&ma), output_hashes(&mb));
    assert_eq!(ma["seeds"]["noise"], 0);
}

#[test]
fn seed_override_changes_the_draws() {
    let dir = TempDir::new().unwrap();
    let base = simulate(dir.path(), SMALL);
    let other = dir.path().join("seeded");
    ok(&["simulate", "--scenario", p(&dir.path().join("scenario.toml")), "--seed", "7", "--out", p(&other)]);
    assert_ne!(fs::read(base.join("measurements.csv")).unwrap(), fs::read(other.join("measurements.csv")).unwrap());
    assert_eq!(json(&other.join("manifest.json"))["seeds"]["grid"], 7);
}

#[test]
fn missing_sections_take_recorded_defaults() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), "[loads]\nsamples = 200\nunloaded = [3, 6]\n");
    let manifest = json(&sim.join("manifest.json"));
    assert_eq!(manifest["config"]["noise"]["magnitude"], 1e-4);
    assert_eq!(manifest["config"]["noise"]["rating_factor"], 4.0);
    assert_eq!(manifest["config"]["schema"], 1);
    let resolved = fs::read_to_string(sim.join("scenario.toml")).unwrap();
    assert!(resolved.contains("[noise]"));
}

#[test]
fn exact_data_gives_exact_least_squares() {
    let dir = TempDir::new().unwrap();
    // Unfiltered: the window average is taken in polar form and is not linear.
    let sim = simulate(dir.path(), "[loads]\nsamples = 500\nrate_hz = 10.0\nunloaded = [3, 6]\n");
    let est = dir.path().join("ols");
    let stdout = ok(&[
        "estimate",
        "--measurements",
        p(&sim.join("exact.csv")),
        "--method",
        "ols",
        "--truth",
        p(&sim.join("truth.triplets")),
        "--out",
        p(&est),
    ]);
    let summary: Value = serde_json::from_str(&stdout).unwrap();
    assert!(summary["eps_f"].as_f64().unwrap() < 1e-8, "{summary}");
    let eval = json(&est.join("evaluation.json"));
    assert_eq!(eval["precision"], 1.0);
    assert_eq!(eval["recall"], 1.0);
}

#[test]
fn map_run_writes_trace_mle_and_manifest() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), SMALL);
    let solver = dir.path().join("solver.toml");
    fs::write(&solver, "algorithm = \"bar\"\n").unwrap();
    let est = dir.path().join("map");
    ok(&[
        "estimate",
        "--measurements",
        p(&sim.join("measurements.csv")),
        "--method",
        "map",
        "--solver",
        p(&solver),
        "--seed",
        "5",
        "--out",
        p(&est),
    ]);
    for f in ["estimate.triplets", "estimate.json", "estimate.csv", "trace.csv", "mle.triplets", "manifest.json"] {
        assert!(est.join(f).exists(), "{f} missing");
    }
    let manifest = json(&est.join("manifest.json"));
    assert_eq!(manifest["seeds"]["solver"], 5);
    assert_eq!(manifest["config"]["solver"]["algorithm"], "bar");
    assert_eq!(manifest["config"]["method"], "map");
}

#[test]
fn evaluate_scores_identical_and_empty_estimates() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), SMALL);
    let truth = sim.join("truth.triplets");
    let same: Value =
        serde_json::from_str(&ok(&["evaluate", "--estimate", p(&truth), "--truth", p(&truth), "--out", p(&dir.path().join("e1"))]))
            .unwrap();
    assert_eq!(same["eps_f"], 0.0);
    assert_eq!(same["precision"], 1.0);
    assert_eq!(same["recall"], 1.0);

    let zero = dir.path().join("zero.triplets");
    fs::write(&zero, "n 7\n").unwrap();
    let empty: Value =
        serde_json::from_str(&ok(&["evaluate", "--estimate", p(&zero), "--truth", p(&truth), "--out", p(&dir.path().join("e2"))]))
            .unwrap();
    assert_eq!(empty["eps_f"], 1.0);
    assert_eq!(empty["recall"], 0.0);
    assert!(dir.path().join("e2/lines.csv").exists());
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), SMALL);
    let meas = sim.join("measurements.csv");
    let out = p(&dir.path().join("x")).to_string();

    let unknown_method = ybus(&["estimate", "--measurements", p(&meas), "--method", "magic", "--out", &out]);
    assert_eq!(unknown_method.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[grid]\nnodez = 4\n").unwrap();
    let bad_scenario = ybus(&["simulate", "--scenario", p(&bad), "--out", &out]);
    assert_eq!(bad_scenario.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_scenario.stderr).contains("nodez"));

    fs::write(&bad, "schema = 2\n").unwrap();
    assert_eq!(ybus(&["simulate", "--scenario", p(&bad), "--out", &out]).status.code(), Some(2));

    let mismatch = ybus(&[
        "evaluate",
        "--estimate",
        p(&sim.join("full_truth.triplets")),
        "--truth",
        p(&sim.join("truth.triplets")),
        "--out",
        &out,
    ]);
    assert_eq!(mismatch.status.code(), Some(2));

    let missing = ybus(&["estimate", "--measurements", "/nonexistent.csv", "--method", "ols", "--out", &out]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn singular_data_exits_with_code_3_and_a_hint() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), "[loads]\nsamples = 5\nunloaded = [3, 6]\n");
    let out = ybus(&[
        "estimate",
        "--measurements",
        p(&sim.join("measurements.csv")),
        "--method",
        "ols",
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Kron"));
}

#[test]
fn benchmark_writes_solver_and_sweep_tables() {
    let dir = TempDir::new().unwrap();
    let suite = dir.path().join("suite.toml");
    fs::write(
        &suite,
        format!(
            "sigmas = [1e-5, 1e-4]\nmethods = [\"ols\", \"tls\"]\nalgorithms = [\"bar\", \"admm\"]\n{}",
            SMALL.replace("[grid]", "[scenario.grid]")
                .replace("[loads]", "[scenario.loads]")
                .replace("[preprocess]", "[scenario.preprocess]")
                .replace("schema = 1\n", "")
        ),
    )
    .unwrap();
    let out = dir.path().join("bench");
    ok(&["benchmark", "--suite", p(&suite), "--out", p(&out)]);
    let solvers = fs::read_to_string(out.join("solvers.csv")).unwrap();
    assert_eq!(solvers.lines().count(), 3);
    assert!(solvers.starts_with("seed,algorithm,lambda,iterations"));
    let sweep = fs::read_to_string(out.join("noise_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);
    let runs = fs::read_to_string(out.join("noise_sweep_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 5);
    assert!(out.join("manifest.json").exists());
}
