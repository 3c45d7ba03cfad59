use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use ybus_core::estimators::{evaluate_estimate, Evaluation, LineComparison, Method, PriorConfig};
use ybus_core::grid::{read_dense_csv, read_triplets, write_dense_csv, write_triplets};
use ybus_core::signal::{read_measurements, sidecar_path, write_measurements, MeasurementMeta};
use ybus_core::simulator::{run_scenario, Scenario};
use ybus_core::solvers::{self, SolverConfig};
use ybus_core::{AdmittanceMatrix, Error, Measurements, NoiseSpec};

use crate::manifest::ManifestBuilder;
use crate::CliError;

const UNLOADED_HINT: &str = "buses without load or generation make the voltage data rank deficient; \
     eliminate them (Kron reduction) or drop their columns before estimating";

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{what} {}: {e}", path.display())))
}

fn write(path: PathBuf, text: &str, manifest: &mut ManifestBuilder) -> Result<(), CliError> {
    fs::write(&path, text)?;
    manifest.output(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

/// Reads a matrix from a triplet file, a dense CSV or an `estimate` output
/// directory.
pub fn load_matrix(path: &Path) -> Result<(AdmittanceMatrix, PathBuf), CliError> {
    let file = if path.is_dir() { path.join("estimate.triplets") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| CliError::config(format!("{}: {e}", file.display())))?;
    let matrix = if file.extension().is_some_and(|e| e == "csv") { read_dense_csv(&text)? } else { read_triplets(&text)? };
    Ok((matrix, file))
}

pub fn simulate(scenario_path: &Path, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("simulate");
    manifest.input(scenario_path);
    let mut scenario = Scenario::load(scenario_path)?;
    if let Some(s) = seed {
        scenario.grid.seed = s;
        scenario.loads.seed = s;
        scenario.noise.seed = s;
    }
    let output = run_scenario(&scenario)?;
    fs::create_dir_all(out)?;

    let meta = output.meta();
    let measurements = out.join("measurements.csv");
    write_measurements(&measurements, &output.noisy, &meta)?;
    manifest.output(sidecar_path(&measurements)).output(measurements);
    let exact_meta = MeasurementMeta { is_noisy: false, noise: NoiseSpec::zero(output.n()), ..meta };
    let exact = out.join("exact.csv");
    write_measurements(&exact, &output.exact, &exact_meta)?;
    manifest.output(sidecar_path(&exact)).output(exact);

    write(out.join("truth.triplets"), &write_triplets(&output.truth), &mut manifest)?;
    write(out.join("truth.csv"), &write_dense_csv(&output.truth), &mut manifest)?;
    write(out.join("full_truth.triplets"), &write_triplets(&output.full_truth), &mut manifest)?;
    write(out.join("scenario.toml"), &scenario.to_toml(), &mut manifest)?;

    manifest
        .config(&scenario)
        .seed("grid", scenario.grid.seed)
        .seed("loads", scenario.loads.seed)
        .seed("noise", scenario.noise.seed)
        .write(out)?;
    log::info!(
        "simulated {} samples on {} kept buses (power-flow residual {:.2e})",
        output.noisy.len(),
        output.n(),
        output.flow_residual
    );
    Ok(())
}

pub struct EstimateArgs {
    pub measurements: PathBuf,
    pub method: Method,
    pub prior: Option<PathBuf>,
    pub solver: Option<PathBuf>,
    pub seed: Option<u64>,
    pub truth: Option<PathBuf>,
}

#[derive(Serialize)]
struct EstimateConfig<'a> {
    method: Method,
    prior: &'a PriorConfig,
    solver: &'a SolverConfig,
}

#[derive(Serialize)]
struct EstimateSummary {
    method: Method,
    eps_f: Option<f64>,
    iterations: usize,
    converged: bool,
    lambda: Option<f64>,
}

#[derive(Serialize)]
struct EvaluationSummary {
    eps_f: f64,
    precision: f64,
    recall: f64,
    true_lines: usize,
    detected_lines: usize,
}

impl From<&Evaluation> for EvaluationSummary {
    fn from(e: &Evaluation) -> Self {
        Self {
            eps_f: e.eps_f,
            precision: e.precision,
            recall: e.recall,
            true_lines: e.true_lines,
            detected_lines: e.detected_lines,
        }
    }
}

fn lines_csv(lines: &[LineComparison]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for line in lines {
        w.serialize(line).map_err(|e| CliError::config(format!("line table: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::config(format!("line table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn write_evaluation(eval: &Evaluation, out: &Path, manifest: &mut ManifestBuilder) -> Result<(), CliError> {
    write(out.join("evaluation.json"), &to_json(&EvaluationSummary::from(eval)), manifest)?;
    write(out.join("lines.csv"), &lines_csv(&eval.lines)?, manifest)
}

pub fn estimate(args: &EstimateArgs, out: &Path) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("estimate");
    manifest.input(&args.measurements).input(&sidecar_path(&args.measurements));
    let priors: PriorConfig = match &args.prior {
        Some(p) => {
            manifest.input(p);
            parse_toml(p, "prior configuration")?
        }
        None => PriorConfig::default(),
    };
    priors.validate()?;
    let mut solver: SolverConfig = match &args.solver {
        Some(p) => {
            manifest.input(p);
            parse_toml(p, "solver configuration")?
        }
        None => SolverConfig::default(),
    };
    if let Some(s) = args.seed {
        solver.seed = s;
    }
    solver.validate()?;
    let truth = match &args.truth {
        Some(p) => {
            let (m, file) = load_matrix(p)?;
            manifest.input(&file);
            Some(m)
        }
        None => None,
    };

    let (series, meta) = read_measurements(&args.measurements)?;
    let meas = Measurements::from_series(&series, &meta.noise, meta.rated_voltage, meta.preprocessing)?;
    let mut est = solvers::estimate(&meas, args.method, &priors, &solver).map_err(|e| match e {
        Error::Singular { .. } if matches!(args.method, Method::Ols | Method::Tls) => {
            CliError::Numerical(format!("{e}\nhint: {UNLOADED_HINT}"))
        }
        e => e.into(),
    })?;

    fs::create_dir_all(out)?;
    let evaluation = match &truth {
        Some(t) => {
            est.result.evaluate(t)?;
            Some(evaluate_estimate(&est.result.matrix, t)?)
        }
        None => None,
    };
    est.result.save(out, "estimate")?;
    manifest.output(out.join("estimate.triplets")).output(out.join("estimate.json"));
    write(out.join("estimate.csv"), &write_dense_csv(&est.result.matrix), &mut manifest)?;
    if let Some(trace) = &est.trace {
        trace.save_csv(&out.join("trace.csv"))?;
        manifest.output(out.join("trace.csv"));
    }
    if let Some(mle) = &mut est.mle {
        if let Some(t) = &truth {
            mle.evaluate(t)?;
        }
        mle.save(out, "mle")?;
        manifest.output(out.join("mle.triplets")).output(out.join("mle.json"));
    }
    if let Some(eval) = &evaluation {
        write_evaluation(eval, out, &mut manifest)?;
    }

    manifest
        .config(&EstimateConfig { method: args.method, prior: &priors, solver: &solver })
        .seed("solver", solver.seed)
        .write(out)?;
    let summary = EstimateSummary {
        method: args.method,
        eps_f: est.result.eps_f,
        iterations: est.result.iterations,
        converged: est.result.converged,
        lambda: est.result.lambda,
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

pub fn evaluate(estimate: &Path, truth: &Path, out: &Path) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("evaluate");
    let (y_hat, est_file) = load_matrix(estimate)?;
    let (y, truth_file) = load_matrix(truth)?;
    manifest.input(&est_file).input(&truth_file);
    let eval = evaluate_estimate(&y_hat, &y)?;
    fs::create_dir_all(out)?;
    write_evaluation(&eval, out, &mut manifest)?;
    manifest.config(&serde_json::json!({ "estimate": est_file, "truth": truth_file })).write(out)?;
    println!("{}", serde_json::to_string(&EvaluationSummary::from(&eval)).expect("summary serializes"));
    Ok(())
}
