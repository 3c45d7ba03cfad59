//! Benchmark suites: a solver speed comparison plus a noise sweep over
//! estimation methods.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ybus_core::estimators::{Method, PriorConfig, PriorStack};
use ybus_core::simulator::{run_scenario, Scenario};
use ybus_core::solvers::{self, auto_lambda, compare_solvers, Problem};
use ybus_core::{Algorithm, ReductionMap, SolverConfig};

use crate::manifest::ManifestBuilder;
use crate::CliError;

const SUITE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Suite {
    pub schema: u32,
    pub seeds: Vec<u64>,
    /// Polar noise levels (magnitude and phase) of the sweep.
    pub sigmas: Vec<f64>,
    pub methods: Vec<Method>,
    /// Algorithms of the speed comparison; empty skips it.
    pub algorithms: Vec<Algorithm>,
    /// l1 weight of the speed comparison; `None` picks it automatically.
    pub comparison_lambda: Option<f64>,
    pub scenario: Scenario,
    pub solver: SolverConfig,
    pub prior: PriorConfig,
}

impl Default for Suite {
    fn default() -> Self {
        Self {
            schema: SUITE_SCHEMA,
            seeds: vec![0],
            sigmas: vec![1e-6, 1e-5, 1e-4, 2e-4],
            methods: vec![Method::Ols, Method::Tls, Method::Mle, Method::Map],
            algorithms: vec![Algorithm::Bcd, Algorithm::Bar, Algorithm::Admm],
            comparison_lambda: None,
            scenario: Scenario::default(),
            solver: SolverConfig::default(),
            prior: PriorConfig::default(),
        }
    }
}

impl Suite {
    fn validate(&self) -> Result<(), CliError> {
        if self.schema != SUITE_SCHEMA {
            return Err(CliError::config(format!(
                "suite schema {} is not supported (expected {SUITE_SCHEMA})",
                self.schema
            )));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("suite needs at least one seed"));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(CliError::config("sigmas must be finite and non-negative"));
        }
        if self.comparison_lambda.is_some_and(|l| !(l >= 0.0) || !l.is_finite()) {
            return Err(CliError::config("comparison_lambda must be finite and non-negative"));
        }
        self.solver.validate()?;
        self.prior.validate()?;
        Ok(())
    }

    fn scenario_for(&self, seed: u64, sigma: Option<f64>) -> Scenario {
        let mut s = self.scenario.clone();
        s.grid.seed = seed;
        s.loads.seed = seed;
        s.noise.seed = seed;
        if let Some(sigma) = sigma {
            s.noise.magnitude = sigma;
            s.noise.phase = sigma;
        }
        s
    }
}

#[derive(Debug, Serialize)]
struct SolverRow {
    seed: u64,
    algorithm: Algorithm,
    lambda: f64,
    iterations: usize,
    seconds: f64,
    iterations_per_second: f64,
    converged: bool,
    objective: f64,
}

#[derive(Debug, Serialize)]
struct SweepRun {
    seed: u64,
    sigma: f64,
    method: Method,
    eps_f: f64,
    iterations: usize,
    converged: bool,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    method: Method,
    sigma: f64,
    median_eps_f: f64,
    runs: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    }
    w.flush()?;
    Ok(())
}

fn solver_rows(suite: &Suite, seed: u64) -> Result<Vec<SolverRow>, CliError> {
    let output = run_scenario(&suite.scenario_for(seed, None))?;
    let meas = output.measurements()?;
    let lambda = match suite.comparison_lambda {
        Some(l) => l,
        None => {
            let problem = Problem::new(&meas, ReductionMap::full(meas.n()), PriorStack::new())?;
            auto_lambda(&problem, suite.prior.auto_c)?
        }
    };
    let runs = compare_solvers(&meas, lambda, &suite.algorithms, &suite.solver)?;
    Ok(runs
        .into_iter()
        .map(|(r, _)| SolverRow {
            seed,
            algorithm: r.algorithm,
            lambda,
            iterations: r.iterations,
            seconds: r.seconds,
            iterations_per_second: r.iterations_per_second,
            converged: r.converged,
            objective: r.objective,
        })
        .collect())
}

fn sweep_runs(suite: &Suite, seed: u64, sigma: f64) -> Result<Vec<SweepRun>, CliError> {
    let output = run_scenario(&suite.scenario_for(seed, Some(sigma)))?;
    let meas = if sigma == 0.0 { output.exact_measurements() } else { output.measurements()? };
    let mut out = Vec::new();
    let mut mle = None;
    for &method in &suite.methods {
        let mut est = match (method, &mle) {
            (Method::Map, Some(m)) => {
                let (result, trace) = solvers::estimate_map(&meas, m, &suite.prior, &suite.solver)?;
                solvers::Estimate { result, trace: Some(trace), mle: None }
            }
            _ => solvers::estimate(&meas, method, &suite.prior, &suite.solver)?,
        };
        let eps_f = est.result.evaluate(&output.truth)?;
        out.push(SweepRun {
            seed,
            sigma,
            method,
            eps_f,
            iterations: est.result.iterations,
            converged: est.result.converged,
        });
        if method == Method::Mle {
            mle = Some(est.result);
        }
    }
    Ok(out)
}

pub fn benchmark(suite_path: &Path, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("benchmark");
    manifest.input(suite_path);
    let text = fs::read_to_string(suite_path).map_err(|e| CliError::config(format!("{}: {e}", suite_path.display())))?;
    let mut suite: Suite =
        toml::from_str(&text).map_err(|e| CliError::config(format!("suite {}: {e}", suite_path.display())))?;
    if let Some(s) = seed {
        suite.seeds = vec![s];
    }
    suite.validate()?;
    fs::create_dir_all(out)?;

    if !suite.algorithms.is_empty() {
        let mut rows = Vec::new();
        for &s in &suite.seeds {
            rows.extend(solver_rows(&suite, s)?);
        }
        let path = out.join("solvers.csv");
        write_csv(&path, &rows)?;
        manifest.output(path);
    }

    if !suite.methods.is_empty() && !suite.sigmas.is_empty() {
        let mut runs = Vec::new();
        for &sigma in &suite.sigmas {
            for &s in &suite.seeds {
                runs.extend(sweep_runs(&suite, s, sigma)?);
            }
        }
        let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for r in &runs {
            let m = suite.methods.iter().position(|&x| x == r.method).expect("method is in the suite");
            let s = suite.sigmas.iter().position(|&x| x == r.sigma).expect("sigma is in the suite");
            groups.entry((m, s)).or_default().push(r.eps_f);
        }
        let table: Vec<SweepRow> = groups
            .into_iter()
            .map(|((m, s), errs)| SweepRow {
                method: suite.methods[m],
                sigma: suite.sigmas[s],
                runs: errs.len(),
                median_eps_f: median(errs),
            })
            .collect();
        let path = out.join("noise_sweep_runs.csv");
        write_csv(&path, &runs)?;
        manifest.output(path);
        let path = out.join("noise_sweep.csv");
        write_csv(&path, &table)?;
        manifest.output(path);
    }

    for (i, &s) in suite.seeds.iter().enumerate() {
        manifest.seed(&format!("seed_{i}"), s);
    }
    manifest.config(&suite).write(out)?;
    Ok(())
}
