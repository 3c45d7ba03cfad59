//! Dispatch from preprocessed measurements to an estimate.

use serde::{Deserialize, Serialize};

use super::{auto_lambda, initial_estimate, solve, Algorithm, Problem, SolverConfig, SolverTrace};
use crate::error::Result;
use crate::estimators::{estimate_ols, estimate_tls, prior_sparsity, EstimationResult, Method, PriorConfig, PriorStack};
use crate::signal::Measurements;
use crate::vectorize::ReductionMap;

#[derive(Debug, Clone)]
pub struct Estimate {
    pub result: EstimationResult,
    pub trace: Option<SolverTrace>,
    /// The MLE the MAP priors were built around.
    pub mle: Option<EstimationResult>,
}

/// Maximum-likelihood estimate of the Laplacian admittance matrix, started
/// from TLS.
pub fn estimate_mle(meas: &Measurements, solver: &SolverConfig) -> Result<(EstimationResult, SolverTrace)> {
    let problem = Problem::new(meas, ReductionMap::full(meas.v.ncols()), PriorStack::new())?;
    let y0 = initial_estimate(meas, &problem)?;
    solve(&problem, solver, &y0)
}

/// MAP estimate with priors built around an existing MLE.
pub fn estimate_map(
    meas: &Measurements,
    mle: &EstimationResult,
    priors: &PriorConfig,
    solver: &SolverConfig,
) -> Result<(EstimationResult, SolverTrace)> {
    let map = ReductionMap::full(meas.v.ncols());
    let problem = Problem::new(meas, map.clone(), PriorStack::new())?;
    let lambda = match priors.lambda {
        Some(l) => l,
        None => auto_lambda(&problem, priors.auto_c)?,
    };
    let stack = priors.build(&map, &mle.y_hat, lambda)?;
    let problem = problem.with_priors(stack)?;
    let (mut result, trace) = solve(&problem, solver, &mle.y_hat)?;
    result.lambda = Some(lambda);
    result.lambda_prime = Some(priors.lambda_prime.unwrap_or(lambda));
    Ok((result, trace))
}

/// Runs `method` on the measurements. MAP first computes the MLE.
pub fn estimate(meas: &Measurements, method: Method, priors: &PriorConfig, solver: &SolverConfig) -> Result<Estimate> {
    match method {
        Method::Ols => Ok(Estimate { result: estimate_ols(&meas.v, &meas.i)?, trace: None, mle: None }),
        Method::Tls => Ok(Estimate { result: estimate_tls(&meas.v, &meas.i)?, trace: None, mle: None }),
        Method::Mle => {
            let (result, trace) = estimate_mle(meas, solver)?;
            Ok(Estimate { result, trace: Some(trace), mle: None })
        }
        Method::Map => {
            let (mle, _) = estimate_mle(meas, solver)?;
            let (result, trace) = estimate_map(meas, &mle, priors, solver)?;
            Ok(Estimate { result, trace: Some(trace), mle: Some(mle) })
        }
    }
}

/// Speed summary of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRun {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub seconds: f64,
    pub iterations_per_second: f64,
    pub converged: bool,
    pub objective: f64,
}

/// Runs every algorithm on the same MAP problem: a plain l1 penalty of
/// weight `lambda` on each reduced parameter, started from TLS.
pub fn compare_solvers(
    meas: &Measurements,
    lambda: f64,
    algorithms: &[Algorithm],
    base: &SolverConfig,
) -> Result<Vec<(SolverRun, EstimationResult)>> {
    let map = ReductionMap::full(meas.v.ncols());
    let mut priors = PriorStack::new();
    priors.push(prior_sparsity(&vec![1.0; map.real_dim()], lambda)?);
    let problem = Problem::new(meas, map, priors)?;
    let y0 = initial_estimate(meas, &problem)?;
    let mut out = Vec::with_capacity(algorithms.len());
    for &algorithm in algorithms {
        let config = SolverConfig { algorithm, ..base.clone() };
        let (result, trace) = solve(&problem, &config, &y0)?;
        let run = SolverRun {
            algorithm,
            iterations: trace.len(),
            seconds: trace.seconds(),
            iterations_per_second: trace.iterations_per_second(),
            converged: result.converged,
            objective: trace.objectives().last().copied().unwrap_or(f64::NAN),
        };
        out.push((run, result));
    }
    Ok(out)
}
