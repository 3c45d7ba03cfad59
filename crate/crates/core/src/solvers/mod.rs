//! Iterative solvers for the maximum-a-posteriori problem.
//!
//! All three methods alternate an exact `dV` step with a step in the
//! reduced parameters `y`:
//!
//! * BCD solves the `y` sub-problem (a weighted generalized lasso) exactly.
//! * BAR replaces each absolute value by a reweighted quadratic, so the `y`
//!   step is a single ridge solve.
//! * ADMM splits `z = L y - mu` and takes one proximal step per iteration;
//!   it only supports diagonal, symmetric priors.

mod lasso;
mod methods;
mod pipeline;
mod problem;

pub use lasso::soft_threshold;
pub use methods::{auto_lambda, initial_estimate, solve, solve_admm, solve_bar, solve_bcd};
pub use pipeline::{compare_solvers, estimate, estimate_map, estimate_mle, Estimate, SolverRun};
pub use problem::Problem;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bcd,
    Bar,
    Admm,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Bcd => "bcd",
            Algorithm::Bar => "bar",
            Algorithm::Admm => "admm",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bcd" => Ok(Algorithm::Bcd),
            "bar" => Ok(Algorithm::Bar),
            "admm" => Ok(Algorithm::Admm),
            other => Err(Error::InvalidArgument(format!("unknown solver '{other}' (expected bcd, bar or admm)"))),
        }
    }
}

/// Geometric decay of the prior weights from `initial` to 1 over `steps`
/// iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub initial: f64,
    pub steps: usize,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self { initial: 1.0, steps: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub max_iter: usize,
    /// Relative objective change over `window` iterations.
    pub tol_rel_objective: f64,
    /// Relative parameter change over `window` iterations.
    pub tol_param_change: f64,
    pub window: usize,
    /// BAR smoothing; `None` uses `1e-8 ||L y0 - mu||_inf`.
    pub alpha: Option<f64>,
    /// Initial ADMM penalty as a multiple of `tr(2G) / tr(L^T L)`.
    pub rho_admm: f64,
    pub lambda_schedule: LambdaSchedule,
    /// Recorded with the results; the solvers themselves are deterministic.
    pub seed: u64,
    /// Iteration cap and tolerance of the inner lasso solver used by BCD.
    pub inner_max_iter: usize,
    pub inner_tol: f64,
    /// Let the `y` step account for the response of `dV` (Gauss-Newton
    /// curvature of the objective with `dV` eliminated). When false, the `y`
    /// step holds `dV` fixed.
    pub joint_step: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Bar,
            max_iter: 5000,
            tol_rel_objective: 1e-9,
            tol_param_change: 1e-7,
            window: 10,
            alpha: None,
            rho_admm: 1.0,
            lambda_schedule: LambdaSchedule::default(),
            seed: 0,
            inner_max_iter: 20000,
            inner_tol: 1e-10,
            joint_step: true,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self { algorithm, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_rel_objective", self.tol_rel_objective),
            ("tol_param_change", self.tol_param_change),
            ("rho_admm", self.rho_admm),
            ("inner_tol", self.inner_tol),
            ("lambda_schedule.initial", self.lambda_schedule.initial),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be positive and finite")));
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!("alpha = {a} must be positive and finite")));
            }
        }
        if self.max_iter == 0 || self.window == 0 {
            return Err(Error::InvalidArgument("max_iter and window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Multiplier applied to every prior weight at iteration `k`.
pub fn lambda_schedule(config: &SolverConfig, k: usize) -> f64 {
    let s = config.lambda_schedule;
    if s.steps == 0 || k >= s.steps {
        1.0
    } else {
        s.initial.powf((s.steps - k) as f64 / s.steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub param_change: f64,
    pub primal_residual: Option<f64>,
    pub dual_residual: Option<f64>,
    pub seconds: f64,
}

/// Per-iteration history of a solver run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub algorithm: Option<Algorithm>,
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    /// Total wall time in seconds.
    pub fn seconds(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.seconds)
    }

    pub fn iterations_per_second(&self) -> f64 {
        let s = self.seconds();
        if s > 0.0 {
            self.len() as f64 / s
        } else {
            f64::INFINITY
        }
    }

    /// Traces without wall time, for determinism checks.
    pub fn same_path(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.objective.to_bits() == b.objective.to_bits()
                    && a.param_change.to_bits() == b.param_change.to_bits()
                    && a.primal_residual.map(f64::to_bits) == b.primal_residual.map(f64::to_bits)
                    && a.dual_residual.map(f64::to_bits) == b.dual_residual.map(f64::to_bits)
            })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Parse(format!("trace CSV: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
