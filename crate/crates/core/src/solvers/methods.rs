use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::lasso::{generalized_lasso, soft_threshold, LassoOptions, LassoState, PenaltyRow};
use super::problem::Problem;
use super::{lambda_schedule, Algorithm, SolverConfig, SolverTrace, TraceRow};
use crate::error::{Error, Result};
use crate::estimators::{estimate_tls, EstimationResult, Method};
use crate::linalg::solve_spd;
use crate::signal::Measurements;

/// Runs the configured algorithm from `y0`.
pub fn solve(problem: &Problem, config: &SolverConfig, y0: &[f64]) -> Result<(EstimationResult, SolverTrace)> {
    match config.algorithm {
        Algorithm::Bcd => solve_bcd(problem, config, y0),
        Algorithm::Bar => solve_bar(problem, config, y0),
        Algorithm::Admm => solve_admm(problem, config, y0),
    }
}

/// Starting point: the TLS estimate projected on the reduced parameters.
/// Falls back to generalized least squares in the reduced coordinates when
/// the unstructured TLS problem is singular.
pub fn initial_estimate(meas: &Measurements, problem: &Problem) -> Result<Vec<f64>> {
    match estimate_tls(&meas.v, &meas.i) {
        Ok(tls) => problem.map().reduce_matrix(tls.matrix.entries()),
        Err(e) if e.is_numerical() => {
            log::warn!("TLS initialization failed ({e}); starting from reduced least squares");
            let dv = vec![Complex64::new(0.0, 0.0); problem.n() * problem.len()];
            let (g, h) = problem.normal_equations(&dv);
            Ok(solve_spd(&g, &h, "reduced least-squares initialization")?.as_slice().to_vec())
        }
        Err(e) => Err(e),
    }
}

/// Noise-scale-free prior weight for adaptive sign priors:
/// `2 c median_j sqrt(G_jj (G^-1)_jj)` with `G` the normal matrix at `dV = 0`.
pub fn auto_lambda(problem: &Problem, c: f64) -> Result<f64> {
    let dv = vec![Complex64::new(0.0, 0.0); problem.n() * problem.len()];
    let (g, _) = problem.normal_equations(&dv);
    let dim = g.nrows();
    let inv = match g.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => g.clone().try_inverse().ok_or_else(|| Error::Singular {
            context: "normal matrix for automatic lambda".into(),
            condition: f64::INFINITY,
        })?,
    };
    let mut vals: Vec<f64> = (0..dim).map(|j| (g[(j, j)] * inv[(j, j)]).max(0.0).sqrt()).collect();
    vals.sort_by(f64::total_cmp);
    let median = if dim == 0 { 1.0 } else { vals[dim / 2] };
    Ok(2.0 * c * median)
}

fn penalty_rows(problem: &Problem, multiplier: f64) -> Vec<PenaltyRow> {
    problem
        .priors()
        .flattened()
        .into_iter()
        .map(|(row, mu, wp, wm)| PenaltyRow {
            coeffs: row.clone(),
            mu,
            w_plus: multiplier * wp,
            w_minus: multiplier * wm,
        })
        .collect()
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Objective/parameter history for the windowed stopping rule.
struct Monitor {
    window: usize,
    tol_obj: f64,
    tol_par: f64,
    /// Objectives below this are treated as zero (exact data).
    floor: f64,
    settle: usize,
    objectives: VecDeque<f64>,
    params: VecDeque<Vec<f64>>,
}

impl Monitor {
    fn new(config: &SolverConfig, floor: f64) -> Self {
        Self {
            window: config.window,
            tol_obj: config.tol_rel_objective,
            tol_par: config.tol_param_change,
            floor,
            settle: config.lambda_schedule.steps,
            objectives: VecDeque::new(),
            params: VecDeque::new(),
        }
    }

    /// Records iteration `k` and reports whether the run has converged.
    fn push(&mut self, k: usize, objective: f64, y: &[f64]) -> bool {
        self.objectives.push_back(objective);
        self.params.push_back(y.to_vec());
        if self.objectives.len() > self.window + 1 {
            self.objectives.pop_front();
            self.params.pop_front();
        }
        if self.objectives.len() <= self.window || k < self.settle + self.window {
            return false;
        }
        let (f0, f1) = (self.objectives[0], objective);
        let obj_ok = (f1 - f0).abs() <= self.tol_obj * f1.abs().max(self.floor);
        obj_ok && rel_diff(y, &self.params[0]) <= self.tol_par
    }
}

struct Run<'a> {
    problem: &'a Problem,
    config: &'a SolverConfig,
    start: Instant,
    trace: SolverTrace,
    monitor: Monitor,
    /// Data energy at `y = 0`, the scale for absolute objective tolerances.
    energy: f64,
}

impl<'a> Run<'a> {
    fn new(problem: &'a Problem, config: &'a SolverConfig, y0: &[f64]) -> Result<Self> {
        config.validate()?;
        if y0.len() != problem.dim() {
            return Err(Error::Dimension(format!(
                "initial estimate has length {}, problem has {} parameters",
                y0.len(),
                problem.dim()
            )));
        }
        let dv = vec![Complex64::new(0.0, 0.0); problem.n() * problem.len()];
        let energy = problem.likelihood_term(&vec![0.0; problem.dim()], &dv).max(f64::MIN_POSITIVE);
        Ok(Self {
            problem,
            config,
            start: Instant::now(),
            trace: SolverTrace { algorithm: Some(config.algorithm), rows: Vec::new() },
            monitor: Monitor::new(config, 1e-16 * energy),
            energy,
        })
    }

    fn record(&mut self, k: usize, objective: f64, y: &[f64], prev: &[f64], residuals: Option<(f64, f64)>) -> Result<bool> {
        if !objective.is_finite() {
            return Err(Error::Internal(format!("objective is not finite at iteration {k}")));
        }
        self.trace.rows.push(TraceRow {
            iteration: k,
            objective,
            param_change: rel_diff(y, prev),
            primal_residual: residuals.map(|r| r.0),
            dual_residual: residuals.map(|r| r.1),
            seconds: self.start.elapsed().as_secs_f64(),
        });
        Ok(self.monitor.push(k, objective, y))
    }

    fn finish(self, y: Vec<f64>, converged: bool) -> Result<(EstimationResult, SolverTrace)> {
        if !converged {
            log::warn!(
                "{} stopped after {} iterations without meeting the tolerances",
                self.config.algorithm.name(),
                self.trace.len()
            );
        }
        let method = if self.problem.priors().is_empty() { Method::Mle } else { Method::Map };
        let mut result = EstimationResult::from_reduced(method, y, self.problem.map().clone())?;
        result.objective_trace = self.trace.objectives();
        result.iterations = self.trace.len();
        result.converged = converged;
        Ok((result, self.trace))
    }
}

/// Halvings tried before a step is declared stalled.
const MAX_BACKTRACK: usize = 30;

/// Relative parameter change after which the joint curvature is rebuilt.
const CURVATURE_REUSE: f64 = 1e-3;

/// Quadratic model `y^T G y - 2 h^T y` of the data term around `y` for the
/// current `dV`. With `joint_step` the curvature accounts for the response of
/// the optimal `dV` to a change in `y` (Gauss-Newton on the objective with
/// `dV` eliminated) and is reused while the parameters barely move; the
/// gradient at `y` is always exact.
struct DataModel {
    joint: bool,
    curvature: Option<(DMatrix<f64>, Vec<f64>)>,
}

impl DataModel {
    fn new(problem: &Problem, config: &SolverConfig) -> Self {
        Self { joint: config.joint_step && problem.has_voltage_noise(), curvature: None }
    }

    fn at(&mut self, problem: &Problem, y: &[f64], dv: &[Complex64]) -> (DMatrix<f64>, DVector<f64>) {
        if !self.joint {
            return problem.normal_equations(dv);
        }
        let stale = self.curvature.as_ref().is_none_or(|(_, at)| rel_diff(y, at) > CURVATURE_REUSE);
        if stale {
            self.curvature = Some((problem.profile_hessian(&problem.expand(y), dv), y.to_vec()));
        }
        let g = self.curvature.as_ref().map(|(g, _)| g.clone()).expect("curvature was just built");
        let h = &g * DVector::from_column_slice(y) + problem.residual_gradient(y, dv);
        (g, h)
    }
}

/// Iterate with its optimal `dV` and objective.
struct Point {
    y: Vec<f64>,
    dv: Vec<Complex64>,
    objective: f64,
}

impl Point {
    fn new(problem: &Problem, y: Vec<f64>, multiplier: f64) -> Result<Self> {
        let dv = problem.dv_step(&problem.expand(&y));
        let objective = problem.objective(&y, &dv, multiplier)?;
        Ok(Self { y, dv, objective })
    }
}

/// Moves from `current` towards `target`, halving the step until the
/// objective (with `dV` re-optimized) does not increase. Returns `None` when
/// no step length helps.
fn backtrack(problem: &Problem, current: &Point, target: &[f64], multiplier: f64) -> Result<Option<Point>> {
    let mut t = 1.0;
    for _ in 0..MAX_BACKTRACK {
        let y: Vec<f64> = current.y.iter().zip(target).map(|(a, b)| a + t * (b - a)).collect();
        let cand = Point::new(problem, y, multiplier)?;
        if cand.objective <= current.objective {
            return Ok(Some(cand));
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Block coordinate descent: exact `dV` step, then the weighted generalized
/// lasso in `y` solved to tolerance. The objective never increases; an
/// increase beyond rounding is reported as an internal error.
pub fn solve_bcd(problem: &Problem, config: &SolverConfig, y0: &[f64]) -> Result<(EstimationResult, SolverTrace)> {
    let mut run = Run::new(problem, config, y0)?;
    let opts = LassoOptions { max_iter: config.inner_max_iter, tol: config.inner_tol };
    let mut state = LassoState::default();
    let mut model = DataModel::new(problem, config);
    let mut cur = Point::new(problem, y0.to_vec(), lambda_schedule(config, 0))?;
    let mut prev_obj = f64::INFINITY;
    let mut converged = false;
    for k in 0..config.max_iter {
        let mult = lambda_schedule(config, k);
        if k > 0 && mult != lambda_schedule(config, k - 1) {
            cur.objective = problem.objective(&cur.y, &cur.dv, mult)?;
            prev_obj = f64::INFINITY;
        }
        let (g, h) = model.at(problem, &cur.y, &cur.dv);
        let rows = penalty_rows(problem, mult);
        let out = generalized_lasso(&g, &h, &rows, &cur.y, &mut state, opts)?;
        if !out.converged {
            log::debug!("inner lasso stopped at its cap of {} iterations (outer iteration {k})", out.iterations);
        }
        let prev_y = cur.y.clone();
        if let Some(next) = backtrack(problem, &cur, &out.y, mult)? {
            cur = next;
        }
        if cur.objective > prev_obj + 1e-10 * prev_obj.abs() + 1e-13 * run.energy {
            return Err(Error::Internal(format!(
                "BCD objective increased from {prev_obj:e} to {:e} at iteration {k}",
                cur.objective
            )));
        }
        prev_obj = cur.objective;
        if run.record(k, cur.objective, &cur.y, &prev_y, None)? {
            converged = true;
            break;
        }
    }
    run.finish(cur.y, converged)
}

/// Broken adaptive ridge: each absolute value `|z|` is replaced by
/// `z^2 / (2 (|z_prev| + alpha))`, whose gradient matches at `z_prev`, with
/// the side weight selected by the sign of `z_prev`. The `y` step is one
/// symmetric positive definite solve.
pub fn solve_bar(problem: &Problem, config: &SolverConfig, y0: &[f64]) -> Result<(EstimationResult, SolverTrace)> {
    let mut run = Run::new(problem, config, y0)?;
    let base = penalty_rows(problem, 1.0);
    let alpha = match config.alpha {
        Some(a) => a,
        None => {
            let inf = base.iter().map(|r| (r.apply(y0) - r.mu).abs()).fold(0.0, f64::max);
            (1e-8 * inf).max(f64::MIN_POSITIVE)
        }
    };
    let mut model = DataModel::new(problem, config);
    let mut cur = Point::new(problem, y0.to_vec(), lambda_schedule(config, 0))?;
    let mut converged = false;
    for k in 0..config.max_iter {
        let mult = lambda_schedule(config, k);
        if k > 0 && mult != lambda_schedule(config, k - 1) {
            cur.objective = problem.objective(&cur.y, &cur.dv, mult)?;
        }
        let (mut m, mut rhs) = model.at(problem, &cur.y, &cur.dv);
        for row in &base {
            let z0 = row.apply(&cur.y) - row.mu;
            let w = if z0 >= 0.0 { row.w_plus } else { row.w_minus };
            let c = mult * w / (2.0 * (z0.abs() + alpha));
            if c == 0.0 {
                continue;
            }
            for &(a, ca) in &row.coeffs {
                rhs[a] += c * row.mu * ca;
                for &(b, cb) in &row.coeffs {
                    m[(a, b)] += c * ca * cb;
                }
            }
        }
        let target = solve_spd(&m, &rhs, "BAR ridge step")?;
        let prev_y = cur.y.clone();
        if let Some(next) = backtrack(problem, &cur, target.as_slice(), mult)? {
            cur = next;
        }
        if run.record(k, cur.objective, &cur.y, &prev_y, None)? {
            converged = true;
            break;
        }
    }
    run.finish(cur.y, converged)
}

/// ADMM on the split `z = L y - mu` with residual balancing. Each iteration
/// takes one augmented least-squares step in `y` (with `dV` re-optimized and
/// the step shortened until the augmented Lagrangian does not increase), the
/// proximal step in `z` and the dual update.
pub fn solve_admm(problem: &Problem, config: &SolverConfig, y0: &[f64]) -> Result<(EstimationResult, SolverTrace)> {
    if !problem.priors().is_diagonal_symmetric() {
        return Err(Error::UnsupportedPrior(
            "ADMM supports only diagonal, symmetric priors; use the bcd or bar solver".into(),
        ));
    }
    let mut run = Run::new(problem, config, y0)?;
    let base = penalty_rows(problem, 1.0);
    let dim = problem.dim();
    let mut ltl = DVector::<f64>::zeros(dim);
    for row in &base {
        for &(a, ca) in &row.coeffs {
            ltl[a] += ca * ca;
        }
    }
    let mut y = y0.to_vec();
    let mut dv = problem.dv_step(&problem.expand(&y));
    let mut z: Vec<f64> = base.iter().map(|r| r.apply(&y) - r.mu).collect();
    let mut u = vec![0.0; base.len()];
    let mut model = DataModel::new(problem, config);
    let mut rho = f64::NAN;
    let mut converged = false;
    for k in 0..config.max_iter {
        let mult = lambda_schedule(config, k);
        let (g, h) = model.at(problem, &y, &dv);
        if rho.is_nan() {
            let scale = ltl.sum();
            rho = if scale > 0.0 { config.rho_admm * 2.0 * g.trace().max(f64::MIN_POSITIVE) / scale } else { 1.0 };
        }
        let mut m: DMatrix<f64> = g * 2.0;
        for a in 0..dim {
            m[(a, a)] += rho * ltl[a];
        }
        let mut rhs = h * 2.0;
        for (j, row) in base.iter().enumerate() {
            let c = rho * (row.mu + z[j] - u[j]);
            for &(a, ca) in &row.coeffs {
                rhs[a] += ca * c;
            }
        }
        let target = solve_spd(&m, &rhs, "ADMM least-squares step")?;
        let augmented = |y: &[f64], dv: &[Complex64]| {
            let coupling: f64 = base.iter().enumerate().map(|(j, r)| (r.apply(y) - r.mu - z[j] + u[j]).powi(2)).sum();
            problem.likelihood_term(y, dv) + 0.5 * rho * coupling
        };
        let current = augmented(&y, &dv);
        let prev_y = y.clone();
        let mut t = 1.0;
        for _ in 0..MAX_BACKTRACK {
            let cand: Vec<f64> = prev_y.iter().zip(target.iter()).map(|(a, b)| a + t * (b - a)).collect();
            let cand_dv = problem.dv_step(&problem.expand(&cand));
            if augmented(&cand, &cand_dv) <= current {
                y = cand;
                dv = cand_dv;
                break;
            }
            t *= 0.5;
        }
        let mut primal = 0.0;
        let mut dual = DVector::<f64>::zeros(dim);
        let mut scale_p: f64 = 0.0;
        let mut scale_d = DVector::<f64>::zeros(dim);
        for (j, row) in base.iter().enumerate() {
            let ly = row.apply(&y) - row.mu;
            let z_new = soft_threshold(ly + u[j], mult * row.w_plus / rho, mult * row.w_minus / rho);
            for &(a, ca) in &row.coeffs {
                dual[a] += rho * ca * (z_new - z[j]);
            }
            z[j] = z_new;
            u[j] += ly - z_new;
            primal += (ly - z_new).powi(2);
            scale_p = scale_p.max(ly.abs()).max(z_new.abs());
            for &(a, ca) in &row.coeffs {
                scale_d[a] += rho * ca * u[j];
            }
        }
        let primal = primal.sqrt();
        let dual = dual.norm();
        let objective = problem.objective(&y, &dv, mult)?;
        let window_ok = run.record(k, objective, &y, &prev_y, Some((primal, dual)))?;
        let tol = config.tol_param_change;
        let residual_ok = base.is_empty()
            || (primal <= tol * scale_p.max(f64::MIN_POSITIVE) && dual <= tol * scale_d.norm().max(f64::MIN_POSITIVE));
        if window_ok && residual_ok {
            converged = true;
            break;
        }
        if !base.is_empty() && k % 10 == 9 {
            let new_rho = if primal > 10.0 * dual {
                rho * 2.0
            } else if dual > 10.0 * primal {
                rho / 2.0
            } else {
                rho
            };
            if new_rho != rho {
                let ratio = rho / new_rho;
                u.iter_mut().for_each(|v| *v *= ratio);
                rho = new_rho;
            }
        }
    }
    run.finish(y, converged)
}
