//! Exact solver for the weighted generalized lasso
//! `min y^T G y - 2 h^T y + sum_j psi_j(l_j^T y - mu_j)` with asymmetric
//! absolute-value penalties `psi(z) = w+ max(z, 0) + w- max(-z, 0)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::estimators::SparseRow;
use crate::linalg::{condition_estimate, solve_spd};

/// One penalty row: coefficients, center and side weights (already scaled
/// by lambda).
#[derive(Debug, Clone)]
pub(crate) struct PenaltyRow {
    pub coeffs: SparseRow,
    pub mu: f64,
    pub w_plus: f64,
    pub w_minus: f64,
}

impl PenaltyRow {
    pub fn apply(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, c)| c * y[j]).sum()
    }

    /// Same penalty with the row scaled to unit norm.
    fn normalized(&self) -> Self {
        let norm = self.coeffs.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        Self {
            coeffs: self.coeffs.iter().map(|&(j, c)| (j, c / norm)).collect(),
            mu: self.mu / norm,
            w_plus: self.w_plus * norm,
            w_minus: self.w_minus * norm,
        }
    }
}

/// Asymmetric soft threshold: the proximal map of `psi / rho`.
pub fn soft_threshold(x: f64, kappa_plus: f64, kappa_minus: f64) -> f64 {
    if x > kappa_plus {
        x - kappa_plus
    } else if x < -kappa_minus {
        x + kappa_minus
    } else {
        0.0
    }
}

/// Warm-start state of the inner solver.
#[derive(Debug, Clone, Default)]
pub(crate) struct LassoState {
    z: Vec<f64>,
    u: Vec<f64>,
    rho: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LassoOptions {
    pub max_iter: usize,
    pub tol: f64,
}

pub(crate) struct LassoOutcome {
    pub y: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn factor(g2: &DMatrix<f64>, ltl: &DMatrix<f64>, rho: f64) -> Result<Cholesky<f64, Dyn>> {
    let m = g2 + ltl * rho;
    let cond = || condition_estimate(&m);
    m.clone().cholesky().ok_or_else(|| Error::Singular { context: "inner lasso system".into(), condition: cond() })
}

/// Solves the generalized lasso with ADMM on the split `z = L y - mu`.
/// Rows are normalized internally so that `L^T L` stays well conditioned
/// when the penalty scales span many orders of magnitude.
pub(crate) fn generalized_lasso(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    rows: &[PenaltyRow],
    warm: &[f64],
    state: &mut LassoState,
    opts: LassoOptions,
) -> Result<LassoOutcome> {
    let dim = h.len();
    if rows.is_empty() {
        let y = solve_spd(g, h, "weighted least-squares step")?;
        return Ok(LassoOutcome { y: y.as_slice().to_vec(), iterations: 1, converged: true });
    }
    let rows: Vec<PenaltyRow> = rows.iter().map(PenaltyRow::normalized).collect();
    let m = rows.len();
    let mut ltl = DMatrix::<f64>::zeros(dim, dim);
    for row in &rows {
        for &(a, ca) in &row.coeffs {
            for &(b, cb) in &row.coeffs {
                ltl[(a, b)] += ca * cb;
            }
        }
    }
    let g2 = g * 2.0;
    if state.z.len() != m {
        let y0 = warm.to_vec();
        state.z = rows.iter().map(|r| r.apply(&y0) - r.mu).collect();
        state.u = vec![0.0; m];
        let tr_g = g2.trace().max(f64::MIN_POSITIVE);
        let tr_l = ltl.trace().max(f64::MIN_POSITIVE);
        state.rho = tr_g / tr_l;
    }
    let mut rho = state.rho;
    let mut chol = factor(&g2, &ltl, rho)?;
    let mut y = DVector::from_column_slice(warm);
    let mut ly = vec![0.0; m];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let mut rhs = h * 2.0;
        for (j, row) in rows.iter().enumerate() {
            let c = rho * (row.mu + state.z[j] - state.u[j]);
            for &(a, ca) in &row.coeffs {
                rhs[a] += ca * c;
            }
        }
        y = chol.solve(&rhs);
        let mut primal = 0.0;
        let mut dual_vec = DVector::<f64>::zeros(dim);
        let mut scale_p: f64 = 0.0;
        for (j, row) in rows.iter().enumerate() {
            ly[j] = row.apply(y.as_slice()) - row.mu;
            let x = ly[j] + state.u[j];
            let z_new = soft_threshold(x, row.w_plus / rho, row.w_minus / rho);
            let dz = z_new - state.z[j];
            for &(a, ca) in &row.coeffs {
                dual_vec[a] += rho * ca * dz;
            }
            state.z[j] = z_new;
            state.u[j] += ly[j] - z_new;
            primal += (ly[j] - z_new).powi(2);
            scale_p = scale_p.max(ly[j].abs()).max(z_new.abs());
        }
        let primal = primal.sqrt();
        let dual = dual_vec.norm();
        let mut scale_d = DVector::<f64>::zeros(dim);
        for (j, row) in rows.iter().enumerate() {
            for &(a, ca) in &row.coeffs {
                scale_d[a] += rho * ca * state.u[j];
            }
        }
        let tol_p = opts.tol * (scale_p * (m as f64).sqrt()).max(f64::MIN_POSITIVE);
        let tol_d = opts.tol * (scale_d.norm() + (h * 2.0).norm()).max(f64::MIN_POSITIVE);
        if primal <= tol_p && dual <= tol_d {
            converged = true;
            break;
        }
        if it % 10 == 9 {
            let new_rho = if primal > 10.0 * dual {
                rho * 2.0
            } else if dual > 10.0 * primal {
                rho / 2.0
            } else {
                rho
            };
            if new_rho != rho {
                let ratio = rho / new_rho;
                state.u.iter_mut().for_each(|u| *u *= ratio);
                rho = new_rho;
                chol = factor(&g2, &ltl, rho)?;
            }
        }
    }
    state.rho = rho;
    Ok(LassoOutcome { y: y.as_slice().to_vec(), iterations, converged })
}
