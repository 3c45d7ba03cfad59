//! Fisher information of the errors-in-variables likelihood.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PriorStack;
use crate::error::{Error, Result};
use crate::signal::BlockCovariance;
use crate::vectorize::ReductionMap;

/// Denominators `D_{Re,q}, D_{ReIm,q}, D_{Im,q}` for column `h`, sample `t`.
fn denominators(y: &DMatrix<Complex64>, h: usize, t: usize, sv: &BlockCovariance, si: &BlockCovariance) -> [[f64; 3]; 2] {
    let n = y.nrows();
    let (mut re, mut reim, mut im) = (0.0, 0.0, 0.0);
    for j in 0..n {
        let k = sv.index(j, t);
        let z = y[(j, h)];
        re += z.re * z.re * sv.var_re[k];
        reim += z.re * z.im * sv.cov_reim[k];
        im += z.im * z.im * sv.var_im[k];
    }
    let ki = si.index(h, t);
    let q = [si.var_re[ki], si.var_im[ki]];
    [[re + q[0], reim + q[0], im + q[0]], [re + q[1], reim + q[1], im + q[1]]]
}

fn check_inputs(v: &DMatrix<Complex64>, y: &DMatrix<Complex64>, sv: &BlockCovariance, si: &BlockCovariance) -> Result<()> {
    let (len, n) = v.shape();
    if y.shape() != (n, n) || sv.n != n || si.n != n || sv.len != len || si.len != len {
        return Err(Error::Dimension("voltages, admittance and covariances disagree".into()));
    }
    if si.var_re.iter().chain(&si.var_im).any(|q| !(*q > 0.0)) {
        return Err(Error::InvalidArgument("Fisher information requires positive current noise variances".into()));
    }
    Ok(())
}

fn centered(v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    super::ls::center_columns(v)
}

/// `2n x 2n` Fisher block of column `h` of `Y`, ordered
/// `[Re Y_{.h}; Im Y_{.h}]`, computed from column `h` alone.
pub fn fisher_column_block(
    v: &DMatrix<Complex64>,
    y: &DMatrix<Complex64>,
    h: usize,
    sigma_v: &BlockCovariance,
    sigma_i: &BlockCovariance,
) -> Result<DMatrix<f64>> {
    check_inputs(v, y, sigma_v, sigma_i)?;
    let phi = centered(v);
    Ok(column_block(&phi, y, h, sigma_v, sigma_i))
}

fn column_block(phi: &DMatrix<Complex64>, y: &DMatrix<Complex64>, h: usize, sv: &BlockCovariance, si: &BlockCovariance) -> DMatrix<f64> {
    let (len, n) = phi.shape();
    let mut f = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for t in 0..len {
        let d = denominators(y, h, t, sv, si);
        let w_re: f64 = d.iter().map(|q| 1.0 / q[0]).sum();
        let w_reim: f64 = d.iter().map(|q| 1.0 / q[1]).sum();
        let w_im: f64 = d.iter().map(|q| 1.0 / q[2]).sum();
        for a in 0..n {
            let pa = phi[(t, a)];
            for b in 0..n {
                let pb = phi[(t, b)];
                f[(a, b)] += pa.re * pb.re * w_re;
                f[(a, n + b)] += pa.re * pb.im * w_reim;
                f[(n + b, a)] += pa.re * pb.im * w_reim;
                f[(n + a, n + b)] += pa.im * pb.im * w_im;
            }
        }
    }
    f
}

/// Full `2n^2 x 2n^2` Fisher information in `[Re vec(Y); Im vec(Y)]`
/// order, summed over `(q, h, t)` from the rows of `Phi = I_n kron Vc`.
///
/// Row `hN + t` of `Phi` holds `Vc_t` in the `h`-th block, so every term
/// only touches the diagonal block of column `h`; cross-column blocks are
/// never written and stay exactly zero.
pub fn fisher_mle(v: &DMatrix<Complex64>, y: &DMatrix<Complex64>, sigma_v: &BlockCovariance, sigma_i: &BlockCovariance) -> Result<DMatrix<f64>> {
    check_inputs(v, y, sigma_v, sigma_i)?;
    let n = v.ncols();
    let nn = n * n;
    let phi = centered(v);
    let mut f = DMatrix::<f64>::zeros(2 * nn, 2 * nn);
    for h in 0..n {
        let block = column_block(&phi, y, h, sigma_v, sigma_i);
        for a in 0..n {
            for b in 0..n {
                let (ra, rb) = (h * n + a, h * n + b);
                f[(ra, rb)] += block[(a, b)];
                f[(ra, nn + rb)] += block[(a, n + b)];
                f[(nn + ra, rb)] += block[(n + a, b)];
                f[(nn + ra, nn + rb)] += block[(n + a, n + b)];
            }
        }
    }
    Ok(f)
}

/// Indices of column `h`'s parameters in the full stacked order.
pub fn column_indices(n: usize, h: usize) -> Vec<usize> {
    let nn = n * n;
    (0..n).map(|a| h * n + a).chain((0..n).map(|a| nn + h * n + a)).collect()
}

/// Fisher information of the reduced parameters, `M^T F M`.
pub fn reduce_fisher(f: &DMatrix<f64>, map: &ReductionMap) -> Result<DMatrix<f64>> {
    let m = map.dense();
    if f.nrows() != m.nrows() {
        return Err(Error::Dimension("Fisher matrix does not match the reduction map".into()));
    }
    Ok(m.transpose() * f * m)
}

/// `F + sum lambda w / (|L y - mu| + alpha) l l^T` over all prior rows; `w`
/// is the side weight active at `y_ref`.
pub fn fisher_map(f_mle: &DMatrix<f64>, priors: &PriorStack, y_ref: &[f64], alpha: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument("smoothing alpha must be positive".into()));
    }
    let dim = f_mle.nrows();
    if y_ref.len() != dim {
        return Err(Error::Dimension(format!("reference has {} entries, Fisher matrix {dim}", y_ref.len())));
    }
    priors.check_dim(dim)?;
    let mut f = f_mle.clone();
    for term in &priors.terms {
        let res = term.residual(y_ref);
        for (j, row) in term.rows.iter().enumerate() {
            let (wp, wm) = term.side_weights(j);
            let w = if res[j] >= 0.0 { wp } else { wm };
            let c = term.lambda * w / (res[j].abs() + alpha);
            for &(a, va) in row {
                for &(b, vb) in row {
                    f[(a, b)] += c * va * vb;
                }
            }
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub dim: usize,
    pub rank: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Parameter indices carrying the null space.
    pub null_parameters: Vec<usize>,
}

impl FisherReport {
    pub fn is_full_rank(&self) -> bool {
        self.rank == self.dim
    }
}

/// Rank and null-space summary; eigenvalues below `tol_rel * max` count as
/// zero.
pub fn fisher_report(f: &DMatrix<f64>, tol_rel: f64) -> FisherReport {
    let dim = f.nrows();
    let sym = (f + f.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let tol = tol_rel * max;
    let mut weight = vec![0.0; dim];
    let mut rank = 0;
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        if e.abs() > tol {
            rank += 1;
        } else {
            for (i, w) in weight.iter_mut().enumerate() {
                *w += eig.eigenvectors[(i, k)].powi(2);
            }
        }
    }
    let wmax = weight.iter().cloned().fold(0.0, f64::max);
    let null_parameters = if wmax > 0.0 { (0..dim).filter(|&i| weight[i] > 0.1 * wmax).collect() } else { Vec::new() };
    FisherReport {
        dim,
        rank,
        min_eigenvalue: eig.eigenvalues.min(),
        max_eigenvalue: eig.eigenvalues.max(),
        null_parameters,
    }
}

/// Buses whose voltage column is implicated in the null space of a full
/// (unreduced) Fisher matrix: row index of each null parameter.
pub fn null_buses(report: &FisherReport, n: usize) -> Vec<usize> {
    let nn = n * n;
    let mut buses: Vec<usize> = report.null_parameters.iter().map(|&p| (p % nn) % n).collect();
    buses.sort_unstable();
    buses.dedup();
    buses
}
