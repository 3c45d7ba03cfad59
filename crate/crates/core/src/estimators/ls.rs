//! Column-wise ordinary and total least squares on mean-centered data.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{EstimationResult, Method};
use crate::error::{Error, Result};
use crate::grid::AdmittanceMatrix;

/// Condition number of the centered voltages above which OLS/TLS refuse to
/// solve.
const MAX_CONDITION: f64 = 1e12;

pub(crate) fn center_columns(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let rows = m.nrows().max(1) as f64;
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.iter().sum::<Complex64>() / rows;
        col.iter_mut().for_each(|z| *z -= mean);
    }
    c
}

/// Triangular factor of the centered augmented matrix `[Vc, Ic]`.
struct Factor {
    n: usize,
    /// `Q1^H Ic`, `n x n`.
    r12: DMatrix<Complex64>,
    /// Full triangular factor restricted to `[Vc, Ic]` (2n columns).
    r: DMatrix<Complex64>,
    /// `R11^{-1}`
    w: DMatrix<Complex64>,
    condition: f64,
}

fn factor(v: &DMatrix<Complex64>, i: &DMatrix<Complex64>) -> Result<Factor> {
    let (samples, n) = v.shape();
    if i.shape() != (samples, n) {
        return Err(Error::Dimension(format!("V is {:?} but I is {:?}", v.shape(), i.shape())));
    }
    if samples <= n {
        return Err(Error::Singular {
            context: format!("least squares with {samples} samples for {n} buses"),
            condition: f64::INFINITY,
        });
    }
    let mut aug = DMatrix::<Complex64>::zeros(samples, 2 * n);
    aug.columns_mut(0, n).copy_from(&center_columns(v));
    aug.columns_mut(n, n).copy_from(&center_columns(i));
    let r = if samples >= 2 * n { aug.qr().r() } else { aug };
    let r11 = r.view((0, 0), (n, n)).upper_triangle();
    let r12 = r.view((0, n), (n, n)).into_owned();
    let sv = r11.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Singular {
            context: "centered voltage data is rank deficient; unloaded or nearly unloaded buses should be \
                      removed by Kron reduction before estimation"
                .into(),
            condition,
        });
    }
    let w = r11
        .clone()
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Singular { context: "triangular voltage factor".into(), condition })?;
    Ok(Factor { n, r12, r, w, condition })
}

impl Factor {
    /// `(sigma_{n+1}, sigma_n)` of `[Vc, Ic_col]`.
    fn trailing_singular_values(&self, col: usize) -> (f64, f64) {
        let n = self.n;
        let rows = self.r.nrows();
        let mut sub = DMatrix::<Complex64>::zeros(rows, n + 1);
        sub.columns_mut(0, n).copy_from(&self.r.columns(0, n));
        sub.column_mut(n).copy_from(&self.r.column(n + col));
        let mut sv: Vec<f64> = sub.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (sv[0], sv[1])
    }
}

fn finish(method: Method, y: DMatrix<Complex64>, sigma: Vec<f64>, condition: f64) -> Result<EstimationResult> {
    let mut result = EstimationResult::from_matrix(method, AdmittanceMatrix::from_dense(y)?);
    result.sigma_aug = Some(sigma);
    result.condition = Some(condition);
    Ok(result)
}

/// `Y_i = (Vc^H Vc)^{-1} Vc^H Ic_i`, solved through a QR factorization.
pub fn estimate_ols(v: &DMatrix<Complex64>, i: &DMatrix<Complex64>) -> Result<EstimationResult> {
    let f = factor(v, i)?;
    let y = &f.w * &f.r12;
    let sigma = (0..f.n).map(|c| f.trailing_singular_values(c).0).collect();
    finish(Method::Ols, y, sigma, f.condition)
}

/// `Y_i = (Vc^H Vc - sigma_{n+1}^2 I)^{-1} Vc^H Ic_i` with `sigma_{n+1}` the
/// smallest singular value of `[Vc, Ic_i]`.
///
/// Evaluated as `W (I - sigma^2 W^H W)^{-1} Q1^H Ic_i` with `W = R11^{-1}`,
/// which avoids forming the normal equations.
pub fn estimate_tls(v: &DMatrix<Complex64>, i: &DMatrix<Complex64>) -> Result<EstimationResult> {
    let f = factor(v, i)?;
    let n = f.n;
    let wh_w = f.w.adjoint() * &f.w;
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for c in 0..n {
        let (s_min, s_next) = f.trailing_singular_values(c);
        if s_next - s_min <= 1e-12 * s_next.max(f64::MIN_POSITIVE) && s_min > 0.0 {
            log::warn!("column {c}: trailing singular values {s_min:e} and {s_next:e} coincide; TLS solution is not unique");
        }
        let s2 = Complex64::new(s_min * s_min, 0.0);
        let m = DMatrix::<Complex64>::identity(n, n) - wh_w.map(|z| z * s2);
        let rhs = f.r12.column(c).into_owned();
        let x = m.lu().solve(&rhs).ok_or_else(|| Error::Singular {
            context: format!("deregularized TLS system for column {c}"),
            condition: f64::INFINITY,
        })?;
        y.set_column(c, &(&f.w * x));
        sigma.push(s_min);
    }
    finish(Method::Tls, y, sigma, f.condition)
}

/// Approximate error covariances of OLS and TLS columns.
#[derive(Debug, Clone)]
pub struct LsCovariance {
    /// `(sigma_{n+1}^2 / N) (Vc^H Vc)^{-1}` per column.
    pub ols: Vec<DMatrix<Complex64>>,
    /// OLS covariance scaled by `1 + ||Y_i||^2` per column.
    pub tls: Vec<DMatrix<Complex64>>,
}

/// Covariances evaluated with the voltages `v` (exact or measured) and the
/// singular values recorded in `result`.
pub fn ols_tls_covariance(v: &DMatrix<Complex64>, result: &EstimationResult) -> Result<LsCovariance> {
    let sigma = result
        .sigma_aug
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("result carries no augmented singular values (not OLS/TLS)".into()))?;
    let (samples, n) = v.shape();
    if sigma.len() != n || result.matrix.n() != n {
        return Err(Error::Dimension("result and voltages disagree on the bus count".into()));
    }
    let vc = center_columns(v);
    let gram = vc.adjoint() * &vc;
    let inv = gram.try_inverse().ok_or_else(|| Error::Singular {
        context: "centered voltage Gram matrix".into(),
        condition: f64::INFINITY,
    })?;
    let y = result.matrix.entries();
    let mut ols = Vec::with_capacity(n);
    let mut tls = Vec::with_capacity(n);
    for c in 0..n {
        let base = inv.map(|z| z * (sigma[c] * sigma[c] / samples as f64));
        let norm2: f64 = y.column(c).iter().map(|z| z.norm_sqr()).sum();
        tls.push(base.map(|z| z * (1.0 + norm2)));
        ols.push(base);
    }
    Ok(LsCovariance { ols, tls })
}
