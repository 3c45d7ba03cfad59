//! Small dense kernels used in the hot loops of the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// In-place Cholesky factorization of a row-major `n x n` SPD matrix
/// (lower triangle is overwritten with the factor). Returns false when a
/// pivot is not strictly positive.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

/// Solves `L L^T x = b` given the factor produced by [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Ratio of extreme singular values.
pub(crate) fn condition_estimate<T>(m: &DMatrix<T>) -> f64
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    if m.is_empty() {
        return 1.0;
    }
    // The SVD iteration does not terminate on non-finite input.
    if !m.iter().all(|z| z.clone().is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves a symmetric positive (semi-)definite system. Falls back to LU
/// when Cholesky fails; reports the condition estimate on failure.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    let lu = a.clone().lu();
    match lu.solve(b) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ => Err(Error::Singular {
            context: context.to_string(),
            condition: condition_estimate(a),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_systems_are_reported_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, f64::NAN]);
        let b = DVector::from_element(2, 1.0);
        assert!(matches!(solve_spd(&a, &b, "test"), Err(Error::Singular { .. })));
        assert_eq!(condition_estimate(&a), f64::INFINITY);
    }
}
