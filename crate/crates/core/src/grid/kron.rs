use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{AdmittanceMatrix, Structure};
use crate::error::{Error, Result};
use crate::linalg::condition_estimate;

const MAX_CONDITION: f64 = 1e14;

/// Schur complement elimination of every node not listed in `keep`.
///
/// `Y_red = Y_kk - Y_ke Y_ee^{-1} Y_ek`; rows/columns of the result follow
/// the order of `keep`.
pub fn kron_reduce(y: &AdmittanceMatrix, keep: &[usize]) -> Result<AdmittanceMatrix> {
    let n = y.n();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("kron_reduce needs at least one kept node".into()));
    }
    let mut kept = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(Error::InvalidArgument(format!("kept node {k} outside [0, {n})")));
        }
        if kept[k] {
            return Err(Error::InvalidArgument(format!("kept node {k} listed twice")));
        }
        kept[k] = true;
    }
    let elim: Vec<usize> = (0..n).filter(|&h| !kept[h]).collect();
    let full = y.entries();
    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::<Complex64>::from_fn(rows.len(), cols.len(), |i, j| full[(rows[i], cols[j])])
    };
    let y_kk = sub(keep, keep);
    if elim.is_empty() {
        return Ok(AdmittanceMatrix { entries: y_kk, structure: y.structure() });
    }
    let y_ke = sub(keep, &elim);
    let y_ee = sub(&elim, &elim);
    let y_ek = sub(&elim, keep);

    let cond = condition_estimate(&y_ee);
    if !(cond < MAX_CONDITION) {
        return Err(Error::Singular { context: "Kron reduction: eliminated block".into(), condition: cond });
    }
    let x = y_ee.lu().solve(&y_ek).ok_or_else(|| Error::Singular {
        context: "Kron reduction: eliminated block".into(),
        condition: cond,
    })?;
    let mut red = y_kk - y_ke * x;
    if y.structure().symmetric {
        // Remove rounding asymmetry so the symmetric flag survives exactly.
        let t = red.transpose();
        red = (red + t).map(|z| z * 0.5);
    }
    let laplacian = y.structure().laplacian;
    Ok(AdmittanceMatrix {
        entries: red,
        structure: Structure { symmetric: y.structure().symmetric, laplacian },
    })
}
