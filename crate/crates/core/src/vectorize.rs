//! Real stacking of complex quantities and structural reduction maps.
//!
//! A complex `r x c` matrix `M` is stacked as `[Re vec(M); Im vec(M)]`,
//! where `vec` scans columns, so entry `(row, col)` sits at `col * r + row`.
//!
//! A symmetric Laplacian admittance matrix is determined by its strictly
//! lower entries. The reduced parameters are the line admittances
//! `y_hk = -Y_hk` for `h > k`, ordered by a column-major scan of the strict
//! lower triangle: `(1,0), (2,0), ..., (n-1,0), (2,1), ...`. Real reduced
//! vectors are `[Re y_r; Im y_r]`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::AdmittanceMatrix;

/// `[Re vec(M); Im vec(M)]`
pub fn stack(m: &DMatrix<Complex64>) -> Vec<f64> {
    let len = m.len();
    let mut out = vec![0.0; 2 * len];
    for (k, z) in m.iter().enumerate() {
        out[k] = z.re;
        out[len + k] = z.im;
    }
    out
}

/// Inverse of [`stack`].
pub fn unstack(x: &[f64], rows: usize, cols: usize) -> Result<DMatrix<Complex64>> {
    let len = rows * cols;
    if x.len() != 2 * len {
        return Err(Error::Dimension(format!("expected {} stacked entries, got {}", 2 * len, x.len())));
    }
    Ok(DMatrix::from_fn(rows, cols, |r, c| {
        let k = c * rows + r;
        Complex64::new(x[k], x[len + k])
    }))
}

/// Real-stacked form of the linear model `I = V Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealStack {
    pub n: usize,
    pub len: usize,
    pub v_stack: Vec<f64>,
    pub i_stack: Vec<f64>,
    pub y_stack: Vec<f64>,
    v: DMatrix<Complex64>,
}

impl RealStack {
    /// Product of the implicit `2nN x 2n^2` block regressor
    /// `[[Re, -Im], [Im, Re]] (I_n kron V)` with a stacked `y`, computed
    /// column by column without forming the Kronecker product.
    pub fn apply_v_block(&self, y_stack: &[f64]) -> Result<Vec<f64>> {
        let y = unstack(y_stack, self.n, self.n)?;
        Ok(stack(&(&self.v * y)))
    }

    /// Dense block regressor, for small checks only.
    pub fn v_block_dense(&self) -> DMatrix<f64> {
        v_block_dense(&self.v)
    }
}

pub fn realify(v: &DMatrix<Complex64>, i: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> Result<RealStack> {
    let (len, n) = v.shape();
    if i.shape() != (len, n) || y.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "V {:?}, I {:?} and Y {:?} are inconsistent",
            v.shape(),
            i.shape(),
            y.shape()
        )));
    }
    Ok(RealStack { n, len, v_stack: stack(v), i_stack: stack(i), y_stack: stack(y), v: v.clone() })
}

pub fn complexify(y_stack: &[f64], n: usize) -> Result<DMatrix<Complex64>> {
    unstack(y_stack, n, n)
}

/// Dense `2nN x 2n^2` real regressor of `vec(V Y)` with respect to the
/// stacked `y`.
pub fn v_block_dense(v: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (len, n) = v.shape();
    let (rows, cols) = (n * len, n * n);
    let mut d = DMatrix::zeros(2 * rows, 2 * cols);
    for col in 0..n {
        for j in 0..n {
            // vec(VY)[col*len + t] += V[t, j] * Y[j, col]
            let c = col * n + j;
            for t in 0..len {
                let r = col * len + t;
                let z = v[(t, j)];
                d[(r, c)] = z.re;
                d[(r, cols + c)] = -z.im;
                d[(rows + r, c)] = z.im;
                d[(rows + r, cols + c)] = z.re;
            }
        }
    }
    d
}

/// Map between reduced line parameters and the full stacked admittance
/// vector of a symmetric Laplacian, optionally with known-absent lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionMap {
    n: usize,
    pairs: Vec<(usize, usize)>,
    zero_pattern: BTreeSet<(usize, usize)>,
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a > b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn build_reduction(n: usize, zero_pattern: &[(usize, usize)]) -> Result<ReductionMap> {
    ReductionMap::new(n, zero_pattern)
}

impl ReductionMap {
    pub fn new(n: usize, zero_pattern: &[(usize, usize)]) -> Result<Self> {
        let mut zeros = BTreeSet::new();
        for &(a, b) in zero_pattern {
            if a == b {
                return Err(Error::InvalidArgument(format!("known zero ({a}, {b}) is on the diagonal")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("known zero ({a}, {b}) is outside [0, {n})")));
            }
            zeros.insert(ordered(a, b));
        }
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for k in 0..n {
            for h in (k + 1)..n {
                if !zeros.contains(&(h, k)) {
                    pairs.push((h, k));
                }
            }
        }
        let map = Self { n, pairs, zero_pattern: zeros };
        for h in 0..n {
            if n > 1 && map.degree(h) == 0 {
                log::warn!("every line of node {h} is declared absent; its row is fixed to zero");
            }
        }
        Ok(map)
    }

    /// Map with no known zeros.
    pub fn full(n: usize) -> Self {
        Self::new(n, &[]).expect("an empty zero pattern is always valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of complex reduced parameters.
    pub fn r(&self) -> usize {
        self.pairs.len()
    }

    /// Length of the real reduced vector, `2r`.
    pub fn real_dim(&self) -> usize {
        2 * self.pairs.len()
    }

    /// Node pairs `(h, k)`, `h > k`, in parameter order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn zero_pattern(&self) -> &BTreeSet<(usize, usize)> {
        &self.zero_pattern
    }

    pub fn param_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = ordered(a, b);
        self.pairs.iter().position(|p| *p == key)
    }

    fn degree(&self, h: usize) -> usize {
        self.pairs.iter().filter(|(a, b)| *a == h || *b == h).count()
    }

    fn check_reduced(&self, y_r: &[f64]) -> Result<()> {
        if y_r.len() != self.real_dim() {
            return Err(Error::Dimension(format!(
                "reduced vector has length {}, expected {}",
                y_r.len(),
                self.real_dim()
            )));
        }
        Ok(())
    }

    /// Complex line admittances from a real reduced vector.
    pub fn line_values(&self, y_r: &[f64]) -> Result<Vec<Complex64>> {
        self.check_reduced(y_r)?;
        let r = self.r();
        Ok((0..r).map(|p| Complex64::new(y_r[p], y_r[r + p])).collect())
    }

    /// Full admittance matrix of a reduced vector.
    pub fn expand_matrix(&self, y_r: &[f64]) -> Result<DMatrix<Complex64>> {
        let vals = self.line_values(y_r)?;
        let mut y = DMatrix::zeros(self.n, self.n);
        for (&(h, k), &p) in self.pairs.iter().zip(&vals) {
            y[(h, k)] -= p;
            y[(k, h)] -= p;
            y[(h, h)] += p;
            y[(k, k)] += p;
        }
        Ok(y)
    }

    pub fn expand_admittance(&self, y_r: &[f64]) -> Result<AdmittanceMatrix> {
        AdmittanceMatrix::from_dense(self.expand_matrix(y_r)?)
    }

    /// Full stacked vector `(I_2 kron DT) y_r`.
    pub fn expand(&self, y_r: &[f64]) -> Result<Vec<f64>> {
        Ok(stack(&self.expand_matrix(y_r)?))
    }

    /// Reduced vector of a full matrix. Asymmetric input is projected onto
    /// its symmetric part with a warning; entries on known-zero pairs are
    /// discarded.
    pub fn reduce_matrix(&self, y: &DMatrix<Complex64>) -> Result<Vec<f64>> {
        if y.shape() != (self.n, self.n) {
            return Err(Error::Dimension(format!("expected a {0}x{0} matrix, got {1:?}", self.n, y.shape())));
        }
        let scale = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let asym = self
            .pairs
            .iter()
            .map(|&(h, k)| (y[(h, k)] - y[(k, h)]).norm())
            .fold(0.0, f64::max);
        if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            log::warn!("reducing an asymmetric matrix (residual {asym:e}); using its symmetric part");
        }
        let r = self.r();
        let mut out = vec![0.0; 2 * r];
        for (p, &(h, k)) in self.pairs.iter().enumerate() {
            let v = -(y[(h, k)] + y[(k, h)]) * 0.5;
            out[p] = v.re;
            out[r + p] = v.im;
        }
        Ok(out)
    }

    pub fn reduce(&self, y_stack: &[f64]) -> Result<Vec<f64>> {
        self.reduce_matrix(&unstack(y_stack, self.n, self.n)?)
    }

    /// Nonzeros `(row, col, value)` of the `2n^2 x 2r` expansion matrix.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let (n, r) = (self.n, self.r());
        let nn = n * n;
        let mut out = Vec::with_capacity(8 * r);
        for half in 0..2 {
            for (p, &(h, k)) in self.pairs.iter().enumerate() {
                let col = half * r + p;
                let base = half * nn;
                out.push((base + k * n + h, col, -1.0));
                out.push((base + h * n + k, col, -1.0));
                out.push((base + h * n + h, col, 1.0));
                out.push((base + k * n + k, col, 1.0));
            }
        }
        out
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let nn = self.n * self.n;
        let mut d = DMatrix::zeros(2 * nn, self.real_dim());
        for (row, col, v) in self.triplets() {
            d[(row, col)] += v;
        }
        d
    }

    /// Text export: header `dims <rows> <cols>` then `row col value` lines.
    pub fn to_triplet_text(&self) -> String {
        let nn = self.n * self.n;
        let mut s = format!("dims {} {}\n", 2 * nn, self.real_dim());
        for (row, col, v) in self.triplets() {
            s.push_str(&format!("{row} {col} {v:?}\n"));
        }
        s
    }

    /// The same map after relabeling node `h` as `perm[h]`. Parameter order
    /// follows the new labels.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Dimension("permutation length differs from n".into()));
        }
        let zeros: Vec<(usize, usize)> = self.zero_pattern.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Self::new(self.n, &zeros)
    }
}
