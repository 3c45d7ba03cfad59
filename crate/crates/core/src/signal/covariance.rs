use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cartesian_moments_measured, NoiseSpec, PhasorSeries};
use crate::error::{Error, Result};

/// Covariance of the real-stacked noise vector `[Re vec(D); Im vec(D)]` of
/// an `N x n` complex error matrix `D`.
///
/// Only three diagonals are nonzero: the variances of the real and
/// imaginary parts and their covariance, each indexed by `h * N + t`. The
/// full `2nN x 2nN` matrix is never formed outside of tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCovariance {
    pub n: usize,
    pub len: usize,
    pub var_re: Vec<f64>,
    pub var_im: Vec<f64>,
    pub cov_reim: Vec<f64>,
}

/// Inverse of one 2x2 block, stored as `[w_rr, w_ri, w_ii]`.
pub type WeightBlock = [f64; 3];

impl BlockCovariance {
    pub fn zeros(n: usize, len: usize) -> Self {
        let m = n * len;
        Self { n, len, var_re: vec![0.0; m], var_im: vec![0.0; m], cov_reim: vec![0.0; m] }
    }

    pub fn from_diagonals(n: usize, len: usize, var_re: Vec<f64>, var_im: Vec<f64>, cov_reim: Vec<f64>) -> Result<Self> {
        let m = n * len;
        if var_re.len() != m || var_im.len() != m || cov_reim.len() != m {
            return Err(Error::Dimension(format!("block covariance diagonals must have length {m}")));
        }
        Ok(Self { n, len, var_re, var_im, cov_reim })
    }

    /// Identical i.i.d. blocks `sigma2 * I_2`.
    pub fn isotropic(n: usize, len: usize, sigma2: f64) -> Self {
        let m = n * len;
        Self { n, len, var_re: vec![sigma2; m], var_im: vec![sigma2; m], cov_reim: vec![0.0; m] }
    }

    pub fn index(&self, bus: usize, sample: usize) -> usize {
        bus * self.len + sample
    }

    pub fn block(&self, bus: usize, sample: usize) -> [[f64; 2]; 2] {
        let k = self.index(bus, sample);
        [[self.var_re[k], self.cov_reim[k]], [self.cov_reim[k], self.var_im[k]]]
    }

    pub fn is_zero(&self) -> bool {
        self.var_re.iter().chain(&self.var_im).chain(&self.cov_reim).all(|x| *x == 0.0)
    }

    /// Largest eigenvalue over all blocks.
    pub fn max_eigenvalue(&self) -> f64 {
        (0..self.var_re.len())
            .map(|k| eigen2(self.var_re[k], self.cov_reim[k], self.var_im[k]).1)
            .fold(0.0, f64::max)
    }

    /// Inverse of one block via the 2x2 closed form. `None` when singular.
    pub fn inverse_block(&self, bus: usize, sample: usize) -> Option<[[f64; 2]; 2]> {
        let k = self.index(bus, sample);
        let (a, b, c) = (self.var_re[k], self.cov_reim[k], self.var_im[k]);
        let det = a * c - b * b;
        if !(det > 0.0) {
            return None;
        }
        Some([[c / det, -b / det], [-b / det, a / det]])
    }

    /// Inverses of all blocks with eigenvalues clamped from below at
    /// `floor_rel` times the largest eigenvalue. Returns the weights and
    /// the number of blocks that needed clamping.
    pub fn weight_blocks(&self, floor_rel: f64) -> (Vec<WeightBlock>, usize) {
        let floor = floor_rel * self.max_eigenvalue();
        let mut clamped = 0;
        let weights = (0..self.var_re.len())
            .map(|k| {
                let (a, b, c) = (self.var_re[k], self.cov_reim[k], self.var_im[k]);
                let (lo, _) = eigen2(a, b, c);
                if lo >= floor && a * c - b * b > 0.0 {
                    let det = a * c - b * b;
                    [c / det, -b / det, a / det]
                } else {
                    clamped += 1;
                    clamped_inverse(a, b, c, floor)
                }
            })
            .collect();
        (weights, clamped)
    }

    /// Dense `2nN x 2nN` form in `[Re; Im]` ordering.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.n * self.len;
        let mut d = DMatrix::zeros(2 * m, 2 * m);
        for k in 0..m {
            d[(k, k)] = self.var_re[k];
            d[(m + k, m + k)] = self.var_im[k];
            d[(k, m + k)] = self.cov_reim[k];
            d[(m + k, k)] = self.cov_reim[k];
        }
        d
    }

    /// `x^T Sigma^{-1} x` for a real-stacked vector of length `2nN`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let m = self.n * self.len;
        if x.len() != 2 * m {
            return Err(Error::Dimension(format!("expected a vector of length {}, got {}", 2 * m, x.len())));
        }
        let mut total = 0.0;
        for k in 0..m {
            let (re, im) = (x[k], x[m + k]);
            if re == 0.0 && im == 0.0 {
                continue;
            }
            let (a, b, c) = (self.var_re[k], self.cov_reim[k], self.var_im[k]);
            let det = a * c - b * b;
            if !(det > 0.0) {
                return Err(Error::Singular {
                    context: format!("noise covariance block {k} is singular"),
                    condition: f64::INFINITY,
                });
            }
            total += (c * re * re - 2.0 * b * re * im + a * im * im) / det;
        }
        Ok(total)
    }
}

/// Eigenvalues `(min, max)` of `[[a, b], [b, c]]`.
pub(crate) fn eigen2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - r, mean + r)
}

fn eigvec2(a: f64, b: f64, c: f64, lambda: f64) -> (f64, f64) {
    // Either row of (A - lambda I) is orthogonal to the eigenvector.
    let (x, y) = if (a - lambda).abs() + b.abs() >= (c - lambda).abs() + b.abs() {
        (b, lambda - a)
    } else {
        (lambda - c, b)
    };
    let norm = (x * x + y * y).sqrt();
    if norm == 0.0 {
        (1.0, 0.0)
    } else {
        (x / norm, y / norm)
    }
}

fn clamped_inverse(a: f64, b: f64, c: f64, floor: f64) -> WeightBlock {
    let floor = if floor > 0.0 { floor } else { f64::MIN_POSITIVE.sqrt() };
    let (lo, hi) = eigen2(a, b, c);
    let (x, y) = eigvec2(a, b, c, hi);
    let (l1, l2) = (1.0 / hi.max(floor), 1.0 / lo.max(floor));
    // hi-eigenvector (x, y), lo-eigenvector (-y, x)
    [l1 * x * x + l2 * y * y, (l1 - l2) * x * y, l1 * y * y + l2 * x * x]
}

fn psd_block(a: f64, b: f64, c: f64) -> (f64, f64, f64, bool) {
    let (lo, hi) = eigen2(a, b, c);
    if lo >= 0.0 {
        return (a, b, c, false);
    }
    let (x, y) = eigvec2(a, b, c, hi);
    let hi = hi.max(0.0);
    (hi * x * x, hi * x * y, hi * y * y, true)
}

/// Block covariances of the voltage and current noise, evaluated from the
/// measured magnitudes and phases of every sample.
pub fn assemble_block_covariance(series: &PhasorSeries, noise: &NoiseSpec) -> Result<(BlockCovariance, BlockCovariance)> {
    let (len, n) = (series.len(), series.n());
    if noise.n() != n {
        return Err(Error::Dimension(format!("noise covers {} buses, series has {n}", noise.n())));
    }
    let build = |mag: &DMatrix<f64>, ang: &DMatrix<f64>, voltage: bool| -> (BlockCovariance, usize) {
        let per_bus: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, usize)> = (0..n)
            .into_par_iter()
            .map(|h| {
                let pn = if voltage { noise.voltage(h) } else { noise.current(h) };
                let (mut re, mut im, mut co, mut fixed) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], 0);
                for t in 0..len {
                    let m = cartesian_moments_measured(mag[(t, h)], ang[(t, h)], pn);
                    let (a, b, c, clamped) = psd_block(m.var_re(), m.cov_reim(), m.var_im());
                    re[t] = a;
                    co[t] = b;
                    im[t] = c;
                    fixed += clamped as usize;
                }
                (re, im, co, fixed)
            })
            .collect();
        let mut cov = BlockCovariance::zeros(n, len);
        let mut fixed = 0;
        for (h, (re, im, co, f)) in per_bus.into_iter().enumerate() {
            cov.var_re[h * len..(h + 1) * len].copy_from_slice(&re);
            cov.var_im[h * len..(h + 1) * len].copy_from_slice(&im);
            cov.cov_reim[h * len..(h + 1) * len].copy_from_slice(&co);
            fixed += f;
        }
        (cov, fixed)
    };
    let (sv, fv) = build(&series.v_mag, &series.v_ang, true);
    let (si, fi) = build(&series.i_mag, &series.i_ang, false);
    if fv + fi > 0 {
        log::warn!("clamped {} indefinite noise covariance blocks to positive semidefinite", fv + fi);
    }
    Ok((sv, si))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{cartesian_moments_measured, PolarNoise};
    use num_complex::Complex64;

    fn noisy_series(len: usize, n: usize) -> PhasorSeries {
        let v = DMatrix::from_fn(len, n, |t, h| Complex64::from_polar(1.0 + 0.01 * t as f64, 0.3 * h as f64 - 0.2 * t as f64));
        let i = DMatrix::from_fn(len, n, |t, h| Complex64::from_polar(0.5 + 0.1 * h as f64, 1.0 + 0.7 * t as f64));
        let mut s = PhasorSeries::from_cartesian(&v, &i, (0..len).map(|t| t as f64).collect()).unwrap();
        s.is_noisy = true;
        s
    }

    #[test]
    fn single_block_equals_sample_moments() {
        let s = noisy_series(1, 1);
        let spec = NoiseSpec::uniform(1, 1e-3, 2e-3, 3e-3, 4e-3, 0);
        let (sv, si) = assemble_block_covariance(&s, &spec).unwrap();
        let mv = cartesian_moments_measured(s.v_mag[(0, 0)], s.v_ang[(0, 0)], PolarNoise::new(1e-3, 2e-3));
        let mi = cartesian_moments_measured(s.i_mag[(0, 0)], s.i_ang[(0, 0)], PolarNoise::new(3e-3, 4e-3));
        assert_eq!(sv.block(0, 0), mv.cov);
        assert_eq!(si.block(0, 0), mi.cov);
    }

    #[test]
    fn dense_form_is_a_permuted_block_diagonal() {
        let (n, len) = (2, 3);
        let s = noisy_series(len, n);
        let spec = NoiseSpec::uniform(n, 1e-2, 2e-2, 1e-2, 1e-2, 0);
        let (sv, _) = assemble_block_covariance(&s, &spec).unwrap();
        let dense = sv.to_dense();
        let m = n * len;
        // permutation taking interleaved (re_k, im_k) order to [Re; Im]
        let perm: Vec<usize> = (0..2 * m).map(|j| if j % 2 == 0 { j / 2 } else { m + j / 2 }).collect();
        let mut blockdiag = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for h in 0..n {
            for t in 0..len {
                let k = h * len + t;
                let b = sv.block(h, t);
                for r in 0..2 {
                    for c in 0..2 {
                        blockdiag[(2 * k + r, 2 * k + c)] = b[r][c];
                    }
                }
            }
        }
        for i in 0..2 * m {
            for j in 0..2 * m {
                assert_eq!(dense[(perm[i], perm[j])], blockdiag[(i, j)]);
            }
        }
    }

    #[test]
    fn block_inverse_matches_dense_inverse() {
        let (n, len) = (2, 4);
        let s = noisy_series(len, n);
        let spec = NoiseSpec::uniform(n, 3e-3, 5e-3, 2e-3, 1e-3, 0);
        let (sv, _) = assemble_block_covariance(&s, &spec).unwrap();
        let m = n * len;
        let mut inv = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for h in 0..n {
            for t in 0..len {
                let k = sv.index(h, t);
                let w = sv.inverse_block(h, t).unwrap();
                inv[(k, k)] = w[0][0];
                inv[(k, m + k)] = w[0][1];
                inv[(m + k, k)] = w[1][0];
                inv[(m + k, m + k)] = w[1][1];
            }
        }
        let prod = &inv * sv.to_dense();
        let err = (prod - DMatrix::<f64>::identity(2 * m, 2 * m)).abs().max();
        assert!(err < 1e-12, "{err}");

        let x: Vec<f64> = (0..2 * m).map(|k| (k as f64 * 0.37).sin()).collect();
        let xv = nalgebra::DVector::from_vec(x.clone());
        let dense_q = (xv.transpose() * &inv * &xv)[(0, 0)];
        let q = sv.quad_form(&x).unwrap();
        assert!((q - dense_q).abs() < 1e-12 * dense_q.abs());
    }

    #[test]
    fn clamped_weights_of_rank_one_block() {
        // variance only along the direction (cos 0.4, sin 0.4)
        let (c, s) = (0.4_f64.cos(), 0.4_f64.sin());
        let cov = BlockCovariance::from_diagonals(1, 1, vec![c * c], vec![s * s], vec![c * s]).unwrap();
        assert!(cov.inverse_block(0, 0).is_none());
        let (w, clamped) = cov.weight_blocks(1e-6);
        assert_eq!(clamped, 1);
        // along the variance direction weight ~1, across it ~1e6
        let along = w[0][0] * c * c + 2.0 * w[0][1] * c * s + w[0][2] * s * s;
        let across = w[0][0] * s * s - 2.0 * w[0][1] * c * s + w[0][2] * c * c;
        assert!((along - 1.0).abs() < 1e-6);
        assert!((across / 1e6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn psd_clamp_projects_indefinite_blocks() {
        let (a, b, c, changed) = psd_block(1.0, 2.0, 1.0);
        assert!(changed);
        let (lo, hi) = eigen2(a, b, c);
        assert!(lo.abs() < 1e-12);
        assert!((hi - 3.0).abs() < 1e-12);
    }
}
