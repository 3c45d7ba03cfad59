//! Generalized-lasso priors `-log p(y) = lambda * sum_j psi_j((L y - mu)_j)`.
//!
//! `psi_j(z) = w+ max(z, 0) + w- max(-z, 0)`; symmetric terms have
//! `w+ = w- = 1`, which gives the plain `lambda ||L y - mu||_1`. Asymmetric
//! weights encode sign beliefs, which `(L, mu)` alone cannot express.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectorize::ReductionMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    KnownValues,
    Sparsity,
    Signs,
    Ratio,
    RxRatio,
    Adaptive,
    Contrast,
    NonDiagonal,
    Custom,
}

/// One sparse row of `L`: `(column, value)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTerm {
    pub kind: PriorKind,
    /// Number of columns of `L` (length of the parameter vector).
    pub dim: usize,
    pub rows: Vec<SparseRow>,
    pub mu: Vec<f64>,
    pub lambda: f64,
    /// Per-row `(w+, w-)`; `None` means symmetric unit weights.
    #[serde(default)]
    pub weights: Option<Vec<(f64, f64)>>,
}

impl PriorTerm {
    pub fn new(kind: PriorKind, dim: usize, rows: Vec<SparseRow>, mu: Vec<f64>, lambda: f64) -> Result<Self> {
        let term = Self { kind, dim, rows, mu, lambda, weights: None };
        term.validate()?;
        Ok(term)
    }

    pub fn with_weights(mut self, weights: Vec<(f64, f64)>) -> Result<Self> {
        self.weights = Some(weights);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.mu.len() {
            return Err(Error::Dimension(format!("prior has {} rows but {} centers", self.rows.len(), self.mu.len())));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("prior weight lambda = {} must be finite and >= 0", self.lambda)));
        }
        for row in &self.rows {
            for &(c, v) in row {
                if c >= self.dim {
                    return Err(Error::Dimension(format!("prior column {c} outside [0, {})", self.dim)));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("prior matrix entries must be finite".into()));
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.rows.len() {
                return Err(Error::Dimension("prior weights do not match its rows".into()));
            }
            if w.iter().any(|(a, b)| !(*a >= 0.0) || !(*b >= 0.0)) {
                return Err(Error::InvalidArgument("prior side weights must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn side_weights(&self, j: usize) -> (f64, f64) {
        self.weights.as_ref().map_or((1.0, 1.0), |w| w[j])
    }

    pub fn is_symmetric(&self) -> bool {
        self.weights.as_ref().is_none_or(|w| w.iter().all(|(a, b)| a == b))
    }

    /// True when every row has at most one entry and no two rows share a
    /// column.
    pub fn is_diagonal(&self) -> bool {
        let mut seen = vec![false; self.dim];
        for row in &self.rows {
            let nz: Vec<_> = row.iter().filter(|(_, v)| *v != 0.0).collect();
            match nz.as_slice() {
                [] => {}
                [(c, _)] => {
                    if seen[*c] {
                        return false;
                    }
                    seen[*c] = true;
                }
                _ => return false,
            }
        }
        true
    }

    /// `(L y - mu)_j`
    pub fn residual(&self, y: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.mu)
            .map(|(row, m)| row.iter().map(|&(c, v)| v * y[c]).sum::<f64>() - m)
            .collect()
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::Dimension(format!("prior expects {} parameters, got {}", self.dim, y.len())));
        }
        let total: f64 = self
            .residual(y)
            .iter()
            .enumerate()
            .map(|(j, z)| {
                let (wp, wm) = self.side_weights(j);
                if *z >= 0.0 {
                    wp * z
                } else {
                    -wm * z
                }
            })
            .sum();
        Ok(self.lambda * total)
    }
}

/// Ordered collection of independent priors; the penalty is their sum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorStack {
    pub terms: Vec<PriorTerm>,
}

impl PriorStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, term: PriorTerm) -> &mut Self {
        self.terms.push(term);
        self
    }

    pub fn with(mut self, term: PriorTerm) -> Self {
        self.terms.push(term);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.terms.iter().all(|t| t.is_empty() || t.lambda == 0.0)
    }

    pub fn rows(&self) -> usize {
        self.terms.iter().map(|t| t.len()).sum()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        for t in &self.terms {
            if t.dim != dim {
                return Err(Error::Dimension(format!("prior {:?} has {} columns, parameters have {dim}", t.kind, t.dim)));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, y: &[f64]) -> Result<f64> {
        self.terms.iter().map(|t| t.evaluate(y)).sum()
    }

    /// Whether ADMM can handle the stack: diagonal rows, symmetric weights.
    pub fn is_diagonal_symmetric(&self) -> bool {
        self.terms.iter().all(|t| t.lambda == 0.0 || (t.is_diagonal() && t.is_symmetric()))
    }

    /// Flattened rows with their scaled side weights
    /// `(row, mu, lambda * w+, lambda * w-)`.
    pub fn flattened(&self) -> Vec<(&SparseRow, f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.rows());
        for t in &self.terms {
            if t.lambda == 0.0 {
                continue;
            }
            for (j, row) in t.rows.iter().enumerate() {
                let (wp, wm) = t.side_weights(j);
                out.push((row, t.mu[j], t.lambda * wp, t.lambda * wm));
            }
        }
        out
    }
}

/// Confidence-weighted known parameter values: one row `c e_h` with center
/// `c beta_h` per entry `(h, beta_h, c)`. Repeated indices add rows.
pub fn prior_known_values(dim: usize, entries: &[(usize, f64, f64)], lambda: f64) -> Result<PriorTerm> {
    let rows = entries.iter().map(|&(h, _, c)| vec![(h, c)]).collect();
    let mu = entries.iter().map(|&(_, b, c)| c * b).collect();
    PriorTerm::new(PriorKind::KnownValues, dim, rows, mu, lambda)
}

/// Sparsity prior `lambda ||diag(pattern) y||_1`; pattern entries are
/// usually 0 (line known to exist), 1 (unknown) or a large K (absent).
pub fn prior_sparsity(pattern: &[f64], lambda: f64) -> Result<PriorTerm> {
    let rows = pattern.iter().enumerate().map(|(j, &p)| vec![(j, p)]).collect();
    PriorTerm::new(PriorKind::Sparsity, pattern.len(), rows, vec![0.0; pattern.len()], lambda)
}

/// Skewed absolute values: slope `lambda` on the believed side of zero and
/// `lambda + 2K` on the other, a continuous stand-in for
/// `lambda ||y||_1 + K sum (1 - s_h sgn y_h)`.
pub fn prior_signs(signs: &[f64], k: f64, lambda: f64) -> Result<PriorTerm> {
    prior_signs_scaled(signs, &vec![1.0; signs.len()], k, lambda)
}

/// Sign prior on top of per-parameter scales (for example adaptive
/// weights): row `j` is `scale_j e_j`.
pub fn prior_signs_scaled(signs: &[f64], scales: &[f64], k: f64, lambda: f64) -> Result<PriorTerm> {
    if signs.len() != scales.len() {
        return Err(Error::Dimension("signs and scales differ in length".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("a sign prior needs lambda > 0".into()));
    }
    let wrong = 1.0 + 2.0 * k / lambda;
    let mut weights = Vec::with_capacity(signs.len());
    for &s in signs {
        weights.push(if s > 0.0 {
            (1.0, wrong)
        } else if s < 0.0 {
            (wrong, 1.0)
        } else {
            return Err(Error::InvalidArgument("believed signs must be +1 or -1".into()));
        });
    }
    let rows = scales.iter().enumerate().map(|(j, &c)| vec![(j, c)]).collect();
    let mut term = PriorTerm::new(PriorKind::Signs, signs.len(), rows, vec![0.0; signs.len()], lambda)?;
    term = term.with_weights(weights)?;
    Ok(term)
}

/// Ratio `y_k = rho y_h`: row `rho e_h - e_k`, center 0.
pub fn prior_ratio(dim: usize, h: usize, k: usize, rho: f64, lambda: f64) -> Result<PriorTerm> {
    PriorTerm::new(PriorKind::Ratio, dim, vec![vec![(h, rho), (k, -1.0)]], vec![0.0], lambda)
}

/// Common ratio between imaginary and real halves: `L = [rho I, -I]`, so
/// the penalty vanishes when `Im y = rho Re y` for every parameter. For
/// line admittances `1 / (R + jX)` the ratio is `rho = -X / R`.
pub fn prior_rx(real_dim: usize, rho: f64, lambda: f64) -> Result<PriorTerm> {
    if real_dim % 2 != 0 {
        return Err(Error::Dimension("real parameter vectors have even length".into()));
    }
    let half = real_dim / 2;
    let rows = (0..half).map(|j| vec![(j, rho), (half + j, -1.0)]).collect();
    PriorTerm::new(PriorKind::RxRatio, real_dim, rows, vec![0.0; half], lambda)
}

/// Imaginary-to-real admittance ratio of a line with resistance-to-reactance
/// ratio `r_over_x`.
pub fn rho_from_r_over_x(r_over_x: f64) -> f64 {
    -1.0 / r_over_x
}

/// Floor used for adaptive weights: `1e-8 * max |y_mle|`.
pub fn adaptive_floor(y_mle: &[f64]) -> f64 {
    1e-8 * y_mle.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

/// Per-parameter adaptive scales `1 / max(|y_mle|, floor)`.
pub fn adaptive_scales(y_mle: &[f64]) -> Vec<f64> {
    let floor = adaptive_floor(y_mle);
    y_mle.iter().map(|v| 1.0 / v.abs().max(floor)).collect()
}

/// Adaptive lasso `lambda || diag(|y_mle|)^{-1} y ||_1`.
pub fn prior_adaptive(y_mle: &[f64], lambda: f64) -> Result<PriorTerm> {
    let rows = adaptive_scales(y_mle).into_iter().enumerate().map(|(j, c)| vec![(j, c)]).collect();
    PriorTerm::new(PriorKind::Adaptive, y_mle.len(), rows, vec![0.0; y_mle.len()], lambda)
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `||y||_1 - |y|^T |s - sgn(y)|`: the l1 norm discounted by entries whose
/// sign contradicts the belief.
pub fn gamma_hat(y_mle: &[f64], signs: &[f64]) -> Result<f64> {
    if y_mle.len() != signs.len() {
        return Err(Error::Dimension("signs and estimate differ in length".into()));
    }
    let l1: f64 = y_mle.iter().map(|v| v.abs()).sum();
    let wrong: f64 = y_mle.iter().zip(signs).map(|(v, s)| v.abs() * (s - sgn(*v)).abs()).sum();
    Ok(l1 - wrong)
}

/// `(lambda' / gamma) |s^T y - gamma|` as the row `s^T / gamma`, center 1.
pub fn prior_contrast(gamma: f64, signs: &[f64], lambda_prime: f64) -> Result<PriorTerm> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("contrast prior needs gamma > 0, got {gamma}")));
    }
    let row = signs.iter().enumerate().map(|(j, s)| (j, s / gamma)).collect();
    PriorTerm::new(PriorKind::Contrast, signs.len(), vec![row], vec![1.0], lambda_prime)
}

/// Believed signs of reduced line parameters: conductances positive,
/// susceptances negative.
pub fn line_signs(map: &ReductionMap) -> Vec<f64> {
    let r = map.r();
    (0..2 * r).map(|j| if j < r { 1.0 } else { -1.0 }).collect()
}

/// Prior on the diagonal sums of a Laplacian in reduced coordinates.
///
/// For node `h` and each of the real and imaginary channels, the row sums
/// the line parameters incident to `h` (which equals `Y_hh`) divided by the
/// same channel of the reference diagonal, centered at 1. Channels with a
/// reference smaller than `1e-12 * max` are skipped.
pub fn prior_nondiag(map: &ReductionMap, y_diag_ref: &[num_complex::Complex64], lambda_prime: f64) -> Result<PriorTerm> {
    let n = map.n();
    if y_diag_ref.len() != n {
        return Err(Error::Dimension(format!("expected {n} diagonal entries, got {}", y_diag_ref.len())));
    }
    let r = map.r();
    let scale = y_diag_ref.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(2 * n);
    for h in 0..n {
        let incident: Vec<usize> =
            map.pairs().iter().enumerate().filter(|(_, (a, b))| *a == h || *b == h).map(|(p, _)| p).collect();
        for (offset, reference) in [(0, y_diag_ref[h].re), (r, y_diag_ref[h].im)] {
            if reference.abs() <= 1e-12 * scale || incident.is_empty() {
                log::warn!("skipping diagonal prior row for node {h}: reference {reference:e}");
                continue;
            }
            rows.push(incident.iter().map(|&p| (offset + p, 1.0 / reference)).collect());
        }
    }
    let m = rows.len();
    PriorTerm::new(PriorKind::NonDiagonal, 2 * r, rows, vec![1.0; m], lambda_prime)
}

/// A line admittance known beforehand, in the node numbering of the
/// estimation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnownLine {
    pub from: usize,
    pub to: usize,
    /// Line admittance `(re, im)`, i.e. `-Y_from,to`.
    pub value: (f64, f64),
    /// Row scale; `None` uses the inverse magnitude of each channel.
    #[serde(default)]
    pub confidence: Option<f64>,
}

/// Recipe for the MAP prior stack built around an MLE estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Prior weight; `None` selects it from the data with `auto_c`.
    pub lambda: Option<f64>,
    pub auto_c: f64,
    /// Weight of the diagonal-sum and contrast priors; defaults to `lambda`.
    pub lambda_prime: Option<f64>,
    /// Scale the l1 rows by the inverse MLE magnitudes.
    pub adaptive: bool,
    /// Conductances non-negative, susceptances non-positive.
    pub signs: bool,
    /// Sign violation penalty `K` as a multiple of `lambda`.
    pub sign_k: f64,
    pub nondiag: bool,
    pub contrast: bool,
    pub known: Vec<KnownLine>,
    /// Weight of the known-line rows as a multiple of `lambda`.
    pub known_weight: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            auto_c: 3.0,
            lambda_prime: None,
            adaptive: true,
            signs: true,
            sign_k: 1e4,
            nondiag: true,
            contrast: false,
            known: Vec::new(),
            known_weight: 1e3,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("lambda_prime", self.lambda_prime)] {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("{name} = {v} must be finite and >= 0")));
                }
            }
        }
        for (name, v) in [("auto_c", self.auto_c), ("sign_k", self.sign_k), ("known_weight", self.known_weight)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be positive and finite")));
            }
        }
        Ok(())
    }

    /// Builds the stack for weight `lambda` around the MLE `y_mle` (reduced
    /// coordinates of `map`).
    pub fn build(&self, map: &ReductionMap, y_mle: &[f64], lambda: f64) -> Result<PriorStack> {
        self.validate()?;
        if y_mle.len() != map.real_dim() {
            return Err(Error::Dimension("MLE does not match the reduction map".into()));
        }
        let lambda_prime = self.lambda_prime.unwrap_or(lambda);
        let mut stack = PriorStack::new();
        if lambda == 0.0 && self.known.is_empty() {
            return Ok(stack);
        }
        let scales = if self.adaptive { adaptive_scales(y_mle) } else { vec![1.0; y_mle.len()] };
        let signs = line_signs(map);
        if lambda > 0.0 {
            if self.signs {
                stack.push(prior_signs_scaled(&signs, &scales, self.sign_k * lambda, lambda)?);
            } else {
                let rows = scales.iter().enumerate().map(|(j, &c)| vec![(j, c)]).collect();
                stack.push(PriorTerm::new(PriorKind::Adaptive, y_mle.len(), rows, vec![0.0; y_mle.len()], lambda)?);
            }
        }
        if lambda_prime > 0.0 && self.nondiag {
            let y = map.expand_matrix(y_mle)?;
            let diag: Vec<num_complex::Complex64> = (0..map.n()).map(|h| y[(h, h)]).collect();
            stack.push(prior_nondiag(map, &diag, lambda_prime)?);
        }
        if lambda_prime > 0.0 && self.contrast {
            stack.push(prior_contrast(gamma_hat(y_mle, &signs)?, &signs, lambda_prime)?);
        }
        if !self.known.is_empty() {
            let r = map.r();
            let mut entries = Vec::with_capacity(2 * self.known.len());
            for line in &self.known {
                let p = map.param_index(line.from, line.to).ok_or_else(|| {
                    Error::InvalidArgument(format!("known line ({}, {}) is not a free parameter", line.from, line.to))
                })?;
                for (j, v) in [(p, line.value.0), (r + p, line.value.1)] {
                    let c = match line.confidence {
                        Some(c) => c,
                        None if v != 0.0 => 1.0 / v.abs(),
                        None => 1.0 / line.value.0.hypot(line.value.1).max(f64::MIN_POSITIVE),
                    };
                    entries.push((j, v, c));
                }
            }
            let weight = self.known_weight * if lambda > 0.0 { lambda } else { 1.0 };
            stack.push(prior_known_values(map.real_dim(), &entries, weight)?);
        }
        Ok(stack)
    }
}
