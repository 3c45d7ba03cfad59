//! Closed-form estimators, the likelihood, Fisher information and priors.

mod fisher;
mod likelihood;
mod ls;
mod priors;

pub use fisher::{
    column_indices, fisher_column_block, fisher_map, fisher_mle, fisher_report, null_buses, reduce_fisher, FisherReport,
};
pub use likelihood::mle_negloglik;
pub use ls::{estimate_ols, estimate_tls, ols_tls_covariance, LsCovariance};
pub use priors::{
    adaptive_floor, adaptive_scales, gamma_hat, line_signs, prior_adaptive, prior_contrast, prior_known_values,
    prior_nondiag, prior_ratio, prior_rx, prior_signs, prior_signs_scaled, prior_sparsity, rho_from_r_over_x,
    KnownLine, PriorConfig, PriorKind, PriorStack, PriorTerm, SparseRow,
};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{read_triplets, write_triplets, AdmittanceMatrix};
use crate::vectorize::ReductionMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ols,
    Tls,
    Mle,
    Map,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Tls => "tls",
            Method::Mle => "mle",
            Method::Map => "map",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ols" => Ok(Method::Ols),
            "tls" => Ok(Method::Tls),
            "mle" => Ok(Method::Mle),
            "map" => Ok(Method::Map),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}' (expected ols, tls, mle or map)"))),
        }
    }
}

/// Estimate together with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub method: Method,
    /// Reduced real parameters when `reduction` is set, otherwise the full
    /// stacked `[Re vec(Y); Im vec(Y)]`.
    pub y_hat: Vec<f64>,
    #[serde(skip)]
    pub matrix: AdmittanceMatrix,
    #[serde(default)]
    pub reduction: Option<ReductionMap>,
    #[serde(default)]
    pub objective_trace: Vec<f64>,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub converged: bool,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_prime: Option<f64>,
    /// Smallest singular value of each augmented column `[Vc, Ic_i]` (OLS/TLS).
    #[serde(default)]
    pub sigma_aug: Option<Vec<f64>>,
    #[serde(default)]
    pub condition: Option<f64>,
    #[serde(skip)]
    pub fisher: Option<nalgebra::DMatrix<f64>>,
    #[serde(default)]
    pub eps_f: Option<f64>,
}

impl EstimationResult {
    pub fn from_matrix(method: Method, matrix: AdmittanceMatrix) -> Self {
        Self {
            method,
            y_hat: crate::vectorize::stack(matrix.entries()),
            matrix,
            reduction: None,
            objective_trace: Vec::new(),
            iterations: 0,
            converged: true,
            lambda: None,
            lambda_prime: None,
            sigma_aug: None,
            condition: None,
            fisher: None,
            eps_f: None,
        }
    }

    pub fn from_reduced(method: Method, y_r: Vec<f64>, map: ReductionMap) -> Result<Self> {
        let matrix = map.expand_admittance(&y_r)?;
        let mut r = Self::from_matrix(method, matrix);
        r.y_hat = y_r;
        r.reduction = Some(map);
        Ok(r)
    }

    /// Sets `eps_f` against the ground truth.
    pub fn evaluate(&mut self, truth: &AdmittanceMatrix) -> Result<f64> {
        let e = frobenius_error(&self.matrix, truth)?;
        self.eps_f = Some(e);
        Ok(e)
    }

    /// Writes `<stem>.triplets` (the matrix) and `<stem>.json` (metadata).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.triplets")), write_triplets(&self.matrix))?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let matrix = read_triplets(&fs::read_to_string(dir.join(format!("{stem}.triplets")))?)?;
        let text = fs::read_to_string(dir.join(format!("{stem}.json")))?;
        let mut r: Self = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("result metadata: {e}")))?;
        r.matrix = matrix;
        Ok(r)
    }
}

/// Relative Frobenius error `||Y_hat - Y||_F / ||Y||_F`.
pub fn frobenius_error(y_hat: &AdmittanceMatrix, y: &AdmittanceMatrix) -> Result<f64> {
    if y_hat.n() != y.n() {
        return Err(Error::Dimension(format!("estimate is {0}x{0}, truth is {1}x{1}", y_hat.n(), y.n())));
    }
    let denom = y.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("relative error against a zero matrix is undefined".into()));
    }
    Ok((y_hat.entries() - y.entries()).norm() / denom)
}

/// Off-diagonal entries below this fraction of the largest true line
/// admittance count as absent when scoring the recovered topology.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;

/// One row of the per-line comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineComparison {
    pub from: usize,
    pub to: usize,
    pub true_magnitude: f64,
    pub estimated_magnitude: f64,
    pub in_truth: bool,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub eps_f: f64,
    /// Fraction of detected lines that exist; 1 when nothing is detected.
    pub precision: f64,
    /// Fraction of existing lines that are detected.
    pub recall: f64,
    pub true_lines: usize,
    pub detected_lines: usize,
    pub lines: Vec<LineComparison>,
}

/// Relative Frobenius error plus support recovery of the off-diagonal
/// entries. Every node pair that is a line in either matrix gets a row.
pub fn evaluate_estimate(y_hat: &AdmittanceMatrix, truth: &AdmittanceMatrix) -> Result<Evaluation> {
    let eps_f = frobenius_error(y_hat, truth)?;
    let n = truth.n();
    let scale = (0..n)
        .flat_map(|k| ((k + 1)..n).map(move |h| (h, k)))
        .map(|(h, k)| truth.get(h, k).norm())
        .fold(0.0, f64::max);
    let tol = SUPPORT_THRESHOLD * scale;
    let mut lines = Vec::new();
    for k in 0..n {
        for h in (k + 1)..n {
            let t = truth.line_admittance(h, k).norm();
            let e = y_hat.line_admittance(h, k).norm();
            let (in_truth, detected) = (t > tol, e > tol);
            if in_truth || detected {
                lines.push(LineComparison { from: h, to: k, true_magnitude: t, estimated_magnitude: e, in_truth, detected });
            }
        }
    }
    let true_lines = lines.iter().filter(|l| l.in_truth).count();
    let detected_lines = lines.iter().filter(|l| l.detected).count();
    let hits = lines.iter().filter(|l| l.in_truth && l.detected).count();
    let ratio = |a: usize, b: usize, empty: f64| if b == 0 { empty } else { a as f64 / b as f64 };
    Ok(Evaluation {
        eps_f,
        precision: ratio(hits, detected_lines, 1.0),
        recall: ratio(hits, true_lines, 1.0),
        true_lines,
        detected_lines,
        lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_admittance, GridTopology, LineSpec};
    use num_complex::Complex64;

    fn chain() -> AdmittanceMatrix {
        let lines = vec![
            LineSpec::new(0, 1, Complex64::new(1.0, -2.0)),
            LineSpec::new(1, 2, Complex64::new(0.5, -1.5)),
        ];
        build_admittance(&GridTopology::new(3, lines)).unwrap()
    }

    #[test]
    fn frobenius_error_special_cases() {
        let y = chain();
        assert_eq!(frobenius_error(&y, &y).unwrap(), 0.0);
        assert_eq!(frobenius_error(&AdmittanceMatrix::zeros(3), &y).unwrap(), 1.0);
        let twice = AdmittanceMatrix::from_dense(y.entries() * Complex64::new(2.0, 0.0)).unwrap();
        assert!((frobenius_error(&twice, &y).unwrap() - 1.0).abs() < 1e-15);
        assert!(frobenius_error(&AdmittanceMatrix::zeros(2), &y).is_err());
    }

    #[test]
    fn evaluation_of_exact_and_zero_estimates() {
        let y = chain();
        let e = evaluate_estimate(&y, &y).unwrap();
        assert_eq!((e.eps_f, e.precision, e.recall), (0.0, 1.0, 1.0));
        assert_eq!(e.true_lines, 2);
        let z = evaluate_estimate(&AdmittanceMatrix::zeros(3), &y).unwrap();
        assert_eq!((z.eps_f, z.recall, z.detected_lines), (1.0, 0.0, 0));
    }

    #[test]
    fn evaluation_flags_spurious_lines() {
        let y = chain();
        let mut m = y.entries().clone();
        m[(2, 0)] = Complex64::new(-0.3, 0.0);
        m[(0, 2)] = Complex64::new(-0.3, 0.0);
        let e = evaluate_estimate(&AdmittanceMatrix::from_dense(m).unwrap(), &y).unwrap();
        assert_eq!(e.detected_lines, 3);
        assert!((e.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.recall, 1.0);
        assert!(e.lines.iter().any(|l| (l.from, l.to) == (2, 0) && !l.in_truth));
    }

    #[test]
    fn frobenius_error_is_scale_equivariant() {
        let y = chain();
        let y_hat = AdmittanceMatrix::from_dense(y.entries().map(|z| z * 1.1 + Complex64::new(0.01, 0.0))).unwrap();
        let c = Complex64::new(3.7, 0.0);
        let scaled_hat = AdmittanceMatrix::from_dense(y_hat.entries() * c).unwrap();
        let scaled = AdmittanceMatrix::from_dense(y.entries() * c).unwrap();
        let a = frobenius_error(&y_hat, &y).unwrap();
        let b = frobenius_error(&scaled_hat, &scaled).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn result_round_trips_through_files() {
        let map = ReductionMap::full(3);
        let y_r = map.reduce_matrix(chain().entries()).unwrap();
        let mut r = EstimationResult::from_reduced(Method::Map, y_r, map).unwrap();
        r.lambda = Some(0.25);
        r.objective_trace = vec![3.0, 2.0];
        r.evaluate(&chain()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.save(dir.path(), "estimate").unwrap();
        let back = EstimationResult::load(dir.path(), "estimate").unwrap();
        assert_eq!(back, r);
        assert_eq!(back.eps_f, Some(0.0));
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("MAP".parse::<Method>().unwrap(), Method::Map);
        assert!("ridge".parse::<Method>().is_err());
    }
}
