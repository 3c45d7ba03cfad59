//! Network topology and nodal admittance matrices.

mod io;
mod kron;

pub use io::{read_dense_csv, read_triplets, write_dense_csv, write_triplets, GridFile};
pub use kron::kron_reduce;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single series branch between two buses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    /// Conductance (p.u.), non-negative.
    pub g: f64,
    /// Susceptance (p.u.), non-positive for inductive lines.
    pub b: f64,
}

impl LineSpec {
    pub fn new(from: usize, to: usize, admittance: Complex64) -> Self {
        Self { from, to, g: admittance.re, b: admittance.im }
    }

    pub fn admittance(&self) -> Complex64 {
        Complex64::new(self.g, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTopology {
    pub n: usize,
    pub lines: Vec<LineSpec>,
    /// Per-node shunt admittance; empty means all zero.
    #[serde(default)]
    pub shunts: Vec<Complex64>,
    #[serde(default = "default_rated")]
    pub rated_voltage: f64,
}

fn default_rated() -> f64 {
    1.0
}

impl GridTopology {
    pub fn new(n: usize, lines: Vec<LineSpec>) -> Self {
        Self { n, lines, shunts: Vec::new(), rated_voltage: 1.0 }
    }

    pub fn shunt(&self, h: usize) -> Complex64 {
        self.shunts.get(h).copied().unwrap_or_default()
    }

    /// Checks indices, line signs and connectivity.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Structure("grid has no nodes".into()));
        }
        if !self.shunts.is_empty() && self.shunts.len() != self.n {
            return Err(Error::Structure(format!(
                "{} shunts given for {} nodes",
                self.shunts.len(),
                self.n
            )));
        }
        for (idx, line) in self.lines.iter().enumerate() {
            if line.from >= self.n || line.to >= self.n {
                return Err(Error::Structure(format!(
                    "line {idx} ({}, {}) references a node outside [0, {})",
                    line.from, line.to, self.n
                )));
            }
            if line.from == line.to {
                return Err(Error::Structure(format!("line {idx} is a self loop on node {}", line.from)));
            }
            if line.g < 0.0 {
                return Err(Error::Structure(format!("line {idx} has negative conductance {}", line.g)));
            }
        }
        let comps = self.components();
        if comps > 1 {
            return Err(Error::Structure(format!("graph has {comps} connected components")));
        }
        Ok(())
    }

    fn components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for line in &self.lines {
            let a = find(&mut parent, line.from);
            let b = find(&mut parent, line.to);
            if a != b {
                parent[a] = b;
            }
        }
        (0..self.n).filter(|&x| find(&mut parent, x) == x).count()
    }

    /// Lines with parallel branches merged, keyed by `(min, max)` node pair.
    pub fn merged_lines(&self) -> BTreeMap<(usize, usize), Complex64> {
        let mut merged = BTreeMap::new();
        for line in &self.lines {
            let key = (line.from.min(line.to), line.from.max(line.to));
            *merged.entry(key).or_insert(Complex64::new(0.0, 0.0)) += line.admittance();
        }
        merged
    }

    /// Relabels nodes: node `h` becomes `perm[h]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let lines = self
            .lines
            .iter()
            .map(|l| LineSpec { from: perm[l.from], to: perm[l.to], ..*l })
            .collect();
        let mut shunts = Vec::new();
        if !self.shunts.is_empty() {
            shunts = vec![Complex64::default(); self.n];
            for (h, s) in self.shunts.iter().enumerate() {
                shunts[perm[h]] = *s;
            }
        }
        Self { n: self.n, lines, shunts, rated_voltage: self.rated_voltage }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Structure {
    pub symmetric: bool,
    pub laplacian: bool,
}

/// Dense complex nodal admittance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceMatrix {
    entries: DMatrix<Complex64>,
    structure: Structure,
}

impl AdmittanceMatrix {
    /// Wraps a dense matrix, detecting the structure flags with the default
    /// tolerance `1e-9 * n * max|Y|`.
    pub fn from_dense(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Dimension(format!(
                "admittance matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let tol = default_tolerance(&entries);
        let report = validate_structure_dense(&entries, tol);
        let structure = Structure {
            symmetric: report.symmetry_residual <= tol,
            laplacian: report.symmetry_residual <= tol && report.laplacian_residual <= tol,
        };
        Ok(Self { entries, structure })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
            structure: Structure { symmetric: true, laplacian: true },
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn get(&self, h: usize, k: usize) -> Complex64 {
        self.entries[(h, k)]
    }

    /// Line admittance `y_hk = -Y_hk` for `h != k`.
    pub fn line_admittance(&self, h: usize, k: usize) -> Complex64 {
        -self.entries[(h, k)]
    }

    /// Node pairs `(h, k)` with `h > k` whose off-diagonal entry exceeds `tol`
    /// in magnitude.
    pub fn lines(&self, tol: f64) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for k in 0..n {
            for h in (k + 1)..n {
                if self.entries[(h, k)].norm() > tol {
                    out.push((h, k));
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Default for AdmittanceMatrix {
    fn default() -> Self {
        Self::zeros(0)
    }
}

pub(crate) fn default_tolerance(y: &DMatrix<Complex64>) -> f64 {
    let max = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
    1e-9 * y.nrows() as f64 * max.max(f64::MIN_POSITIVE)
}

/// Assembles `Y` from the topology: `Y_hk = -y_hk`, `Y_hh = sum_k y_hk + y_s,h`.
pub fn build_admittance(topology: &GridTopology) -> Result<AdmittanceMatrix> {
    topology.validate()?;
    let n = topology.n;
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for ((a, b), adm) in topology.merged_lines() {
        y[(a, b)] -= adm;
        y[(b, a)] -= adm;
        y[(a, a)] += adm;
        y[(b, b)] += adm;
    }
    let mut any_shunt = false;
    for h in 0..n {
        let s = topology.shunt(h);
        if s != Complex64::default() {
            any_shunt = true;
        }
        y[(h, h)] += s;
    }
    Ok(AdmittanceMatrix {
        entries: y,
        structure: Structure { symmetric: true, laplacian: !any_shunt },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// `max |Y - Y^T|`
    pub symmetry_residual: f64,
    /// `max |Y 1|`
    pub laplacian_residual: f64,
    /// Fraction of off-diagonal entries with magnitude at most `tol`.
    pub sparsity: f64,
}

pub fn validate_structure(y: &AdmittanceMatrix, tol: f64) -> StructureReport {
    validate_structure_dense(y.entries(), tol)
}

fn validate_structure_dense(y: &DMatrix<Complex64>, tol: f64) -> StructureReport {
    let n = y.nrows();
    let mut sym: f64 = 0.0;
    let mut zeros = 0usize;
    for h in 0..n {
        for k in 0..n {
            sym = sym.max((y[(h, k)] - y[(k, h)]).norm());
            if h != k && y[(h, k)].norm() <= tol {
                zeros += 1;
            }
        }
    }
    let lap = (0..n)
        .map(|h| y.row(h).iter().sum::<Complex64>().norm())
        .fold(0.0, f64::max);
    let off = n * n.saturating_sub(1);
    StructureReport {
        symmetry_residual: sym,
        laplacian_residual: lap,
        sparsity: if off == 0 { 1.0 } else { zeros as f64 / off as f64 },
    }
}
