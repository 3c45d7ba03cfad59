//! Grid fixture files and admittance matrix exports.
//!
//! The fixture is TOML:
//!
//! ```toml
//! n = 3
//! rated_voltage = 1.0
//! [[line]]
//! from = 0
//! to = 1
//! g = 2.0
//! b = -4.0
//! [[shunt]]
//! node = 2
//! g = 0.0
//! b = 0.01
//! ```
//!
//! Matrices are exported either as triplets (`row col re im`, one nonzero per
//! line, preceded by an `n <dim>` header) or as a dense CSV with columns
//! `re_0,im_0,...,re_{n-1},im_{n-1}`. Floats are written with the shortest
//! representation that parses back to the same value.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{AdmittanceMatrix, GridTopology, LineSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShuntEntry {
    node: usize,
    g: f64,
    b: f64,
}

/// On-disk layout of a grid fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFile {
    pub n: usize,
    #[serde(default = "one")]
    pub rated_voltage: f64,
    #[serde(default, rename = "line")]
    lines: Vec<LineSpec>,
    #[serde(default, rename = "shunt")]
    shunts: Vec<ShuntEntry>,
}

fn one() -> f64 {
    1.0
}

impl GridFile {
    pub fn from_topology(t: &GridTopology) -> Self {
        let shunts = t
            .shunts
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != Complex64::default())
            .map(|(node, s)| ShuntEntry { node, g: s.re, b: s.im })
            .collect();
        Self { n: t.n, rated_voltage: t.rated_voltage, lines: t.lines.clone(), shunts }
    }

    pub fn into_topology(self) -> Result<GridTopology> {
        let mut shunts = Vec::new();
        if !self.shunts.is_empty() {
            shunts = vec![Complex64::default(); self.n];
            for s in &self.shunts {
                if s.node >= self.n {
                    return Err(Error::Structure(format!("shunt on node {} outside [0, {})", s.node, self.n)));
                }
                shunts[s.node] += Complex64::new(s.g, s.b);
            }
        }
        let topo = GridTopology { n: self.n, lines: self.lines, shunts, rated_voltage: self.rated_voltage };
        topo.validate()?;
        Ok(topo)
    }

    pub fn parse(text: &str) -> Result<GridTopology> {
        let file: GridFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_topology()
    }

    pub fn load(path: &Path) -> Result<GridTopology> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(t: &GridTopology) -> String {
        toml::to_string(&Self::from_topology(t)).expect("grid file serializes")
    }
}

pub fn write_triplets(y: &AdmittanceMatrix) -> String {
    let mut out = String::from("# admittance triplets: row col re im\n");
    let _ = writeln!(out, "n {}", y.n());
    for h in 0..y.n() {
        for k in 0..y.n() {
            let z = y.get(h, k);
            if z.re != 0.0 || z.im != 0.0 {
                let _ = writeln!(out, "{h} {k} {:?} {:?}", z.re, z.im);
            }
        }
    }
    out
}

pub fn read_triplets(text: &str) -> Result<AdmittanceMatrix> {
    let mut n: Option<usize> = None;
    let mut m: Option<DMatrix<Complex64>> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Parse(format!("triplet line {}: '{raw}'", lineno + 1));
        if parts[0] == "n" {
            let dim: usize = parts.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            n = Some(dim);
            m = Some(DMatrix::zeros(dim, dim));
            continue;
        }
        let mat = m.as_mut().ok_or_else(|| Error::Parse("triplet file lacks 'n' header".into()))?;
        if parts.len() != 4 {
            return Err(bad());
        }
        let h: usize = parts[0].parse().map_err(|_| bad())?;
        let k: usize = parts[1].parse().map_err(|_| bad())?;
        let re: f64 = parts[2].parse().map_err(|_| bad())?;
        let im: f64 = parts[3].parse().map_err(|_| bad())?;
        let dim = n.unwrap_or(0);
        if h >= dim || k >= dim {
            return Err(bad());
        }
        mat[(h, k)] += Complex64::new(re, im);
    }
    let m = m.ok_or_else(|| Error::Parse("triplet file lacks 'n' header".into()))?;
    AdmittanceMatrix::from_dense(m)
}

pub fn write_dense_csv(y: &AdmittanceMatrix) -> String {
    let n = y.n();
    let mut out = String::new();
    let header: Vec<String> = (0..n).flat_map(|k| [format!("re_{k}"), format!("im_{k}")]).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for h in 0..n {
        let row: Vec<String> = (0..n)
            .flat_map(|k| {
                let z = y.get(h, k);
                [format!("{:?}", z.re), format!("{:?}", z.im)]
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_dense_csv(text: &str) -> Result<AdmittanceMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty dense CSV".into()))?;
    let cols = header.split(',').count();
    if cols % 2 != 0 {
        return Err(Error::Parse("dense CSV must have re/im column pairs".into()));
    }
    let n = cols / 2;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    let mut rows = 0;
    for (h, line) in lines.enumerate() {
        if h >= n {
            return Err(Error::Parse("dense CSV has more rows than columns".into()));
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Parse(format!("dense CSV row {h}: {e}")))?;
        if vals.len() != cols {
            return Err(Error::Parse(format!("dense CSV row {h} has {} values", vals.len())));
        }
        for k in 0..n {
            m[(h, k)] = Complex64::new(vals[2 * k], vals[2 * k + 1]);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse(format!("dense CSV has {rows} rows, expected {n}")));
    }
    AdmittanceMatrix::from_dense(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_admittance;

    fn sample() -> AdmittanceMatrix {
        let topo = GridTopology::new(
            3,
            vec![
                LineSpec::new(0, 1, Complex64::new(0.1 + 1.0 / 3.0, -2.0)),
                LineSpec::new(1, 2, Complex64::new(1e-17, -7.25e5)),
            ],
        );
        build_admittance(&topo).unwrap()
    }

    #[test]
    fn triplets_round_trip_exactly() {
        let y = sample();
        let back = read_triplets(&write_triplets(&y)).unwrap();
        assert_eq!(back.entries(), y.entries());
    }

    #[test]
    fn dense_csv_round_trips_exactly() {
        let y = sample();
        let back = read_dense_csv(&write_dense_csv(&y)).unwrap();
        assert_eq!(back.entries(), y.entries());
    }

    #[test]
    fn fixture_round_trip() {
        let mut topo = GridTopology::new(2, vec![LineSpec::new(0, 1, Complex64::new(1.0, -2.0))]);
        topo.shunts = vec![Complex64::new(0.0, 0.01), Complex64::default()];
        let text = GridFile::to_toml(&topo);
        assert_eq!(GridFile::parse(&text).unwrap(), topo);
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_triplets("0 0 1 1\n").is_err());
        assert!(read_triplets("n 2\n0 0 1\n").is_err());
        assert!(read_triplets("n 2\n3 0 1 1\n").is_err());
        assert!(read_dense_csv("re_0,im_0\n1,2,3\n").is_err());
        assert!(GridFile::parse("n = 2\n[[line]]\nfrom = 0\nto = 5\ng = 1.0\nb = 0.0\n").is_err());
    }
}
