use nalgebra::{DMatrix, DVector, LU, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::AdmittanceMatrix;

pub const MAX_ITERATIONS: usize = 200;
/// Power mismatch tolerance relative to the largest absolute row sum of `Y`
/// (at least 100), the scale of rounding errors in `Y v`.
const TOLERANCE: f64 = 1e-15;

/// Fixed-point power-flow solver for constant-power injections with one
/// slack bus. The factorization of the non-slack block is computed once and
/// reused for every state.
#[derive(Debug, Clone)]
pub struct PowerFlow {
    y: DMatrix<Complex64>,
    slack: usize,
    others: Vec<usize>,
    lu: LU<Complex64, Dyn, Dyn>,
    /// `Y_ns` column: coupling of the non-slack nodes to the slack.
    coupling: DVector<Complex64>,
    tolerance: f64,
}

impl PowerFlow {
    pub fn new(y: &AdmittanceMatrix, slack: usize) -> Result<Self> {
        let n = y.n();
        if slack >= n {
            return Err(Error::InvalidArgument(format!("slack bus {slack} outside [0, {n})")));
        }
        let others: Vec<usize> = (0..n).filter(|&h| h != slack).collect();
        let full = y.entries();
        let ynn = DMatrix::from_fn(others.len(), others.len(), |a, b| full[(others[a], others[b])]);
        let coupling = DVector::from_fn(others.len(), |a, _| full[(others[a], slack)]);
        let lu = ynn.clone().lu();
        if !others.is_empty() && !lu.is_invertible() {
            return Err(Error::Singular { context: "non-slack admittance block".into(), condition: f64::INFINITY });
        }
        let row_sum = full.row_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(100.0, f64::max);
        Ok(Self { y: full.clone(), slack, others, lu, coupling, tolerance: TOLERANCE * row_sum })
    }

    /// Solves for node voltages and injected currents given complex power
    /// injections `s` (generation positive) and the slack voltage.
    ///
    /// Iterates `Y_nn v_n = conj(s_n / v_n) - Y_ns v_s` from a flat start
    /// (or `init`) until the power mismatch is at rounding level.
    pub fn solve(&self, s: &[Complex64], v_slack: Complex64, init: Option<&[Complex64]>) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let n = self.y.nrows();
        if s.len() != n {
            return Err(Error::Dimension(format!("{} injections for {n} nodes", s.len())));
        }
        let m = self.others.len();
        let mut vn = DVector::from_fn(m, |a, _| init.map_or(v_slack, |v| v[self.others[a]]));
        let base = -(&self.coupling * v_slack);
        let mut mismatch = f64::INFINITY;
        for _ in 0..MAX_ITERATIONS {
            let rhs = DVector::from_fn(m, |a, _| (s[self.others[a]] / vn[a]).conj() + base[a]);
            let next = self.lu.solve(&rhs).ok_or_else(|| Error::Singular {
                context: "power-flow update".into(),
                condition: f64::INFINITY,
            })?;
            vn = next;
            let v = self.assemble(&vn, v_slack);
            let i = &self.y * &v;
            mismatch = self
                .others
                .iter()
                .map(|&h| (v[h] * i[h].conj() - s[h]).norm())
                .fold(0.0, f64::max);
            if !mismatch.is_finite() {
                break;
            }
            if mismatch < self.tolerance {
                return Ok((v.as_slice().to_vec(), i.as_slice().to_vec()));
            }
        }
        Err(Error::PowerFlow { step: 0, mismatch })
    }

    fn assemble(&self, vn: &DVector<Complex64>, v_slack: Complex64) -> DVector<Complex64> {
        let mut v = DVector::from_element(self.y.nrows(), v_slack);
        for (a, &h) in self.others.iter().enumerate() {
            v[h] = vn[a];
        }
        v
    }

    pub fn slack(&self) -> usize {
        self.slack
    }
}

/// One-shot power flow; see [`PowerFlow::solve`].
pub fn solve_power_flow(y: &AdmittanceMatrix, s: &[Complex64], slack: usize, v_slack: Complex64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    PowerFlow::new(y, slack)?.solve(s, v_slack, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus(y: Complex64) -> AdmittanceMatrix {
        AdmittanceMatrix::from_dense(DMatrix::from_row_slice(2, 2, &[y, -y, -y, y])).unwrap()
    }

    #[test]
    fn zero_load_gives_flat_voltages() {
        let y = two_bus(Complex64::new(5.0, -10.0));
        let (v, i) = solve_power_flow(&y, &[Complex64::default(); 2], 0, Complex64::new(1.02, 0.0)).unwrap();
        assert!(v.iter().all(|z| (z - Complex64::new(1.02, 0.0)).norm() < 1e-15));
        assert!(i.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn two_bus_matches_quadratic_solution() {
        // Purely resistive line, real load P at bus 1:
        // v1 (v0 - v1) g = P  =>  v1 = (v0 + sqrt(v0^2 - 4P/g)) / 2.
        let g = 10.0;
        let p = 0.3;
        let y = two_bus(Complex64::new(g, 0.0));
        let s = [Complex64::default(), Complex64::new(-p, 0.0)];
        let (v, _) = solve_power_flow(&y, &s, 0, Complex64::new(1.0, 0.0)).unwrap();
        let expected = (1.0 + (1.0 - 4.0 * p / g).sqrt()) / 2.0;
        assert!((v[1].re - expected).abs() < 1e-10);
        assert!(v[1].im.abs() < 1e-12);
    }

    #[test]
    fn collapse_is_reported() {
        let y = two_bus(Complex64::new(1.0, 0.0));
        let s = [Complex64::default(), Complex64::new(-5.0, 0.0)];
        let err = solve_power_flow(&y, &s, 0, Complex64::new(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::PowerFlow { .. }));
    }
}
