//! Data of the errors-in-variables MAP problem and its two exact
//! sub-problems.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::PriorStack;
use crate::linalg::{cholesky_in_place, cholesky_solve};
use crate::signal::{BlockCovariance, Measurements, WeightBlock};
use crate::vectorize::ReductionMap;

/// Samples per parallel work unit. Fixed so that reductions are summed in
/// the same order regardless of the thread count.
const CHUNK: usize = 64;

/// Relative eigenvalue floor used when inverting noise covariance blocks.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Measurements, noise weights, reduction map and priors of one estimation
/// problem. Arrays are stored sample-major (`t * n + h`).
#[derive(Debug, Clone)]
pub struct Problem {
    n: usize,
    len: usize,
    v: Vec<Complex64>,
    i: Vec<Complex64>,
    /// Inverse voltage covariance blocks; `None` fixes `dV = 0`.
    wv: Option<Vec<WeightBlock>>,
    wi: Vec<WeightBlock>,
    map: ReductionMap,
    priors: PriorStack,
    /// For each node, the incident parameters and the node at the other end.
    incident: Vec<Vec<(usize, usize)>>,
}

fn sample_major(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for t in 0..rows {
        for h in 0..cols {
            out.push(m[(t, h)]);
        }
    }
    out
}

fn weights_sample_major(cov: &BlockCovariance, what: &str) -> Vec<WeightBlock> {
    let (w, clamped) = cov.weight_blocks(WEIGHT_FLOOR);
    if clamped > 0 {
        log::warn!("{clamped} singular {what} covariance blocks were regularized before inversion");
    }
    let mut out = vec![[0.0; 3]; w.len()];
    for h in 0..cov.n {
        for t in 0..cov.len {
            out[t * cov.n + h] = w[cov.index(h, t)];
        }
    }
    out
}

/// Rows `2m` and `2m + 1` of the real form of a row-major complex matrix.
fn real_rows(y: &[Complex64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let d = 2 * n;
    let mut rows_a = vec![0.0; n * d];
    let mut rows_b = vec![0.0; n * d];
    for m in 0..n {
        for j in 0..n {
            let z = y[m * n + j];
            rows_a[m * d + 2 * j] = z.re;
            rows_a[m * d + 2 * j + 1] = -z.im;
            rows_b[m * d + 2 * j] = z.im;
            rows_b[m * d + 2 * j + 1] = z.re;
        }
    }
    (rows_a, rows_b)
}

/// Covariance block of a weight block.
fn invert_block([a, b, c]: WeightBlock) -> WeightBlock {
    let det = a * c - b * b;
    [c / det, -b / det, a / det]
}

impl Problem {
    /// Builds the problem from preprocessed measurements. A zero voltage
    /// covariance fixes `dV = 0` (generalized least squares); a zero current
    /// covariance is replaced by identity weights.
    pub fn new(meas: &Measurements, map: ReductionMap, priors: PriorStack) -> Result<Self> {
        let (len, n) = meas.v.shape();
        if meas.i.shape() != (len, n) {
            return Err(Error::Dimension("voltage and current arrays differ in shape".into()));
        }
        if map.n() != n {
            return Err(Error::Dimension(format!("reduction map has {} nodes, data has {n}", map.n())));
        }
        if len == 0 {
            return Err(Error::InvalidArgument("no samples".into()));
        }
        priors.check_dim(map.real_dim())?;
        for (cov, what) in [(&meas.sigma_v, "voltage"), (&meas.sigma_i, "current")] {
            if cov.n != n || cov.len != len {
                return Err(Error::Dimension(format!("{what} covariance does not match the data")));
            }
        }
        let wv = if meas.sigma_v.is_zero() { None } else { Some(weights_sample_major(&meas.sigma_v, "voltage")) };
        let wi = if meas.sigma_i.is_zero() {
            vec![[1.0, 0.0, 1.0]; n * len]
        } else {
            weights_sample_major(&meas.sigma_i, "current")
        };
        let mut incident = vec![Vec::new(); n];
        for (p, &(h, k)) in map.pairs().iter().enumerate() {
            incident[h].push((p, k));
            incident[k].push((p, h));
        }
        Ok(Self { n, len, v: sample_major(&meas.v), i: sample_major(&meas.i), wv, wi, map, priors, incident })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn map(&self) -> &ReductionMap {
        &self.map
    }

    pub fn priors(&self) -> &PriorStack {
        &self.priors
    }

    pub fn dim(&self) -> usize {
        self.map.real_dim()
    }

    /// Whether voltages are treated as noisy.
    pub fn has_voltage_noise(&self) -> bool {
        self.wv.is_some()
    }

    /// Same data with another prior stack.
    pub fn with_priors(&self, priors: PriorStack) -> Result<Self> {
        priors.check_dim(self.dim())?;
        Ok(Self { priors, ..self.clone() })
    }

    /// Row-major dense admittance matrix of a reduced vector.
    pub(crate) fn expand(&self, y_r: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let r = self.map.r();
        let mut y = vec![Complex64::new(0.0, 0.0); n * n];
        for (p, &(h, k)) in self.map.pairs().iter().enumerate() {
            let z = Complex64::new(y_r[p], y_r[r + p]);
            y[h * n + k] -= z;
            y[k * n + h] -= z;
            y[h * n + h] += z;
            y[k * n + k] += z;
        }
        y
    }

    /// `r_t = i_t - Y v_t` for one sample.
    fn sample_residual(&self, y: &[Complex64], t: usize, out: &mut [Complex64]) {
        let n = self.n;
        let v = &self.v[t * n..(t + 1) * n];
        for m in 0..n {
            let row = &y[m * n..(m + 1) * n];
            let mut acc = self.i[t * n + m];
            for (a, b) in row.iter().zip(v) {
                acc -= a * b;
            }
            out[m] = acc;
        }
    }

    /// Exact minimizer of the likelihood over `dV` for a fixed admittance
    /// matrix (row-major, `n x n`). Returns `dV` sample-major.
    ///
    /// For each sample the residual current is `di = r + Y dv` with
    /// `r = i - Y v`, so `dv` solves the `2n x 2n` system
    /// `(Y'^T W_i Y' + W_v) dv = -Y'^T W_i r` where `Y'` is the real
    /// (interleaved) form of `Y`.
    pub fn dv_step(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut dv = vec![Complex64::new(0.0, 0.0); n * self.len];
        let Some(wv) = &self.wv else {
            return dv;
        };
        let d = 2 * n;
        let (rows_a, rows_b) = real_rows(y, n);
        let regularized = std::sync::atomic::AtomicUsize::new(0);
        dv.par_chunks_mut(CHUNK * n).enumerate().for_each(|(c, block)| {
            let mut k = vec![0.0; d * d];
            let mut rhs = vec![0.0; d];
            let mut r = vec![Complex64::new(0.0, 0.0); n];
            let mut ta = vec![0.0; d];
            let mut tb = vec![0.0; d];
            for (s, out) in block.chunks_mut(n).enumerate() {
                let t = c * CHUNK + s;
                self.sample_residual(y, t, &mut r);
                k.iter_mut().for_each(|x| *x = 0.0);
                rhs.iter_mut().for_each(|x| *x = 0.0);
                for m in 0..n {
                    let [wrr, wri, wii] = self.wi[t * n + m];
                    let a = &rows_a[m * d..(m + 1) * d];
                    let b = &rows_b[m * d..(m + 1) * d];
                    // W a and W b combined column-wise: t_a = wrr a + wri b, t_b = wri a + wii b.
                    for q in 0..d {
                        ta[q] = wrr * a[q] + wri * b[q];
                        tb[q] = wri * a[q] + wii * b[q];
                    }
                    for p in 0..d {
                        let (ap, bp) = (a[p], b[p]);
                        if ap == 0.0 && bp == 0.0 {
                            continue;
                        }
                        let krow = &mut k[p * d..(p + 1) * d];
                        for q in 0..=p {
                            krow[q] += ap * ta[q] + bp * tb[q];
                        }
                    }
                    let (rr, ri) = (r[m].re, r[m].im);
                    let (wr0, wr1) = (wrr * rr + wri * ri, wri * rr + wii * ri);
                    for p in 0..d {
                        rhs[p] -= a[p] * wr0 + b[p] * wr1;
                    }
                }
                for h in 0..n {
                    let [wrr, wri, wii] = wv[t * n + h];
                    k[(2 * h) * d + 2 * h] += wrr;
                    k[(2 * h + 1) * d + 2 * h] += wri;
                    k[(2 * h + 1) * d + 2 * h + 1] += wii;
                }
                for p in 0..d {
                    for q in (p + 1)..d {
                        k[p * d + q] = k[q * d + p];
                    }
                }
                if !cholesky_in_place(&mut k, d) {
                    regularized.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let scale = (0..d).map(|p| k[p * d + p].abs()).fold(0.0, f64::max).max(1.0);
                    self.rebuild_regularized(&mut k, y, t, &rows_a, &rows_b, 1e-12 * scale);
                    if !cholesky_in_place(&mut k, d) {
                        continue;
                    }
                }
                cholesky_solve(&k, d, &mut rhs);
                for h in 0..n {
                    out[h] = Complex64::new(rhs[2 * h], rhs[2 * h + 1]);
                }
            }
        });
        let count = regularized.into_inner();
        if count > 0 {
            log::warn!("{count} per-sample voltage systems were singular and regularized with a ridge");
        }
        dv
    }

    fn rebuild_regularized(&self, k: &mut [f64], _y: &[Complex64], t: usize, a: &[f64], b: &[f64], ridge: f64) {
        let n = self.n;
        let d = 2 * n;
        let wv = self.wv.as_ref().expect("only called with voltage weights");
        k.iter_mut().for_each(|x| *x = 0.0);
        for m in 0..n {
            let [wrr, wri, wii] = self.wi[t * n + m];
            let (a, b) = (&a[m * d..(m + 1) * d], &b[m * d..(m + 1) * d]);
            for p in 0..d {
                for q in 0..d {
                    k[p * d + q] += a[p] * (wrr * a[q] + wri * b[q]) + b[p] * (wri * a[q] + wii * b[q]);
                }
            }
        }
        for h in 0..n {
            let [wrr, wri, wii] = wv[t * n + h];
            k[(2 * h) * d + 2 * h] += wrr;
            k[(2 * h) * d + 2 * h + 1] += wri;
            k[(2 * h + 1) * d + 2 * h] += wri;
            k[(2 * h + 1) * d + 2 * h + 1] += wii;
        }
        for p in 0..d {
            k[p * d + p] += ridge;
        }
    }

    /// Normal equations of the weighted least-squares problem in `y` for
    /// fixed `dV`: returns `(G, h)` with the data term equal to
    /// `y^T G y - 2 h^T y + const`.
    pub fn normal_equations(&self, dv: &[Complex64]) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n;
        let r = self.map.r();
        let dim = 2 * r;
        let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..self.len.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut g = vec![0.0; dim * dim];
                let mut hv = vec![0.0; dim];
                let mut idx = Vec::with_capacity(2 * n);
                let mut x = Vec::with_capacity(2 * n);
                let mut yv = Vec::with_capacity(2 * n);
                let mut wx = Vec::with_capacity(2 * n);
                let mut wy = Vec::with_capacity(2 * n);
                let end = ((c + 1) * CHUNK).min(self.len);
                for t in c * CHUNK..end {
                    let u = |h: usize| self.v[t * n + h] - dv[t * n + h];
                    for m in 0..n {
                        let inc = &self.incident[m];
                        if inc.is_empty() {
                            continue;
                        }
                        let [wrr, wri, wii] = self.wi[t * n + m];
                        let um = u(m);
                        idx.clear();
                        x.clear();
                        yv.clear();
                        for &(p, o) in inc {
                            let dz = um - u(o);
                            idx.push(p);
                            x.push(dz.re);
                            yv.push(dz.im);
                            idx.push(r + p);
                            x.push(-dz.im);
                            yv.push(dz.re);
                        }
                        wx.clear();
                        wy.clear();
                        for q in 0..x.len() {
                            wx.push(wrr * x[q] + wri * yv[q]);
                            wy.push(wri * x[q] + wii * yv[q]);
                        }
                        for a in 0..idx.len() {
                            let (xa, ya) = (x[a], yv[a]);
                            let grow = &mut g[idx[a] * dim..(idx[a] + 1) * dim];
                            for b in 0..idx.len() {
                                grow[idx[b]] += xa * wx[b] + ya * wy[b];
                            }
                        }
                        let im = self.i[t * n + m];
                        for a in 0..idx.len() {
                            hv[idx[a]] += wx[a] * im.re + wy[a] * im.im;
                        }
                    }
                }
                (g, hv)
            })
            .collect();
        let mut g = DMatrix::zeros(dim, dim);
        let mut h = DVector::zeros(dim);
        for (gc, hc) in chunks {
            for a in 0..dim {
                for b in 0..dim {
                    g[(a, b)] += gc[a * dim + b];
                }
                h[a] += hc[a];
            }
        }
        (g, h)
    }

    /// `h - G y` for the normal equations at `dV`, computed from the residual
    /// currents without forming `G`. The data gradient is `-2` times this.
    pub(crate) fn residual_gradient(&self, y_r: &[f64], dv: &[Complex64]) -> DVector<f64> {
        let n = self.n;
        let r = self.map.r();
        let y = self.expand(y_r);
        let parts: Vec<Vec<f64>> = (0..self.len.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let end = ((c + 1) * CHUNK).min(self.len);
                let mut acc = vec![0.0; 2 * r];
                let mut u = vec![Complex64::new(0.0, 0.0); n];
                for t in c * CHUNK..end {
                    for h in 0..n {
                        u[h] = self.v[t * n + h] - dv[t * n + h];
                    }
                    for m in 0..n {
                        let mut di = self.i[t * n + m];
                        for (a, b) in y[m * n..(m + 1) * n].iter().zip(&u) {
                            di -= a * b;
                        }
                        let [wrr, wri, wii] = self.wi[t * n + m];
                        let (wr, wi) = (wrr * di.re + wri * di.im, wri * di.re + wii * di.im);
                        for &(p, o) in &self.incident[m] {
                            let dz = u[m] - u[o];
                            acc[p] += dz.re * wr + dz.im * wi;
                            acc[r + p] += -dz.im * wr + dz.re * wi;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = DVector::zeros(2 * r);
        for part in parts {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
        out
    }

    /// Gauss-Newton curvature of the objective once `dV` is eliminated:
    /// `sum_t A_t^T (Sigma_i + Y Sigma_v Y^T)^{-1} A_t`, where `A_t` maps the
    /// parameters to the model currents `Y (v_t - dv_t)`. Without voltage
    /// noise this is the `G` of [`Problem::normal_equations`].
    pub(crate) fn profile_hessian(&self, y: &[Complex64], dv: &[Complex64]) -> DMatrix<f64> {
        let Some(wv) = &self.wv else {
            return self.normal_equations(dv).0;
        };
        let n = self.n;
        let r = self.map.r();
        let dim = 2 * r;
        let d = 2 * n;
        let (rows_a, rows_b) = real_rows(y, n);
        let yr = |p: usize| if p % 2 == 0 { &rows_a[(p / 2) * d..(p / 2 + 1) * d] } else { &rows_b[(p / 2) * d..(p / 2 + 1) * d] };
        let pairs = self.map.pairs();
        let parts: Vec<DMatrix<f64>> = (0..self.len.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let end = ((c + 1) * CHUNK).min(self.len);
                let mut f = DMatrix::<f64>::zeros((end - c * CHUNK) * d, dim);
                let mut cov = vec![0.0; d * d];
                let mut col = vec![0.0; d];
                for t in c * CHUNK..end {
                    let s = t - c * CHUNK;
                    cov.iter_mut().for_each(|x| *x = 0.0);
                    for h in 0..n {
                        let [a, b, cc] = invert_block(wv[t * n + h]);
                        for p in 0..d {
                            let rp = yr(p);
                            let (t0, t1) = (a * rp[2 * h] + b * rp[2 * h + 1], b * rp[2 * h] + cc * rp[2 * h + 1]);
                            for q in 0..=p {
                                let rq = yr(q);
                                cov[p * d + q] += t0 * rq[2 * h] + t1 * rq[2 * h + 1];
                            }
                        }
                    }
                    for m in 0..n {
                        let [a, b, cc] = invert_block(self.wi[t * n + m]);
                        cov[(2 * m) * d + 2 * m] += a;
                        cov[(2 * m + 1) * d + 2 * m] += b;
                        cov[(2 * m + 1) * d + 2 * m + 1] += cc;
                    }
                    if !cholesky_in_place(&mut cov, d) {
                        continue;
                    }
                    for (p, &(h, k)) in pairs.iter().enumerate() {
                        let dz = (self.v[t * n + h] - dv[t * n + h]) - (self.v[t * n + k] - dv[t * n + k]);
                        for (j, (x, yv)) in [(p, (dz.re, dz.im)), (r + p, (-dz.im, dz.re))] {
                            col.iter_mut().for_each(|x| *x = 0.0);
                            col[2 * h] = x;
                            col[2 * h + 1] = yv;
                            col[2 * k] = -x;
                            col[2 * k + 1] = -yv;
                            let start = 2 * h.min(k);
                            for i in start..d {
                                let mut acc = col[i];
                                for q in start..i {
                                    acc -= cov[i * d + q] * col[q];
                                }
                                col[i] = acc / cov[i * d + i];
                            }
                            for i in start..d {
                                f[(s * d + i, j)] = col[i];
                            }
                        }
                    }
                }
                f.transpose() * &f
            })
            .collect();
        let mut g = DMatrix::zeros(dim, dim);
        for part in parts {
            g += part;
        }
        g
    }

    /// Data term `sum_t di_t^T W_i di_t + dv_t^T W_v dv_t` where
    /// `di = i - Y (v - dv)`.
    pub fn likelihood_term(&self, y_r: &[f64], dv: &[Complex64]) -> f64 {
        let n = self.n;
        let y = self.expand(y_r);
        let parts: Vec<f64> = (0..self.len.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let end = ((c + 1) * CHUNK).min(self.len);
                let mut acc = 0.0;
                let mut u = vec![Complex64::new(0.0, 0.0); n];
                for t in c * CHUNK..end {
                    for h in 0..n {
                        u[h] = self.v[t * n + h] - dv[t * n + h];
                    }
                    for m in 0..n {
                        let mut di = self.i[t * n + m];
                        for (a, b) in y[m * n..(m + 1) * n].iter().zip(&u) {
                            di -= a * b;
                        }
                        acc += quad(self.wi[t * n + m], di);
                        if let Some(wv) = &self.wv {
                            acc += quad(wv[t * n + m], dv[t * n + m]);
                        }
                    }
                }
                acc
            })
            .collect();
        parts.iter().sum()
    }

    /// Full objective with the prior weights multiplied by `multiplier`.
    pub fn objective(&self, y_r: &[f64], dv: &[Complex64], multiplier: f64) -> Result<f64> {
        Ok(self.likelihood_term(y_r, dv) + multiplier * self.priors.evaluate(y_r)?)
    }

    /// Objective after eliminating `dV` exactly.
    pub fn profile_objective(&self, y_r: &[f64]) -> Result<f64> {
        let dv = self.dv_step(&self.expand(y_r));
        self.objective(y_r, &dv, 1.0)
    }
}

fn quad(w: WeightBlock, z: Complex64) -> f64 {
    w[0] * z.re * z.re + 2.0 * w[1] * z.re * z.im + w[2] * z.im * z.im
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{BlockCovariance, Measurements, NoiseSpec, Preprocessing};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, len: usize, seed: u64) -> (Problem, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = ReductionMap::full(n);
        let y_r: Vec<f64> = (0..map.real_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = map.expand_matrix(&y_r).unwrap();
        let v = DMatrix::from_fn(len, n, |_, _| Complex64::new(1.0 + rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)));
        let mut i = &v * &y;
        i.iter_mut().for_each(|z| *z += Complex64::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01)));
        let block = |rng: &mut ChaCha8Rng| {
            let mut cov = BlockCovariance::zeros(n, len);
            for k in 0..n * len {
                let a: f64 = rng.random_range(0.5..2.0);
                let c: f64 = rng.random_range(0.5..2.0);
                cov.var_re[k] = a;
                cov.var_im[k] = c;
                cov.cov_reim[k] = rng.random_range(-0.4..0.4) * (a * c).sqrt();
            }
            cov
        };
        let meas = Measurements {
            v: v.clone(),
            i,
            sigma_v: block(&mut rng),
            sigma_i: block(&mut rng),
            noise: NoiseSpec::zero(n),
            rated_voltage: 1.0,
            preprocessing: Preprocessing::default(),
        };
        (Problem::new(&meas, map, PriorStack::new()).unwrap(), y_r)
    }

    #[test]
    fn zero_admittance_leaves_voltages_untouched() {
        let (p, y_r) = random_problem(3, 5, 1);
        let zero = vec![0.0; y_r.len()];
        let dv = p.dv_step(&p.expand(&zero));
        assert!(dv.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn dv_step_matches_dense_kkt() {
        let (p, y_r) = random_problem(2, 3, 2);
        let y = p.expand(&y_r);
        let dv = p.dv_step(&y);
        // Dense oracle per sample: minimize over x in R^4 the sum of the two
        // weighted quadratics directly via the full normal matrix.
        let n = 2;
        for t in 0..3 {
            let yr = DMatrix::from_fn(2 * n, 2 * n, |a, b| {
                let z = y[(a / 2) * n + b / 2];
                match (a % 2, b % 2) {
                    (0, 0) | (1, 1) => z.re,
                    (0, 1) => -z.im,
                    _ => z.im,
                }
            });
            let wblock = |w: &[WeightBlock]| {
                let mut m = DMatrix::zeros(2 * n, 2 * n);
                for h in 0..n {
                    let [a, b, c] = w[t * n + h];
                    m[(2 * h, 2 * h)] = a;
                    m[(2 * h, 2 * h + 1)] = b;
                    m[(2 * h + 1, 2 * h)] = b;
                    m[(2 * h + 1, 2 * h + 1)] = c;
                }
                m
            };
            let wi = wblock(&p.wi);
            let wv = wblock(p.wv.as_ref().unwrap());
            let mut r = vec![Complex64::new(0.0, 0.0); n];
            p.sample_residual(&y, t, &mut r);
            let rv = DVector::from_fn(2 * n, |a, _| if a % 2 == 0 { r[a / 2].re } else { r[a / 2].im });
            let k = yr.transpose() * &wi * &yr + &wv;
            let x = k.lu().solve(&(-(yr.transpose() * &wi * rv))).unwrap();
            for h in 0..n {
                assert!((x[2 * h] - dv[t * n + h].re).abs() < 1e-10);
                assert!((x[2 * h + 1] - dv[t * n + h].im).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn normal_equations_reproduce_the_likelihood() {
        let (p, y_r) = random_problem(3, 7, 3);
        let dv = p.dv_step(&p.expand(&y_r));
        let (g, h) = p.normal_equations(&dv);
        let y2: Vec<f64> = y_r.iter().map(|v| v * 0.7 + 0.1).collect();
        let q = |y: &[f64]| {
            let yv = DVector::from_column_slice(y);
            (yv.transpose() * &g * &yv)[(0, 0)] - 2.0 * h.dot(&yv)
        };
        let direct = |y: &[f64]| p.likelihood_term(y, &dv);
        let lhs = direct(&y2) - direct(&y_r);
        let rhs = q(&y2) - q(&y_r);
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        assert!((&g - g.transpose()).amax() < 1e-10);
    }

    #[test]
    fn exact_data_has_zero_objective() {
        let n = 3;
        let map = ReductionMap::full(n);
        let y_r: Vec<f64> = (0..map.real_dim()).map(|j| 0.3 + 0.1 * j as f64).collect();
        let y = map.expand_matrix(&y_r).unwrap();
        let v = DMatrix::from_fn(4, n, |t, h| Complex64::new(1.0 + 0.01 * (t * n + h) as f64, 0.02 * h as f64));
        let i = &v * &y;
        let mut meas = Measurements::exact(v, i, 1.0);
        meas.sigma_v = BlockCovariance::isotropic(n, 4, 1e-4);
        meas.sigma_i = BlockCovariance::isotropic(n, 4, 1e-4);
        let p = Problem::new(&meas, map, PriorStack::new()).unwrap();
        let dv = p.dv_step(&p.expand(&y_r));
        assert!(dv.iter().all(|z| z.norm() < 1e-14));
        assert!(p.objective(&y_r, &dv, 1.0).unwrap() < 1e-20);
    }
}
