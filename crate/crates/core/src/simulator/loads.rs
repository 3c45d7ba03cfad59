use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DAY: f64 = 86_400.0;

/// Parameters of the synthetic load generator.
///
/// Each loaded node draws power `P_h(t) = P_h (1 + a sin(2 pi t / day +
/// phase_h) + x_h(t))`, where `x_h` is a mean-reverting (Ornstein-Uhlenbeck)
/// process sampled every `knot_seconds` and linearly interpolated to the
/// measurement rate. Reactive power follows from a fixed power factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadParams {
    /// Raw (pre-filter) samples to generate.
    pub samples: usize,
    pub rate_hz: f64,
    /// Mean active power per loaded node (p.u.).
    pub nominal_power: f64,
    /// Node nominal powers are drawn in `nominal_power * [1 - spread, 1 + spread]`.
    pub spread: f64,
    /// Stationary standard deviation of the relative fluctuation.
    pub volatility: f64,
    pub daily_amplitude: f64,
    pub power_factor: f64,
    pub knot_seconds: f64,
    pub reversion_seconds: f64,
    pub start_seconds: f64,
    /// Nodes without load (Kron-reduced away by the scenario).
    pub unloaded: Vec<usize>,
    pub seed: u64,
}

impl Default for LoadParams {
    fn default() -> Self {
        Self {
            samples: 5000,
            rate_hz: 100.0,
            nominal_power: 0.02,
            spread: 0.5,
            volatility: 0.3,
            daily_amplitude: 0.3,
            power_factor: 0.95,
            knot_seconds: 1.0,
            reversion_seconds: 10.0,
            start_seconds: 8.0 * 3600.0,
            unloaded: Vec::new(),
            seed: 0,
        }
    }
}

impl LoadParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = [
            ("rate_hz", self.rate_hz),
            ("knot_seconds", self.knot_seconds),
            ("reversion_seconds", self.reversion_seconds),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("loads.{name} = {v} must be positive")));
            }
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(Error::InvalidArgument(format!("power factor {} outside (0, 1]", self.power_factor)));
        }
        if !(0.0..1.0).contains(&self.spread) || self.volatility < 0.0 || self.nominal_power < 0.0 {
            return Err(Error::InvalidArgument("load spread must lie in [0, 1); volatility and power >= 0".into()));
        }
        if let Some(&h) = self.unloaded.iter().find(|&&h| h >= n) {
            return Err(Error::InvalidArgument(format!("unloaded node {h} outside [0, {n})")));
        }
        Ok(())
    }
}

/// Complex power injections, one row per sample. Consumption is negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub injections: DMatrix<Complex64>,
    pub resolution_seconds: f64,
    /// Mean active consumption of each node.
    pub nominal: Vec<f64>,
    pub params: LoadParams,
}

impl LoadProfile {
    pub fn len(&self) -> usize {
        self.injections.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.injections.ncols()
    }

    pub fn time(&self, t: usize) -> f64 {
        self.params.start_seconds + t as f64 * self.resolution_seconds
    }
}

/// Mean-reverting process sampled on knots, then linearly interpolated.
pub(crate) struct OuPath {
    knots: Vec<f64>,
    step: f64,
}

impl OuPath {
    pub(crate) fn new(rng: &mut ChaCha8Rng, duration: f64, step: f64, reversion: f64, sigma: f64) -> Self {
        let count = (duration / step).ceil() as usize + 2;
        let decay = (-step / reversion).exp();
        let innov = sigma * (1.0 - decay * decay).sqrt();
        let mut x = sigma * rng.sample::<f64, _>(StandardNormal);
        let mut knots = Vec::with_capacity(count);
        for _ in 0..count {
            knots.push(x);
            x = decay * x + innov * rng.sample::<f64, _>(StandardNormal);
        }
        Self { knots, step }
    }

    pub(crate) fn at(&self, t: f64) -> f64 {
        let pos = t / self.step;
        let k = (pos.floor() as usize).min(self.knots.len() - 2);
        let frac = pos - k as f64;
        self.knots[k] * (1.0 - frac) + self.knots[k + 1] * frac
    }
}

/// Generates `len` samples of injections for `n` nodes.
pub fn generate_loads(n: usize, len: usize, params: &LoadParams) -> Result<LoadProfile> {
    params.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let dt = 1.0 / params.rate_hz;
    let duration = len as f64 * dt;
    let q_ratio = (1.0 - params.power_factor.powi(2)).sqrt() / params.power_factor;
    let mut nominal = vec![0.0; n];
    let mut paths = Vec::with_capacity(n);
    let mut phases = vec![0.0; n];
    for h in 0..n {
        nominal[h] = params.nominal_power * rng.random_range(1.0 - params.spread..=1.0 + params.spread);
        phases[h] = rng.random_range(-0.5..0.5);
        paths.push(OuPath::new(&mut rng, duration, params.knot_seconds, params.reversion_seconds, params.volatility));
    }
    for &h in &params.unloaded {
        nominal[h] = 0.0;
    }
    let injections = DMatrix::from_fn(len, n, |t, h| {
        if nominal[h] == 0.0 {
            return Complex64::default();
        }
        let rel = t as f64 * dt;
        let clock = params.start_seconds + rel;
        let daily = params.daily_amplitude * (2.0 * std::f64::consts::PI * clock / DAY + phases[h]).sin();
        let p = nominal[h] * (1.0 + daily + paths[h].at(rel)).max(0.05);
        -Complex64::new(p, p * q_ratio)
    });
    Ok(LoadProfile { injections, resolution_seconds: dt, nominal, params: params.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_volatility_is_deterministic_daily_shape() {
        let p = LoadParams { volatility: 0.0, spread: 0.0, ..LoadParams::default() };
        let prof = generate_loads(3, 50, &p).unwrap();
        // Only the per-node phase is random; the shape is a pure sinusoid.
        for z in prof.injections.iter() {
            let x = (-z.re / p.nominal_power - 1.0) / p.daily_amplitude;
            assert!(x.abs() <= 1.0 + 1e-12);
        }
        let again = generate_loads(3, 50, &p).unwrap();
        assert_eq!(prof.injections, again.injections);
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let p = LoadParams::default();
        let a = generate_loads(4, 100, &p).unwrap();
        let b = generate_loads(4, 100, &p).unwrap();
        let c = generate_loads(4, 100, &LoadParams { seed: 1, ..p }).unwrap();
        assert_eq!(a.injections, b.injections);
        assert_ne!(a.injections, c.injections);
    }

    #[test]
    fn unloaded_nodes_are_zero() {
        let p = LoadParams { unloaded: vec![1], ..LoadParams::default() };
        let prof = generate_loads(3, 100, &p).unwrap();
        assert!(prof.injections.column(1).iter().all(|z| *z == Complex64::default()));
        assert!(prof.injections.column(0).iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn power_factor_is_respected() {
        let prof = generate_loads(2, 10, &LoadParams::default()).unwrap();
        for z in prof.injections.iter() {
            let pf = z.re.abs() / z.norm();
            assert!((pf - 0.95).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_time_far_exceeds_sample_period() {
        // Lag at which the autocorrelation of the fluctuation drops below
        // 1/e, compared with the 10 ms sample period.
        let p = LoadParams { daily_amplitude: 0.0, spread: 0.0, ..LoadParams::default() };
        let len = 60_000;
        let prof = generate_loads(1, len, &p).unwrap();
        let x: Vec<f64> = prof.injections.column(0).iter().map(|z| -z.re).collect();
        let mean = x.iter().sum::<f64>() / len as f64;
        let c = |lag: usize| (0..len - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum::<f64>() / (len - lag) as f64;
        let c0 = c(0);
        let mut lag = 1;
        while lag < len / 2 && c(lag) / c0 > (-1.0f64).exp() {
            lag *= 2;
        }
        assert!(lag > 100, "decorrelation lag {lag} samples");
    }
}
