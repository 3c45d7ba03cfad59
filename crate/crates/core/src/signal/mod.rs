//! Phasor measurements, polar noise and preprocessing.

mod corrupt;
mod covariance;
mod filter;
mod io;
mod moments;

pub use corrupt::{corrupt, corrupt_with_stats, CorruptionStats};
pub(crate) use corrupt::NoiseDrawer;
pub use covariance::{assemble_block_covariance, BlockCovariance, WeightBlock};
pub use filter::{center_voltages, debias, moving_average_downsample, PolarAccumulator};
pub use io::{read_measurements, sidecar_path, write_measurements, MeasurementMeta};
pub use moments::{bias_significance, cartesian_moments_exact, cartesian_moments_measured, SampleMoments};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviations of the magnitude and phase noise of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolarNoise {
    /// Absolute magnitude deviation (p.u.).
    pub sigma_mag: f64,
    /// Phase deviation (rad).
    pub sigma_phase: f64,
}

impl PolarNoise {
    pub fn new(sigma_mag: f64, sigma_phase: f64) -> Self {
        Self { sigma_mag, sigma_phase }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_mag == 0.0 && self.sigma_phase == 0.0
    }
}

/// Measurement noise of a set of synchrophasor devices.
///
/// Magnitude deviations are absolute and may differ per bus (device ratings
/// differ); phase deviations are common to all devices of a kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_eps_v: Vec<f64>,
    pub sigma_delta_v: f64,
    pub sigma_eps_i: Vec<f64>,
    pub sigma_delta_i: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn uniform(n: usize, eps_v: f64, delta_v: f64, eps_i: f64, delta_i: f64, seed: u64) -> Self {
        Self {
            sigma_eps_v: vec![eps_v; n],
            sigma_delta_v: delta_v,
            sigma_eps_i: vec![eps_i; n],
            sigma_delta_i: delta_i,
            seed,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::uniform(n, 0.0, 0.0, 0.0, 0.0, 0)
    }

    /// Noise derived from device accuracy: the magnitude deviation is
    /// `magnitude_fraction` times the device rating (rated voltage for
    /// voltage channels, `current_ratings[h]` for current channels).
    pub fn from_accuracy(
        magnitude_fraction: f64,
        phase: f64,
        rated_voltage: f64,
        current_ratings: &[f64],
        seed: u64,
    ) -> Self {
        Self {
            sigma_eps_v: vec![magnitude_fraction * rated_voltage; current_ratings.len()],
            sigma_delta_v: phase,
            sigma_eps_i: current_ratings.iter().map(|r| magnitude_fraction * r).collect(),
            sigma_delta_i: phase,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.sigma_eps_v.len()
    }

    pub fn voltage(&self, bus: usize) -> PolarNoise {
        PolarNoise::new(self.sigma_eps_v[bus], self.sigma_delta_v)
    }

    pub fn current(&self, bus: usize) -> PolarNoise {
        PolarNoise::new(self.sigma_eps_i[bus], self.sigma_delta_i)
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_delta_v == 0.0
            && self.sigma_delta_i == 0.0
            && self.sigma_eps_v.iter().all(|s| *s == 0.0)
            && self.sigma_eps_i.iter().all(|s| *s == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_eps_v.len() != self.sigma_eps_i.len() {
            return Err(Error::Dimension("voltage and current noise cover different bus counts".into()));
        }
        let all = self
            .sigma_eps_v
            .iter()
            .chain(&self.sigma_eps_i)
            .chain([&self.sigma_delta_v, &self.sigma_delta_i]);
        for s in all {
            if !(*s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidArgument(format!("noise deviation {s} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Noise after averaging `window` independent samples: variances are
    /// divided by `window`.
    pub fn averaged(&self, window: usize) -> Self {
        let f = 1.0 / (window as f64).sqrt();
        Self {
            sigma_eps_v: self.sigma_eps_v.iter().map(|s| s * f).collect(),
            sigma_delta_v: self.sigma_delta_v * f,
            sigma_eps_i: self.sigma_eps_i.iter().map(|s| s * f).collect(),
            sigma_delta_i: self.sigma_delta_i * f,
            seed: self.seed,
        }
    }

    pub fn select(&self, buses: &[usize]) -> Self {
        Self {
            sigma_eps_v: buses.iter().map(|&b| self.sigma_eps_v[b]).collect(),
            sigma_delta_v: self.sigma_delta_v,
            sigma_eps_i: buses.iter().map(|&b| self.sigma_eps_i[b]).collect(),
            sigma_delta_i: self.sigma_delta_i,
            seed: self.seed,
        }
    }
}

/// Time series of voltage and current phasors, one row per sample and one
/// column per bus.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasorSeries {
    pub v_mag: DMatrix<f64>,
    pub v_ang: DMatrix<f64>,
    pub i_mag: DMatrix<f64>,
    pub i_ang: DMatrix<f64>,
    pub timestamps: Vec<f64>,
    pub is_noisy: bool,
}

impl PhasorSeries {
    pub fn from_cartesian(v: &DMatrix<Complex64>, i: &DMatrix<Complex64>, timestamps: Vec<f64>) -> Result<Self> {
        if v.shape() != i.shape() || v.nrows() != timestamps.len() {
            return Err(Error::Dimension(format!(
                "voltage {:?}, current {:?} and {} timestamps disagree",
                v.shape(),
                i.shape(),
                timestamps.len()
            )));
        }
        Ok(Self {
            v_mag: v.map(|z| z.norm()),
            v_ang: v.map(|z| z.arg()),
            i_mag: i.map(|z| z.norm()),
            i_ang: i.map(|z| z.arg()),
            timestamps,
            is_noisy: false,
        })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            v_mag: DMatrix::zeros(0, n),
            v_ang: DMatrix::zeros(0, n),
            i_mag: DMatrix::zeros(0, n),
            i_ang: DMatrix::zeros(0, n),
            timestamps: Vec::new(),
            is_noisy: false,
        }
    }

    pub fn n(&self) -> usize {
        self.v_mag.ncols()
    }

    pub fn len(&self) -> usize {
        self.v_mag.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.v_mag.shape();
        if self.v_ang.shape() != shape || self.i_mag.shape() != shape || self.i_ang.shape() != shape {
            return Err(Error::Dimension("phasor arrays have different shapes".into()));
        }
        if self.timestamps.len() != shape.0 {
            return Err(Error::Dimension("timestamp count differs from sample count".into()));
        }
        if self.v_mag.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidArgument("voltage magnitudes must be positive".into()));
        }
        if self.i_mag.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidArgument("current magnitudes must be non-negative".into()));
        }
        Ok(())
    }

    pub fn voltage_cartesian(&self) -> DMatrix<Complex64> {
        self.v_mag.zip_map(&self.v_ang, Complex64::from_polar)
    }

    pub fn current_cartesian(&self) -> DMatrix<Complex64> {
        self.i_mag.zip_map(&self.i_ang, Complex64::from_polar)
    }

    /// Keeps only the listed bus columns, in that order.
    pub fn select_buses(&self, buses: &[usize]) -> Self {
        let pick = |m: &DMatrix<f64>| m.select_columns(buses);
        Self {
            v_mag: pick(&self.v_mag),
            v_ang: pick(&self.v_ang),
            i_mag: pick(&self.i_mag),
            i_ang: pick(&self.i_ang),
            timestamps: self.timestamps.clone(),
            is_noisy: self.is_noisy,
        }
    }
}

/// Row-wise accumulation of a series.
#[derive(Debug, Clone)]
pub(crate) struct SeriesBuilder {
    n: usize,
    v_mag: Vec<f64>,
    v_ang: Vec<f64>,
    i_mag: Vec<f64>,
    i_ang: Vec<f64>,
    timestamps: Vec<f64>,
}

impl SeriesBuilder {
    pub(crate) fn new(n: usize) -> Self {
        Self { n, v_mag: Vec::new(), v_ang: Vec::new(), i_mag: Vec::new(), i_ang: Vec::new(), timestamps: Vec::new() }
    }

    pub(crate) fn push(&mut self, t: f64, v_mag: &[f64], v_ang: &[f64], i_mag: &[f64], i_ang: &[f64]) {
        self.v_mag.extend_from_slice(v_mag);
        self.v_ang.extend_from_slice(v_ang);
        self.i_mag.extend_from_slice(i_mag);
        self.i_ang.extend_from_slice(i_ang);
        self.timestamps.push(t);
    }

    pub(crate) fn finish(self, is_noisy: bool) -> PhasorSeries {
        let rows = self.timestamps.len();
        let m = |d: &[f64]| DMatrix::from_row_slice(rows, self.n, d);
        PhasorSeries {
            v_mag: m(&self.v_mag),
            v_ang: m(&self.v_ang),
            i_mag: m(&self.i_mag),
            i_ang: m(&self.i_ang),
            timestamps: self.timestamps,
            is_noisy,
        }
    }
}

/// Preprocessing applied to a measurement set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocessing {
    /// Moving-average window (1 means no filtering).
    pub window: usize,
    pub debias: bool,
    pub center: bool,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self { window: 1, debias: true, center: true }
    }
}

/// Cartesian measurements ready for estimation, together with the block
/// covariances of their noise.
#[derive(Debug, Clone)]
pub struct Measurements {
    /// Voltages, `N x n`, debiased when requested but never centered.
    pub v: DMatrix<Complex64>,
    /// Currents, `N x n`.
    pub i: DMatrix<Complex64>,
    pub sigma_v: BlockCovariance,
    pub sigma_i: BlockCovariance,
    /// Noise of the samples in `v` and `i` (after any filtering).
    pub noise: NoiseSpec,
    pub rated_voltage: f64,
    pub preprocessing: Preprocessing,
}

impl Measurements {
    /// Builds estimation inputs from a (possibly filtered) series whose noise
    /// is described by `noise`.
    pub fn from_series(
        series: &PhasorSeries,
        noise: &NoiseSpec,
        rated_voltage: f64,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        series.validate()?;
        noise.validate()?;
        if noise.n() != series.n() {
            return Err(Error::Dimension(format!(
                "noise covers {} buses, series has {}",
                noise.n(),
                series.n()
            )));
        }
        let (v, i) = if preprocessing.debias && series.is_noisy {
            debias(series, noise)?
        } else {
            (series.voltage_cartesian(), series.current_cartesian())
        };
        let (sigma_v, sigma_i) = assemble_block_covariance(series, noise)?;
        Ok(Self { v, i, sigma_v, sigma_i, noise: noise.clone(), rated_voltage, preprocessing })
    }

    /// Noise-free measurements.
    pub fn exact(v: DMatrix<Complex64>, i: DMatrix<Complex64>, rated_voltage: f64) -> Self {
        let (len, n) = v.shape();
        Self {
            sigma_v: BlockCovariance::zeros(n, len),
            sigma_i: BlockCovariance::zeros(n, len),
            v,
            i,
            noise: NoiseSpec::zero(n),
            rated_voltage,
            preprocessing: Preprocessing { window: 1, debias: false, center: true },
        }
    }

    pub fn n(&self) -> usize {
        self.v.ncols()
    }

    pub fn len(&self) -> usize {
        self.v.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Voltages used as regressors: centered on the rated voltage when the
    /// preprocessing asks for it.
    pub fn regressor_voltages(&self) -> DMatrix<Complex64> {
        if self.preprocessing.center {
            center_voltages(&self.v, self.rated_voltage)
        } else {
            self.v.clone()
        }
    }
}
