//! Synthetic feeders, load profiles, power flow and the end-to-end
//! measurement scenario.

mod feeder;
mod loads;
mod powerflow;

pub use feeder::{add_loops, generate_feeder};
pub use loads::{generate_loads, LoadParams, LoadProfile};
pub use powerflow::{solve_power_flow, PowerFlow};

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_admittance, kron_reduce, AdmittanceMatrix, GridFile, GridTopology};
use crate::signal::{
    CorruptionStats, MeasurementMeta, Measurements, NoiseDrawer, NoiseSpec, PhasorSeries, PolarAccumulator,
    Preprocessing,
};
use loads::OuPath;

/// Accepted voltage band for simulated states (p.u. of rated).
pub const VOLTAGE_BAND: (f64, f64) = (0.9, 1.1);

/// Samples solved per parallel batch.
const BATCH: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Topology file; when absent a random radial feeder is generated.
    pub file: Option<PathBuf>,
    pub nodes: usize,
    pub branching: f64,
    /// Common `R/X` of generated lines.
    pub rx_ratio: f64,
    pub admittance_scale: f64,
    /// Extra lines closing loops in a generated feeder.
    pub loops: usize,
    pub seed: u64,
    pub slack: usize,
    pub rated_voltage: f64,
    /// Relative standard deviation of the slack voltage magnitude around
    /// its rated value. A little movement keeps the voltage columns
    /// linearly independent; zero pins the slack at rated voltage.
    pub slack_variation: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            file: None,
            nodes: 9,
            branching: 0.3,
            rx_ratio: 2.0,
            admittance_scale: 50.0,
            loops: 0,
            seed: 0,
            slack: 0,
            rated_voltage: 1.0,
            slack_variation: 0.005,
        }
    }
}

/// Device accuracies: magnitude deviations are `magnitude` times the device
/// rating; current ratings are `rating_factor` times the nominal power of
/// the node (the whole feeder for the slack bus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub magnitude: f64,
    pub phase: f64,
    pub rating_factor: f64,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { magnitude: 1e-4, phase: 1e-4, rating_factor: 4.0, seed: 0 }
    }
}

/// Current version of the scenario file format.
pub const SCENARIO_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// File format version; must equal [`SCENARIO_SCHEMA`].
    pub schema: u32,
    pub grid: GridParams,
    pub loads: LoadParams,
    pub noise: NoiseParams,
    pub preprocess: Preprocessing,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema: SCENARIO_SCHEMA,
            grid: GridParams::default(),
            loads: LoadParams::default(),
            noise: NoiseParams::default(),
            preprocess: Preprocessing::default(),
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))
    }

    /// Reads a scenario file; a relative `grid.file` is resolved against the
    /// scenario's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::parse(&std::fs::read_to_string(path)?)?;
        if let Some(f) = &s.grid.file {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    s.grid.file = Some(dir.join(f));
                }
            }
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn topology(&self) -> Result<GridTopology> {
        let g = &self.grid;
        let topo = match &g.file {
            Some(f) => GridFile::load(f)?,
            None => {
                let mut t = generate_feeder(g.nodes, g.branching, g.rx_ratio, g.admittance_scale, g.seed)?;
                if g.loops > 0 {
                    add_loops(&mut t, g.loops, g.rx_ratio, g.admittance_scale, g.seed)?;
                }
                t.rated_voltage = g.rated_voltage;
                t
            }
        };
        Ok(topo)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(Error::InvalidArgument(format!(
                "scenario schema {} is not supported (expected {SCENARIO_SCHEMA})",
                self.schema
            )));
        }
        self.loads.validate(n)?;
        if self.grid.slack >= n {
            return Err(Error::InvalidArgument(format!("slack bus {} outside [0, {n})", self.grid.slack)));
        }
        if self.loads.unloaded.contains(&self.grid.slack) {
            return Err(Error::InvalidArgument("the slack bus cannot be listed as unloaded".into()));
        }
        if self.preprocess.window == 0 {
            return Err(Error::InvalidArgument("preprocess.window must be at least 1".into()));
        }
        if self.loads.samples < self.preprocess.window {
            return Err(Error::InvalidArgument("fewer raw samples than one filter window".into()));
        }
        let n = &self.noise;
        if !(n.magnitude >= 0.0) || !(n.phase >= 0.0) || !(n.rating_factor > 0.0) {
            return Err(Error::InvalidArgument("noise accuracies must be >= 0 and rating_factor > 0".into()));
        }
        if !(self.grid.slack_variation >= 0.0) || !(self.grid.rated_voltage > 0.0) {
            return Err(Error::InvalidArgument("slack variation must be >= 0 and rated voltage > 0".into()));
        }
        Ok(())
    }
}

/// Everything a scenario run produces. Series cover the kept (loaded and
/// slack) buses only and are already filtered.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub topology: GridTopology,
    pub full_truth: AdmittanceMatrix,
    /// Ground truth over the kept buses (Kron-reduced when nodes were
    /// eliminated).
    pub truth: AdmittanceMatrix,
    /// Original labels of the kept buses, in column order.
    pub kept: Vec<usize>,
    /// Filtered noise-free states.
    pub exact: PhasorSeries,
    /// Filtered noisy measurements.
    pub noisy: PhasorSeries,
    /// Noise of the filtered samples.
    pub noise: NoiseSpec,
    /// Noise of the raw samples.
    pub raw_noise: NoiseSpec,
    pub nominal_power: Vec<f64>,
    pub current_ratings: Vec<f64>,
    pub rated_voltage: f64,
    pub preprocessing: Preprocessing,
    pub corruption: CorruptionStats,
    /// Largest `|i - Y v|` over all raw states (full grid).
    pub flow_residual: f64,
    /// Largest `|i_keep - Y_red v_keep|` over all raw states.
    pub kron_residual: f64,
}

impl ScenarioOutput {
    pub fn n(&self) -> usize {
        self.kept.len()
    }

    /// Estimation inputs from the noisy series.
    pub fn measurements(&self) -> Result<Measurements> {
        Measurements::from_series(&self.noisy, &self.noise, self.rated_voltage, self.preprocessing)
    }

    /// Estimation inputs from the exact series with zero covariance.
    pub fn exact_measurements(&self) -> Measurements {
        let mut m = Measurements::exact(self.exact.voltage_cartesian(), self.exact.current_cartesian(), self.rated_voltage);
        m.preprocessing = Preprocessing { debias: false, ..self.preprocessing };
        m
    }

    pub fn meta(&self) -> MeasurementMeta {
        MeasurementMeta {
            n: self.n(),
            samples: self.noisy.len(),
            is_noisy: self.noisy.is_noisy,
            rated_voltage: self.rated_voltage,
            noise: self.noise.clone(),
            preprocessing: self.preprocessing,
            buses: self.kept.clone(),
        }
    }

    /// Kept-bus positions (column indices) sorted by increasing nominal
    /// load; the slack bus is excluded.
    pub fn buses_by_load(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n()).filter(|&c| self.nominal_power[self.kept[c]] > 0.0).collect();
        idx.sort_by(|&a, &b| self.nominal_power[self.kept[a]].total_cmp(&self.nominal_power[self.kept[b]]));
        idx
    }
}

fn polar(z: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (z.iter().map(|c| c.norm()).collect(), z.iter().map(|c| c.arg()).collect())
}

fn inf_residual(y: &AdmittanceMatrix, v: &[Complex64], i: &[Complex64]) -> f64 {
    let m = y.entries();
    (0..v.len())
        .map(|a| {
            let yv: Complex64 = (0..v.len()).map(|b| m[(a, b)] * v[b]).sum();
            (i[a] - yv).norm()
        })
        .fold(0.0, f64::max)
}

/// Runs power flow for every raw sample, Kron-reduces the ground truth,
/// corrupts the kept buses and filters.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioOutput> {
    let topology = scenario.topology()?;
    let n = topology.n;
    scenario.validate(n)?;
    let rated = topology.rated_voltage;
    let full_truth = build_admittance(&topology)?;
    let slack = scenario.grid.slack;
    let kept: Vec<usize> = (0..n).filter(|h| !scenario.loads.unloaded.contains(h)).collect();
    let truth = kron_reduce(&full_truth, &kept)?;

    let len = scenario.loads.samples;
    let mut profile = generate_loads(n, len, &scenario.loads)?;
    profile.nominal[slack] = 0.0;
    profile.injections.column_mut(slack).fill(Complex64::default());
    let total: f64 = profile.nominal.iter().sum();
    let factor = scenario.noise.rating_factor;
    let current_ratings: Vec<f64> = kept
        .iter()
        .map(|&h| factor * if h == slack { total } else { profile.nominal[h] } / rated)
        .collect();
    let raw_noise = NoiseSpec::from_accuracy(
        scenario.noise.magnitude,
        scenario.noise.phase,
        rated,
        &current_ratings,
        scenario.noise.seed,
    );

    let mut slack_rng = ChaCha8Rng::seed_from_u64(scenario.loads.seed ^ 0x51ac_b005);
    let slack_path = OuPath::new(
        &mut slack_rng,
        len as f64 * profile.resolution_seconds,
        scenario.loads.knot_seconds,
        scenario.loads.reversion_seconds,
        scenario.grid.slack_variation,
    );
    let flow = PowerFlow::new(&full_truth, slack)?;
    let window = scenario.preprocess.window;
    let k = kept.len();
    let mut acc_exact = PolarAccumulator::new(k, window)?;
    let mut acc_noisy = PolarAccumulator::new(k, window)?;
    let mut drawer = NoiseDrawer::new(&raw_noise);
    let noisy = !raw_noise.is_zero();
    let mut flow_residual: f64 = 0.0;
    let mut kron_residual: f64 = 0.0;

    for start in (0..len).step_by(BATCH) {
        let end = (start + BATCH).min(len);
        let states: Vec<Result<(Vec<Complex64>, Vec<Complex64>)>> = (start..end)
            .into_par_iter()
            .map(|t| {
                let s: Vec<Complex64> = profile.injections.row(t).iter().copied().collect();
                let vs = Complex64::new(rated * (1.0 + slack_path.at(t as f64 * profile.resolution_seconds)), 0.0);
                flow.solve(&s, vs, None).map_err(|e| match e {
                    Error::PowerFlow { mismatch, .. } => Error::PowerFlow { step: t, mismatch },
                    other => other,
                })
            })
            .collect();
        for (offset, state) in states.into_iter().enumerate() {
            let t = start + offset;
            let (v, i) = state?;
            if let Some(bad) = v.iter().map(|z| z.norm() / rated).find(|m| *m < VOLTAGE_BAND.0 || *m > VOLTAGE_BAND.1) {
                return Err(Error::InvalidArgument(format!(
                    "voltage magnitude {bad:.4} p.u. outside [{}, {}] at step {t}; lower the load scale",
                    VOLTAGE_BAND.0, VOLTAGE_BAND.1
                )));
            }
            flow_residual = flow_residual.max(inf_residual(&full_truth, &v, &i));
            let vk: Vec<Complex64> = kept.iter().map(|&h| v[h]).collect();
            let ik: Vec<Complex64> = kept.iter().map(|&h| i[h]).collect();
            kron_residual = kron_residual.max(inf_residual(&truth, &vk, &ik));
            let time = t as f64 * profile.resolution_seconds;
            let (mut vm, mut va) = polar(&vk);
            let (mut im, mut ia) = polar(&ik);
            acc_exact.push(time, &vm, &va, &im, &ia);
            if noisy {
                drawer.corrupt_row(t as u64, &mut vm, &mut va, &mut im, &mut ia);
            }
            acc_noisy.push(time, &vm, &va, &im, &ia);
        }
    }
    drawer.stats.warn_if_frequent();
    let corruption = drawer.stats.clone();
    Ok(ScenarioOutput {
        topology,
        full_truth,
        truth,
        exact: acc_exact.finish(false),
        noisy: acc_noisy.finish(noisy),
        noise: raw_noise.averaged(window),
        raw_noise,
        kept,
        nominal_power: profile.nominal,
        current_ratings,
        rated_voltage: rated,
        preprocessing: scenario.preprocess,
        corruption,
        flow_residual,
        kron_residual,
    })
}
