use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{NoiseSpec, PhasorSeries};
use crate::error::{Error, Result};

const MAX_RESAMPLE: usize = 64;

/// Counter-based stream: one independent ChaCha stream per sample index, so
/// any subset of samples can be regenerated in any order.
pub(crate) fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorruptionStats {
    pub draws: u64,
    /// Magnitude draws rejected because the noisy magnitude was not positive.
    pub resampled: u64,
}

impl CorruptionStats {
    pub fn resample_fraction(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.resampled as f64 / self.draws as f64
        }
    }

    pub(crate) fn warn_if_frequent(&self) {
        if self.resample_fraction() > 1e-4 {
            log::warn!(
                "{} of {} magnitude draws were resampled to stay positive",
                self.resampled,
                self.draws
            );
        }
    }
}

/// Adds polar noise to one sample (row) at a time.
pub(crate) struct NoiseDrawer<'a> {
    spec: &'a NoiseSpec,
    pub(crate) stats: CorruptionStats,
}

impl<'a> NoiseDrawer<'a> {
    pub(crate) fn new(spec: &'a NoiseSpec) -> Self {
        Self { spec, stats: CorruptionStats::default() }
    }

    /// Draw order per bus: voltage magnitude, voltage phase, current
    /// magnitude, current phase.
    pub(crate) fn corrupt_row(
        &mut self,
        index: u64,
        v_mag: &mut [f64],
        v_ang: &mut [f64],
        i_mag: &mut [f64],
        i_ang: &mut [f64],
    ) {
        let mut rng = sample_rng(self.spec.seed, index);
        for h in 0..v_mag.len() {
            v_mag[h] = self.magnitude(&mut rng, v_mag[h], self.spec.sigma_eps_v[h]);
            v_ang[h] += self.spec.sigma_delta_v * rng.sample::<f64, _>(StandardNormal);
            i_mag[h] = self.magnitude(&mut rng, i_mag[h], self.spec.sigma_eps_i[h]);
            i_ang[h] += self.spec.sigma_delta_i * rng.sample::<f64, _>(StandardNormal);
        }
    }

    fn magnitude(&mut self, rng: &mut ChaCha8Rng, exact: f64, sigma: f64) -> f64 {
        self.stats.draws += 1;
        let mut value = exact + sigma * rng.sample::<f64, _>(StandardNormal);
        if sigma > 0.0 {
            let mut tries = 0;
            while value <= 0.0 && tries < MAX_RESAMPLE {
                self.stats.resampled += 1;
                value = exact + sigma * rng.sample::<f64, _>(StandardNormal);
                tries += 1;
            }
            if value <= 0.0 {
                value = value.abs();
            }
        }
        value
    }
}

/// Adds i.i.d. Gaussian polar noise to an exact series. Deterministic in
/// `spec.seed`; sample `t` always uses stream `t`.
pub fn corrupt(series: &PhasorSeries, spec: &NoiseSpec) -> Result<PhasorSeries> {
    corrupt_with_stats(series, spec).map(|(s, _)| s)
}

pub fn corrupt_with_stats(series: &PhasorSeries, spec: &NoiseSpec) -> Result<(PhasorSeries, CorruptionStats)> {
    if series.is_noisy {
        return Err(Error::InvalidArgument("series is already noisy".into()));
    }
    spec.validate()?;
    if spec.n() != series.n() {
        return Err(Error::Dimension(format!("noise covers {} buses, series has {}", spec.n(), series.n())));
    }
    let n = series.n();
    let mut out = series.clone();
    out.is_noisy = true;
    let mut drawer = NoiseDrawer::new(spec);
    let (mut vm, mut va, mut im, mut ia) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for t in 0..series.len() {
        for h in 0..n {
            vm[h] = series.v_mag[(t, h)];
            va[h] = series.v_ang[(t, h)];
            im[h] = series.i_mag[(t, h)];
            ia[h] = series.i_ang[(t, h)];
        }
        drawer.corrupt_row(t as u64, &mut vm, &mut va, &mut im, &mut ia);
        for h in 0..n {
            out.v_mag[(t, h)] = vm[h];
            out.v_ang[(t, h)] = va[h];
            out.i_mag[(t, h)] = im[h];
            out.i_ang[(t, h)] = ia[h];
        }
    }
    drawer.stats.warn_if_frequent();
    Ok((out, drawer.stats))
}
