use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{cartesian_moments_measured, NoiseSpec, PhasorSeries, SeriesBuilder};
use crate::error::{Error, Result};

fn wrap(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Streaming non-overlapping window average in polar coordinates.
///
/// Magnitudes are averaged directly; phases are unwrapped relative to the
/// first sample of the window before averaging. Incomplete trailing windows
/// are dropped.
#[derive(Debug, Clone)]
pub struct PolarAccumulator {
    window: usize,
    count: usize,
    t_sum: f64,
    v_mag: Vec<f64>,
    v_ang: Vec<f64>,
    i_mag: Vec<f64>,
    i_ang: Vec<f64>,
    v_ref: Vec<f64>,
    i_ref: Vec<f64>,
    out: SeriesBuilder,
}

impl PolarAccumulator {
    pub fn new(n: usize, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidArgument("filter window must be at least 1".into()));
        }
        Ok(Self {
            window,
            count: 0,
            t_sum: 0.0,
            v_mag: vec![0.0; n],
            v_ang: vec![0.0; n],
            i_mag: vec![0.0; n],
            i_ang: vec![0.0; n],
            v_ref: vec![0.0; n],
            i_ref: vec![0.0; n],
            out: SeriesBuilder::new(n),
        })
    }

    /// Adds one raw sample; returns true when it completed a window.
    pub fn push(&mut self, t: f64, v_mag: &[f64], v_ang: &[f64], i_mag: &[f64], i_ang: &[f64]) -> bool {
        if self.count == 0 {
            self.v_ref.copy_from_slice(v_ang);
            self.i_ref.copy_from_slice(i_ang);
            self.t_sum = 0.0;
            self.v_mag.fill(0.0);
            self.v_ang.fill(0.0);
            self.i_mag.fill(0.0);
            self.i_ang.fill(0.0);
        }
        for h in 0..self.v_mag.len() {
            self.v_mag[h] += v_mag[h];
            self.v_ang[h] += wrap(v_ang[h] - self.v_ref[h]);
            self.i_mag[h] += i_mag[h];
            self.i_ang[h] += wrap(i_ang[h] - self.i_ref[h]);
        }
        self.t_sum += t;
        self.count += 1;
        if self.count < self.window {
            return false;
        }
        let k = self.window as f64;
        let mean = |sum: &[f64]| sum.iter().map(|s| s / k).collect::<Vec<_>>();
        let va: Vec<f64> = self.v_ang.iter().zip(&self.v_ref).map(|(s, r)| r + s / k).collect();
        let ia: Vec<f64> = self.i_ang.iter().zip(&self.i_ref).map(|(s, r)| r + s / k).collect();
        self.out.push(self.t_sum / k, &mean(&self.v_mag), &va, &mean(&self.i_mag), &ia);
        self.count = 0;
        true
    }

    pub fn finish(self, is_noisy: bool) -> PhasorSeries {
        self.out.finish(is_noisy)
    }
}

/// Averages non-overlapping windows of `window` samples. The returned noise
/// has variances divided by `window`.
pub fn moving_average_downsample(series: &PhasorSeries, noise: &NoiseSpec, window: usize) -> Result<(PhasorSeries, NoiseSpec)> {
    if window > series.len() {
        return Err(Error::InvalidArgument(format!(
            "filter window {window} exceeds the {} available samples",
            series.len()
        )));
    }
    if window == 1 {
        return Ok((series.clone(), noise.clone()));
    }
    let n = series.n();
    let mut acc = PolarAccumulator::new(n, window)?;
    let row = |m: &DMatrix<f64>, t: usize| -> Vec<f64> { m.row(t).iter().copied().collect() };
    for t in 0..series.len() {
        acc.push(
            series.timestamps[t],
            &row(&series.v_mag, t),
            &row(&series.v_ang, t),
            &row(&series.i_mag, t),
            &row(&series.i_ang, t),
        );
    }
    Ok((acc.finish(series.is_noisy), noise.averaged(window)))
}

/// Subtracts the rated voltage from the real part of every entry.
pub fn center_voltages(v: &DMatrix<Complex64>, rated: f64) -> DMatrix<Complex64> {
    v.map(|z| Complex64::new(z.re - rated, z.im))
}

/// Cartesian voltages and currents with the measurement-conditioned bias
/// subtracted from every sample.
pub fn debias(series: &PhasorSeries, noise: &NoiseSpec) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    if noise.n() != series.n() {
        return Err(Error::Dimension(format!("noise covers {} buses, series has {}", noise.n(), series.n())));
    }
    let fix = |mag: &DMatrix<f64>, ang: &DMatrix<f64>, voltage: bool| {
        DMatrix::from_fn(series.len(), series.n(), |t, h| {
            let pn = if voltage { noise.voltage(h) } else { noise.current(h) };
            let (m, a) = (mag[(t, h)], ang[(t, h)]);
            let mean = cartesian_moments_measured(m, a, pn).mean;
            Complex64::from_polar(m, a) - Complex64::new(mean[0], mean[1])
        })
    };
    Ok((fix(&series.v_mag, &series.v_ang, true), fix(&series.i_mag, &series.i_ang, false)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{corrupt, NoiseDrawer};

    fn constant_series(len: usize, v: f64, theta: f64) -> PhasorSeries {
        let vm = DMatrix::from_element(len, 1, Complex64::from_polar(v, theta));
        PhasorSeries::from_cartesian(&vm, &vm, (0..len).map(|t| t as f64 * 0.01).collect()).unwrap()
    }

    #[test]
    fn window_one_is_identity() {
        let s = constant_series(10, 1.0, 0.2);
        let (f, spec) = moving_average_downsample(&s, &NoiseSpec::zero(1), 1).unwrap();
        assert_eq!(f, s);
        assert_eq!(spec, NoiseSpec::zero(1));
    }

    #[test]
    fn window_larger_than_series_fails() {
        let s = constant_series(3, 1.0, 0.0);
        assert!(moving_average_downsample(&s, &NoiseSpec::zero(1), 4).is_err());
    }

    #[test]
    fn output_length_and_noise_scaling() {
        let s = constant_series(103, 1.0, 0.0);
        let spec = NoiseSpec::uniform(1, 4e-4, 2e-4, 4e-4, 2e-4, 1);
        let (f, fs) = moving_average_downsample(&s, &spec, 10).unwrap();
        assert_eq!(f.len(), 10);
        assert!((fs.sigma_eps_v[0] - 4e-4 / 10f64.sqrt()).abs() < 1e-18);
        assert!((f.timestamps[0] - 0.045).abs() < 1e-12);
    }

    #[test]
    fn retained_sample_count_at_month_scale() {
        // 30 days at 100 Hz with a window of 17000.
        let raw = 100usize * 86_400 * 30;
        assert_eq!(raw / 17_000, 15_247);
        assert!(raw / 17_000 >= 15_000);
    }

    #[test]
    fn phases_are_unwrapped_across_the_branch_cut() {
        let vm = DMatrix::from_fn(2, 1, |t, _| Complex64::from_polar(1.0, if t == 0 { PI - 0.01 } else { -PI + 0.03 }));
        let s = PhasorSeries::from_cartesian(&vm, &vm, vec![0.0, 1.0]).unwrap();
        let (f, _) = moving_average_downsample(&s, &NoiseSpec::zero(1), 2).unwrap();
        assert!((f.v_ang[(0, 0)] - (PI + 0.01)).abs() < 1e-12);
    }

    #[test]
    fn averaging_four_samples_halves_the_deviation() {
        let spec = NoiseSpec::uniform(1, 1e-3, 1e-3, 1e-3, 1e-3, 11);
        let mut drawer = NoiseDrawer::new(&spec);
        let mut acc = PolarAccumulator::new(1, 4).unwrap();
        let windows = 100_000u64;
        for t in 0..4 * windows {
            let (mut vm, mut va, mut im, mut ia) = ([1.0], [0.0], [1.0], [0.0]);
            drawer.corrupt_row(t, &mut vm, &mut va, &mut im, &mut ia);
            acc.push(t as f64, &vm, &va, &im, &ia);
        }
        let f = acc.finish(true);
        let sd = |x: Vec<f64>| {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        };
        let sm = sd(f.v_mag.iter().map(|v| v - 1.0).collect());
        let sp = sd(f.v_ang.iter().copied().collect());
        assert!((sm / 5e-4 - 1.0).abs() < 0.05, "{sm}");
        assert!((sp / 5e-4 - 1.0).abs() < 0.05, "{sp}");
    }

    #[test]
    fn filtered_noisy_mean_equals_filtered_exact() {
        let len = 40_000;
        let s = constant_series(len, 1.0, 0.5);
        let spec = NoiseSpec::uniform(1, 1e-3, 1e-3, 1e-3, 1e-3, 5);
        let noisy = corrupt(&s, &spec).unwrap();
        let (fe, _) = moving_average_downsample(&s, &spec, 8).unwrap();
        let (fn_, fs) = moving_average_downsample(&noisy, &spec, 8).unwrap();
        let m = fn_.len() as f64;
        let mean_mag = fn_.v_mag.iter().sum::<f64>() / m;
        let mean_ang = fn_.v_ang.iter().sum::<f64>() / m;
        let se_mag = fs.sigma_eps_v[0] / m.sqrt();
        let se_ang = fs.sigma_delta_v / m.sqrt();
        assert!((mean_mag - fe.v_mag[(0, 0)]).abs() < 4.0 * se_mag);
        assert!((mean_ang - fe.v_ang[(0, 0)]).abs() < 4.0 * se_ang);
    }

    #[test]
    fn debias_without_phase_noise_changes_nothing() {
        let s = constant_series(5, 1.1, -0.4);
        let spec = NoiseSpec::uniform(1, 1e-3, 0.0, 1e-3, 0.0, 0);
        let (v, _) = debias(&s, &spec).unwrap();
        assert_eq!(v, s.voltage_cartesian());
    }

    #[test]
    fn debias_single_sample_value() {
        let s = constant_series(1, 1.0, 0.0);
        let sd: f64 = 1e-4;
        let spec = NoiseSpec::uniform(1, 1e-4, sd, 1e-4, sd, 0);
        let (v, _) = debias(&s, &spec).unwrap();
        let shift = (-sd * sd).exp() - (-sd * sd / 2.0).exp();
        assert!((shift + 5e-9).abs() < 1e-15);
        assert!((v[(0, 0)].re - (1.0 - shift)).abs() < 1e-16);
        assert_eq!(v[(0, 0)].im, 0.0);
    }

    #[test]
    fn debiased_ensemble_mean_is_unbiased() {
        // Large phase noise makes the raw bias visible above Monte-Carlo error.
        let len = 200_000;
        let (v0, th) = (1.0, 0.3);
        let s = constant_series(len, v0, th);
        let spec = NoiseSpec::uniform(1, 1e-3, 3e-2, 1e-3, 3e-2, 17);
        let noisy = corrupt(&s, &spec).unwrap();
        let (v, _) = debias(&noisy, &spec).unwrap();
        let raw = noisy.voltage_cartesian();
        let n = len as f64;
        let mean = v.iter().sum::<Complex64>() / n;
        let raw_mean = raw.iter().sum::<Complex64>() / n;
        let truth = Complex64::from_polar(v0, th);
        let se = 3e-2 / n.sqrt();
        assert!((raw_mean - truth).norm() > 3.0 * se);
        assert!((mean.re - truth.re).abs() < 3.0 * se);
        assert!((mean.im - truth.im).abs() < 3.0 * se);
    }

    #[test]
    fn centering_flat_profile_gives_zero() {
        let v = DMatrix::from_element(4, 3, Complex64::new(1.0, 0.0));
        assert!(center_voltages(&v, 1.0).iter().all(|z| z.norm() == 0.0));
    }
}
