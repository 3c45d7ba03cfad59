//! Cartesian moments of polar phasor noise.
//!
//! A phasor measured as `(v + eps) e^{j(theta + delta)}` with
//! `eps ~ N(0, s_e^2)`, `delta ~ N(0, s_d^2)` has Cartesian error
//! `(dc, dd)` that is biased and correlated. Two sets of moments are
//! provided: the exact ones, which need the true `(v, theta)`, and the ones
//! conditioned on the measured `(v~, theta~)` used in practice.

use serde::{Deserialize, Serialize};

use super::PolarNoise;
use crate::error::{Error, Result};

/// Mean and covariance of the Cartesian error of one phasor sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    /// `[E dc, E dd]`
    pub mean: [f64; 2],
    /// `[[Var dc, Cov], [Cov, Var dd]]`
    pub cov: [[f64; 2]; 2],
}

impl SampleMoments {
    pub fn var_re(&self) -> f64 {
        self.cov[0][0]
    }

    pub fn var_im(&self) -> f64 {
        self.cov[1][1]
    }

    pub fn cov_reim(&self) -> f64 {
        self.cov[0][1]
    }
}

/// Moments of the Cartesian error given the true magnitude and phase.
pub fn cartesian_moments_exact(v: f64, theta: f64, noise: PolarNoise) -> SampleMoments {
    let se2 = noise.sigma_mag * noise.sigma_mag;
    let sd2 = noise.sigma_phase * noise.sigma_phase;
    let (s, c) = theta.sin_cos();
    let (s2, c2) = (s * s, c * c);
    let shrink = (-sd2 / 2.0).exp() - 1.0;
    let e1 = (-sd2).exp();
    let (ch, sh) = (sd2.cosh(), sd2.sinh());

    let var_c = v * v * e1 * (c2 * (ch - 1.0) + s2 * sh) + se2 * e1 * (c2 * ch + s2 * sh);
    let var_d = v * v * e1 * (s2 * (ch - 1.0) + c2 * sh) + se2 * e1 * (s2 * ch + c2 * sh);
    let cov = s * c * (-2.0 * sd2).exp() * (se2 + v * v * (1.0 - sd2.exp()));
    SampleMoments {
        mean: [v * c * shrink, v * s * shrink],
        cov: [[var_c, cov], [cov, var_d]],
    }
}

/// Moments of the Cartesian error conditioned on the measured magnitude and
/// phase.
pub fn cartesian_moments_measured(v_meas: f64, theta_meas: f64, noise: PolarNoise) -> SampleMoments {
    let se2 = noise.sigma_mag * noise.sigma_mag;
    let sd2 = noise.sigma_phase * noise.sigma_phase;
    let (s, c) = theta_meas.sin_cos();
    let (s2, c2) = (s * s, c * c);
    let bias = (-sd2).exp() - (-sd2 / 2.0).exp();
    let e2 = (-2.0 * sd2).exp();
    let (ch1, sh1) = (sd2.cosh(), sd2.sinh());
    let (ch2, sh2) = ((2.0 * sd2).cosh(), (2.0 * sd2).sinh());
    let vv = v_meas * v_meas;

    let var_c = vv * e2 * (c2 * (ch2 - ch1) + s2 * (sh2 - sh1))
        + se2 * e2 * (c2 * (2.0 * ch2 - ch1) + s2 * (2.0 * sh2 - sh1));
    let var_d = vv * e2 * (s2 * (ch2 - ch1) + c2 * (sh2 - sh1))
        + se2 * e2 * (s2 * (2.0 * ch2 - ch1) + c2 * (2.0 * sh2 - sh1));
    let cov = s * c * (-4.0 * sd2).exp() * (se2 + (vv + se2) * (1.0 - sd2.exp()));
    SampleMoments {
        mean: [v_meas * c * bias, v_meas * s * bias],
        cov: [[var_c, cov], [cov, var_d]],
    }
}

/// Ratio between the first-order Cartesian bias `v s_d^2 / 2` and the
/// smallest noise standard deviation `sqrt(min(s_e^2, v^2 s_d^2))`.
pub fn bias_significance(noise: PolarNoise, v: f64) -> Result<f64> {
    let bias = v * noise.sigma_phase * noise.sigma_phase / 2.0;
    let min_var = (noise.sigma_mag * noise.sigma_mag).min(v * v * noise.sigma_phase * noise.sigma_phase);
    if !(min_var > 0.0) {
        return Err(Error::InvalidArgument(
            "bias significance is undefined when a noise deviation or the magnitude is zero".into(),
        ));
    }
    Ok(bias / min_var.sqrt())
}
