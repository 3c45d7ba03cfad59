use crate::error::{Error, Result};
use crate::signal::BlockCovariance;

/// Negative log-likelihood `di^T Sigma_i^{-1} di + dv^T Sigma_v^{-1} dv` of
/// real-stacked error vectors. Satisfying the bilinear constraint is the
/// caller's responsibility.
pub fn mle_negloglik(dv: &[f64], di: &[f64], sigma_v: &BlockCovariance, sigma_i: &BlockCovariance) -> Result<f64> {
    if dv.len() != di.len() {
        return Err(Error::Dimension(format!("dv has length {}, di has {}", dv.len(), di.len())));
    }
    Ok(sigma_i.quad_form(di)? + sigma_v.quad_form(dv)?)
}
