use num_complex::Complex64;

use crate::channel::ChannelModel;
use crate::rate::{self, gains, whitened, Receivers};
use crate::{CVec, Error, Result};

/// Closed-form receiver update.
///
/// With `w_k = R_k^{1/2} G w_k^1`, the MSE-optimal receive vector is
/// `w_k p_k / T_k` where `T_k = sum_i p_i^2 g_i^H R_k g_i + sigma_k^2`. It is
/// stored as the scalar `u_k = ||w_k|| p_k / T_k` times the unit direction
/// `w_k / ||w_k||`.
pub fn update_receivers(model: &ChannelModel, rx: &mut Receivers, effective: &[CVec], p: &[f64]) -> Result<()> {
    let a = gains(model, effective)?;
    let received: f64 = a.iter().zip(p).map(|(ai, x)| ai * x * x).sum();
    for k in 0..model.users() {
        let total = model.beta[k] * received + model.sigma2[k];
        let w = whitened(model, k, &effective[k]);
        let s = w.norm();
        if s > 0.0 && s.is_finite() {
            rx.direction[k] = w / Complex64::new(s, 0.0);
        }
        rx.u[k] = Complex64::new(s * p[k] / total, 0.0);
    }
    Ok(())
}

/// `rho_k = 1 / e_k` at the current receivers.
pub fn update_weights(model: &ChannelModel, rx: &mut Receivers, effective: &[CVec], p: &[f64]) -> Result<()> {
    let e = rate::mse_terms(model, rx, effective, p)?;
    for (k, &ek) in e.iter().enumerate() {
        if !(ek > 0.0) || !ek.is_finite() {
            return Err(Error::Numeric(format!("MSE of user {k} is {ek}; cannot invert")));
        }
        rx.rho[k] = 1.0 / ek;
    }
    Ok(())
}
