//! Power allocation with fixed phases and receivers.
//!
//! With receivers and weights fixed the WMMSE objective separates per user:
//! `p_k^2 D_k - 2 p_k rho_k c_k` with `D_k = sum_j rho_j |u_j|^2 g_k^H R_j g_k`
//! and `c_k = Re{u_k^* a_k^H R_k^{1/2} g_k}`. Adding `lambda (sum p^2 - P_max)`
//! gives `p_k(lambda) = rho_k c_k / (D_k + lambda)`, clipped to
//! `[0, sqrt(P_max)]`. The total power is decreasing in `lambda`, so the dual
//! variable is found by bracketing and bisection.

use crate::channel::ChannelModel;
use crate::rate::{gains, whitened, PowerAlloc, Receivers};
use crate::{CVec, Result};

const BISECTION_STEPS: usize = 60;
const MAX_DOUBLINGS: usize = 2100;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerStep {
    pub power: PowerAlloc,
    /// Dual variable of the sum-power constraint (zero when slack).
    pub lambda: f64,
}

struct Coefficients {
    numer: Vec<f64>,
    denom: Vec<f64>,
    cap: f64,
}

impl Coefficients {
    fn amplitude(&self, k: usize, lambda: f64) -> f64 {
        let n = self.numer[k];
        if n <= 0.0 {
            return 0.0;
        }
        let d = self.denom[k] + lambda;
        if d <= 0.0 {
            return self.cap;
        }
        (n / d).min(self.cap)
    }

    fn amplitudes(&self, lambda: f64) -> Vec<f64> {
        (0..self.numer.len()).map(|k| self.amplitude(k, lambda)).collect()
    }

    fn total(&self, lambda: f64) -> f64 {
        (0..self.numer.len()).map(|k| self.amplitude(k, lambda).powi(2)).sum()
    }
}

fn coefficients(model: &ChannelModel, rx: &Receivers, effective: &[CVec], p_max: f64) -> Result<Coefficients> {
    let a = gains(model, effective)?;
    let weight: f64 = (0..model.users())
        .map(|j| rx.rho[j] * rx.u[j].norm_sqr() * model.beta[j])
        .sum();
    let numer = (0..model.users())
        .map(|k| {
            let cross = rx.direction[k].dotc(&whitened(model, k, &effective[k]));
            rx.rho[k] * (rx.u[k].conj() * cross).re
        })
        .collect();
    let denom = a.iter().map(|ak| weight * ak).collect();
    Ok(Coefficients {
        numer,
        denom,
        cap: p_max.sqrt(),
    })
}

/// Exact minimiser of the WMMSE objective over `p` subject to the sum-power
/// budget, for fixed phases, receivers and weights.
pub fn update_power(model: &ChannelModel, rx: &Receivers, effective: &[CVec], p_max: f64) -> Result<PowerStep> {
    let c = coefficients(model, rx, effective, p_max)?;
    if c.total(0.0) <= p_max {
        return Ok(PowerStep {
            power: PowerAlloc::new(c.amplitudes(0.0), p_max)?,
            lambda: 0.0,
        });
    }
    let mut hi = c
        .denom
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut doublings = 0;
    while c.total(hi) > p_max && doublings < MAX_DOUBLINGS {
        hi *= 2.0;
        doublings += 1;
    }
    let mut lo = if doublings == 0 { 0.0 } else { hi / 2.0 };
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if c.total(mid) > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut p = c.amplitudes(hi);
    // hi is on the feasible side; clear any last-ulp excess
    let total: f64 = p.iter().map(|x| x * x).sum();
    if total > p_max {
        let s = (p_max / total).sqrt();
        p.iter_mut().for_each(|x| *x *= s);
    }
    Ok(PowerStep {
        power: PowerAlloc::new(p, p_max)?,
        lambda: hi,
    })
}
