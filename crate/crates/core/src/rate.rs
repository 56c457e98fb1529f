//! Sum-rate evaluation.
//!
//! Three views of the same link budget:
//!
//! * [`surrogate_rate`]: the statistical-CSI closed form, with the expectations
//!   of signal and interference power moved inside the logarithm. For user
//!   `k` with effective transmit vectors `g_i = G w_i`,
//!   `S_k = p_k^2 g_k^H R_k g_k` and `I_k = sum_{i != k} p_i^2 g_i^H R_k g_i`,
//!   where `R_k = beta_k R`.
//! * [`mc_ergodic_rate`]: the ergodic rate it approximates, by Monte Carlo
//!   over correlated Rayleigh draws.
//! * [`wmmse_objective`]: the weighted-MSE function minimised by the
//!   optimiser. At the closed-form receiver and weight optimum it equals
//!   `K - surrogate_rate`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cascade::CascadeOperator;
use crate::channel::ChannelModel;
use crate::{CVec, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAlloc {
    /// Per-user amplitudes; user `k` transmits `p[k]^2` watts.
    pub p: Vec<f64>,
    pub p_max: f64,
}

impl PowerAlloc {
    pub fn new(p: Vec<f64>, p_max: f64) -> Result<Self> {
        if !(p_max > 0.0) || !p_max.is_finite() {
            return Err(Error::InvalidParameter(format!("P_max must be positive, got {p_max}")));
        }
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("amplitudes must be finite and nonnegative".into()));
        }
        let alloc = Self { p, p_max };
        if !alloc.is_feasible() {
            return Err(Error::InvalidParameter(format!(
                "total power {} exceeds budget {p_max}",
                alloc.total()
            )));
        }
        Ok(alloc)
    }

    /// Equal split, `p_k = sqrt(P_max / K)`.
    pub fn uniform(k: usize, p_max: f64) -> Self {
        Self {
            p: vec![(p_max / k as f64).sqrt(); k],
            p_max,
        }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().map(|x| x * x).sum()
    }

    pub fn is_feasible(&self) -> bool {
        self.total() <= self.p_max * (1.0 + 1e-9) && self.p.iter().all(|&x| x >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserTerms {
    pub signal: f64,
    pub interference: f64,
    pub sinr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub rate: f64,
    pub stderr: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub surrogate_sum_rate: f64,
    pub per_user: Vec<UserTerms>,
    pub mc: Option<McEstimate>,
}

/// `Re(g^H R g)` for each effective vector; flags a non-real form.
pub(crate) fn gains(model: &ChannelModel, effective: &[CVec]) -> Result<Vec<f64>> {
    effective
        .iter()
        .map(|g| {
            let q = g.dotc(&(&model.r * g));
            if q.im.abs() > 1e-9 * q.re.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::Numeric(format!(
                    "quadratic form has imaginary part {:e} (R not Hermitian?)",
                    q.im
                )));
            }
            Ok(q.re.max(0.0))
        })
        .collect()
}

fn check_users(model: &ChannelModel, effective: &[CVec], p: &[f64]) -> Result<()> {
    let k = model.users();
    if effective.len() != k || p.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "K={k} but got {} effective vectors and {} amplitudes",
            effective.len(),
            p.len()
        )));
    }
    Ok(())
}

pub(crate) fn terms_from_gains(model: &ChannelModel, gains: &[f64], p: &[f64]) -> Vec<UserTerms> {
    let received: Vec<f64> = gains.iter().zip(p).map(|(a, x)| a * x * x).collect();
    (0..model.users())
        .map(|k| {
            let b = model.beta[k];
            let signal = b * received[k];
            // sum over i != k, computed directly to avoid cancellation
            let interference = b * received
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, r)| r)
                .sum::<f64>();
            UserTerms {
                signal,
                interference,
                sinr: signal / (interference + model.sigma2[k]),
            }
        })
        .collect()
}

pub(crate) fn sum_rate(terms: &[UserTerms]) -> f64 {
    terms.iter().map(|t| t.sinr.ln_1p()).sum::<f64>() / std::f64::consts::LN_2
}

/// Closed-form surrogate from the effective vectors `G w_k`.
pub fn surrogate_from_effective(model: &ChannelModel, effective: &[CVec], p: &[f64]) -> Result<RateReport> {
    check_users(model, effective, p)?;
    let a = gains(model, effective)?;
    let per_user = terms_from_gains(model, &a, p);
    Ok(RateReport {
        surrogate_sum_rate: sum_rate(&per_user),
        per_user,
        mc: None,
    })
}

pub fn surrogate_rate(op: &CascadeOperator, model: &ChannelModel, power: &PowerAlloc) -> Result<RateReport> {
    surrogate_from_effective(model, &op.effective, &power.p)
}

/// Instantaneous sum rate for one channel draw.
pub fn instantaneous_rate(model: &ChannelModel, effective: &[CVec], p: &[f64], h: &[CVec]) -> f64 {
    let k = model.users();
    (0..k)
        .map(|user| {
            let rx: Vec<f64> = effective
                .iter()
                .zip(p)
                .map(|(g, &pi)| pi * pi * g.dotc(&h[user]).norm_sqr())
                .collect();
            let interference: f64 = rx.iter().enumerate().filter(|&(i, _)| i != user).map(|(_, r)| r).sum();
            (rx[user] / (interference + model.sigma2[user])).ln_1p()
        })
        .sum::<f64>()
        / std::f64::consts::LN_2
}

/// Sample mean and standard error of the instantaneous sum rate.
///
/// Draw `t` always uses the same RNG substream, so the estimate does not
/// depend on how many threads rayon uses.
pub fn mc_ergodic_rate(
    op: &CascadeOperator,
    model: &ChannelModel,
    power: &PowerAlloc,
    seed: u64,
    n_draws: usize,
) -> Result<McEstimate> {
    mc_from_effective(model, &op.effective, &power.p, seed, n_draws)
}

pub fn mc_from_effective(
    model: &ChannelModel,
    effective: &[CVec],
    p: &[f64],
    seed: u64,
    n_draws: usize,
) -> Result<McEstimate> {
    check_users(model, effective, p)?;
    if n_draws < 2 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least 2 draws".into()));
    }
    let samples: Vec<f64> = (0..n_draws as u64)
        .into_par_iter()
        .map(|t| instantaneous_rate(model, effective, p, &model.sample_draw(seed, t)))
        .collect();
    let n = n_draws as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        rate: mean,
        stderr: (var / n).sqrt(),
        draws: n_draws,
    })
}

/// Receive-side WMMSE variables.
///
/// User `k`'s receiver is the vector `u[k] * direction[k]`, with `direction[k]`
/// a unit vector and `u[k]` a complex scalar. The direction is refreshed only
/// by the receiver update, which keeps the objective an exact quadratic in the
/// transmit-side variables between receiver updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Receivers {
    pub u: Vec<Complex64>,
    pub direction: Vec<CVec>,
    pub rho: Vec<f64>,
}

impl Receivers {
    pub fn zero(model: &ChannelModel) -> Self {
        let k = model.users();
        let mut e0 = CVec::zeros(model.n);
        e0[0] = Complex64::new(1.0, 0.0);
        Self {
            u: vec![Complex64::new(0.0, 0.0); k],
            direction: vec![e0; k],
            rho: vec![1.0; k],
        }
    }
}

/// `R_k^{1/2} g = sqrt(beta_k) R^{1/2} g`.
pub(crate) fn whitened(model: &ChannelModel, k: usize, g: &CVec) -> CVec {
    (&model.r_sqrt * g) * Complex64::new(model.beta[k].sqrt(), 0.0)
}

/// Per-user MSE `e_k` at the given receivers (weights are not used).
pub fn mse_terms(model: &ChannelModel, rx: &Receivers, effective: &[CVec], p: &[f64]) -> Result<Vec<f64>> {
    check_users(model, effective, p)?;
    let a = gains(model, effective)?;
    let received: f64 = a.iter().zip(p).map(|(ai, x)| ai * x * x).sum();
    Ok((0..model.users())
        .map(|k| {
            let total = model.beta[k] * received + model.sigma2[k];
            let cross = rx.direction[k].dotc(&whitened(model, k, &effective[k])) * p[k];
            rx.u[k].norm_sqr() * total - 2.0 * (rx.u[k].conj() * cross).re + 1.0
        })
        .collect())
}

/// `sum_k rho_k e_k - log2 rho_k`.
pub fn wmmse_objective(model: &ChannelModel, rx: &Receivers, effective: &[CVec], p: &[f64]) -> Result<f64> {
    if let Some(bad) = rx.rho.iter().find(|&&r| !(r > 0.0)) {
        return Err(Error::InvalidParameter(format!("MSE weights must be positive, got {bad}")));
    }
    let e = mse_terms(model, rx, effective, p)?;
    Ok(e.iter().zip(&rx.rho).map(|(e, r)| r * e - r.log2()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{materialize_g, PhaseStack, Resolution};
    use crate::channel::UserPlacement;
    use crate::geometry::{GeometryParams, SimGeometry};
    use crate::rng::{self, Purpose};

    fn model(n: usize, n_r: usize, l: usize, k: usize, sigma2: f64) -> ChannelModel {
        let g = SimGeometry::build(&GeometryParams::standard(k, n, n_r, l)).unwrap();
        let d = (0..k).map(|i| 60.0 + 5.0 * i as f64).collect();
        ChannelModel::build(&g, UserPlacement::from_distances(d, sigma2)).unwrap()
    }

    fn random_op(m: &ChannelModel, seed: u64) -> CascadeOperator {
        let mut rng = rng::stream(seed, Purpose::PhaseInit);
        let s = PhaseStack::random(Resolution::Continuous, m.layers, m.n, &mut rng);
        materialize_g(&s, m).unwrap()
    }

    #[test]
    fn single_user_has_no_interference() {
        let m = model(4, 2, 2, 1, 1e-11);
        let op = random_op(&m, 1);
        let power = PowerAlloc::uniform(1, 1.0);
        let r = surrogate_rate(&op, &m, &power).unwrap();
        let g = &op.effective[0];
        let q = g.dotc(&(&m.r * g)).re * m.beta[0];
        assert_eq!(r.per_user[0].interference, 0.0);
        assert!((r.surrogate_sum_rate - (1.0 + q / 1e-11).log2()).abs() < 1e-10);
    }

    #[test]
    fn zero_power_zero_rate() {
        let m = model(4, 2, 2, 3, 1e-11);
        let op = random_op(&m, 2);
        let r = surrogate_rate(&op, &m, &PowerAlloc::new(vec![0.0; 3], 1.0).unwrap()).unwrap();
        assert_eq!(r.surrogate_sum_rate, 0.0);
    }

    #[test]
    fn matches_term_by_term_oracle() {
        let m = model(4, 2, 3, 3, 1e-11);
        let op = random_op(&m, 3);
        let p = vec![0.2, 0.5, 0.7];
        let r = surrogate_from_effective(&m, &op.effective, &p).unwrap();
        // straight-line evaluation of tr[p_i^2 g_i^H (beta_k R) g_i] with explicit loops
        let n = m.n;
        let mut want = 0.0;
        for k in 0..3 {
            let form = |i: usize| {
                let g = &op.effective[i];
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        acc += g[a].conj() * m.r[(a, b)] * m.beta[k] * g[b];
                    }
                }
                p[i] * p[i] * acc.re
            };
            let s = form(k);
            let i: f64 = (0..3).filter(|&i| i != k).map(form).sum();
            want += (1.0 + s / (i + m.sigma2[k])).log2();
        }
        assert!((r.surrogate_sum_rate - want).abs() < 1e-10);
    }

    #[test]
    fn common_scaling_of_noise_and_path_loss_keeps_sinr() {
        let mut m = model(4, 2, 2, 3, 1e-11);
        let op = random_op(&m, 4);
        let p = vec![0.3, 0.6, 0.1];
        let before = surrogate_from_effective(&m, &op.effective, &p).unwrap();
        for (b, s) in m.beta.iter_mut().zip(m.sigma2.iter_mut()) {
            *b *= 7.5;
            *s *= 7.5;
        }
        let after = surrogate_from_effective(&m, &op.effective, &p).unwrap();
        for (x, y) in before.per_user.iter().zip(&after.per_user) {
            assert!((x.sinr - y.sinr).abs() <= 1e-12 * x.sinr);
        }
    }

    #[test]
    fn huge_noise_kills_both_rates() {
        let m = model(4, 2, 2, 2, 1e3);
        let op = random_op(&m, 5);
        let power = PowerAlloc::uniform(2, 1.0);
        let s = surrogate_rate(&op, &m, &power).unwrap();
        let mc = mc_ergodic_rate(&op, &m, &power, 1, 200).unwrap();
        assert!(s.surrogate_sum_rate < 1e-9);
        assert!(mc.rate < 1e-9);
    }

    #[test]
    fn mc_within_jensen_bound() {
        let m = model(9, 3, 2, 3, 1e-11);
        let op = random_op(&m, 6);
        let power = PowerAlloc::uniform(3, 1.0);
        let s = surrogate_rate(&op, &m, &power).unwrap().surrogate_sum_rate;
        let mc = mc_ergodic_rate(&op, &m, &power, 2, 4000).unwrap();
        assert!((mc.rate - s).abs() <= 3.0 * crate::units::LOG_JENSEN_GAP_BOUND + 3.0 * mc.stderr);
        assert!(mc_ergodic_rate(&op, &m, &power, 2, 1).is_err());
    }

    #[test]
    fn zero_receivers_give_k() {
        let m = model(4, 2, 2, 3, 1e-11);
        let op = random_op(&m, 7);
        let rx = Receivers::zero(&m);
        let g = wmmse_objective(&m, &rx, &op.effective, &[0.1, 0.2, 0.3]).unwrap();
        assert!((g - 3.0).abs() < 1e-15);
        let mut bad = rx.clone();
        bad.rho[1] = 0.0;
        assert!(wmmse_objective(&m, &bad, &op.effective, &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn power_alloc_validation() {
        assert!(PowerAlloc::new(vec![1.0, 1.0], 1.0).is_err());
        assert!(PowerAlloc::new(vec![-0.1], 1.0).is_err());
        assert!(PowerAlloc::new(vec![0.5], 0.0).is_err());
        let u = PowerAlloc::uniform(4, 2.0);
        assert!((u.total() - 2.0).abs() < 1e-15);
    }
}
