//! Joint power allocation and phase optimisation.
//!
//! Each outer iteration performs
//!
//! 1. closed-form receiver (`u`) and weight (`rho`) updates,
//! 2. a power loop: exact power step, receiver/weight refresh, repeated until
//!    the surrogate rate moves by less than `power_tol`,
//! 3. an ascending sweep over the layers, each solved by ADMM on its
//!    layer-restricted quadratic and projected onto the phase grid,
//! 4. a cascade refresh and a history record.
//!
//! A layer update is kept only if it does not lower the surrogate rate (the
//! acceptance guard), which makes the recorded rate history non-decreasing.

mod phase;
mod power;
mod wmmse;

use std::time::Instant;

use crate::cascade::{effective_vectors, LayerSweep, PhaseStack, Resolution};
use crate::channel::ChannelModel;
use crate::rate::{self, surrogate_from_effective, PowerAlloc, Receivers};
use crate::rng::{self, Purpose};
use crate::{CVec, Error, Result};

pub use phase::{
    admm_phase_step, build_quadratic, nearest_grid_angle, project_discrete, project_scalar,
    quadratic_from_sweep, AdmmSolver, AdmmState, Quadratic,
};
pub use power::{update_power, PowerStep};
pub use wmmse::{update_receivers, update_weights};

/// How the ADMM penalty is chosen for each layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyPolicy {
    /// `factor * tr(B) / N`, floored to stay positive when `B` vanishes.
    TraceScaled(f64),
    Fixed(f64),
}

impl PenaltyPolicy {
    pub fn penalty(self, quad: &Quadratic) -> f64 {
        match self {
            PenaltyPolicy::Fixed(b) => b,
            PenaltyPolicy::TraceScaled(f) => {
                let tr = quad.trace();
                let n = quad.b.nrows() as f64;
                (f * tr / n).max(1e-12 * tr + f64::MIN_POSITIVE.sqrt())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub resolution: Resolution,
    /// Sum-power budget in watts.
    pub p_max: f64,
    pub max_outer: usize,
    /// Relative surrogate-rate change that ends the outer loop.
    pub outer_tol: f64,
    pub power_tol: f64,
    pub power_max_inner: usize,
    pub admm_tol: f64,
    pub admm_max_inner: usize,
    pub penalty: PenaltyPolicy,
    pub acceptance_guard: bool,
    /// Refresh receivers and weights before each layer of the sweep.
    pub refresh_per_layer: bool,
}

impl OptimizerConfig {
    pub fn new(resolution: Resolution, p_max: f64) -> Self {
        Self {
            resolution,
            p_max,
            max_outer: 50,
            outer_tol: 1e-4,
            power_tol: 1e-5,
            power_max_inner: 50,
            admm_tol: 1e-5,
            admm_max_inner: 100,
            penalty: PenaltyPolicy::TraceScaled(1.0),
            acceptance_guard: true,
            refresh_per_layer: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resolution.validate()?;
        if !(self.p_max > 0.0) || !self.p_max.is_finite() {
            return Err(Error::InvalidParameter(format!("P_max must be positive, got {}", self.p_max)));
        }
        if self.max_outer == 0 || self.admm_max_inner == 0 || self.power_max_inner == 0 {
            return Err(Error::InvalidParameter("iteration caps must be positive".into()));
        }
        for (name, v) in [
            ("outer_tol", self.outer_tol),
            ("power_tol", self.power_tol),
            ("admm_tol", self.admm_tol),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")));
            }
        }
        match self.penalty {
            PenaltyPolicy::Fixed(b) | PenaltyPolicy::TraceScaled(b) if !(b > 0.0) || !b.is_finite() => {
                Err(Error::InvalidParameter(format!("ADMM penalty parameter must be positive, got {b}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub rate: f64,
    pub objective: f64,
    pub elapsed_ns: u128,
}

/// Full optimiser iterate.
#[derive(Debug, Clone)]
pub struct WmmseState {
    pub power: PowerAlloc,
    pub stack: PhaseStack,
    pub rx: Receivers,
    /// Splitting variables of the most recent layer solve.
    pub admm: Option<AdmmState>,
    pub iter: usize,
    pub history: Vec<HistoryRow>,
}

impl WmmseState {
    /// Uniform power, phases uniform on the grid, receivers and weights at
    /// their closed-form optimum.
    pub fn initial(model: &ChannelModel, cfg: &OptimizerConfig, seed: u64) -> Result<Self> {
        let mut prng = rng::stream(seed, Purpose::PhaseInit);
        let stack = PhaseStack::random(cfg.resolution, model.layers, model.n, &mut prng);
        Self::from_parts(model, stack, PowerAlloc::uniform(model.users(), cfg.p_max))
    }

    pub fn from_parts(model: &ChannelModel, stack: PhaseStack, power: PowerAlloc) -> Result<Self> {
        let mut state = Self {
            power,
            stack,
            rx: Receivers::zero(model),
            admm: None,
            iter: 0,
            history: Vec::new(),
        };
        state.update_u(model)?;
        state.update_rho(model)?;
        Ok(state)
    }

    pub fn effective(&self, model: &ChannelModel) -> Result<Vec<CVec>> {
        effective_vectors(&self.stack, model)
    }

    pub fn surrogate_rate(&self, model: &ChannelModel) -> Result<f64> {
        Ok(surrogate_from_effective(model, &self.effective(model)?, &self.power.p)?.surrogate_sum_rate)
    }

    pub fn objective(&self, model: &ChannelModel) -> Result<f64> {
        rate::wmmse_objective(model, &self.rx, &self.effective(model)?, &self.power.p)
    }

    pub fn update_u(&mut self, model: &ChannelModel) -> Result<()> {
        let eff = self.effective(model)?;
        update_receivers(model, &mut self.rx, &eff, &self.power.p)
    }

    pub fn update_rho(&mut self, model: &ChannelModel) -> Result<()> {
        let eff = self.effective(model)?;
        update_weights(model, &mut self.rx, &eff, &self.power.p)
    }

    pub fn update_power(&mut self, model: &ChannelModel) -> Result<PowerStep> {
        let eff = self.effective(model)?;
        let step = update_power(model, &self.rx, &eff, self.power.p_max)?;
        self.power = step.power.clone();
        Ok(step)
    }

    fn snapshot(&self) -> String {
        format!(
            "iter {} power {:?} stack:\n{}",
            self.iter,
            self.power.p,
            self.stack.to_text()
        )
    }

    fn non_finite(&self, what: &str) -> Error {
        Error::NonFinite {
            iteration: self.iter,
            what: what.to_string(),
            snapshot: self.snapshot(),
        }
    }

    /// Power loop: exact power step, then receiver/weight refresh, until the
    /// surrogate rate changes by less than `power_tol`.
    fn power_loop(&mut self, model: &ChannelModel, cfg: &OptimizerConfig) -> Result<f64> {
        let mut prev = self.surrogate_rate(model)?;
        for inner in 0..cfg.power_max_inner {
            if inner > 0 {
                self.update_u(model)?;
                self.update_rho(model)?;
            }
            self.update_power(model)?;
            let f = self.surrogate_rate(model)?;
            if !f.is_finite() {
                return Err(self.non_finite("rate after power update"));
            }
            let done = (f - prev).abs() < cfg.power_tol;
            prev = f;
            if done {
                break;
            }
        }
        Ok(prev)
    }

    /// Ascending sweep over the layers.
    fn phase_sweep(&mut self, model: &ChannelModel, cfg: &OptimizerConfig, mut current: f64) -> Result<f64> {
        let ones = vec![1.0; model.users()];
        let mut sweep = LayerSweep::new(&self.stack, model, &self.power.p)?;
        loop {
            let layer = sweep.layer();
            if cfg.refresh_per_layer && layer > 0 {
                self.update_u(model)?;
                self.update_rho(model)?;
            }
            let quad = quadratic_from_sweep(model, &self.rx, &sweep);
            let beta = cfg.penalty.penalty(&quad);
            let solver = AdmmSolver::new(&quad, beta)?;
            let mut st = AdmmState::start(self.stack.phi(layer), beta);

            let rate_of = |x: &CVec| -> Result<f64> {
                Ok(surrogate_from_effective(model, &sweep.outputs(x), &ones)?.surrogate_sum_rate)
            };
            let mut best: Option<(f64, CVec)> = None;
            let mut prev: Option<f64> = None;
            let mut last_x = st.x.clone();
            for _ in 0..cfg.admm_max_inner {
                solver.step(&mut st, cfg.resolution)?;
                let f = rate_of(&st.x)?;
                if !f.is_finite() {
                    return Err(self.non_finite("rate during ADMM"));
                }
                if best.as_ref().map_or(true, |(b, _)| f > *b) {
                    best = Some((f, st.x.clone()));
                }
                last_x = st.x.clone();
                if prev.is_some_and(|p| (f - p).abs() < cfg.admm_tol) {
                    break;
                }
                prev = Some(f);
            }

            let (candidate_rate, candidate) = if cfg.acceptance_guard {
                best.expect("at least one ADMM iteration")
            } else {
                (rate_of(&last_x)?, last_x)
            };
            if !cfg.acceptance_guard || candidate_rate >= current {
                self.stack.set_layer_phasors(layer, &candidate)?;
                current = candidate_rate;
            }
            self.admm = Some(st);
            if !sweep.advance(&self.stack, model) {
                break;
            }
        }
        Ok(current)
    }

    /// One outer iteration; appends a history row and returns the new rate.
    pub fn outer_step(&mut self, model: &ChannelModel, cfg: &OptimizerConfig) -> Result<f64> {
        let start = Instant::now();
        self.iter += 1;
        self.update_u(model)?;
        self.update_rho(model)?;
        let after_power = self.power_loop(model, cfg)?;
        self.phase_sweep(model, cfg, after_power)?;

        let rate = self.surrogate_rate(model)?;
        let objective = self.objective(model)?;
        if !rate.is_finite() || !objective.is_finite() {
            return Err(self.non_finite("outer iterate"));
        }
        self.history.push(HistoryRow {
            iter: self.iter,
            rate,
            objective,
            elapsed_ns: start.elapsed().as_nanos(),
        });
        Ok(rate)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: WmmseState,
    pub initial_rate: f64,
    pub final_rate: f64,
    pub converged: bool,
}

impl RunOutcome {
    pub fn history(&self) -> &[HistoryRow] {
        &self.state.history
    }

    /// Rate after outer iteration `iter` (1-based); iterations past the
    /// stopping point repeat the final value.
    pub fn rate_at(&self, iter: usize) -> f64 {
        if iter == 0 {
            return self.initial_rate;
        }
        let h = self.history();
        h.get(iter - 1).or(h.last()).map_or(self.initial_rate, |r| r.rate)
    }
}

/// Runs the alternating optimisation from the standard random initialisation.
pub fn run_algorithm1(model: &ChannelModel, cfg: &OptimizerConfig, seed: u64) -> Result<RunOutcome> {
    cfg.validate()?;
    let state = WmmseState::initial(model, cfg, seed)?;
    run_from(model, cfg, state)
}

/// Runs the alternating optimisation from a given state.
pub fn run_from(model: &ChannelModel, cfg: &OptimizerConfig, mut state: WmmseState) -> Result<RunOutcome> {
    cfg.validate()?;
    let initial_rate = state.surrogate_rate(model)?;
    if !initial_rate.is_finite() {
        return Err(state.non_finite("initial rate"));
    }
    let mut prev = initial_rate;
    let mut converged = false;
    for _ in 0..cfg.max_outer {
        let rate = state.outer_step(model, cfg)?;
        let change = (rate - prev).abs() / rate.abs().max(f64::MIN_POSITIVE);
        prev = rate;
        if change < cfg.outer_tol {
            converged = true;
            break;
        }
    }
    Ok(RunOutcome {
        state,
        initial_rate,
        final_rate: prev,
        converged,
    })
}
