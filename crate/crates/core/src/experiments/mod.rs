//! Experiment harness: configuration, seeded runs, the convergence, layer
//! and timing studies, and CSV output.
//!
//! Runs for different seeds execute on the rayon pool; results are collected
//! in `(resolution, layers, seed)` order so every numeric output is the same
//! for any thread count.

mod config;
mod output;
mod studies;

use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::cascade::Resolution;
use crate::channel::ChannelModel;
use crate::optimizer::{run_algorithm1, HistoryRow};
use crate::rate::{mc_from_effective, surrogate_from_effective, RateReport};
use crate::Result;

pub use config::{
    load_config, BetaPolicy, ExperimentConfig, OptimizerSection, PowerSection, Resolutions, RunSection,
    SystemSection, UsersSection,
};
pub use output::emit_csv;
pub use studies::{
    run_convergence_study, run_layer_sweep, run_oracle_check, run_timing_study, ConvergenceRow, ConvergenceStudy,
    LayerRow, LayerStudy, OracleRow, TimingRow,
};

/// Lowercase hex SHA-256.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTimings {
    pub channel_ns: u128,
    pub optimize_ns: u128,
    pub evaluate_ns: u128,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub resolution: Resolution,
    pub layers: usize,
    pub initial_rate: f64,
    pub history: Vec<HistoryRow>,
    pub converged: bool,
    pub report: RateReport,
    pub timings: PhaseTimings,
}

impl RunRecord {
    pub fn final_rate(&self) -> f64 {
        self.report.surrogate_sum_rate
    }

    /// Rate after outer iteration `iter`, holding the last value once stopped.
    pub fn rate_at(&self, iter: usize) -> f64 {
        if iter == 0 {
            return self.initial_rate;
        }
        self.history
            .get(iter - 1)
            .or(self.history.last())
            .map_or(self.initial_rate, |r| r.rate)
    }

    pub fn outer_iterations(&self) -> usize {
        self.history.len()
    }

    /// Mean optimiser time per outer iteration, from the history rows.
    pub fn per_iteration_ns(&self) -> f64 {
        if self.history.is_empty() {
            return 0.0;
        }
        self.history.iter().map(|r| r.elapsed_ns as f64).sum::<f64>() / self.history.len() as f64
    }
}

/// One optimiser run: place users for `seed` on the given hardware, optimise,
/// then evaluate the surrogate and (if enabled) the Monte Carlo rate.
pub fn run_single(
    cfg: &ExperimentConfig,
    hardware: &ChannelModel,
    resolution: Resolution,
    seed: u64,
) -> Result<RunRecord> {
    let context = || format!("run seed={seed} b={resolution} L={}", hardware.layers);
    let inner = || -> Result<RunRecord> {
        let t0 = Instant::now();
        let model = hardware.with_users(cfg.placement(seed)?)?;
        let t1 = Instant::now();
        let out = run_algorithm1(&model, &cfg.optimizer_config(resolution), seed)?;
        let t2 = Instant::now();
        let eff = out.state.effective(&model)?;
        let mut report = surrogate_from_effective(&model, &eff, &out.state.power.p)?;
        if cfg.run.n_mc >= 2 {
            report.mc = Some(mc_from_effective(&model, &eff, &out.state.power.p, seed, cfg.run.n_mc)?);
        }
        let t3 = Instant::now();
        Ok(RunRecord {
            config_hash: cfg.hash(),
            seed,
            resolution,
            layers: hardware.layers,
            initial_rate: out.initial_rate,
            history: out.state.history,
            converged: out.converged,
            report,
            timings: PhaseTimings {
                channel_ns: (t1 - t0).as_nanos(),
                optimize_ns: (t2 - t1).as_nanos(),
                evaluate_ns: (t3 - t2).as_nanos(),
            },
        })
    };
    inner().map_err(|e| e.in_run(context()))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub(crate) fn std_err(xs: &[f64]) -> f64 {
    std_dev(xs) / (xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let xs = [3.0, 1.0, 2.0, 10.0];
        assert_eq!(mean(&xs), 4.0);
        assert_eq!(median(&xs), 2.5);
        assert_eq!(median(&xs[..3]), 2.0);
        // sample variance of {3,1,2,10}: (1+9+4+36)/3
        assert!((std_dev(&xs) - (50.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(std_err(&[5.0]), 0.0);
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            digest("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
