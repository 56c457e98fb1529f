use rayon::prelude::*;
use serde::Serialize;

use super::{mean, median, run_single, std_dev, std_err, ExperimentConfig, RunRecord};
use crate::baselines::{best_power_on_grid, exhaustive_oracle, oracle_power_grid};
use crate::cascade::Resolution;
use crate::channel::ChannelModel;
use crate::optimizer::run_algorithm1;
use crate::{Error, Result};

fn hardware(cfg: &ExperimentConfig, layers: usize) -> Result<ChannelModel> {
    cfg.channel_model(layers, cfg.run.seeds[0])
}

fn runs_over_seeds(
    cfg: &ExperimentConfig,
    hw: &ChannelModel,
    resolution: Resolution,
) -> Result<Vec<RunRecord>> {
    cfg.run
        .seeds
        .par_iter()
        .map(|&seed| run_single(cfg, hw, resolution, seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub b: Resolution,
    pub iteration: usize,
    pub mean_rate: f64,
    pub median_rate: f64,
    pub stderr_rate: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    /// `max_outer` rows per resolution, iterations `1..=max_outer`.
    pub rows: Vec<ConvergenceRow>,
    pub records: Vec<RunRecord>,
}

/// One run per `(b, seed)` at `system.L` layers; per-iteration rate summaries.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let hw = hardware(cfg, cfg.system.l)?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &b in cfg.resolutions() {
        let runs = runs_over_seeds(cfg, &hw, b)?;
        for iteration in 1..=cfg.optimizer.max_outer {
            let rates: Vec<f64> = runs.iter().map(|r| r.rate_at(iteration)).collect();
            rows.push(ConvergenceRow {
                b,
                iteration,
                mean_rate: mean(&rates),
                median_rate: median(&rates),
                stderr_rate: std_err(&rates),
                seeds: rates.len(),
            });
        }
        records.extend(runs);
    }
    Ok(ConvergenceStudy { rows, records })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRow {
    pub layers: usize,
    pub b: Resolution,
    pub mean_rate: f64,
    pub median_rate: f64,
    pub stderr_rate: f64,
    pub mean_outer_iterations: f64,
    /// Mean Monte Carlo ergodic rate; empty when Monte Carlo is disabled.
    pub mean_mc_rate: Option<f64>,
    pub seeds: usize,
}

#[derive(Debug, Clone)]
pub struct LayerStudy {
    pub rows: Vec<LayerRow>,
    pub records: Vec<RunRecord>,
}

/// Final rates per `(L, b)`, averaged over seeds.
pub fn run_layer_sweep(cfg: &ExperimentConfig, layer_list: &[usize]) -> Result<LayerStudy> {
    cfg.validate()?;
    if layer_list.is_empty() || layer_list.windows(2).any(|w| w[0] >= w[1]) || layer_list[0] == 0 {
        return Err(Error::config("run.layers", "must be a nonempty ascending list of positive counts"));
    }
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &l in layer_list {
        let hw = hardware(cfg, l)?;
        for &b in cfg.resolutions() {
            let runs = runs_over_seeds(cfg, &hw, b)?;
            let rates: Vec<f64> = runs.iter().map(RunRecord::final_rate).collect();
            let iters: Vec<f64> = runs.iter().map(|r| r.outer_iterations() as f64).collect();
            let mc: Option<Vec<f64>> = runs.iter().map(|r| r.report.mc.map(|m| m.rate)).collect();
            rows.push(LayerRow {
                layers: l,
                b,
                mean_rate: mean(&rates),
                median_rate: median(&rates),
                stderr_rate: std_err(&rates),
                mean_outer_iterations: mean(&iters),
                mean_mc_rate: mc.map(|v| mean(&v)),
                seeds: rates.len(),
            });
            records.extend(runs);
        }
    }
    Ok(LayerStudy { rows, records })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub layers: usize,
    pub b: Resolution,
    pub repetitions: usize,
    pub mean_total_s: f64,
    pub std_total_s: f64,
    pub mean_per_iteration_s: f64,
    pub std_per_iteration_s: f64,
    pub outer_iterations: usize,
    pub rate: f64,
}

/// Wall-clock cost of full optimisations, repeated `run.timing_repetitions`
/// times per layer count on the first seed and first resolution.
///
/// Repetitions run one after another on the calling thread so they do not
/// compete for cores. Every repetition must reproduce the same rate.
pub fn run_timing_study(cfg: &ExperimentConfig, layer_list: &[usize]) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    if layer_list.is_empty() || layer_list.windows(2).any(|w| w[0] >= w[1]) || layer_list[0] == 0 {
        return Err(Error::config("run.layers", "must be a nonempty ascending list of positive counts"));
    }
    let seed = cfg.run.seeds[0];
    let b = cfg.resolutions()[0];
    let reps = cfg.run.timing_repetitions;
    let mut rows = Vec::new();
    for &l in layer_list {
        let model = cfg.channel_model(l, seed)?;
        let opt = cfg.optimizer_config(b);
        let mut totals = Vec::with_capacity(reps);
        let mut per_iter = Vec::with_capacity(reps);
        let mut reference: Option<(f64, usize)> = None;
        for _ in 0..reps {
            let start = std::time::Instant::now();
            let out = run_algorithm1(&model, &opt, seed)
                .map_err(|e| e.in_run(format!("timing seed={seed} b={b} L={l}")))?;
            totals.push(start.elapsed().as_secs_f64());
            let h = out.history();
            per_iter.push(h.iter().map(|r| r.elapsed_ns as f64).sum::<f64>() / h.len().max(1) as f64 * 1e-9);
            let this = (out.final_rate, h.len());
            match reference {
                None => reference = Some(this),
                Some(r) if r.0.to_bits() != this.0.to_bits() || r.1 != this.1 => {
                    return Err(Error::Numeric(format!(
                        "repeated run at L={l} gave rate {} after {} iterations, expected {} after {}",
                        this.0, this.1, r.0, r.1
                    )));
                }
                Some(_) => {}
            }
        }
        let (rate, outer_iterations) = reference.expect("at least one repetition");
        rows.push(TimingRow {
            layers: l,
            b,
            repetitions: reps,
            mean_total_s: mean(&totals),
            std_total_s: std_dev(&totals),
            mean_per_iteration_s: mean(&per_iter),
            std_per_iteration_s: std_dev(&per_iter),
            outer_iterations,
            rate,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub seed: u64,
    /// Optimised phases with the best power split from the oracle's grid.
    pub proposed_rate: f64,
    pub oracle_rate: f64,
    pub ratio: f64,
    pub stacks_searched: u64,
}

/// Optimiser against exhaustive search at toy scale (1-bit, `system.L`
/// layers), both restricted to the same power grid.
pub fn run_oracle_check(cfg: &ExperimentConfig) -> Result<Vec<OracleRow>> {
    cfg.validate()?;
    let res = Resolution::Bits(1);
    let opt = cfg.optimizer_config(res);
    let hw = hardware(cfg, cfg.system.l)?;
    let grid = oracle_power_grid(cfg.system.k, cfg.power.p_max_w);
    cfg.run
        .seeds
        .par_iter()
        .map(|&seed| {
            let inner = || -> Result<OracleRow> {
                let model = hw.with_users(cfg.placement(seed)?)?;
                let oracle = exhaustive_oracle(&model, &opt, &grid)?;
                let run = run_algorithm1(&model, &opt, seed)?;
                let (proposed, _) = best_power_on_grid(&model, &run.state.stack, &grid)?;
                Ok(OracleRow {
                    seed,
                    proposed_rate: proposed,
                    oracle_rate: oracle.rate,
                    ratio: proposed / oracle.rate,
                    stacks_searched: oracle.stacks_searched,
                })
            };
            inner().map_err(|e| e.in_run(format!("oracle check seed={seed}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.system.k = 2;
        c.system.m = 2;
        c.system.n = 4;
        c.system.l = 2;
        c.system.b.0 = vec![Resolution::Bits(1), Resolution::Continuous];
        c.optimizer.max_outer = 5;
        c.run.seeds = vec![1, 2, 3];
        c.run.n_mc = 0;
        c.run.layers = vec![1, 2];
        c.run.timing_repetitions = 2;
        c
    }

    #[test]
    fn convergence_shape_and_monotone_mean() {
        let s = run_convergence_study(&small()).unwrap();
        assert_eq!(s.rows.len(), 5 * 2);
        assert_eq!(s.records.len(), 3 * 2);
        let first: Vec<_> = s.rows.iter().filter(|r| r.b == Resolution::Bits(1)).collect();
        assert!(first.windows(2).all(|w| w[1].mean_rate >= w[0].mean_rate));
        assert_eq!(first.last().unwrap().iteration, 5);
    }

    #[test]
    fn convergence_is_thread_count_independent() {
        let cfg = small();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| run_convergence_study(&cfg)).unwrap();
        let b = run_convergence_study(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn layer_sweep_shape() {
        let mut cfg = small();
        cfg.run.n_mc = 16;
        let s = run_layer_sweep(&cfg, &[1, 2]).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!((s.rows[0].layers, s.rows[3].layers), (1, 2));
        assert!(s.rows.iter().all(|r| r.mean_mc_rate.is_some()));
        assert!(run_layer_sweep(&cfg, &[2, 1]).is_err());
    }

    #[test]
    fn single_layer_sweep_matches_single_layer_cascade() {
        let cfg = small();
        let s = run_layer_sweep(&cfg, &[1]).unwrap();
        assert!(s.records.iter().all(|r| r.layers == 1));
    }

    #[test]
    fn timing_has_one_row_per_layer_count() {
        let rows = run_timing_study(&small(), &[1, 2]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.repetitions == 2 && r.mean_total_s > 0.0));
    }

    #[test]
    fn oracle_check_dominates() {
        let mut cfg = small();
        cfg.system.n = 2;
        cfg.system.l = 1;
        for row in run_oracle_check(&cfg).unwrap() {
            assert!(row.proposed_rate <= row.oracle_rate);
            assert_eq!(row.stacks_searched, 4);
        }
    }
}
