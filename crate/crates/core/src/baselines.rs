//! Reference points for the optimiser: random on-grid phases with an equal
//! power split, and exhaustive search over all 1-bit stacks at toy scale.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::cascade::{effective_vectors, PhaseStack, Resolution};
use crate::channel::ChannelModel;
use crate::optimizer::OptimizerConfig;
use crate::rate::{surrogate_from_effective, PowerAlloc};
use crate::rng::{self, Purpose};
use crate::{experiments, Error, Result};

/// Largest search space the oracle accepts, in stacks.
pub const MAX_ORACLE_STACKS: u64 = 1 << 12;
/// Non-uniform splits added to the equal split on the oracle power grid.
pub const EXTRA_SPLITS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub name: String,
    pub surrogate_rate: f64,
    pub config_hash: String,
    pub seed: u64,
}

fn baseline_hash(name: &str, model: &ChannelModel, cfg: &OptimizerConfig) -> String {
    experiments::digest(&format!(
        "{name}|n={}|l={}|k={}|b={}|p_max={:e}|beta={:?}|sigma2={:?}",
        model.n,
        model.layers,
        model.users(),
        cfg.resolution,
        cfg.p_max,
        model.beta,
        model.sigma2
    ))
}

/// Phases uniform on the grid (or on `[0, 2 pi)`), power `sqrt(P_max / K)`.
pub fn random_phase_baseline(model: &ChannelModel, cfg: &OptimizerConfig, seed: u64) -> Result<BaselineResult> {
    cfg.validate()?;
    let mut prng = rng::stream(seed, Purpose::Baseline);
    let stack = PhaseStack::random(cfg.resolution, model.layers, model.n, &mut prng);
    let power = PowerAlloc::uniform(model.users(), cfg.p_max);
    let eff = effective_vectors(&stack, model)?;
    let rate = surrogate_from_effective(model, &eff, &power.p)?.surrogate_sum_rate;
    Ok(BaselineResult {
        name: "random-phase".into(),
        surrogate_rate: rate,
        config_hash: baseline_hash("random-phase", model, cfg),
        seed,
    })
}

/// Candidate power allocations: the equal split, then the one-hot vertices,
/// then flat-Dirichlet splits from a fixed stream, `1 + EXTRA_SPLITS` in all.
pub fn oracle_power_grid(k: usize, p_max: f64) -> Vec<PowerAlloc> {
    let mut fractions: Vec<Vec<f64>> = vec![vec![1.0 / k as f64; k]];
    for i in 0..k.min(EXTRA_SPLITS) {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        fractions.push(v);
    }
    let mut prng = rng::stream(0, Purpose::PowerGrid);
    while fractions.len() < 1 + EXTRA_SPLITS {
        let e: Vec<f64> = (0..k).map(|_| prng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = e.iter().sum();
        fractions.push(e.iter().map(|x| x / s).collect());
    }
    fractions
        .into_iter()
        .map(|f| {
            let p = f.iter().map(|x| (x * p_max).sqrt()).collect();
            let mut alloc = PowerAlloc { p, p_max };
            if !alloc.is_feasible() {
                let s = (p_max / alloc.total()).sqrt();
                alloc.p.iter_mut().for_each(|x| *x *= s);
            }
            alloc
        })
        .collect()
}

/// Best surrogate rate of a fixed stack over a power grid; ties go to the
/// earlier grid entry.
pub fn best_power_on_grid(model: &ChannelModel, stack: &PhaseStack, grid: &[PowerAlloc]) -> Result<(f64, usize)> {
    let eff = effective_vectors(stack, model)?;
    let mut best = (f64::NEG_INFINITY, 0);
    for (j, power) in grid.iter().enumerate() {
        let r = surrogate_from_effective(model, &eff, &power.p)?.surrogate_sum_rate;
        if r > best.0 {
            best = (r, j);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub rate: f64,
    pub stack: PhaseStack,
    pub power: PowerAlloc,
    /// Position of the maximiser in the enumeration order.
    pub stack_index: u64,
    pub stacks_searched: u64,
}

/// Stack number `index`: bit `l * N + n` is the grid index of atom `n` of
/// layer `l`.
fn stack_from_index(index: u64, layers: usize, n: usize) -> Result<PhaseStack> {
    let indices = (0..layers)
        .map(|l| (0..n).map(|i| ((index >> (l * n + i)) & 1) as u32).collect())
        .collect();
    PhaseStack::from_indices(Resolution::Bits(1), indices)
}

/// Exhaustive search over every 1-bit stack and the given power grid.
pub fn exhaustive_oracle(model: &ChannelModel, cfg: &OptimizerConfig, grid: &[PowerAlloc]) -> Result<OracleResult> {
    if cfg.resolution != Resolution::Bits(1) {
        return Err(Error::InvalidParameter("the oracle enumerates 1-bit stacks only".into()));
    }
    if model.n > 3 || model.layers > 2 || model.users() > 2 {
        return Err(Error::InvalidParameter(format!(
            "oracle limited to N<=3, L<=2, K<=2 (got N={}, L={}, K={})",
            model.n,
            model.layers,
            model.users()
        )));
    }
    let bits = model.n * model.layers;
    if bits > 12 || (1u64 << bits) > MAX_ORACLE_STACKS {
        return Err(Error::InvalidParameter(format!("search space 2^{bits} too large")));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("power grid is empty".into()));
    }
    let total = 1u64 << bits;
    let scored: Vec<(f64, u64, usize)> = (0..total)
        .into_par_iter()
        .map(|s| {
            let stack = stack_from_index(s, model.layers, model.n)?;
            let (r, j) = best_power_on_grid(model, &stack, grid)?;
            Ok((r, s, j))
        })
        .collect::<Result<_>>()?;
    // strict comparison keeps the smallest stack index among equal rates
    let (rate, stack_index, j) = scored
        .into_iter()
        .fold((f64::NEG_INFINITY, 0, 0), |best, c| if c.0 > best.0 { c } else { best });
    Ok(OracleResult {
        rate,
        stack: stack_from_index(stack_index, model.layers, model.n)?,
        power: grid[j].clone(),
        stack_index,
        stacks_searched: total,
    })
}
