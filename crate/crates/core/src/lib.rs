//! Simulator and optimizer for stacked-intelligent-metasurface (SIM) aided
//! multiuser MISO downlink beamforming under statistical CSI.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: antenna and meta-atom layout, pairwise propagation metrics
//! - [`channel`]: Rayleigh-Sommerfeld propagation operators, spatial
//!   correlation, user placement and correlated Rayleigh channel draws
//! - [`cascade`]: discrete phase stack, wave-domain cascade `G` and the
//!   per-layer linearisation used by the phase optimiser
//! - [`rate`]: closed-form sum-rate surrogate, Monte Carlo ergodic rate and
//!   the weighted-MMSE objective
//! - [`optimizer`]: alternating WMMSE / power / ADMM optimisation
//! - [`baselines`]: random-phase control arm and an exhaustive toy oracle
//! - [`experiments`]: config ingestion, studies and CSV emission

pub mod baselines;
pub mod cascade;
pub mod channel;
mod error;
pub mod experiments;
pub mod geometry;
pub mod optimizer;
pub mod rate;
pub mod rng;
pub mod units;

pub use baselines::{exhaustive_oracle, random_phase_baseline, BaselineResult, OracleResult};
pub use error::{Error, Result};

pub use cascade::{materialize_g, CascadeOperator, PhaseStack, Resolution};
pub use channel::{ChannelModel, UserPlacement};
pub use geometry::{GeometryParams, LatticeStep, SimGeometry};
pub use optimizer::{run_algorithm1, OptimizerConfig, RunOutcome, WmmseState};
pub use rate::{PowerAlloc, RateReport};

/// Dense complex matrix used throughout.
pub type CMat = nalgebra::DMatrix<num_complex::Complex64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<num_complex::Complex64>;
pub use num_complex::Complex64;
