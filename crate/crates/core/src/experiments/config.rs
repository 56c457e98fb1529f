//! Experiment configuration file.
//!
//! TOML, five tables. Only the `system` counts and `b` are required:
//!
//! ```toml
//! [system]
//! K = 5                  # users
//! M = 5                  # BS antennas, must equal K
//! N = 49                 # meta-atoms per layer
//! N_r = 7                # atoms per lattice row (default: largest divisor of N <= sqrt(N))
//! L = 3                  # layers (convergence and oracle-check studies)
//! b = [1, 2, 3, "continuous"]   # or a single value
//! f_carrier = 2e9        # Hz
//! thickness = 0.75       # metres (default: 5 wavelengths)
//! lattice_step = "half"  # or "full"
//!
//! [power]
//! P_max_dBm = 30.0
//! sigma2_dBm = -80.0
//!
//! [users]
//! r_in = 60.0
//! r_out = 80.0
//!
//! [optimizer]
//! max_outer = 50
//! outer_tol = 1e-4
//! power_tol = 1e-5
//! power_max_inner = 50
//! admm_tol = 1e-5
//! admm_max_inner = 100
//! beta_policy = "trace-scaled"  # or "fixed"
//! beta_scale = 1.0              # factor on tr(B)/N, or the fixed penalty
//! acceptance_guard = true
//! refresh_per_layer = false
//!
//! [run]
//! seeds = [1, 2, 3]
//! n_mc = 2000            # Monte Carlo draws per run, 0 disables
//! output_dir = "out"
//! layers = [1, 2, 3, 4, 5, 6, 7]   # layer sweep and timing study
//! timing_repetitions = 30
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cascade::Resolution;
use crate::channel::{assign_users, ChannelModel};
use crate::geometry::{GeometryParams, LatticeStep, SimGeometry};
use crate::optimizer::{OptimizerConfig, PenaltyPolicy};
use crate::{units, Error, Result};

const REQUIRED: [&str; 5] = ["system.K", "system.M", "system.N", "system.L", "system.b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Resolutions(pub Vec<Resolution>);

impl Serialize for Resolutions {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Resolutions {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            One(Resolution),
            Many(Vec<Resolution>),
        }
        Ok(match OneOrMany::deserialize(d)? {
            OneOrMany::One(r) => Resolutions(vec![r]),
            OneOrMany::Many(v) => Resolutions(v),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "N_r", default, skip_serializing_if = "Option::is_none")]
    pub n_r: Option<usize>,
    #[serde(rename = "L")]
    pub l: usize,
    pub b: Resolutions,
    #[serde(default = "default_carrier")]
    pub f_carrier: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness: Option<f64>,
    #[serde(default)]
    pub lattice_step: LatticeStep,
}

fn default_carrier() -> f64 {
    2e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    #[serde(rename = "P_max_dBm", default = "default_p_max")]
    pub p_max_dbm: f64,
    #[serde(rename = "sigma2_dBm", default = "default_sigma2")]
    pub sigma2_dbm: f64,
    /// Filled from the dBm values at load.
    #[serde(skip)]
    pub p_max_w: f64,
    #[serde(skip)]
    pub sigma2_w: f64,
}

fn default_p_max() -> f64 {
    30.0
}

fn default_sigma2() -> f64 {
    -80.0
}

impl Default for PowerSection {
    fn default() -> Self {
        let mut p = Self {
            p_max_dbm: default_p_max(),
            sigma2_dbm: default_sigma2(),
            p_max_w: 0.0,
            sigma2_w: 0.0,
        };
        p.convert();
        p
    }
}

impl PowerSection {
    fn convert(&mut self) {
        self.p_max_w = units::dbm_to_watts(self.p_max_dbm);
        self.sigma2_w = units::dbm_to_watts(self.sigma2_dbm);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsersSection {
    pub r_in: f64,
    pub r_out: f64,
}

impl Default for UsersSection {
    fn default() -> Self {
        Self { r_in: 60.0, r_out: 80.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaPolicy {
    TraceScaled,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub max_outer: usize,
    pub outer_tol: f64,
    pub power_tol: f64,
    pub power_max_inner: usize,
    pub admm_tol: f64,
    pub admm_max_inner: usize,
    pub beta_policy: BetaPolicy,
    pub beta_scale: f64,
    pub acceptance_guard: bool,
    pub refresh_per_layer: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::new(Resolution::Bits(1), 1.0);
        Self {
            max_outer: d.max_outer,
            outer_tol: d.outer_tol,
            power_tol: d.power_tol,
            power_max_inner: d.power_max_inner,
            admm_tol: d.admm_tol,
            admm_max_inner: d.admm_max_inner,
            beta_policy: BetaPolicy::TraceScaled,
            beta_scale: 1.0,
            acceptance_guard: d.acceptance_guard,
            refresh_per_layer: d.refresh_per_layer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub n_mc: usize,
    pub output_dir: PathBuf,
    pub layers: Vec<usize>,
    pub timing_repetitions: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: (1..=20).collect(),
            n_mc: 2000,
            output_dir: PathBuf::from("out"),
            layers: (1..=7).collect(),
            timing_repetitions: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub power: PowerSection,
    #[serde(default)]
    pub users: UsersSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub run: RunSection,
}

impl Default for ExperimentConfig {
    /// Desk-scale setup: `K = M = 5`, `N = 49`, `L = 3`, all four resolutions.
    fn default() -> Self {
        Self {
            system: SystemSection {
                k: 5,
                m: 5,
                n: 49,
                n_r: None,
                l: 3,
                b: Resolutions(vec![
                    Resolution::Bits(1),
                    Resolution::Bits(2),
                    Resolution::Bits(3),
                    Resolution::Continuous,
                ]),
                f_carrier: default_carrier(),
                thickness: None,
                lattice_step: LatticeStep::Half,
            },
            power: PowerSection::default(),
            users: UsersSection::default(),
            optimizer: OptimizerSection::default(),
            run: RunSection::default(),
        }
    }
}

fn lookup<'a>(table: &'a toml::Table, path: &str) -> Option<&'a toml::Value> {
    let mut parts = path.split('.');
    let mut v = table.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

fn check(ok: bool, path: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, message()))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("", e.message()))?;
        for path in REQUIRED {
            if lookup(&table, path).is_none() {
                return Err(Error::config(path, "missing required field"));
            }
        }
        let mut cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.power.convert();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        super::digest(&self.to_toml_string())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        check(s.k > 0, "system.K", || "need at least one user".into())?;
        check(s.m == s.k, "system.M", || format!("M={} must equal K={}", s.m, s.k))?;
        check(s.n > 0, "system.N", || "need at least one atom".into())?;
        if let Some(n_r) = s.n_r {
            check(n_r > 0 && s.n % n_r == 0, "system.N_r", || format!("N_r={n_r} must divide N={}", s.n))?;
        }
        check(s.l > 0, "system.L", || "need at least one layer".into())?;
        check(!s.b.0.is_empty(), "system.b", || "need at least one resolution".into())?;
        for r in &s.b.0 {
            r.validate().map_err(|e| Error::config("system.b", e.to_string()))?;
        }
        check(s.f_carrier > 0.0 && s.f_carrier.is_finite(), "system.f_carrier", || {
            format!("must be positive, got {}", s.f_carrier)
        })?;
        if let Some(t) = s.thickness {
            check(t > 0.0 && t.is_finite(), "system.thickness", || format!("must be positive, got {t}"))?;
        }
        check(self.power.p_max_dbm.is_finite(), "power.P_max_dBm", || "must be finite".into())?;
        check(self.power.sigma2_dbm.is_finite(), "power.sigma2_dBm", || "must be finite".into())?;
        let u = &self.users;
        check(u.r_in > 0.0 && u.r_in < u.r_out && u.r_out.is_finite(), "users", || {
            format!("need 0 < r_in < r_out, got {} and {}", u.r_in, u.r_out)
        })?;
        let o = &self.optimizer;
        check(o.beta_scale > 0.0 && o.beta_scale.is_finite(), "optimizer.beta_scale", || {
            format!("must be positive, got {}", o.beta_scale)
        })?;
        self.optimizer_config(Resolution::Bits(1))
            .validate()
            .map_err(|e| Error::config("optimizer", e.to_string()))?;
        let r = &self.run;
        check(!r.seeds.is_empty(), "run.seeds", || "need at least one seed".into())?;
        check(r.n_mc != 1, "run.n_mc", || "use 0 (disabled) or at least 2 draws".into())?;
        check(!r.layers.is_empty() && r.layers.iter().all(|&l| l > 0), "run.layers", || {
            "need a nonempty list of positive layer counts".into()
        })?;
        check(r.layers.windows(2).all(|w| w[0] < w[1]), "run.layers", || "must be strictly ascending".into())?;
        check(r.timing_repetitions > 0, "run.timing_repetitions", || "must be positive".into())?;
        Ok(())
    }

    pub fn resolutions(&self) -> &[Resolution] {
        &self.system.b.0
    }

    pub fn n_r(&self) -> usize {
        self.system.n_r.unwrap_or_else(|| {
            let n = self.system.n;
            (1..=n).take_while(|d| d * d <= n).filter(|d| n % d == 0).last().unwrap_or(1)
        })
    }

    pub fn geometry_params(&self, layers: usize) -> GeometryParams {
        let s = &self.system;
        let lambda = units::wavelength(s.f_carrier);
        let mut g = GeometryParams::standard(s.m, s.n, self.n_r(), layers);
        g.carrier_hz = s.f_carrier;
        g.dx = lambda / 2.0;
        g.dy = lambda / 2.0;
        g.thickness = s.thickness.unwrap_or(5.0 * lambda);
        g.lattice_step = s.lattice_step;
        g
    }

    /// Hardware model for `layers` layers, with users placed by `placement_seed`.
    pub fn channel_model(&self, layers: usize, placement_seed: u64) -> Result<ChannelModel> {
        let geom = SimGeometry::build(&self.geometry_params(layers))?;
        ChannelModel::build(&geom, self.placement(placement_seed)?)
    }

    pub fn placement(&self, seed: u64) -> Result<crate::channel::UserPlacement> {
        assign_users(seed, self.system.k, self.users.r_in, self.users.r_out, self.power.sigma2_w)
    }

    pub fn optimizer_config(&self, resolution: Resolution) -> OptimizerConfig {
        let o = &self.optimizer;
        let mut c = OptimizerConfig::new(resolution, self.power.p_max_w);
        c.max_outer = o.max_outer;
        c.outer_tol = o.outer_tol;
        c.power_tol = o.power_tol;
        c.power_max_inner = o.power_max_inner;
        c.admm_tol = o.admm_tol;
        c.admm_max_inner = o.admm_max_inner;
        c.penalty = match o.beta_policy {
            BetaPolicy::TraceScaled => PenaltyPolicy::TraceScaled(o.beta_scale),
            BetaPolicy::Fixed => PenaltyPolicy::Fixed(o.beta_scale),
        };
        c.acceptance_guard = o.acceptance_guard;
        c.refresh_per_layer = o.refresh_per_layer;
        c
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config file: {e}")))?;
    ExperimentConfig::from_toml_str(&text)
}
