//! Propagation operators and the statistical user-channel model.
//!
//! Inter-layer and antenna-to-layer coefficients follow Rayleigh-Sommerfeld
//! diffraction between rectangular apertures of size `d_x * d_y`. Users see
//! correlated Rayleigh fading `h_k ~ CN(0, beta_k R)` behind the last layer,
//! with `R` the isotropic-scattering sinc kernel over the layer lattice.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{metrics_between, SimGeometry};
use crate::rng::{self, Purpose};
use crate::units;
use crate::{CMat, CVec, Error, Result};

/// Rayleigh-Sommerfeld transmission coefficient for one aperture-to-aperture hop.
pub fn rs_coefficient(geom: &SimGeometry, distance: f64, cos_incidence: f64) -> Result<Complex64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "propagation distance must be positive, got {distance}"
        )));
    }
    Ok(rs_unchecked(geom.dx * geom.dy, geom.wavelength, distance, cos_incidence))
}

fn rs_unchecked(area: f64, lambda: f64, d: f64, cos: f64) -> Complex64 {
    let amplitude = area * cos / d;
    let kernel = Complex64::new(1.0 / (2.0 * PI * d), -1.0 / lambda);
    let phase = Complex64::from_polar(1.0, 2.0 * PI * d / lambda);
    kernel * phase * amplitude
}

/// Deterministic propagation operators of a SIM.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// `w[i]` maps layer `i` signals to layer `i + 1` (so `L - 1` entries).
    pub w: Vec<CMat>,
    /// `w1[k]`: antenna `k` to every atom of the first layer.
    pub w1: Vec<CVec>,
}

pub fn build_propagation(geom: &SimGeometry) -> Propagation {
    let area = geom.dx * geom.dy;
    let lambda = geom.wavelength;
    let w = (1..geom.l)
        .map(|layer| {
            let tx = &geom.atom_positions[layer - 1];
            let rx = &geom.atom_positions[layer];
            CMat::from_fn(geom.n, geom.n, |to, from| {
                let m = metrics_between(tx[from], rx[to]);
                rs_unchecked(area, lambda, m.distance, m.cos_incidence)
            })
        })
        .collect();
    let first = &geom.atom_positions[0];
    let w1 = geom
        .antenna_positions
        .iter()
        .map(|&ant| {
            CVec::from_iterator(
                geom.n,
                first.iter().map(|&atom| {
                    let m = metrics_between(ant, atom);
                    rs_unchecked(area, lambda, m.distance, m.cos_incidence)
                }),
            )
        })
        .collect();
    Propagation { w, w1 }
}

/// Normalised sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Isotropic-scattering spatial correlation over the layer lattice.
pub fn build_correlation(geom: &SimGeometry) -> CMat {
    let u = &geom.lattice;
    CMat::from_fn(geom.n, geom.n, |a, b| {
        let d = ((u[a][1] - u[b][1]).powi(2) + (u[a][2] - u[b][2]).powi(2)).sqrt();
        Complex64::new(sinc(2.0 * d / geom.wavelength), 0.0)
    })
}

/// Hermitian PSD square root. Eigenvalues in `[-1e-8 * N, 0)` are clamped to
/// zero; anything more negative is rejected.
pub fn psd_sqrt(r: &CMat) -> Result<CMat> {
    let n = r.nrows();
    let eig = SymmetricEigen::new(r.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * n as f64 {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let v = &eig.eigenvectors;
    let roots = CVec::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&e| Complex64::new(e.max(0.0).sqrt(), 0.0)),
    );
    let scaled = CMat::from_fn(n, n, |i, j| v[(i, j)] * roots[j]);
    Ok(scaled * v.adjoint())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserPlacement {
    pub distances: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
}

/// Drops `k` users with uniform area density in the annulus `[r_in, r_out]`.
pub fn assign_users(seed: u64, k: usize, r_in: f64, r_out: f64, sigma2: f64) -> Result<UserPlacement> {
    if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "annulus radii must satisfy 0 < r_in < r_out (got {r_in}, {r_out})"
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("noise power must be positive, got {sigma2}")));
    }
    let mut rng = rng::stream(seed, Purpose::UserPlacement);
    let distances: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = rng.random();
            (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt()
        })
        .collect();
    Ok(UserPlacement::from_distances(distances, sigma2))
}

impl UserPlacement {
    pub fn from_distances(distances: Vec<f64>, sigma2: f64) -> Self {
        let beta = distances.iter().map(|&d| units::path_loss(d)).collect();
        let sigma2 = vec![sigma2; distances.len()];
        Self { distances, beta, sigma2 }
    }
}

/// Everything the rate and optimizer code needs about the physical system.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub n: usize,
    pub layers: usize,
    pub w: Vec<CMat>,
    pub w1: Vec<CVec>,
    pub r: CMat,
    pub r_sqrt: CMat,
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub user_distances: Vec<f64>,
}

impl ChannelModel {
    /// Requires one antenna per user: antenna `k` feeds user `k`'s stream.
    pub fn build(geom: &SimGeometry, users: UserPlacement) -> Result<Self> {
        let k = users.beta.len();
        if k != geom.m {
            return Err(Error::InvalidParameter(format!(
                "antenna count M={} must equal user count K={k}",
                geom.m
            )));
        }
        if users.sigma2.len() != k || users.distances.len() != k {
            return Err(Error::DimensionMismatch("user placement vectors differ in length".into()));
        }
        if users.beta.iter().any(|&b| !(b > 0.0)) || users.sigma2.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("path losses and noise powers must be positive".into()));
        }
        let Propagation { w, w1 } = build_propagation(geom);
        let r = build_correlation(geom);
        let r_sqrt = psd_sqrt(&r)?;
        Ok(Self {
            n: geom.n,
            layers: geom.l,
            w,
            w1,
            r,
            r_sqrt,
            beta: users.beta,
            sigma2: users.sigma2,
            user_distances: users.distances,
        })
    }

    pub fn users(&self) -> usize {
        self.beta.len()
    }

    /// Same hardware, different user drop.
    pub fn with_users(&self, users: UserPlacement) -> Result<Self> {
        let k = users.beta.len();
        if k != self.users() || users.sigma2.len() != k || users.distances.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "placement has {k} users, model has {}",
                self.users()
            )));
        }
        if users.beta.iter().any(|&b| !(b > 0.0)) || users.sigma2.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("path losses and noise powers must be positive".into()));
        }
        Ok(Self {
            beta: users.beta,
            sigma2: users.sigma2,
            user_distances: users.distances,
            ..self.clone()
        })
    }

    /// One draw of every user's channel, `h_k = sqrt(beta_k) R^{1/2} z`.
    pub fn sample_draw(&self, seed: u64, draw: u64) -> Vec<CVec> {
        let mut rng = rng::substream(seed, Purpose::MonteCarlo, draw);
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        self.beta
            .iter()
            .map(|&b| {
                let z = CVec::from_fn(self.n, |_, _| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re * scale, im * scale)
                });
                (&self.r_sqrt * z) * Complex64::new(b.sqrt(), 0.0)
            })
            .collect()
    }

    /// `n_draws` independent realisations; draw `t` depends only on `(seed, t)`.
    pub fn sample_channels(&self, seed: u64, n_draws: usize) -> Vec<Vec<CVec>> {
        (0..n_draws as u64).map(|t| self.sample_draw(seed, t)).collect()
    }
}
