//! Per-layer phase optimisation.
//!
//! With power, receivers and weights fixed, the WMMSE objective restricted to
//! layer `l` is the quadratic `phi^H B phi - 2 Re{d^H phi}` plus a constant.
//! The unit-modulus / discrete-phase constraint is handled by ADMM: a
//! regularised linear solve, a projection onto the phase grid and a scaled
//! dual update.

use std::f64::consts::TAU;

use nalgebra::linalg::Cholesky;
use num_complex::Complex64;

use crate::cascade::{LayerSweep, Resolution};
use crate::channel::ChannelModel;
use crate::rate::Receivers;
use crate::{CMat, CVec, Error, Result};

/// Layer-restricted objective `phi^H B phi - 2 Re{d^H phi}`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub b: CMat,
    pub d: CVec,
}

impl Quadratic {
    pub fn value(&self, phi: &CVec) -> f64 {
        phi.dotc(&(&self.b * phi)).re - 2.0 * self.d.dotc(phi).re
    }

    /// Gradient with respect to `conj(phi)`, scaled by two: `2 (B phi - d)`.
    pub fn gradient(&self, phi: &CVec) -> CVec {
        (&self.b * phi - &self.d) * Complex64::new(2.0, 0.0)
    }

    /// Norm of the gradient projected onto the tangent space of the
    /// unit-modulus torus at `phi`.
    pub fn tangent_gradient_norm(&self, phi: &CVec) -> f64 {
        let g = self.gradient(phi);
        g.iter()
            .zip(phi.iter())
            .map(|(gn, pn)| {
                let radial = (gn * pn.conj()).re;
                (gn - pn * radial).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.b.diagonal().iter().map(|z| z.re).sum()
    }
}

/// Builds `B` and `d` for the sweep's current layer.
///
/// With `C_i = S diag(v_i)` (suffix product `S`, prefix vector `v_i`) and
/// `M = sum_k rho_k |u_k|^2 R_k`, `B = sum_i diag(conj v_i) S^H M S diag(v_i)`,
/// formed as `(S^H M S) .* sum_i conj(v_i) v_i^T`.
pub fn quadratic_from_sweep(model: &ChannelModel, rx: &Receivers, sweep: &LayerSweep) -> Quadratic {
    let n = model.n;
    let s = sweep.suffix();
    let weight: f64 = (0..model.users())
        .map(|k| rx.rho[k] * rx.u[k].norm_sqr() * model.beta[k])
        .sum();
    let a = s.adjoint() * (&model.r * s) * Complex64::new(weight, 0.0);

    let mut outer = CMat::zeros(n, n);
    for v in sweep.prefix() {
        outer += v.conjugate() * v.transpose();
    }
    let mut b = a.component_mul(&outer);
    // exact Hermitian symmetry for the Cholesky factorisation
    b = (&b + b.adjoint()) * Complex64::new(0.5, 0.0);

    let mut d = CVec::zeros(n);
    for k in 0..model.users() {
        let coeff = rx.u[k] * rx.rho[k];
        if coeff == Complex64::new(0.0, 0.0) {
            continue;
        }
        let white = (&model.r_sqrt * &rx.direction[k]) * Complex64::new(model.beta[k].sqrt(), 0.0);
        let back = s.adjoint() * white;
        d += back.component_mul(&sweep.prefix()[k].conjugate()) * coeff;
    }
    Quadratic { b, d }
}

/// `B` and `d` for `layer`, computed from scratch.
pub fn build_quadratic(
    model: &ChannelModel,
    rx: &Receivers,
    stack: &crate::cascade::PhaseStack,
    power: &[f64],
    layer: usize,
) -> Result<Quadratic> {
    if layer >= model.layers {
        return Err(Error::InvalidParameter(format!("layer {layer} out of range")));
    }
    let mut sweep = LayerSweep::new(stack, model, power)?;
    while sweep.layer() < layer {
        sweep.advance(stack, model);
    }
    Ok(quadratic_from_sweep(model, rx, &sweep))
}

/// Nearest point of the phase grid to `angle` (radians). Returns the grid
/// index and its angle; ties go to the smaller index.
pub fn nearest_grid_angle(angle: f64, levels: u32) -> (u32, f64) {
    let q = levels as f64;
    let a = angle.rem_euclid(TAU);
    let t = a / TAU * q;
    let lower = t.floor();
    let frac = t - lower;
    let lo = (lower as u32) % levels;
    let hi = (lo + 1) % levels;
    let idx = if frac < 0.5 {
        lo
    } else if frac > 0.5 {
        hi
    } else {
        lo.min(hi)
    };
    (idx, TAU * idx as f64 / q)
}

/// Elementwise projection onto unit-modulus phasors on the resolution's grid.
/// Zero entries map to phase zero.
pub fn project_discrete(z: &CVec, resolution: Resolution) -> CVec {
    z.map(|zn| project_scalar(zn, resolution))
}

pub fn project_scalar(z: Complex64, resolution: Resolution) -> Complex64 {
    if z == Complex64::new(0.0, 0.0) {
        return Complex64::new(1.0, 0.0);
    }
    match resolution.levels() {
        None => z / z.norm(),
        Some(q) => Complex64::from_polar(1.0, nearest_grid_angle(z.arg(), q).1),
    }
}

/// Splitting variables carried between ADMM iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: CVec,
    pub omega: CVec,
    pub beta_penalty: f64,
}

impl AdmmState {
    pub fn start(x: CVec, beta_penalty: f64) -> Self {
        let n = x.len();
        Self {
            x,
            omega: CVec::zeros(n),
            beta_penalty,
        }
    }
}

/// `(B + beta I)` factorised once per layer.
pub struct AdmmSolver {
    chol: Cholesky<Complex64, nalgebra::Dyn>,
    d: CVec,
    beta: f64,
}

impl AdmmSolver {
    pub fn new(quad: &Quadratic, beta_penalty: f64) -> Result<Self> {
        if !(beta_penalty > 0.0) || !beta_penalty.is_finite() {
            return Err(Error::InvalidParameter(format!("ADMM penalty must be positive, got {beta_penalty}")));
        }
        let n = quad.b.nrows();
        let mut m = quad.b.clone();
        for i in 0..n {
            m[(i, i)] += beta_penalty;
        }
        let chol = Cholesky::new(m)
            .ok_or_else(|| Error::Numeric("B + beta I is not positive definite".into()))?;
        Ok(Self {
            chol,
            d: quad.d.clone(),
            beta: beta_penalty,
        })
    }

    /// Least-squares step: `(B + beta I)^{-1} (d + beta (x + omega))`.
    pub fn solve(&self, x: &CVec, omega: &CVec) -> CVec {
        let rhs = &self.d + (x + omega) * Complex64::new(self.beta, 0.0);
        self.chol.solve(&rhs)
    }

    /// One full iteration; returns the unconstrained `phi` iterate.
    pub fn step(&self, st: &mut AdmmState, resolution: Resolution) -> Result<CVec> {
        let phi = self.solve(&st.x, &st.omega);
        if phi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("non-finite ADMM iterate".into()));
        }
        st.x = project_discrete(&(&phi - &st.omega), resolution);
        st.omega += &st.x - &phi;
        Ok(phi)
    }
}

/// One ADMM iteration against `(B, d)`; factorises `B + beta I` each call.
pub fn admm_phase_step(st: &mut AdmmState, quad: &Quadratic, resolution: Resolution) -> Result<CVec> {
    AdmmSolver::new(quad, st.beta_penalty)?.step(st, resolution)
}
