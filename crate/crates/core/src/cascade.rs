//! Phase configuration of the metasurface stack and the wave-domain cascade
//! `G = Phi_L W_L ... Phi_2 W_2 Phi_1`.
//!
//! Layers are zero-based here: `Phi[0]` is the layer facing the antennas and
//! `model.w[l - 1]` carries layer `l - 1` to layer `l`.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::{CMat, CVec, Error, Result};

/// Phase resolution of every meta-atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    /// `2^b` equally spaced phases starting at zero.
    Bits(u32),
    Continuous,
}

impl Resolution {
    pub fn levels(self) -> Option<u32> {
        match self {
            Resolution::Bits(b) => Some(1 << b),
            Resolution::Continuous => None,
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Resolution::Bits(b) if !(1..=16).contains(&b) => Err(Error::InvalidParameter(format!(
                "bit depth must be in 1..=16, got {b}"
            ))),
            _ => Ok(()),
        }
    }

    /// Grid step in radians (discrete only).
    pub fn step(self) -> Option<f64> {
        self.levels().map(|q| TAU / q as f64)
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Bits(b) => write!(f, "{b}"),
            Resolution::Continuous => f.write_str("continuous"),
        }
    }
}

impl std::str::FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("continuous") || s.eq_ignore_ascii_case("inf") {
            return Ok(Resolution::Continuous);
        }
        let b: u32 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad resolution `{s}`")))?;
        let r = Resolution::Bits(b);
        r.validate()?;
        Ok(r)
    }
}

impl Serialize for Resolution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Resolution::Bits(b) => s.serialize_u32(*b),
            Resolution::Continuous => s.serialize_str("continuous"),
        }
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
        }
        let r = match Raw::deserialize(d)? {
            Raw::Int(b) => Resolution::Bits(b),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom)?,
        };
        r.validate().map_err(serde::de::Error::custom)?;
        Ok(r)
    }
}

/// `L x N` phase configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStack {
    resolution: Resolution,
    /// Grid indices; all zero in continuous mode.
    indices: Vec<Vec<u32>>,
    theta: Vec<Vec<f64>>,
    revision: u64,
}

impl PhaseStack {
    pub fn zeros(resolution: Resolution, layers: usize, n: usize) -> Self {
        Self {
            resolution,
            indices: vec![vec![0; n]; layers],
            theta: vec![vec![0.0; n]; layers],
            revision: 0,
        }
    }

    /// Uniform over the grid, or over `[0, 2 pi)` in continuous mode.
    pub fn random<R: Rng + ?Sized>(resolution: Resolution, layers: usize, n: usize, rng: &mut R) -> Self {
        let mut stack = Self::zeros(resolution, layers, n);
        for l in 0..layers {
            for i in 0..n {
                match resolution.levels() {
                    Some(q) => {
                        let t = rng.random_range(0..q);
                        stack.indices[l][i] = t;
                        stack.theta[l][i] = TAU * t as f64 / q as f64;
                    }
                    None => stack.theta[l][i] = rng.random_range(0.0..TAU),
                }
            }
        }
        stack
    }

    pub fn from_indices(resolution: Resolution, indices: Vec<Vec<u32>>) -> Result<Self> {
        let n = indices.first().map_or(0, Vec::len);
        let mut stack = Self::zeros(resolution, indices.len(), n);
        for (l, row) in indices.iter().enumerate() {
            stack.set_layer(l, row)?;
        }
        stack.revision = 0;
        Ok(stack)
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn layers(&self) -> usize {
        self.theta.len()
    }

    pub fn atoms(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    /// Incremented on every layer write; lets cached cascades detect staleness.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn indices(&self, layer: usize) -> &[u32] {
        &self.indices[layer]
    }

    pub fn theta(&self, layer: usize) -> &[f64] {
        &self.theta[layer]
    }

    fn check_layer(&self, layer: usize, len: usize) -> Result<()> {
        if layer >= self.layers() {
            return Err(Error::InvalidParameter(format!(
                "layer {layer} out of range (L={})",
                self.layers()
            )));
        }
        if len != self.atoms() {
            return Err(Error::DimensionMismatch(format!(
                "layer has {} atoms, got {len} values",
                self.atoms()
            )));
        }
        Ok(())
    }

    /// Writes grid indices for one layer (discrete mode only).
    pub fn set_layer(&mut self, layer: usize, new_indices: &[u32]) -> Result<()> {
        self.check_layer(layer, new_indices.len())?;
        let q = self.resolution.levels().ok_or_else(|| {
            Error::InvalidParameter("continuous stacks take angles, not indices".into())
        })?;
        if let Some(bad) = new_indices.iter().find(|&&t| t >= q) {
            return Err(Error::InvalidParameter(format!(
                "phase index {bad} out of range for {q} levels"
            )));
        }
        self.indices[layer].copy_from_slice(new_indices);
        for (th, &t) in self.theta[layer].iter_mut().zip(new_indices) {
            *th = TAU * t as f64 / q as f64;
        }
        self.revision += 1;
        Ok(())
    }

    /// Writes raw angles for one layer (continuous mode only).
    pub fn set_layer_angles(&mut self, layer: usize, angles: &[f64]) -> Result<()> {
        self.check_layer(layer, angles.len())?;
        if self.resolution != Resolution::Continuous {
            return Err(Error::InvalidParameter(
                "discrete stacks take grid indices, not angles".into(),
            ));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numeric("non-finite phase angle".into()));
        }
        self.theta[layer].copy_from_slice(angles);
        self.revision += 1;
        Ok(())
    }

    /// Writes a layer from unit-modulus phasors that already lie on this
    /// stack's grid (e.g. the output of [`crate::optimizer::project_discrete`]).
    pub fn set_layer_phasors(&mut self, layer: usize, phasors: &CVec) -> Result<()> {
        let angles: Vec<f64> = phasors.iter().map(|z| z.arg().rem_euclid(TAU)).collect();
        match self.resolution.levels() {
            None => self.set_layer_angles(layer, &angles),
            Some(q) => {
                let idx: Vec<u32> = angles
                    .iter()
                    .map(|&a| ((a / TAU * q as f64).round() as u32) % q)
                    .collect();
                self.set_layer(layer, &idx)
            }
        }
    }

    /// Diagonal of `Phi_l`.
    pub fn phi(&self, layer: usize) -> CVec {
        CVec::from_iterator(
            self.atoms(),
            self.theta[layer].iter().map(|&t| Complex64::from_polar(1.0, t)),
        )
    }

    /// Plain-text matrix: one line per layer, whitespace-separated. Discrete
    /// stacks write grid indices, continuous stacks write angles in radians.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in 0..self.layers() {
            let row: Vec<String> = match self.resolution {
                Resolution::Bits(_) => self.indices[l].iter().map(u32::to_string).collect(),
                Resolution::Continuous => self.theta[l].iter().map(f64::to_string).collect(),
            };
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, resolution: Resolution) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let parse_err = |e: &dyn fmt::Display| Error::InvalidParameter(format!("bad stack text: {e}"));
        match resolution {
            Resolution::Bits(_) => {
                let idx = rows
                    .iter()
                    .map(|r| r.split_whitespace().map(|t| t.parse::<u32>().map_err(|e| parse_err(&e))).collect())
                    .collect::<Result<Vec<Vec<u32>>>>()?;
                check_rectangular(&idx)?;
                Self::from_indices(resolution, idx)
            }
            Resolution::Continuous => {
                let th = rows
                    .iter()
                    .map(|r| r.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| parse_err(&e))).collect())
                    .collect::<Result<Vec<Vec<f64>>>>()?;
                check_rectangular(&th)?;
                let mut stack = Self::zeros(resolution, th.len(), th.first().map_or(0, Vec::len));
                for (l, row) in th.iter().enumerate() {
                    stack.set_layer_angles(l, row)?;
                }
                stack.revision = 0;
                Ok(stack)
            }
        }
    }
}

fn check_rectangular<T>(rows: &[Vec<T>]) -> Result<()> {
    match rows.first() {
        None => Err(Error::InvalidParameter("empty stack text".into())),
        Some(first) if rows.iter().any(|r| r.len() != first.len()) || first.is_empty() => {
            Err(Error::DimensionMismatch("ragged stack text".into()))
        }
        _ => Ok(()),
    }
}

/// `diag(phi) * m`.
pub(crate) fn scale_rows(phi: &CVec, m: &CMat) -> CMat {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= phi[i];
    }
    out
}

/// `m * diag(v)`.
pub(crate) fn scale_cols(m: &CMat, v: &CVec) -> CMat {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= v[j];
    }
    out
}

/// Materialised cascade plus each user's effective transmit vector `G w_k`.
#[derive(Debug, Clone)]
pub struct CascadeOperator {
    pub g: CMat,
    pub effective: Vec<CVec>,
    revision: u64,
}

impl CascadeOperator {
    pub fn is_stale(&self, stack: &PhaseStack) -> bool {
        self.revision != stack.revision()
    }
}

fn check_dims(stack: &PhaseStack, model: &ChannelModel) -> Result<()> {
    if stack.layers() != model.layers || stack.atoms() != model.n {
        return Err(Error::DimensionMismatch(format!(
            "stack is {}x{}, model is {}x{}",
            stack.layers(),
            stack.atoms(),
            model.layers,
            model.n
        )));
    }
    Ok(())
}

pub fn materialize_g(stack: &PhaseStack, model: &ChannelModel) -> Result<CascadeOperator> {
    check_dims(stack, model)?;
    let mut g = CMat::from_diagonal(&stack.phi(0));
    for l in 1..model.layers {
        g = scale_rows(&stack.phi(l), &(&model.w[l - 1] * g));
    }
    let effective = model.w1.iter().map(|w| &g * w).collect();
    Ok(CascadeOperator {
        g,
        effective,
        revision: stack.revision(),
    })
}

/// `G w_k` for every user without forming `G` (matrix-vector chain).
pub fn effective_vectors(stack: &PhaseStack, model: &ChannelModel) -> Result<Vec<CVec>> {
    check_dims(stack, model)?;
    Ok(model
        .w1
        .iter()
        .map(|w| {
            let mut v = stack.phi(0).component_mul(w);
            for l in 1..model.layers {
                v = stack.phi(l).component_mul(&(&model.w[l - 1] * v));
            }
            v
        })
        .collect())
}

/// Product of the layers above `layer`: `Phi_{L-1} W_{L-1} ... Phi_{l+1} W_{l+1}`.
fn suffix_product(stack: &PhaseStack, model: &ChannelModel, layer: usize) -> CMat {
    let mut s = CMat::identity(model.n, model.n);
    for j in (layer + 1)..model.layers {
        s = scale_rows(&stack.phi(j), &(&model.w[j - 1] * s));
    }
    // built bottom-up so the topmost layer ends up leftmost
    s
}

/// Signal arriving at `layer` from user `i`'s antenna, before `Phi_layer`.
fn prefix_vector(stack: &PhaseStack, model: &ChannelModel, layer: usize, user: usize, p: f64) -> CVec {
    let mut v = &model.w1[user] * Complex64::new(p, 0.0);
    for j in 0..layer {
        v = &model.w[j] * stack.phi(j).component_mul(&v);
    }
    v
}

/// `C` such that `C * phi_layer = G w_user p`.
pub fn linearize_layer(
    stack: &PhaseStack,
    model: &ChannelModel,
    layer: usize,
    user: usize,
    p: f64,
) -> Result<CMat> {
    check_dims(stack, model)?;
    if layer >= model.layers || user >= model.users() {
        return Err(Error::InvalidParameter(format!(
            "layer {layer} / user {user} out of range"
        )));
    }
    let v = prefix_vector(stack, model, layer, user, p);
    if layer + 1 == model.layers {
        return Ok(CMat::from_diagonal(&v));
    }
    Ok(scale_cols(&suffix_product(stack, model, layer), &v))
}

/// Cached factors for one ascending sweep over the layers.
///
/// The suffix products above each layer are formed once per sweep; layers
/// below the current one are folded into per-user prefix vectors as the sweep
/// advances, so each step costs `O(K N^2)` plus whatever the caller does with
/// the suffix matrix.
#[derive(Debug, Clone)]
pub struct LayerSweep {
    suffix: Vec<CMat>,
    prefix: Vec<CVec>,
    layer: usize,
}

impl LayerSweep {
    pub fn new(stack: &PhaseStack, model: &ChannelModel, power: &[f64]) -> Result<Self> {
        check_dims(stack, model)?;
        if power.len() != model.users() {
            return Err(Error::DimensionMismatch("power vector length differs from K".into()));
        }
        let layers = model.layers;
        let mut suffix = vec![CMat::identity(model.n, model.n); layers];
        for l in (0..layers.saturating_sub(1)).rev() {
            suffix[l] = &suffix[l + 1] * scale_rows(&stack.phi(l + 1), &model.w[l]);
        }
        let prefix = model
            .w1
            .iter()
            .zip(power)
            .map(|(w, &p)| w * Complex64::new(p, 0.0))
            .collect();
        Ok(Self { suffix, prefix, layer: 0 })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    /// Product of all layers above the current one.
    pub fn suffix(&self) -> &CMat {
        &self.suffix[self.layer]
    }

    /// Per-user input to the current layer (power included).
    pub fn prefix(&self) -> &[CVec] {
        &self.prefix
    }

    pub fn linearization(&self, user: usize) -> CMat {
        scale_cols(self.suffix(), &self.prefix[user])
    }

    /// `G w_i p_i` for every user with `phi` substituted for the current layer.
    pub fn outputs(&self, phi: &CVec) -> Vec<CVec> {
        let s = self.suffix();
        self.prefix.iter().map(|v| s * v.component_mul(phi)).collect()
    }

    /// Moves to the next layer using the (possibly updated) phases of the
    /// current one. Returns `false` after the last layer.
    pub fn advance(&mut self, stack: &PhaseStack, model: &ChannelModel) -> bool {
        if self.layer + 1 >= model.layers {
            return false;
        }
        let phi = stack.phi(self.layer);
        let w = &model.w[self.layer];
        for v in &mut self.prefix {
            *v = w * phi.component_mul(v);
        }
        self.layer += 1;
        true
    }
}
