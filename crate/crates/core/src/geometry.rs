//! Physical layout of the BS antenna array and the stacked metasurface layers.
//!
//! Coordinates are `[x, y, z]` in metres with `x` the stacking axis. The
//! antenna plane sits at `x = 0` and layer `l` (zero-based) at
//! `x = (l + 1) * layer_spacing`. All layers share one in-plane lattice.

use serde::{Deserialize, Serialize};

use crate::units;
use crate::{Error, Result};

pub type Point = [f64; 3];

/// In-plane lattice pitch relative to the atom size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeStep {
    /// Offsets `mod(n, N_r) * d_x / 2`, `floor(n / N_r) * d_y / 2`.
    #[default]
    Half,
    /// Offsets `mod(n, N_r) * d_x`, `floor(n / N_r) * d_y`.
    Full,
}

impl LatticeStep {
    fn factor(self) -> f64 {
        match self {
            LatticeStep::Half => 0.5,
            LatticeStep::Full => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AntennaLayout {
    /// Uniform linear array along `y`, centred on the lattice centroid, at the
    /// given element spacing (metres).
    UniformLinear { spacing: f64 },
    /// Explicit positions; must lie strictly behind layer 0 (`x < layer_spacing`).
    Custom(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryParams {
    /// BS antennas.
    pub m: usize,
    /// Meta-atoms per layer.
    pub n: usize,
    /// Atoms per lattice row.
    pub n_r: usize,
    /// Number of metasurface layers.
    pub l: usize,
    pub carrier_hz: f64,
    pub dx: f64,
    pub dy: f64,
    /// Total SIM thickness in metres.
    pub thickness: f64,
    pub lattice_step: LatticeStep,
    /// `None` means a half-wavelength uniform linear array.
    pub antenna_layout: Option<AntennaLayout>,
}

impl GeometryParams {
    /// 2 GHz carrier, `lambda/2` atoms, `5 lambda` thickness.
    pub fn standard(m: usize, n: usize, n_r: usize, l: usize) -> Self {
        let lambda = units::wavelength(2e9);
        Self {
            m,
            n,
            n_r,
            l,
            carrier_hz: 2e9,
            dx: lambda / 2.0,
            dy: lambda / 2.0,
            thickness: 5.0 * lambda,
            lattice_step: LatticeStep::Half,
            antenna_layout: None,
        }
    }
}

/// Endpoint of a propagation hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Antenna(usize),
    Atom { layer: usize, atom: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationMetrics {
    pub distance: f64,
    /// Cosine of the angle between the propagation direction and the
    /// transmitting plane's normal.
    pub cos_incidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimGeometry {
    pub m: usize,
    pub n: usize,
    pub n_r: usize,
    pub l: usize,
    pub wavelength: f64,
    pub dx: f64,
    pub dy: f64,
    pub thickness: f64,
    pub layer_spacing: f64,
    pub lattice_step: LatticeStep,
    /// In-plane lattice `u_n` (x component is zero).
    pub lattice: Vec<Point>,
    /// `atom_positions[l][n]`: lattice offset plus the axial offset of layer `l`.
    pub atom_positions: Vec<Vec<Point>>,
    pub antenna_positions: Vec<Point>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")))
    }
}

impl SimGeometry {
    pub fn build(params: &GeometryParams) -> Result<Self> {
        let GeometryParams {
            m,
            n,
            n_r,
            l,
            carrier_hz,
            dx,
            dy,
            thickness,
            lattice_step,
            ..
        } = *params;
        if m == 0 || n == 0 || n_r == 0 || l == 0 {
            return Err(Error::InvalidGeometry(format!(
                "counts must be nonzero (M={m}, N={n}, N_r={n_r}, L={l})"
            )));
        }
        if n % n_r != 0 {
            return Err(Error::InvalidGeometry(format!(
                "N_r={n_r} does not divide N={n}"
            )));
        }
        positive("carrier frequency", carrier_hz)?;
        positive("d_x", dx)?;
        positive("d_y", dy)?;
        positive("thickness", thickness)?;

        let wavelength = units::wavelength(carrier_hz);
        let layer_spacing = thickness / l as f64;
        let step = lattice_step.factor();

        let lattice: Vec<Point> = (0..n)
            .map(|i| {
                [
                    0.0,
                    (i % n_r) as f64 * dx * step,
                    (i / n_r) as f64 * dy * step,
                ]
            })
            .collect();

        let atom_positions = (0..l)
            .map(|layer| {
                let x = (layer + 1) as f64 * layer_spacing;
                lattice.iter().map(|u| [x, u[1], u[2]]).collect()
            })
            .collect();

        let antenna_positions = match &params.antenna_layout {
            None => ula(&lattice, m, wavelength / 2.0),
            Some(AntennaLayout::UniformLinear { spacing }) => {
                positive("antenna spacing", *spacing)?;
                ula(&lattice, m, *spacing)
            }
            Some(AntennaLayout::Custom(points)) => {
                if points.len() != m {
                    return Err(Error::InvalidGeometry(format!(
                        "{} custom antenna positions for M={m}",
                        points.len()
                    )));
                }
                if points
                    .iter()
                    .any(|p| !(p[0] < layer_spacing) || p.iter().any(|c| !c.is_finite()))
                {
                    return Err(Error::InvalidGeometry(
                        "custom antennas must lie behind the first layer".into(),
                    ));
                }
                points.clone()
            }
        };

        Ok(Self {
            m,
            n,
            n_r,
            l,
            wavelength,
            dx,
            dy,
            thickness,
            layer_spacing,
            lattice_step,
            lattice,
            atom_positions,
            antenna_positions,
        })
    }

    fn source_position(&self, from: Source) -> Result<Point> {
        match from {
            Source::Antenna(k) => self.antenna_positions.get(k).copied().ok_or_else(|| {
                Error::InvalidParameter(format!("antenna index {k} out of range (M={})", self.m))
            }),
            Source::Atom { layer, atom } => self.atom(layer, atom),
        }
    }

    fn atom(&self, layer: usize, atom: usize) -> Result<Point> {
        self.atom_positions
            .get(layer)
            .and_then(|row| row.get(atom))
            .copied()
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "atom ({layer}, {atom}) out of range (L={}, N={})",
                    self.l, self.n
                ))
            })
    }

    /// Distance and incidence cosine for one hop into `to = (layer, atom)`.
    ///
    /// Valid hops are antenna to layer 0 and layer `l - 1` to layer `l`.
    pub fn propagation_metrics(&self, from: Source, to: (usize, usize)) -> Result<PropagationMetrics> {
        let (to_layer, to_atom) = to;
        match from {
            Source::Antenna(_) if to_layer != 0 => {
                return Err(Error::InvalidParameter(
                    "antennas only illuminate the first layer".into(),
                ))
            }
            Source::Atom { layer, .. } if layer + 1 != to_layer => {
                return Err(Error::InvalidParameter(format!(
                    "layers {layer} and {to_layer} are not adjacent"
                )))
            }
            _ => {}
        }
        let a = self.source_position(from)?;
        let b = self.atom(to_layer, to_atom)?;
        Ok(metrics_between(a, b))
    }
}

pub(crate) fn metrics_between(a: Point, b: Point) -> PropagationMetrics {
    let diff = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let distance = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
    PropagationMetrics {
        distance,
        cos_incidence: diff[0] / distance,
    }
}

fn ula(lattice: &[Point], m: usize, spacing: f64) -> Vec<Point> {
    let count = lattice.len() as f64;
    let cy = lattice.iter().map(|u| u[1]).sum::<f64>() / count;
    let cz = lattice.iter().map(|u| u[2]).sum::<f64>() / count;
    let half_span = (m as f64 - 1.0) / 2.0;
    (0..m)
        .map(|k| [0.0, cy + (k as f64 - half_span) * spacing, cz])
        .collect()
}
