//! Synthetic six-cylinder spectral phantom.
//!
//! Five cylinders carry distinct positive spectral attenuation curves
//! (smooth decay plus one step edge each, at different channels); the
//! sixth is empty. Pixels are assigned by a center-of-pixel test.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::SpectralVolume;
use crate::error::{invalid, Result};

/// One cylinder: center and radius in pixel units, and the index of its
/// material spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center_row: f64,
    pub center_col: f64,
    pub radius: f64,
    pub material: usize,
}

/// Phantom description: grid, cylinders, and per-material spectra
/// (index 0 is the empty material with an all-zero curve).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid_side: usize,
    pub cylinders: Vec<Cylinder>,
    pub material_spectra: Vec<Vec<f64>>,
}

impl PhantomSpec {
    /// Default six-cylinder layout: cylinders evenly spaced on a circle,
    /// five filled with distinct spectra and one empty.
    pub fn six_cylinders(grid_side: usize, num_channels: usize) -> Self {
        let c = (grid_side as f64 - 1.0) / 2.0;
        let ring = 0.30 * grid_side as f64;
        let radius = 0.11 * grid_side as f64;
        let cylinders = (0..6)
            .map(|i| {
                let phi = i as f64 * std::f64::consts::PI / 3.0;
                Cylinder {
                    center_row: c + ring * phi.sin(),
                    center_col: c + ring * phi.cos(),
                    radius,
                    // materials 1..=5, cylinder 5 empty
                    material: if i < 5 { i + 1 } else { 0 },
                }
            })
            .collect();
        PhantomSpec {
            grid_side,
            cylinders,
            material_spectra: default_spectra(num_channels),
        }
    }

    pub fn num_channels(&self) -> usize {
        self.material_spectra.first().map_or(0, |s| s.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_side == 0 {
            return Err(invalid("grid side must be positive"));
        }
        if self.material_spectra.is_empty() {
            return Err(invalid("at least one material spectrum is required"));
        }
        let m = self.num_channels();
        if m == 0 {
            return Err(invalid("spectra must have at least one channel"));
        }
        for (i, s) in self.material_spectra.iter().enumerate() {
            if s.len() != m {
                return Err(invalid(format!("spectrum {i} has wrong length")));
            }
            if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid(format!(
                    "spectrum {i} must be nonnegative and finite"
                )));
            }
        }
        let fov = (self.grid_side as f64 - 1.0) / 2.0;
        let c = fov;
        for (i, cyl) in self.cylinders.iter().enumerate() {
            if cyl.material >= self.material_spectra.len() {
                return Err(invalid(format!("cylinder {i} references unknown material")));
            }
            if !cyl.radius.is_finite() || cyl.radius < 0.0 {
                return Err(invalid(format!("cylinder {i} has an invalid radius")));
            }
            let dist = ((cyl.center_row - c).powi(2) + (cyl.center_col - c).powi(2)).sqrt();
            if dist + cyl.radius > fov + 1e-9 {
                return Err(invalid(format!(
                    "cylinder {i} extends outside the field-of-view circle"
                )));
            }
            for (j, other) in self.cylinders.iter().enumerate().skip(i + 1) {
                let d = ((cyl.center_row - other.center_row).powi(2)
                    + (cyl.center_col - other.center_col).powi(2))
                .sqrt();
                if d < cyl.radius + other.radius {
                    return Err(invalid(format!("cylinders {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }
}

/// Smooth decaying spectra with one step edge per material at distinct
/// channels. Index 0 is the all-zero empty material.
pub fn default_spectra(num_channels: usize) -> Vec<Vec<f64>> {
    let m = num_channels as f64;
    let mut spectra = vec![vec![0.0; num_channels]];
    for mat in 0..5usize {
        let base = 0.018 + 0.008 * mat as f64;
        let decay = 18.0 + 6.0 * mat as f64;
        let edge = ((mat as f64 + 1.0) / 6.0 * m).floor();
        let step = 0.012 + 0.003 * mat as f64;
        let curve = (0..num_channels)
            .map(|k| {
                let kf = k as f64;
                let mut v = base * (-(kf) / decay).exp() + 0.008;
                if kf >= edge {
                    v += step;
                }
                v
            })
            .collect();
        spectra.push(curve);
    }
    spectra
}

/// Rasterize the phantom into a per-channel volume.
pub fn make_phantom(spec: &PhantomSpec) -> Result<SpectralVolume> {
    spec.validate()?;
    let g = spec.grid_side;
    let m = spec.num_channels();
    let mut data = Array2::zeros((g * g, m));
    for i in 0..g {
        for j in 0..g {
            let material = spec
                .cylinders
                .iter()
                .find(|cyl| {
                    let dr = i as f64 - cyl.center_row;
                    let dc = j as f64 - cyl.center_col;
                    dr * dr + dc * dc <= cyl.radius * cyl.radius
                })
                .map(|cyl| cyl.material);
            if let Some(mat) = material {
                for k in 0..m {
                    data[[i * g + j, k]] = spec.material_spectra[mat][k];
                }
            }
        }
    }
    SpectralVolume::new(data, g)
}
