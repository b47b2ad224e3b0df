//! Parallel-beam acquisition geometry.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Description of a 2-D parallel-beam scan: detector count, projection
/// angles, and the square reconstruction grid.
///
/// Angles are in degrees, strictly increasing, and confined to [0, 180).
/// The image is `grid_side`² pixels; detectors are spaced one pixel apart
/// and the detector array spans the grid width, rotated about the grid
/// center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    num_detectors: usize,
    angles_deg: Vec<f64>,
    grid_side: usize,
    pixel_size: f64,
}

impl ScanGeometry {
    pub fn new(
        num_detectors: usize,
        angles_deg: Vec<f64>,
        grid_side: usize,
        pixel_size: f64,
    ) -> Result<Self> {
        if num_detectors == 0 || grid_side == 0 {
            return Err(invalid("detector count and grid side must be positive"));
        }
        if angles_deg.is_empty() {
            return Err(invalid("at least one projection angle is required"));
        }
        if !(pixel_size.is_finite() && pixel_size > 0.0) {
            return Err(invalid("pixel size must be positive and finite"));
        }
        if angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(invalid("angles must be finite"));
        }
        for pair in angles_deg.windows(2) {
            if pair[1] <= pair[0] {
                return Err(invalid("angles must be strictly increasing"));
            }
        }
        let first = angles_deg[0];
        let last = *angles_deg.last().unwrap();
        if !(0.0..180.0).contains(&first) || !(0.0..180.0).contains(&last) {
            return Err(invalid("angles must lie in [0, 180) degrees"));
        }
        Ok(ScanGeometry {
            num_detectors,
            angles_deg,
            grid_side,
            pixel_size,
        })
    }

    /// Geometry with `num_angles` equidistant angles
    /// `start_deg + i * increment_deg`, unit pixel size.
    pub fn with_uniform_angles(
        num_detectors: usize,
        num_angles: usize,
        start_deg: f64,
        increment_deg: f64,
        grid_side: usize,
    ) -> Result<Self> {
        if num_angles == 0 {
            return Err(invalid("angle count must be positive"));
        }
        if num_angles > 1 && increment_deg <= 0.0 {
            return Err(invalid("angle increment must be positive"));
        }
        let angles = (0..num_angles)
            .map(|i| start_deg + i as f64 * increment_deg)
            .collect();
        Self::new(num_detectors, angles, grid_side, 1.0)
    }

    pub fn with_pixel_size(mut self, pixel_size: f64) -> Result<Self> {
        if !(pixel_size.is_finite() && pixel_size > 0.0) {
            return Err(invalid("pixel size must be positive and finite"));
        }
        self.pixel_size = pixel_size;
        Ok(self)
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn num_angles(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    /// Total pixel count `grid_side`².
    pub fn num_pixels(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }
}
