//! Parallel-beam forward model: a sparse matrix of exact ray-pixel
//! intersection lengths (Siddon traversal) and its products.
//!
//! Rays are parallel within each projection, spaced one pixel apart so
//! the detector array spans the grid width, and rotated about the grid
//! center. Row `a * r + d` of the matrix holds the intersection lengths
//! of detector `d` at angle index `a` (angle-major ordering). The
//! transpose product doubles as the matched back projector.

use ndarray::{Array2, ArrayView2};

use crate::error::{shape_err, Result};
use crate::geometry::ScanGeometry;

/// Sparse system matrix in compressed sparse row layout,
/// shape (angles * detectors, pixels).
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    num_rows: usize,
    num_cols: usize,
    num_angles: usize,
    num_detectors: usize,
}

impl SystemMatrix {
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn from_parts(
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
        num_angles: usize,
        num_detectors: usize,
        num_cols: usize,
    ) -> Result<Self> {
        let num_rows = num_angles * num_detectors;
        if row_ptr.len() != num_rows + 1
            || col_idx.len() != values.len()
            || *row_ptr.last().unwrap_or(&0) != values.len()
        {
            return Err(shape_err("inconsistent sparse matrix parts"));
        }
        Ok(SystemMatrix {
            row_ptr,
            col_idx,
            values,
            num_rows,
            num_cols,
            num_angles,
            num_detectors,
        })
    }

    /// `A x` for a flat image vector, result flattened angle-major.
    pub fn apply(&self, image: &[f64]) -> Result<Vec<f64>> {
        if image.len() != self.num_cols {
            return Err(shape_err(format!(
                "image has {} pixels, matrix expects {}",
                image.len(),
                self.num_cols
            )));
        }
        let mut out = vec![0.0; self.num_rows];
        for (row, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for idx in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.values[idx] * image[self.col_idx[idx] as usize];
            }
            *o = acc;
        }
        Ok(out)
    }

    /// `Aᵀ y` for a flat angle-major sinogram vector (matched back
    /// projection).
    pub fn apply_transpose(&self, sino: &[f64]) -> Result<Vec<f64>> {
        if sino.len() != self.num_rows {
            return Err(shape_err(format!(
                "sinogram has {} bins, matrix expects {}",
                sino.len(),
                self.num_rows
            )));
        }
        let mut out = vec![0.0; self.num_cols];
        for (row, &s) in sino.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for idx in self.row_ptr[row]..self.row_ptr[row + 1] {
                out[self.col_idx[idx] as usize] += self.values[idx] * s;
            }
        }
        Ok(out)
    }
}

/// Build the system matrix for a scan geometry.
///
/// Detector `d` at angle `theta` follows the line
/// `point(s) = t_d * (-sin theta, cos theta) + s * (cos theta, sin theta)`
/// with offset `t_d = (d - (r - 1) / 2) * pixel_size` from the grid
/// center. At angle 0 rays run along image rows.
pub fn build_system_matrix(geom: &ScanGeometry) -> SystemMatrix {
    let g = geom.grid_side();
    let r = geom.num_detectors();
    let tau = geom.pixel_size();
    let half = 0.5 * g as f64 * tau;

    let mut row_ptr = Vec::with_capacity(geom.num_angles() * r + 1);
    let mut col_idx: Vec<u32> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    row_ptr.push(0);

    for &angle_deg in geom.angles_deg() {
        let theta = angle_deg.to_radians();
        let dir = (theta.cos(), theta.sin());
        let normal = (-theta.sin(), theta.cos());
        for d in 0..r {
            let t = (d as f64 - (r as f64 - 1.0) / 2.0) * tau;
            let origin = (t * normal.0, t * normal.1);
            trace_ray(origin, dir, g, tau, half, &mut col_idx, &mut values);
            row_ptr.push(values.len());
        }
    }

    SystemMatrix::from_parts(row_ptr, col_idx, values, geom.num_angles(), r, g * g)
        .expect("construction is internally consistent")
}

/// Siddon traversal of one ray through the pixel grid, appending
/// (pixel, length) pairs.
fn trace_ray(
    origin: (f64, f64),
    dir: (f64, f64),
    g: usize,
    tau: f64,
    half: f64,
    col_idx: &mut Vec<u32>,
    values: &mut Vec<f64>,
) {
    // Clip the ray against the grid square [-half, half]^2.
    let mut s_min = f64::NEG_INFINITY;
    let mut s_max = f64::INFINITY;
    for axis in 0..2 {
        let (o, u) = if axis == 0 {
            (origin.0, dir.0)
        } else {
            (origin.1, dir.1)
        };
        if u.abs() < 1e-300 {
            if o <= -half || o >= half {
                return;
            }
        } else {
            let s1 = (-half - o) / u;
            let s2 = (half - o) / u;
            s_min = s_min.max(s1.min(s2));
            s_max = s_max.min(s1.max(s2));
        }
    }
    if s_min >= s_max {
        return;
    }

    // Nudge inside to get a well-defined starting cell.
    let eps = 1e-9 * tau;
    let s_start = s_min + eps;
    let px = origin.0 + s_start * dir.0;
    let py = origin.1 + s_start * dir.1;
    let mut ix = (((px + half) / tau).floor() as isize).clamp(0, g as isize - 1);
    let mut iy = (((py + half) / tau).floor() as isize).clamp(0, g as isize - 1);

    let step_x: isize = if dir.0 > 0.0 { 1 } else { -1 };
    let step_y: isize = if dir.1 > 0.0 { 1 } else { -1 };
    // Parameter value at the next x (resp. y) cell boundary.
    let next_boundary = |i: isize, step: isize| -> f64 {
        let edge = if step > 0 { i + 1 } else { i };
        -half + edge as f64 * tau
    };
    let mut s_x = if dir.0.abs() < 1e-300 {
        f64::INFINITY
    } else {
        (next_boundary(ix, step_x) - origin.0) / dir.0
    };
    let mut s_y = if dir.1.abs() < 1e-300 {
        f64::INFINITY
    } else {
        (next_boundary(iy, step_y) - origin.1) / dir.1
    };
    let ds_x = (tau / dir.0).abs();
    let ds_y = (tau / dir.1).abs();

    let tie = 1e-12 * tau;
    let mut s_cur = s_min;
    while s_cur < s_max - tie {
        let s_next = s_x.min(s_y).min(s_max);
        let len = s_next - s_cur;
        if len > tie && ix >= 0 && iy >= 0 && ix < g as isize && iy < g as isize {
            // iy indexes image rows, ix image columns
            let pixel = iy as usize * g + ix as usize;
            col_idx.push(pixel as u32);
            values.push(len);
        }
        if s_next >= s_max - tie {
            break;
        }
        // Advance one cell; a corner crossing advances both axes.
        if (s_x - s_y).abs() <= tie {
            ix += step_x;
            iy += step_y;
            s_x += ds_x;
            s_y += ds_y;
        } else if s_x < s_y {
            ix += step_x;
            s_x += ds_x;
        } else {
            iy += step_y;
            s_y += ds_y;
        }
        s_cur = s_next;
    }
}

/// Forward projection `A x`, reshaped to (angles, detectors).
pub fn forward_project(matrix: &SystemMatrix, image: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (rows, cols) = image.dim();
    if rows * cols != matrix.num_cols() {
        return Err(shape_err(format!(
            "image {}x{} does not match matrix pixel count {}",
            rows,
            cols,
            matrix.num_cols()
        )));
    }
    let flat: Vec<f64> = image.iter().copied().collect();
    let sino = matrix.apply(&flat)?;
    Ok(Array2::from_shape_vec((matrix.num_angles(), matrix.num_detectors()), sino).unwrap())
}

/// Matched back projection `Aᵀ y` reshaped to the square grid.
pub fn back_project(matrix: &SystemMatrix, sino: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (p, r) = sino.dim();
    if p != matrix.num_angles() || r != matrix.num_detectors() {
        return Err(shape_err(format!(
            "sinogram {}x{} does not match matrix {}x{}",
            p,
            r,
            matrix.num_angles(),
            matrix.num_detectors()
        )));
    }
    let flat: Vec<f64> = sino.iter().copied().collect();
    let img = matrix.apply_transpose(&flat)?;
    let g = (matrix.num_cols() as f64).sqrt().round() as usize;
    Ok(Array2::from_shape_vec((g, g), img).unwrap())
}

/// Vector of per-pixel values for a centered disk indicator.
#[cfg(test)]
pub(crate) fn disk_image(g: usize, radius_px: f64) -> ndarray::Array1<f64> {
    let c = (g as f64 - 1.0) / 2.0;
    ndarray::Array1::from_shape_fn(g * g, |idx| {
        let i = (idx / g) as f64;
        let j = (idx % g) as f64;
        if (i - c).powi(2) + (j - c).powi(2) <= radius_px * radius_px {
            1.0
        } else {
            0.0
        }
    })
}
