//! Reconstruction quality metrics: contrast-to-noise ratio over ROIs, the
//! relative-difference channel ranking, and a radial ring-energy
//! indicator.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::data::SpectralVolume;
use crate::error::{invalid, shape_err, Result};

/// Rectangular region of interest in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl Roi {
    pub fn new(row0: usize, col0: usize, height: usize, width: usize) -> Self {
        Roi {
            row0,
            col0,
            height,
            width,
        }
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(invalid("ROI must be non-empty"));
        }
        if self.row0 + self.height > rows || self.col0 + self.width > cols {
            return Err(invalid(format!(
                "ROI {:?} exceeds image {}x{}",
                self, rows, cols
            )));
        }
        Ok(())
    }

    fn overlaps(&self, other: &Roi) -> bool {
        self.row0 < other.row0 + other.height
            && other.row0 < self.row0 + self.height
            && self.col0 < other.col0 + other.width
            && other.col0 < self.col0 + self.width
    }

    fn pixels<'a>(&self, image: &ArrayView2<'a, f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for i in self.row0..self.row0 + self.height {
            for j in self.col0..self.col0 + self.width {
                out.push(image[[i, j]]);
            }
        }
        out
    }
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Contrast-to-noise ratio between a signal and a background ROI:
/// `|mu_s - mu_b| / sqrt(sigma_s^2 + sigma_b^2)` with sample standard
/// deviations (n-1 divisor).
///
/// Equal means give 0 regardless of the noise level. Two exactly
/// constant ROIs with different means have no noise scale to compare
/// against and are rejected.
pub fn cnr(image: ArrayView2<'_, f64>, roi_signal: &Roi, roi_background: &Roi) -> Result<f64> {
    let (rows, cols) = image.dim();
    roi_signal.validate(rows, cols)?;
    roi_background.validate(rows, cols)?;
    if roi_signal.overlaps(roi_background) {
        return Err(invalid("signal and background ROIs must not overlap"));
    }
    let (mu_s, sd_s) = mean_and_sample_std(&roi_signal.pixels(&image));
    let (mu_b, sd_b) = mean_and_sample_std(&roi_background.pixels(&image));
    let contrast = (mu_s - mu_b).abs();
    if contrast == 0.0 {
        return Ok(0.0);
    }
    let noise = (sd_s * sd_s + sd_b * sd_b).sqrt();
    if noise == 0.0 {
        return Err(invalid(
            "both ROIs have zero variance with differing means; CNR is undefined",
        ));
    }
    Ok(contrast / noise)
}

/// Relative difference `||a - b||_2 / ||b||_2` between two images.
pub fn relative_difference(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(shape_err(format!("images {:?} vs {:?}", a.dim(), b.dim())));
    }
    let denom: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(invalid("reference image has zero norm"));
    }
    let num: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// Relative difference per channel between two volumes.
pub fn rd_per_channel(vol: &SpectralVolume, reference: &SpectralVolume) -> Result<Vec<f64>> {
    if vol.data().dim() != reference.data().dim() {
        return Err(shape_err("volumes must share shape"));
    }
    (0..vol.num_channels())
        .map(|k| {
            relative_difference(
                vol.channel_image(k).view(),
                reference.channel_image(k).view(),
            )
        })
        .collect()
}

/// Channels at the minimum, median, and maximum relative difference
/// between two volumes: `(k_min, k_median, k_max)`.
///
/// The median for even channel counts is the lower of the two middle
/// order statistics; ties everywhere break toward the lowest channel
/// index.
pub fn select_channels_by_rd(
    vol: &SpectralVolume,
    reference: &SpectralVolume,
) -> Result<(usize, usize, usize)> {
    let rd = rd_per_channel(vol, reference)?;
    let m = rd.len();
    if m == 0 {
        return Err(invalid("volumes have no channels"));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| rd[i].partial_cmp(&rd[j]).unwrap().then(i.cmp(&j)));
    let k_min = order[0];
    let k_med = order[(m - 1) / 2];
    let k_max = *order.last().unwrap();
    Ok((k_min, k_med, k_max))
}

/// Ring-artifact energy: radius-attributable variance summed over annuli.
///
/// The field-of-view disk about `center` is split into `n_annuli`
/// equal-width annuli; within each annulus, pixels are grouped by integer
/// radius and the variance of the per-radius means (about the annulus
/// mean of those means) accumulates. Structures constant at fixed radius
/// but varying across radii — rings — drive this up; radially flat noise
/// averages out within each radius group.
pub fn ring_energy(image: ArrayView2<'_, f64>, center: (f64, f64), n_annuli: usize) -> Result<f64> {
    let (rows, cols) = image.dim();
    if n_annuli == 0 {
        return Err(invalid("annulus count must be positive"));
    }
    let (cr, cc) = center;
    if cr < 0.0 || cc < 0.0 || cr > rows as f64 - 1.0 || cc > cols as f64 - 1.0 {
        return Err(invalid("center must lie inside the image"));
    }
    let fov = cr
        .min(cc)
        .min(rows as f64 - 1.0 - cr)
        .min(cols as f64 - 1.0 - cc);
    if fov < 1.0 {
        return Err(invalid("field of view about the center is empty"));
    }

    // per integer radius: sum and count
    let max_bin = fov.floor() as usize;
    let mut sums = vec![0.0; max_bin + 1];
    let mut counts = vec![0usize; max_bin + 1];
    for i in 0..rows {
        for j in 0..cols {
            let rho = ((i as f64 - cr).powi(2) + (j as f64 - cc).powi(2)).sqrt();
            if rho <= fov {
                let bin = (rho.floor() as usize).min(max_bin);
                sums[bin] += image[[i, j]];
                counts[bin] += 1;
            }
        }
    }

    let width = fov / n_annuli as f64;
    let mut total = 0.0;
    for a in 0..n_annuli {
        let lo = a as f64 * width;
        let hi = (a + 1) as f64 * width;
        let mut means = Vec::new();
        for bin in 0..=max_bin {
            let radius = bin as f64;
            if radius >= lo && radius < hi && counts[bin] > 0 {
                means.push(sums[bin] / counts[bin] as f64);
            }
        }
        if means.len() < 2 {
            continue;
        }
        let m = means.iter().sum::<f64>() / means.len() as f64;
        total += means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / means.len() as f64;
    }
    Ok(total)
}
