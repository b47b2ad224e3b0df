//! Shared data model: spectral sinograms, reconstructed volumes, and
//! flat-field estimates, plus the counts-to-attenuation normalization.
//!
//! Arrays follow one canonical layout everywhere: sinograms are
//! (angle, detector, channel), flat estimates are (detector, channel),
//! and volumes are (pixel, channel) with pixels stored row-major on the
//! reconstruction grid.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};

/// Whether sinogram entries are detector counts or attenuation line
/// integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinogramKind {
    Counts,
    Attenuation,
}

/// Per-channel measurement array of shape (angles, detectors, channels).
#[derive(Debug, Clone)]
pub struct SpectralSinogram {
    data: Array3<f64>,
    kind: SinogramKind,
    channel_labels: Vec<f64>,
}

impl SpectralSinogram {
    pub fn new(data: Array3<f64>, kind: SinogramKind, channel_labels: Vec<f64>) -> Result<Self> {
        if channel_labels.len() != data.dim().2 {
            return Err(shape_err(format!(
                "{} channel labels for {} channels",
                channel_labels.len(),
                data.dim().2
            )));
        }
        match kind {
            SinogramKind::Counts => {
                if data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid("count sinogram entries must be finite and >= 0"));
                }
            }
            SinogramKind::Attenuation => {
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("attenuation sinogram entries must be finite"));
                }
            }
        }
        Ok(SpectralSinogram {
            data,
            kind,
            channel_labels,
        })
    }

    /// Default labels 0..m when the acquisition does not provide any.
    pub fn with_default_labels(data: Array3<f64>, kind: SinogramKind) -> Result<Self> {
        let m = data.dim().2;
        Self::new(data, kind, (0..m).map(|k| k as f64).collect())
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn kind(&self) -> SinogramKind {
        self.kind
    }

    pub fn channel_labels(&self) -> &[f64] {
        &self.channel_labels
    }

    pub fn num_angles(&self) -> usize {
        self.data.dim().0
    }

    pub fn num_detectors(&self) -> usize {
        self.data.dim().1
    }

    pub fn num_channels(&self) -> usize {
        self.data.dim().2
    }

    /// The (angles, detectors) slice for one channel.
    pub fn channel(&self, k: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(2), k)
    }
}

/// Per-channel reconstructions, (pixels, channels), pixels row-major on a
/// square grid.
#[derive(Debug, Clone)]
pub struct SpectralVolume {
    data: Array2<f64>,
    grid_side: usize,
}

impl SpectralVolume {
    pub fn new(data: Array2<f64>, grid_side: usize) -> Result<Self> {
        if data.dim().0 != grid_side * grid_side {
            return Err(shape_err(format!(
                "volume has {} pixels, expected {}^2",
                data.dim().0,
                grid_side
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("volume entries must be finite"));
        }
        Ok(SpectralVolume { data, grid_side })
    }

    pub fn from_channel_images(images: &[Array2<f64>]) -> Result<Self> {
        if images.is_empty() {
            return Err(invalid("at least one channel image is required"));
        }
        let g = images[0].dim().0;
        if images.iter().any(|im| im.dim() != (g, g)) {
            return Err(shape_err("channel images must share a square shape"));
        }
        let mut data = Array2::zeros((g * g, images.len()));
        for (k, im) in images.iter().enumerate() {
            for (i, v) in im.iter().enumerate() {
                data[[i, k]] = *v;
            }
        }
        Self::new(data, g)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn num_pixels(&self) -> usize {
        self.data.dim().0
    }

    pub fn num_channels(&self) -> usize {
        self.data.dim().1
    }

    /// Channel `k` reshaped to the square grid.
    pub fn channel_image(&self, k: usize) -> Array2<f64> {
        let g = self.grid_side;
        let col = self.data.index_axis(Axis(1), k);
        Array2::from_shape_fn((g, g), |(i, j)| col[i * g + j])
    }
}

/// Per-detector, per-channel incident-intensity estimate of shape
/// (detectors, channels). Entries are strictly positive so division and
/// the logarithm are always defined.
#[derive(Debug, Clone)]
pub struct FlatEstimate {
    values: Array2<f64>,
}

impl FlatEstimate {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("flat estimate entries must be strictly positive"));
        }
        Ok(FlatEstimate { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn num_detectors(&self) -> usize {
        self.values.dim().0
    }

    pub fn num_channels(&self) -> usize {
        self.values.dim().1
    }

    /// Per-channel count floor: 1e-6 times the channel's median value.
    ///
    /// Measured counts below the floor are clamped before the logarithm;
    /// the scale is far below any valid signal so real data are unaffected.
    pub fn default_channel_floors(&self) -> Vec<f64> {
        (0..self.num_channels())
            .map(|k| {
                let col: Vec<f64> = self.values.index_axis(Axis(1), k).to_vec();
                1e-6 * median(&col)
            })
            .collect()
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Flat-field correction: counts to attenuation line integrals.
///
/// `out[a, d, k] = -ln(max(counts[a, d, k], floor_k) / flat[d, k])`.
///
/// With `floor = None` the per-channel default floor from
/// [`FlatEstimate::default_channel_floors`] is used; `Some(f)` applies one
/// scalar floor to every channel.
pub fn transmission_correct(
    counts: &SpectralSinogram,
    flat: &FlatEstimate,
    floor: Option<f64>,
) -> Result<SpectralSinogram> {
    if counts.kind() != SinogramKind::Counts {
        return Err(invalid("transmission_correct expects a counts sinogram"));
    }
    let (p, r, m) = counts.data().dim();
    if (r, m) != flat.values().dim() {
        return Err(shape_err(format!(
            "counts {}x{}x{} vs flat {}x{}",
            p,
            r,
            m,
            flat.num_detectors(),
            flat.num_channels()
        )));
    }
    if let Some(f) = floor {
        if !(f.is_finite() && f > 0.0) {
            return Err(invalid("count floor must be positive"));
        }
    }
    let floors = match floor {
        Some(f) => vec![f; m],
        None => flat.default_channel_floors(),
    };
    let mut out = Array3::zeros((p, r, m));
    for a in 0..p {
        for d in 0..r {
            for k in 0..m {
                let y = counts.data()[[a, d, k]].max(floors[k]);
                out[[a, d, k]] = -(y / flat.values()[[d, k]]).ln();
            }
        }
    }
    SpectralSinogram::new(
        out,
        SinogramKind::Attenuation,
        counts.channel_labels().to_vec(),
    )
}
