//! Synthetic spectral-CT measurement generator.
//!
//! The ground-truth incident intensity is an exactly rank-one flat
//! `Z* = g cᵀ` (per-detector flux profile times spectrum). Expected scan
//! counts follow the discretized attenuation model
//! `gain_d * Z*[d, k] * exp(-(A x_k)[a, d])`; flats omit the object term.
//! Poisson counting noise and per-detector multiplicative gain errors are
//! both optional, and the gain errors drawn for the flats can differ from
//! the scan's — that mismatch is exactly what imprints rings after
//! flat-field correction.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data::{FlatEstimate, SinogramKind, SpectralSinogram, SpectralVolume};
use crate::error::{invalid, shape_err, Result};
use crate::geometry::ScanGeometry;
use crate::projector::{build_system_matrix, forward_project, SystemMatrix};
use crate::rng::Rng;

/// Per-detector multiplicative gain-error model: each detector is
/// perturbed with probability `fraction` by `1 + amplitude * eta`,
/// `eta ~ uniform[-1, 1]`.
///
/// With `consistent` set, one gain vector is shared by the scan and every
/// flat, so flat-field correction cancels it exactly. Otherwise the scan
/// and each flat draw independent vectors, modelling detector response
/// drift between acquisitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainErrorSpec {
    pub fraction: f64,
    pub amplitude: f64,
    pub consistent: bool,
}

impl Default for GainErrorSpec {
    fn default() -> Self {
        GainErrorSpec {
            fraction: 0.0,
            amplitude: 0.0,
            consistent: false,
        }
    }
}

/// Simulator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub geometry: ScanGeometry,
    /// Number of flat-field acquisitions.
    pub num_flats: usize,
    /// Per-detector flux profile `g` (length = detectors), strictly positive.
    pub flux_profile: Vec<f64>,
    /// Spectrum `c` (length = channels), strictly positive.
    pub spectrum: Vec<f64>,
    pub gain_error: GainErrorSpec,
    /// Expected counts at unit intensity.
    pub poisson_scale: f64,
    /// Disable counting noise entirely (expected-value outputs).
    pub noise_disabled: bool,
    pub seed: u64,
}

impl SimConfig {
    /// Smooth default config for a given geometry and channel count.
    pub fn desk_default(geometry: ScanGeometry, num_channels: usize, seed: u64) -> Self {
        let r = geometry.num_detectors();
        let flux_profile = (0..r)
            .map(|d| {
                let x = (d as f64 - (r as f64 - 1.0) / 2.0) / (0.6 * r as f64);
                1.0 + 0.3 * (-x * x).exp()
            })
            .collect();
        let spectrum = (0..num_channels)
            .map(|k| 0.4 + 1.6 * (-(k as f64) / (0.9 * num_channels as f64)).exp())
            .collect();
        SimConfig {
            geometry,
            num_flats: 8,
            flux_profile,
            spectrum,
            gain_error: GainErrorSpec::default(),
            poisson_scale: 400.0,
            noise_disabled: false,
            seed,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.spectrum.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_flats == 0 {
            return Err(invalid("at least one flat-field is required"));
        }
        if self.flux_profile.len() != self.geometry.num_detectors() {
            return Err(shape_err("flux profile length must equal detector count"));
        }
        if self.spectrum.is_empty() {
            return Err(invalid("spectrum must be non-empty"));
        }
        if self
            .flux_profile
            .iter()
            .chain(self.spectrum.iter())
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(invalid(
                "flux profile and spectrum must be strictly positive",
            ));
        }
        if !(self.poisson_scale.is_finite() && self.poisson_scale > 0.0) {
            return Err(invalid("poisson scale must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gain_error.fraction) {
            return Err(invalid("gain fraction must lie in [0, 1]"));
        }
        if !(self.gain_error.amplitude.is_finite() && self.gain_error.amplitude >= 0.0) {
            return Err(invalid("gain amplitude must be nonnegative"));
        }
        Ok(())
    }

    /// Exactly rank-one ground-truth flat `Z* = g cᵀ`.
    pub fn true_flat(&self) -> Result<FlatEstimate> {
        self.validate()?;
        let r = self.flux_profile.len();
        let m = self.spectrum.len();
        let values =
            Array2::from_shape_fn((r, m), |(d, k)| self.flux_profile[d] * self.spectrum[k]);
        FlatEstimate::new(values)
    }
}

/// Ground truth bundled with a simulated dataset.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub true_flat: FlatEstimate,
    pub phantom: SpectralVolume,
    pub scan_gain: Vec<f64>,
    pub flat_gains: Vec<Vec<f64>>,
}

/// A simulated acquisition: noisy counts, the measured flats, and truth.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub counts: SpectralSinogram,
    pub flats: Vec<Array2<f64>>,
    pub truth: SimTruth,
}

fn draw_gain(rng: &mut Rng, r: usize, spec: &GainErrorSpec) -> Vec<f64> {
    // Both draws happen for every detector so the stream layout does not
    // depend on which detectors end up affected.
    (0..r)
        .map(|_| {
            let affected = rng.uniform() < spec.fraction;
            let eta = rng.uniform_in(-1.0, 1.0);
            if affected {
                1.0 + spec.amplitude * eta
            } else {
                1.0
            }
        })
        .collect()
}

/// Simulate the scan and flat-field acquisitions for a phantom.
///
/// Counts are `Poisson(poisson_scale * expected) / poisson_scale` (or the
/// exact expectation with noise disabled). The RNG stream is consumed in
/// a fixed documented order — scan gain, per-flat gains, flat counts,
/// scan counts — so equal seeds give bit-identical datasets.
pub fn simulate_measurements(phantom: &SpectralVolume, cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let geom = &cfg.geometry;
    if phantom.grid_side() != geom.grid_side() {
        return Err(shape_err("phantom grid does not match the geometry"));
    }
    if phantom.num_channels() != cfg.num_channels() {
        return Err(shape_err("phantom channels do not match the spectrum"));
    }
    let matrix = build_system_matrix(geom);
    simulate_with_matrix(phantom, cfg, &matrix)
}

/// [`simulate_measurements`] with a prebuilt system matrix.
pub fn simulate_with_matrix(
    phantom: &SpectralVolume,
    cfg: &SimConfig,
    matrix: &SystemMatrix,
) -> Result<SimOutput> {
    cfg.validate()?;
    let geom = &cfg.geometry;
    let p = geom.num_angles();
    let r = geom.num_detectors();
    let m = cfg.num_channels();
    let s = cfg.num_flats;
    let scale = cfg.poisson_scale;

    let true_flat = cfg.true_flat()?;
    let mut rng = Rng::seed_from_u64(cfg.seed);

    let scan_gain = draw_gain(&mut rng, r, &cfg.gain_error);
    let flat_gains: Vec<Vec<f64>> = if cfg.gain_error.consistent {
        (0..s).map(|_| scan_gain.clone()).collect()
    } else {
        (0..s)
            .map(|_| draw_gain(&mut rng, r, &cfg.gain_error))
            .collect()
    };

    let sample = |rng: &mut Rng, expected: f64| -> f64 {
        if cfg.noise_disabled {
            expected
        } else {
            rng.poisson(scale * expected) as f64 / scale
        }
    };

    let mut flats = Vec::with_capacity(s);
    for gains in &flat_gains {
        let mut flat = Array2::zeros((r, m));
        for d in 0..r {
            for k in 0..m {
                let expected = gains[d] * true_flat.values()[[d, k]];
                flat[[d, k]] = sample(&mut rng, expected).max(f64::MIN_POSITIVE);
            }
        }
        flats.push(flat);
    }

    // Line integrals per channel, then attenuated counts.
    let mut counts = Array3::zeros((p, r, m));
    for k in 0..m {
        let image = phantom.channel_image(k);
        let line_integrals = forward_project(matrix, image.view())?;
        for a in 0..p {
            for d in 0..r {
                let expected =
                    scan_gain[d] * true_flat.values()[[d, k]] * (-line_integrals[[a, d]]).exp();
                counts[[a, d, k]] = sample(&mut rng, expected);
            }
        }
    }

    Ok(SimOutput {
        counts: SpectralSinogram::with_default_labels(counts, SinogramKind::Counts)?,
        flats,
        truth: SimTruth {
            true_flat,
            phantom: phantom.clone(),
            scan_gain,
            flat_gains,
        },
    })
}
