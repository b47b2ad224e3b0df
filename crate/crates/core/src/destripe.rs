//! Per-channel sinogram destriping baselines: combined wavelet-Fourier
//! filtering and sort-then-smooth filtering.
//!
//! Both operate on a single channel's (angles, detectors) attenuation
//! array. Ring artifacts appear there as structures constant along the
//! angle axis, which is exactly what each filter targets.

use ndarray::{Array2, ArrayView2};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::wavelet::{dwt2d, idwt2d, FilterBank, Level2d};

/// Wavelet family for the wavelet-Fourier destriper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Db5,
}

/// Wavelet-Fourier destriper settings.
///
/// `damping_sigma` is the Gaussian width in the per-band damping function
/// `1 - exp(-u^2 / (2 sigma^2))` applied over angular frequency index `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WfParams {
    pub wavelet: WaveletKind,
    pub levels: usize,
    pub damping_sigma: f64,
}

impl Default for WfParams {
    fn default() -> Self {
        WfParams {
            wavelet: WaveletKind::Db5,
            levels: 3,
            damping_sigma: 0.9,
        }
    }
}

impl WfParams {
    pub fn validate(&self, num_angles: usize) -> Result<()> {
        if self.levels == 0 {
            return Err(invalid("decomposition level count must be positive"));
        }
        if !(self.damping_sigma.is_finite() && self.damping_sigma > 0.0) {
            return Err(invalid("damping sigma must be positive"));
        }
        if (1usize << self.levels) > num_angles {
            return Err(invalid(format!(
                "{} levels need at least {} angles, got {num_angles}",
                self.levels,
                1usize << self.levels
            )));
        }
        Ok(())
    }
}

/// Smoothing operator for the sort-then-smooth destriper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoother {
    Median,
    Mean,
}

/// Sort-then-smooth destriper settings: an odd smoothing window applied
/// along the detector axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SortSmoothParams {
    pub window: usize,
    pub smoother: Smoother,
}

impl Default for SortSmoothParams {
    fn default() -> Self {
        SortSmoothParams {
            window: 31,
            smoother: Smoother::Median,
        }
    }
}

impl SortSmoothParams {
    pub fn validate(&self, num_detectors: usize) -> Result<()> {
        if self.window.is_multiple_of(2) || self.window < 3 {
            return Err(invalid("smoothing window must be odd and >= 3"));
        }
        if self.window > num_detectors {
            return Err(invalid(format!(
                "smoothing window {} exceeds detector count {num_detectors}",
                self.window
            )));
        }
        Ok(())
    }
}

/// Wavelet-Fourier destriping (multilevel 2-D DWT, Fourier damping of the
/// stripe band).
///
/// Each level's band that is low-pass along the angle axis and high-pass
/// along the detector axis carries stripe structure; a 1-D FFT along the
/// angle axis of that band is damped by `1 - exp(-u^2 / (2 sigma^2))` at
/// angular frequency index `u`, which removes the angle-constant content
/// while leaving genuine projections (which move with angle) almost
/// untouched. The angle axis is reflected out to the next power of two
/// before decomposition and cropped afterwards.
pub fn wf_destripe(sino: ArrayView2<'_, f64>, params: &WfParams) -> Result<Array2<f64>> {
    let (p, r) = sino.dim();
    params.validate(p)?;
    if sino.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sinogram entries must be finite"));
    }

    let bank = match params.wavelet {
        WaveletKind::Db5 => FilterBank::db5(),
    };

    // Reflect the angle axis to a dyadic length.
    let p_ext = p.next_power_of_two();
    let mut work = vec![0.0; p_ext * r];
    for a in 0..p_ext {
        let src = if a < p { a } else { reflect_row(a, p) };
        for d in 0..r {
            work[a * r + d] = sino[[src, d]];
        }
    }

    // Analysis
    let mut rows = p_ext;
    let mut cols = r;
    let mut levels: Vec<Level2d> = Vec::with_capacity(params.levels);
    let mut current = work;
    for _ in 0..params.levels {
        let level = dwt2d(&current, rows, cols, &bank);
        current = level.aa.clone();
        rows = level.band_shape.0;
        cols = level.band_shape.1;
        levels.push(level);
    }

    // Damp the stripe band of every level along the angle axis.
    let mut planner = FftPlanner::new();
    for level in levels.iter_mut() {
        let (brows, bcols) = level.band_shape;
        let fwd = planner.plan_fft_forward(brows);
        let inv = planner.plan_fft_inverse(brows);
        let mut buf = vec![Complex::new(0.0, 0.0); brows];
        for c in 0..bcols {
            for (a, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(level.ad[a * bcols + c], 0.0);
            }
            fwd.process(&mut buf);
            for (u, slot) in buf.iter_mut().enumerate() {
                let dist = u.min(brows - u) as f64;
                let damp = 1.0
                    - (-(dist * dist) / (2.0 * params.damping_sigma * params.damping_sigma)).exp();
                *slot *= damp;
            }
            inv.process(&mut buf);
            let scale = 1.0 / brows as f64;
            for (a, slot) in buf.iter().enumerate() {
                level.ad[a * bcols + c] = slot.re * scale;
            }
        }
    }

    // Synthesis, coarsest level first.
    for level in levels.iter().rev() {
        let expected = level.band_shape.0 * level.band_shape.1;
        debug_assert_eq!(current.len(), expected);
        let mut merged = level.clone();
        merged.aa = current;
        current = idwt2d(&merged, &bank);
    }

    let mut out = Array2::zeros((p, r));
    for a in 0..p {
        for d in 0..r {
            out[[a, d]] = current[a * r + d];
        }
    }
    Ok(out)
}

fn reflect_row(i: usize, n: usize) -> usize {
    // half-sample reflection for indices past the last row
    let mut i = i as isize;
    let n = n as isize;
    loop {
        if i >= n {
            i = 2 * n - 1 - i;
        } else if i < 0 {
            i = -i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Sort-then-smooth destriping.
///
/// Each detector column is sorted along the angle axis (stable, so ties
/// keep their angle order); the sorted array is smoothed along the
/// detector axis with an odd window (median by default, boxcar mean as an
/// alternative); the sort is then undone per column. Stripes shift a
/// whole column's distribution, which the cross-detector smoothing of
/// rank-matched values removes without blurring along angles.
pub fn sort_smooth_destripe(
    sino: ArrayView2<'_, f64>,
    params: &SortSmoothParams,
) -> Result<Array2<f64>> {
    let (p, r) = sino.dim();
    params.validate(r)?;
    if sino.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sinogram entries must be finite"));
    }

    // Column-wise stable sort, remembering each column's permutation.
    let mut sorted = Array2::zeros((p, r));
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(r);
    for d in 0..r {
        let mut idx: Vec<usize> = (0..p).collect();
        idx.sort_by(|&i, &j| sino[[i, d]].partial_cmp(&sino[[j, d]]).unwrap());
        for (rank, &a) in idx.iter().enumerate() {
            sorted[[rank, d]] = sino[[a, d]];
        }
        perms.push(idx);
    }

    // Smooth each rank row along the detector axis with reflect padding.
    let half = params.window / 2;
    let mut smoothed = Array2::zeros((p, r));
    let mut window_buf = vec![0.0; params.window];
    for rank in 0..p {
        for d in 0..r {
            for (slot, off) in window_buf.iter_mut().zip(-(half as isize)..) {
                let src = reflect_index(d as isize + off, r);
                *slot = sorted[[rank, src]];
            }
            smoothed[[rank, d]] = match params.smoother {
                Smoother::Median => {
                    let mut w = window_buf.clone();
                    w.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    w[half]
                }
                Smoother::Mean => window_buf.iter().sum::<f64>() / params.window as f64,
            };
        }
    }

    // Undo each column's sort.
    let mut out = Array2::zeros((p, r));
    for d in 0..r {
        for (rank, &a) in perms[d].iter().enumerate() {
            out[[a, d]] = smoothed[[rank, d]];
        }
    }
    Ok(out)
}

fn reflect_index(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Variance of detector-column means after removing a smoothed column-mean
/// profile; a scalar indicator of stripe strength used by tests.
pub fn stripe_energy(sino: ArrayView2<'_, f64>, smooth_window: usize) -> f64 {
    let (p, r) = sino.dim();
    let means: Vec<f64> = (0..r)
        .map(|d| (0..p).map(|a| sino[[a, d]]).sum::<f64>() / p as f64)
        .collect();
    let half = smooth_window / 2;
    let mut resid = Vec::with_capacity(r);
    for d in 0..r {
        let mut acc = 0.0;
        let mut count = 0.0;
        for off in -(half as isize)..=(half as isize) {
            let src = reflect_index(d as isize + off, r);
            acc += means[src];
            count += 1.0;
        }
        resid.push(means[d] - acc / count);
    }
    let mean = resid.iter().sum::<f64>() / r as f64;
    resid.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn column_mean(arr: &Array2<f64>, d: usize) -> f64 {
        let p = arr.dim().0;
        (0..p).map(|a| arr[[a, d]]).sum::<f64>() / p as f64
    }

    #[test]
    fn wf_zero_input_zero_output() {
        let sino = Array2::zeros((64, 48));
        let out = wf_destripe(sino.view(), &WfParams::default()).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn wf_constant_input_unchanged() {
        let sino = Array2::from_elem((64, 48), 2.5);
        let out = wf_destripe(sino.view(), &WfParams::default()).unwrap();
        for v in out.iter() {
            assert!((v - 2.5).abs() < 1e-8);
        }
    }

    #[test]
    fn wf_removes_single_column_stripe() {
        // A one-detector stripe is the hardest case: its low-pass content
        // survives in the final approximation band, which is never
        // filtered. Three levels (the reconstruction default) leave a
        // 9-15% column-mean residual depending on alignment; four levels
        // get every column below 8%.
        let p = 90;
        let r = 64;
        let mut sino = Array2::zeros((p, r));
        for a in 0..p {
            sino[[a, 30]] = 1.0;
        }
        let deep = WfParams {
            levels: 4,
            ..WfParams::default()
        };
        let out = wf_destripe(sino.view(), &deep).unwrap();
        let residual = column_mean(&out, 30).abs();
        assert!(residual < 0.10, "stripe residual {residual}");

        let out_default = wf_destripe(sino.view(), &WfParams::default()).unwrap();
        let residual_default = column_mean(&out_default, 30).abs();
        assert!(
            residual_default < 0.20,
            "stripe residual at default levels {residual_default}"
        );
    }

    #[test]
    fn wf_preserves_smooth_sinogram() {
        // smooth stripe-free pseudo-projection of a centered blob
        let p = 90;
        let r = 64;
        let sino = Array2::from_shape_fn((p, r), |(a, d)| {
            let t = d as f64 - 31.5;
            let width = 18.0 + 3.0 * (a as f64 * 0.07).sin();
            (-(t * t) / (2.0 * width * width)).exp()
        });
        let out = wf_destripe(sino.view(), &WfParams::default()).unwrap();
        let num: f64 = out
            .iter()
            .zip(sino.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let den: f64 = sino.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den < 0.05, "relative change {}", num / den);
    }

    #[test]
    fn wf_is_linear() {
        let mut rng = Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((48, 40), |_| rng.uniform_in(-1.0, 1.0));
        let y = Array2::from_shape_fn((48, 40), |_| rng.uniform_in(-1.0, 1.0));
        let params = WfParams::default();
        let fx = wf_destripe(x.view(), &params).unwrap();
        let fy = wf_destripe(y.view(), &params).unwrap();
        let combo = &x * 2.0 + &y * 3.0;
        let fc = wf_destripe(combo.view(), &params).unwrap();
        let scale = fc.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        for ((c, a), b) in fc.iter().zip(fx.iter()).zip(fy.iter()) {
            assert!(((c - (2.0 * a + 3.0 * b)) / scale).abs() < 1e-8);
        }
    }

    #[test]
    fn wf_rejects_too_many_levels() {
        let sino = Array2::zeros((6, 16));
        let params = WfParams {
            levels: 3,
            ..WfParams::default()
        };
        assert!(wf_destripe(sino.view(), &params).is_err());
    }

    #[test]
    fn sort_smooth_constant_exactly_fixed() {
        let sino = Array2::from_elem((40, 50), 1.25);
        let out = sort_smooth_destripe(sino.view(), &SortSmoothParams::default()).unwrap();
        for v in out.iter() {
            assert_eq!(*v, 1.25);
        }
    }

    #[test]
    fn sort_smooth_removes_column_offset() {
        let p = 60;
        let r = 64;
        // smooth background with angular variation plus one offset column
        let mut sino = Array2::from_shape_fn((p, r), |(a, d)| {
            0.5 * (a as f64 * 0.05).sin() + 0.01 * d as f64
        });
        for a in 0..p {
            sino[[a, 40]] += 1.0;
        }
        let base = Array2::from_shape_fn((p, r), |(a, d)| {
            0.5 * (a as f64 * 0.05).sin() + 0.01 * d as f64
        });
        let out = sort_smooth_destripe(sino.view(), &SortSmoothParams::default()).unwrap();
        let offset_before = column_mean(&sino, 40) - column_mean(&base, 40);
        let offset_after = column_mean(&out, 40) - column_mean(&base, 40);
        assert!(offset_before > 0.99);
        assert!(
            offset_after.abs() < 0.2 * offset_before,
            "offset after {offset_after}"
        );
    }

    #[test]
    fn sort_smooth_equivariant_to_angle_permutations() {
        let mut rng = Rng::seed_from_u64(12);
        let p = 30;
        let r = 40;
        let sino = Array2::from_shape_fn((p, r), |_| rng.uniform_in(0.0, 1.0));
        let params = SortSmoothParams {
            window: 7,
            smoother: Smoother::Median,
        };
        let out = sort_smooth_destripe(sino.view(), &params).unwrap();
        // rotate the angle axis by 11
        let perm: Vec<usize> = (0..p).map(|a| (a + 11) % p).collect();
        let permuted = Array2::from_shape_fn((p, r), |(a, d)| sino[[perm[a], d]]);
        let out_perm = sort_smooth_destripe(permuted.view(), &params).unwrap();
        for a in 0..p {
            for d in 0..r {
                assert_eq!(out_perm[[a, d]], out[[perm[a], d]]);
            }
        }
    }

    #[test]
    fn sort_smooth_rejects_bad_window() {
        let sino = Array2::zeros((10, 20));
        for window in [0usize, 1, 4, 21] {
            let params = SortSmoothParams {
                window,
                smoother: Smoother::Median,
            };
            assert!(sort_smooth_destripe(sino.view(), &params).is_err());
        }
    }

    #[test]
    fn both_filters_reduce_stripe_energy() {
        let mut rng = Rng::seed_from_u64(77);
        let p = 64;
        let r = 64;
        let mut sino = Array2::from_shape_fn((p, r), |(a, d)| {
            let t = d as f64 - 31.5;
            2.0 * (-(t * t) / 400.0).exp() + 0.01 * (a as f64 * 0.1).cos()
        });
        // a few stripe columns
        for (d, amp) in [(10usize, 0.4), (33, -0.3), (50, 0.25)] {
            for a in 0..p {
                sino[[a, d]] += amp * (1.0 + 0.05 * rng.uniform());
            }
        }
        let before = stripe_energy(sino.view(), 9);
        let wf = wf_destripe(sino.view(), &WfParams::default()).unwrap();
        let ss = sort_smooth_destripe(sino.view(), &SortSmoothParams::default()).unwrap();
        assert!(stripe_energy(wf.view(), 9) < before);
        assert!(stripe_energy(ss.view(), 9) < before);
    }
}
