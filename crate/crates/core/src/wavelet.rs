//! Discrete wavelet transform support for the wavelet-Fourier destriper:
//! 1-D and separable 2-D analysis/synthesis with half-sample symmetric
//! extension, sized like the common convention where each band holds
//! `floor((n + filter_len - 1) / 2)` coefficients so reconstruction is
//! exact for any input length.

/// Daubechies-5 scaling filter (10 taps, sum sqrt(2)).
pub const DB5_LO_R: [f64; 10] = [
    0.16010239797419448,
    0.6038292697971953,
    0.7243085284377785,
    0.13842814590131872,
    -0.24229488706638835,
    -0.032244869584641435,
    0.07757149384004525,
    -0.006241490212798693,
    -0.01258075199908218,
    0.003335725285473803,
];

/// Quadrature filter bank derived from a scaling filter.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub lo_d: Vec<f64>,
    pub hi_d: Vec<f64>,
    pub lo_r: Vec<f64>,
    pub hi_r: Vec<f64>,
}

impl FilterBank {
    pub fn from_scaling(rec_lo: &[f64]) -> Self {
        let l = rec_lo.len();
        let lo_r = rec_lo.to_vec();
        let lo_d: Vec<f64> = rec_lo.iter().rev().copied().collect();
        let hi_r: Vec<f64> = (0..l)
            .map(|k| if k % 2 == 0 { lo_d[k] } else { -lo_d[k] })
            .collect();
        let hi_d: Vec<f64> = hi_r.iter().rev().copied().collect();
        FilterBank {
            lo_d,
            hi_d,
            lo_r,
            hi_r,
        }
    }

    pub fn db5() -> Self {
        Self::from_scaling(&DB5_LO_R)
    }

    pub fn filter_len(&self) -> usize {
        self.lo_d.len()
    }
}

/// Half-sample symmetric reflection of index `i` into `0..n`.
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    debug_assert!(n > 0);
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

/// Coefficient count per band for a signal of length `n`.
pub fn band_len(n: usize, filter_len: usize) -> usize {
    (n + filter_len - 1) / 2
}

/// One analysis level: approximation and detail coefficients.
pub fn dwt1d(x: &[f64], bank: &FilterBank) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let l = bank.filter_len();
    let out_len = band_len(n, l);
    let mut approx = vec![0.0; out_len];
    let mut detail = vec![0.0; out_len];
    for i in 0..out_len {
        let t = 2 * i as isize + 1;
        let mut sa = 0.0;
        let mut sd = 0.0;
        for j in 0..l {
            let v = x[reflect(t - j as isize, n)];
            sa += bank.lo_d[j] * v;
            sd += bank.hi_d[j] * v;
        }
        approx[i] = sa;
        detail[i] = sd;
    }
    (approx, detail)
}

/// One synthesis level back to a signal of length `n`.
pub fn idwt1d(approx: &[f64], detail: &[f64], bank: &FilterBank, n: usize) -> Vec<f64> {
    assert_eq!(approx.len(), detail.len());
    let l = bank.filter_len();
    let m = approx.len();
    let mut buf = vec![0.0; 2 * m + l - 2];
    for i in 0..m {
        let base = 2 * i as isize + 2 - l as isize;
        for k in 0..l {
            let idx = (base + k as isize + l as isize - 2) as usize;
            buf[idx] += approx[i] * bank.lo_r[k] + detail[i] * bank.hi_r[k];
        }
    }
    let offset = l - 2;
    (0..n).map(|t| buf[t + offset]).collect()
}

/// Bands of one separable 2-D analysis level. The first letter names the
/// pass along axis 0 (rows), the second along axis 1 (columns);
/// A = low-pass, D = high-pass.
#[derive(Debug, Clone)]
pub struct Level2d {
    pub aa: Vec<f64>,
    pub ad: Vec<f64>,
    pub da: Vec<f64>,
    pub dd: Vec<f64>,
    /// (rows, cols) of the input that produced this level.
    pub input_shape: (usize, usize),
    /// (rows, cols) of each band.
    pub band_shape: (usize, usize),
}

/// One separable 2-D analysis level: rows (axis 0) first, then columns.
pub fn dwt2d(x: &[f64], rows: usize, cols: usize, bank: &FilterBank) -> Level2d {
    let l = bank.filter_len();
    let brows = band_len(rows, l);
    let bcols = band_len(cols, l);

    // axis 0
    let mut a0 = vec![0.0; brows * cols];
    let mut d0 = vec![0.0; brows * cols];
    let mut col_buf = vec![0.0; rows];
    for c in 0..cols {
        for r in 0..rows {
            col_buf[r] = x[r * cols + c];
        }
        let (a, d) = dwt1d(&col_buf, bank);
        for r in 0..brows {
            a0[r * cols + c] = a[r];
            d0[r * cols + c] = d[r];
        }
    }

    // axis 1
    let mut level = Level2d {
        aa: vec![0.0; brows * bcols],
        ad: vec![0.0; brows * bcols],
        da: vec![0.0; brows * bcols],
        dd: vec![0.0; brows * bcols],
        input_shape: (rows, cols),
        band_shape: (brows, bcols),
    };
    for r in 0..brows {
        let (a, d) = dwt1d(&a0[r * cols..(r + 1) * cols], bank);
        level.aa[r * bcols..(r + 1) * bcols].copy_from_slice(&a);
        level.ad[r * bcols..(r + 1) * bcols].copy_from_slice(&d);
        let (a, d) = dwt1d(&d0[r * cols..(r + 1) * cols], bank);
        level.da[r * bcols..(r + 1) * bcols].copy_from_slice(&a);
        level.dd[r * bcols..(r + 1) * bcols].copy_from_slice(&d);
    }
    level
}

/// Inverse of [`dwt2d`].
pub fn idwt2d(level: &Level2d, bank: &FilterBank) -> Vec<f64> {
    let (rows, cols) = level.input_shape;
    let (brows, bcols) = level.band_shape;

    // axis 1 first (undo the second analysis pass)
    let mut a0 = vec![0.0; brows * cols];
    let mut d0 = vec![0.0; brows * cols];
    for r in 0..brows {
        let a = idwt1d(
            &level.aa[r * bcols..(r + 1) * bcols],
            &level.ad[r * bcols..(r + 1) * bcols],
            bank,
            cols,
        );
        a0[r * cols..(r + 1) * cols].copy_from_slice(&a);
        let d = idwt1d(
            &level.da[r * bcols..(r + 1) * bcols],
            &level.dd[r * bcols..(r + 1) * bcols],
            bank,
            cols,
        );
        d0[r * cols..(r + 1) * cols].copy_from_slice(&d);
    }

    // axis 0
    let mut out = vec![0.0; rows * cols];
    let mut acol = vec![0.0; brows];
    let mut dcol = vec![0.0; brows];
    for c in 0..cols {
        for r in 0..brows {
            acol[r] = a0[r * cols + c];
            dcol[r] = d0[r * cols + c];
        }
        let x = idwt1d(&acol, &dcol, bank, rows);
        for r in 0..rows {
            out[r * cols + c] = x[r];
        }
    }
    out
}
