//! File formats: the raw container (JSON sidecar + little-endian payload),
//! 16-bit PGM quick-looks, small CSV writers, and the sparse-matrix cache.
//!
//! One container format covers every array in the project. An array lives
//! in two files sharing a stem: `<stem>.json` describes shape, axis names,
//! dtype, and byte order; `<stem>.raw` holds the contiguous row-major
//! payload. Arrays are stored as little-endian f32; the matrix cache
//! additionally uses u32 (indices) and f64 (values) payloads.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{SinogramKind, SpectralSinogram, SpectralVolume};
use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::projector::SystemMatrix;

/// JSON sidecar for a raw payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawHeader {
    pub shape: Vec<usize>,
    pub axis_names: Vec<String>,
    pub dtype: String,
    pub byte_order: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_labels: Option<Vec<f64>>,
}

fn header_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

fn payload_path(stem: &Path) -> PathBuf {
    stem.with_extension("raw")
}

/// Write an f32 container (values are narrowed from f64).
pub fn save_raw(
    stem: &Path,
    values: &[f64],
    shape: &[usize],
    axis_names: &[&str],
    kind: &str,
    channel_labels: Option<&[f64]>,
) -> Result<()> {
    let expected: usize = shape.iter().product();
    if values.len() != expected {
        return Err(Error::Format(format!(
            "payload has {} values, shape {:?} needs {}",
            values.len(),
            shape,
            expected
        )));
    }
    if axis_names.len() != shape.len() {
        return Err(Error::Format("one axis name per shape entry".into()));
    }
    let header = RawHeader {
        shape: shape.to_vec(),
        axis_names: axis_names.iter().map(|s| s.to_string()).collect(),
        dtype: "f32".into(),
        byte_order: "little".into(),
        kind: kind.into(),
        channel_labels: channel_labels.map(|l| l.to_vec()),
    };
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(header_path(stem), serde_json::to_vec_pretty(&header)?)?;
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(payload_path(stem), bytes)?;
    Ok(())
}

/// Load a container saved by [`save_raw`]; values are widened to f64.
pub fn load_raw(stem: &Path) -> Result<(Vec<f64>, RawHeader)> {
    let hpath = header_path(stem);
    if !hpath.exists() {
        return Err(Error::Format(format!(
            "missing sidecar {}",
            hpath.display()
        )));
    }
    let header: RawHeader = serde_json::from_slice(&fs::read(&hpath)?)?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!("unknown dtype '{}'", header.dtype)));
    }
    if header.byte_order != "little" {
        return Err(Error::Format(format!(
            "unsupported byte order '{}'",
            header.byte_order
        )));
    }
    if header.axis_names.len() != header.shape.len() {
        return Err(Error::Format("axis_names length must match shape".into()));
    }
    let bytes = fs::read(payload_path(stem))?;
    let expected: usize = header.shape.iter().product::<usize>() * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header shape {:?} needs {}",
            bytes.len(),
            header.shape,
            expected
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((values, header))
}

pub fn save_sinogram(stem: &Path, sino: &SpectralSinogram) -> Result<()> {
    let (p, r, m) = sino.data().dim();
    let kind = match sino.kind() {
        SinogramKind::Counts => "counts",
        SinogramKind::Attenuation => "attenuation",
    };
    let values: Vec<f64> = sino.data().iter().copied().collect();
    save_raw(
        stem,
        &values,
        &[p, r, m],
        &["angle", "detector", "channel"],
        kind,
        Some(sino.channel_labels()),
    )
}

pub fn load_sinogram(stem: &Path) -> Result<SpectralSinogram> {
    let (values, header) = load_raw(stem)?;
    if header.shape.len() != 3 {
        return Err(Error::Format("sinogram container must be 3-D".into()));
    }
    let (p, r, m) = (header.shape[0], header.shape[1], header.shape[2]);
    let kind = match header.kind.as_str() {
        "counts" => SinogramKind::Counts,
        "attenuation" => SinogramKind::Attenuation,
        other => return Err(Error::Format(format!("unknown sinogram kind '{other}'"))),
    };
    let data =
        Array3::from_shape_vec((p, r, m), values).map_err(|e| Error::Format(e.to_string()))?;
    let labels = header
        .channel_labels
        .unwrap_or_else(|| (0..m).map(|k| k as f64).collect());
    SpectralSinogram::new(data, kind, labels)
}

/// Flat-field stack as one (flat, detector, channel) container.
pub fn save_flats(stem: &Path, flats: &[Array2<f64>]) -> Result<()> {
    if flats.is_empty() {
        return Err(Error::Invalid("no flats to save".into()));
    }
    let (r, m) = flats[0].dim();
    let mut values = Vec::with_capacity(flats.len() * r * m);
    for f in flats {
        if f.dim() != (r, m) {
            return Err(Error::Shape("flats must share shape".into()));
        }
        values.extend(f.iter().copied());
    }
    save_raw(
        stem,
        &values,
        &[flats.len(), r, m],
        &["flat", "detector", "channel"],
        "flats",
        None,
    )
}

pub fn load_flats(stem: &Path) -> Result<Vec<Array2<f64>>> {
    let (values, header) = load_raw(stem)?;
    match header.shape.as_slice() {
        // a single flat-field matrix is accepted as a stack of one
        [r, m] => {
            Ok(vec![Array2::from_shape_vec((*r, *m), values)
                .map_err(|e| Error::Format(e.to_string()))?])
        }
        [s, r, m] => {
            let mut flats = Vec::with_capacity(*s);
            for j in 0..*s {
                let slice = &values[j * r * m..(j + 1) * r * m];
                flats.push(
                    Array2::from_shape_vec((*r, *m), slice.to_vec())
                        .map_err(|e| Error::Format(e.to_string()))?,
                );
            }
            Ok(flats)
        }
        other => Err(Error::Format(format!(
            "flats container must be 2-D or 3-D, got {other:?}"
        ))),
    }
}

/// Flat estimate as a (detector, channel) container.
pub fn save_flat_estimate(stem: &Path, flat: &crate::data::FlatEstimate) -> Result<()> {
    let (r, m) = flat.values().dim();
    let values: Vec<f64> = flat.values().iter().copied().collect();
    save_raw(
        stem,
        &values,
        &[r, m],
        &["detector", "channel"],
        "flat_estimate",
        None,
    )
}

pub fn load_flat_estimate(stem: &Path) -> Result<crate::data::FlatEstimate> {
    let (values, header) = load_raw(stem)?;
    if header.shape.len() != 2 {
        return Err(Error::Format("flat estimate container must be 2-D".into()));
    }
    let arr = Array2::from_shape_vec((header.shape[0], header.shape[1]), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    crate::data::FlatEstimate::new(arr)
}

/// Volume as a (row, col, channel) container.
pub fn save_volume(stem: &Path, vol: &SpectralVolume) -> Result<()> {
    let g = vol.grid_side();
    let m = vol.num_channels();
    let mut values = Vec::with_capacity(g * g * m);
    for i in 0..g * g {
        for k in 0..m {
            values.push(vol.data()[[i, k]]);
        }
    }
    // stored as (row, col, channel): pixel-major matches data layout
    save_raw(
        stem,
        &values,
        &[g, g, m],
        &["row", "col", "channel"],
        "volume",
        None,
    )
}

pub fn load_volume(stem: &Path) -> Result<SpectralVolume> {
    let (values, header) = load_raw(stem)?;
    if header.shape.len() != 3 || header.shape[0] != header.shape[1] {
        return Err(Error::Format(
            "volume container must be (row, col, channel) with a square grid".into(),
        ));
    }
    let g = header.shape[0];
    let m = header.shape[2];
    let data =
        Array2::from_shape_vec((g * g, m), values).map_err(|e| Error::Format(e.to_string()))?;
    SpectralVolume::new(data, g)
}

pub fn save_geometry(path: &Path, geom: &ScanGeometry) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(geom)?)?;
    Ok(())
}

pub fn load_geometry(path: &Path) -> Result<ScanGeometry> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// 16-bit binary PGM quick-look with min-max windowing.
pub fn write_pgm16(path: &Path, image: ArrayView2<'_, f64>) -> Result<()> {
    let (rows, cols) = image.dim();
    let lo = image.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = image.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = Vec::with_capacity(rows * cols * 2 + 32);
    out.extend_from_slice(format!("P5\n{cols} {rows}\n65535\n").as_bytes());
    for v in image.iter() {
        let scaled = ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16;
        // PGM 16-bit samples are big-endian
        out.extend_from_slice(&scaled.to_be_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Two-column CSV `index,value`.
pub fn write_indexed_csv(path: &Path, header: &str, values: &[f64]) -> Result<()> {
    let mut text = String::with_capacity(values.len() * 24);
    text.push_str(header);
    text.push('\n');
    for (i, v) in values.iter().enumerate() {
        text.push_str(&format!("{i},{v:.17e}\n"));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Generic CSV from preformatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::new();
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixCacheHeader {
    rows: usize,
    cols: usize,
    num_angles: usize,
    num_detectors: usize,
    nnz: usize,
    format: String,
}

/// Cache a system matrix as `<stem>.json` + `<stem>.rowptr.raw` (u32) +
/// `<stem>.colidx.raw` (u32) + `<stem>.values.raw` (f64).
pub fn save_system_matrix(stem: &Path, matrix: &SystemMatrix) -> Result<()> {
    let header = MatrixCacheHeader {
        rows: matrix.num_rows(),
        cols: matrix.num_cols(),
        num_angles: matrix.num_angles(),
        num_detectors: matrix.num_detectors(),
        nnz: matrix.nnz(),
        format: "csr".into(),
    };
    if matrix.nnz() > u32::MAX as usize {
        return Err(Error::Format(
            "matrix too large for u32 cache indices".into(),
        ));
    }
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(header_path(stem), serde_json::to_vec_pretty(&header)?)?;
    let mut bytes = Vec::with_capacity(matrix.row_ptr().len() * 4);
    for &v in matrix.row_ptr() {
        bytes.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fs::write(stem.with_extension("rowptr.raw"), &bytes)?;
    bytes.clear();
    for &v in matrix.col_idx() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(stem.with_extension("colidx.raw"), &bytes)?;
    bytes.clear();
    for &v in matrix.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(stem.with_extension("values.raw"), &bytes)?;
    Ok(())
}

pub fn load_system_matrix(stem: &Path) -> Result<SystemMatrix> {
    let header: MatrixCacheHeader = serde_json::from_slice(&fs::read(header_path(stem))?)?;
    if header.format != "csr" {
        return Err(Error::Format(format!(
            "unknown matrix format '{}'",
            header.format
        )));
    }
    let read_u32 = |path: PathBuf, expected: usize| -> Result<Vec<u32>> {
        let bytes = fs::read(&path)?;
        if bytes.len() != expected * 4 {
            return Err(Error::Format(format!(
                "{} is {} bytes, expected {}",
                path.display(),
                bytes.len(),
                expected * 4
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };
    let row_ptr: Vec<usize> = read_u32(stem.with_extension("rowptr.raw"), header.rows + 1)?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let col_idx = read_u32(stem.with_extension("colidx.raw"), header.nnz)?;
    let vbytes = fs::read(stem.with_extension("values.raw"))?;
    if vbytes.len() != header.nnz * 8 {
        return Err(Error::Format("values payload length mismatch".into()));
    }
    let values: Vec<f64> = vbytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect();
    SystemMatrix::from_parts(
        row_ptr,
        col_idx,
        values,
        header.num_angles,
        header.num_detectors,
        header.cols,
    )
}
