//! End-to-end pipeline: dataset acquisition (simulated or on disk), flat
//! estimation, per-channel reconstruction across a grid of pipeline
//! variants, metrics, and a reproducible run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{FlatEstimate, SpectralSinogram, SpectralVolume};
use crate::destripe::{SortSmoothParams, WfParams};
use crate::error::{invalid, Error, Result};
use crate::flatfield::{
    conventional_flat_estimate, lowrank_flat_estimate, singular_value_profile, stack_flats,
};
use crate::geometry::ScanGeometry;
use crate::io;
use crate::metrics::{cnr, rd_per_channel, ring_energy, select_channels_by_rd, Roi};
use crate::phantom::{make_phantom, PhantomSpec};
use crate::projector::build_system_matrix;
use crate::recon::{reconstruct_channels, FbpFilter, ReconMethod, RingFilter, TvConfig};
use crate::sim::{simulate_with_matrix, GainErrorSpec, SimConfig};

/// Env var capping channel-level parallelism.
pub const THREADS_ENV: &str = "SPECRING_THREADS";

/// Which flat-field estimate a pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlatMode {
    Conv,
    #[serde(rename = "lr")]
    LowRank,
}

/// Ring-reduction stage of a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingChoice {
    None,
    Wf,
    SortSmooth,
}

/// Reconstruction model of a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Fbp,
    Tv,
}

/// One pipeline variant in the run grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub label: String,
    pub flat: FlatMode,
    pub ring: RingChoice,
    pub method: MethodChoice,
}

impl PipelineSpec {
    fn new(label: &str, flat: FlatMode, ring: RingChoice, method: MethodChoice) -> Self {
        PipelineSpec {
            label: label.into(),
            flat,
            ring,
            method,
        }
    }
}

/// The standard 4x2 grid: conventional, wavelet-Fourier, sort-smooth, and
/// low-rank flat-fields, each reconstructed with FBP and with WLS-TV.
pub fn standard_grid() -> Vec<PipelineSpec> {
    use FlatMode::*;
    use MethodChoice::*;
    use RingChoice::*;
    vec![
        PipelineSpec::new("fbp", Conv, None, Fbp),
        PipelineSpec::new("wf-fbp", Conv, Wf, Fbp),
        PipelineSpec::new("nlm-fbp", Conv, SortSmooth, Fbp),
        PipelineSpec::new("lr-fbp", LowRank, None, Fbp),
        PipelineSpec::new("tv", Conv, None, Tv),
        PipelineSpec::new("wf-tv", Conv, Wf, Tv),
        PipelineSpec::new("nlm-tv", Conv, SortSmooth, Tv),
        PipelineSpec::new("lr-tv", LowRank, None, Tv),
    ]
}

/// Simulation request inside a pipeline config: desk-scale scanner with
/// the default six-cylinder phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSection {
    pub detectors: usize,
    pub angles: usize,
    pub angle_start: f64,
    pub angle_increment: f64,
    pub grid_side: usize,
    pub channels: usize,
    pub num_flats: usize,
    pub gain: GainErrorSpec,
    pub poisson_scale: f64,
    pub noise_disabled: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            detectors: 128,
            angles: 90,
            angle_start: 0.0,
            angle_increment: 2.0,
            grid_side: 128,
            channels: 16,
            num_flats: 8,
            gain: GainErrorSpec::default(),
            poisson_scale: 400.0,
            noise_disabled: false,
        }
    }
}

impl SimSection {
    /// The ring-artifact scenario: 5% of detectors gain-perturbed, flats
    /// drawn with gains independent of the scan's.
    pub fn ring_scenario() -> Self {
        SimSection {
            gain: GainErrorSpec {
                fraction: 0.05,
                amplitude: 0.05,
                consistent: false,
            },
            ..SimSection::default()
        }
    }

    pub fn geometry(&self) -> Result<ScanGeometry> {
        ScanGeometry::with_uniform_angles(
            self.detectors,
            self.angles,
            self.angle_start,
            self.angle_increment,
            self.grid_side,
        )
    }

    pub fn sim_config(&self, seed: u64) -> Result<SimConfig> {
        let geom = self.geometry()?;
        let mut cfg = SimConfig::desk_default(geom, self.channels, seed);
        cfg.num_flats = self.num_flats;
        cfg.gain_error = self.gain.clone();
        cfg.poisson_scale = self.poisson_scale;
        cfg.noise_disabled = self.noise_disabled;
        Ok(cfg)
    }
}

/// Where the pipeline's measurements come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Simulate { sim: SimSection },
    Dataset { dir: PathBuf },
}

/// Full pipeline configuration; serialized verbatim into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub source: DataSource,
    pub pipelines: Vec<PipelineSpec>,
    /// Truncation rank for the low-rank flat estimate.
    pub rank: usize,
    /// Use only the first `use_first` flats for estimation (all if absent).
    pub use_first: Option<usize>,
    /// Scalar count floor; per-channel default when absent.
    pub floor: Option<f64>,
    pub fbp_filter: FbpFilter,
    pub tv: TvConfig,
    pub wf: WfParams,
    pub sort_smooth: SortSmoothParams,
    pub roi_signal: Roi,
    pub roi_background: Roi,
    pub n_annuli: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            source: DataSource::Simulate {
                sim: SimSection::default(),
            },
            pipelines: standard_grid(),
            rank: 1,
            use_first: None,
            floor: None,
            fbp_filter: FbpFilter::Hann,
            tv: TvConfig::default(),
            wf: WfParams::default(),
            sort_smooth: SortSmoothParams::default(),
            // signal inside the first cylinder of the default phantom,
            // background on the ring-prone center
            roi_signal: Roi::new(56, 94, 14, 14),
            roi_background: Roi::new(56, 56, 14, 14),
            n_annuli: 8,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipelines.is_empty() {
            return Err(invalid("at least one pipeline is required"));
        }
        if self.rank == 0 {
            return Err(invalid("low-rank truncation rank must be positive"));
        }
        if let Some(s) = self.use_first {
            if s == 0 {
                return Err(invalid("use_first must be positive when given"));
            }
        }
        if let Some(f) = self.floor {
            if !(f.is_finite() && f > 0.0) {
                return Err(invalid("count floor must be positive"));
            }
        }
        if self.n_annuli == 0 {
            return Err(invalid("annulus count must be positive"));
        }
        self.tv.validate()?;
        if !(self.wf.damping_sigma.is_finite() && self.wf.damping_sigma > 0.0)
            || self.wf.levels == 0
        {
            return Err(invalid("wavelet-Fourier parameters are invalid"));
        }
        if self.sort_smooth.window.is_multiple_of(2) || self.sort_smooth.window < 3 {
            return Err(invalid("sort-smooth window must be odd and >= 3"));
        }
        if let DataSource::Simulate { sim } = &self.source {
            sim.geometry()?;
            sim.sim_config(self.seed)?.validate()?;
        }
        Ok(())
    }
}

/// Metrics for one (pipeline, channel) pair.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub channel_index: usize,
    pub label: String,
    pub method: MethodChoice,
    pub flat_mode: FlatMode,
    pub cnr: f64,
    pub rd: f64,
    pub ring_energy: f64,
}

/// Everything a pipeline run produced.
#[derive(Debug)]
pub struct PipelineReport {
    pub metrics: Vec<MetricsRow>,
    pub selected_channels: (usize, usize, usize),
    pub volumes: Vec<(String, SpectralVolume)>,
    pub out_dir: PathBuf,
}

/// Run manifest: everything needed to reproduce the run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub artifacts: Vec<String>,
}

fn thread_pool() -> Option<rayon::ThreadPool> {
    let n: usize = std::env::var(THREADS_ENV).ok()?.parse().ok()?;
    if n == 0 {
        return None;
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()
}

struct LoadedData {
    counts: SpectralSinogram,
    flats: Vec<ndarray::Array2<f64>>,
    geometry: ScanGeometry,
}

fn acquire_data(
    config: &PipelineConfig,
    out_dir: &Path,
    artifacts: &mut Vec<String>,
) -> Result<LoadedData> {
    match &config.source {
        DataSource::Simulate { sim } => {
            let cfg = sim.sim_config(config.seed)?;
            let phantom = make_phantom(&PhantomSpec::six_cylinders(sim.grid_side, sim.channels))?;
            let matrix = build_system_matrix(&cfg.geometry);
            let out = simulate_with_matrix(&phantom, &cfg, &matrix)?;
            let dataset = out_dir.join("dataset");
            io::save_sinogram(&dataset.join("counts"), &out.counts)?;
            io::save_flats(&dataset.join("flats"), &out.flats)?;
            io::save_geometry(&dataset.join("geometry.json"), &cfg.geometry)?;
            io::save_flat_estimate(
                &dataset.join("truth").join("true_flat"),
                &out.truth.true_flat,
            )?;
            io::save_volume(&dataset.join("truth").join("phantom"), &out.truth.phantom)?;
            for name in [
                "dataset/counts",
                "dataset/flats",
                "dataset/geometry.json",
                "dataset/truth/true_flat",
                "dataset/truth/phantom",
            ] {
                artifacts.push(name.to_string());
            }
            Ok(LoadedData {
                counts: out.counts,
                flats: out.flats,
                geometry: cfg.geometry,
            })
        }
        DataSource::Dataset { dir } => Ok(LoadedData {
            counts: io::load_sinogram(&dir.join("counts"))?,
            flats: io::load_flats(&dir.join("flats"))?,
            geometry: io::load_geometry(&dir.join("geometry.json"))?,
        }),
    }
}

/// Execute a pipeline configuration, writing all artifacts under
/// `out_dir`: per-pipeline reconstruction containers, the singular-value
/// CSV, the metrics CSV, quick-looks for the RD-selected channels, and
/// `run_manifest.json`.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut artifacts: Vec<String> = Vec::new();

    let data = acquire_data(config, out_dir, &mut artifacts)?;
    let geom = &data.geometry;
    if data.counts.num_angles() != geom.num_angles()
        || data.counts.num_detectors() != geom.num_detectors()
    {
        return Err(Error::Shape("counts do not match the geometry".into()));
    }

    let stack = stack_flats(&data.flats)?;
    let profile = singular_value_profile(&stack)?;
    io::write_indexed_csv(
        &out_dir.join("singular_values.csv"),
        "index,value",
        &profile,
    )?;
    artifacts.push("singular_values.csv".into());

    let needs_conv = config.pipelines.iter().any(|p| p.flat == FlatMode::Conv);
    let conv_flat = if needs_conv {
        Some(conventional_flat_estimate(&stack, config.use_first)?)
    } else {
        None
    };
    let lr_flat = lowrank_flat_estimate(&stack, config.rank, config.use_first)?;

    let matrix = build_system_matrix(geom);
    let pool = thread_pool();
    let run_one = |spec: &PipelineSpec| -> Result<SpectralVolume> {
        let flat: &FlatEstimate = match spec.flat {
            FlatMode::Conv => conv_flat.as_ref().expect("conv flat prepared above"),
            FlatMode::LowRank => &lr_flat,
        };
        let ring = match spec.ring {
            RingChoice::None => RingFilter::None,
            RingChoice::Wf => RingFilter::Wf {
                params: config.wf.clone(),
            },
            RingChoice::SortSmooth => RingFilter::SortSmooth {
                params: config.sort_smooth.clone(),
            },
        };
        let method = match spec.method {
            MethodChoice::Fbp => ReconMethod::Fbp {
                filter: config.fbp_filter,
            },
            MethodChoice::Tv => ReconMethod::WlsTv {
                tv: config.tv.clone(),
            },
        };
        let recon = || {
            reconstruct_channels(
                &data.counts,
                flat,
                &matrix,
                geom,
                &method,
                &ring,
                config.floor,
            )
        };
        match &pool {
            Some(p) => p.install(recon),
            None => recon(),
        }
    };

    // The LR-FBP volume is the RD reference; reuse it when it is part of
    // the grid.
    let reference_spec = PipelineSpec::new(
        "lr-fbp",
        FlatMode::LowRank,
        RingChoice::None,
        MethodChoice::Fbp,
    );
    let mut volumes: Vec<(String, SpectralVolume)> = Vec::new();
    for spec in &config.pipelines {
        let vol = run_one(spec)?;
        io::save_volume(&out_dir.join(format!("recon_{}", spec.label)), &vol)?;
        artifacts.push(format!("recon_{}", spec.label));
        volumes.push((spec.label.clone(), vol));
    }
    let reference = match config.pipelines.iter().position(|s| {
        s.flat == reference_spec.flat
            && s.ring == reference_spec.ring
            && s.method == reference_spec.method
    }) {
        Some(idx) => volumes[idx].1.clone(),
        None => run_one(&reference_spec)?,
    };

    // Channel selection ranks conventional FBP against the reference;
    // fall back to the reference when the grid has no plain FBP.
    let fbp_vol = config
        .pipelines
        .iter()
        .position(|s| {
            s.flat == FlatMode::Conv && s.ring == RingChoice::None && s.method == MethodChoice::Fbp
        })
        .map(|idx| volumes[idx].1.clone());
    let selected = match &fbp_vol {
        Some(v) => select_channels_by_rd(v, &reference)?,
        None => select_channels_by_rd(&reference, &reference)?,
    };

    let g = geom.grid_side();
    let center = ((g as f64 - 1.0) / 2.0, (g as f64 - 1.0) / 2.0);
    let mut metrics = Vec::new();
    let mut rows = Vec::new();
    for (spec, (label, vol)) in config.pipelines.iter().zip(volumes.iter()) {
        let rd = rd_per_channel(vol, &reference)?;
        for (k, &rd_k) in rd.iter().enumerate() {
            let image = vol.channel_image(k);
            let row = MetricsRow {
                channel_index: k,
                label: label.clone(),
                method: spec.method,
                flat_mode: spec.flat,
                cnr: cnr(image.view(), &config.roi_signal, &config.roi_background)?,
                rd: rd_k,
                ring_energy: ring_energy(image.view(), center, config.n_annuli)?,
            };
            rows.push(format!(
                "{},{},{},{},{:.10e},{:.10e},{:.10e}",
                row.channel_index,
                row.label,
                match row.method {
                    MethodChoice::Fbp => "fbp",
                    MethodChoice::Tv => "tv",
                },
                match row.flat_mode {
                    FlatMode::Conv => "conv",
                    FlatMode::LowRank => "lr",
                },
                row.cnr,
                row.rd,
                row.ring_energy
            ));
            metrics.push(row);
        }
        for (tag, k) in [
            ("rdmin", selected.0),
            ("rdmed", selected.1),
            ("rdmax", selected.2),
        ] {
            let path = out_dir.join(format!("ql_{label}_{tag}_ch{k}.pgm"));
            io::write_pgm16(&path, vol.channel_image(k).view())?;
            artifacts.push(path.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    io::write_csv(
        &out_dir.join("metrics.csv"),
        "channel_index,label,method,flat_mode,cnr,rd,ring_energy",
        &rows,
    )?;
    artifacts.push("metrics.csv".into());

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        artifacts: artifacts.clone(),
    };
    std::fs::write(
        out_dir.join("run_manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;

    Ok(PipelineReport {
        metrics,
        selected_channels: selected,
        volumes,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Re-run the pipeline recorded in a manifest file.
pub fn run_from_manifest(manifest_path: &Path, out_dir: &Path) -> Result<PipelineReport> {
    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
    run_pipeline(&manifest.config, out_dir)
}
