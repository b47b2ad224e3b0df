//! `specring` — spectral-CT ring-artifact reduction pipeline.
//!
//! Exit codes: 0 success, 1 rejected input (validation), 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use specring::data::{SinogramKind, SpectralSinogram};
use specring::destripe::{SortSmoothParams, WfParams};
use specring::error::Error;
use specring::flatfield::{
    conventional_flat_estimate, lowrank_flat_estimate, singular_value_profile, stack_flats,
};
use specring::io;
use specring::metrics::{cnr, rd_per_channel, ring_energy, Roi};
use specring::phantom::{make_phantom, PhantomSpec};
use specring::pipeline::{run_from_manifest, run_pipeline, PipelineConfig, SimSection};
use specring::projector::build_system_matrix;
use specring::recon::{reconstruct_channels, FbpFilter, ReconMethod, RingFilter, TvConfig};
use specring::sim::{simulate_with_matrix, GainErrorSpec};

#[derive(Parser)]
#[command(
    name = "specring",
    version,
    about = "Spectral-CT ring-artifact reduction toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlatModeArg {
    Conv,
    Lr,
}

#[derive(Clone, Copy, ValueEnum)]
enum RingFilterArg {
    None,
    Wf,
    Sortsmooth,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fbp,
    Tv,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Ramp,
    Hann,
}

#[derive(Args)]
struct FlatArgs {
    /// Flat-field estimate to use
    #[arg(long, value_enum, default_value = "conv")]
    flat: FlatModeArg,
    /// Truncation rank for the low-rank estimate
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Use only the first N flat-fields
    #[arg(long)]
    num_flats: Option<usize>,
}

#[derive(Args)]
struct RingArgs {
    /// Sinogram destriping stage
    #[arg(long, value_enum, default_value = "none")]
    ring_filter: RingFilterArg,
    /// Damping width for the wavelet-Fourier filter
    #[arg(long, default_value_t = 0.9)]
    wf_sigma: f64,
    /// Decomposition levels for the wavelet-Fourier filter
    #[arg(long, default_value_t = 3)]
    wf_levels: usize,
    /// Smoothing window for the sort-smooth filter (odd)
    #[arg(long, default_value_t = 31)]
    ss_window: usize,
}

impl RingArgs {
    fn to_filter(&self) -> RingFilter {
        match self.ring_filter {
            RingFilterArg::None => RingFilter::None,
            RingFilterArg::Wf => RingFilter::Wf {
                params: WfParams {
                    levels: self.wf_levels,
                    damping_sigma: self.wf_sigma,
                    ..WfParams::default()
                },
            },
            RingFilterArg::Sortsmooth => RingFilter::SortSmooth {
                params: SortSmoothParams {
                    window: self.ss_window,
                    ..SortSmoothParams::default()
                },
            },
        }
    }
}

fn parse_roi(text: &str) -> Result<Roi, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err("ROI must be row0,col0,height,width".into());
    }
    let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.trim().parse()).collect();
    let nums = nums.map_err(|e| format!("bad ROI component: {e}"))?;
    Ok(Roi::new(nums[0], nums[1], nums[2], nums[3]))
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic spectral dataset (counts, flats, truth sidecar)
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        detectors: usize,
        #[arg(long, default_value_t = 90)]
        angles: usize,
        #[arg(long, default_value_t = 0.0)]
        angle_start: f64,
        #[arg(long, default_value_t = 2.0)]
        angle_increment: f64,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long, default_value_t = 16)]
        channels: usize,
        #[arg(long, default_value_t = 8)]
        flats: usize,
        /// Fraction of detectors with gain errors
        #[arg(long, default_value_t = 0.0)]
        gain_fraction: f64,
        /// Gain error amplitude
        #[arg(long, default_value_t = 0.0)]
        gain_amplitude: f64,
        /// Share one gain vector between scan and flats
        #[arg(long)]
        consistent_gain: bool,
        /// Expected counts at unit intensity
        #[arg(long, default_value_t = 400.0)]
        poisson_scale: f64,
        /// Disable counting noise
        #[arg(long)]
        no_noise: bool,
    },
    /// Estimate the incident intensity from measured flat-fields
    FlatEstimate {
        /// Flats container stem (without extension)
        #[arg(long)]
        flats: PathBuf,
        /// Output container stem
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flat: FlatArgs,
    },
    /// Convert counts to attenuation line integrals
    Correct {
        #[arg(long)]
        counts: PathBuf,
        /// Flat estimate container stem
        #[arg(long)]
        flat: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Scalar count floor (per-channel default when absent)
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Destripe an attenuation sinogram channel by channel
    Destripe {
        #[arg(long)]
        sino: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        ring: RingArgs,
    },
    /// Full single-variant reconstruction from a dataset directory
    Reconstruct {
        /// Dataset directory (counts, flats, geometry.json)
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "fbp")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "hann")]
        filter: FilterArg,
        #[arg(long, default_value_t = 0.005)]
        lambda: f64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        #[command(flatten)]
        flat: FlatArgs,
        #[command(flatten)]
        ring: RingArgs,
        /// Cache stem for the system matrix
        #[arg(long)]
        matrix_cache: Option<PathBuf>,
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Metrics for a reconstructed volume against a reference volume
    Evaluate {
        /// Volume container stem
        #[arg(long)]
        volume: PathBuf,
        /// Reference volume container stem (for the RD column)
        #[arg(long)]
        reference: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Signal ROI as row0,col0,height,width
        #[arg(long, value_parser = parse_roi)]
        roi_signal: Roi,
        /// Background ROI as row0,col0,height,width
        #[arg(long, value_parser = parse_roi)]
        roi_background: Roi,
        #[arg(long, default_value_t = 8)]
        annuli: usize,
        /// Label written into the CSV rows
        #[arg(long, default_value = "volume")]
        label: String,
    },
    /// Run a pipeline grid from a JSON config or a previous manifest
    Pipeline {
        /// Pipeline config JSON (omit for the built-in default)
        #[arg(long, conflicts_with = "from_manifest")]
        config: Option<PathBuf>,
        /// Re-run the configuration stored in a run manifest
        #[arg(long)]
        from_manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the singular-value profile of a flat-field stack as CSV
    SvdProfile {
        #[arg(long)]
        flats: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default pipeline configuration as JSON
    DefaultConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            out,
            seed,
            detectors,
            angles,
            angle_start,
            angle_increment,
            grid,
            channels,
            flats,
            gain_fraction,
            gain_amplitude,
            consistent_gain,
            poisson_scale,
            no_noise,
        } => {
            let sim = SimSection {
                detectors,
                angles,
                angle_start,
                angle_increment,
                grid_side: grid,
                channels,
                num_flats: flats,
                gain: GainErrorSpec {
                    fraction: gain_fraction,
                    amplitude: gain_amplitude,
                    consistent: consistent_gain,
                },
                poisson_scale,
                noise_disabled: no_noise,
            };
            let cfg = sim.sim_config(seed)?;
            cfg.validate()?;
            let phantom = make_phantom(&PhantomSpec::six_cylinders(grid, channels))?;
            let matrix = build_system_matrix(&cfg.geometry);
            let result = simulate_with_matrix(&phantom, &cfg, &matrix)?;
            io::save_sinogram(&out.join("counts"), &result.counts)?;
            io::save_flats(&out.join("flats"), &result.flats)?;
            io::save_geometry(&out.join("geometry.json"), &cfg.geometry)?;
            io::save_flat_estimate(
                &out.join("truth").join("true_flat"),
                &result.truth.true_flat,
            )?;
            io::save_volume(&out.join("truth").join("phantom"), &result.truth.phantom)?;
            println!("dataset written to {}", out.display());
            Ok(())
        }
        Command::FlatEstimate { flats, out, flat } => {
            let stack = stack_flats(&io::load_flats(&flats)?)?;
            let estimate = match flat.flat {
                FlatModeArg::Conv => conventional_flat_estimate(&stack, flat.num_flats)?,
                FlatModeArg::Lr => lowrank_flat_estimate(&stack, flat.rank, flat.num_flats)?,
            };
            io::save_flat_estimate(&out, &estimate)?;
            println!("flat estimate written to {}", out.display());
            Ok(())
        }
        Command::Correct {
            counts,
            flat,
            out,
            floor,
        } => {
            let counts = io::load_sinogram(&counts)?;
            let flat = io::load_flat_estimate(&flat)?;
            let corrected = specring::data::transmission_correct(&counts, &flat, floor)?;
            io::save_sinogram(&out, &corrected)?;
            println!("attenuation sinogram written to {}", out.display());
            Ok(())
        }
        Command::Destripe { sino, out, ring } => {
            let input = io::load_sinogram(&sino)?;
            if input.kind() != SinogramKind::Attenuation {
                return Err(Error::Invalid(
                    "destripe expects an attenuation sinogram (run `correct` first)".into(),
                ));
            }
            let filter = ring.to_filter();
            if matches!(filter, RingFilter::None) {
                return Err(Error::Invalid(
                    "choose --ring-filter wf or sortsmooth".into(),
                ));
            }
            let (p, r, m) = input.data().dim();
            let mut data = ndarray::Array3::zeros((p, r, m));
            for k in 0..m {
                let filtered = match &filter {
                    RingFilter::Wf { params } => {
                        specring::destripe::wf_destripe(input.channel(k), params)?
                    }
                    RingFilter::SortSmooth { params } => {
                        specring::destripe::sort_smooth_destripe(input.channel(k), params)?
                    }
                    RingFilter::None => unreachable!(),
                };
                for a in 0..p {
                    for d in 0..r {
                        data[[a, d, k]] = filtered[[a, d]];
                    }
                }
            }
            let result = SpectralSinogram::new(
                data,
                SinogramKind::Attenuation,
                input.channel_labels().to_vec(),
            )?;
            io::save_sinogram(&out, &result)?;
            println!("destriped sinogram written to {}", out.display());
            Ok(())
        }
        Command::Reconstruct {
            dataset,
            out,
            method,
            filter,
            lambda,
            max_iter,
            flat,
            ring,
            matrix_cache,
            floor,
        } => {
            let counts = io::load_sinogram(&dataset.join("counts"))?;
            let flats = io::load_flats(&dataset.join("flats"))?;
            let geom = io::load_geometry(&dataset.join("geometry.json"))?;
            let stack = stack_flats(&flats)?;
            let estimate = match flat.flat {
                FlatModeArg::Conv => conventional_flat_estimate(&stack, flat.num_flats)?,
                FlatModeArg::Lr => lowrank_flat_estimate(&stack, flat.rank, flat.num_flats)?,
            };
            let matrix = match &matrix_cache {
                Some(stem) if stem.with_extension("json").exists() => io::load_system_matrix(stem)?,
                _ => {
                    let m = build_system_matrix(&geom);
                    if let Some(stem) = &matrix_cache {
                        io::save_system_matrix(stem, &m)?;
                    }
                    m
                }
            };
            let method = match method {
                MethodArg::Fbp => ReconMethod::Fbp {
                    filter: match filter {
                        FilterArg::Ramp => FbpFilter::Ramp,
                        FilterArg::Hann => FbpFilter::Hann,
                    },
                },
                MethodArg::Tv => ReconMethod::WlsTv {
                    tv: TvConfig {
                        lambda,
                        max_iter,
                        ..TvConfig::default()
                    },
                },
            };
            let volume = reconstruct_channels(
                &counts,
                &estimate,
                &matrix,
                &geom,
                &method,
                &ring.to_filter(),
                floor,
            )?;
            io::save_volume(&out, &volume)?;
            for k in 0..volume.num_channels() {
                io::write_pgm16(
                    &out.with_extension(format!("ch{k}.pgm")),
                    volume.channel_image(k).view(),
                )?;
            }
            println!("volume written to {}", out.display());
            Ok(())
        }
        Command::Evaluate {
            volume,
            reference,
            out,
            roi_signal,
            roi_background,
            annuli,
            label,
        } => {
            let vol = io::load_volume(&volume)?;
            let reference = io::load_volume(&reference)?;
            let rd = rd_per_channel(&vol, &reference)?;
            let g = vol.grid_side();
            let center = ((g as f64 - 1.0) / 2.0, (g as f64 - 1.0) / 2.0);
            let mut rows = Vec::new();
            for (k, &rd_k) in rd.iter().enumerate() {
                let image = vol.channel_image(k);
                let c = cnr(image.view(), &roi_signal, &roi_background)?;
                let e = ring_energy(image.view(), center, annuli)?;
                rows.push(format!("{k},{label},,,{c:.10e},{rd_k:.10e},{e:.10e}"));
            }
            io::write_csv(
                &out,
                "channel_index,label,method,flat_mode,cnr,rd,ring_energy",
                &rows,
            )?;
            println!("metrics written to {}", out.display());
            Ok(())
        }
        Command::Pipeline {
            config,
            from_manifest,
            out,
        } => {
            let report = if let Some(manifest) = from_manifest {
                run_from_manifest(&manifest, &out)?
            } else {
                let cfg = match config {
                    Some(path) => PipelineConfig::from_json(&std::fs::read_to_string(path)?)?,
                    None => PipelineConfig::default(),
                };
                run_pipeline(&cfg, &out)?
            };
            let (kmin, kmed, kmax) = report.selected_channels;
            println!(
                "pipeline complete: {} variants, RD-selected channels min={kmin} median={kmed} max={kmax}",
                report.volumes.len()
            );
            println!("artifacts in {}", report.out_dir.display());
            Ok(())
        }
        Command::SvdProfile { flats, out } => {
            let stack = stack_flats(&io::load_flats(&flats)?)?;
            let profile = singular_value_profile(&stack)?;
            io::write_indexed_csv(&out, "index,value", &profile)?;
            println!("singular-value profile written to {}", out.display());
            Ok(())
        }
        Command::DefaultConfig => {
            let cfg = PipelineConfig::default();
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(())
        }
    }
}
