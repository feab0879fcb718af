//! `thzcube` command-line tool: every pipeline stage as its own command, plus
//! the end-to-end `pipeline` command.
//!
//! Settings are resolved as preset defaults, then the `--config` file, then
//! command-line flags. Exit codes: 0 success, 2 configuration error, 3 I/O or
//! format error, 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};

use thzcube::analysis::{
    chemical_map, measure_structure, pixel_spectra, CcmConfig, PeakAnalysisConfig, Reference,
};
use thzcube::baseline_wavelet::denoise_wavelet;
use thzcube::config::KeyValues;
use thzcube::datacube::{
    read_cube, read_mask, snr_db, write_cube, write_map_csv, write_map_pgm, write_mask, write_slice_csv,
    write_slice_pgm,
};
use thzcube::dictionary::{read_dictionary, write_dictionary};
use thzcube::inpaint::interpolate;
use thzcube::phantom::{generate_layered, generate_spectral, LayeredPhantomSpec, PhantomSpec, SpectralPhantomSpec};
use thzcube::pipeline::{self, metrics_csv, MetricsRow, PipelineConfig};
use thzcube::{Datacube, Error, Result};

#[derive(Parser)]
#[command(name = "thzcube", version, about = "Dictionary-learning reconstruction of subsampled THz datacubes")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings shared by the stage commands. Each flag overrides the
/// config-file key of the same name (dashes become underscores).
#[derive(Args, Debug, Default, Clone)]
struct Settings {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter regime: tshape, tablet or custom.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Observation rate in (0, 1].
    #[arg(long)]
    rate: Option<f64>,
    /// Input SNR in dB, or `inf` for no noise.
    #[arg(long)]
    input_snr: Option<String>,
    /// spatial-shared or voxelwise.
    #[arg(long)]
    subsample_mode: Option<String>,
    #[arg(long)]
    block_nx: Option<usize>,
    #[arg(long)]
    block_ny: Option<usize>,
    #[arg(long)]
    block_b: Option<usize>,
    #[arg(long)]
    stride_x: Option<usize>,
    #[arg(long)]
    stride_y: Option<usize>,
    #[arg(long)]
    stride_t: Option<usize>,
    /// Number of dictionary atoms.
    #[arg(long)]
    dict_k: Option<usize>,
    /// Blocks per jointly coded subset.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Maximum SOMP support size.
    #[arg(long)]
    somp_max_atoms: Option<usize>,
    /// Relative SOMP residual tolerance.
    #[arg(long)]
    somp_tol: Option<f64>,
    /// SOMP noise-floor gain (0 disables).
    #[arg(long)]
    noise_gain: Option<f64>,
    /// Known noise level for the SOMP noise floor (estimated otherwise).
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    train_iters: Option<usize>,
    #[arg(long)]
    train_max_blocks: Option<usize>,
    #[arg(long)]
    plateau_tol: Option<f64>,
    /// bicubic-grid or idw-scattered.
    #[arg(long)]
    interp_method: Option<String>,
    #[arg(long)]
    idw_power: Option<f64>,
    #[arg(long)]
    idw_neighbors: Option<usize>,
    /// sym4 or haar.
    #[arg(long)]
    wavelet: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
    /// universal or fixed.
    #[arg(long)]
    tau_mode: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
}

impl Settings {
    fn flags(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        macro_rules! put {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    kv.insert(stringify!($field), v.to_string());
                }
            )*};
        }
        put!(
            preset, seed, rate, input_snr, subsample_mode, block_nx, block_ny, block_b, stride_x, stride_y,
            stride_t, dict_k, l, lambda, beta, somp_max_atoms, somp_tol, noise_gain, noise_sigma, train_iters,
            train_max_blocks, plateau_tol, interp_method, idw_power, idw_neighbors, wavelet, levels, tau_mode, tau
        );
        kv
    }

    fn resolve(&self) -> Result<PipelineConfig> {
        let file = match &self.config {
            Some(path) => KeyValues::read(path)?,
            None => KeyValues::default(),
        };
        PipelineConfig::from_key_values(&file.merged(&self.flags()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cube.
    Phantom {
        /// key = value phantom spec; defaults to the built-in phantom of `--kind`.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// layered (64x64x128 T-shape) or spectral (32x32x256 tablet).
        #[arg(long, default_value = "layered")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add noise and draw an observation mask.
    Subsample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask_out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Fill unobserved voxels.
    Interp {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Learn a dictionary from an interpolated cube.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Code and fuse an interpolated cube with a learned dictionary.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// 3D wavelet soft-threshold denoising.
    Wavelet {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// SNR table of interpolation, wavelet and (optionally) proposed outputs.
    Metrics {
        #[arg(long)]
        reference: PathBuf,
        /// Interpolated cube; the wavelet comparator is run on it.
        #[arg(long)]
        interpolated: PathBuf,
        #[arg(long)]
        proposed: Option<PathBuf>,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fill the wall_seconds column.
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        settings: Settings,
    },
    /// Depth and thickness from echo peaks.
    Structure {
        #[arg(long)]
        input: PathBuf,
        /// Millimetres per temporal sample.
        #[arg(long, default_value_t = 1.0)]
        depth_scale: f64,
        #[arg(long, default_value_t = 0.2)]
        min_prominence: f64,
        #[arg(long, default_value_t = 6)]
        min_separation: usize,
        /// Report whole-sample peak positions.
        #[arg(long)]
        no_refine: bool,
        /// Detect on the signed waveform instead of its magnitude.
        #[arg(long)]
        signed: bool,
        /// Per-pixel CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Cosine correlation map against a reference spectrum.
    Ccm {
        #[arg(long)]
        input: PathBuf,
        /// Reference pixel `x,y`; defaults to the centre.
        #[arg(long)]
        ref_pixel: Option<String>,
        /// Take the reference spectrum from this cube instead of `--input`.
        #[arg(long)]
        ref_cube: Option<PathBuf>,
        /// Inclusive bin range `lo,hi`.
        #[arg(long)]
        band: Option<String>,
        /// Also map this cube and report the mean absolute map difference.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Degrade a clean cube, then interpolate, train, reconstruct and score.
    Pipeline {
        /// Clean cube; a phantom is generated when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Phantom spec used when `--input` is omitted.
        #[arg(long)]
        phantom: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Metrics CSV path (default `<out-dir>/metrics.csv`).
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Also write every intermediate cube, the mask and the dictionary.
        #[arg(long)]
        keep_intermediates: bool,
        /// Fill the wall_seconds column.
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        settings: Settings,
    },
    /// Write one temporal frame as CSV and/or PGM.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
}

fn parse_pair(key: &str, s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config {
        key: key.to_string(),
        msg: format!("expected two integers like 3,4, got `{s}`"),
    };
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    log::info!("{name}: {:.2} s", start.elapsed().as_secs_f64());
    Ok(out)
}

fn builtin_phantom(kind: &str) -> Result<Datacube> {
    match kind {
        "layered" => generate_layered(&LayeredPhantomSpec::default()),
        "spectral" => generate_spectral(&SpectralPhantomSpec::tablet(32, 32, 256)),
        other => Err(Error::Config {
            key: "kind".into(),
            msg: format!("expected layered or spectral, got `{other}`"),
        }),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Phantom { spec, kind, out } => {
            let cube = match spec {
                Some(path) => PhantomSpec::read(path)?.generate()?,
                None => builtin_phantom(&kind)?,
            };
            write_cube(&cube, out)
        }
        Command::Subsample { input, out, mask_out, settings } => {
            let cfg = settings.resolve()?;
            let clean = read_cube(input)?;
            let (incomplete, mask) = stage("subsample", || pipeline::degrade(&clean, &cfg))?;
            write_cube(&incomplete, out)?;
            write_mask(&mask, mask_out)
        }
        Command::Interp { input, mask, out, settings } => {
            let cfg = settings.resolve()?;
            let (y, mask) = (read_cube(input)?, read_mask(mask)?);
            let filled = stage("interpolation", || interpolate(&y, &mask, &cfg.interp))?;
            write_cube(&filled, out)
        }
        Command::Train { input, out, settings } => {
            let cfg = settings.resolve()?;
            let y = read_cube(input)?;
            let (dict, errors) = stage("dictionary learning", || pipeline::train_on(&y, &cfg))?;
            for (i, e) in errors.iter().enumerate() {
                log::info!("alternation {}: coding error {e:.6e}", i + 1);
            }
            write_dictionary(&dict, out)
        }
        Command::Reconstruct { input, dict, out, settings } => {
            let cfg = settings.resolve()?;
            let (y, dict) = (read_cube(input)?, read_dictionary(dict)?);
            let x = stage("reconstruction", || pipeline::reconstruct_with(&y, &dict, &cfg))?;
            write_cube(&x, out)
        }
        Command::Wavelet { input, out, settings } => {
            let cfg = settings.resolve()?;
            let y = read_cube(input)?;
            let x = stage("wavelet", || denoise_wavelet(&y, &cfg.wavelet))?;
            write_cube(&x, out)
        }
        Command::Metrics { reference, interpolated, proposed, out, timing, settings } => {
            let cfg = settings.resolve()?;
            let clean = read_cube(reference)?;
            let y = read_cube(interpolated)?;
            let start = Instant::now();
            let w = denoise_wavelet(&y, &cfg.wavelet)?;
            let t_wavelet = start.elapsed().as_secs_f64();
            let row = |method, estimate: &Datacube, wall| -> Result<MetricsRow> {
                Ok(MetricsRow {
                    method,
                    rate: cfg.rate,
                    input_snr_db: cfg.input_snr_db,
                    output_snr_db: snr_db(&clean, estimate)?,
                    wall_seconds: wall,
                })
            };
            let mut rows = vec![row("wavelet", &w, t_wavelet)?, row("interp", &y, f64::NAN)?];
            if let Some(p) = proposed {
                rows.push(row("proposed", &read_cube(p)?, f64::NAN)?);
            }
            let text = metrics_csv(&rows, timing);
            match out {
                Some(path) => write_text(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Structure { input, depth_scale, min_prominence, min_separation, no_refine, signed, csv } => {
            let cfg = PeakAnalysisConfig {
                min_prominence,
                depth_scale,
                use_abs: !signed,
                min_separation,
                refine: !no_refine,
            };
            let report = measure_structure(&read_cube(input)?, &cfg)?;
            if let Some(path) = csv {
                report.write_csv(path)?;
            }
            print!("{}", report.summary());
            Ok(())
        }
        Command::Ccm { input, ref_pixel, ref_cube, band, compare, csv, pgm } => {
            let x = read_cube(input)?;
            let (rx, ry) = match ref_pixel {
                Some(s) => parse_pair("ref-pixel", &s)?,
                None => (x.nx() / 2, x.ny() / 2),
            };
            let reference = match ref_cube {
                Some(path) => {
                    let source = read_cube(path)?;
                    if rx >= source.nx() || ry >= source.ny() {
                        return Err(Error::Config {
                            key: "ref-pixel".into(),
                            msg: format!("({rx}, {ry}) outside the reference cube"),
                        });
                    }
                    Reference::Spectrum(pixel_spectra(&source)?.swap_remove(ry * source.nx() + rx))
                }
                None => Reference::Pixel(rx, ry),
            };
            let cfg = CcmConfig {
                band: band.map(|b| parse_pair("band", &b)).transpose()?,
            };
            let map = chemical_map(&x, &reference, &cfg)?;
            println!("mean ccm: {:.6}", map.mean());
            if let Some(path) = compare {
                let other = chemical_map(&read_cube(path)?, &reference, &cfg)?;
                if other.values.len() != map.values.len() {
                    return Err(Error::DimensionMismatch("compared cubes have different grids".into()));
                }
                let diff: f64 = map.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>()
                    / map.values.len() as f64;
                println!("mean |ccm difference|: {diff:.6}");
            }
            if let Some(path) = csv {
                write_map_csv(map.nx, map.ny, &map.values, path)?;
            }
            if let Some(path) = pgm {
                write_map_pgm(map.nx, map.ny, &map.values, path)?;
            }
            Ok(())
        }
        Command::Pipeline { input, phantom, out_dir, metrics, keep_intermediates, timing, settings } => {
            let cfg = settings.resolve()?;
            let clean = match (input, phantom) {
                (Some(path), _) => read_cube(path)?,
                (None, Some(spec)) => PhantomSpec::read(spec)?.generate()?,
                (None, None) => builtin_phantom("layered")?,
            };
            create_dir(&out_dir)?;
            let result = pipeline::run(&clean, &cfg)?;
            write_cube(&result.proposed, out_dir.join("reconstructed.thzc"))?;
            if keep_intermediates {
                write_cube(&clean, out_dir.join("clean.thzc"))?;
                write_cube(&result.incomplete, out_dir.join("incomplete.thzc"))?;
                write_mask(&result.mask, out_dir.join("mask.thzm"))?;
                write_cube(&result.interpolated, out_dir.join("interpolated.thzc"))?;
                write_cube(&result.wavelet, out_dir.join("wavelet.thzc"))?;
                write_dictionary(&result.dictionary, out_dir.join("dictionary.thzd"))?;
            }
            let path = metrics.unwrap_or_else(|| out_dir.join("metrics.csv"));
            let text = metrics_csv(&result.rows, timing);
            print!("{text}");
            write_text(&path, &text)
        }
        Command::Export { input, frame, csv, pgm } => {
            let x = read_cube(input)?;
            if csv.is_none() && pgm.is_none() {
                return Err(Error::Config {
                    key: "export".into(),
                    msg: "give --csv and/or --pgm".into(),
                });
            }
            if let Some(path) = csv {
                write_slice_csv(&x, frame, path)?;
            }
            if let Some(path) = pgm {
                write_slice_pgm(&x, frame, path)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure {n} threads: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
