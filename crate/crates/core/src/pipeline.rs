//! End-to-end orchestration: degrade a clean cube (noise, subsampling), fill
//! it by interpolation, learn a dictionary, fuse, and compare against the
//! interpolation-only and wavelet baselines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::baseline_wavelet::{denoise_wavelet, SigmaEstimate, WaveletConfig};
use crate::blocks::{block_means_of, BlockGeometry};
use crate::config::{parse_db, parse_triple, KeyValues, Preset};
use crate::datacube::{add_gaussian_noise, estimate_noise_sigma, snr_db, subsample, Datacube, Mask, NoiseSpec, SubsampleMode};
use crate::dictionary::{learn, Dictionary, TrainConfig};
use crate::error::{Error, Result};
use crate::inpaint::{interpolate, InterpConfig};
use crate::reconstruct::{fuse, ReconParams};
use crate::sparse_mmv::{code_all, SompConfig};

/// Every key understood by [`PipelineConfig::apply`].
pub const PIPELINE_KEYS: &[&str] = &[
    "preset",
    "block",
    "block_nx",
    "block_ny",
    "block_b",
    "stride",
    "stride_x",
    "stride_y",
    "stride_t",
    "dict_k",
    "l",
    "lambda",
    "beta",
    "somp_max_atoms",
    "somp_tol",
    "noise_gain",
    "noise_sigma",
    "train_iters",
    "train_max_blocks",
    "plateau_tol",
    "replace_unused",
    "rate",
    "input_snr",
    "subsample_mode",
    "seed",
    "interp_method",
    "idw_power",
    "idw_neighbors",
    "wavelet",
    "levels",
    "tau_mode",
    "tau",
    "sigma",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub block: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub train: TrainConfig,
    pub recon: ReconParams,
    pub rate: f64,
    /// Target input SNR in dB; `f64::INFINITY` adds no noise.
    pub input_snr_db: f64,
    pub subsample_mode: SubsampleMode,
    pub seed: u64,
    pub interp: InterpConfig,
    pub wavelet: WaveletConfig,
    /// When positive, SOMP also stops at a residual RMS of
    /// `noise_gain * sigma`, with `sigma` estimated from the interpolated
    /// cube. 0 disables the bound.
    pub noise_gain: f64,
    /// Explicit noise level for that bound, replacing the estimate.
    pub noise_sigma: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::from_preset(Preset::Tshape)
    }
}

impl PipelineConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let p = preset.params();
        Self {
            preset,
            block: p.block,
            stride: p.stride,
            train: TrainConfig {
                atoms: p.atoms,
                l: p.l,
                somp: SompConfig {
                    max_atoms: p.max_atoms,
                    ..SompConfig::default()
                },
                ..TrainConfig::default()
            },
            recon: ReconParams {
                lambda: p.lambda,
                beta: p.beta,
            },
            rate: 0.1,
            input_snr_db: 17.0,
            subsample_mode: SubsampleMode::SpatialShared,
            seed: 0,
            interp: InterpConfig::default(),
            wavelet: WaveletConfig::default(),
            noise_gain: p.noise_gain,
            noise_sigma: None,
        }
    }

    /// Builds a config from `kv`: the `preset` key (default tshape) picks the
    /// base values, every other key overrides one of them.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let preset = kv.get::<Preset>("preset")?.unwrap_or_default();
        let mut cfg = Self::from_preset(preset);
        cfg.apply(kv)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.ensure_known(PIPELINE_KEYS)?;
        if let Some(v) = kv.get_str("block") {
            self.block = parse_triple("block", v)?;
        }
        if let Some(v) = kv.get_str("stride") {
            self.stride = parse_triple("stride", v)?;
        }
        set(kv, "block_nx", &mut self.block.0)?;
        set(kv, "block_ny", &mut self.block.1)?;
        set(kv, "block_b", &mut self.block.2)?;
        set(kv, "stride_x", &mut self.stride.0)?;
        set(kv, "stride_y", &mut self.stride.1)?;
        set(kv, "stride_t", &mut self.stride.2)?;
        set(kv, "dict_k", &mut self.train.atoms)?;
        set(kv, "l", &mut self.train.l)?;
        set(kv, "lambda", &mut self.recon.lambda)?;
        set(kv, "beta", &mut self.recon.beta)?;
        set(kv, "somp_max_atoms", &mut self.train.somp.max_atoms)?;
        set(kv, "somp_tol", &mut self.train.somp.residual_tol)?;
        set(kv, "noise_gain", &mut self.noise_gain)?;
        if let Some(v) = kv.get("noise_sigma")? {
            self.noise_sigma = Some(v);
        }
        set(kv, "train_iters", &mut self.train.iterations)?;
        set(kv, "train_max_blocks", &mut self.train.max_training_blocks)?;
        set(kv, "plateau_tol", &mut self.train.plateau_tol)?;
        set(kv, "replace_unused", &mut self.train.replace_unused)?;
        set(kv, "rate", &mut self.rate)?;
        if let Some(v) = kv.get_str("input_snr") {
            self.input_snr_db = parse_db("input_snr", v)?;
        }
        set(kv, "subsample_mode", &mut self.subsample_mode)?;
        set(kv, "seed", &mut self.seed)?;
        set(kv, "interp_method", &mut self.interp.method)?;
        set(kv, "idw_power", &mut self.interp.idw_power)?;
        set(kv, "idw_neighbors", &mut self.interp.idw_neighbors)?;
        set(kv, "wavelet", &mut self.wavelet.wavelet)?;
        set(kv, "levels", &mut self.wavelet.levels)?;
        set(kv, "tau_mode", &mut self.wavelet.threshold_mode)?;
        set(kv, "tau", &mut self.wavelet.fixed_tau)?;
        if let Some(v) = kv.get::<f64>("sigma")? {
            self.wavelet.sigma_estimate = SigmaEstimate::Known(v);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::config("rate", format!("must be in (0, 1], got {}", self.rate)));
        }
        if self.input_snr_db.is_nan() || self.input_snr_db == f64::NEG_INFINITY {
            return Err(Error::config("input_snr", "must be a number or inf"));
        }
        if self.train.l == 0 {
            return Err(Error::config("l", "must be at least 1"));
        }
        if self.train.atoms == 0 {
            return Err(Error::config("dict_k", "must be at least 1"));
        }
        if self.train.iterations == 0 {
            return Err(Error::config("train_iters", "must be at least 1"));
        }
        if self.train.somp.max_atoms == 0 || self.train.somp.max_atoms > self.train.atoms {
            return Err(Error::config("somp_max_atoms", format!("must be in 1..={}", self.train.atoms)));
        }
        if !(self.noise_gain >= 0.0 && self.noise_gain.is_finite()) {
            return Err(Error::config("noise_gain", format!("must be finite and >= 0, got {}", self.noise_gain)));
        }
        if !(self.recon.lambda >= 0.0 && self.recon.beta >= 0.0) {
            return Err(Error::config("lambda", "lambda and beta must be >= 0"));
        }
        Ok(())
    }

    pub fn geometry(&self, dims: (usize, usize, usize)) -> Result<BlockGeometry> {
        BlockGeometry::new(self.block, self.stride, dims).map_err(|e| Error::config("block", e.to_string()))
    }

    /// Training config with its own seed stream derived from `seed`.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(2),
            ..self.train.clone()
        }
    }

    /// SOMP settings for coding blocks of `y`, with the noise-level bound
    /// resolved.
    pub fn somp_for(&self, y: &Datacube) -> Result<SompConfig> {
        let mut somp = self.train.somp;
        if self.noise_gain > 0.0 {
            let sigma = match self.noise_sigma {
                Some(s) => s,
                None => estimate_noise_sigma(y),
            };
            somp.noise_floor = self.noise_gain * sigma;
            log::debug!("pursuit noise floor {:.4e} (sigma {sigma:.4e})", somp.noise_floor);
        }
        Ok(somp)
    }

    pub fn noise_seed(&self) -> u64 {
        self.seed
    }

    pub fn mask_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
}

fn set<T: std::str::FromStr>(kv: &KeyValues, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = kv.get(key)? {
        *slot = v;
    }
    Ok(())
}

/// Noisy, subsampled observation of `clean`: noise is added to the full cube,
/// then the mask is drawn and unobserved voxels are zeroed.
pub fn degrade(clean: &Datacube, cfg: &PipelineConfig) -> Result<(Datacube, Mask)> {
    let noisy = add_gaussian_noise(
        clean,
        &NoiseSpec {
            target_snr_db: cfg.input_snr_db,
            seed: cfg.noise_seed(),
        },
    )?;
    subsample(&noisy, cfg.rate, cfg.subsample_mode, cfg.mask_seed())
}

/// Codes every block of `y` with `dict` and fuses.
pub fn reconstruct_with(y: &Datacube, dict: &Dictionary, cfg: &PipelineConfig) -> Result<Datacube> {
    let geometry = cfg.geometry(y.dims())?;
    let codes = code_all(y, &geometry, dict, cfg.train.l, &cfg.somp_for(y)?)?;
    let means = block_means_of(y, &geometry)?;
    fuse(y, dict, &codes, &means, &geometry, &cfg.recon)
}

/// Learns a dictionary from the blocks of `y`.
pub fn train_on(y: &Datacube, cfg: &PipelineConfig) -> Result<(Dictionary, Vec<f64>)> {
    let geometry = cfg.geometry(y.dims())?;
    let train = TrainConfig {
        somp: cfg.somp_for(y)?,
        ..cfg.train_config()
    };
    let (dict, coding_error, _, _) = learn(y, &geometry, &train)?;
    Ok((dict, coding_error))
}

/// One metrics row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub method: &'static str,
    pub rate: f64,
    pub input_snr_db: f64,
    pub output_snr_db: f64,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str = "method,rate,input_snr_db,output_snr_db,wall_seconds";

fn fmt_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// CSV text of `rows`. Wall times are written only when `timing` is set (and
/// left blank when unknown), so that default output is reproducible byte for
/// byte.
pub fn metrics_csv(rows: &[MetricsRow], timing: bool) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let wall = if timing && r.wall_seconds.is_finite() {
            format!("{:.3}", r.wall_seconds)
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.method,
            r.rate,
            fmt_db(r.input_snr_db),
            fmt_db(r.output_snr_db),
            wall
        );
    }
    out
}

pub fn write_metrics(rows: &[MetricsRow], timing: bool, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_csv(rows, timing)).map_err(|e| Error::io(path, e))
}

/// Every intermediate and final cube of one run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub incomplete: Datacube,
    pub mask: Mask,
    pub interpolated: Datacube,
    pub wavelet: Datacube,
    pub dictionary: Dictionary,
    pub coding_error: Vec<f64>,
    pub proposed: Datacube,
    /// Rows for wavelet, interp, proposed, in that order.
    pub rows: Vec<MetricsRow>,
}

/// Degrade, interpolate, learn, fuse and score against `clean`.
pub fn run(clean: &Datacube, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let (incomplete, mask) = degrade(clean, cfg)?;
    run_on(clean, incomplete, mask, cfg)
}

/// [`run`] from an existing observation.
pub fn run_on(clean: &Datacube, incomplete: Datacube, mask: Mask, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let start = Instant::now();
    let interpolated = interpolate(&incomplete, &mask, &cfg.interp)?;
    let t_interp = start.elapsed().as_secs_f64();
    log::info!("interpolation: {t_interp:.2} s");

    let start = Instant::now();
    let wavelet = denoise_wavelet(&interpolated, &cfg.wavelet)?;
    let t_wavelet = start.elapsed().as_secs_f64();
    log::info!("wavelet baseline: {t_wavelet:.2} s");

    let start = Instant::now();
    let (dictionary, coding_error) = train_on(&interpolated, cfg)?;
    let t_train = start.elapsed().as_secs_f64();
    log::info!("dictionary learning: {t_train:.2} s, {} alternations", coding_error.len());

    let start = Instant::now();
    let proposed = reconstruct_with(&interpolated, &dictionary, cfg)?;
    let t_recon = start.elapsed().as_secs_f64();
    log::info!("reconstruction: {t_recon:.2} s");

    let row = |method, estimate: &Datacube, wall| -> Result<MetricsRow> {
        Ok(MetricsRow {
            method,
            rate: cfg.rate,
            input_snr_db: cfg.input_snr_db,
            output_snr_db: snr_db(clean, estimate)?,
            wall_seconds: wall,
        })
    };
    let rows = vec![
        row("wavelet", &wavelet, t_interp + t_wavelet)?,
        row("interp", &interpolated, t_interp)?,
        row("proposed", &proposed, t_interp + t_train + t_recon)?,
    ];
    Ok(PipelineRun {
        incomplete,
        mask,
        interpolated,
        wavelet,
        dictionary,
        coding_error,
        proposed,
        rows,
    })
}
