//! Comparison denoiser: soft thresholding in a separable 3D orthogonal wavelet
//! domain.
//!
//! Each axis is padded by symmetric (half-sample) extension to a multiple of
//! `2^levels`, then transformed with a periodized orthogonal filter bank, so
//! the transform is exactly orthogonal on the padded cube.

use crate::datacube::Datacube;
use crate::error::{Error, Result};

/// Symlet-4 decomposition low-pass filter (8 taps).
const SYM4_LOW: [f64; 8] = [
    -0.075_765_714_789_502_21,
    -0.029_635_527_646_002_492,
    0.497_618_667_632_774_99,
    0.803_738_751_805_132_08,
    0.297_857_795_605_306_05,
    -0.099_219_543_576_633_533,
    -0.012_603_967_262_031_304,
    0.032_223_100_604_051_468,
];

const HAAR_LOW: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

/// Median absolute deviation to standard deviation for Gaussian noise.
const MAD_SCALE: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Wavelet {
    #[default]
    Sym4,
    Haar,
}

impl Wavelet {
    pub fn lowpass(&self) -> &'static [f64] {
        match self {
            Wavelet::Sym4 => &SYM4_LOW,
            Wavelet::Haar => &HAAR_LOW,
        }
    }

    /// Quadrature mirror high-pass: `g[n] = (-1)^n h[L-1-n]`.
    pub fn highpass(&self) -> Vec<f64> {
        let h = self.lowpass();
        let len = h.len();
        (0..len)
            .map(|n| if n % 2 == 0 { h[len - 1 - n] } else { -h[len - 1 - n] })
            .collect()
    }
}

impl std::str::FromStr for Wavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym4" => Ok(Self::Sym4),
            "haar" => Ok(Self::Haar),
            other => Err(Error::config("wavelet", format!("expected sym4 or haar, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// `tau = sigma * sqrt(2 ln p)`.
    #[default]
    Universal,
    Fixed,
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "universal" => Ok(Self::Universal),
            "fixed" => Ok(Self::Fixed),
            other => Err(Error::config("tau-mode", format!("expected universal or fixed, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SigmaEstimate {
    /// Median absolute deviation of the finest diagonal detail band.
    #[default]
    Mad,
    Known(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveletConfig {
    pub wavelet: Wavelet,
    pub levels: usize,
    pub threshold_mode: ThresholdMode,
    pub fixed_tau: f64,
    pub sigma_estimate: SigmaEstimate,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            wavelet: Wavelet::Sym4,
            levels: 3,
            threshold_mode: ThresholdMode::Universal,
            fixed_tau: 0.0,
            sigma_estimate: SigmaEstimate::Mad,
        }
    }
}

impl WaveletConfig {
    fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 16 {
            return Err(Error::config("levels", format!("must be in 1..=16, got {}", self.levels)));
        }
        if !(self.fixed_tau >= 0.0) {
            return Err(Error::config("tau", format!("must be >= 0, got {}", self.fixed_tau)));
        }
        if let SigmaEstimate::Known(s) = self.sigma_estimate {
            if !(s >= 0.0) {
                return Err(Error::config("sigma", format!("must be >= 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// Multi-level coefficients in Mallat layout over the padded cube. The
/// approximation band occupies the corner of size `padded / 2^levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    pub dims: (usize, usize, usize),
    pub padded: (usize, usize, usize),
    pub levels: usize,
    pub data: Vec<f64>,
}

impl WaveletCoeffs {
    fn index(&self, x: usize, y: usize, t: usize) -> usize {
        (t * self.padded.1 + y) * self.padded.0 + x
    }

    pub fn approx_dims(&self) -> (usize, usize, usize) {
        let s = 1 << self.levels;
        (self.padded.0 / s, self.padded.1 / s, self.padded.2 / s)
    }

    pub fn is_approximation(&self, x: usize, y: usize, t: usize) -> bool {
        let (ax, ay, at) = self.approx_dims();
        x < ax && y < ay && t < at
    }

    /// Coefficients of the level-1 band that is high-pass along every axis.
    pub fn finest_diagonal(&self) -> Vec<f64> {
        let (px, py, pt) = self.padded;
        let mut out = Vec::with_capacity(self.data.len() / 8);
        for t in pt / 2..pt {
            for y in py / 2..py {
                for x in px / 2..px {
                    out.push(self.data[self.index(x, y, t)]);
                }
            }
        }
        out
    }

    /// Applies `f` to every detail coefficient.
    pub fn map_details(&mut self, mut f: impl FnMut(f64) -> f64) {
        let (px, py, pt) = self.padded;
        for t in 0..pt {
            for y in 0..py {
                for x in 0..px {
                    if !self.is_approximation(x, y, t) {
                        let i = self.index(x, y, t);
                        self.data[i] = f(self.data[i]);
                    }
                }
            }
        }
    }
}

/// `sign(x) * max(|x| - tau, 0)`.
pub fn soft_threshold(value: f64, tau: f64) -> f64 {
    let mag = value.abs() - tau;
    if mag > 0.0 {
        mag.copysign(value)
    } else {
        0.0
    }
}

fn reflect(i: usize, n: usize) -> usize {
    let period = 2 * n;
    let j = i % period;
    if j < n {
        j
    } else {
        period - 1 - j
    }
}

fn padded_len(n: usize, levels: usize) -> usize {
    let m = 1 << levels;
    n.div_ceil(m) * m
}

/// Single-level periodized analysis of `line` into low | high halves.
fn analyze(line: &mut [f64], low: &[f64], high: &[f64], scratch: &mut Vec<f64>) {
    let n = line.len();
    let half = n / 2;
    scratch.clear();
    scratch.resize(n, 0.0);
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for (m, (h, g)) in low.iter().zip(high).enumerate() {
            let x = line[(2 * k + m) % n];
            a += h * x;
            d += g * x;
        }
        scratch[k] = a;
        scratch[half + k] = d;
    }
    line.copy_from_slice(scratch);
}

/// Transpose of [`analyze`], its exact inverse.
fn synthesize(line: &mut [f64], low: &[f64], high: &[f64], scratch: &mut Vec<f64>) {
    let n = line.len();
    let half = n / 2;
    scratch.clear();
    scratch.resize(n, 0.0);
    for k in 0..half {
        let (a, d) = (line[k], line[half + k]);
        for (m, (h, g)) in low.iter().zip(high).enumerate() {
            scratch[(2 * k + m) % n] += h * a + g * d;
        }
    }
    line.copy_from_slice(scratch);
}

/// Applies `op` to every line along `axis` inside the leading sub-box `region`.
fn along_axis(
    data: &mut [f64],
    padded: (usize, usize, usize),
    region: (usize, usize, usize),
    axis: usize,
    mut op: impl FnMut(&mut [f64]),
) {
    let (px, py, _) = padded;
    let (rx, ry, rt) = region;
    let idx = |x: usize, y: usize, t: usize| (t * py + y) * px + x;
    let len = [rx, ry, rt][axis];
    let mut line = vec![0.0; len];
    let (outer_a, outer_b) = match axis {
        0 => (ry, rt),
        1 => (rx, rt),
        _ => (rx, ry),
    };
    for b in 0..outer_b {
        for a in 0..outer_a {
            let at = |i: usize| match axis {
                0 => idx(i, a, b),
                1 => idx(a, i, b),
                _ => idx(a, b, i),
            };
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[at(i)];
            }
            op(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[at(i)] = *v;
            }
        }
    }
}

pub fn dwt3(x: &Datacube, cfg: &WaveletConfig) -> Result<WaveletCoeffs> {
    cfg.validate()?;
    let (nx, ny, nb) = x.dims();
    let padded = (padded_len(nx, cfg.levels), padded_len(ny, cfg.levels), padded_len(nb, cfg.levels));
    let mut data = Vec::with_capacity(padded.0 * padded.1 * padded.2);
    for t in 0..padded.2 {
        for y in 0..padded.1 {
            for xi in 0..padded.0 {
                data.push(x.get(reflect(xi, nx), reflect(y, ny), reflect(t, nb)));
            }
        }
    }
    let low = cfg.wavelet.lowpass();
    let high = cfg.wavelet.highpass();
    let mut scratch = Vec::new();
    for level in 0..cfg.levels {
        let s = 1 << level;
        let region = (padded.0 / s, padded.1 / s, padded.2 / s);
        for axis in 0..3 {
            along_axis(&mut data, padded, region, axis, |line| analyze(line, low, &high, &mut scratch));
        }
    }
    Ok(WaveletCoeffs {
        dims: x.dims(),
        padded,
        levels: cfg.levels,
        data,
    })
}

pub fn idwt3(coeffs: &WaveletCoeffs, wavelet: Wavelet) -> Result<Datacube> {
    let padded = coeffs.padded;
    let mut data = coeffs.data.clone();
    let low = wavelet.lowpass();
    let high = wavelet.highpass();
    let mut scratch = Vec::new();
    for level in (0..coeffs.levels).rev() {
        let s = 1 << level;
        let region = (padded.0 / s, padded.1 / s, padded.2 / s);
        for axis in (0..3).rev() {
            along_axis(&mut data, padded, region, axis, |line| synthesize(line, low, &high, &mut scratch));
        }
    }
    let (nx, ny, nb) = coeffs.dims;
    Datacube::from_fn(nx, ny, nb, |x, y, t| data[(t * padded.1 + y) * padded.0 + x])
        .map_err(|e| Error::Numerical(e.to_string()))
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if values.len() % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Noise level estimated from the finest diagonal detail band.
pub fn estimate_sigma(coeffs: &WaveletCoeffs) -> f64 {
    median(coeffs.finest_diagonal().into_iter().map(f64::abs).collect()) / MAD_SCALE
}

/// Forward transform, soft-threshold every detail coefficient, inverse.
pub fn denoise_wavelet(y: &Datacube, cfg: &WaveletConfig) -> Result<Datacube> {
    let mut coeffs = dwt3(y, cfg)?;
    let tau = match cfg.threshold_mode {
        ThresholdMode::Fixed => cfg.fixed_tau,
        ThresholdMode::Universal => {
            let sigma = match cfg.sigma_estimate {
                SigmaEstimate::Mad => estimate_sigma(&coeffs),
                SigmaEstimate::Known(s) => s,
            };
            sigma * (2.0 * (y.len() as f64).ln()).sqrt()
        }
    };
    log::debug!("wavelet threshold tau = {tau:.6e}");
    coeffs.map_details(|c| soft_threshold(c, tau));
    idwt3(&coeffs, cfg.wavelet)
}
