//! Volumetric sample container, observation masks, and the generators and
//! metrics that operate on them.
//!
//! Samples are stored with linear index `v = (t * ny + y) * nx + x`: `x` is
//! the fastest axis, then `y`, then the temporal band `t`. A temporal frame is
//! therefore a contiguous slice of `nx * ny` values.

mod export;
mod io;

pub use export::{write_map_csv, write_map_pgm, write_slice_csv, write_slice_pgm};
pub use io::{read_cube, read_mask, write_cube, write_mask};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Dense real-valued datacube of shape `(nx, ny, nb)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Datacube {
    nx: usize,
    ny: usize,
    nb: usize,
    values: Vec<f64>,
}

impl Datacube {
    pub fn new(nx: usize, ny: usize, nb: usize, values: Vec<f64>) -> Result<Self> {
        let len = checked_volume(nx, ny, nb)?;
        if values.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{nx}x{ny}x{nb} cube needs {len} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sample at linear index {v}"
            )));
        }
        Ok(Self { nx, ny, nb, values })
    }

    pub fn zeros(nx: usize, ny: usize, nb: usize) -> Self {
        Self::filled(nx, ny, nb, 0.0)
    }

    pub fn filled(nx: usize, ny: usize, nb: usize, value: f64) -> Self {
        let len = checked_volume(nx, ny, nb).expect("cube dimensions");
        assert!(value.is_finite());
        Self {
            nx,
            ny,
            nb,
            values: vec![value; len],
        }
    }

    /// Builds a cube by evaluating `f(x, y, t)` at every voxel.
    pub fn from_fn(nx: usize, ny: usize, nb: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let len = checked_volume(nx, ny, nb)?;
        let mut values = Vec::with_capacity(len);
        for t in 0..nb {
            for y in 0..ny {
                for x in 0..nx {
                    values.push(f(x, y, t));
                }
            }
        }
        Self::new(nx, ny, nb, values)
    }

    /// Internal constructor for values already known to be valid.
    pub(crate) fn from_parts(nx: usize, ny: usize, nb: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), nx * ny * nb);
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { nx, ny, nb, values }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nb(&self) -> usize {
        self.nb
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nb)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, t: usize) -> usize {
        linear_index((self.nx, self.ny), x, y, t)
    }

    #[inline]
    pub fn coords(&self, v: usize) -> (usize, usize, usize) {
        let plane = self.nx * self.ny;
        let t = v / plane;
        let rem = v % plane;
        (rem % self.nx, rem / self.nx, t)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.values[self.index(x, y, t)]
    }

    /// Contiguous spatial frame at temporal band `t`, row-major in `(y, x)`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let plane = self.nx * self.ny;
        &self.values[t * plane..(t + 1) * plane]
    }

    /// Temporal waveform of pixel `(x, y)`.
    pub fn waveform(&self, x: usize, y: usize) -> Vec<f64> {
        let plane = self.nx * self.ny;
        let base = y * self.nx + x;
        (0..self.nb).map(|t| self.values[base + t * plane]).collect()
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn same_dims(&self, other: &Datacube) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn ensure_same_dims(&self, other: &Datacube, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }
}

#[inline]
pub(crate) fn linear_index((nx, ny): (usize, usize), x: usize, y: usize, t: usize) -> usize {
    (t * ny + y) * nx + x
}

pub(crate) fn checked_volume(nx: usize, ny: usize, nb: usize) -> Result<usize> {
    if nx == 0 || ny == 0 || nb == 0 {
        return Err(Error::InvalidArgument(format!(
            "cube dimensions must be positive, got {nx}x{ny}x{nb}"
        )));
    }
    nx.checked_mul(ny)
        .and_then(|p| p.checked_mul(nb))
        .ok_or_else(|| Error::InvalidArgument(format!("cube dimensions {nx}x{ny}x{nb} overflow")))
}

/// Boolean observation pattern aligned with a [`Datacube`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    nx: usize,
    ny: usize,
    nb: usize,
    observed: Vec<bool>,
}

impl Mask {
    pub fn new(nx: usize, ny: usize, nb: usize, observed: Vec<bool>) -> Result<Self> {
        let len = checked_volume(nx, ny, nb)?;
        if observed.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{nx}x{ny}x{nb} mask needs {len} entries, got {}",
                observed.len()
            )));
        }
        Ok(Self { nx, ny, nb, observed })
    }

    pub fn full(nx: usize, ny: usize, nb: usize) -> Self {
        let len = checked_volume(nx, ny, nb).expect("mask dimensions");
        Self {
            nx,
            ny,
            nb,
            observed: vec![true; len],
        }
    }

    /// Mask that observes the same pixel set in every temporal band.
    pub fn from_pixels(nx: usize, ny: usize, nb: usize, pixels: &[bool]) -> Result<Self> {
        if pixels.len() != nx * ny {
            return Err(Error::DimensionMismatch(format!(
                "pixel mask has {} entries for a {nx}x{ny} grid",
                pixels.len()
            )));
        }
        let mut observed = Vec::with_capacity(nx * ny * nb);
        for _ in 0..nb {
            observed.extend_from_slice(pixels);
        }
        Self::new(nx, ny, nb, observed)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nb)
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, v: usize) -> bool {
        self.observed[v]
    }

    pub fn frame(&self, t: usize) -> &[bool] {
        let plane = self.nx * self.ny;
        &self.observed[t * plane..(t + 1) * plane]
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn rate(&self) -> f64 {
        self.observed_count() as f64 / self.observed.len() as f64
    }

    /// The shared per-pixel pattern, if every band observes the same pixels.
    pub fn shared_pixels(&self) -> Option<&[bool]> {
        let first = self.frame(0);
        (1..self.nb).all(|t| self.frame(t) == first).then_some(first)
    }

    pub fn matches(&self, cube: &Datacube) -> bool {
        self.dims() == cube.dims()
    }
}

/// Robust noise level of a cube whose noise is white along the temporal axis:
/// the median absolute first difference along `t`, scaled to a Gaussian
/// standard deviation. Smooth waveforms contribute little to the median.
/// Returns 0 when `nb < 2`.
pub fn estimate_noise_sigma(x: &Datacube) -> f64 {
    let plane = x.nx * x.ny;
    if x.nb < 2 {
        return 0.0;
    }
    let mut diffs: Vec<f64> = x.values[plane..]
        .iter()
        .zip(&x.values)
        .map(|(b, a)| (b - a).abs())
        .collect();
    let mid = diffs.len() / 2;
    let (_, median, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
    *median / (0.6745 * std::f64::consts::SQRT_2)
}

/// Additive white Gaussian noise at a target SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Desired input SNR in dB. `f64::INFINITY` disables noise.
    pub target_snr_db: f64,
    pub seed: u64,
}

/// SNR in dB of `estimate` against `reference`: `10 log10(|x|^2 / |x - x_hat|^2)`.
///
/// An exact match returns `f64::INFINITY`.
pub fn snr_db(reference: &Datacube, estimate: &Datacube) -> Result<f64> {
    reference.ensure_same_dims(estimate, "snr_db")?;
    snr_db_slices(reference.values(), estimate.values())
}

pub(crate) fn snr_db_slices(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    let signal: f64 = reference.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::ZeroSignal("snr reference"));
    }
    let error: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / error).log10())
}

/// Returns `x + n` with `n ~ N(0, sigma^2)` i.i.d. and
/// `sigma^2 = |x|^2 / (p * 10^(snr/10))`.
pub fn add_gaussian_noise(x: &Datacube, spec: &NoiseSpec) -> Result<Datacube> {
    if spec.target_snr_db.is_nan() || spec.target_snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!(
            "target SNR must be finite or +inf, got {}",
            spec.target_snr_db
        )));
    }
    let energy = x.energy();
    if energy == 0.0 {
        return Err(Error::ZeroSignal("noise input"));
    }
    if spec.target_snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    let variance = energy / (x.len() as f64 * 10f64.powf(spec.target_snr_db / 10.0));
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::Numerical(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = x
        .values()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    Ok(Datacube::from_parts(x.nx, x.ny, x.nb, values))
}

/// How observations are drawn by [`subsample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubsampleMode {
    /// Whole pixel columns are kept or dropped; a kept pixel has its full waveform.
    #[default]
    SpatialShared,
    /// Individual voxels are kept independently.
    Voxelwise,
}

impl std::str::FromStr for SubsampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial-shared" | "spatial" => Ok(Self::SpatialShared),
            "voxelwise" | "voxel" => Ok(Self::Voxelwise),
            other => Err(Error::config(
                "subsample-mode",
                format!("expected spatial-shared or voxelwise, got `{other}`"),
            )),
        }
    }
}

/// Keeps `round(rate * n)` randomly chosen pixels (or voxels) of `x`; the rest
/// are zeroed and marked unobserved. At least one sample is always kept.
pub fn subsample(x: &Datacube, rate: f64, mode: SubsampleMode, seed: u64) -> Result<(Datacube, Mask)> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "observation rate must be in (0, 1], got {rate}"
        )));
    }
    let (nx, ny, nb) = x.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = match mode {
        SubsampleMode::SpatialShared => {
            let pixels = nx * ny;
            let keep = ((rate * pixels as f64).round() as usize).clamp(1, pixels);
            let mut chosen = vec![false; pixels];
            for i in index::sample(&mut rng, pixels, keep) {
                chosen[i] = true;
            }
            Mask::from_pixels(nx, ny, nb, &chosen)?
        }
        SubsampleMode::Voxelwise => {
            let total = x.len();
            let keep = ((rate * total as f64).round() as usize).clamp(1, total);
            let mut chosen = vec![false; total];
            for i in index::sample(&mut rng, total, keep) {
                chosen[i] = true;
            }
            Mask::new(nx, ny, nb, chosen)?
        }
    };
    Ok((apply_mask(x, &mask)?, mask))
}

/// Zeroes every unobserved voxel.
pub fn apply_mask(x: &Datacube, mask: &Mask) -> Result<Datacube> {
    if !mask.matches(x) {
        return Err(Error::DimensionMismatch(format!(
            "mask {:?} vs cube {:?}",
            mask.dims(),
            x.dims()
        )));
    }
    let values = x
        .values()
        .iter()
        .zip(mask.observed())
        .map(|(&v, &o)| if o { v } else { 0.0 })
        .collect();
    Ok(Datacube::from_parts(x.nx, x.ny, x.nb, values))
}
