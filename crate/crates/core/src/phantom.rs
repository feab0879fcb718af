//! Deterministic synthetic datacubes with known ground truth: a layered sheet
//! with a buried shape (three reflections where the shape is present) and a
//! region-labelled spectral cube for chemical-mapping checks.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::datacube::Datacube;
use crate::error::{Error, Result};

/// Texture amplitude relative to the surface echo.
const TEXTURE_FRACTION: f64 = 0.05;

/// Bipolar echo: a Ricker wavelet, `(1 - u^2) exp(-u^2 / 2)` with
/// `u = (t - center) / sigma` and `sigma = width / 2`. Its maximum is exactly
/// at `center`, flanked by two negative lobes.
pub fn echo(t: f64, center: f64, width: f64) -> f64 {
    let u = (t - center) / (0.5 * width);
    let u2 = u * u;
    (1.0 - u2) * (-0.5 * u2).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredPhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub nb: usize,
    pub surface_peak_index: usize,
    /// Samples from the surface peak to the buried layer's front peak.
    pub buried_depth_delay: usize,
    /// Samples from the buried layer's front peak to its back peak.
    pub layer_thickness_delay: usize,
    pub peak_width: f64,
    /// `nx * ny` pixels, x fastest; true where the buried shape is present.
    pub shape: Vec<bool>,
    /// Amplitudes of surface, layer front and layer back echoes.
    pub amplitude_ratios: [f64; 3],
    /// Adds the low-frequency spatial texture around the surface echo.
    pub texture: bool,
    pub seed: u64,
}

impl Default for LayeredPhantomSpec {
    /// The 64x64x128 T-shape analogue.
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            nb: 128,
            surface_peak_index: 24,
            buried_depth_delay: 48,
            layer_thickness_delay: 20,
            peak_width: 6.0,
            shape: t_shape(64, 64),
            amplitude_ratios: [1.0, 0.6, -0.45],
            texture: true,
            seed: 7,
        }
    }
}

impl LayeredPhantomSpec {
    /// Default echo layout on an arbitrary grid with the T-shape map.
    pub fn tshape(nx: usize, ny: usize, nb: usize) -> Self {
        Self {
            nx,
            ny,
            nb,
            shape: t_shape(nx, ny),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nb == 0 {
            return Err(Error::InvalidArgument("phantom dims must be positive".into()));
        }
        if self.shape.len() != self.nx * self.ny {
            return Err(Error::DimensionMismatch(format!(
                "shape map has {} pixels, grid has {}",
                self.shape.len(),
                self.nx * self.ny
            )));
        }
        if !(self.peak_width > 0.0 && self.peak_width.is_finite()) {
            return Err(Error::InvalidArgument(format!("peak width must be > 0, got {}", self.peak_width)));
        }
        if self.amplitude_ratios.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("amplitudes must be finite".into()));
        }
        let last = (self.surface_peak_index + self.buried_depth_delay + self.layer_thickness_delay) as f64
            + 4.0 * self.peak_width;
        if last >= self.nb as f64 {
            return Err(Error::InvalidArgument(format!(
                "echoes exceed the time window: last echo plus 4 widths reaches {last}, nb = {}",
                self.nb
            )));
        }
        Ok(())
    }

    /// Temporal indices of the three echo peaks.
    pub fn peak_indices(&self) -> [usize; 3] {
        let front = self.surface_peak_index + self.buried_depth_delay;
        [self.surface_peak_index, front, front + self.layer_thickness_delay]
    }

    /// Reads a `key = value` spec; unspecified keys keep the T-shape defaults.
    /// `shape` is one of `tshape`, `none`, `full`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.ensure_known(&[
            "kind",
            "nx",
            "ny",
            "nb",
            "surface_peak_index",
            "buried_depth_delay",
            "layer_thickness_delay",
            "peak_width",
            "shape",
            "amplitude_ratios",
            "texture",
            "seed",
        ])?;
        let d = Self::default();
        let nx = kv.get("nx")?.unwrap_or(d.nx);
        let ny = kv.get("ny")?.unwrap_or(d.ny);
        let shape = match kv.get_str("shape").unwrap_or("tshape") {
            "tshape" => t_shape(nx, ny),
            "none" => vec![false; nx * ny],
            "full" => vec![true; nx * ny],
            other => return Err(Error::config("shape", format!("expected tshape, none or full, got `{other}`"))),
        };
        let amplitude_ratios = match kv.get_list::<f64>("amplitude_ratios")? {
            None => d.amplitude_ratios,
            Some(v) => v
                .try_into()
                .map_err(|v: Vec<f64>| Error::config("amplitude_ratios", format!("expected 3 values, got {}", v.len())))?,
        };
        let spec = Self {
            nx,
            ny,
            nb: kv.get("nb")?.unwrap_or(d.nb),
            surface_peak_index: kv.get("surface_peak_index")?.unwrap_or(d.surface_peak_index),
            buried_depth_delay: kv.get("buried_depth_delay")?.unwrap_or(d.buried_depth_delay),
            layer_thickness_delay: kv.get("layer_thickness_delay")?.unwrap_or(d.layer_thickness_delay),
            peak_width: kv.get("peak_width")?.unwrap_or(d.peak_width),
            shape,
            amplitude_ratios,
            texture: kv.get("texture")?.unwrap_or(d.texture),
            seed: kv.get("seed")?.unwrap_or(d.seed),
        };
        spec.validate().map_err(|e| Error::config("phantom", e.to_string()))?;
        Ok(spec)
    }
}

/// A "T": horizontal bar near the top and a vertical stem, scaled from a
/// 64x64 layout.
pub fn t_shape(nx: usize, ny: usize) -> Vec<bool> {
    let sx = |v: usize| v * nx / 64;
    let sy = |v: usize| v * ny / 64;
    let mut map = vec![false; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let bar = (sy(12)..sy(20)).contains(&y) && (sx(12)..sx(52)).contains(&x);
            let stem = (sx(28)..sx(36)).contains(&x) && (sy(20)..sy(52)).contains(&y);
            map[y * nx + x] = bar || stem;
        }
    }
    map
}

/// Smooth field in `[-1, 1]`: a few low spatial frequencies with seeded
/// phases.
fn texture_field(nx: usize, ny: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let fx = rng.random_range(0.5..2.0);
            let fy = rng.random_range(0.5..2.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            let weight = rng.random_range(0.5..1.0);
            (fx, fy, phase, weight)
        })
        .collect();
    let mut field: Vec<f64> = (0..nx * ny)
        .map(|p| {
            let (x, y) = ((p % nx) as f64 / nx as f64, (p / nx) as f64 / ny as f64);
            waves
                .iter()
                .map(|&(fx, fy, ph, w)| w * (2.0 * PI * (fx * x + fy * y) + ph).sin())
                .sum()
        })
        .collect();
    let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        field.iter_mut().for_each(|v| *v /= peak);
    }
    field
}

pub fn generate_layered(spec: &LayeredPhantomSpec) -> Result<Datacube> {
    spec.validate()?;
    let [a_s, a_f, a_b] = spec.amplitude_ratios;
    let [t_s, t_f, t_b] = spec.peak_indices().map(|t| t as f64);
    let w = spec.peak_width;
    let texture = if spec.texture {
        texture_field(spec.nx, spec.ny, spec.seed)
    } else {
        vec![0.0; spec.nx * spec.ny]
    };
    // Broad symmetric hump centred on the surface echo, so the textured
    // waveform still peaks exactly at the surface index.
    let hump_width = 3.0 * w;
    Datacube::from_fn(spec.nx, spec.ny, spec.nb, |x, y, t| {
        let p = y * spec.nx + x;
        let t = t as f64;
        let mut v = a_s * echo(t, t_s, w);
        if spec.shape[p] {
            v += a_f * echo(t, t_f, w) + a_b * echo(t, t_b, w);
        }
        let u = (t - t_s) / hump_width;
        v + TEXTURE_FRACTION * a_s * texture[p] * (-0.5 * u * u).exp()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub nb: usize,
    /// Temporal signature of each component, each of length `nb`.
    pub component_spectra: Vec<Vec<f64>>,
    /// Component label per pixel, x fastest.
    pub region_map: Vec<usize>,
    pub seed: u64,
}

impl SpectralPhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nb == 0 {
            return Err(Error::InvalidArgument("phantom dims must be positive".into()));
        }
        if self.region_map.len() != self.nx * self.ny {
            return Err(Error::DimensionMismatch(format!(
                "region map has {} pixels, grid has {}",
                self.region_map.len(),
                self.nx * self.ny
            )));
        }
        for (c, s) in self.component_spectra.iter().enumerate() {
            if s.len() != self.nb {
                return Err(Error::DimensionMismatch(format!(
                    "component {c} has {} samples, nb = {}",
                    s.len(),
                    self.nb
                )));
            }
        }
        if let Some(p) = self.region_map.iter().position(|&l| l >= self.component_spectra.len()) {
            return Err(Error::InvalidArgument(format!(
                "pixel {p} has label {} but only {} components exist",
                self.region_map[p],
                self.component_spectra.len()
            )));
        }
        Ok(())
    }

    /// Two-component tablet analogue: a central disc of component 0 inside
    /// an outer region of component 1. Both components are Gaussian-windowed
    /// wave packets at the same delay with different carrier frequencies.
    pub fn tablet(nx: usize, ny: usize, nb: usize) -> Self {
        let center = nb as f64 * 0.4;
        let width = nb as f64 / 32.0;
        Self {
            nx,
            ny,
            nb,
            component_spectra: vec![
                wave_packet(nb, center, width, 0.06, 1.0),
                wave_packet(nb, center, width, 0.10, 0.8),
            ],
            region_map: disc_regions(nx, ny, 0.3),
            seed: 0,
        }
    }

    /// Reads a `key = value` spec describing a disc/outer two-region cube.
    /// Keys: `nx`, `ny`, `nb`, `carriers` (cycles/sample, comma list),
    /// `amplitudes`, `envelope_width`, `center`, `disc_radius` (fraction of the
    /// smaller side), `regions` (`disc` or `single`).
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.ensure_known(&[
            "kind",
            "nx",
            "ny",
            "nb",
            "carriers",
            "amplitudes",
            "envelope_width",
            "center",
            "disc_radius",
            "regions",
            "seed",
        ])?;
        let nx = kv.get("nx")?.unwrap_or(32usize);
        let ny = kv.get("ny")?.unwrap_or(32usize);
        let nb = kv.get("nb")?.unwrap_or(256usize);
        let carriers = kv.get_list::<f64>("carriers")?.unwrap_or_else(|| vec![0.06, 0.10]);
        let amplitudes = kv.get_list::<f64>("amplitudes")?.unwrap_or_else(|| vec![1.0, 0.8]);
        if amplitudes.len() != carriers.len() {
            return Err(Error::config("amplitudes", "must have one entry per carrier"));
        }
        let width = kv.get("envelope_width")?.unwrap_or(nb as f64 / 32.0);
        let center = kv.get("center")?.unwrap_or(nb as f64 * 0.4);
        let radius = kv.get("disc_radius")?.unwrap_or(0.3);
        let region_map = match kv.get_str("regions").unwrap_or("disc") {
            "disc" => disc_regions(nx, ny, radius),
            "single" => vec![0; nx * ny],
            other => return Err(Error::config("regions", format!("expected disc or single, got `{other}`"))),
        };
        let spec = Self {
            nx,
            ny,
            nb,
            component_spectra: carriers
                .iter()
                .zip(&amplitudes)
                .map(|(&f, &a)| wave_packet(nb, center, width, f, a))
                .collect(),
            region_map,
            seed: kv.get("seed")?.unwrap_or(0),
        };
        spec.validate().map_err(|e| Error::config("phantom", e.to_string()))?;
        Ok(spec)
    }
}

/// `amplitude * exp(-((t - center) / width)^2 / 2) * cos(2 pi f (t - center))`.
pub fn wave_packet(nb: usize, center: f64, width: f64, carrier: f64, amplitude: f64) -> Vec<f64> {
    (0..nb)
        .map(|t| {
            let d = t as f64 - center;
            let u = d / width;
            amplitude * (-0.5 * u * u).exp() * (2.0 * PI * carrier * d).cos()
        })
        .collect()
}

/// Label 0 inside a centred disc of `radius * min(nx, ny)`, label 1 outside.
pub fn disc_regions(nx: usize, ny: usize, radius: f64) -> Vec<usize> {
    let r = radius * nx.min(ny) as f64;
    let (cx, cy) = ((nx as f64 - 1.0) / 2.0, (ny as f64 - 1.0) / 2.0);
    (0..nx * ny)
        .map(|p| {
            let (dx, dy) = ((p % nx) as f64 - cx, (p / nx) as f64 - cy);
            usize::from(dx.hypot(dy) > r)
        })
        .collect()
}

/// Each pixel carries exactly its region's signature.
pub fn generate_spectral(spec: &SpectralPhantomSpec) -> Result<Datacube> {
    spec.validate()?;
    Datacube::from_fn(spec.nx, spec.ny, spec.nb, |x, y, t| {
        spec.component_spectra[spec.region_map[y * spec.nx + x]][t]
    })
}

/// Either phantom kind, as read from a spec file.
#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSpec {
    Layered(LayeredPhantomSpec),
    Spectral(SpectralPhantomSpec),
}

impl PhantomSpec {
    /// `kind = layered` (default) or `kind = spectral` selects the generator.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        match kv.get_str("kind").unwrap_or("layered") {
            "layered" => LayeredPhantomSpec::from_key_values(kv).map(Self::Layered),
            "spectral" => SpectralPhantomSpec::from_key_values(kv).map(Self::Spectral),
            other => Err(Error::config("kind", format!("expected layered or spectral, got `{other}`"))),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::read(path)?)
    }

    pub fn generate(&self) -> Result<Datacube> {
        match self {
            Self::Layered(s) => generate_layered(s),
            Self::Spectral(s) => generate_spectral(s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_peaks_at_center() {
        assert_eq!(echo(10.0, 10.0, 6.0), 1.0);
        assert!(echo(9.0, 10.0, 6.0) < 1.0 && echo(11.0, 10.0, 6.0) < 1.0);
        assert!(echo(10.0 + 3f64.sqrt() * 3.0, 10.0, 6.0) < 0.0);
    }

    #[test]
    fn empty_shape_gives_identical_waveforms() {
        let spec = LayeredPhantomSpec {
            nx: 8,
            ny: 8,
            shape: vec![false; 64],
            texture: false,
            ..LayeredPhantomSpec::default()
        };
        let cube = generate_layered(&spec).unwrap();
        let first = cube.waveform(0, 0);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(cube.waveform(x, y), first);
            }
        }
    }

    #[test]
    fn window_overflow_rejected() {
        let spec = LayeredPhantomSpec {
            nb: 100,
            ..LayeredPhantomSpec::default()
        };
        assert!(generate_layered(&spec).is_err());
    }

    #[test]
    fn t_shape_layout() {
        let m = t_shape(64, 64);
        assert!(m[15 * 64 + 14]);
        assert!(m[40 * 64 + 30]);
        assert!(!m[40 * 64 + 14]);
        assert!(!m[5 * 64 + 30]);
        assert_eq!(m.iter().filter(|&&b| b).count(), 8 * 40 + 8 * 32);
    }

    #[test]
    fn deterministic() {
        let a = generate_layered(&LayeredPhantomSpec::default()).unwrap();
        let b = generate_layered(&LayeredPhantomSpec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spectral_labels_checked() {
        let mut spec = SpectralPhantomSpec::tablet(8, 8, 64);
        spec.region_map[3] = 2;
        assert!(generate_spectral(&spec).is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let kv = KeyValues::parse("kind = layered\nnx = 16\nny = 16\nshape = full\ntexture = false").unwrap();
        let PhantomSpec::Layered(s) = PhantomSpec::from_key_values(&kv).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!((s.nx, s.ny, s.nb), (16, 16, 128));
        assert!(s.shape.iter().all(|&b| b));
        let kv = KeyValues::parse("kind = spectral\nnx = 4\nny = 4\nnb = 32\nregions = single").unwrap();
        let cube = PhantomSpec::from_key_values(&kv).unwrap().generate().unwrap();
        assert_eq!(cube.dims(), (4, 4, 32));
        assert!(PhantomSpec::from_key_values(&KeyValues::parse("nx = 4\nbogus = 1").unwrap()).is_err());
    }
}
