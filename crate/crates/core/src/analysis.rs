//! Evaluation instruments: echo-peak depth and thickness, magnitude spectra,
//! and cosine correlation maps between per-pixel spectra and a reference.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::datacube::Datacube;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakAnalysisConfig {
    /// Peaks lower than this fraction of the waveform's max are ignored.
    pub min_prominence: f64,
    /// Millimetres per temporal sample.
    pub depth_scale: f64,
    /// Detect on `|signal|` rather than the signed signal.
    pub use_abs: bool,
    /// Minimum distance in samples between two accepted peaks.
    pub min_separation: usize,
    /// Three-point parabolic refinement of each peak position.
    pub refine: bool,
}

impl Default for PeakAnalysisConfig {
    fn default() -> Self {
        Self {
            min_prominence: 0.2,
            depth_scale: 1.0,
            use_abs: true,
            min_separation: 6,
            refine: true,
        }
    }
}

impl PeakAnalysisConfig {
    fn validate(&self) -> Result<()> {
        if !(self.min_prominence > 0.0 && self.min_prominence < 1.0) {
            return Err(Error::config(
                "min-prominence",
                format!("must be in (0, 1), got {}", self.min_prominence),
            ));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(Error::config("depth-scale", format!("must be > 0, got {}", self.depth_scale)));
        }
        Ok(())
    }
}

/// Positions (in samples, ascending) of the prominent peaks of `waveform`.
///
/// Local maxima at least `min_prominence * max` high are accepted greedily
/// from the tallest down, skipping any closer than `min_separation` to one
/// already accepted. For a zero-baseline signal split by zero crossings the
/// height of a lobe equals its prominence.
pub fn detect_peaks(waveform: &[f64], cfg: &PeakAnalysisConfig) -> Vec<f64> {
    let s: Vec<f64> = if cfg.use_abs {
        waveform.iter().map(|v| v.abs()).collect()
    } else {
        waveform.to_vec()
    };
    let n = s.len();
    let top = s.iter().copied().fold(0.0f64, f64::max);
    if n == 0 || top <= 0.0 {
        return Vec::new();
    }
    let threshold = cfg.min_prominence * top;
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || s[i] >= s[i - 1];
            let right = i + 1 == n || s[i] > s[i + 1];
            left && right && s[i] >= threshold
        })
        .collect();
    candidates.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for i in candidates {
        if accepted.iter().all(|&j| i.abs_diff(j) >= cfg.min_separation) {
            accepted.push(i);
        }
    }
    accepted.sort_unstable();
    accepted
        .into_iter()
        .map(|i| {
            if !cfg.refine || i == 0 || i + 1 == n {
                return i as f64;
            }
            let (a, b, c) = (s[i - 1], s[i], s[i + 1]);
            let curvature = a - 2.0 * b + c;
            if curvature < 0.0 {
                i as f64 + (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
            } else {
                i as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelStructure {
    /// Surface to layer-front delay, mm.
    pub depth: f64,
    /// Layer front to layer back delay, mm.
    pub thickness: f64,
    /// False when fewer than three peaks were found.
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

fn aggregate(values: impl Iterator<Item = f64> + Clone) -> Aggregate {
    let n = values.clone().count();
    if n == 0 {
        return Aggregate { mean: f64::NAN, std: f64::NAN };
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Aggregate { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralReport {
    pub nx: usize,
    pub ny: usize,
    /// Per pixel, x fastest.
    pub pixels: Vec<PixelStructure>,
    pub depth: Aggregate,
    pub thickness: Aggregate,
    pub valid_count: usize,
}

impl StructuralReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,valid,depth_mm,thickness_mm\n");
        for (p, px) in self.pixels.iter().enumerate() {
            let (x, y) = (p % self.nx, p / self.nx);
            if px.valid {
                let _ = writeln!(out, "{x},{y},1,{:.9},{:.9}", px.depth, px.thickness);
            } else {
                let _ = writeln!(out, "{x},{y},0,,");
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Mean and standard deviation block in `mean±std` form.
    pub fn summary(&self) -> String {
        format!(
            "valid pixels: {} of {}\nthickness (mm): {:.4}±{:.4}\ndepth (mm): {:.4}±{:.4}\n",
            self.valid_count,
            self.pixels.len(),
            self.thickness.mean,
            self.thickness.std,
            self.depth.mean,
            self.depth.std
        )
    }
}

pub fn measure_structure(x: &Datacube, cfg: &PeakAnalysisConfig) -> Result<StructuralReport> {
    cfg.validate()?;
    if x.nb() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 temporal samples, got {}", x.nb())));
    }
    let (nx, ny) = (x.nx(), x.ny());
    let pixels: Vec<PixelStructure> = (0..nx * ny)
        .into_par_iter()
        .map(|p| {
            let peaks = detect_peaks(&x.waveform(p % nx, p / nx), cfg);
            match peaks[..] {
                [t1, t2, t3, ..] => PixelStructure {
                    depth: (t2 - t1) * cfg.depth_scale,
                    thickness: (t3 - t2) * cfg.depth_scale,
                    valid: true,
                },
                _ => PixelStructure { depth: f64::NAN, thickness: f64::NAN, valid: false },
            }
        })
        .collect();
    let valid = pixels.iter().filter(|p| p.valid);
    Ok(StructuralReport {
        nx,
        ny,
        depth: aggregate(valid.clone().map(|p| p.depth)),
        thickness: aggregate(valid.clone().map(|p| p.thickness)),
        valid_count: valid.count(),
        pixels,
    })
}

/// Reusable forward FFT for waveforms of one length.
pub struct SpectrumPlan {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
}

impl SpectrumPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidArgument(format!("spectrum needs at least 2 samples, got {len}")));
        }
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(len),
            len,
        })
    }

    /// Full complex spectrum.
    pub fn transform(&self, waveform: &[f64]) -> Result<Vec<Complex<f64>>> {
        if waveform.len() != self.len {
            return Err(Error::DimensionMismatch(format!(
                "waveform has {} samples, plan expects {}",
                waveform.len(),
                self.len
            )));
        }
        let mut buf: Vec<Complex<f64>> = waveform.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        Ok(buf)
    }

    /// `|X_k|` for `k = 0..=len/2`.
    pub fn magnitude(&self, waveform: &[f64]) -> Result<Vec<f64>> {
        let full = self.transform(waveform)?;
        Ok(full[..=self.len / 2].iter().map(|c| c.norm()).collect())
    }
}

/// Modulus of the DFT over bins `0..=B/2`.
pub fn magnitude_spectrum(waveform: &[f64]) -> Result<Vec<f64>> {
    SpectrumPlan::new(waveform.len())?.magnitude(waveform)
}

/// Cosine of the angle between two spectra.
pub fn ccm(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!("spectra have {} and {} bins", u.len(), v.len())));
    }
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroSignal("spectrum for cosine correlation"));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Magnitude spectrum of the pixel at `(x, y)`.
    Pixel(usize, usize),
    /// Full magnitude spectrum (`B/2 + 1` bins).
    Spectrum(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CcmConfig {
    /// Inclusive bin range `[lo, hi]`; all bins when `None`.
    pub band: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChemicalMap {
    pub nx: usize,
    pub ny: usize,
    /// Cosine per pixel, x fastest; 0 where `valid` is false.
    pub values: Vec<f64>,
    /// False for pixels whose (band-limited) spectrum is zero.
    pub valid: Vec<bool>,
    pub reference: String,
}

impl ChemicalMap {
    pub fn mean(&self) -> f64 {
        aggregate(self.values.iter().zip(&self.valid).filter(|(_, &ok)| ok).map(|(v, _)| *v)).mean
    }
}

/// Magnitude spectra of every pixel, x fastest.
pub fn pixel_spectra(x: &Datacube) -> Result<Vec<Vec<f64>>> {
    let plan = SpectrumPlan::new(x.nb())?;
    (0..x.nx() * x.ny())
        .into_par_iter()
        .map(|p| plan.magnitude(&x.waveform(p % x.nx(), p / x.nx())))
        .collect()
}

pub fn chemical_map(x: &Datacube, reference: &Reference, cfg: &CcmConfig) -> Result<ChemicalMap> {
    let spectra = pixel_spectra(x)?;
    let bins = x.nb() / 2 + 1;
    let (lo, hi) = cfg.band.unwrap_or((0, bins - 1));
    if lo > hi || hi >= bins {
        return Err(Error::config("band", format!("range {lo}..={hi} outside 0..{bins}")));
    }
    let (reference_spectrum, label) = match reference {
        Reference::Pixel(rx, ry) => {
            if *rx >= x.nx() || *ry >= x.ny() {
                return Err(Error::config("reference", format!("pixel ({rx}, {ry}) outside the grid")));
            }
            (spectra[ry * x.nx() + rx].clone(), format!("pixel({rx},{ry})"))
        }
        Reference::Spectrum(s) => {
            if s.len() != bins {
                return Err(Error::DimensionMismatch(format!(
                    "reference spectrum has {} bins, cube spectra have {bins}",
                    s.len()
                )));
            }
            (s.clone(), "spectrum".to_string())
        }
    };
    let u = &reference_spectrum[lo..=hi];
    if u.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroSignal("reference spectrum"));
    }
    let (values, valid): (Vec<f64>, Vec<bool>) = spectra
        .iter()
        .map(|s| match ccm(u, &s[lo..=hi]) {
            Ok(c) => (c, true),
            Err(_) => (0.0, false),
        })
        .unzip();
    Ok(ChemicalMap {
        nx: x.nx(),
        ny: x.ny(),
        values,
        valid,
        reference: label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_layered, LayeredPhantomSpec};

    #[test]
    fn spectrum_examples() {
        let s = magnitude_spectrum(&[2.0; 8]).unwrap();
        assert_eq!(s.len(), 5);
        assert!((s[0] - 16.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|v| v.abs() < 1e-12));

        let w: Vec<f64> = (0..8).map(|n| (2.0 * std::f64::consts::PI * 2.0 * n as f64 / 8.0).cos()).collect();
        let s = magnitude_spectrum(&w).unwrap();
        for (k, v) in s.iter().enumerate() {
            let want = if k == 2 { 4.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "bin {k}: {v}");
        }
        assert!(magnitude_spectrum(&[1.0]).is_err());
    }

    #[test]
    fn parseval() {
        let w: Vec<f64> = (0..13).map(|n| ((n * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let full = SpectrumPlan::new(13).unwrap().transform(&w).unwrap();
        let lhs: f64 = full.iter().map(|c| c.norm_sqr()).sum();
        let rhs: f64 = 13.0 * w.iter().map(|v| v * v).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-10 * rhs);
    }

    #[test]
    fn ccm_examples() {
        assert!((ccm(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ccm(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((ccm(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(ccm(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroSignal(_))));
        assert!(ccm(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn clean_phantom_delays_exact() {
        let spec = LayeredPhantomSpec {
            surface_peak_index: 40,
            buried_depth_delay: 60,
            layer_thickness_delay: 20,
            nb: 160,
            ..LayeredPhantomSpec::tshape(32, 32, 160)
        };
        let cube = generate_layered(&spec).unwrap();
        let cfg = PeakAnalysisConfig { depth_scale: 0.0032, refine: false, ..Default::default() };
        let report = measure_structure(&cube, &cfg).unwrap();
        let inside = spec.shape.iter().filter(|&&b| b).count();
        assert_eq!(report.valid_count, inside);
        for (px, &shape) in report.pixels.iter().zip(&spec.shape) {
            assert_eq!(px.valid, shape);
            if shape {
                assert!((px.depth - 0.192).abs() < 1e-12);
                assert!((px.thickness - 0.064).abs() < 1e-12);
            }
        }
        assert!(report.depth.std < 1e-12);
        assert!(report.summary().contains("0.1920±0.0000"));

        let p = spec.shape.iter().position(|&b| b).unwrap();
        let peaks = detect_peaks(&cube.waveform(p % 32, p / 32), &cfg);
        assert_eq!(peaks, vec![40.0, 100.0, 120.0]);
    }

    #[test]
    fn refined_peaks_stay_on_symmetric_echoes() {
        let cube = generate_layered(&LayeredPhantomSpec::default()).unwrap();
        let report = measure_structure(&cube, &PeakAnalysisConfig::default()).unwrap();
        assert!((report.depth.mean - 48.0).abs() < 1e-3);
        assert!((report.thickness.mean - 20.0).abs() < 1e-3);
    }

    #[test]
    fn chemical_map_self_reference() {
        let cube = generate_layered(&LayeredPhantomSpec::tshape(16, 16, 128)).unwrap();
        let map = chemical_map(&cube, &Reference::Pixel(5, 6), &CcmConfig::default()).unwrap();
        assert!((map.values[6 * 16 + 5] - 1.0).abs() < 1e-12);
        assert!(map.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let banded = chemical_map(&cube, &Reference::Pixel(5, 6), &CcmConfig { band: Some((2, 30)) }).unwrap();
        assert!((banded.values[6 * 16 + 5] - 1.0).abs() < 1e-12);
        assert!(chemical_map(&cube, &Reference::Pixel(0, 0), &CcmConfig { band: Some((10, 100)) }).is_err());
    }
}
