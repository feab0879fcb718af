//! Python bindings for `thzcube`.
//!
//! Cubes cross the boundary as flat lists in the library's `(t, y, x)` order
//! (x fastest); `numpy.asarray(cube.values()).reshape(nb, ny, nx)` gives an
//! array view of the same layout. Long-running calls release the GIL.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use thzcube::analysis::{self, CcmConfig, PeakAnalysisConfig, Reference};
use thzcube::baseline_wavelet::denoise_wavelet;
use thzcube::config::KeyValues;
use thzcube::datacube::{self, read_cube, read_mask, write_cube, write_mask};
use thzcube::dictionary::{read_dictionary, write_dictionary};
use thzcube::phantom::{generate_layered, generate_spectral, LayeredPhantomSpec, SpectralPhantomSpec};
use thzcube::pipeline::{self, PipelineConfig};

fn py_err(e: thzcube::Error) -> PyErr {
    match e.exit_code() {
        3 => PyIOError::new_err(e.to_string()),
        4 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for thzcube::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A 3D datacube: `nx * ny` waveforms of `nb` samples.
#[pyclass(name = "Datacube", module = "thzcube_py")]
struct PyDatacube(thzcube::Datacube);

#[pymethods]
impl PyDatacube {
    #[new]
    fn new(nx: usize, ny: usize, nb: usize, values: Vec<f64>) -> PyResult<Self> {
        thzcube::Datacube::new(nx, ny, nb, values).py().map(Self)
    }

    #[staticmethod]
    fn zeros(nx: usize, ny: usize, nb: usize) -> Self {
        Self(thzcube::Datacube::zeros(nx, ny, nb))
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        read_cube(path).py().map(Self)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_cube(&self.0, path).py()
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.0.dims()
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn get(&self, x: usize, y: usize, t: usize) -> PyResult<f64> {
        let (nx, ny, nb) = self.0.dims();
        if x >= nx || y >= ny || t >= nb {
            return Err(PyValueError::new_err(format!("({x}, {y}, {t}) outside {nx}x{ny}x{nb}")));
        }
        Ok(self.0.get(x, y, t))
    }

    fn waveform(&self, x: usize, y: usize) -> PyResult<Vec<f64>> {
        if x >= self.0.nx() || y >= self.0.ny() {
            return Err(PyValueError::new_err(format!("pixel ({x}, {y}) outside the grid")));
        }
        Ok(self.0.waveform(x, y))
    }

    fn energy(&self) -> f64 {
        self.0.energy()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        let (nx, ny, nb) = self.0.dims();
        format!("Datacube({nx}x{ny}x{nb})")
    }
}

/// Observation mask; `True` marks an acquired voxel.
#[pyclass(name = "Mask", module = "thzcube_py")]
struct PyMask(thzcube::Mask);

#[pymethods]
impl PyMask {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        read_mask(path).py().map(Self)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_mask(&self.0, path).py()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.0.rate()
    }

    fn observed(&self) -> Vec<bool> {
        self.0.observed().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Mask(rate={:.4})", self.0.rate())
    }
}

/// Learned dictionary of unit-norm atoms.
#[pyclass(name = "Dictionary", module = "thzcube_py")]
struct PyDictionary(thzcube::Dictionary);

#[pymethods]
impl PyDictionary {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        read_dictionary(path).py().map(Self)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_dictionary(&self.0, path).py()
    }

    #[getter]
    fn r(&self) -> usize {
        self.0.r()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    fn atom(&self, a: usize) -> PyResult<Vec<f64>> {
        if a >= self.0.k() {
            return Err(PyValueError::new_err(format!("atom {a} out of range")));
        }
        Ok(self.0.atom(a).to_vec())
    }
}

/// Pipeline settings. Keyword arguments use the config-file keys, e.g.
/// `Config("tshape", rate=0.2, input_snr="inf", block_b=1)`.
#[pyclass(name = "Config", module = "thzcube_py")]
struct PyConfig(PipelineConfig);

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (preset = "tshape", **settings))]
    fn new(preset: &str, settings: Option<HashMap<String, Bound<'_, PyAny>>>) -> PyResult<Self> {
        let mut kv = KeyValues::default();
        kv.insert("preset", preset);
        for (key, value) in settings.unwrap_or_default() {
            kv.insert(&key, value.str()?.to_string());
        }
        PipelineConfig::from_key_values(&kv).py().map(Self)
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.0.rate
    }

    #[getter]
    fn input_snr_db(&self) -> f64 {
        self.0.input_snr_db
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn block(&self) -> (usize, usize, usize) {
        self.0.block
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Layered T-shape phantom; `None` arguments keep the defaults.
#[pyfunction]
#[pyo3(signature = (nx = 64, ny = 64, nb = 128, seed = None))]
fn layered_phantom(nx: usize, ny: usize, nb: usize, seed: Option<u64>) -> PyResult<PyDatacube> {
    let mut spec = LayeredPhantomSpec::tshape(nx, ny, nb);
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    generate_layered(&spec).py().map(PyDatacube)
}

/// Two-region spectral (tablet) phantom and its region labels.
#[pyfunction]
#[pyo3(signature = (nx = 32, ny = 32, nb = 256))]
fn tablet_phantom(nx: usize, ny: usize, nb: usize) -> PyResult<(PyDatacube, Vec<usize>)> {
    let spec = SpectralPhantomSpec::tablet(nx, ny, nb);
    let cube = generate_spectral(&spec).py()?;
    Ok((PyDatacube(cube), spec.region_map))
}

/// Adds noise and subsamples per the config's rate, SNR and seed.
#[pyfunction]
fn degrade(py: Python<'_>, clean: &PyDatacube, cfg: &PyConfig) -> PyResult<(PyDatacube, PyMask)> {
    let (y, m) = py.detach(|| pipeline::degrade(&clean.0, &cfg.0)).py()?;
    Ok((PyDatacube(y), PyMask(m)))
}

#[pyfunction]
fn interpolate(py: Python<'_>, y: &PyDatacube, mask: &PyMask, cfg: &PyConfig) -> PyResult<PyDatacube> {
    py.detach(|| thzcube::inpaint::interpolate(&y.0, &mask.0, &cfg.0.interp))
        .py()
        .map(PyDatacube)
}

/// Learns a dictionary; returns it with the coding error per alternation.
#[pyfunction]
fn train(py: Python<'_>, y: &PyDatacube, cfg: &PyConfig) -> PyResult<(PyDictionary, Vec<f64>)> {
    let (dict, errors) = py.detach(|| pipeline::train_on(&y.0, &cfg.0)).py()?;
    Ok((PyDictionary(dict), errors))
}

#[pyfunction]
fn reconstruct(py: Python<'_>, y: &PyDatacube, dictionary: &PyDictionary, cfg: &PyConfig) -> PyResult<PyDatacube> {
    py.detach(|| pipeline::reconstruct_with(&y.0, &dictionary.0, &cfg.0))
        .py()
        .map(PyDatacube)
}

#[pyfunction]
fn wavelet_denoise(py: Python<'_>, y: &PyDatacube, cfg: &PyConfig) -> PyResult<PyDatacube> {
    py.detach(|| denoise_wavelet(&y.0, &cfg.0.wavelet)).py().map(PyDatacube)
}

/// Output SNR in dB (`inf` for an exact estimate).
#[pyfunction]
fn snr_db(reference: &PyDatacube, estimate: &PyDatacube) -> PyResult<f64> {
    datacube::snr_db(&reference.0, &estimate.0).py()
}

/// End-to-end run. Returns `(rows, reconstructed)` where each row is a dict
/// with the metrics CSV columns.
#[pyfunction]
fn run_pipeline<'py>(
    py: Python<'py>,
    clean: &PyDatacube,
    cfg: &PyConfig,
) -> PyResult<(Vec<Bound<'py, pyo3::types::PyDict>>, PyDatacube)> {
    let run = py.detach(|| pipeline::run(&clean.0, &cfg.0)).py()?;
    let rows = run
        .rows
        .iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("method", r.method)?;
            d.set_item("rate", r.rate)?;
            d.set_item("input_snr_db", r.input_snr_db)?;
            d.set_item("output_snr_db", r.output_snr_db)?;
            d.set_item("wall_seconds", r.wall_seconds)?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    Ok((rows, PyDatacube(run.proposed)))
}

/// Mean and std of depth and thickness over pixels with three echoes:
/// `(depth_mean, depth_std, thickness_mean, thickness_std, valid_pixels)`.
#[pyfunction]
#[pyo3(signature = (x, depth_scale = 1.0, refine = true))]
fn measure_structure(x: &PyDatacube, depth_scale: f64, refine: bool) -> PyResult<(f64, f64, f64, f64, usize)> {
    let cfg = PeakAnalysisConfig {
        depth_scale,
        refine,
        ..PeakAnalysisConfig::default()
    };
    let r = analysis::measure_structure(&x.0, &cfg).py()?;
    Ok((r.depth.mean, r.depth.std, r.thickness.mean, r.thickness.std, r.valid_count))
}

#[pyfunction]
fn magnitude_spectrum(waveform: Vec<f64>) -> PyResult<Vec<f64>> {
    analysis::magnitude_spectrum(&waveform).py()
}

/// Cosine of the angle between two spectra.
#[pyfunction]
fn ccm(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    analysis::ccm(&u, &v).py()
}

/// Per-pixel cosine correlation against the spectrum of pixel `(x, y)`;
/// zero-spectrum pixels are `nan`.
#[pyfunction]
fn chemical_map(x: &PyDatacube, ref_x: usize, ref_y: usize) -> PyResult<Vec<f64>> {
    let map = analysis::chemical_map(&x.0, &Reference::Pixel(ref_x, ref_y), &CcmConfig::default()).py()?;
    Ok(map
        .values
        .iter()
        .zip(&map.valid)
        .map(|(&v, &ok)| if ok { v } else { f64::NAN })
        .collect())
}

#[pymodule]
fn thzcube_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDatacube>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(layered_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(tablet_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(interpolate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(wavelet_denoise, m)?)?;
    m.add_function(wrap_pyfunction!(snr_db, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(measure_structure, m)?)?;
    m.add_function(wrap_pyfunction!(magnitude_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(ccm, m)?)?;
    m.add_function(wrap_pyfunction!(chemical_map, m)?)?;
    Ok(())
}
