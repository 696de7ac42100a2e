//! Python module `microstate_py`: codebooks, GFP, tokenization, spectral
//! features, kappa and the synthetic generator.
//!
//! Arrays cross the boundary as nested lists; signals are `[channels][samples]`.

use std::path::PathBuf;

use ::microstate as core;
use core::analytics::agreement as core_agreement;
use core::cluster::{assign, streaming_fit};
use core::gfp;
use core::io::{read_codebook, write_codebook};
use core::pipeline::shuffled_batches;
use core::prep::{self, MultichannelSignal};
use core::spectral::{self, default_bands, PowerScaling};
use core::synth::{self, SynthSpec, SynthStage};
use core::{FitConfig, FitMode};
use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn signal(
    data: Vec<Vec<f64>>,
    fs: f64,
    names: Option<Vec<String>>,
) -> PyResult<MultichannelSignal> {
    let data = matrix(data)?;
    let names = names.unwrap_or_else(|| (0..data.nrows()).map(|i| format!("ch{i}")).collect());
    MultichannelSignal::new(names, fs, data).map_err(py_err)
}

#[pyclass(name = "Codebook", module = "microstate_py", frozen)]
struct PyCodebook {
    inner: core::Codebook,
}

#[pymethods]
impl PyCodebook {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyCodebook {
            inner: read_codebook(&path).map_err(py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_codebook(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn pad_id(&self) -> u32 {
        self.inner.pad_id()
    }

    #[getter]
    fn channel_names(&self) -> Vec<String> {
        self.inner.channel_names().to_vec()
    }

    /// `[k][channels]`
    fn centroids(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.centroids_f64())
    }

    /// Nearest-centroid id of every sample of a `[channels][samples]` signal.
    fn tokenize(&self, data: Vec<Vec<f64>>) -> PyResult<Vec<u32>> {
        let data = matrix(data)?;
        let (labels, _) = assign(self.inner.centroids_f64().view(), data.t()).map_err(py_err)?;
        Ok(labels)
    }

    fn __repr__(&self) -> String {
        format!(
            "Codebook(k={}, channels={:?})",
            self.inner.k(),
            self.inner.channel_names()
        )
    }
}

#[pyfunction]
fn gfp_series(data: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    gfp::gfp_of(matrix(data)?.view()).map_err(py_err)
}

#[pyfunction]
fn gfp_peaks(values: Vec<f64>) -> Vec<usize> {
    gfp::gfp_peaks(&values)
}

/// Streaming k-means on `[points][channels]` maps, shuffled with `seed`.
/// Returns the codebook and a report dict.
#[pyfunction]
#[pyo3(signature = (maps, k, batch_size=50, max_iter=300, tol=1e-4, mode="literal", seed=0, channel_names=None))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    maps: Vec<Vec<f64>>,
    k: usize,
    batch_size: usize,
    max_iter: usize,
    tol: f64,
    mode: &str,
    seed: u64,
    channel_names: Option<Vec<String>>,
) -> PyResult<(PyCodebook, Bound<'py, PyDict>)> {
    let maps = matrix(maps)?;
    let config = FitConfig {
        k,
        batch_size,
        max_iter,
        tol,
        mode: mode.parse::<FitMode>().map_err(py_err)?,
        seed,
    };
    config.validate().map_err(py_err)?;
    let names =
        channel_names.unwrap_or_else(|| (0..maps.ncols()).map(|i| format!("ch{i}")).collect());
    let result =
        streaming_fit(shuffled_batches(&maps, batch_size, seed), &config).map_err(py_err)?;
    let report = result.report.clone();
    let inner = result.into_codebook(names, &config).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("iterations", report.iterations)?;
    d.set_item("final_shift", report.final_shift)?;
    d.set_item("converged", report.converged)?;
    d.set_item("inertia_trace", report.inertia_trace)?;
    Ok((PyCodebook { inner }, d))
}

/// Band-power features `[channels][bands · frames]` with the default six bands.
#[pyfunction]
#[pyo3(signature = (data, fs, t_w=1.0, r_o=0.0))]
fn frequency_features(data: Vec<Vec<f64>>, fs: f64, t_w: f64, r_o: f64) -> PyResult<Vec<Vec<f64>>> {
    let sig = signal(data, fs, None)?;
    let out = spectral::frequency_features(&sig, t_w, r_o, &default_bands(), PowerScaling::Angular)
        .map_err(py_err)?;
    Ok(rows(&out))
}

#[pyfunction]
fn simpson(y: Vec<f64>, dx: f64) -> PyResult<f64> {
    spectral::simpson(&y, dx).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (data, fs, low=1.0, high=40.0))]
fn bandpass(data: Vec<Vec<f64>>, fs: f64, low: f64, high: f64) -> PyResult<Vec<Vec<f64>>> {
    let out = prep::bandpass(&signal(data, fs, None)?, low, high).map_err(py_err)?;
    Ok(rows(&out.data))
}

#[pyfunction]
fn resample(data: Vec<Vec<f64>>, fs: f64, target_fs: f64) -> PyResult<Vec<Vec<f64>>> {
    let out = prep::resample(&signal(data, fs, None)?, target_fs).map_err(py_err)?;
    Ok(rows(&out.data))
}

/// Accuracy, kappa and confusion matrix of integer label lists.
#[pyfunction]
fn agreement<'py>(
    py: Python<'py>,
    truth: Vec<u32>,
    predicted: Vec<u32>,
    classes: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let ev = core_agreement(&truth, &predicted, classes).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("accuracy", ev.accuracy)?;
    d.set_item("kappa", ev.kappa)?;
    d.set_item("kappa_degenerate", ev.kappa_degenerate)?;
    d.set_item("confusion", ev.confusion)?;
    Ok(d)
}

/// Channel names, `[channels][samples]` data, labels.
type SynthOutput = (Vec<String>, Vec<Vec<f64>>, Vec<u32>);

/// Synthetic recording: `(channel_names, data, labels)`; `stage` is
/// "wake" or "deep".
#[pyfunction]
#[pyo3(signature = (stage, duration_s=300.0, fs=256.0, channels=6, seed=0))]
fn synth_generate(
    stage: &str,
    duration_s: f64,
    fs: f64,
    channels: usize,
    seed: u64,
) -> PyResult<SynthOutput> {
    let stage = match stage {
        "wake" | "W" => SynthStage::Wake,
        "deep" | "N3" => SynthStage::Deep,
        other => return Err(PyValueError::new_err(format!("unknown stage {other:?}"))),
    };
    let rec = synth::generate(&SynthSpec {
        stage,
        duration_s,
        fs,
        channels,
        seed,
    })
    .map_err(py_err)?;
    Ok((
        rec.channel_names.clone(),
        rows(&rec.data),
        rec.labels.unwrap_or_default(),
    ))
}

#[pymodule]
fn microstate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCodebook>()?;
    m.add_function(wrap_pyfunction!(gfp_series, m)?)?;
    m.add_function(wrap_pyfunction!(gfp_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(frequency_features, m)?)?;
    m.add_function(wrap_pyfunction!(simpson, m)?)?;
    m.add_function(wrap_pyfunction!(bandpass, m)?)?;
    m.add_function(wrap_pyfunction!(resample, m)?)?;
    m.add_function(wrap_pyfunction!(agreement, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    Ok(())
}
