//! Python bindings for the `d2cip` tracker.
//!
//! Exposes box geometry, the ESS and response-map helpers, synthetic
//! scenario generation, tracking runs, metrics and the variant ablation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use d2cip::harness::{self, RunConfig, ScenarioKind, ScenarioParams};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Axis-aligned box by center and size.
#[pyclass(name = "TargetState", module = "d2cip_py", from_py_object)]
#[derive(Clone, Copy)]
struct PyTargetState {
    inner: d2cip::TargetState,
}

#[pymethods]
impl PyTargetState {
    #[new]
    fn new(position: [f64; 2], size: [f64; 2]) -> Self {
        Self {
            inner: d2cip::TargetState::new(position, size),
        }
    }

    /// Builds a box from its top-left corner and size.
    #[staticmethod]
    fn from_corner_box(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self {
            inner: d2cip::TargetState::from_corner_box(x, y, w, h),
        }
    }

    #[getter]
    fn position(&self) -> [f64; 2] {
        self.inner.position
    }

    #[getter]
    fn size(&self) -> [f64; 2] {
        self.inner.size
    }

    /// `(x0, y0, x1, y1)`.
    fn corners(&self) -> [f64; 4] {
        self.inner.corners()
    }

    fn iou(&self, other: &PyTargetState) -> f64 {
        self.inner.iou(&other.inner)
    }

    fn distance_to(&self, other: &PyTargetState) -> f64 {
        self.inner.distance_to(&other.inner)
    }

    fn __repr__(&self) -> String {
        let [x, y] = self.inner.position;
        let [w, h] = self.inner.size;
        format!("TargetState(position=[{x}, {y}], size=[{w}, {h}])")
    }
}

/// `1 / sum(w^2)` of normalized weights.
#[pyfunction]
fn effective_sample_size(weights: Vec<f64>) -> PyResult<f64> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
        return Err(PyValueError::new_err("weights must be non-negative with a positive sum"));
    }
    let norm: Vec<f64> = weights.iter().map(|w| w / total).collect();
    Ok(d2cip::estimation::ess_of(&norm))
}

/// Peak cell and likelihood of a row-major response map centered on `center`.
#[pyfunction]
fn response_peak(scores: Vec<f64>, rows: usize, cols: usize, center: [f64; 2]) -> PyResult<([f64; 2], f64, f64)> {
    if rows == 0 || cols == 0 || rows % 2 == 0 || cols % 2 == 0 || scores.len() != rows * cols {
        return Err(PyValueError::new_err("map must be odd-sized with rows * cols scores"));
    }
    let origin = [center[0] - (cols / 2) as f64, center[1] - (rows / 2) as f64];
    let map = d2cip::ResponseMap::new(rows, cols, origin, scores);
    let (peak, score) = map.peak();
    Ok((peak, score, d2cip::likelihood_of(&map)))
}

/// A frame sequence with ground truth.
#[pyclass(name = "Sequence", module = "d2cip_py")]
struct PySequence {
    inner: harness::Sequence,
}

#[pymethods]
impl PySequence {
    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.frames.len()
    }

    #[getter]
    fn truth(&self) -> Vec<PyTargetState> {
        self.inner.truth.iter().map(|&inner| PyTargetState { inner }).collect()
    }

    /// Frame `t` as `(width, height, pixels)` with intensities in `[0, 1]`.
    fn frame(&self, t: usize) -> PyResult<(usize, usize, Vec<f64>)> {
        let f = self
            .inner
            .frames
            .get(t)
            .ok_or_else(|| PyValueError::new_err(format!("frame {t} out of range")))?;
        Ok((f.width, f.height, f.pixels.clone()))
    }

    /// Writes PGM frames, `groundtruth.txt` and `scenario.json` into `dir`.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        let sc = self
            .inner
            .scenario
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("only synthetic sequences can be saved"))?;
        harness::write_scenario_dir(&dir, sc).map_err(err)
    }
}

/// Generates a synthetic sequence of the given kind.
#[pyfunction]
#[pyo3(signature = (kind, seed=0, frames=50, noise_std=None))]
fn generate(kind: &str, seed: u64, frames: usize, noise_std: Option<f64>) -> PyResult<PySequence> {
    let kind: ScenarioKind = kind.parse().map_err(err)?;
    let mut params = ScenarioParams {
        frames,
        ..ScenarioParams::default()
    };
    if let Some(n) = noise_std {
        params.noise_std = n;
    }
    let sc = harness::generate_scenario(kind, &params, seed).map_err(err)?;
    Ok(PySequence {
        inner: harness::Sequence::from_scenario(format!("{kind}-{seed:04}"), sc),
    })
}

/// Loads a sequence directory of `%06d.pgm` frames and `groundtruth.txt`.
#[pyfunction]
fn load_sequence(dir: PathBuf) -> PyResult<PySequence> {
    Ok(PySequence {
        inner: harness::load_sequence(&dir).map_err(err)?,
    })
}

type Options<'py> = Option<BTreeMap<String, Bound<'py, PyAny>>>;

/// Applies config keys over the defaults; values are passed through `str()`.
fn config(options: Options<'_>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::default();
    for (k, v) in options.unwrap_or_default() {
        cfg.set(&k, &v.str()?.to_cow()?).map_err(err)?;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Output of one tracking run.
#[pyclass(name = "TrackResult", module = "d2cip_py")]
struct PyTrackResult {
    inner: harness::TrackResult,
}

#[pymethods]
impl PyTrackResult {
    #[getter]
    fn variant(&self) -> String {
        self.inner.variant.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn l_min(&self) -> f64 {
        self.inner.l_min
    }

    #[getter]
    fn estimates(&self) -> Vec<PyTargetState> {
        self.inner.frames.iter().map(|f| PyTargetState { inner: f.estimate }).collect()
    }

    #[getter]
    fn lost(&self) -> Vec<bool> {
        self.inner.frames.iter().map(|f| f.diagnostics.lost).collect()
    }

    #[getter]
    fn ess(&self) -> Vec<f64> {
        self.inner.frames.iter().map(|f| f.diagnostics.ess).collect()
    }

    /// Headline precision, success AUC and both curves as `(threshold, value)`.
    fn metrics(&self) -> PyResult<(f64, f64, Vec<(f64, f64)>, Vec<(f64, f64)>)> {
        let m = harness::compute_metrics(&self.inner).map_err(err)?;
        Ok((m.precision, m.success_auc, m.precision_curve, m.success_curve))
    }

    /// Same document the CLI writes as `result.json`.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(err)
    }
}

/// Tracks `sequence`; `options` maps config keys to values.
#[pyfunction]
#[pyo3(signature = (sequence, options=None))]
fn track(sequence: &PySequence, options: Options<'_>) -> PyResult<PyTrackResult> {
    let cfg = config(options)?;
    Ok(PyTrackResult {
        inner: harness::run_sequence(&cfg, &sequence.inner).map_err(err)?,
    })
}

/// Runs all four variants over the sequences and seeds; returns the
/// `variant,metric,value,gain` CSV.
#[pyfunction]
#[pyo3(signature = (sequences, seeds, options=None))]
fn ablate(
    sequences: Vec<PyRef<'_, PySequence>>,
    seeds: Vec<u64>,
    options: Options<'_>,
) -> PyResult<String> {
    let cfg = config(options)?;
    let suite: Vec<harness::Sequence> = sequences.iter().map(|s| s.inner.clone()).collect();
    Ok(harness::run_ablation(&suite, &cfg, &seeds).map_err(err)?.to_csv())
}

#[pymodule]
fn d2cip_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTargetState>()?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyTrackResult>()?;
    m.add_function(wrap_pyfunction!(effective_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(response_peak, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(load_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    Ok(())
}
