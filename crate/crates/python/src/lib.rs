//! Python bindings: boxes, assignment, the cost regressor, the tracker loop,
//! synthetic data and CLEAR-MOT scoring.

use std::path::PathBuf;

use assoctrack::assign::{self, CostMatrix, GATED};
use assoctrack::dataset::{generate_synthetic_sequence, SynthConfig};
use assoctrack::eval::EvalReport;
use assoctrack::mlp::{self, LabeledExample, TrainConfig};
use assoctrack::tracker::{self, MlpEstimator, TrackerConfig, TrackerState};
use assoctrack::{Descriptor, Detection, Error, FrameDimensions};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "BoundingBox", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyBoundingBox(assoctrack::BoundingBox);

#[pymethods]
impl PyBoundingBox {
    /// Box from its center `(u, v)`, height `h` and aspect ratio `r = w / h`.
    #[new]
    fn new(u: f64, v: f64, h: f64, r: f64) -> PyResult<Self> {
        assoctrack::BoundingBox::new(u, v, h, r).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_corner(left: f64, top: f64, width: f64, height: f64) -> PyResult<Self> {
        assoctrack::BoundingBox::from_corner(left, top, width, height).map(Self).map_err(to_py)
    }

    #[allow(clippy::wrong_self_convention)]
    fn to_corner(&self) -> (f64, f64, f64, f64) {
        self.0.to_corner()
    }

    fn iou(&self, other: PyRef<'_, PyBoundingBox>) -> f64 {
        self.0.iou(&other.0)
    }

    #[getter]
    fn u(&self) -> f64 {
        self.0.u
    }

    #[getter]
    fn v(&self) -> f64 {
        self.0.v
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h
    }

    #[getter]
    fn r(&self) -> f64 {
        self.0.r
    }

    fn __repr__(&self) -> String {
        format!("BoundingBox(u={}, v={}, h={}, r={})", self.0.u, self.0.v, self.0.h, self.0.r)
    }
}

fn cost_matrix(rows: Vec<Vec<f64>>) -> PyResult<CostMatrix> {
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|r| r.into_iter().map(|c| if c.is_nan() { GATED } else { c }).collect())
        .collect();
    CostMatrix::from_rows(&rows).map_err(to_py)
}

/// Minimum-cost assignment; returns `(row, col)` pairs sorted by row.
#[pyfunction]
fn hungarian(costs: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    Ok(assign::hungarian(&cost_matrix(costs)?))
}

/// Assignment after dropping entries above `c_max` (and infinite ones).
/// Returns `(matches, unmatched_rows, unmatched_cols)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn gate_and_assign(costs: Vec<Vec<f64>>, c_max: f64) -> PyResult<(Vec<(usize, usize, f64)>, Vec<usize>, Vec<usize>)> {
    let r = assign::gate_and_assign(&cost_matrix(costs)?, c_max);
    Ok((
        r.matches.iter().map(|m| (m.track, m.detection, m.cost)).collect(),
        r.unmatched_tracks,
        r.unmatched_detections,
    ))
}

#[pyclass(name = "MlpModel", skip_from_py_object)]
#[derive(Clone)]
struct PyMlpModel(mlp::MlpModel);

#[pymethods]
impl PyMlpModel {
    /// Glorot-initialized network with the given hidden widths.
    #[new]
    #[pyo3(signature = (input_dim, hidden = vec![7], seed = 0))]
    fn new(input_dim: usize, hidden: Vec<usize>, seed: u64) -> Self {
        Self(mlp::MlpModel::init(input_dim, &hidden, seed))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        mlp::load_model(&path).map(Self).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        mlp::save_model(&self.0, &path).map_err(to_py)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    #[getter]
    fn hidden(&self) -> Vec<usize> {
        self.0.hidden_layers()
    }

    fn forward(&self, batch: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.0.forward(&batch).map_err(to_py)
    }

    /// Trains in place; returns the per-epoch mean training loss.
    #[pyo3(signature = (features, labels, learning_rate = 2e-3, momentum = 0.9, epochs = 50, batch_size = 128, beta = 1.0, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        learning_rate: f64,
        momentum: f64,
        epochs: usize,
        batch_size: usize,
        beta: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        if features.len() != labels.len() {
            return Err(PyValueError::new_err(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let data: Vec<LabeledExample> = features
            .into_iter()
            .zip(labels)
            .map(|(f, l)| LabeledExample::new(f, l))
            .collect();
        let cfg = TrainConfig { learning_rate, momentum, epochs, batch_size, seed, beta };
        let (model, trace) = py
            .detach(|| mlp::train(&self.0, &data, &cfg))
            .map_err(to_py)?;
        self.0 = model;
        Ok(trace)
    }
}

/// Online tracker driven by a trained cost model.
#[pyclass(name = "Tracker")]
struct PyTracker {
    state: TrackerState,
    estimator: MlpEstimator,
    cfg: TrackerConfig,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (model, frame_width, frame_height, l_max = 3, c_max = 0.0, window = 5, min_confidence = 0.3))]
    fn new(
        model: PyRef<'_, PyMlpModel>,
        frame_width: f64,
        frame_height: f64,
        l_max: u32,
        c_max: f64,
        window: usize,
        min_confidence: f64,
    ) -> PyResult<Self> {
        let frame = FrameDimensions::new(frame_width, frame_height).map_err(to_py)?;
        let cfg = TrackerConfig { l_max, c_max, window, min_confidence, frame };
        cfg.validate().map_err(to_py)?;
        tracker::check_model_window(&model.0, window).map_err(to_py)?;
        Ok(Self {
            state: TrackerState::default(),
            estimator: MlpEstimator::new(model.0.clone()),
            cfg,
        })
    }

    /// Processes one frame. Each detection is `(left, top, width, height,
    /// confidence, descriptor)`; returns `(id, left, top, width, height)` for
    /// every confirmed track.
    #[allow(clippy::type_complexity)]
    fn step(
        &mut self,
        frame: u32,
        detections: Vec<(f64, f64, f64, f64, f64, Vec<f32>)>,
    ) -> PyResult<Vec<(u64, f64, f64, f64, f64)>> {
        let dets = detections
            .into_iter()
            .map(|(l, t, w, h, conf, desc)| {
                let b = assoctrack::BoundingBox::from_corner(l, t, w, h)?;
                Ok(Detection::new(frame, b, conf).with_appearance(Descriptor::from(desc)))
            })
            .collect::<assoctrack::Result<Vec<_>>>()
            .map_err(to_py)?;
        let records = tracker::step(&mut self.state, frame, &dets, &self.estimator, &self.cfg).map_err(to_py)?;
        Ok(records
            .into_iter()
            .map(|r| {
                let (l, t, w, h) = r.bbox.to_corner();
                (r.id, l, t, w, h)
            })
            .collect())
    }

    #[getter]
    fn live_tracks(&self) -> usize {
        self.state.tracks.len()
    }

    #[getter]
    fn ids_issued(&self) -> u64 {
        self.state.ids_issued()
    }
}

/// Writes a synthetic sequence (det.txt, det_desc.bin, gt.txt, gt_desc.bin) to `out_dir`.
#[pyfunction]
#[pyo3(signature = (out_dir, targets = 10, frames = 600, drop_rate = 0.05, fp_rate = 0.05, noise = 1.0, seed = 0))]
fn synth(
    out_dir: PathBuf,
    targets: usize,
    frames: u32,
    drop_rate: f64,
    fp_rate: f64,
    noise: f64,
    seed: u64,
) -> PyResult<()> {
    let cfg = SynthConfig { targets, frames, drop_rate, fp_rate, motion_noise: noise, seed, ..Default::default() };
    let seq = generate_synthetic_sequence(&cfg).map_err(to_py)?;
    assoctrack::cli::write_synthetic(&seq, &out_dir).map_err(to_py)
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mota", r.mota)?;
    d.set_item("motp", r.motp)?;
    d.set_item("mt", r.mt)?;
    d.set_item("ml", r.ml)?;
    d.set_item("idsw", r.id_switches)?;
    d.set_item("fm", r.fragmentations)?;
    d.set_item("fp", r.false_positives)?;
    d.set_item("fn", r.false_negatives)?;
    d.set_item("gt", r.gt)?;
    Ok(d)
}

/// CLEAR-MOT scores for a result file against a ground-truth file.
#[pyfunction]
#[pyo3(signature = (gt_path, results_path, iou_threshold = 0.5))]
fn evaluate<'py>(
    py: Python<'py>,
    gt_path: PathBuf,
    results_path: PathBuf,
    iou_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let gt = assoctrack::formats::parse_ground_truth(&gt_path).map_err(to_py)?;
    let res = assoctrack::formats::parse_results(&results_path).map_err(to_py)?;
    let report = assoctrack::eval::evaluate(&gt, &res, iou_threshold).map_err(to_py)?;
    report_dict(py, &report)
}

#[pymodule]
fn assoctrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBoundingBox>()?;
    m.add_class::<PyMlpModel>()?;
    m.add_class::<PyTracker>()?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(gate_and_assign, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("WINDOW_DIM_PER_PAIR", assoctrack::features::PAIR_DIM)?;
    Ok(())
}
