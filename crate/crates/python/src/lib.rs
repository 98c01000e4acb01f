//! Python bindings for calibkit.
//!
//! Prediction sets are wrapped in a `PredictionSet` class; everything else
//! crosses the boundary as plain lists and dicts.

use calibkit::io::{parse_predictions, reliability_svg as render_svg, write_predictions};
use calibkit::synth::{self, SynthConfig};
use calibkit::{
    CalibError, CalibrationReport, ConfidenceMode, EnsembleInput, PipelineMethod, PipelineOptions, ProbabilitySet,
};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: CalibError) -> PyErr {
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Flattens equal-length rows; returns the values and the row width.
fn flatten_rows(rows: &[Vec<f64>]) -> Result<(Vec<f64>, usize), CalibError> {
    let width = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(CalibError::Validation(format!(
            "row {i} has {} values, expected {width}",
            rows[i].len()
        )));
    }
    Ok((rows.concat(), width))
}

fn split_rows(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width.max(1)).map(<[f64]>::to_vec).collect()
}

fn confidence_mode(top_label: bool, chosen_class: usize) -> ConfidenceMode {
    if top_label {
        ConfidenceMode::TopLabel
    } else {
        ConfidenceMode::ChosenClass(chosen_class)
    }
}

/// Accepts "I", "I-C" (member from `member`), the `I(m)` forms, and "E-M1".."E-M3".
fn parse_method(name: &str, member: usize) -> Result<PipelineMethod, CalibError> {
    match name {
        "I" | "i" => Ok(PipelineMethod::Individual(member)),
        "I-C" | "i-c" => Ok(PipelineMethod::IndividualCalibrated(member)),
        other => other.to_uppercase().parse(),
    }
}

fn report_dict<'py>(py: Python<'py>, r: &CalibrationReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", r.method.to_string())?;
    d.set_item("error", r.error)?;
    d.set_item("f1", r.f1)?;
    d.set_item("ece", r.ece)?;
    d.set_item("mce", r.mce)?;
    d.set_item("nll", r.nll)?;
    d.set_item("brier", r.brier)?;
    d.set_item("temperatures", r.temperatures.clone())?;
    d.set_item("bins", r.bins)?;
    d.set_item("n", r.n)?;
    Ok(d)
}

/// Logits and labels for N samples and K classes.
#[pyclass(name = "PredictionSet", module = "calibkit_py", frozen)]
struct PyPredictionSet {
    inner: calibkit::PredictionSet,
}

#[pymethods]
impl PyPredictionSet {
    #[new]
    #[pyo3(signature = (logits, labels, name = String::new()))]
    fn new(logits: Vec<Vec<f64>>, labels: Vec<usize>, name: String) -> PyResult<Self> {
        let (flat, width) = flatten_rows(&logits).map_err(to_py_err)?;
        let inner = calibkit::PredictionSet::from_flat(flat, width, labels, name).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Reads a `label,logit_0,...` CSV file.
    #[staticmethod]
    fn from_csv(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: parse_predictions(path).map_err(to_py_err)?,
        })
    }

    fn to_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        write_predictions(&self.inner, path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "PredictionSet(name={:?}, n={}, classes={})",
            self.inner.name(),
            self.inner.len(),
            self.inner.class_count()
        )
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn logits(&self) -> Vec<Vec<f64>> {
        split_rows(self.inner.logits(), self.inner.class_count())
    }

    /// Row-wise softmax, optionally of `logits / temperature`.
    #[pyo3(signature = (temperature = 1.0))]
    fn probabilities(&self, temperature: f64) -> PyResult<Vec<Vec<f64>>> {
        let p = calibkit::apply_temperature(&self.inner, temperature).map_err(to_py_err)?;
        Ok(split_rows(p.probabilities(), p.class_count()))
    }

    /// Class-1 minus class-0 logit (binary sets only).
    fn binary_scores(&self) -> PyResult<Vec<f64>> {
        calibkit::scaling::binary_scores(&self.inner).map_err(to_py_err)
    }
}

fn members(sets: &[PyRef<'_, PyPredictionSet>]) -> Result<EnsembleInput, CalibError> {
    EnsembleInput::new(sets.iter().map(|s| s.inner.clone()).collect())
}

#[pyfunction]
fn softmax(logits: Vec<f64>) -> PyResult<Vec<f64>> {
    calibkit::softmax(&logits).map_err(to_py_err)
}

/// Metric report for a prediction set (softmax of its logits).
#[pyfunction]
#[pyo3(signature = (predictions, bins = 10, chosen_class = 1, top_label = false, positive_class = None, temperature = 1.0))]
fn evaluate<'py>(
    py: Python<'py>,
    predictions: PyRef<'_, PyPredictionSet>,
    bins: usize,
    chosen_class: usize,
    top_label: bool,
    positive_class: Option<usize>,
    temperature: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let probs = calibkit::apply_temperature(&predictions.inner, temperature).map_err(to_py_err)?;
    let report = calibkit::evaluate(&probs, confidence_mode(top_label, chosen_class), bins, positive_class)
        .map_err(to_py_err)?;
    report_dict(py, &report)
}

/// Metric report for explicit probability rows.
#[pyfunction]
#[pyo3(signature = (probabilities, labels, bins = 10, chosen_class = 1, top_label = false, positive_class = None))]
fn evaluate_probabilities<'py>(
    py: Python<'py>,
    probabilities: Vec<Vec<f64>>,
    labels: Vec<usize>,
    bins: usize,
    chosen_class: usize,
    top_label: bool,
    positive_class: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let probs = ProbabilitySet::from_rows(&probabilities, labels).map_err(to_py_err)?;
    let report = calibkit::evaluate(&probs, confidence_mode(top_label, chosen_class), bins, positive_class)
        .map_err(to_py_err)?;
    report_dict(py, &report)
}

/// Independent double-loop ECE, for cross-checking.
#[pyfunction]
#[pyo3(signature = (probabilities, labels, bins = 10, chosen_class = 1, top_label = false))]
fn oracle_ece(
    probabilities: Vec<Vec<f64>>,
    labels: Vec<usize>,
    bins: usize,
    chosen_class: usize,
    top_label: bool,
) -> PyResult<f64> {
    let probs = ProbabilitySet::from_rows(&probabilities, labels).map_err(to_py_err)?;
    let mode = confidence_mode(top_label, chosen_class);
    mode.validate(probs.class_count()).map_err(to_py_err)?;
    if bins == 0 {
        return Err(PyValueError::new_err("bins must be at least 1"));
    }
    Ok(synth::oracle_ece(&probs, mode, bins))
}

/// Returns `{"T", "calibration_nll", "iterations", "converged"}`.
#[pyfunction]
fn fit_temperature<'py>(py: Python<'py>, calibration: PyRef<'_, PyPredictionSet>) -> PyResult<Bound<'py, PyDict>> {
    let m = calibkit::fit_temperature(&calibration.inner).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("T", m.temperature)?;
    d.set_item("calibration_nll", m.calibration_nll)?;
    d.set_item("iterations", m.iterations)?;
    d.set_item("converged", m.converged)?;
    Ok(d)
}

/// Scaled copy of the set with logits divided by `temperature`.
#[pyfunction]
fn apply_temperature(predictions: PyRef<'_, PyPredictionSet>, temperature: f64) -> PyResult<PyPredictionSet> {
    let inner = calibkit::scaling::scale_logits(&predictions.inner, temperature).map_err(to_py_err)?;
    Ok(PyPredictionSet { inner })
}

/// Fits `sigmoid(a * score + b)`; returns `{"a", "b", "calibration_nll", "converged"}`.
#[pyfunction]
fn fit_platt<'py>(py: Python<'py>, scores: Vec<f64>, labels: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
    let m = calibkit::fit_platt(&scores, &labels).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("a", m.a)?;
    d.set_item("b", m.b)?;
    d.set_item("calibration_nll", m.calibration_nll)?;
    d.set_item("converged", m.converged)?;
    Ok(d)
}

/// Averages members' probability rows (each member is a list of rows).
#[pyfunction]
fn soft_vote(members: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let sets = members
        .iter()
        .map(|rows| ProbabilitySet::from_rows(rows, vec![0; rows.len()]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py_err)?;
    let avg = calibkit::soft_vote(&sets).map_err(to_py_err)?;
    Ok(split_rows(avg.probabilities(), avg.class_count()))
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (method, test, calibration = None, member = 0, bins = 10, chosen_class = 1, top_label = false, positive_class = None, fixed_temperature = None))]
fn run_pipeline<'py>(
    py: Python<'py>,
    method: &str,
    test: Vec<PyRef<'_, PyPredictionSet>>,
    calibration: Option<Vec<PyRef<'_, PyPredictionSet>>>,
    member: usize,
    bins: usize,
    chosen_class: usize,
    top_label: bool,
    positive_class: Option<usize>,
    fixed_temperature: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let method = parse_method(method, member).map_err(to_py_err)?;
    let test = members(&test).map_err(to_py_err)?;
    let cal = calibration.as_deref().map(members).transpose().map_err(to_py_err)?;
    let options = PipelineOptions {
        mode: confidence_mode(top_label, chosen_class),
        bins,
        positive_class,
        fixed_temperature,
    };
    let report = calibkit::run_pipeline(method, &test, cal.as_ref(), &options).map_err(to_py_err)?;
    report_dict(py, &report)
}

/// All five methods plus I for every member, in that order.
#[pyfunction]
#[pyo3(signature = (test, calibration, bins = 10, chosen_class = 1, top_label = false, positive_class = None))]
fn compare<'py>(
    py: Python<'py>,
    test: Vec<PyRef<'_, PyPredictionSet>>,
    calibration: Vec<PyRef<'_, PyPredictionSet>>,
    bins: usize,
    chosen_class: usize,
    top_label: bool,
    positive_class: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let test = members(&test).map_err(to_py_err)?;
    let cal = members(&calibration).map_err(to_py_err)?;
    let options = PipelineOptions {
        mode: confidence_mode(top_label, chosen_class),
        bins,
        positive_class,
        fixed_temperature: None,
    };
    let methods = calibkit::standard_methods(test.len());
    let reports = calibkit::compare_pipelines(&methods, &test, Some(&cal), &options).map_err(to_py_err)?;
    reports.iter().map(|r| report_dict(py, r)).collect()
}

/// Seeded binary set whose logits are calibrated ones times `temperature`.
#[pyfunction]
#[pyo3(signature = (samples = 1000, seed = 0, temperature = 1.0, alpha = 2.0, beta = 2.0))]
fn generate(samples: usize, seed: u64, temperature: f64, alpha: f64, beta: f64) -> PyResult<PyPredictionSet> {
    let config = SynthConfig {
        sample_count: samples,
        seed,
        true_temperature: temperature,
        alpha,
        beta,
    };
    Ok(PyPredictionSet {
        inner: synth::generate(&config).map_err(to_py_err)?,
    })
}

/// Ensemble members sharing labels, one per temperature.
#[pyfunction]
#[pyo3(signature = (temperatures, samples = 1000, seed = 0, member_noise = synth::DEFAULT_MEMBER_NOISE))]
fn generate_ensemble(
    temperatures: Vec<f64>,
    samples: usize,
    seed: u64,
    member_noise: f64,
) -> PyResult<Vec<PyPredictionSet>> {
    let sets = synth::generate_ensemble(&SynthConfig::new(samples, seed, 1.0), &temperatures, member_noise)
        .map_err(to_py_err)?;
    Ok(sets.into_iter().map(|inner| PyPredictionSet { inner }).collect())
}

/// SVG text of the reliability diagram.
#[pyfunction]
#[pyo3(signature = (predictions, bins = 10, chosen_class = 1, top_label = false, title = None))]
fn reliability_svg(
    predictions: PyRef<'_, PyPredictionSet>,
    bins: usize,
    chosen_class: usize,
    top_label: bool,
    title: Option<String>,
) -> PyResult<String> {
    let probs = calibkit::to_probabilities(&predictions.inner);
    let diagram = calibkit::build_reliability_diagram(&probs, confidence_mode(top_label, chosen_class), bins)
        .map_err(to_py_err)?;
    let title = title.unwrap_or_else(|| predictions.inner.name().to_string());
    Ok(render_svg(&diagram, &title))
}

#[pymodule]
fn calibkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPredictionSet>()?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_ece, m)?)?;
    m.add_function(wrap_pyfunction!(fit_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(apply_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(fit_platt, m)?)?;
    m.add_function(wrap_pyfunction!(soft_vote, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(reliability_svg, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let (flat, width) = flatten_rows(&rows).unwrap();
        assert_eq!(width, 3);
        assert_eq!(split_rows(&flat, width), rows);
    }

    #[test]
    fn ragged_rows_rejected() {
        let e = flatten_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(e.to_string().contains("row 1"), "{e}");
    }

    #[test]
    fn method_names() {
        assert_eq!(parse_method("I", 3).unwrap(), PipelineMethod::Individual(3));
        assert_eq!(parse_method("i-c", 2).unwrap(), PipelineMethod::IndividualCalibrated(2));
        assert_eq!(parse_method("I(4)", 0).unwrap(), PipelineMethod::Individual(4));
        assert_eq!(parse_method("e-m3", 0).unwrap(), PipelineMethod::AverageThenCalibrate);
        assert!(parse_method("E-M4", 0).is_err());
    }

    #[test]
    fn modes() {
        assert_eq!(confidence_mode(true, 5), ConfidenceMode::TopLabel);
        assert_eq!(confidence_mode(false, 0), ConfidenceMode::ChosenClass(0));
    }
}
