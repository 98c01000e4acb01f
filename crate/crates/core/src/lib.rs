//! Probability calibration toolkit.
//!
//! Evaluates classifier prediction sets (0-1 error, F1, ECE, MCE, NLL,
//! Brier score, reliability diagrams), fits post-hoc temperature and Platt
//! calibrators, soft-votes model ensembles, and runs the I / I-C / E-M1 /
//! E-M2 / E-M3 comparison pipelines.

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod metrics;
pub mod prediction;
pub mod scaling;
pub mod synth;

pub use ensemble::{
    compare_pipelines, logits_from_probabilities, run_pipeline, soft_vote, standard_methods, EnsembleInput,
    PipelineMethod, PipelineOptions,
};
pub use error::{CalibError, Result};
pub use metrics::{
    brier, build_reliability_diagram, classification_error, confusion_counts, ece, evaluate, f1_score, mce, nll,
    pearson_correlation, CalibrationReport, ConfusionCounts, MethodTag, ReliabilityBin, ReliabilityDiagram,
    DEFAULT_BINS,
};
pub use prediction::{
    confidences, predicted_labels, softmax, to_probabilities, ConfidenceMode, PredictionSet, ProbabilitySet,
};
pub use scaling::{
    apply_platt, apply_temperature, fit_platt, fit_temperature, minimize_scalar_convex, CalibratorModel, PlattModel,
    ScalarMinimum, TemperatureModel, TEMPERATURE_MAX, TEMPERATURE_MIN,
};
pub use synth::{generate, oracle_ece, oracle_fit_temperature, SynthConfig};
