//! File formats and rendering.

pub mod predictions;
pub mod report;
pub mod svg;

pub use predictions::{format_predictions, parse_predictions, parse_predictions_str, write_predictions};
pub use report::{
    error_ece_table, load_manifest, model_to_json, read_model, read_reports, reports_to_json, EnsembleManifest,
    LoadedEnsemble,
};
pub use svg::{reliability_svg, render_reliability_svg};
