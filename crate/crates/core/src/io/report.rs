//! JSON reports, calibrator models, ensemble manifests and the error-vs-ECE table.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleInput;
use crate::error::{CalibError, Result};
use crate::io::predictions::parse_predictions;
use crate::metrics::CalibrationReport;
use crate::scaling::CalibratorModel;

/// `{"members": [...], "calibration_members": [...], "name": "..."}`.
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub members: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_members: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub name: String,
}

/// Member sets loaded from a manifest.
#[derive(Debug, Clone)]
pub struct LoadedEnsemble {
    pub name: String,
    pub test: EnsembleInput,
    pub calibration: Option<EnsembleInput>,
}

impl EnsembleManifest {
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(CalibError::validation("manifest lists no members"));
        }
        if let Some(cal) = &self.calibration_members {
            if cal.len() != self.members.len() {
                return Err(CalibError::validation(format!(
                    "manifest lists {} members but {} calibration members",
                    self.members.len(),
                    cal.len()
                )));
            }
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let manifest: Self = read_json(path)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(&self, base_dir: &Path) -> Result<LoadedEnsemble> {
        self.validate()?;
        let load_all = |paths: &[PathBuf]| -> Result<EnsembleInput> {
            let sets = paths
                .iter()
                .map(|p| parse_predictions(base_dir.join(p)))
                .collect::<Result<Vec<_>>>()?;
            EnsembleInput::new(sets)
        };
        Ok(LoadedEnsemble {
            name: self.name.clone(),
            test: load_all(&self.members)?,
            calibration: self.calibration_members.as_deref().map(load_all).transpose()?,
        })
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedEnsemble> {
    let path = path.as_ref();
    let manifest = EnsembleManifest::read(path)?;
    manifest.load(path.parent().unwrap_or(Path::new(".")))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CalibError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CalibError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize infallibly");
    s.push('\n');
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| CalibError::io(path, e))
}

pub fn reports_to_json(reports: &[CalibrationReport]) -> String {
    to_json_string(reports)
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<CalibrationReport>> {
    read_json(path)
}

pub fn model_to_json(model: &CalibratorModel) -> String {
    to_json_string(model)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<CalibratorModel> {
    read_json(path)
}

/// CSV with columns `method,error,f1,ece,mce,nll,brier`; absent F1 is empty.
pub fn error_ece_table(reports: &[CalibrationReport]) -> String {
    let mut out = String::from("method,error,f1,ece,mce,nll,brier\n");
    for r in reports {
        let f1 = r.f1.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(
            out,
            "{},{:?},{},{:?},{:?},{:?},{:?}",
            r.method, r.error, f1, r.ece, r.mce, r.nll, r.brier
        )
        .unwrap();
    }
    out
}
