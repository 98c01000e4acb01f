//! Soft-voting ensembles and the five evaluation pipelines.
//!
//! | tag  | procedure                                                       |
//! |------|-----------------------------------------------------------------|
//! | I    | one member, softmax only                                        |
//! | I-C  | one member, temperature fit on its calibration logits           |
//! | E-M1 | soft vote of all members                                        |
//! | E-M2 | per-member temperature, then soft vote                          |
//! | E-M3 | soft vote, then one temperature on the log of the averaged probs |

use std::fmt;
use std::str::FromStr;

use crate::error::{CalibError, Result};
use crate::metrics::{evaluate, CalibrationReport, MethodTag, DEFAULT_BINS, PROBABILITY_FLOOR};
use crate::prediction::{to_probabilities, ConfidenceMode, PredictionSet, ProbabilitySet};
use crate::scaling::{apply_temperature, fit_temperature, TemperatureModel};

/// Default number of ensemble members.
pub const DEFAULT_ENSEMBLE_SIZE: usize = 10;

/// M prediction sets over the same samples with identical labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleInput {
    members: Vec<PredictionSet>,
}

impl EnsembleInput {
    pub fn new(members: Vec<PredictionSet>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| CalibError::validation("ensemble has no members"))?;
        for (m, member) in members.iter().enumerate().skip(1) {
            if member.len() != first.len() || member.class_count() != first.class_count() {
                return Err(CalibError::validation(format!(
                    "member {m} is {}x{}, member 0 is {}x{}",
                    member.len(),
                    member.class_count(),
                    first.len(),
                    first.class_count()
                )));
            }
            if member.labels() != first.labels() {
                return Err(CalibError::validation(format!(
                    "member {m} labels differ from member 0"
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[PredictionSet] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        self.members[0].labels()
    }

    fn member(&self, index: usize) -> Result<&PredictionSet> {
        self.members
            .get(index)
            .ok_or_else(|| CalibError::validation(format!("member index {index} outside [0, {})", self.members.len())))
    }
}

/// Pipeline methods; the member index selects the network for I and I-C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineMethod {
    Individual(usize),
    IndividualCalibrated(usize),
    EnsembleAverage,
    CalibrateThenAverage,
    AverageThenCalibrate,
}

impl fmt::Display for PipelineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineMethod::Individual(m) => write!(f, "I({m})"),
            PipelineMethod::IndividualCalibrated(m) => write!(f, "I-C({m})"),
            PipelineMethod::EnsembleAverage => f.write_str("E-M1"),
            PipelineMethod::CalibrateThenAverage => f.write_str("E-M2"),
            PipelineMethod::AverageThenCalibrate => f.write_str("E-M3"),
        }
    }
}

impl FromStr for PipelineMethod {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        let member = |prefix: &str| -> Option<usize> {
            s.strip_prefix(prefix)?
                .strip_prefix('(')?
                .strip_suffix(')')?
                .parse()
                .ok()
        };
        match s {
            "E-M1" => Ok(PipelineMethod::EnsembleAverage),
            "E-M2" => Ok(PipelineMethod::CalibrateThenAverage),
            "E-M3" => Ok(PipelineMethod::AverageThenCalibrate),
            _ => member("I-C")
                .map(PipelineMethod::IndividualCalibrated)
                .or_else(|| member("I").map(PipelineMethod::Individual))
                .ok_or_else(|| CalibError::validation(format!("unknown method {s:?}"))),
        }
    }
}

impl PipelineMethod {
    pub fn needs_calibration(&self) -> bool {
        matches!(
            self,
            PipelineMethod::IndividualCalibrated(_)
                | PipelineMethod::CalibrateThenAverage
                | PipelineMethod::AverageThenCalibrate
        )
    }
}

/// Evaluation settings shared by every pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub mode: ConfidenceMode,
    pub bins: usize,
    pub positive_class: Option<usize>,
    /// Use this temperature everywhere instead of fitting one.
    pub fixed_temperature: Option<f64>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            mode: ConfidenceMode::default(),
            bins: DEFAULT_BINS,
            positive_class: None,
            fixed_temperature: None,
        }
    }
}

/// Unweighted mean of member probabilities.
///
/// Computed as `p₀ + Σ (p_m − p₀) / M` so that identical members reproduce
/// member 0 bit for bit.
pub fn soft_vote(sets: &[ProbabilitySet]) -> Result<ProbabilitySet> {
    let first = sets
        .first()
        .ok_or_else(|| CalibError::validation("soft vote of zero members"))?;
    for (m, s) in sets.iter().enumerate().skip(1) {
        if s.len() != first.len() || s.class_count() != first.class_count() || s.labels() != first.labels() {
            return Err(CalibError::validation(format!(
                "member {m} is not aligned with member 0"
            )));
        }
    }
    let count = sets.len() as f64;
    let base = first.probabilities();
    let averaged = (0..base.len())
        .map(|j| {
            let spread: f64 = sets[1..].iter().map(|s| s.probabilities()[j] - base[j]).sum();
            base[j] + spread / count
        })
        .collect();
    Ok(ProbabilitySet::from_trusted(
        averaged,
        first.class_count(),
        first.labels().to_vec(),
    ))
}

/// Elementwise `ln(max(p, 1e-12))`; softmax of the result gives back `probs`
/// up to the floor.
pub fn logits_from_probabilities(probs: &ProbabilitySet) -> PredictionSet {
    let logits = probs
        .probabilities()
        .iter()
        .map(|p| p.clamp(PROBABILITY_FLOOR, 1.0).ln())
        .collect();
    PredictionSet::from_flat(logits, probs.class_count(), probs.labels().to_vec(), "ensemble")
        .expect("shape and finiteness carried over from a valid probability set")
}

fn calibrate(
    calibration: Option<&PredictionSet>,
    test: &PredictionSet,
    options: &PipelineOptions,
) -> Result<(ProbabilitySet, f64)> {
    let model = match (options.fixed_temperature, calibration) {
        (Some(t), _) => TemperatureModel::fixed(t)?,
        (None, Some(cal)) => fit_temperature(cal)?,
        (None, None) => unreachable!("calibration presence checked by run_pipeline"),
    };
    Ok((apply_temperature(test, model.temperature)?, model.temperature))
}

/// Runs one pipeline and evaluates it on the test ensemble.
pub fn run_pipeline(
    method: PipelineMethod,
    test: &EnsembleInput,
    calibration: Option<&EnsembleInput>,
    options: &PipelineOptions,
) -> Result<CalibrationReport> {
    let calibration = if method.needs_calibration() && options.fixed_temperature.is_none() {
        let cal =
            calibration.ok_or_else(|| CalibError::validation(format!("method {method} needs calibration members")))?;
        if cal.len() != test.len() {
            return Err(CalibError::validation(format!(
                "{} calibration members for {} test members",
                cal.len(),
                test.len()
            )));
        }
        Some(cal)
    } else {
        None
    };
    let cal_member = |m: usize| calibration.map(|c| &c.members()[m]);

    let (probs, temperatures) = match method {
        PipelineMethod::Individual(m) => (to_probabilities(test.member(m)?), None),
        PipelineMethod::IndividualCalibrated(m) => {
            let (p, t) = calibrate(cal_member(m), test.member(m)?, options)?;
            (p, Some(vec![t]))
        }
        PipelineMethod::EnsembleAverage => {
            let probs: Vec<_> = test.members().iter().map(to_probabilities).collect();
            (soft_vote(&probs)?, None)
        }
        PipelineMethod::CalibrateThenAverage => {
            let mut probs = Vec::with_capacity(test.len());
            let mut temps = Vec::with_capacity(test.len());
            for (m, member) in test.members().iter().enumerate() {
                let (p, t) = calibrate(cal_member(m), member, options)?;
                probs.push(p);
                temps.push(t);
            }
            (soft_vote(&probs)?, Some(temps))
        }
        PipelineMethod::AverageThenCalibrate => {
            let averaged_logits = |e: &EnsembleInput| -> Result<PredictionSet> {
                let probs: Vec<_> = e.members().iter().map(to_probabilities).collect();
                Ok(logits_from_probabilities(&soft_vote(&probs)?))
            };
            let cal_logits = calibration.map(averaged_logits).transpose()?;
            let (p, t) = calibrate(cal_logits.as_ref(), &averaged_logits(test)?, options)?;
            (p, Some(vec![t]))
        }
    };

    let mut report = evaluate(&probs, options.mode, options.bins, options.positive_class)?;
    report.method = MethodTag::Pipeline(method);
    report.temperatures = temperatures;
    Ok(report)
}

/// One report per method, in request order.
pub fn compare_pipelines(
    methods: &[PipelineMethod],
    test: &EnsembleInput,
    calibration: Option<&EnsembleInput>,
    options: &PipelineOptions,
) -> Result<Vec<CalibrationReport>> {
    methods
        .iter()
        .map(|&m| run_pipeline(m, test, calibration, options))
        .collect()
}

/// The five methods (I and I-C on member 0) followed by I for every member.
pub fn standard_methods(member_count: usize) -> Vec<PipelineMethod> {
    let mut methods = vec![
        PipelineMethod::Individual(0),
        PipelineMethod::IndividualCalibrated(0),
        PipelineMethod::EnsembleAverage,
        PipelineMethod::CalibrateThenAverage,
        PipelineMethod::AverageThenCalibrate,
    ];
    methods.extend((0..member_count).map(PipelineMethod::Individual));
    methods
}

/// Pearson correlation between error and ECE across reports.
pub fn error_ece_correlation(reports: &[CalibrationReport]) -> Result<f64> {
    let errors: Vec<f64> = reports.iter().map(|r| r.error).collect();
    let eces: Vec<f64> = reports.iter().map(|r| r.ece).collect();
    crate::metrics::pearson_correlation(&errors, &eces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::predicted_labels;
    use approx::assert_abs_diff_eq;

    fn probs(rows: &[Vec<f64>], labels: &[usize]) -> ProbabilitySet {
        ProbabilitySet::from_rows(rows, labels.to_vec()).unwrap()
    }

    fn member(rows: &[Vec<f64>], labels: &[usize]) -> PredictionSet {
        PredictionSet::from_rows(rows, labels.to_vec(), "m").unwrap()
    }

    fn two_members() -> (EnsembleInput, EnsembleInput) {
        let labels = [0, 1, 1, 0, 1, 0];
        let a = member(
            &[
                vec![2.0, 0.0],
                vec![0.5, 1.0],
                vec![-1.0, 2.0],
                vec![0.2, 0.1],
                vec![1.0, 0.9],
                vec![3.0, -1.0],
            ],
            &labels,
        );
        let b = member(
            &[
                vec![1.0, 0.0],
                vec![0.0, 2.0],
                vec![0.4, 0.3],
                vec![1.5, -0.5],
                vec![-0.2, 0.8],
                vec![0.1, 0.6],
            ],
            &labels,
        );
        let test = EnsembleInput::new(vec![a.clone(), b.clone()]).unwrap();
        let cal = EnsembleInput::new(vec![b, a]).unwrap();
        (test, cal)
    }

    #[test]
    fn soft_vote_examples() {
        let a = probs(&[vec![0.9, 0.1]], &[0]);
        let b = probs(&[vec![0.4, 0.6]], &[0]);
        let v = soft_vote(&[a.clone(), b]).unwrap();
        assert_abs_diff_eq!(v.row(0)[0], 0.65, epsilon = 1e-15);
        assert_abs_diff_eq!(v.row(0)[1], 0.35, epsilon = 1e-15);
        assert_eq!(predicted_labels(&v), vec![0]);

        assert_eq!(soft_vote(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(soft_vote(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn soft_vote_rejects_misaligned() {
        let a = probs(&[vec![0.9, 0.1]], &[0]);
        let b = probs(&[vec![0.9, 0.1]], &[1]);
        let c = probs(&[vec![0.9, 0.1], vec![0.5, 0.5]], &[0, 0]);
        assert!(soft_vote(&[a.clone(), b]).is_err());
        assert!(soft_vote(&[a, c]).is_err());
        assert!(soft_vote(&[]).is_err());
    }

    #[test]
    fn ensemble_input_checks_labels() {
        let a = member(&[vec![0.0, 1.0]], &[0]);
        let b = member(&[vec![0.0, 1.0]], &[1]);
        assert!(EnsembleInput::new(vec![a, b]).is_err());
        assert!(EnsembleInput::new(vec![]).is_err());
    }

    #[test]
    fn logits_round_trip() {
        let p = probs(&[vec![0.5, 0.5], vec![0.731, 0.269], vec![0.0, 1.0]], &[0, 0, 1]);
        let z = logits_from_probabilities(&p);
        assert_eq!(z.row(0), &[0.5f64.ln(), 0.5f64.ln()]);
        let back = to_probabilities(&z);
        for (i, row) in back.rows().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                let expected = p.row(i)[k].max(PROBABILITY_FLOOR);
                assert!((v - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn method_strings_round_trip() {
        for m in standard_methods(3) {
            assert_eq!(m.to_string().parse::<PipelineMethod>().unwrap(), m);
        }
        assert!("I(x)".parse::<PipelineMethod>().is_err());
    }

    #[test]
    fn calibrated_methods_need_calibration() {
        let (test, _) = two_members();
        let opts = PipelineOptions::default();
        for m in [
            PipelineMethod::IndividualCalibrated(0),
            PipelineMethod::CalibrateThenAverage,
            PipelineMethod::AverageThenCalibrate,
        ] {
            assert!(run_pipeline(m, &test, None, &opts).is_err());
        }
        assert!(run_pipeline(PipelineMethod::Individual(0), &test, None, &opts).is_ok());
        assert!(run_pipeline(PipelineMethod::Individual(2), &test, None, &opts).is_err());
    }

    #[test]
    fn calibration_member_count_must_match() {
        let (test, cal) = two_members();
        let short = EnsembleInput::new(vec![cal.members()[0].clone()]).unwrap();
        let r = run_pipeline(
            PipelineMethod::CalibrateThenAverage,
            &test,
            Some(&short),
            &PipelineOptions::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn pipeline_reports_carry_tags_and_temperatures() {
        let (test, cal) = two_members();
        let opts = PipelineOptions {
            positive_class: Some(1),
            ..Default::default()
        };
        let reports = compare_pipelines(&standard_methods(2), &test, Some(&cal), &opts).unwrap();
        assert_eq!(reports.len(), 7);
        assert_eq!(reports[0].method.to_string(), "I(0)");
        assert_eq!(reports[3].temperatures.as_ref().unwrap().len(), 2);
        assert_eq!(reports[4].temperatures.as_ref().unwrap().len(), 1);
        assert!(reports[2].temperatures.is_none());
        assert_eq!(reports[0].error, reports[1].error);
        assert_eq!(reports[0].f1, reports[1].f1);
        assert_eq!(reports[0], reports[5]);
    }

    #[test]
    fn forced_unit_temperature_reduces_to_plain_methods() {
        let (test, _) = two_members();
        let plain = PipelineOptions::default();
        let forced = PipelineOptions {
            fixed_temperature: Some(1.0),
            ..Default::default()
        };
        let m1 = run_pipeline(PipelineMethod::EnsembleAverage, &test, None, &plain).unwrap();
        let m2 = run_pipeline(PipelineMethod::CalibrateThenAverage, &test, None, &forced).unwrap();
        assert_eq!(
            (m1.error, m1.ece, m1.mce, m1.nll, m1.brier),
            (m2.error, m2.ece, m2.mce, m2.nll, m2.brier)
        );
        assert_eq!(m2.temperatures, Some(vec![1.0, 1.0]));
    }
}
