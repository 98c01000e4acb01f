//! Command-line interface.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 I/O failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ensemble::{
    compare_pipelines, logits_from_probabilities, run_pipeline, soft_vote, standard_methods, PipelineMethod,
    PipelineOptions,
};
use crate::error::{CalibError, Result};
use crate::io::predictions::{format_predictions, parse_predictions};
use crate::io::report::{
    error_ece_table, load_manifest, model_to_json, read_model, reports_to_json, to_json_string, write_text,
    EnsembleManifest,
};
use crate::io::svg::reliability_svg;
use crate::metrics::{build_reliability_diagram, evaluate, DEFAULT_BINS};
use crate::prediction::{to_probabilities, ConfidenceMode, DEFAULT_POSITIVE_CLASS};
use crate::scaling::{binary_scores, fit_platt, fit_temperature, scale_logits, CalibratorModel, TemperatureModel};
use crate::synth::{self, SynthConfig, PRNG_ID};

#[derive(Debug, Parser)]
#[command(name = "calibkit", version, about = "Probability calibration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a predictions file and print a calibration report.
    Metrics {
        predictions: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a temperature on calibration predictions.
    FitTemp {
        calibration: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Divide logits by a temperature and write the scaled predictions.
    ApplyTemp {
        predictions: PathBuf,
        /// Model JSON written by `fit-temp`.
        #[arg(long, conflicts_with = "temperature", required_unless_present = "temperature")]
        model: Option<PathBuf>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit Platt scaling on the logit difference of binary predictions.
    FitPlatt {
        calibration: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Soft-vote the members of a manifest into one predictions file.
    Ensemble {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one calibration pipeline and print its report.
    Pipeline {
        manifest: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Member used by `i` and `i-c`.
        #[arg(long, default_value_t = 0)]
        member: usize,
        /// Manifest whose members serve as calibration sets (overrides `calibration_members`).
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all five pipelines plus every individual member.
    Compare {
        manifest: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
        /// Report JSON array.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Error-vs-ECE CSV table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Render a reliability diagram as SVG.
    Reliability {
        predictions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = DEFAULT_POSITIVE_CLASS)]
        chosen_class: usize,
        #[arg(long)]
        top_label: bool,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a seeded synthetic binary predictions file (or ensemble).
    Synth {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overconfidence factor applied to calibrated logits.
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        /// Write an ensemble of this many members into the `--out` directory.
        #[arg(long)]
        members: Option<usize>,
        /// Member temperatures are drawn uniformly from [min, max).
        #[arg(long, default_value_t = 1.5)]
        member_temp_min: f64,
        #[arg(long, default_value_t = 3.0)]
        member_temp_max: f64,
        /// Std of independent per-member noise on the true log-odds.
        #[arg(long, default_value_t = synth::DEFAULT_MEMBER_NOISE)]
        member_noise: f64,
        /// Calibration samples per member (ensemble mode).
        #[arg(long)]
        calibration_samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Class whose probability is binned (ignored with --top-label).
    #[arg(long, default_value_t = DEFAULT_POSITIVE_CLASS)]
    chosen_class: usize,
    /// Bin the top-label confidence and use accuracy as frequency.
    #[arg(long)]
    top_label: bool,
    /// Report F1 with this class as positive.
    #[arg(long)]
    positive_class: Option<usize>,
}

impl EvalArgs {
    fn mode(&self) -> ConfidenceMode {
        mode(self.top_label, self.chosen_class)
    }

    fn options(&self) -> PipelineOptions {
        PipelineOptions {
            mode: self.mode(),
            bins: self.bins,
            positive_class: self.positive_class,
            fixed_temperature: None,
        }
    }
}

fn mode(top_label: bool, chosen_class: usize) -> ConfidenceMode {
    if top_label {
        ConfidenceMode::TopLabel
    } else {
        ConfidenceMode::ChosenClass(chosen_class)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    I,
    #[value(name = "i-c")]
    IC,
    #[value(name = "e-m1")]
    EM1,
    #[value(name = "e-m2")]
    EM2,
    #[value(name = "e-m3")]
    EM3,
}

impl MethodArg {
    fn method(self, member: usize) -> PipelineMethod {
        match self {
            MethodArg::I => PipelineMethod::Individual(member),
            MethodArg::IC => PipelineMethod::IndividualCalibrated(member),
            MethodArg::EM1 => PipelineMethod::EnsembleAverage,
            MethodArg::EM2 => PipelineMethod::CalibrateThenAverage,
            MethodArg::EM3 => PipelineMethod::AverageThenCalibrate,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    1
                }
            };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CalibError::io("<stdout>", e)),
    }
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Metrics { predictions, eval, out } => {
            let set = parse_predictions(&predictions)?;
            let report = evaluate(&to_probabilities(&set), eval.mode(), eval.bins, eval.positive_class)?;
            emit(out.as_deref(), &reports_to_json(&[report]), stdout)
        }
        Command::FitTemp { calibration, out } => {
            let model = fit_temperature(&parse_predictions(&calibration)?)?;
            emit(
                out.as_deref(),
                &model_to_json(&CalibratorModel::Temperature(model)),
                stdout,
            )
        }
        Command::ApplyTemp {
            predictions,
            model,
            temperature,
            out,
        } => {
            let t = match (model, temperature) {
                (Some(path), _) => match read_model(&path)? {
                    CalibratorModel::Temperature(m) => m.temperature,
                    CalibratorModel::Platt(_) => {
                        return Err(CalibError::validation(format!(
                            "{}: expected a temperature model, found a Platt model",
                            path.display()
                        )))
                    }
                },
                (None, Some(t)) => TemperatureModel::fixed(t)?.temperature,
                (None, None) => unreachable!("clap requires --model or --temperature"),
            };
            let scaled = scale_logits(&parse_predictions(&predictions)?, t)?;
            emit(out.as_deref(), &format_predictions(&scaled), stdout)
        }
        Command::FitPlatt { calibration, out } => {
            let set = parse_predictions(&calibration)?;
            let model = fit_platt(&binary_scores(&set)?, set.labels())?;
            emit(out.as_deref(), &model_to_json(&CalibratorModel::Platt(model)), stdout)
        }
        Command::Ensemble { manifest, out } => {
            let loaded = load_manifest(&manifest)?;
            let probs: Vec<_> = loaded.test.members().iter().map(to_probabilities).collect();
            let averaged = logits_from_probabilities(&soft_vote(&probs)?);
            emit(out.as_deref(), &format_predictions(&averaged), stdout)
        }
        Command::Pipeline {
            manifest,
            method,
            member,
            calibration,
            eval,
            out,
        } => {
            let method = method.method(member);
            let loaded = load_manifest(&manifest)?;
            let cal = match calibration {
                Some(path) => Some(load_manifest(path)?.test),
                None => loaded.calibration,
            };
            if method.needs_calibration() && cal.is_none() {
                return Err(CalibError::validation(format!(
                    "method {method} needs calibration data: add calibration_members to {} or pass --calibration",
                    manifest.display()
                )));
            }
            let report = run_pipeline(method, &loaded.test, cal.as_ref(), &eval.options())?;
            emit(out.as_deref(), &reports_to_json(&[report]), stdout)
        }
        Command::Compare {
            manifest,
            calibration,
            eval,
            out,
            table,
        } => {
            let loaded = load_manifest(&manifest)?;
            let cal = match calibration {
                Some(path) => Some(load_manifest(path)?.test),
                None => loaded.calibration,
            };
            if cal.is_none() {
                return Err(CalibError::validation(format!(
                    "compare needs calibration data: add calibration_members to {} or pass --calibration",
                    manifest.display()
                )));
            }
            let methods = standard_methods(loaded.test.len());
            let reports = compare_pipelines(&methods, &loaded.test, cal.as_ref(), &eval.options())?;
            if let Some(path) = table {
                write_text(path, &error_ece_table(&reports))?;
            }
            emit(out.as_deref(), &reports_to_json(&reports), stdout)
        }
        Command::Reliability {
            predictions,
            bins,
            chosen_class,
            top_label,
            title,
            out,
        } => {
            let set = parse_predictions(&predictions)?;
            let diagram = build_reliability_diagram(&to_probabilities(&set), mode(top_label, chosen_class), bins)?;
            let title = title.unwrap_or_else(|| set.name().to_string());
            emit(out.as_deref(), &reliability_svg(&diagram, &title), stdout)
        }
        Command::Synth {
            samples,
            seed,
            temperature,
            alpha,
            beta,
            members,
            member_temp_min,
            member_temp_max,
            member_noise,
            calibration_samples,
            out,
        } => {
            let config = SynthConfig {
                sample_count: samples,
                seed,
                true_temperature: temperature,
                alpha,
                beta,
            };
            match members {
                None => {
                    let set = synth::generate(&config)?;
                    emit(out.as_deref(), &format_predictions(&set), stdout)?;
                    if let Some(path) = out {
                        let sidecar = serde_json::json!({ "config": config, "prng": PRNG_ID });
                        write_text(path.with_extension("synth.json"), &to_json_string(&sidecar))?;
                    }
                    Ok(())
                }
                Some(count) => {
                    let dir =
                        out.ok_or_else(|| CalibError::validation("ensemble synthesis needs --out <directory>"))?;
                    let plan = EnsemblePlan {
                        config,
                        count,
                        temp_range: (member_temp_min, member_temp_max),
                        member_noise,
                        calibration_samples: calibration_samples.unwrap_or(samples),
                    };
                    write_synthetic_ensemble(&plan, &dir)
                }
            }
        }
    }
}

struct EnsemblePlan {
    config: SynthConfig,
    count: usize,
    temp_range: (f64, f64),
    member_noise: f64,
    calibration_samples: usize,
}

fn write_synthetic_ensemble(plan: &EnsemblePlan, dir: &Path) -> Result<()> {
    let (lo, hi) = plan.temp_range;
    if plan.count == 0 || !(lo > 0.0 && lo < hi) {
        return Err(CalibError::validation(format!(
            "need at least one member and 0 < member-temp-min < member-temp-max, got {} members in [{lo}, {hi})",
            plan.count
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| CalibError::io(dir, e))?;
    let temps = synth::random_temperatures(plan.config.seed, plan.count, lo, hi);
    let test = synth::generate_ensemble(&plan.config, &temps, plan.member_noise)?;
    let cal_config = SynthConfig {
        sample_count: plan.calibration_samples,
        seed: plan.config.seed.wrapping_add(1),
        ..plan.config.clone()
    };
    let cal = synth::generate_ensemble(&cal_config, &temps, plan.member_noise)?;

    let mut members = Vec::new();
    let mut calibration_members = Vec::new();
    for (m, (t, c)) in test.iter().zip(&cal).enumerate() {
        let name = PathBuf::from(format!("member_{m}.csv"));
        let cal_name = PathBuf::from(format!("calibration_{m}.csv"));
        write_text(dir.join(&name), &format_predictions(t))?;
        write_text(dir.join(&cal_name), &format_predictions(c))?;
        members.push(name);
        calibration_members.push(cal_name);
    }
    let manifest = EnsembleManifest {
        members,
        calibration_members: Some(calibration_members),
        name: format!("synth-seed{}", plan.config.seed),
    };
    write_text(dir.join("manifest.json"), &to_json_string(&manifest))?;
    let sidecar = serde_json::json!({
        "config": plan.config,
        "calibration_seed": cal_config.seed,
        "calibration_samples": cal_config.sample_count,
        "member_temperatures": temps,
        "member_noise": plan.member_noise,
        "prng": PRNG_ID,
    });
    write_text(dir.join("synth.json"), &to_json_string(&sidecar))
}
