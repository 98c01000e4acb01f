//! Acceptance criteria. Runs with `harness = false` and prints one line per
//! criterion; exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use calibkit::ensemble::{run_pipeline, EnsembleInput, PipelineMethod, PipelineOptions};
use calibkit::io::{format_predictions, parse_predictions_str};
use calibkit::metrics::{
    build_reliability_diagram, classification_error, confusion_counts, ece, f1_score, mce, nll, CalibrationReport,
};
use calibkit::prediction::{predicted_labels, to_probabilities, ConfidenceMode, PredictionSet, ProbabilitySet};
use calibkit::scaling::{apply_temperature, fit_temperature};
use calibkit::synth::{
    generate, generate_ensemble, oracle_ece, oracle_fit_temperature_refined, random_prediction_set,
    random_probability_set, random_temperatures, SynthConfig, DEFAULT_MEMBER_NOISE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn binary(class1: &[f64], labels: &[usize]) -> ProbabilitySet {
    let rows: Vec<Vec<f64>> = class1.iter().map(|&p| vec![1.0 - p, p]).collect();
    ProbabilitySet::from_rows(&rows, labels.to_vec()).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn same_metrics(a: &CalibrationReport, b: &CalibrationReport) -> bool {
    a.error == b.error && a.f1 == b.f1 && a.ece == b.ece && a.mce == b.mce && a.nll == b.nll && a.brier == b.brier
}

/// 1. metrics ECE equals the double-loop oracle within 1e-12 on 1,000 sets.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let n = rng.random_range(1..=1000);
        let k = rng.random_range(2..=4);
        let probs = random_probability_set(seed, n, k).map_err(|e| e.to_string())?;
        let mode = if seed % 2 == 0 {
            ConfidenceMode::ChosenClass(rng.random_range(0..k))
        } else {
            ConfidenceMode::TopLabel
        };
        let d = build_reliability_diagram(&probs, mode, 10).map_err(|e| e.to_string())?;
        let diff = (ece(&d) - oracle_ece(&probs, mode, 10)).abs();
        worst = worst.max(diff);
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-12, || format!("max |ece - oracle| = {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("max diff {worst:e}, {elapsed:.2?}"))
}

/// 2. Four-sample fixture: ECE 0.2625, MCE 0.35.
fn hand_fixture() -> Outcome {
    let p = binary(&[0.95, 0.85, 0.85, 0.30], &[1, 0, 1, 0]);
    let mode = ConfidenceMode::ChosenClass(1);
    let oracle = oracle_ece(&p, mode, 10);
    ensure((oracle - 0.2625).abs() <= 1e-12, || format!("oracle ECE {oracle}"))?;
    let d = build_reliability_diagram(&p, mode, 10).map_err(|e| e.to_string())?;
    let (e, m) = (ece(&d), mce(&d));
    ensure((e - 0.2625).abs() <= 1e-12, || format!("ECE {e}"))?;
    ensure((m - 0.35).abs() <= 1e-12, || format!("MCE {m}"))?;
    Ok(format!("ECE {e}, MCE {m}"))
}

/// 3. 100 samples at 0.8 with 80 positives are perfectly calibrated.
fn perfect_calibration() -> Outcome {
    let labels: Vec<usize> = (0..100).map(|i| usize::from(i % 5 != 0)).collect();
    let p = binary(&[0.8; 100], &labels);
    let d = build_reliability_diagram(&p, ConfidenceMode::ChosenClass(1), 10).map_err(|e| e.to_string())?;
    let e = ece(&d);
    ensure(e == 0.0, || format!("ECE {e}"))?;
    Ok(format!("ECE {e}"))
}

/// 4. Temperature recovery and agreement with the log-grid oracle.
fn temperature_recovery() -> Outcome {
    let start = Instant::now();
    let grid_step = 1e-3;
    let mut summary = Vec::new();
    for t_true in [0.5, 1.0, 2.5] {
        let mut fitted = Vec::new();
        for seed in 0..20u64 {
            let set = generate(&SynthConfig::new(10_000, 1000 + seed, t_true)).map_err(|e| e.to_string())?;
            let model = fit_temperature(&set).map_err(|e| e.to_string())?;
            let grid = oracle_fit_temperature_refined(&set, 0.05, grid_step);
            let gap = (model.temperature.log10() - grid.log10()).abs();
            ensure(gap <= grid_step, || {
                format!(
                    "T_true {t_true} seed {seed}: fit {} vs grid {grid} ({gap:e} decades)",
                    model.temperature
                )
            })?;
            fitted.push(model.temperature);
        }
        let med = median(fitted);
        let rel = (med / t_true - 1.0).abs();
        ensure(rel <= 0.05, || format!("T_true {t_true}: median fit {med}"))?;
        summary.push(format!("{t_true}->{med:.4}"));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("medians {}, {elapsed:.2?}", summary.join(", ")))
}

/// 5. Temperature never changes the classification error.
fn argmax_invariance() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(55);
    for seed in 0..100u64 {
        let n = rng.random_range(1..=500);
        let k = rng.random_range(2..=5);
        let set = random_prediction_set(seed, n, k, 3.0).map_err(|e| e.to_string())?;
        let t = 10f64.powf(rng.random_range(-2.0..=2.0));
        let before = classification_error(set.labels(), &predicted_labels(&to_probabilities(&set)))
            .map_err(|e| e.to_string())?;
        let scaled = apply_temperature(&set, t).map_err(|e| e.to_string())?;
        let after = classification_error(set.labels(), &predicted_labels(&scaled)).map_err(|e| e.to_string())?;
        ensure(before.to_bits() == after.to_bits(), || {
            format!("seed {seed}, T {t}: error {before} -> {after}")
        })?;

        if n >= 2 {
            let test = EnsembleInput::new(vec![set.clone()]).map_err(|e| e.to_string())?;
            let opts = PipelineOptions {
                mode: ConfidenceMode::TopLabel,
                ..Default::default()
            };
            let i = run_pipeline(PipelineMethod::Individual(0), &test, None, &opts).map_err(|e| e.to_string())?;
            let ic = run_pipeline(PipelineMethod::IndividualCalibrated(0), &test, Some(&test), &opts)
                .map_err(|e| e.to_string())?;
            ensure(i.error.to_bits() == ic.error.to_bits(), || {
                format!("seed {seed}: I error {} vs I-C error {}", i.error, ic.error)
            })?;
        }
    }
    Ok("100 sets, errors bitwise equal".into())
}

/// 6. Pipeline degeneracies reduce exactly to simpler methods.
fn pipeline_degeneracies() -> Outcome {
    let member = generate(&SynthConfig::new(2000, 6, 2.0)).map_err(|e| e.to_string())?;
    let cal_member = generate(&SynthConfig::new(2000, 7, 2.0)).map_err(|e| e.to_string())?;
    let opts = PipelineOptions {
        positive_class: Some(1),
        ..Default::default()
    };
    let run = |m, test: &EnsembleInput, cal: Option<&EnsembleInput>, o: &PipelineOptions| {
        run_pipeline(m, test, cal, o).map_err(|e| e.to_string())
    };

    let identical = EnsembleInput::new(vec![member.clone(); 10]).map_err(|e| e.to_string())?;
    let i0 = run(PipelineMethod::Individual(0), &identical, None, &opts)?;
    let em1 = run(PipelineMethod::EnsembleAverage, &identical, None, &opts)?;
    ensure(same_metrics(&i0, &em1), || {
        format!("E-M1 of identical members {em1:?} vs I {i0:?}")
    })?;

    let members = generate_ensemble(
        &SynthConfig::new(2000, 8, 1.0),
        &[1.5, 2.0, 2.5, 3.0],
        DEFAULT_MEMBER_NOISE,
    )
    .map_err(|e| e.to_string())?;
    let test = EnsembleInput::new(members).map_err(|e| e.to_string())?;
    let forced = PipelineOptions {
        fixed_temperature: Some(1.0),
        ..opts.clone()
    };
    let em1 = run(PipelineMethod::EnsembleAverage, &test, None, &opts)?;
    let em2 = run(PipelineMethod::CalibrateThenAverage, &test, None, &forced)?;
    ensure(same_metrics(&em1, &em2), || {
        format!("E-M2(T=1) {em2:?} vs E-M1 {em1:?}")
    })?;

    let single = EnsembleInput::new(vec![member]).map_err(|e| e.to_string())?;
    let single_cal = EnsembleInput::new(vec![cal_member]).map_err(|e| e.to_string())?;
    let i0 = run(PipelineMethod::Individual(0), &single, None, &opts)?;
    let em1 = run(PipelineMethod::EnsembleAverage, &single, None, &opts)?;
    ensure(same_metrics(&i0, &em1), || format!("M=1 E-M1 {em1:?} vs I {i0:?}"))?;
    let ic = run(
        PipelineMethod::IndividualCalibrated(0),
        &single,
        Some(&single_cal),
        &opts,
    )?;
    let em2 = run(PipelineMethod::CalibrateThenAverage, &single, Some(&single_cal), &opts)?;
    ensure(same_metrics(&ic, &em2), || format!("M=1 E-M2 {em2:?} vs I-C {ic:?}"))?;
    Ok("identical members, forced T=1 and M=1 all exact".into())
}

/// 7. Fitted temperature never has higher calibration NLL than T = 1.
fn optimizer_soundness() -> Outcome {
    let mut sets: Vec<PredictionSet> = Vec::new();
    for (i, t_true) in [0.3, 0.5, 1.0, 1.7, 2.5, 4.0].into_iter().enumerate() {
        for seed in 0..5u64 {
            sets.push(
                generate(&SynthConfig::new(3000, 700 + 10 * i as u64 + seed, t_true)).map_err(|e| e.to_string())?,
            );
        }
    }
    for seed in 0..20u64 {
        sets.push(
            random_prediction_set(900 + seed, 400, 2 + seed as usize % 4, 0.5 + seed as f64)
                .map_err(|e| e.to_string())?,
        );
    }
    for (i, set) in sets.iter().enumerate() {
        let model = fit_temperature(set).map_err(|e| e.to_string())?;
        let fitted = nll(&apply_temperature(set, model.temperature).map_err(|e| e.to_string())?);
        let unit = nll(&to_probabilities(set));
        ensure(fitted <= unit, || {
            format!("set {i}: NLL {fitted} at T={} > {unit} at T=1", model.temperature)
        })?;
    }
    Ok(format!("{} calibration sets", sets.len()))
}

/// 8. F1 ignores true negatives; error does not.
fn f1_true_negative_invariance() -> Outcome {
    let mut truth = vec![1, 1, 1, 0, 0, 1, 0, 1];
    let mut pred = vec![1, 0, 1, 1, 0, 1, 1, 0];
    let f1_before = f1_score(&confusion_counts(&truth, &pred, 1, 2).map_err(|e| e.to_string())?);
    let err_before = classification_error(&truth, &pred).map_err(|e| e.to_string())?;
    truth.extend(std::iter::repeat_n(0, 1_000_000));
    pred.extend(std::iter::repeat_n(0, 1_000_000));
    let counts = confusion_counts(&truth, &pred, 1, 2).map_err(|e| e.to_string())?;
    let f1_after = f1_score(&counts);
    let err_after = classification_error(&truth, &pred).map_err(|e| e.to_string())?;
    ensure(f1_before == f1_after, || format!("F1 {f1_before} -> {f1_after}"))?;
    ensure(err_before != err_after, || format!("error unchanged at {err_before}"))?;
    Ok(format!("F1 {f1_after}, error {err_before} -> {err_after:e}"))
}

/// 9. Soft voting over overconfident members improves on the median member.
fn ensemble_improves_calibration() -> Outcome {
    let opts = PipelineOptions::default();
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..20u64 {
        let temps = random_temperatures(5000 + seed, 10, 1.5, 3.0);
        let members = generate_ensemble(&SynthConfig::new(5000, 5000 + seed, 1.0), &temps, DEFAULT_MEMBER_NOISE)
            .map_err(|e| e.to_string())?;
        let test = EnsembleInput::new(members).map_err(|e| e.to_string())?;
        let member_eces = (0..10)
            .map(|m| run_pipeline(PipelineMethod::Individual(m), &test, None, &opts).map(|r| r.ece))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let em1 = run_pipeline(PipelineMethod::EnsembleAverage, &test, None, &opts).map_err(|e| e.to_string())?;
        let med = median(member_eces);
        if em1.ece <= med {
            wins += 1;
        } else {
            detail.push(format!("seed {seed}: {:.4} > {med:.4}", em1.ece));
        }
    }
    ensure(wins >= 18, || format!("only {wins}/20 seeds; {}", detail.join("; ")))?;
    Ok(format!("{wins}/20 seeds"))
}

/// 10. File round trip and byte-identical CLI output.
fn round_trip_and_determinism() -> Outcome {
    let set = random_prediction_set(10, 500, 3, 4.0).map_err(|e| e.to_string())?;
    let back =
        parse_predictions_str(&format_predictions(&set), Path::new("mem.csv"), "mem").map_err(|e| e.to_string())?;
    let worst = set
        .logits()
        .iter()
        .zip(back.logits())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-9 && back.labels() == set.labels(), || {
        format!("round trip drift {worst:e}")
    })?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_calibkit");
    let d = dir.path();
    let status = Command::new(bin)
        .args(["synth", "--samples", "800", "--seed", "3", "--members", "4", "--out"])
        .arg(d.join("ens"))
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("synth exited with {status}"))?;

    let mut outputs = Vec::new();
    for run in 0..2 {
        let report = d.join(format!("report{run}.json"));
        let svg = d.join(format!("diagram{run}.svg"));
        let a = Command::new(bin)
            .arg("compare")
            .arg(d.join("ens/manifest.json"))
            .args(["--positive-class", "1", "--out"])
            .arg(&report)
            .status()
            .map_err(|e| e.to_string())?;
        let b = Command::new(bin)
            .arg("reliability")
            .arg(d.join("ens/member_0.csv"))
            .arg("--out")
            .arg(&svg)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(a.success() && b.success(), || "CLI invocation failed".into())?;
        outputs.push((std::fs::read(report).unwrap(), std::fs::read(svg).unwrap()));
    }
    ensure(outputs[0].0 == outputs[1].0, || {
        "report JSON differs between runs".into()
    })?;
    ensure(outputs[0].1 == outputs[1].1, || "SVG differs between runs".into())?;
    Ok(format!("round trip drift {worst:e}; JSON and SVG byte-identical"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC1 oracle equivalence", oracle_equivalence),
        ("AC2 hand fixture", hand_fixture),
        ("AC3 perfect calibration", perfect_calibration),
        ("AC4 temperature recovery", temperature_recovery),
        ("AC5 argmax invariance", argmax_invariance),
        ("AC6 pipeline degeneracies", pipeline_degeneracies),
        ("AC7 optimizer soundness", optimizer_soundness),
        ("AC8 F1 true-negative invariance", f1_true_negative_invariance),
        ("AC9 ensemble calibration", ensemble_improves_calibration),
        ("AC10 round trip and determinism", round_trip_and_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
