//! Acceptance gate: ten criteria covering gradient correctness, framing,
//! mask algebra, generator identities, desk-scale training quality,
//! end-to-end detection, threshold calibration, evaluation semantics,
//! ablation plumbing, and bit-level reproducibility. One line per criterion
//! is printed; run with `-- --nocapture` to see them on success.

#[path = "../../core/tests/common/grad_cases.rs"]
#[allow(dead_code)]
mod grad_cases;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use sha2::{Digest, Sha256};
use strand_core::detection::{calibrate, PotParams, ScoreSeries};
use strand_core::evaluation::{compute_metrics, point_adjust};
use strand_core::model::{
    apply_masks, decode, decompose, encode, frame, load_checkpoint, overlap_add, separate,
    ModelConfig, ModelParams,
};
use strand_core::synthgen::{
    derive_seed, gen_components, gen_dataset, gen_stochastic_seasonal,
    gen_stochastic_trend_with_innovations, load_corpus, standardize, CycleJitter, SynthConfig,
};

const PRETRAIN_BUDGET_SECS: f64 = 600.0;
const DETECT_BUDGET_SECS: f64 = 900.0;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: usize, name: &'static str, pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { id, name, pass, detail: detail.into() }
}

#[test]
fn all_ten_criteria() {
    let mut outcomes = Vec::new();
    outcomes.push(criterion_1_gradients());
    outcomes.push(criterion_2_framing());
    outcomes.push(criterion_3_masks());
    outcomes.push(criterion_4_generator());
    let (o5, o6, ctx) = criteria_5_6_desk_scale();
    outcomes.push(o5);
    outcomes.push(o6);
    outcomes.push(criterion_7_pot());
    outcomes.push(criterion_8_point_adjust());
    outcomes.push(criterion_9_ablations(ctx.as_ref()));
    outcomes.push(criterion_10_reproducibility(ctx.as_ref()));

    let mut all_pass = true;
    for o in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:2} [{}]: {} - {}", o.id, o.name, tag, o.detail);
        all_pass &= o.pass;
    }
    assert!(all_pass, "acceptance criteria failed; see the lines above");
}

// --- criterion 1: gradients ------------------------------------------------

fn criterion_1_gradients() -> Outcome {
    let report = grad_cases::run_suite();
    let failures = report.failures();
    let pass = failures.is_empty() && report.elapsed.as_secs_f64() < 30.0;
    let detail = if failures.is_empty() {
        format!(
            "{} cases, worst relative error {:.3e}, {:.2}s",
            report.cases.len(),
            report.worst(),
            report.elapsed.as_secs_f64()
        )
    } else {
        format!("failing cases: {failures:?}")
    };
    outcome(1, "gradient suite", pass, detail)
}

// --- criterion 2: framing round trip ---------------------------------------

fn criterion_2_framing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0f2a);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let len = rng.gen_range(10..=1000);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let frames = match frame(&x, 2, 1) {
            Ok(f) => f,
            Err(e) => return outcome(2, "framing round trip", false, format!("frame: {e}")),
        };
        let back = match overlap_add(&frames, 1, len) {
            Ok(b) => b,
            Err(e) => return outcome(2, "framing round trip", false, format!("overlap_add: {e}")),
        };
        for (a, b) in x.iter().zip(&back) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        2,
        "framing round trip",
        worst <= 1e-12,
        format!("100 series, worst deviation {worst:.3e}"),
    )
}

// --- criterion 3: mask algebra ----------------------------------------------

fn criterion_3_masks() -> Outcome {
    let config = ModelConfig::default();
    let p = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(0x3a5c);
    let mut worst_simplex = 0.0f64;
    let mut worst_partition = 0.0f64;
    let mut worst_decode = 0.0f64;
    for draw in 0..50 {
        let params = match ModelParams::<f64>::init(&config, &mut rng) {
            Ok(p) => p,
            Err(e) => return outcome(3, "mask algebra", false, format!("init: {e}")),
        };
        let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut step = || -> Result<(), String> {
            let frames = frame(&x, config.frame_length, config.stride).map_err(|e| e.to_string())?;
            let e = encode(&frames, &params.u).map_err(|e| e.to_string())?;
            let masks = separate(&e, &params, &config).map_err(|e| e.to_string())?;
            for m in [&masks.trend, &masks.seasonal, &masks.remainder] {
                if let Some(bad) = m.data().iter().find(|&&v| v < 0.0) {
                    return Err(format!("negative mask entry {bad} in draw {draw}"));
                }
            }
            for i in 0..e.data().len() {
                let s = masks.trend.data()[i] + masks.seasonal.data()[i] + masks.remainder.data()[i];
                worst_simplex = worst_simplex.max((s - 1.0).abs());
            }
            let (et, es, er) = apply_masks(&e, &masks).map_err(|e| e.to_string())?;
            for i in 0..e.data().len() {
                let s = et.data()[i] + es.data()[i] + er.data()[i];
                worst_partition = worst_partition.max((s - e.data()[i]).abs());
            }
            let d = decompose(&x, &params, &config).map_err(|e| e.to_string())?;
            let unmasked = decode(&e, &params.v, &config, p).map_err(|e| e.to_string())?;
            for t in 0..p {
                let s = d.trend[t] + d.seasonal[t] + d.remainder[t];
                worst_decode = worst_decode.max((s - unmasked[t]).abs());
            }
            Ok(())
        };
        if let Err(msg) = step() {
            return outcome(3, "mask algebra", false, msg);
        }
    }
    let pass = worst_simplex <= 1e-6 && worst_partition <= 1e-9 && worst_decode <= 1e-9;
    outcome(
        3,
        "mask algebra",
        pass,
        format!(
            "50 draws: simplex {worst_simplex:.2e}, partition {worst_partition:.2e}, \
             component sum vs unmasked decode {worst_decode:.2e}"
        ),
    )
}

// --- criterion 4: generator identities --------------------------------------

fn criterion_4_generator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4ee4);

    // Second difference of the stochastic trend returns the innovations.
    for draw in 0..200 {
        let len = rng.gen_range(2..600);
        let sigma = rng.gen_range(0.1..3.0);
        let (tau, inn) = match gen_stochastic_trend_with_innovations::<f64, _>(len, sigma, &mut rng)
        {
            Ok(pair) => pair,
            Err(e) => return outcome(4, "generator identities", false, format!("trend: {e}")),
        };
        let mut ok = tau[0] == inn[0];
        if len > 1 {
            ok &= tau[1] - 2.0 * tau[0] == inn[1];
        }
        for t in 2..len {
            ok &= tau[t] - 2.0 * tau[t - 1] + tau[t - 2] == inn[t];
        }
        if !ok {
            return outcome(
                4,
                "generator identities",
                false,
                format!("second-difference identity broke on draw {draw} (len {len})"),
            );
        }
    }

    // Tiling periodicity with jitter off.
    for draw in 0..200 {
        let period = rng.gen_range(2..64);
        let len = rng.gen_range(2 * period + 2..2 * period + 200);
        let phase = rng.gen_range(0..period);
        let s = match gen_stochastic_seasonal::<f64, _>(period, phase, len, CycleJitter::off(), &mut rng) {
            Ok(s) => s,
            Err(e) => return outcome(4, "generator identities", false, format!("seasonal: {e}")),
        };
        if (0..len - period).any(|t| s[t + period] != s[t]) {
            return outcome(
                4,
                "generator identities",
                false,
                format!("tiling periodicity broke on draw {draw} (period {period})"),
            );
        }
    }

    // Standardize moments.
    let mut worst_moment = 0.0f64;
    for _ in 0..200 {
        let len = rng.gen_range(2..500);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let z = match standardize(&x) {
            Ok(z) => z,
            Err(_) => continue,
        };
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        worst_moment = worst_moment.max(mean.abs()).max((var - 1.0).abs());
    }
    if worst_moment > 1e-9 {
        return outcome(
            4,
            "generator identities",
            false,
            format!("standardize moments off by {worst_moment:.2e}"),
        );
    }

    // Anomaly masks over a 200-series corpus: true exactly where stored
    // components differ from a clean regeneration.
    let dir = std::env::temp_dir().join(format!("strand_accept_corpus_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("temp dir");
    let config = SynthConfig {
        series_count: 200,
        length: 256,
        master_seed: 0x4c0 + 5,
        period_range: (8, 24),
        phase_range: (0, 23),
        anomaly_ratio: 0.5,
        ..SynthConfig::default()
    };
    let corpus_result = (|| -> Result<(usize, usize), String> {
        gen_dataset::<f64>(&config, &dir).map_err(|e| e.to_string())?;
        let (manifest, corpus) = load_corpus::<f64>(&dir).map_err(|e| e.to_string())?;
        let mut anomalous = 0;
        for (entry, series) in manifest.series.iter().zip(&corpus) {
            let (clean, _) = gen_components::<f64>(&manifest.config, entry.seed, false)
                .map_err(|e| e.to_string())?;
            anomalous += usize::from(series.anomalous);
            for t in 0..manifest.config.length {
                let modified = series.set.trend[t] != clean.trend[t]
                    || series.set.seasonal[t] != clean.seasonal[t]
                    || series.set.remainder[t] != clean.remainder[t];
                if series.set.anomaly_mask[t] != modified {
                    return Err(format!(
                        "series {} t={t}: mask {} but modified {}",
                        entry.index, series.set.anomaly_mask[t], modified
                    ));
                }
            }
            // Clean components carry standardized moments (flat ones are
            // exact zeros).
            for comp in [&clean.trend, &clean.seasonal, &clean.remainder] {
                if comp.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let n = comp.len() as f64;
                let mean = comp.iter().sum::<f64>() / n;
                let var = comp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                if mean.abs() > 1e-9 || (var - 1.0).abs() > 1e-9 {
                    return Err(format!(
                        "series {}: component moments mean {mean:.2e}, var {var:.6}",
                        entry.index
                    ));
                }
            }
        }
        Ok((corpus.len(), anomalous))
    })();
    let _ = std::fs::remove_dir_all(&dir);
    match corpus_result {
        Ok((n, anomalous)) => outcome(
            4,
            "generator identities",
            true,
            format!(
                "200 trend draws, 200 tilings, 200 standardizations, \
                 {n}-series corpus ({anomalous} anomalous) all exact"
            ),
        ),
        Err(msg) => outcome(4, "generator identities", false, msg),
    }
}

// --- criteria 5 and 6: desk-scale pipeline ----------------------------------

/// Master seed for the desk-scale experiment. The derived evaluation entity
/// carries all five anomaly kinds at close to the 5% point target.
const DESK_SEED: u64 = 7;
const DESK_PRETRAIN_EPOCHS: usize = 50;
const DESK_FINETUNE_EPOCHS: usize = 30;
const DESK_BLOCK: usize = 128;

struct DeskContext {
    root: PathBuf,
    main_config: PathBuf,
    main_dir: PathBuf,
    f1_none: f64,
}

fn desk_config_body(out_dir: &Path) -> String {
    format!(
        r#"seed = "{DESK_SEED}"

[paths]
out_dir = "{}"

[entity]
train_len = 2048
test_len = 2048
target_ratio = 0.05

[synth]
series_count = 64
length = 512
period_range = [8, 24]
phase_range = [0, 23]

[pretrain]
epochs = {DESK_PRETRAIN_EPOCHS}

[finetune]
epochs = {DESK_FINETUNE_EPOCHS}
"#,
        out_dir.display()
    )
}

/// Synth config mirroring the [synth] section of `desk_config_body`, used to
/// draw held-out series for the decomposition quality check.
fn desk_synth_config(master_seed: u64) -> SynthConfig {
    SynthConfig {
        series_count: 64,
        length: 512,
        master_seed,
        period_range: (8, 24),
        phase_range: (0, 23),
        ..SynthConfig::default()
    }
}

fn strand(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_strand"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`strand {}` exited {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

fn phase_losses(log_path: &Path, phase: &str) -> Result<Vec<f64>, String> {
    let text = std::fs::read_to_string(log_path).map_err(|e| format!("loss log: {e}"))?;
    let mut losses = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() == 3 && fields[1] == phase {
            losses.push(fields[2].parse::<f64>().map_err(|e| format!("loss log: {e}"))?);
        }
    }
    Ok(losses)
}

fn pooled_adjusted_f1(metrics_path: &Path) -> Result<f64, String> {
    let text = std::fs::read_to_string(metrics_path).map_err(|e| format!("metrics: {e}"))?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("pooled,true,") {
            let fields: Vec<&str> = rest.split(',').collect();
            return fields[2].parse::<f64>().map_err(|e| format!("metrics: {e}"));
        }
    }
    Err("metrics file has no adjusted pooled row".into())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

fn criteria_5_6_desk_scale() -> (Outcome, Outcome, Option<DeskContext>) {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).expect("target tmpdir");
    let main_dir = root.join("main");
    let main_config = root.join("main.toml");
    std::fs::write(&main_config, desk_config_body(&main_dir)).expect("config write");
    let cfg = main_config.to_str().expect("utf-8 path");

    let fail = |id, name, msg: String| outcome(id, name, false, msg);

    if let Err(msg) = strand(&["synth", "--config", cfg]) {
        return (
            fail(5, "desk-scale pretraining", msg),
            fail(6, "end-to-end detection", "prerequisite synth failed".into()),
            None,
        );
    }

    // Criterion 5: pretraining quality inside the time budget.
    let started = Instant::now();
    if let Err(msg) = strand(&["train", "--config", cfg, "--phase", "pretrain"]) {
        return (
            fail(5, "desk-scale pretraining", msg),
            fail(6, "end-to-end detection", "prerequisite pretraining failed".into()),
            None,
        );
    }
    let pretrain_secs = started.elapsed().as_secs_f64();

    let o5 = (|| -> Result<String, String> {
        let losses = phase_losses(&main_dir.join("loss_log.csv"), "pretrain")?;
        if losses.is_empty() {
            return Err("no pretrain epochs logged".into());
        }
        let (first, last) = (losses[0], *losses.last().expect("nonempty"));
        let ratio = last / first;

        let ckpt = load_checkpoint::<f64>(&main_dir.join("model.ckpt")).map_err(|e| e.to_string())?;
        let heldout_cfg = desk_synth_config(0xde5c);
        let mut trend_r = Vec::new();
        let mut seasonal_r = Vec::new();
        for i in 0..16 {
            let (set, _) = gen_components::<f64>(&heldout_cfg, derive_seed(0xde5c, i), false)
                .map_err(|e| e.to_string())?;
            let x: Vec<f64> = (0..set.trend.len())
                .map(|t| set.trend[t] + set.seasonal[t] + set.remainder[t])
                .collect();
            let d = decompose(&x, &ckpt.params, &ckpt.config).map_err(|e| e.to_string())?;
            trend_r.push(pearson(&d.trend, &set.trend));
            seasonal_r.push(pearson(&d.seasonal, &set.seasonal));
        }
        let (mt, ms) = (median(trend_r), median(seasonal_r));

        let pass = pretrain_secs < PRETRAIN_BUDGET_SECS && ratio <= 0.2 && mt >= 0.8 && ms >= 0.8;
        let detail = format!(
            "{DESK_PRETRAIN_EPOCHS} epochs in {pretrain_secs:.0}s; loss {first:.2} -> {last:.2} \
             (ratio {ratio:.3}); held-out median Pearson trend {mt:.3}, seasonal {ms:.3}"
        );
        if pass {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    let o5 = match o5 {
        Ok(detail) => outcome(5, "desk-scale pretraining", true, detail),
        Err(detail) => outcome(5, "desk-scale pretraining", false, detail),
    };

    // Criterion 6: fine-tune, detect with labels, and check the adjusted F1.
    let started = Instant::now();
    let detect = strand(&["train", "--config", cfg, "--phase", "finetune"])
        .and_then(|_| strand(&["detect", "--config", cfg, "--labels"]));
    let detect_secs = started.elapsed().as_secs_f64();
    let (o6, f1) = match detect {
        Err(msg) => (fail(6, "end-to-end detection", msg), f64::NAN),
        Ok(_) => {
            let checked = (|| -> Result<(String, f64), String> {
                let events =
                    std::fs::read_to_string(main_dir.join("corpus/entity_events.csv"))
                        .map_err(|e| format!("events: {e}"))?;
                let mut kinds: Vec<&str> = events
                    .lines()
                    .skip(1)
                    .filter_map(|l| l.split(',').next())
                    .collect();
                kinds.sort_unstable();
                kinds.dedup();
                let test = strand_core::data::TimeSeries::<f64>::read_csv(
                    &main_dir.join("corpus/entity_test.csv"),
                )
                .map_err(|e| e.to_string())?;
                let labels = test.labels().ok_or("test split has no labels")?;
                let frac =
                    labels.iter().filter(|&&b| b).count() as f64 / labels.len() as f64;
                let f1 = pooled_adjusted_f1(&main_dir.join("metrics.csv"))?;

                let pass = detect_secs < DETECT_BUDGET_SECS
                    && kinds.len() == 5
                    && (0.03..=0.07).contains(&frac)
                    && f1 >= 0.8;
                let detail = format!(
                    "fine-tune + detect in {detect_secs:.0}s; {} kinds, {:.1}% anomalous, \
                     point-adjusted F1 {f1:.3}",
                    kinds.len(),
                    100.0 * frac
                );
                if pass {
                    Ok((detail, f1))
                } else {
                    Err(detail)
                }
            })();
            match checked {
                Ok((detail, f1)) => (outcome(6, "end-to-end detection", true, detail), f1),
                Err(detail) => (outcome(6, "end-to-end detection", false, detail), f64::NAN),
            }
        }
    };

    let ctx = DeskContext { root, main_config, main_dir, f1_none: f1 };
    (o5, o6, Some(ctx))
}

// --- criterion 7: POT calibration -------------------------------------------

fn criterion_7_pot() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e7);
    let exp = rand_distr::Exp::new(1.0).expect("valid rate");
    let samples: Vec<f64> = (0..100_000).map(|_| exp.sample(&mut rng)).collect();
    let scores = match ScoreSeries::new(samples) {
        Ok(s) => s,
        Err(e) => return outcome(7, "pot calibration", false, e.to_string()),
    };
    let params = PotParams { risk: 1e-4, ..PotParams::default() };
    let cal = match calibrate(&scores, &params) {
        Ok(c) => c,
        Err(e) => return outcome(7, "pot calibration", false, e.to_string()),
    };
    let analytic = 1e4f64.ln();
    let rel = (cal.threshold - analytic).abs() / analytic;
    let pass = rel <= 0.15 && cal.fit.gamma.abs() <= 0.05;
    outcome(
        7,
        "pot calibration",
        pass,
        format!(
            "threshold {:.3} vs ln(1e4)={analytic:.3} ({:+.1}%), gamma {:+.4}",
            cal.threshold,
            100.0 * (cal.threshold - analytic) / analytic,
            cal.fit.gamma
        ),
    )
}

// --- criterion 8: point-adjust oracle ----------------------------------------

/// Deliberately naive per-point scan: inside a true segment, look the whole
/// segment over for any predicted hit; outside, pass the prediction through.
fn oracle_adjust(pred: &[bool], truth: &[bool]) -> Vec<bool> {
    (0..truth.len())
        .map(|t| {
            if !truth[t] {
                return pred[t];
            }
            let mut lo = t;
            while lo > 0 && truth[lo - 1] {
                lo -= 1;
            }
            let mut hi = t;
            while hi + 1 < truth.len() && truth[hi + 1] {
                hi += 1;
            }
            (lo..=hi).any(|u| pred[u])
        })
        .collect()
}

fn criterion_8_point_adjust() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x8ad);
    for case in 0..1000 {
        let len = rng.gen_range(1..=200);
        let p_pred = rng.gen_range(0.05..0.5);
        let p_truth = rng.gen_range(0.05..0.5);
        let pred: Vec<bool> = (0..len).map(|_| rng.gen_bool(p_pred)).collect();
        let truth: Vec<bool> = (0..len).map(|_| rng.gen_bool(p_truth)).collect();
        let got = match point_adjust(&pred, &truth) {
            Ok(g) => g,
            Err(e) => return outcome(8, "point-adjust oracle", false, e.to_string()),
        };
        if got != oracle_adjust(&pred, &truth) {
            return outcome(
                8,
                "point-adjust oracle",
                false,
                format!("mismatch vs brute force on case {case} (len {len})"),
            );
        }
    }

    // Fixture 1: one true point hit, one missed; raw P=1, R=0.5, F1=2/3.
    let fixtures = (|| -> Result<(), String> {
        let truth = [false, true, false, true];
        let pred = [false, true, false, false];
        let m = compute_metrics(&pred, &truth, false).map_err(|e| e.to_string())?;
        if m.precision != 1.0 || m.recall != 0.5 || (m.f1 - 2.0 / 3.0).abs() > 1e-15 {
            return Err(format!("fixture 1: {m}"));
        }
        if (m.true_positives, m.false_positives, m.false_negatives) != (1, 0, 1) {
            return Err(format!("fixture 1 counts: {m}"));
        }

        // Fixture 2: one in-segment hit expands to the whole segment.
        let truth = [false, true, true, true, false];
        let pred = [false, false, true, false, false];
        let m = compute_metrics(&pred, &truth, true).map_err(|e| e.to_string())?;
        if m.f1 != 1.0 || m.true_positives != 3 || m.false_positives != 0 {
            return Err(format!("fixture 2: {m}"));
        }

        // Fixture 3: prediction entirely outside truth survives adjustment.
        let truth = [true, true, false, false];
        let pred = [false, false, true, false];
        let m = compute_metrics(&pred, &truth, true).map_err(|e| e.to_string())?;
        if m.precision != 0.0
            || m.recall != 0.0
            || m.f1 != 0.0
            || (m.true_positives, m.false_positives, m.false_negatives) != (0, 1, 2)
        {
            return Err(format!("fixture 3: {m}"));
        }
        Ok(())
    })();
    match fixtures {
        Ok(()) => outcome(
            8,
            "point-adjust oracle",
            true,
            "1000 random pairs match brute force; 3 fixtures match hand counts".to_string(),
        ),
        Err(msg) => outcome(8, "point-adjust oracle", false, msg),
    }
}

// --- criterion 9: ablation plumbing ------------------------------------------

fn criterion_9_ablations(ctx: Option<&DeskContext>) -> Outcome {
    let Some(ctx) = ctx else {
        return outcome(9, "ablation plumbing", false, "desk-scale pipeline unavailable");
    };
    let cfg = ctx.main_config.to_str().expect("utf-8 path");
    let corpus = ctx.main_dir.join("corpus");
    let corpus = corpus.to_str().expect("utf-8 path");

    let mut f1_no_augment = f64::NAN;
    for ablation in ["no_sep", "no_decomp", "no_augment"] {
        let dir = ctx.root.join(ablation);
        let dir_s = dir.to_str().expect("utf-8 path");
        let out_override = format!("paths.out_dir={dir_s}");
        let corpus_override = format!("paths.corpus_dir={corpus}");
        let mut train_args = vec![
            "train", "--config", cfg, "--ablation", ablation,
            "--set", &out_override, "--set", &corpus_override,
        ];
        // Ablated pretraining runs exist to exercise the plumbing; a short
        // schedule keeps the suite inside its time budget.
        let epochs_override = "pretrain.epochs=6".to_string();
        if ablation != "no_augment" {
            train_args.extend(["--set", &epochs_override]);
        }
        if let Err(msg) = strand(&train_args) {
            return outcome(9, "ablation plumbing", false, format!("{ablation}: {msg}"));
        }
        let detect_args = vec![
            "detect", "--config", cfg, "--labels",
            "--set", &out_override, "--set", &corpus_override,
        ];
        if let Err(msg) = strand(&detect_args) {
            return outcome(9, "ablation plumbing", false, format!("{ablation}: {msg}"));
        }

        let manifest_path = dir.join("train_manifest.toml");
        let manifest: toml::Value = match std::fs::read_to_string(&manifest_path)
            .map_err(|e| e.to_string())
            .and_then(|t| toml::from_str(&t).map_err(|e| e.to_string()))
        {
            Ok(v) => v,
            Err(e) => {
                return outcome(9, "ablation plumbing", false, format!("{ablation} manifest: {e}"))
            }
        };
        if manifest["args"]["ablation"].as_str() != Some(ablation) {
            return outcome(
                9,
                "ablation plumbing",
                false,
                format!("{ablation} manifest records ablation {:?}", manifest["args"]["ablation"]),
            );
        }
        if ablation == "no_augment" {
            f1_no_augment = match pooled_adjusted_f1(&dir.join("metrics.csv")) {
                Ok(f) => f,
                Err(e) => return outcome(9, "ablation plumbing", false, e),
            };
        }
    }

    let mut detail = format!(
        "all four modes ran end-to-end; F1 none {:.3} vs no_augment {f1_no_augment:.3}",
        ctx.f1_none
    );
    if !(ctx.f1_none >= f1_no_augment) {
        detail.push_str(" (WARNING: ordering violated, log-only check)");
    }
    outcome(9, "ablation plumbing", true, detail)
}

// --- criterion 10: reproducibility -------------------------------------------

fn sha256_file(path: &Path) -> Result<String, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

fn criterion_10_reproducibility(ctx: Option<&DeskContext>) -> Outcome {
    let Some(ctx) = ctx else {
        return outcome(10, "reproducibility", false, "desk-scale pipeline unavailable");
    };
    let rerun_dir = ctx.root.join("rerun");
    let rerun_config = ctx.root.join("rerun.toml");
    std::fs::write(&rerun_config, desk_config_body(&rerun_dir)).expect("config write");
    let cfg = rerun_config.to_str().expect("utf-8 path");

    // Mirror the criterion 5-6 command sequence exactly.
    for args in [
        vec!["synth", "--config", cfg],
        vec!["train", "--config", cfg, "--phase", "pretrain"],
        vec!["train", "--config", cfg, "--phase", "finetune"],
        vec!["detect", "--config", cfg, "--labels"],
    ] {
        if let Err(msg) = strand(&args) {
            return outcome(10, "reproducibility", false, msg);
        }
    }

    for file in ["model.ckpt", "metrics.csv", "scores.csv", "loss_log.csv"] {
        let a = match sha256_file(&ctx.main_dir.join(file)) {
            Ok(h) => h,
            Err(e) => return outcome(10, "reproducibility", false, e),
        };
        let b = match sha256_file(&rerun_dir.join(file)) {
            Ok(h) => h,
            Err(e) => return outcome(10, "reproducibility", false, e),
        };
        if a != b {
            return outcome(
                10,
                "reproducibility",
                false,
                format!("{file} differs between the two runs"),
            );
        }
    }
    outcome(
        10,
        "reproducibility",
        true,
        "checkpoint, metrics, scores, and loss log bit-identical across reruns".to_string(),
    )
}
