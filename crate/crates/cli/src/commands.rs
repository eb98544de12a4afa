//! The four pipeline stages behind the subcommands. Each writes its outputs
//! plus a `<command>_manifest.toml` into the run directory, so a finished
//! directory records exactly what produced it.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use strand_core::data::TimeSeries;
use strand_core::detection::{calibrate, label_anomalies, score, write_scores_csv};
use strand_core::evaluation::{compute_metrics, pooled_metrics, segments, MetricsReport};
use strand_core::model::{
    decompose, load_checkpoint, save_checkpoint, Checkpoint, Decomposition, ModelConfig,
    ModelParams,
};
use strand_core::synthgen::{gen_dataset, gen_eval_entity, load_corpus, AnomalyEvent};
use strand_core::training::{finetune, normalize, pretrain, segment, Ablation, LossRecord, NormStats};
use strand_core::Error;

use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::render;

#[derive(Copy, Clone, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PhaseArg {
    Pretrain,
    Finetune,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationArg {
    None,
    #[value(name = "no_sep")]
    NoSep,
    #[value(name = "no_decomp")]
    NoDecomp,
    #[value(name = "no_augment")]
    NoAugment,
}

impl From<AblationArg> for Ablation {
    fn from(arg: AblationArg) -> Ablation {
        match arg {
            AblationArg::None => Ablation::None,
            AblationArg::NoSep => Ablation::NoSep,
            AblationArg::NoDecomp => Ablation::NoDecomp,
            AblationArg::NoAugment => Ablation::NoAugment,
        }
    }
}

/// Generate the pretraining corpus plus a labeled evaluation entity
/// (anomaly-free train split, labeled test split, event list).
pub fn cmd_synth(cfg: &RunConfig) -> Result<(), Error> {
    let corpus_dir = cfg.corpus_dir();
    std::fs::create_dir_all(cfg.out_dir())?;
    std::fs::create_dir_all(&corpus_dir)?;
    let mut manifest = RunManifest::new("synth", cfg);

    let t = Instant::now();
    let corpus_manifest = gen_dataset::<f64>(&cfg.synth, &corpus_dir)?;
    manifest.time("corpus", t.elapsed().as_secs_f64());
    log::info!(
        "wrote {} corpus series to {}",
        corpus_manifest.series.len(),
        corpus_dir.display()
    );

    let t = Instant::now();
    let (train, test, events) = gen_eval_entity::<f64>(
        &cfg.synth,
        cfg.entity_seed(),
        cfg.entity.train_len,
        cfg.entity.test_len,
        cfg.entity.target_ratio,
    )?;
    train.write_csv(&cfg.train_data())?;
    test.write_csv(&cfg.test_data())?;
    write_events_csv(&cfg.events_path(), &events)?;
    manifest.time("entity", t.elapsed().as_secs_f64());
    let anomalous = test.labels().map_or(0, |l| l.iter().filter(|&&b| b).count());
    log::info!(
        "entity: {} train points, {} test points ({} anomalous across {} events)",
        train.len(),
        test.len(),
        anomalous,
        events.len()
    );

    manifest.output(&corpus_dir.join("manifest.toml"))?;
    for entry in &corpus_manifest.series {
        manifest.output(&corpus_dir.join(&entry.file))?;
    }
    manifest.output(&cfg.train_data())?;
    manifest.output(&cfg.test_data())?;
    manifest.output(&cfg.events_path())?;
    manifest.write(cfg.out_dir())?;
    Ok(())
}

fn write_events_csv(path: &Path, events: &[AnomalyEvent]) -> Result<(), Error> {
    let mut out = String::from("kind,start,end\n");
    for e in events {
        out.push_str(&format!("{:?},{},{}\n", e.kind, e.start, e.end).to_lowercase());
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Pretrain on the corpus and/or fine-tune on the target train split,
/// leaving a single checkpoint at `<out_dir>/model.ckpt`.
pub fn cmd_train(cfg: &RunConfig, phase: PhaseArg, ablation: Ablation) -> Result<(), Error> {
    std::fs::create_dir_all(cfg.out_dir())?;
    let mut manifest = RunManifest::new("train", cfg);
    manifest.arg("phase", format!("{phase:?}").to_lowercase());
    manifest.arg("ablation", ablation);

    let mut model_cfg = cfg.model.clone();
    if ablation == Ablation::NoSep {
        model_cfg.separator_enabled = false;
    }
    let mut pre_cfg = cfg.pretrain.clone();
    pre_cfg.ablation = ablation;
    let mut fin_cfg = cfg.finetune.clone();
    fin_cfg.ablation = ablation;

    let pretrain_requested = matches!(phase, PhaseArg::Pretrain | PhaseArg::Both);
    let run_pre = pretrain_requested && ablation != Ablation::NoAugment;
    let run_fin = matches!(phase, PhaseArg::Finetune | PhaseArg::Both);
    if pretrain_requested && ablation == Ablation::NoAugment {
        if !run_fin {
            return Err(Error::Usage(
                "the no_augment ablation skips pretraining; request --phase finetune or --phase both"
                    .into(),
            ));
        }
        log::info!("no_augment ablation: skipping the pretraining phase");
    }

    let ckpt_path = cfg.checkpoint_path();
    let mut params: ModelParams<f64>;
    if phase == PhaseArg::Finetune && ckpt_path.exists() {
        let ckpt = load_checkpoint::<f64>(&ckpt_path)?;
        if ckpt.config != model_cfg {
            return Err(Error::Usage(format!(
                "checkpoint {} was trained with a different model config; \
                 remove it or rerun with matching settings",
                ckpt_path.display()
            )));
        }
        manifest.input(&ckpt_path)?;
        manifest.arg("initialization", "checkpoint");
        log::info!("resuming from {}", ckpt_path.display());
        params = ckpt.params;
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed());
        params = ModelParams::init(&model_cfg, &mut rng)?;
        manifest.arg("initialization", "fresh");
    }

    let mut records: Vec<LossRecord> = Vec::new();
    let mut norm_stats: Option<NormStats<f64>> = None;
    if run_pre {
        let corpus_dir = cfg.corpus_dir();
        let t = Instant::now();
        let (_, corpus) = load_corpus::<f64>(&corpus_dir)?;
        manifest.input(&corpus_dir.join("manifest.toml"))?;
        log::info!("pretraining on {} corpus series", corpus.len());
        records.extend(pretrain(&mut params, &corpus, &model_cfg, &pre_cfg)?);
        manifest.time("pretrain", t.elapsed().as_secs_f64());
    }
    if run_fin {
        let train_path = cfg.train_data();
        let t = Instant::now();
        let train = TimeSeries::<f64>::read_csv(&train_path)?;
        manifest.input(&train_path)?;
        log::info!("fine-tuning on {} ({} points)", train_path.display(), train.len());
        let (fin_records, stats) = finetune(&mut params, &train, &model_cfg, &fin_cfg)?;
        records.extend(fin_records);
        norm_stats = Some(stats);
        manifest.time("finetune", t.elapsed().as_secs_f64());
    }

    if let Some(last) = records.last() {
        log::info!("final {} loss {:.6}", last.phase, last.loss);
    }
    save_checkpoint(&ckpt_path, &Checkpoint { config: model_cfg, params, norm_stats })?;
    write_loss_log(&cfg.loss_log_path(), &records)?;
    manifest.output(&ckpt_path)?;
    manifest.output(&cfg.loss_log_path())?;
    manifest.write(cfg.out_dir())?;
    log::info!("checkpoint written to {}", ckpt_path.display());
    Ok(())
}

fn write_loss_log(path: &Path, records: &[LossRecord]) -> Result<(), Error> {
    let mut out = String::from("epoch,phase,loss\n");
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.phase, r.loss));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Normalize with the checkpoint stats, decompose block by block, and stitch
/// the per-channel component estimates back to full length.
fn decompose_series(
    series: &TimeSeries<f64>,
    params: &ModelParams<f64>,
    model_cfg: &ModelConfig,
    stats: &NormStats<f64>,
    block_length: usize,
) -> Result<(TimeSeries<f64>, Vec<Decomposition<f64>>), Error> {
    let normed = normalize(series, stats)?;
    let mut parts: Vec<Decomposition<f64>> = (0..normed.dims())
        .map(|_| Decomposition {
            trend: vec![0.0; normed.len()],
            seasonal: vec![0.0; normed.len()],
            remainder: vec![0.0; normed.len()],
        })
        .collect();
    for block in segment(&normed, block_length)? {
        let d = decompose(&block.values, params, model_cfg)?;
        let dst = &mut parts[block.channel];
        for t in 0..block.valid {
            dst.trend[block.start + t] = d.trend[t];
            dst.seasonal[block.start + t] = d.seasonal[t];
            dst.remainder[block.start + t] = d.remainder[t];
        }
    }
    Ok((normed, parts))
}

/// Reconstruction is the non-residual part of the decomposition.
fn reconstruction(parts: &[Decomposition<f64>]) -> Result<TimeSeries<f64>, Error> {
    let channels: Vec<Vec<f64>> = parts
        .iter()
        .map(|d| d.trend.iter().zip(&d.seasonal).map(|(a, b)| a + b).collect())
        .collect();
    TimeSeries::from_channels(channels)
}

/// Score the test split against a fine-tuned checkpoint: calibrate the
/// threshold on the train split, label test points, and optionally evaluate
/// against the test label column.
pub fn cmd_detect(cfg: &RunConfig, with_labels: bool) -> Result<(), Error> {
    std::fs::create_dir_all(cfg.out_dir())?;
    let mut manifest = RunManifest::new("detect", cfg);
    manifest.arg("labels", with_labels);

    let ckpt_path = cfg.checkpoint_path();
    let ckpt = load_checkpoint::<f64>(&ckpt_path)?;
    let stats = ckpt.norm_stats.as_ref().ok_or_else(|| {
        Error::Usage(format!(
            "checkpoint {} has no normalization stats; run `train --phase finetune` first",
            ckpt_path.display()
        ))
    })?;
    manifest.input(&ckpt_path)?;

    let train_path = cfg.train_data();
    let test_path = cfg.test_data();
    let train = TimeSeries::<f64>::read_csv(&train_path)?;
    let test = TimeSeries::<f64>::read_csv(&test_path)?;
    manifest.input(&train_path)?;
    manifest.input(&test_path)?;
    for (name, series) in [("train", &train), ("test", &test)] {
        if series.dims() != stats.dims() {
            return Err(Error::InvalidInput(format!(
                "{name} split has {} channels, checkpoint expects {}",
                series.dims(),
                stats.dims()
            )));
        }
    }
    let block = cfg.finetune.block_length;

    let t = Instant::now();
    let (train_normed, train_parts) =
        decompose_series(&train, &ckpt.params, &ckpt.config, stats, block)?;
    let train_scores = score(&train_normed, &reconstruction(&train_parts)?)?;
    let calibration = calibrate(&train_scores, &cfg.pot)?;
    manifest.time("calibrate", t.elapsed().as_secs_f64());
    log::info!(
        "threshold {:.6} (t0 {:.6}, gamma {:.4}, {} peaks)",
        calibration.threshold,
        calibration.t0,
        calibration.fit.gamma,
        calibration.fit.peaks_count
    );

    let t = Instant::now();
    let (test_normed, test_parts) =
        decompose_series(&test, &ckpt.params, &ckpt.config, stats, block)?;
    let test_scores = score(&test_normed, &reconstruction(&test_parts)?)?;
    let pred = label_anomalies(&test_scores, calibration.threshold);
    manifest.time("score", t.elapsed().as_secs_f64());
    log::info!(
        "flagged {} of {} test points",
        pred.iter().filter(|&&b| b).count(),
        pred.len()
    );

    write_scores_csv(&cfg.scores_path(), &test_scores, &pred)?;
    write_components_csv(&cfg.components_path(), &test_parts)?;
    std::fs::write(&cfg.calibration_path(), format!("{calibration}\n"))?;
    manifest.output(&cfg.scores_path())?;
    manifest.output(&cfg.components_path())?;
    manifest.output(&cfg.calibration_path())?;

    if with_labels {
        let truth = test.labels().ok_or_else(|| {
            Error::Usage(format!(
                "{} has no label column; rerun without --labels",
                test_path.display()
            ))
        })?;
        let raw = compute_metrics(&pred, truth, false)?;
        let (pooled, per_entity) = pooled_metrics(&[(pred.as_slice(), truth)], true)?;
        write_metrics_csv(&cfg.metrics_csv_path(), &raw, &pooled, &per_entity)?;
        write_metrics_txt(&cfg.metrics_txt_path(), &raw, &pooled, &per_entity)?;
        manifest.output(&cfg.metrics_csv_path())?;
        manifest.output(&cfg.metrics_txt_path())?;
        log::info!("point-adjusted {pooled}");
    }
    manifest.write(cfg.out_dir())?;
    Ok(())
}

fn write_components_csv(path: &Path, parts: &[Decomposition<f64>]) -> Result<(), Error> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("t");
    for d in 0..parts.len() {
        header.push_str(&format!(",trend_{d},seasonal_{d},remainder_{d}"));
    }
    writeln!(file, "{header}")?;
    let len = parts.first().map_or(0, |p| p.trend.len());
    for t in 0..len {
        let mut row = t.to_string();
        for p in parts {
            row.push_str(&format!(",{},{},{}", p.trend[t], p.seasonal[t], p.remainder[t]));
        }
        writeln!(file, "{row}")?;
    }
    file.flush()?;
    Ok(())
}

fn metrics_rows(
    raw: &MetricsReport,
    pooled: &MetricsReport,
    per_entity: &[MetricsReport],
) -> Vec<(String, bool, MetricsReport)> {
    let mut rows = vec![
        ("pooled".to_string(), false, raw.clone()),
        ("pooled".to_string(), true, pooled.clone()),
    ];
    for (i, report) in per_entity.iter().enumerate() {
        rows.push((format!("entity_{i}"), true, report.clone()));
    }
    rows
}

fn write_metrics_csv(
    path: &Path,
    raw: &MetricsReport,
    pooled: &MetricsReport,
    per_entity: &[MetricsReport],
) -> Result<(), Error> {
    let mut out = format!("scope,adjusted,{}\n", MetricsReport::CSV_HEADER);
    for (scope, adjusted, report) in metrics_rows(raw, pooled, per_entity) {
        out.push_str(&format!("{scope},{adjusted},{}\n", report.csv_row()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_metrics_txt(
    path: &Path,
    raw: &MetricsReport,
    pooled: &MetricsReport,
    per_entity: &[MetricsReport],
) -> Result<(), Error> {
    let mut out = String::new();
    for (scope, adjusted, report) in metrics_rows(raw, pooled, per_entity) {
        let mode = if adjusted { "adjusted" } else { "raw" };
        out.push_str(&format!("{scope:<10} {mode:<9} {report}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Render per-channel charts and an index page from detect outputs.
pub fn cmd_report(cfg: &RunConfig) -> Result<(), Error> {
    let mut manifest = RunManifest::new("report", cfg);
    let test_path = cfg.test_data();
    let test = TimeSeries::<f64>::read_csv(&test_path)?;
    let (scores, _) = read_scores_csv(&cfg.scores_path())?;
    let parts = read_components_csv(&cfg.components_path(), test.dims())?;
    let threshold = read_threshold(&cfg.calibration_path())?;
    manifest.input(&test_path)?;
    manifest.input(&cfg.scores_path())?;
    manifest.input(&cfg.components_path())?;
    manifest.input(&cfg.calibration_path())?;
    if scores.len() != test.len() || parts.iter().any(|p| p.trend.len() != test.len()) {
        return Err(Error::InvalidInput(format!(
            "detect outputs do not match {}: {} test points, {} scores",
            test_path.display(),
            test.len(),
            scores.len()
        )));
    }

    let truth_segments = test.labels().map(segments).unwrap_or_default();
    let report_dir = cfg.report_dir();
    std::fs::create_dir_all(&report_dir)?;

    let mut chart_files = Vec::new();
    for d in 0..test.dims() {
        let panels = [
            render::Panel {
                title: "input (shaded: labeled anomaly windows)",
                values: test.channel(d),
                shaded: &truth_segments,
                hline: None,
                color: "#1f77b4",
            },
            render::Panel {
                title: "seasonal estimate",
                values: &parts[d].seasonal,
                shaded: &[],
                hline: None,
                color: "#2ca02c",
            },
            render::Panel {
                title: "trend estimate",
                values: &parts[d].trend,
                shaded: &[],
                hline: None,
                color: "#9467bd",
            },
            render::Panel {
                title: "anomaly score and threshold",
                values: &scores,
                shaded: &[],
                hline: Some(threshold),
                color: "#ff7f0e",
            },
        ];
        let file = format!("series_{d}.svg");
        std::fs::write(report_dir.join(&file), render::render_chart(&panels))?;
        manifest.output(&report_dir.join(&file))?;
        chart_files.push(file);
    }

    let metrics_rows = read_metrics_rows(&cfg.metrics_csv_path());
    let index = render::index_page(&chart_files, metrics_rows.as_deref(), threshold);
    let index_path = report_dir.join("index.html");
    std::fs::write(&index_path, index)?;
    manifest.output(&index_path)?;
    manifest.write(cfg.out_dir())?;
    log::info!("report written to {}", index_path.display());
    Ok(())
}

fn read_scores_csv(path: &Path) -> Result<(Vec<f64>, Vec<bool>), Error> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let parse = |i: usize| -> Result<f64, Error> {
            record
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::InvalidInput(format!("{}: bad row {:?}", path.display(), record))
                })
        };
        scores.push(parse(1)?);
        labels.push(parse(2)? != 0.0);
    }
    Ok((scores, labels))
}

fn read_components_csv(path: &Path, dims: usize) -> Result<Vec<Decomposition<f64>>, Error> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut parts: Vec<Decomposition<f64>> = (0..dims)
        .map(|_| Decomposition { trend: Vec::new(), seasonal: Vec::new(), remainder: Vec::new() })
        .collect();
    for record in reader.records() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        if record.len() != 1 + 3 * dims {
            return Err(Error::InvalidInput(format!(
                "{}: expected {} columns, found {}",
                path.display(),
                1 + 3 * dims,
                record.len()
            )));
        }
        for (d, part) in parts.iter_mut().enumerate() {
            let parse = |i: usize| -> Result<f64, Error> {
                record
                    .get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("{}: bad row {:?}", path.display(), record))
                    })
            };
            part.trend.push(parse(1 + 3 * d)?);
            part.seasonal.push(parse(2 + 3 * d)?);
            part.remainder.push(parse(3 + 3 * d)?);
        }
    }
    Ok(parts)
}

fn read_threshold(path: &Path) -> Result<f64, Error> {
    let text = std::fs::read_to_string(path)?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("threshold = ") {
            return rest.trim().parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("{}: bad threshold: {e}", path.display()))
            });
        }
    }
    Err(Error::InvalidInput(format!(
        "{}: no `threshold = ...` line; run detect first",
        path.display()
    )))
}

/// Metrics are optional report input: detect only writes them when asked to
/// evaluate against labels.
fn read_metrics_rows(path: &Path) -> Option<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).ok()?;
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (rows.len() > 1).then_some(rows)
}
