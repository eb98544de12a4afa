//! Per-series generation pipeline, corpus persistence, and the labeled
//! evaluation-entity builder.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{from_csv_error, parse_label, TimeSeries};
use crate::error::Error;
use crate::scalar::Scalar;

use super::inject::{inject_anomalies, AnomalyEvent, InjectContext};
use super::waves::{
    gen_deterministic_seasonal, gen_linear_trend, gen_remainder, gen_stochastic_seasonal,
    gen_stochastic_trend, standardize, CycleJitter, Wave, WaveShape,
};
use super::{
    compose_series, derive_seed, AnomalyKind, ComponentSet, SeasonalMode, SynthConfig, TrendMode,
    ALL_ANOMALY_KINDS,
};

/// Parameters drawn while generating one series, kept so tests and tools
/// can regenerate and cross-check the corpus.
#[derive(Debug, Clone)]
pub struct SeriesRecipe {
    pub seed: u64,
    pub beta0: f64,
    pub beta1: f64,
    /// Resolved concrete flavor (never `Mixed`).
    pub seasonal_flavor: SeasonalMode,
    pub period: usize,
    pub phase: usize,
    pub remainder_sigma: f64,
    pub events: Vec<AnomalyEvent>,
}

/// One corpus row: composed series plus its ground truth.
#[derive(Debug, Clone)]
pub struct CorpusSeries<F> {
    pub composed: Vec<F>,
    pub set: ComponentSet<F>,
    pub seed: u64,
    pub anomalous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub index: usize,
    pub file: String,
    /// Written as a string: derived seeds use the full u64 range, which
    /// TOML integers (i64) cannot hold.
    #[serde(with = "u64_as_string")]
    pub seed: u64,
    pub anomalous: bool,
}

pub(crate) mod u64_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Corpus-level record: config echo plus the per-series seeds. Contains
/// nothing time- or host-dependent, so regeneration is byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config: SynthConfig,
    pub series: Vec<SeriesEntry>,
}

fn standardize_or_zeros<F: Scalar>(x: Vec<F>) -> Result<Vec<F>, Error> {
    match standardize(&x) {
        Ok(z) => Ok(z),
        // A flat component carries no signal; represent it as exact zeros.
        Err(Error::DegenerateVariance) => Ok(vec![F::zero(); x.len()]),
        Err(e) => Err(e),
    }
}

/// Generate the components of one series as a pure function of the config
/// and seed. `inject` controls whether the anomaly stage runs; it draws
/// from its own sub-stream, so the pre-injection components are identical
/// either way.
pub fn gen_components<F: Scalar>(
    config: &SynthConfig,
    seed: u64,
    inject: bool,
) -> Result<(ComponentSet<F>, SeriesRecipe), Error> {
    config.validate()?;
    let t_len = config.length;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));

    let beta0 = rng.gen_range(config.beta0_range.0..=config.beta0_range.1);
    let beta1 = rng.gen_range(config.beta1_range.0..=config.beta1_range.1);
    let trend_raw: Vec<F> = match config.trend_mode {
        TrendMode::Deterministic => {
            gen_linear_trend(F::from_f64(beta0), F::from_f64(beta1), t_len)?
        }
        TrendMode::Stochastic => {
            gen_stochastic_trend(t_len, F::from_f64(config.trend_noise_sigma), &mut rng)?
        }
        TrendMode::Mixed => {
            // Raw magnitudes of the two parts differ by orders of growth,
            // so each part is standardized before the convex blend.
            let lin = standardize_or_zeros(gen_linear_trend(
                F::from_f64(beta0),
                F::from_f64(beta1),
                t_len,
            )?)?;
            let sto = standardize_or_zeros(gen_stochastic_trend(
                t_len,
                F::from_f64(config.trend_noise_sigma),
                &mut rng,
            )?)?;
            let w = F::from_f64(rng.gen_range(0.3..=0.7));
            lin.iter()
                .zip(&sto)
                .map(|(&a, &b)| a * w + b * (F::one() - w))
                .collect()
        }
    };
    let trend = standardize_or_zeros(trend_raw)?;

    let seasonal_flavor = match config.seasonal_mode {
        SeasonalMode::Mixed => match rng.gen_range(0..3u8) {
            0 => SeasonalMode::Sinusoid,
            1 => SeasonalMode::Square,
            _ => SeasonalMode::StochasticCycle,
        },
        concrete => concrete,
    };
    let period = rng.gen_range(config.period_range.0..=config.period_range.1);
    let phase = rng.gen_range(config.phase_range.0..=config.phase_range.1);
    let seasonal_raw: Vec<F> = match seasonal_flavor {
        SeasonalMode::Sinusoid | SeasonalMode::Square => {
            let shape = if seasonal_flavor == SeasonalMode::Sinusoid {
                WaveShape::Sine
            } else {
                WaveShape::Square
            };
            let wave_count = rng.gen_range(1..=3usize);
            let mut waves = Vec::with_capacity(wave_count);
            for w in 0..wave_count {
                let amplitude =
                    rng.gen_range(config.amplitude_range.0..=config.amplitude_range.1);
                let p = if w == 0 {
                    period
                } else {
                    rng.gen_range(config.period_range.0..=config.period_range.1)
                };
                let ph = if w == 0 {
                    phase
                } else {
                    rng.gen_range(config.phase_range.0..=config.phase_range.1)
                };
                waves.push(Wave {
                    shape,
                    amplitude: F::from_f64(amplitude),
                    period: F::from_f64(p as f64),
                    phase: F::from_f64(ph as f64),
                });
            }
            gen_deterministic_seasonal(&waves, t_len)?
        }
        SeasonalMode::StochasticCycle => {
            let jitter = CycleJitter {
                amplitude_range: config
                    .cycle_amplitude_jitter
                    .map(|(a, b)| (F::from_f64(a), F::from_f64(b))),
                length_resample: config.cycle_length_jitter,
            };
            gen_stochastic_seasonal(period, phase, t_len, jitter, &mut rng)?
        }
        SeasonalMode::Mixed => unreachable!("resolved above"),
    };
    let seasonal = standardize_or_zeros(seasonal_raw)?;

    let remainder_sigma =
        rng.gen_range(config.remainder_sigma_range.0..=config.remainder_sigma_range.1);
    let remainder = gen_remainder(t_len, F::from_f64(remainder_sigma), &mut rng)?;

    let mut set = ComponentSet::new(trend, seasonal, remainder)?;
    let mut events = Vec::new();
    if inject {
        let mut inj = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let ctx = InjectContext {
            slope_base: F::from_f64(beta1.abs() + 2.0 / t_len as f64),
            period_hint: period,
        };
        let event_count = inj.gen_range(1..=3usize);
        for _ in 0..event_count {
            let kind = config.anomaly_kinds[inj.gen_range(0..config.anomaly_kinds.len())];
            if let Some(window) = pick_window(kind, t_len, period, &events, &mut inj) {
                set = inject_anomalies(&set, kind, window.clone(), &ctx, &mut inj)?;
                events.push(AnomalyEvent {
                    kind,
                    start: window.start,
                    end: window.end,
                });
            }
        }
    }

    let recipe = SeriesRecipe {
        seed,
        beta0,
        beta1,
        seasonal_flavor,
        period,
        phase,
        remainder_sigma,
        events,
    };
    Ok((set, recipe))
}

fn overlaps(events: &[AnomalyEvent], start: usize, end: usize) -> bool {
    // two-sample guard band between events
    events
        .iter()
        .any(|e| start < e.end + 2 && e.start < end + 2)
}

fn pick_window<R: Rng + ?Sized>(
    kind: AnomalyKind,
    t_len: usize,
    period: usize,
    existing: &[AnomalyEvent],
    rng: &mut R,
) -> Option<Range<usize>> {
    for _ in 0..40 {
        let range = match kind {
            AnomalyKind::Global | AnomalyKind::Contextual => {
                if t_len < 8 {
                    return None;
                }
                let t = rng.gen_range(2..t_len - 2);
                t..t + 1
            }
            AnomalyKind::Trend => pattern_window(t_len / 16, t_len / 8, t_len / 4, t_len, rng)?,
            AnomalyKind::Seasonal => pattern_window(2 * period, 4 * period, t_len / 3, t_len, rng)?,
            AnomalyKind::Shapelet => pattern_window(period, 2 * period, t_len / 4, t_len, rng)?,
        };
        if !overlaps(existing, range.start, range.end) {
            return Some(range);
        }
    }
    None
}

fn pattern_window<R: Rng + ?Sized>(
    w_lo: usize,
    w_hi: usize,
    cap: usize,
    t_len: usize,
    rng: &mut R,
) -> Option<Range<usize>> {
    let cap = cap.min(t_len.saturating_sub(4));
    let lo = w_lo.max(8).min(cap);
    let hi = w_hi.max(lo).min(cap);
    if lo < 8 || hi < lo {
        return None;
    }
    let w = rng.gen_range(lo..=hi);
    if t_len < w + 3 {
        return None;
    }
    let start = rng.gen_range(1..=t_len - w - 1);
    Some(start..start + w)
}

/// Write the corpus: one CSV per series plus `manifest.toml`. Anomalous
/// series are an exact quota, round(ratio * count), chosen by a seeded
/// permutation of the indices.
pub fn gen_dataset<F: Scalar>(config: &SynthConfig, out_dir: &Path) -> Result<CorpusManifest, Error> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let n = config.series_count;
    let quota = (config.anomaly_ratio * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut quota_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, u64::MAX));
    order.shuffle(&mut quota_rng);
    let mut anomalous = vec![false; n];
    for &i in order.iter().take(quota) {
        anomalous[i] = true;
    }

    let mut entries = Vec::with_capacity(n);
    for (i, &anom) in anomalous.iter().enumerate() {
        let seed = derive_seed(config.master_seed, i as u64);
        let (set, _recipe) = gen_components::<F>(config, seed, anom)?;
        let composed = compose_series(&set)?;
        let file = format!("series_{i:05}.csv");
        write_corpus_series(&out_dir.join(&file), &composed, &set)?;
        entries.push(SeriesEntry {
            index: i,
            file,
            seed,
            anomalous: anom,
        });
    }

    let manifest = CorpusManifest {
        config: config.clone(),
        series: entries,
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Usage(format!("manifest serialization: {e}")))?;
    std::fs::write(out_dir.join("manifest.toml"), text)?;
    Ok(manifest)
}

/// Read a corpus directory written by [`gen_dataset`].
pub fn load_corpus<F: Scalar>(dir: &Path) -> Result<(CorpusManifest, Vec<CorpusSeries<F>>), Error> {
    let text = std::fs::read_to_string(dir.join("manifest.toml"))?;
    let manifest: CorpusManifest = toml::from_str(&text).map_err(|e| Error::Parse {
        offset: e.span().map(|s| s.start).unwrap_or(0),
        msg: format!("corpus manifest: {e}"),
    })?;
    let mut series = Vec::with_capacity(manifest.series.len());
    for entry in &manifest.series {
        let (composed, set) = read_corpus_series(&dir.join(&entry.file))?;
        series.push(CorpusSeries {
            composed,
            set,
            seed: entry.seed,
            anomalous: entry.anomalous,
        });
    }
    Ok((manifest, series))
}

/// One series as `x,trend,seasonal,remainder,label` rows.
pub fn write_corpus_series<F: Scalar>(
    path: &Path,
    composed: &[F],
    set: &ComponentSet<F>,
) -> Result<(), Error> {
    if composed.len() != set.len() {
        return Err(Error::InvalidInput("composed/component length mismatch".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(from_csv_error)?;
    w.write_record(["x", "trend", "seasonal", "remainder", "label"])
        .map_err(from_csv_error)?;
    for t in 0..composed.len() {
        w.write_record([
            format!("{}", composed[t]),
            format!("{}", set.trend[t]),
            format!("{}", set.seasonal[t]),
            format!("{}", set.remainder[t]),
            if set.anomaly_mask[t] { "1".into() } else { "0".into() },
        ])
        .map_err(from_csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus_series<F: Scalar>(path: &Path) -> Result<(Vec<F>, ComponentSet<F>), Error> {
    let mut r = csv::Reader::from_path(path).map_err(from_csv_error)?;
    let headers = r.headers().map_err(from_csv_error)?;
    let expected = ["x", "trend", "seasonal", "remainder", "label"];
    if headers.iter().ne(expected) {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("corpus header must be {expected:?}, found {headers:?}"),
        });
    }
    let (mut x, mut tau, mut s, mut rem, mut mask) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in r.records() {
        let record = record.map_err(from_csv_error)?;
        let offset = record.position().map(|p| p.byte() as usize).unwrap_or(0);
        if record.len() != 5 {
            return Err(Error::Parse {
                offset,
                msg: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let num = |idx: usize, out: &mut Vec<F>| -> Result<(), Error> {
            let field = &record[idx];
            let v: F = field.parse().map_err(|_| Error::Parse {
                offset,
                msg: format!("invalid number {field:?} in column {}", expected[idx]),
            })?;
            out.push(v);
            Ok(())
        };
        num(0, &mut x)?;
        num(1, &mut tau)?;
        num(2, &mut s)?;
        num(3, &mut rem)?;
        mask.push(parse_label(&record[4], offset)?);
    }
    let mut set = ComponentSet::new(tau, s, rem)?;
    set.anomaly_mask = mask;
    Ok((x, set))
}

/// Build one evaluation entity from a single generative draw: an
/// anomaly-free fine-tuning split and a labeled test split carrying every
/// anomaly kind at roughly `target_ratio` anomalous points.
pub fn gen_eval_entity<F: Scalar>(
    config: &SynthConfig,
    seed: u64,
    train_len: usize,
    test_len: usize,
    target_ratio: f64,
) -> Result<(TimeSeries<F>, TimeSeries<F>, Vec<AnomalyEvent>), Error> {
    if train_len < 8 || test_len < 64 {
        return Err(Error::InvalidInput(
            "entity splits too short: need train >= 8, test >= 64".into(),
        ));
    }
    if !(0.0..0.5).contains(&target_ratio) {
        return Err(Error::InvalidInput("target_ratio must lie in [0, 0.5)".into()));
    }
    let mut cfg = config.clone();
    cfg.length = train_len + test_len;
    let (clean, recipe) = gen_components::<F>(&cfg, seed, false)?;

    let train_x = compose_series(&clean)?[..train_len].to_vec();
    let mut test_set = ComponentSet::new(
        clean.trend[train_len..].to_vec(),
        clean.seasonal[train_len..].to_vec(),
        clean.remainder[train_len..].to_vec(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let ctx = InjectContext {
        slope_base: F::from_f64(recipe.beta1.abs() + 2.0 / cfg.length as f64),
        period_hint: recipe.period,
    };
    let target_points = (target_ratio * test_len as f64).round() as usize;
    let mut events: Vec<AnomalyEvent> = Vec::new();
    let mut marked = 0usize;
    let mut cycle = ALL_ANOMALY_KINDS.iter().cycle();
    let mut attempts = 0;
    while marked * 10 < target_points * 9 && attempts < 300 {
        attempts += 1;
        let kind = *cycle.next().expect("cycle is infinite");
        // Budget-aware pattern windows so the realized ratio stays near
        // the target instead of following the corpus window sizes.
        let budget = (target_points / 4).max(12);
        let window = match kind {
            AnomalyKind::Global | AnomalyKind::Contextual => {
                pick_window(kind, test_len, recipe.period, &events, &mut rng)
            }
            AnomalyKind::Trend => {
                pattern_window(budget, budget * 2, test_len / 6, test_len, &mut rng)
                    .filter(|w| !overlaps(&events, w.start, w.end))
            }
            AnomalyKind::Seasonal => {
                let w = (2 * recipe.period).max(budget / 2);
                pattern_window(w, w + recipe.period, test_len / 4, test_len, &mut rng)
                    .filter(|w| !overlaps(&events, w.start, w.end))
            }
            AnomalyKind::Shapelet => {
                pattern_window(recipe.period.max(12), budget.max(16), test_len / 6, test_len, &mut rng)
                    .filter(|w| !overlaps(&events, w.start, w.end))
            }
        };
        if let Some(w) = window {
            test_set = inject_anomalies(&test_set, kind, w.clone(), &ctx, &mut rng)?;
            events.push(AnomalyEvent {
                kind,
                start: w.start,
                end: w.end,
            });
            marked = test_set.anomaly_mask.iter().filter(|&&m| m).count();
        }
    }

    let test_x = compose_series(&test_set)?;
    let train = TimeSeries::from_channels(vec![train_x])?;
    let mut test = TimeSeries::from_channels(vec![test_x])?;
    test.set_labels(test_set.anomaly_mask.clone())?;
    Ok((train, test, events))
}
