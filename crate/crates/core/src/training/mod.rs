//! Preprocessing and the two-phase optimization: decomposition pretraining
//! on synthetic corpora, then reconstruction fine-tuning on target data.
//!
//! Both loops are plain ADAM over shuffled fixed-length blocks, one tape per
//! batch, single-threaded, fully determined by the config seed.

mod batch;
mod prep;

pub use batch::{
    decomposition_examples, decomposition_gradients, decomposition_loss,
    reconstruction_gradients, reconstruction_loss, DecompExample, ReconExample,
};
pub use prep::{normalize, segment, Block, NormStats, NORM_EPS};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeries;
use crate::error::Error;
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::AdamState;
use crate::scalar::Scalar;
use crate::synthgen::CorpusSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainPhase {
    Pretrain,
    Finetune,
}

impl std::fmt::Display for TrainPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainPhase::Pretrain => "pretrain",
            TrainPhase::Finetune => "finetune",
        })
    }
}

/// Component removals used in the comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Full model.
    None,
    /// Drop the separator; the model degenerates to a plain reconstructor.
    NoSep,
    /// Pretrain with the reconstruction objective instead of component
    /// targets.
    NoDecomp,
    /// Skip synthetic pretraining entirely.
    NoAugment,
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ablation::None => "none",
            Ablation::NoSep => "no_sep",
            Ablation::NoDecomp => "no_decomp",
            Ablation::NoAugment => "no_augment",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub phase: TrainPhase,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Series are cut into non-overlapping blocks of this length.
    pub block_length: usize,
    /// Serialized as a string: derived seeds span the full u64 range, which
    /// TOML integers (i64) cannot hold.
    #[serde(with = "crate::synthgen::corpus::u64_as_string")]
    pub seed: u64,
    pub ablation: Ablation,
}

impl TrainConfig {
    /// Published schedule for each phase; everything else is shared.
    pub fn defaults_for(phase: TrainPhase) -> Self {
        let (lr, epochs) = match phase {
            TrainPhase::Pretrain => (1e-3, 40),
            TrainPhase::Finetune => (5e-4, 15),
        };
        TrainConfig {
            phase,
            lr,
            epochs,
            batch_size: 8,
            block_length: 512,
            seed: 7,
            ablation: Ablation::None,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let field = |field: &str, detail: String| Error::Config {
            field: field.to_string(),
            detail,
        };
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(field("lr", format!("must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(field("epochs", "must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(field("batch_size", "must be at least 1".into()));
        }
        if self.block_length < 2 {
            return Err(field(
                "block_length",
                format!("must cover at least one frame, got {}", self.block_length),
            ));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::defaults_for(TrainPhase::Pretrain)
    }
}

/// One epoch of the loss log (`epoch,phase,loss` in the CSV export).
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub phase: TrainPhase,
    pub loss: f64,
}

fn adam_step<F: Scalar>(
    params: &mut ModelParams<F>,
    adam: &mut AdamState<F>,
    lr: f64,
) -> Result<(), Error> {
    let mut refs = params.tensors_mut();
    adam.step(&mut refs, F::from_f64(lr))
}

/// Minimize the decomposition objective on a synthetic corpus with known
/// components. Under the `no_decomp` ablation the reconstruction objective
/// is substituted; under `no_augment` this phase must be skipped by the
/// caller and the call is rejected.
pub fn pretrain<F: Scalar>(
    params: &mut ModelParams<F>,
    corpus: &[CorpusSeries<F>],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<Vec<LossRecord>, Error> {
    cfg.validate()?;
    model_cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidInput("empty pretraining corpus".into()));
    }
    if cfg.ablation == Ablation::NoAugment {
        return Err(Error::Usage(
            "pretraining is omitted under the no_augment ablation".into(),
        ));
    }
    let mut examples = Vec::new();
    for series in corpus {
        examples.extend(decomposition_examples(series, cfg.block_length)?);
    }
    let reconstruction_objective = cfg.ablation == Ablation::NoDecomp;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        examples.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in examples.chunks(cfg.batch_size) {
            let loss = if reconstruction_objective {
                let recon: Vec<ReconExample<F>> = chunk.iter().map(ReconExample::from).collect();
                reconstruction_gradients(params, model_cfg, &recon)?
            } else {
                decomposition_gradients(params, model_cfg, chunk)?
            };
            adam_step(params, &mut adam, cfg.lr)?;
            total += loss.to_f64();
            batches += 1;
        }
        let mean = total / batches as f64;
        log::info!("pretrain epoch {epoch}/{}: mean loss {mean:.6}", cfg.epochs);
        records.push(LossRecord {
            epoch,
            phase: TrainPhase::Pretrain,
            loss: mean,
        });
    }
    Ok(records)
}

/// Minimize the reconstruction objective on a target training split assumed
/// anomaly-free. Normalization stats are fitted here and returned so the
/// caller can persist them with the checkpoint.
pub fn finetune<F: Scalar>(
    params: &mut ModelParams<F>,
    series: &TimeSeries<F>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Vec<LossRecord>, NormStats<F>), Error> {
    cfg.validate()?;
    model_cfg.validate()?;
    let stats = NormStats::fit(series)?;
    let normed = normalize(series, &stats)?;
    let mut examples: Vec<ReconExample<F>> = segment(&normed, cfg.block_length)?
        .into_iter()
        .map(|b| ReconExample {
            x: b.values,
            valid: b.valid,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        examples.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in examples.chunks(cfg.batch_size) {
            let loss = reconstruction_gradients(params, model_cfg, chunk)?;
            adam_step(params, &mut adam, cfg.lr)?;
            total += loss.to_f64();
            batches += 1;
        }
        let mean = total / batches as f64;
        log::info!("finetune epoch {epoch}/{}: mean loss {mean:.6}", cfg.epochs);
        records.push(LossRecord {
            epoch,
            phase: TrainPhase::Finetune,
            loss: mean,
        });
    }
    Ok((records, stats))
}
