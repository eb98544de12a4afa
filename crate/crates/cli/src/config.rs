//! Run configuration: one TOML file drives every subcommand, with dotted-key
//! `--set` overrides applied before deserialization. A single master seed is
//! the only randomness input; each stage seed is derived from it, so the
//! per-section `seed` fields in the file are ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strand_core::detection::PotParams;
use strand_core::model::ModelConfig;
use strand_core::synthgen::{derive_seed, SynthConfig};
use strand_core::training::{TrainConfig, TrainPhase};
use strand_core::Error;

/// Stage indices for seed derivation. Fixed: changing them changes every
/// artifact a given master seed produces.
const SEED_CORPUS: u64 = 1;
const SEED_ENTITY: u64 = 2;
const SEED_INIT: u64 = 3;
const SEED_PRETRAIN: u64 = 4;
const SEED_FINETUNE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed. Serialized as a string: derived seeds span the full u64
    /// range, which TOML integers (i64) cannot hold.
    #[serde(with = "u64_as_string")]
    pub seed: u64,
    pub paths: Paths,
    pub entity: EntityConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub pot: PotParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            paths: Paths::default(),
            entity: EntityConfig::default(),
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            pretrain: TrainConfig::defaults_for(TrainPhase::Pretrain),
            finetune: TrainConfig::defaults_for(TrainPhase::Finetune),
            pot: PotParams::default(),
        }
    }
}

/// Where a run reads and writes. Only `out_dir` is required; the data paths
/// default to conventional locations under it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub out_dir: PathBuf,
    pub corpus_dir: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out_dir: PathBuf::from("run"),
            corpus_dir: None,
            train_data: None,
            test_data: None,
        }
    }
}

/// Shape of the labeled evaluation entity emitted by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntityConfig {
    pub train_len: usize,
    pub test_len: usize,
    /// Target fraction of anomalous points in the test split.
    pub target_ratio: f64,
}

impl Default for EntityConfig {
    fn default() -> Self {
        EntityConfig {
            train_len: 2048,
            test_len: 2048,
            target_ratio: 0.05,
        }
    }
}

impl EntityConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.train_len < 8 {
            return Err(Error::Config {
                field: "entity.train_len".into(),
                detail: "must be at least 8".into(),
            });
        }
        if self.test_len < 64 {
            return Err(Error::Config {
                field: "entity.test_len".into(),
                detail: "must be at least 64".into(),
            });
        }
        if !(0.0..0.5).contains(&self.target_ratio) {
            return Err(Error::Config {
                field: "entity.target_ratio".into(),
                detail: "must lie in [0, 0.5)".into(),
            });
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn out_dir(&self) -> &Path {
        &self.paths.out_dir
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.paths
            .corpus_dir
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("corpus"))
    }

    pub fn train_data(&self) -> PathBuf {
        self.paths
            .train_data
            .clone()
            .unwrap_or_else(|| self.corpus_dir().join("entity_train.csv"))
    }

    pub fn test_data(&self) -> PathBuf {
        self.paths
            .test_data
            .clone()
            .unwrap_or_else(|| self.corpus_dir().join("entity_test.csv"))
    }

    pub fn events_path(&self) -> PathBuf {
        self.corpus_dir().join("entity_events.csv")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths.out_dir.join("model.ckpt")
    }

    pub fn loss_log_path(&self) -> PathBuf {
        self.paths.out_dir.join("loss_log.csv")
    }

    pub fn scores_path(&self) -> PathBuf {
        self.paths.out_dir.join("scores.csv")
    }

    pub fn components_path(&self) -> PathBuf {
        self.paths.out_dir.join("components.csv")
    }

    pub fn calibration_path(&self) -> PathBuf {
        self.paths.out_dir.join("calibration.txt")
    }

    pub fn metrics_csv_path(&self) -> PathBuf {
        self.paths.out_dir.join("metrics.csv")
    }

    pub fn metrics_txt_path(&self) -> PathBuf {
        self.paths.out_dir.join("metrics.txt")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.paths.out_dir.join("report")
    }

    pub fn entity_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_ENTITY)
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_INIT)
    }

    /// Overwrite every stage seed from the master seed and pin the phase
    /// tags, then validate all sections.
    pub fn finalize(&mut self) -> Result<(), Error> {
        self.synth.master_seed = derive_seed(self.seed, SEED_CORPUS);
        self.pretrain.phase = TrainPhase::Pretrain;
        self.pretrain.seed = derive_seed(self.seed, SEED_PRETRAIN);
        self.finetune.phase = TrainPhase::Finetune;
        self.finetune.seed = derive_seed(self.seed, SEED_FINETUNE);
        self.validate()
    }

    fn validate(&self) -> Result<(), Error> {
        self.entity.validate()?;
        self.synth.validate()?;
        self.model.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        self.pot.validate()?;
        if self.paths.out_dir.as_os_str().is_empty() {
            return Err(Error::Config {
                field: "paths.out_dir".into(),
                detail: "must not be empty".into(),
            });
        }
        Ok(())
    }
}

/// Load the config file, apply `--set key=value` overrides, and finalize.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut value: toml::Value = toml::from_str(&text).map_err(|e| Error::Parse {
        offset: e.span().map(|s| s.start).unwrap_or(0),
        msg: format!("{}: {e}", path.display()),
    })?;
    for spec in overrides {
        apply_override(&mut value, spec)?;
    }
    let mut config: RunConfig = value.try_into().map_err(|e| Error::Config {
        field: "run config".into(),
        detail: e.to_string(),
    })?;
    config.finalize()?;
    Ok(config)
}

/// Apply one `dotted.path=value` override, creating intermediate tables as
/// needed. The value is parsed as bool, integer, float, or TOML array in
/// that order, falling back to a plain string. Keys ending in `seed` always
/// take strings, matching their serialized form.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), Error> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| {
        Error::InvalidInput(format!("override `{spec}` is not of the form key=value"))
    })?;
    let segments: Vec<&str> = key.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidInput(format!("override key `{key}` has an empty segment")));
    }
    let (last, parents) = segments.split_last().expect("split yields at least one segment");
    let mut node = root;
    for seg in parents {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::InvalidInput(format!("override key `{key}`: `{seg}` is not a table"))
        })?;
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let table = node.as_table_mut().ok_or_else(|| {
        Error::InvalidInput(format!("override key `{key}` does not address a table entry"))
    })?;
    table.insert(last.to_string(), parse_override_value(last, raw)?);
    Ok(())
}

fn parse_override_value(key: &str, raw: &str) -> Result<toml::Value, Error> {
    if key.ends_with("seed") {
        return Ok(toml::Value::String(raw.to_string()));
    }
    if raw == "true" || raw == "false" {
        return Ok(toml::Value::Boolean(raw == "true"));
    }
    if let Ok(i) = raw.parse::<i64>() {
        return Ok(toml::Value::Integer(i));
    }
    if let Ok(f) = raw.parse::<f64>() {
        return Ok(toml::Value::Float(f));
    }
    if raw.starts_with('[') {
        let doc: toml::Value = toml::from_str(&format!("v = {raw}")).map_err(|e| {
            Error::InvalidInput(format!("override value `{raw}` is not a TOML array: {e}"))
        })?;
        return Ok(doc
            .get("v")
            .cloned()
            .expect("wrapper document always has key v"));
    }
    Ok(toml::Value::String(raw.to_string()))
}

/// Duplicate of the serializer the core crate uses for its own seed fields
/// (it is not exported). The two must agree so config echoes round-trip.
mod u64_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse::<u64>()
            .map_err(|e| serde::de::Error::custom(format!("seed `{raw}`: {e}")))
    }
}
