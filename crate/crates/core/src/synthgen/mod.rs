//! Synthetic corpus generation: composed trend + seasonal + remainder
//! series with injected, labeled anomalies for decomposition pretraining.

pub(crate) mod corpus;
mod inject;
mod waves;

pub use corpus::{
    gen_components, gen_dataset, gen_eval_entity, load_corpus, read_corpus_series,
    write_corpus_series, CorpusManifest, CorpusSeries, SeriesEntry, SeriesRecipe,
};
pub use inject::{inject_anomalies, AnomalyEvent, InjectContext};
pub use waves::{
    gen_deterministic_seasonal, gen_linear_trend, gen_remainder, gen_stochastic_seasonal,
    gen_stochastic_trend, gen_stochastic_trend_with_innovations, standardize, CycleJitter, Wave,
    WaveShape,
};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::Scalar;

/// Per-stream seed derivation (SplitMix64 finalizer over master and index).
/// Streams for distinct indices are statistically independent, and the
/// mapping is fixed: it is part of the corpus reproducibility contract.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendMode {
    Deterministic,
    Stochastic,
    /// Sum of a deterministic line and a stochastic component.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalMode {
    Sinusoid,
    Square,
    StochasticCycle,
    /// Uniform per-series choice among the three concrete flavors.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Point spike extreme against the whole remainder.
    Global,
    /// Point spike extreme against its local neighborhood only.
    Contextual,
    /// Window of the seasonal component replaced by low-pass noise.
    Shapelet,
    /// Seasonal frequency warped (doubled or halved) inside a window.
    Seasonal,
    /// Trend slope shifted by a constant inside a window.
    Trend,
}

pub const ALL_ANOMALY_KINDS: [AnomalyKind; 5] = [
    AnomalyKind::Global,
    AnomalyKind::Contextual,
    AnomalyKind::Shapelet,
    AnomalyKind::Seasonal,
    AnomalyKind::Trend,
];

/// Generator configuration. Ranges are closed intervals `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub series_count: usize,
    pub length: usize,
    /// Serialized as a string: derived seeds span the full u64 range, which
    /// TOML integers (i64) cannot hold.
    #[serde(with = "corpus::u64_as_string")]
    pub master_seed: u64,
    pub trend_mode: TrendMode,
    pub beta0_range: (f64, f64),
    pub beta1_range: (f64, f64),
    pub trend_noise_sigma: f64,
    pub seasonal_mode: SeasonalMode,
    pub period_range: (usize, usize),
    pub phase_range: (usize, usize),
    pub amplitude_range: (f64, f64),
    pub remainder_sigma_range: (f64, f64),
    /// Fraction of series that receive anomaly injections. The count is
    /// exact: round(ratio * series_count) series, chosen by a seeded
    /// permutation of the indices.
    pub anomaly_ratio: f64,
    pub anomaly_kinds: Vec<AnomalyKind>,
    /// Per-cycle amplitude scaling range for the stochastic-cycle seasonal.
    pub cycle_amplitude_jitter: Option<(f64, f64)>,
    /// Per-cycle length resampling (±10%) for the stochastic-cycle seasonal.
    pub cycle_length_jitter: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            series_count: 80,
            length: 512,
            master_seed: 7,
            trend_mode: TrendMode::Mixed,
            beta0_range: (-1.0, 1.0),
            beta1_range: (-0.02, 0.02),
            trend_noise_sigma: 1.0,
            seasonal_mode: SeasonalMode::Mixed,
            period_range: (16, 64),
            phase_range: (0, 63),
            amplitude_range: (0.5, 1.5),
            remainder_sigma_range: (0.05, 0.25),
            anomaly_ratio: 0.1,
            anomaly_kinds: ALL_ANOMALY_KINDS.to_vec(),
            cycle_amplitude_jitter: Some((0.9, 1.1)),
            cycle_length_jitter: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), Error> {
        fn field(name: &str, detail: impl Into<String>) -> Error {
            Error::Config {
                field: name.to_string(),
                detail: detail.into(),
            }
        }
        if self.series_count == 0 {
            return Err(field("series_count", "must be at least 1"));
        }
        if self.length < 8 {
            return Err(field("length", "must be at least 8"));
        }
        for (name, (lo, hi)) in [
            ("beta0_range", self.beta0_range),
            ("beta1_range", self.beta1_range),
            ("amplitude_range", self.amplitude_range),
            ("remainder_sigma_range", self.remainder_sigma_range),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(field(name, format!("[{lo}, {hi}] is not a valid range")));
            }
        }
        if self.amplitude_range.0 < 0.0 {
            return Err(field("amplitude_range", "amplitudes must be nonnegative"));
        }
        if self.remainder_sigma_range.0 < 0.0 {
            return Err(field("remainder_sigma_range", "sigma must be nonnegative"));
        }
        if !(self.trend_noise_sigma.is_finite() && self.trend_noise_sigma > 0.0) {
            return Err(field("trend_noise_sigma", "must be positive"));
        }
        let (plo, phi) = self.period_range;
        if plo <= 1 || plo > phi || phi >= self.length {
            return Err(field(
                "period_range",
                format!("[{plo}, {phi}] must satisfy 1 < lo <= hi < length"),
            ));
        }
        if self.phase_range.0 > self.phase_range.1 {
            return Err(field("phase_range", "lo must not exceed hi"));
        }
        if !(0.0..=1.0).contains(&self.anomaly_ratio) {
            return Err(field("anomaly_ratio", "must lie in [0, 1]"));
        }
        if self.anomaly_ratio > 0.0 && self.anomaly_kinds.is_empty() {
            return Err(field(
                "anomaly_kinds",
                "must name at least one kind when anomaly_ratio > 0",
            ));
        }
        if let Some((lo, hi)) = self.cycle_amplitude_jitter {
            if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi {
                return Err(field(
                    "cycle_amplitude_jitter",
                    format!("[{lo}, {hi}] must satisfy 0 < lo <= hi"),
                ));
            }
        }
        Ok(())
    }
}

/// Aligned ground-truth components of one univariate series. The mask
/// marks timestamps where injection modified at least one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet<F> {
    pub trend: Vec<F>,
    pub seasonal: Vec<F>,
    pub remainder: Vec<F>,
    pub anomaly_mask: Vec<bool>,
}

impl<F: Scalar> ComponentSet<F> {
    pub fn new(trend: Vec<F>, seasonal: Vec<F>, remainder: Vec<F>) -> Result<Self, Error> {
        if trend.len() != seasonal.len() || trend.len() != remainder.len() {
            return Err(Error::InvalidInput(format!(
                "component lengths differ: trend {}, seasonal {}, remainder {}",
                trend.len(),
                seasonal.len(),
                remainder.len()
            )));
        }
        let mask = vec![false; trend.len()];
        Ok(ComponentSet {
            trend,
            seasonal,
            remainder,
            anomaly_mask: mask,
        })
    }

    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    pub fn has_anomalies(&self) -> bool {
        self.anomaly_mask.iter().any(|&m| m)
    }
}

/// Pointwise x = (trend + seasonal) + remainder, in that fixed association
/// order so regenerated compositions are bit-identical.
pub fn compose_series<F: Scalar>(set: &ComponentSet<F>) -> Result<Vec<F>, Error> {
    let n = set.trend.len();
    if set.seasonal.len() != n || set.remainder.len() != n || set.anomaly_mask.len() != n {
        return Err(Error::InvalidInput("component lengths differ".into()));
    }
    Ok((0..n)
        .map(|t| set.trend[t] + set.seasonal[t] + set.remainder[t])
        .collect())
}
