//! Anomaly scoring and threshold calibration.
//!
//! Scores are per-timestamp reconstruction errors. The threshold is
//! calibrated on scores from the (assumed anomaly-free) training split by
//! peaks-over-threshold: everything above an initial empirical quantile is
//! treated as a sample from a generalized Pareto tail, the tail is fitted by
//! maximum likelihood, and the threshold is the fitted quantile at risk
//! level `q`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{from_csv_error, TimeSeries};
use crate::error::Error;
use crate::scalar::Scalar;

/// Nonnegative per-timestamp anomaly scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries<F> {
    scores: Vec<F>,
}

impl<F: Scalar> ScoreSeries<F> {
    pub fn new(scores: Vec<F>) -> Result<Self, Error> {
        for (t, &s) in scores.iter().enumerate() {
            if !s.is_finite() || s < F::zero() {
                return Err(Error::InvalidInput(format!(
                    "score at t={t} is {}, must be finite and nonnegative",
                    s.to_f64()
                )));
            }
        }
        Ok(ScoreSeries { scores })
    }

    pub fn values(&self) -> &[F] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Peaks-over-threshold calibration parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotParams {
    /// Empirical quantile of the calibration scores used as the initial
    /// threshold; everything above it is a tail sample.
    pub init_quantile: f64,
    /// Target tail probability for the final threshold.
    pub risk: f64,
    /// Minimum number of tail samples required for a trustworthy fit.
    pub min_excesses: usize,
}

impl Default for PotParams {
    fn default() -> Self {
        PotParams {
            init_quantile: 0.98,
            risk: 1e-3,
            min_excesses: 30,
        }
    }
}

impl PotParams {
    pub fn validate(&self) -> Result<(), Error> {
        let field = |field: &str, detail: String| Error::Config {
            field: field.to_string(),
            detail,
        };
        if !(self.init_quantile > 0.0 && self.init_quantile < 1.0) {
            return Err(field(
                "init_quantile",
                format!("must lie in (0, 1), got {}", self.init_quantile),
            ));
        }
        if !(self.risk > 0.0 && self.risk < 1.0) {
            return Err(field(
                "risk",
                format!("must lie in (0, 1), got {}", self.risk),
            ));
        }
        if self.min_excesses == 0 {
            return Err(field("min_excesses", "must be at least 1".into()));
        }
        Ok(())
    }
}

/// Maximum-likelihood generalized Pareto fit of threshold excesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub gamma: f64,
    pub sigma: f64,
    /// Number of excesses the fit was computed from.
    pub peaks_count: usize,
    /// Size of the calibration set the excesses were drawn from. Equals
    /// `peaks_count` for a standalone fit; the calibration fills in the
    /// full count.
    pub total_count: usize,
}

/// Everything the calibration produced, for the report and for reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub params: PotParams,
    /// Initial empirical threshold.
    pub t0: f64,
    pub fit: GpdFit,
    pub threshold: f64,
}

impl std::fmt::Display for Calibration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "pot calibration")?;
        writeln!(f, "init_quantile = {}", self.params.init_quantile)?;
        writeln!(f, "risk = {}", self.params.risk)?;
        writeln!(f, "t0 = {}", self.t0)?;
        writeln!(f, "gamma = {}", self.fit.gamma)?;
        writeln!(f, "sigma = {}", self.fit.sigma)?;
        writeln!(f, "peaks = {}", self.fit.peaks_count)?;
        writeln!(f, "total = {}", self.fit.total_count)?;
        write!(f, "threshold = {}", self.threshold)
    }
}

/// Per-timestamp L2 norm of the residual across channels.
pub fn score<F: Scalar>(
    original: &TimeSeries<F>,
    reconstructed: &TimeSeries<F>,
) -> Result<ScoreSeries<F>, Error> {
    if original.dims() != reconstructed.dims() || original.len() != reconstructed.len() {
        return Err(Error::shape(
            "score",
            format!(
                "original is {}x{}, reconstruction is {}x{}",
                original.len(),
                original.dims(),
                reconstructed.len(),
                reconstructed.dims()
            ),
        ));
    }
    let mut scores = vec![F::zero(); original.len()];
    for d in 0..original.dims() {
        let a = original.channel(d);
        let b = reconstructed.channel(d);
        for t in 0..scores.len() {
            let r = a[t] - b[t];
            scores[t] = scores[t] + r * r;
        }
    }
    for s in &mut scores {
        *s = s.sqrt();
    }
    ScoreSeries::new(scores)
}

const GAMMA_GRID_MIN: f64 = -0.5;
const GAMMA_GRID_MAX: f64 = 1.0;
const GAMMA_GRID_STEP: f64 = 1e-3;

/// Generalized Pareto log-likelihood at (gamma, sigma), or None when the
/// parameters cannot carry the sample (support violation, sigma <= 0).
fn gpd_log_likelihood(excesses: &[f64], gamma: f64, sigma: f64) -> Option<f64> {
    if sigma <= 0.0 {
        return None;
    }
    let n = excesses.len() as f64;
    if gamma.abs() < 1e-9 {
        let sum: f64 = excesses.iter().sum();
        return Some(-n * sigma.ln() - sum / sigma);
    }
    let mut log_sum = 0.0;
    for &y in excesses {
        let arg = 1.0 + gamma * y / sigma;
        if arg <= 0.0 {
            return None;
        }
        log_sum += arg.ln();
    }
    Some(-n * sigma.ln() - (1.0 + 1.0 / gamma) * log_sum)
}

/// Fit a generalized Pareto distribution to positive excesses by grid search
/// over the shape, with the scale profiled analytically at each candidate
/// through the mean relation `E[Y] = sigma / (1 - gamma)`.
pub fn fit_gpd<F: Scalar>(excesses: &[F], min_excesses: usize) -> Result<GpdFit, Error> {
    if excesses.len() < min_excesses {
        return Err(Error::Calibration(format!(
            "{} excesses, need at least {min_excesses}; lower init_quantile to admit more \
             tail samples",
            excesses.len()
        )));
    }
    let ys: Vec<f64> = excesses.iter().map(|&y| y.to_f64()).collect();
    for (i, &y) in ys.iter().enumerate() {
        if !y.is_finite() || y <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "excess at index {i} is {y}, must be finite and positive"
            )));
        }
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;

    let steps = ((GAMMA_GRID_MAX - GAMMA_GRID_MIN) / GAMMA_GRID_STEP).round() as usize;
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..=steps {
        let gamma = GAMMA_GRID_MIN + i as f64 * GAMMA_GRID_STEP;
        let sigma = mean * (1.0 - gamma);
        if let Some(ll) = gpd_log_likelihood(&ys, gamma, sigma) {
            if best.map_or(true, |(b, _, _)| ll > b) {
                best = Some((ll, gamma, sigma));
            }
        }
    }
    let (_, gamma, sigma) = best.ok_or_else(|| {
        Error::Calibration("no admissible shape parameter on the search grid".into())
    })?;
    if gamma <= GAMMA_GRID_MIN + GAMMA_GRID_STEP / 2.0
        || gamma >= GAMMA_GRID_MAX - GAMMA_GRID_STEP / 2.0
    {
        log::warn!(
            "GPD shape estimate {gamma} sits on the search grid boundary \
             [{GAMMA_GRID_MIN}, {GAMMA_GRID_MAX}]; the tail is outside the searched family"
        );
    }
    Ok(GpdFit {
        gamma,
        sigma,
        peaks_count: ys.len(),
        total_count: ys.len(),
    })
}

/// Empirical quantile: smallest sample value with at least `q * n` samples
/// at or below it.
fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Fitted tail quantile. `ratio` is `q * n / N_t`, the risk rescaled to the
/// tail; the shape's analytic limit takes over near zero where the general
/// expression loses precision.
fn gpd_threshold(t0: f64, gamma: f64, sigma: f64, ratio: f64) -> f64 {
    if gamma.abs() < 1e-6 {
        t0 + sigma * (1.0 / ratio).ln()
    } else {
        t0 + sigma / gamma * (ratio.powf(-gamma) - 1.0)
    }
}

/// Calibrate a detection threshold on scores from the anomaly-free split.
pub fn calibrate<F: Scalar>(
    scores: &ScoreSeries<F>,
    params: &PotParams,
) -> Result<Calibration, Error> {
    params.validate()?;
    if scores.is_empty() {
        return Err(Error::Calibration("no calibration scores".into()));
    }
    let mut sorted: Vec<f64> = scores.values().iter().map(|&s| s.to_f64()).collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let t0 = empirical_quantile(&sorted, params.init_quantile);
    let split = sorted.partition_point(|&s| s <= t0);
    let excesses: Vec<f64> = sorted[split..].iter().map(|&s| s - t0).collect();
    let mut fit = fit_gpd(&excesses, params.min_excesses)?;
    fit.total_count = scores.len();
    let ratio = params.risk * fit.total_count as f64 / fit.peaks_count as f64;
    let threshold = gpd_threshold(t0, fit.gamma, fit.sigma, ratio);
    if !threshold.is_finite() {
        return Err(Error::NonFinite(format!(
            "calibrated threshold (gamma {}, sigma {})",
            fit.gamma, fit.sigma
        )));
    }
    Ok(Calibration {
        params: *params,
        t0,
        fit,
        threshold,
    })
}

/// Final anomaly threshold at the configured risk level.
pub fn pot_threshold<F: Scalar>(scores: &ScoreSeries<F>, params: &PotParams) -> Result<f64, Error> {
    Ok(calibrate(scores, params)?.threshold)
}

/// Binary labels: strictly above the threshold is anomalous.
pub fn label_anomalies<F: Scalar>(scores: &ScoreSeries<F>, threshold: f64) -> Vec<bool> {
    scores
        .values()
        .iter()
        .map(|&s| s.to_f64() > threshold)
        .collect()
}

/// Export as `t,score,label` rows.
pub fn write_scores_csv<F: Scalar>(
    path: &Path,
    scores: &ScoreSeries<F>,
    labels: &[bool],
) -> Result<(), Error> {
    if labels.len() != scores.len() {
        return Err(Error::shape(
            "write_scores_csv",
            format!("{} scores, {} labels", scores.len(), labels.len()),
        ));
    }
    let mut w = csv::Writer::from_path(path).map_err(from_csv_error)?;
    w.write_record(["t", "score", "label"]).map_err(from_csv_error)?;
    for (t, (&s, &l)) in scores.values().iter().zip(labels).enumerate() {
        w.write_record([
            t.to_string(),
            format!("{}", s.to_f64()),
            (l as u8).to_string(),
        ])
        .map_err(from_csv_error)?;
    }
    w.flush()?;
    Ok(())
}
