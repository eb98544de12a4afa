//! Point-adjusted detection metrics.
//!
//! The adjustment credits a whole true anomaly segment once any point inside
//! it is predicted, matching the common evaluation convention for
//! segment-shaped anomalies. Counts and metrics are pointwise after the
//! adjustment.

use crate::error::Error;

/// Precision/recall/F1 with the underlying confusion counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    /// Set when any metric had a zero denominator and was reported as 0.
    pub undefined: bool,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "precision,recall,f1,tp,fp,tn,fn,undefined";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.precision,
            self.recall,
            self.f1,
            self.true_positives,
            self.false_positives,
            self.true_negatives,
            self.false_negatives,
            u8::from(self.undefined)
        )
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "P {:.4}  R {:.4}  F1 {:.4}  (tp {}, fp {}, tn {}, fn {}{})",
            self.precision,
            self.recall,
            self.f1,
            self.true_positives,
            self.false_positives,
            self.true_negatives,
            self.false_negatives,
            if self.undefined { ", undefined" } else { "" }
        )
    }
}

/// Maximal runs of `true`, as inclusive `(start, end)` index pairs.
pub fn segments(truth: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut t = 0;
    while t < truth.len() {
        if truth[t] {
            let start = t;
            while t + 1 < truth.len() && truth[t + 1] {
                t += 1;
            }
            runs.push((start, t));
        }
        t += 1;
    }
    runs
}

/// Fill every true segment that contains at least one predicted point.
/// Predictions outside true segments are untouched.
pub fn point_adjust(pred: &[bool], truth: &[bool]) -> Result<Vec<bool>, Error> {
    if pred.len() != truth.len() {
        return Err(Error::shape(
            "point_adjust",
            format!("{} predictions, {} truth labels", pred.len(), truth.len()),
        ));
    }
    let mut adjusted = pred.to_vec();
    for (start, end) in segments(truth) {
        if pred[start..=end].iter().any(|&p| p) {
            adjusted[start..=end].fill(true);
        }
    }
    Ok(adjusted)
}

/// Pointwise confusion counts and derived metrics; `adjusted` applies
/// [`point_adjust`] first.
pub fn compute_metrics(
    pred: &[bool],
    truth: &[bool],
    adjusted: bool,
) -> Result<MetricsReport, Error> {
    if pred.len() != truth.len() {
        return Err(Error::shape(
            "compute_metrics",
            format!("{} predictions, {} truth labels", pred.len(), truth.len()),
        ));
    }
    let owned;
    let pred = if adjusted {
        owned = point_adjust(pred, truth)?;
        owned.as_slice()
    } else {
        pred
    };
    let mut tp = 0;
    let mut fp = 0;
    let mut tn = 0;
    let mut fn_ = 0;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut undefined = false;
    let mut ratio = |num: usize, den: usize| {
        if den == 0 {
            undefined = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined = true;
        0.0
    };
    Ok(MetricsReport {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        undefined,
    })
}

/// Metrics over several independently adjusted entities: the pooled report
/// counts the concatenation, and each entity also gets its own row.
pub fn pooled_metrics(
    entities: &[(&[bool], &[bool])],
    adjusted: bool,
) -> Result<(MetricsReport, Vec<MetricsReport>), Error> {
    let mut pooled_pred = Vec::new();
    let mut pooled_truth = Vec::new();
    let mut per_entity = Vec::with_capacity(entities.len());
    for (pred, truth) in entities {
        per_entity.push(compute_metrics(pred, truth, adjusted)?);
        let pred = if adjusted {
            point_adjust(pred, truth)?
        } else {
            pred.to_vec()
        };
        pooled_pred.extend(pred);
        pooled_truth.extend_from_slice(truth);
    }
    let pooled = compute_metrics(&pooled_pred, &pooled_truth, false)?;
    Ok((pooled, per_entity))
}
