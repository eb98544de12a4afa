//! Anomaly injection. Each kind mutates exactly one component; the mask is
//! then set exactly where a component value changed.

use std::ops::Range;

use rand::Rng;

use crate::error::Error;
use crate::scalar::Scalar;

use super::{AnomalyKind, ComponentSet};

/// Magnitude ranges, in local standard deviations (point spikes) or
/// multiples of the slope base (trend shifts).
const GLOBAL_K: (f64, f64) = (6.0, 10.0);
const CONTEXTUAL_K: (f64, f64) = (3.0, 5.0);
const TREND_K: (f64, f64) = (2.0, 5.0);
/// Safety factor on spike magnitudes so the extremeness guarantee holds
/// strictly after the spike itself inflates the spread.
const SPIKE_MARGIN: f64 = 1.05;

/// Context the injector needs beyond the components themselves.
#[derive(Debug, Clone, Copy)]
pub struct InjectContext<F> {
    /// Scale base for trend slope shifts; generation uses |beta1| plus a
    /// 2/T floor so it is positive for every trend mode.
    pub slope_base: F,
    /// Dominant seasonal period, used for neighborhood and filter widths.
    pub period_hint: usize,
}

/// One injected event, recorded for reproducibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnomalyEvent {
    pub kind: AnomalyKind,
    pub start: usize,
    pub end: usize,
}

/// Inject one event of `kind` over `window` (half-open). Point kinds hit
/// the single timestamp `window.start`. Returns a new set whose mask is
/// true exactly where some component now differs from the input.
pub fn inject_anomalies<F: Scalar, R: Rng + ?Sized>(
    set: &ComponentSet<F>,
    kind: AnomalyKind,
    window: Range<usize>,
    ctx: &InjectContext<F>,
    rng: &mut R,
) -> Result<ComponentSet<F>, Error> {
    let n = set.len();
    if window.start >= window.end || window.end > n {
        return Err(Error::InvalidInput(format!(
            "anomaly window {}..{} out of bounds for length {n}",
            window.start, window.end
        )));
    }
    let mut out = set.clone();
    match kind {
        AnomalyKind::Global => {
            let k = rng.gen_range(GLOBAL_K.0..=GLOBAL_K.1);
            let positive = rng.gen_bool(0.5);
            add_point_spike(&mut out.remainder, window.start, 0..n, k, positive);
        }
        AnomalyKind::Contextual => {
            let k = rng.gen_range(CONTEXTUAL_K.0..=CONTEXTUAL_K.1);
            let positive = rng.gen_bool(0.5);
            let t = window.start;
            let hw = ctx.period_hint.clamp(10, 50);
            let lo = t.saturating_sub(hw);
            let hi = (t + hw + 1).min(n);
            add_point_spike(&mut out.remainder, t, lo..hi, k, positive);
        }
        AnomalyKind::Shapelet => {
            replace_shapelet(&mut out.seasonal, window.clone(), ctx.period_hint, rng);
        }
        AnomalyKind::Seasonal => {
            // Doubling reads source samples past the window end; fall back
            // to halving when they would run off the series.
            let can_double = window.start + 2 * (window.len() - 1) < n;
            let freq_scale = if can_double && rng.gen_bool(0.5) { 2.0 } else { 0.5 };
            out.seasonal = warp_seasonal(&set.seasonal, window.clone(), freq_scale);
        }
        AnomalyKind::Trend => {
            let k = rng.gen_range(TREND_K.0..=TREND_K.1);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let delta = ctx.slope_base * F::from_f64(sign * k);
            shift_trend_slope(&mut out.trend, window.clone(), delta);
        }
    }
    for t in 0..n {
        if out.trend[t] != set.trend[t]
            || out.seasonal[t] != set.seasonal[t]
            || out.remainder[t] != set.remainder[t]
        {
            out.anomaly_mask[t] = true;
        }
    }
    Ok(out)
}

/// Slope shift: tau[t] += delta * (t - start + 1) inside the window. The
/// first difference inside the window shifts by exactly delta; the level
/// outside the window is untouched (so the difference one past the end
/// necessarily jumps back).
pub(crate) fn shift_trend_slope<F: Scalar>(trend: &mut [F], window: Range<usize>, delta: F) {
    for (i, t) in window.enumerate() {
        trend[t] += delta * F::from_f64((i + 1) as f64);
    }
}

/// Time-warp the seasonal inside the window: out[t] interpolates the
/// pre-warp values at start + freq_scale * (t - start), so the local
/// oscillation frequency is multiplied by freq_scale.
pub(crate) fn warp_seasonal<F: Scalar>(
    s: &[F],
    window: Range<usize>,
    freq_scale: f64,
) -> Vec<F> {
    let start = window.start;
    let last = s.len() - 1;
    let mut out = s.to_vec();
    for t in window {
        let src = start as f64 + freq_scale * (t - start) as f64;
        let i0 = (src.floor() as usize).min(last);
        let i1 = (i0 + 1).min(last);
        let frac = F::from_f64(src - i0 as f64);
        out[t] = s[i0] + (s[i1] - s[i0]) * frac;
    }
    out
}

/// Replace the window with low-pass-filtered noise matched to the window's
/// own location and spread, so the shape changes but not the level.
fn replace_shapelet<F: Scalar, R: Rng + ?Sized>(
    s: &mut [F],
    window: Range<usize>,
    period_hint: usize,
    rng: &mut R,
) {
    let w = window.len();
    let width = (period_hint / 4).clamp(3, (w / 2).max(3));
    let noise: Vec<F> = (0..w).map(|_| F::standard_normal(rng)).collect();
    let smooth = moving_average(&noise, width);

    let (seg_mean, seg_var) = moments(&s[window.clone()]);
    let (_, all_var) = moments(s);
    let target_std = seg_var
        .sqrt()
        .max(all_var.sqrt() * F::from_f64(0.3))
        .max(F::from_f64(0.05));
    let (n_mean, n_var) = moments(&smooth);
    let n_std = n_var.sqrt();
    if !(n_std > F::zero()) {
        return;
    }
    for (i, t) in window.enumerate() {
        s[t] = seg_mean + (smooth[i] - n_mean) / n_std * target_std;
    }
}

/// Centered moving average with edge clamping, same length as the input.
fn moving_average<F: Scalar>(x: &[F], width: usize) -> Vec<F> {
    let n = x.len();
    let h = width / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(n);
            let count = F::from_f64((hi - lo) as f64);
            x[lo..hi].iter().fold(F::zero(), |acc, &v| acc + v) / count
        })
        .collect()
}

fn moments<F: Scalar>(x: &[F]) -> (F, F) {
    let n = F::from_f64(x.len() as f64);
    let mean = x.iter().fold(F::zero(), |acc, &v| acc + v) / n;
    let var = x
        .iter()
        .fold(F::zero(), |acc, &v| acc + (v - mean) * (v - mean))
        / n;
    (mean, var)
}

/// Add a spike at index `t` sized so that afterwards the point sits at
/// least `k` post-injection standard deviations from the post-injection
/// median of `r[stats_range]`. The magnitude solves the exact quadratic in
/// the spike size with a 5% margin, using an order-statistic bound on how
/// far the median can move.
pub(crate) fn add_point_spike<F: Scalar>(
    r: &mut [F],
    t: usize,
    stats_range: Range<usize>,
    k: f64,
    positive: bool,
) {
    let slice: Vec<f64> = r[stats_range.clone()].iter().map(|&v| v.to_f64()).collect();
    let t_local = t - stats_range.start;
    let spike = if positive {
        solve_spike(&slice, t_local, k)
    } else {
        let negated: Vec<f64> = slice.iter().map(|v| -v).collect();
        -solve_spike(&negated, t_local, k)
    };
    r[t] += F::from_f64(spike);
}

/// Smallest c > 0 with (x_t + c) - median_after >= margin * k * std_after,
/// for a positive spike. `median_after` is bounded by the order statistic
/// one rank above the current median; `std_after` is exact in c.
fn solve_spike(x: &[f64], t: usize, k: f64) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite remainder values"));
    let median_up = sorted[(sorted.len() / 2 + 1).min(sorted.len() - 1)];

    // Post-injection variance: var + c^2 (n-1)/n^2 + 2 c (x_t - mean)/n.
    // Requiring (c + d)^2 >= M * var_after with d = x_t - median_up and
    // M = (margin k)^2 gives a quadratic a c^2 + b c + c0 >= 0.
    let mut m_factor = (SPIKE_MARGIN * k).powi(2);
    // The spike inflates the spread it is measured against; for short
    // series the requested k may be unreachable, so cap it.
    let m_cap = 0.8 * n * n / (n - 1.0);
    if m_factor > m_cap {
        m_factor = m_cap;
    }
    let d = x[t] - median_up;
    let a = 1.0 - m_factor * (n - 1.0) / (n * n);
    let b = 2.0 * (d - m_factor * (x[t] - mean) / n);
    let c0 = d * d - m_factor * var;
    let disc = b * b - 4.0 * a * c0;
    let root = if disc > 0.0 {
        (-b + disc.sqrt()) / (2.0 * a)
    } else {
        0.0
    };
    root.max(0.0) + 0.05 * k * var.sqrt().max(1e-12)
}
