//! Preprocessing: min-max normalization to [0,1) and segmentation into
//! fixed-length blocks with edge-replication padding.

use log::warn;

use crate::data::TimeSeries;
use crate::error::Error;
use crate::scalar::Scalar;

/// Denominator cushion that keeps normalized values strictly below 1.
pub const NORM_EPS: f64 = 1e-8;

/// Per-channel min and max captured from a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<F> {
    pub mins: Vec<F>,
    pub maxs: Vec<F>,
}

impl<F: Scalar> NormStats<F> {
    /// Capture per-channel extrema. Call this on the training split only;
    /// evaluation data must reuse the stats fitted here.
    pub fn fit(series: &TimeSeries<F>) -> Result<Self, Error> {
        let mut mins = Vec::with_capacity(series.dims());
        let mut maxs = Vec::with_capacity(series.dims());
        for d in 0..series.dims() {
            let ch = series.channel(d);
            if let Some(bad) = ch.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "channel {d} contains {bad} while fitting normalization stats"
                )));
            }
            let mut lo = ch[0];
            let mut hi = ch[0];
            for &v in ch {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            mins.push(lo);
            maxs.push(hi);
        }
        Ok(NormStats { mins, maxs })
    }

    pub fn dims(&self) -> usize {
        self.mins.len()
    }

    /// A channel whose training split was constant carries no scale.
    pub fn is_degenerate(&self, d: usize) -> bool {
        self.maxs[d] <= self.mins[d]
    }

    /// Map a normalized value back to the original scale of channel `d`.
    pub fn denormalize(&self, d: usize, y: F) -> F {
        let eps = F::from_f64(NORM_EPS);
        y * (self.maxs[d] - self.mins[d] + eps) + self.mins[d]
    }
}

/// `x' = (x - min) / (max - min + eps)` per channel. Values outside the
/// fitted [min, max] are clipped into [0, 1 - eps]; a degenerate channel
/// maps to constant zero with a warning.
pub fn normalize<F: Scalar>(
    series: &TimeSeries<F>,
    stats: &NormStats<F>,
) -> Result<TimeSeries<F>, Error> {
    if series.dims() != stats.dims() {
        return Err(Error::Usage(format!(
            "series has {} channels, normalization stats have {}",
            series.dims(),
            stats.dims()
        )));
    }
    let eps = F::from_f64(NORM_EPS);
    let top = F::one() - eps;
    let mut channels: Vec<Vec<F>> = Vec::with_capacity(series.dims());
    for d in 0..series.dims() {
        if stats.is_degenerate(d) {
            warn!("channel {d} is constant in the training split; normalizing to zero");
            channels.push(vec![F::zero(); series.len()]);
            continue;
        }
        let (lo, hi) = (stats.mins[d], stats.maxs[d]);
        let denom = hi - lo + eps;
        channels.push(
            series
                .channel(d)
                .iter()
                .map(|&x| {
                    let y = (x - lo) / denom;
                    if x < lo {
                        F::zero()
                    } else if x > hi {
                        y.min(top)
                    } else {
                        y
                    }
                })
                .collect(),
        );
    }
    let mut out = TimeSeries::from_channels(channels)?;
    if let Some(labels) = series.labels() {
        out.set_labels(labels.to_vec())?;
    }
    Ok(out)
}

/// One training block: `block_length` values from a single channel, the last
/// block right-padded by repeating the channel's final sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<F> {
    pub values: Vec<F>,
    /// Count of real (unpadded) samples at the front of `values`.
    pub valid: usize,
    pub channel: usize,
    /// Offset of the block within the source channel.
    pub start: usize,
}

/// Split every channel into consecutive non-overlapping blocks of length
/// `p`. The final short block is kept, padded, and flagged via `valid` so
/// downstream losses and scores can ignore the padding.
pub fn segment<F: Scalar>(series: &TimeSeries<F>, p: usize) -> Result<Vec<Block<F>>, Error> {
    if p == 0 {
        return Err(Error::Usage("block length must be positive".into()));
    }
    let mut blocks = Vec::new();
    for d in 0..series.dims() {
        let ch = series.channel(d);
        let mut start = 0;
        while start < ch.len() {
            let end = (start + p).min(ch.len());
            let mut values = ch[start..end].to_vec();
            let valid = values.len();
            values.resize(p, ch[ch.len() - 1]);
            blocks.push(Block {
                values,
                valid,
                channel: d,
                start,
            });
            start += p;
        }
    }
    Ok(blocks)
}
