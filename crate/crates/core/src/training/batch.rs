//! Batch assembly and differentiable loss evaluation.
//!
//! Both objectives run the shared forward pass on one tape per batch,
//! mask out padded samples, and leave gradients accumulated on the
//! parameters so the caller decides when to step the optimizer.

use crate::error::Error;
use crate::model::{forward_batch, frame_count, Decomposition, ModelConfig, ModelParams, ParamIds};
use crate::numerics::{Graph, TensorId};
use crate::scalar::Scalar;
use crate::synthgen::CorpusSeries;
use crate::training::prep::NORM_EPS;

/// One pretraining example: a scale-normalized block with aligned component
/// targets. `valid` counts the real samples at the front; the padded tail is
/// excluded from the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompExample<F> {
    pub x: Vec<F>,
    pub trend: Vec<F>,
    pub seasonal: Vec<F>,
    pub remainder: Vec<F>,
    pub valid: usize,
}

/// One fine-tuning example: a normalized block without component targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconExample<F> {
    pub x: Vec<F>,
    pub valid: usize,
}

impl<F: Scalar> From<&DecompExample<F>> for ReconExample<F> {
    fn from(e: &DecompExample<F>) -> Self {
        ReconExample {
            x: e.x.clone(),
            valid: e.valid,
        }
    }
}

/// Turn one synthetic series into pretraining blocks.
///
/// The composed series is min-max scaled to [0,1) and the same affine map is
/// applied to the targets, with the trend absorbing the offset: that keeps
/// `trend + seasonal + remainder == x` exact in the scaled space.
pub fn decomposition_examples<F: Scalar>(
    series: &CorpusSeries<F>,
    block_length: usize,
) -> Result<Vec<DecompExample<F>>, Error> {
    if block_length == 0 {
        return Err(Error::Usage("block length must be positive".into()));
    }
    let x = &series.composed;
    let set = &series.set;
    if set.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "components of length {} do not match series of length {}",
            set.len(),
            x.len()
        )));
    }
    let mut lo = x[0];
    let mut hi = x[0];
    for &v in x {
        if !v.is_finite() {
            return Err(Error::NonFinite("composed series".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let denom = hi - lo + F::from_f64(NORM_EPS);
    let scale = |values: &[F], offset: F| -> Vec<F> {
        values.iter().map(|&v| (v - offset) / denom).collect()
    };
    let xs = scale(x, lo);
    let trend = scale(&set.trend, lo);
    let seasonal = scale(&set.seasonal, F::zero());
    let remainder = scale(&set.remainder, F::zero());

    let mut out = Vec::new();
    let mut start = 0;
    let n = xs.len();
    let pad = |v: &[F], a: usize, b: usize| -> Vec<F> {
        let mut block = v[a..b].to_vec();
        block.resize(block_length, v[n - 1]);
        block
    };
    while start < n {
        let end = (start + block_length).min(n);
        out.push(DecompExample {
            x: pad(&xs, start, end),
            trend: pad(&trend, start, end),
            seasonal: pad(&seasonal, start, end),
            remainder: pad(&remainder, start, end),
            valid: end - start,
        });
        start += block_length;
    }
    Ok(out)
}

/// Sum over channels of the squared-L2 errors of all three components.
pub fn decomposition_loss<F: Scalar>(
    truth: &[Decomposition<F>],
    pred: &[Decomposition<F>],
) -> Result<F, Error> {
    if truth.len() != pred.len() {
        return Err(Error::shape(
            "decomposition_loss",
            format!("{} truth channels vs {} predicted", truth.len(), pred.len()),
        ));
    }
    let mut total = F::zero();
    for (t, p) in truth.iter().zip(pred) {
        for (a, b) in [
            (&t.trend, &p.trend),
            (&t.seasonal, &p.seasonal),
            (&t.remainder, &p.remainder),
        ] {
            total += sse(a, b, "decomposition_loss")?;
        }
    }
    Ok(total)
}

/// Sum over channels of `||x_d - (trend_d + seasonal_d)||^2`. The remainder
/// estimate never enters.
pub fn reconstruction_loss<F: Scalar>(
    x: &[Vec<F>],
    recon: &[Decomposition<F>],
) -> Result<F, Error> {
    if x.len() != recon.len() {
        return Err(Error::shape(
            "reconstruction_loss",
            format!("{} channels vs {} reconstructions", x.len(), recon.len()),
        ));
    }
    let mut total = F::zero();
    for (xd, r) in x.iter().zip(recon) {
        if r.trend.len() != xd.len() || r.seasonal.len() != xd.len() {
            return Err(Error::shape(
                "reconstruction_loss",
                format!(
                    "channel of length {} vs components of lengths {}/{}",
                    xd.len(),
                    r.trend.len(),
                    r.seasonal.len()
                ),
            ));
        }
        for (i, &v) in xd.iter().enumerate() {
            let d = v - (r.trend[i] + r.seasonal[i]);
            total += d * d;
        }
    }
    Ok(total)
}

fn sse<F: Scalar>(a: &[F], b: &[F], op: &'static str) -> Result<F, Error> {
    if a.len() != b.len() {
        return Err(Error::shape(
            op,
            format!("lengths {} vs {}", a.len(), b.len()),
        ));
    }
    let mut s = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    Ok(s)
}

struct BatchGeometry {
    nb: usize,
    p_pad: usize,
}

/// Frame every example into one `L x (nb*K)` constant and set up geometry.
fn assemble<'a, F: Scalar, X>(
    g: &mut Graph<F>,
    cfg: &ModelConfig,
    batch: &'a [X],
    x_of: impl Fn(&'a X) -> &'a [F],
) -> Result<(TensorId, BatchGeometry), Error> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let p = x_of(&batch[0]).len();
    let (l, s) = (cfg.frame_length, cfg.stride);
    if p < l {
        return Err(Error::InvalidInput(format!(
            "block length {p} is shorter than the frame length {l}"
        )));
    }
    let nb = batch.len();
    let k = frame_count(p, l, s);
    let mut data = vec![F::zero(); l * nb * k];
    for (bi, ex) in batch.iter().enumerate() {
        let x = x_of(ex);
        if x.len() != p {
            return Err(Error::shape(
                "batch",
                format!("example {bi} has length {}, batch uses {p}", x.len()),
            ));
        }
        for ki in 0..k {
            for li in 0..l {
                let pos = ki * s + li;
                if pos < p {
                    data[li * (nb * k) + bi * k + ki] = x[pos];
                }
            }
        }
    }
    let id = g.constant(data, vec![l, nb * k]);
    let p_pad = (k - 1) * s + l;
    Ok((id, BatchGeometry { nb, p_pad }))
}

/// Lay per-example series side by side on the padded grid, with a 0/1 mask
/// selecting the real (unpadded) samples.
fn targets_and_mask<'a, F: Scalar, X>(
    batch: &'a [X],
    geom: &BatchGeometry,
    series_of: impl Fn(&'a X) -> &'a [F],
    valid_of: impl Fn(&'a X) -> usize,
) -> (Vec<F>, Vec<F>) {
    let mut values = vec![F::zero(); geom.nb * geom.p_pad];
    let mut mask = vec![F::zero(); geom.nb * geom.p_pad];
    for (bi, ex) in batch.iter().enumerate() {
        let series = series_of(ex);
        let valid = valid_of(ex);
        for (t, &v) in series.iter().enumerate() {
            values[bi * geom.p_pad + t] = v;
            if t < valid {
                mask[bi * geom.p_pad + t] = F::one();
            }
        }
    }
    (values, mask)
}

fn masked_sse_on_graph<F: Scalar>(
    g: &mut Graph<F>,
    pred: TensorId,
    truth: TensorId,
    mask: TensorId,
) -> Result<TensorId, Error> {
    let d = g.sub(pred, truth)?;
    let dm = g.mul(d, mask)?;
    let sq = g.mul(dm, dm)?;
    Ok(g.sum(sq))
}

fn pull_gradients<F: Scalar>(
    g: &Graph<F>,
    ids: &ParamIds,
    params: &mut ModelParams<F>,
) -> Result<(), Error> {
    for (tid, tensor) in ids.ordered().iter().zip(params.tensors_mut()) {
        let grad = g
            .grad(*tid)
            .ok_or_else(|| Error::Usage("a parameter received no gradient".into()))?;
        tensor.accumulate_grad(grad);
    }
    Ok(())
}

fn check_finite<F: Scalar>(loss: F, what: &str) -> Result<F, Error> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!("{what} loss diverged to {loss}")))
    }
}

/// One decomposition batch: forward, per-component masked squared error
/// against the targets averaged over the batch, backward. Returns the loss
/// and accumulates parameter gradients in place.
pub fn decomposition_gradients<F: Scalar>(
    params: &mut ModelParams<F>,
    cfg: &ModelConfig,
    batch: &[DecompExample<F>],
) -> Result<F, Error> {
    cfg.validate()?;
    params.validate_shapes(cfg)?;
    let mut g = Graph::new();
    let ids = ParamIds::register(&mut g, params);
    let (x_id, geom) = assemble(&mut g, cfg, batch, |e| e.x.as_slice())?;
    let (tau, sea, rem) = forward_batch(&mut g, cfg, &ids, x_id, geom.nb)?;
    let shape = vec![1, geom.nb * geom.p_pad];
    let (_, mask) = targets_and_mask(batch, &geom, |e| e.x.as_slice(), |e| e.valid);
    let mask_id = g.constant(mask, shape.clone());
    let mut total: Option<TensorId> = None;
    type Pick<F> = fn(&DecompExample<F>) -> &[F];
    let components: [(TensorId, Pick<F>); 3] = [
        (tau, |e| e.trend.as_slice()),
        (sea, |e| e.seasonal.as_slice()),
        (rem, |e| e.remainder.as_slice()),
    ];
    for (pred, target) in components {
        let (truth, _) = targets_and_mask(batch, &geom, target, |e| e.valid);
        let truth_id = g.constant(truth, shape.clone());
        let term = masked_sse_on_graph(&mut g, pred, truth_id, mask_id)?;
        total = Some(match total {
            Some(acc) => g.add(acc, term)?,
            None => term,
        });
    }
    let loss_id = g.scale(total.unwrap(), F::one() / F::from_f64(geom.nb as f64));
    let loss = check_finite(g.data(loss_id)[0], "decomposition")?;
    g.backward(loss_id)?;
    pull_gradients(&g, &ids, params)?;
    Ok(loss)
}

/// One reconstruction batch: forward, masked squared error of
/// `x - (trend + seasonal)` averaged over the batch, backward. Returns the
/// loss and accumulates parameter gradients in place.
pub fn reconstruction_gradients<F: Scalar>(
    params: &mut ModelParams<F>,
    cfg: &ModelConfig,
    batch: &[ReconExample<F>],
) -> Result<F, Error> {
    cfg.validate()?;
    params.validate_shapes(cfg)?;
    let mut g = Graph::new();
    let ids = ParamIds::register(&mut g, params);
    let (x_id, geom) = assemble(&mut g, cfg, batch, |e| e.x.as_slice())?;
    let (tau, sea, _rem) = forward_batch(&mut g, cfg, &ids, x_id, geom.nb)?;
    let shape = vec![1, geom.nb * geom.p_pad];
    let (truth, mask) = targets_and_mask(batch, &geom, |e| e.x.as_slice(), |e| e.valid);
    let truth_id = g.constant(truth, shape.clone());
    let mask_id = g.constant(mask, shape);
    let recon = g.add(tau, sea)?;
    let term = masked_sse_on_graph(&mut g, recon, truth_id, mask_id)?;
    let loss_id = g.scale(term, F::one() / F::from_f64(geom.nb as f64));
    let loss = check_finite(g.data(loss_id)[0], "reconstruction")?;
    g.backward(loss_id)?;
    pull_gradients(&g, &ids, params)?;
    Ok(loss)
}
