//! Graph-side forward pass shared by training and inference.
//!
//! Batches are folded into the column dimension throughout: `nb` same-length
//! series contribute `nb*K` frame columns, the chunked separator runs its
//! recurrences over all (series, chunk) columns at once, and decoding emits
//! one `1 x (nb*P_pad)` row per component. This keeps the tape length
//! independent of the batch size.

use crate::error::Error;
use crate::numerics::{Graph, TensorId};
use crate::scalar::Scalar;

use super::framing::{ola_inverse_counts, ola_scatter_indices};
use super::{BiGruParams, GruCellParams, ModelConfig, ModelParams, SeparatorParams};

pub(crate) struct GruCellIds {
    w: TensorId,
    u_zr: TensorId,
    u_n: TensorId,
    b: TensorId,
}

pub(crate) struct BiGruIds {
    fwd: GruCellIds,
    bwd: GruCellIds,
    proj_w: TensorId,
    proj_b: TensorId,
}

pub(crate) struct DualPathBlockIds {
    intra: BiGruIds,
    inter: BiGruIds,
}

pub(crate) struct SeparatorIds {
    bottleneck_w: TensorId,
    bottleneck_b: TensorId,
    blocks: Vec<DualPathBlockIds>,
    output_w: TensorId,
    output_b: TensorId,
}

/// Graph leaves for every model parameter, in the same canonical order as
/// [`ModelParams::tensors_mut`] so gradients can be paired back up.
pub(crate) struct ParamIds {
    pub u: TensorId,
    pub v: TensorId,
    pub separator: Option<SeparatorIds>,
}

impl ParamIds {
    pub(crate) fn register<F: Scalar>(g: &mut Graph<F>, p: &ModelParams<F>) -> ParamIds {
        let cell = |g: &mut Graph<F>, c: &GruCellParams<F>| GruCellIds {
            w: g.leaf(&c.w),
            u_zr: g.leaf(&c.u_zr),
            u_n: g.leaf(&c.u_n),
            b: g.leaf(&c.b),
        };
        let bigru = |g: &mut Graph<F>, b: &BiGruParams<F>| BiGruIds {
            fwd: cell(g, &b.fwd),
            bwd: cell(g, &b.bwd),
            proj_w: g.leaf(&b.proj_w),
            proj_b: g.leaf(&b.proj_b),
        };
        ParamIds {
            u: g.leaf(&p.u),
            v: g.leaf(&p.v),
            separator: p.separator.as_ref().map(|s: &SeparatorParams<F>| SeparatorIds {
                bottleneck_w: g.leaf(&s.bottleneck_w),
                bottleneck_b: g.leaf(&s.bottleneck_b),
                blocks: s
                    .blocks
                    .iter()
                    .map(|blk| DualPathBlockIds {
                        intra: bigru(g, &blk.intra),
                        inter: bigru(g, &blk.inter),
                    })
                    .collect(),
                output_w: g.leaf(&s.output_w),
                output_b: g.leaf(&s.output_b),
            }),
        }
    }

    pub(crate) fn ordered(&self) -> Vec<TensorId> {
        let mut out = vec![self.u, self.v];
        if let Some(s) = &self.separator {
            out.push(s.bottleneck_w);
            out.push(s.bottleneck_b);
            for blk in &s.blocks {
                for bg in [&blk.intra, &blk.inter] {
                    for c in [&bg.fwd, &bg.bwd] {
                        out.extend([c.w, c.u_zr, c.u_n, c.b]);
                    }
                    out.extend([bg.proj_w, bg.proj_b]);
                }
            }
            out.push(s.output_w);
            out.push(s.output_b);
        }
        out
    }
}

struct ChunkPlan {
    q: usize,
    hop: usize,
    nc: usize,
}

fn chunk_plan(cfg: &ModelConfig, k: usize) -> ChunkPlan {
    let q = cfg.chunk_size;
    let hop = q / 2;
    let nc = if k <= q { 1 } else { (k - q + hop - 1) / hop + 1 };
    ChunkPlan { q, hop, nc }
}

/// Gather map from `nb` padded series of `k` frame columns (plus one shared
/// zero column at index `nb*k`) into step-major chunk layout: target column
/// `qs*(nb*nc) + bi*nc + ci` reads frame `ci*hop + qs` of series `bi`.
fn chunk_gather_indices(nb: usize, k: usize, plan: &ChunkPlan) -> Vec<usize> {
    let zero_col = nb * k;
    let mut idx = Vec::with_capacity(plan.q * nb * plan.nc);
    for qs in 0..plan.q {
        for bi in 0..nb {
            for ci in 0..plan.nc {
                let pos = ci * plan.hop + qs;
                idx.push(if pos < k { bi * k + pos } else { zero_col });
            }
        }
    }
    idx
}

/// Reciprocal of how many chunks cover each frame position, tiled over `nb`.
fn chunk_inverse_counts<F: Scalar>(nb: usize, k: usize, plan: &ChunkPlan) -> Vec<F> {
    let mut counts = vec![0u32; k];
    for ci in 0..plan.nc {
        for qs in 0..plan.q {
            let pos = ci * plan.hop + qs;
            if pos < k {
                counts[pos] += 1;
            }
        }
    }
    let inv: Vec<F> = counts
        .into_iter()
        .map(|c| F::one() / F::from_f64(c as f64))
        .collect();
    let mut out = Vec::with_capacity(nb * k);
    for _ in 0..nb {
        out.extend_from_slice(&inv);
    }
    out
}

/// Column permutation from step-major `qs*(nb*nc) + bi*nc + ci` into
/// chunk-major `ci*(nb*q) + bi*q + qs`, expressed as gather sources.
fn perm_to_chunk_major(nb: usize, nc: usize, q: usize) -> Vec<usize> {
    let mut perm = vec![0usize; nb * nc * q];
    for ci in 0..nc {
        for bi in 0..nb {
            for qs in 0..q {
                perm[ci * nb * q + bi * q + qs] = qs * nb * nc + bi * nc + ci;
            }
        }
    }
    perm
}

fn perm_to_step_major(nb: usize, nc: usize, q: usize) -> Vec<usize> {
    let mut perm = vec![0usize; nb * nc * q];
    for qs in 0..q {
        for bi in 0..nb {
            for ci in 0..nc {
                perm[qs * nb * nc + bi * nc + ci] = ci * nb * q + bi * q + qs;
            }
        }
    }
    perm
}

/// One GRU direction over a step-major sequence. `input` is
/// `I x (t_steps*bc)`; the returned per-step hidden states are `h x bc`,
/// indexed by step regardless of scan direction.
fn gru_direction<F: Scalar>(
    g: &mut Graph<F>,
    cell: &GruCellIds,
    input: TensorId,
    t_steps: usize,
    bc: usize,
    h: usize,
    reverse: bool,
) -> Result<Vec<TensorId>, Error> {
    // Input contributions for all steps at once; only the recurrent half
    // must stay sequential.
    let a_all = g.matmul(cell.w, input)?;
    let a_all = g.add_bias(a_all, cell.b)?;
    let mut hprev = g.constant(vec![F::zero(); h * bc], vec![h, bc]);
    let mut states = vec![hprev; t_steps];
    let steps: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..t_steps).rev())
    } else {
        Box::new(0..t_steps)
    };
    for t in steps {
        let a_t = g.slice(a_all, 1, t * bc, bc)?;
        let a_zr = g.slice(a_t, 0, 0, 2 * h)?;
        let a_n = g.slice(a_t, 0, 2 * h, h)?;
        let rec_zr = g.matmul(cell.u_zr, hprev)?;
        let zr_pre = g.add(a_zr, rec_zr)?;
        let zr = g.sigmoid(zr_pre);
        let z = g.slice(zr, 0, 0, h)?;
        let r = g.slice(zr, 0, h, h)?;
        let rec_n = g.matmul(cell.u_n, hprev)?;
        let gated = g.mul(r, rec_n)?;
        let n_pre = g.add(a_n, gated)?;
        let n = g.tanh(n_pre);
        // h' = (1-z)*n + z*h, written as n + z*(h - n).
        let h_minus_n = g.sub(hprev, n)?;
        let carried = g.mul(z, h_minus_n)?;
        let hnew = g.add(n, carried)?;
        states[t] = hnew;
        hprev = hnew;
    }
    Ok(states)
}

/// Bidirectional GRU plus output projection, preserving the step-major
/// layout of `input` (`I x (t_steps*bc)` in, `O x (t_steps*bc)` out).
fn bigru_pass<F: Scalar>(
    g: &mut Graph<F>,
    ids: &BiGruIds,
    input: TensorId,
    t_steps: usize,
    bc: usize,
    h: usize,
) -> Result<TensorId, Error> {
    let fwd = gru_direction(g, &ids.fwd, input, t_steps, bc, h, false)?;
    let bwd = gru_direction(g, &ids.bwd, input, t_steps, bc, h, true)?;
    let hf = g.concat(&fwd, 1)?;
    let hb = g.concat(&bwd, 1)?;
    let both = g.concat(&[hf, hb], 0)?;
    let proj = g.matmul(ids.proj_w, both)?;
    g.add_bias(proj, ids.proj_b)
}

/// Mask logits through softmax over the three component slots. Input `e` is
/// `N x (nb*k)`; the result is `3 x (N*nb*k)` with row `slot` holding the
/// mask for that component, row-major over `(basis, series, frame)`.
pub(crate) fn separate_on_graph<F: Scalar>(
    g: &mut Graph<F>,
    cfg: &ModelConfig,
    sep: &SeparatorIds,
    e: TensorId,
    nb: usize,
    k: usize,
) -> Result<TensorId, Error> {
    let bm = g.matmul(sep.bottleneck_w, e)?;
    let bm = g.add_bias(bm, sep.bottleneck_b)?;
    let plan = chunk_plan(cfg, k);
    let padded = g.pad_cols(bm, nb * k + 1)?;
    let idx = chunk_gather_indices(nb, k, &plan);
    let mut cur = g.gather_cols(padded, idx.clone())?;
    let h = cfg.hidden_dim;
    for blk in &sep.blocks {
        let intra = bigru_pass(g, &blk.intra, cur, plan.q, nb * plan.nc, h)?;
        let res = g.add(cur, intra)?;
        let cmaj = g.gather_cols(res, perm_to_chunk_major(nb, plan.nc, plan.q))?;
        let inter = bigru_pass(g, &blk.inter, cmaj, plan.nc, nb * plan.q, h)?;
        let res2 = g.add(cmaj, inter)?;
        cur = g.gather_cols(res2, perm_to_step_major(nb, plan.nc, plan.q))?;
    }
    // Mean-merge the overlapping chunks back to one column per frame; the
    // shared zero-pad column soaks up the out-of-range positions.
    let merged = g.scatter_add_cols(cur, idx, nb * k + 1)?;
    let merged = g.slice(merged, 1, 0, nb * k)?;
    let inv_row = chunk_inverse_counts::<F>(nb, k, &plan);
    let f_dim = cfg.bottleneck_dim;
    let mut tiled = Vec::with_capacity(f_dim * nb * k);
    for _ in 0..f_dim {
        tiled.extend_from_slice(&inv_row);
    }
    let inv = g.constant(tiled, vec![f_dim, nb * k]);
    let normed = g.mul(merged, inv)?;
    let logits = g.matmul(sep.output_w, normed)?;
    let logits = g.add_bias(logits, sep.output_b)?;
    // Rows of the 3N logits are slot-major, so a reshape lines the three
    // slots up as rows for the per-cell softmax.
    let resh = g.reshape(logits, vec![3, cfg.basis_count * nb * k])?;
    g.softmax(resh, 0)
}

/// Decode masked encodings back to the padded time domain:
/// `frames = E_c^T V`, then count-normalized overlap-add per series.
pub(crate) fn decode_on_graph<F: Scalar>(
    g: &mut Graph<F>,
    v: TensorId,
    ec: TensorId,
    cfg: &ModelConfig,
    nb: usize,
    k: usize,
) -> Result<TensorId, Error> {
    let (l, s) = (cfg.frame_length, cfg.stride);
    let et = g.transpose(ec)?;
    let frames = g.matmul(et, v)?;
    let flat = g.reshape(frames, vec![1, nb * k * l])?;
    let p_pad = (k - 1) * s + l;
    let summed = g.scatter_add_cols(flat, ola_scatter_indices(nb, k, l, s), nb * p_pad)?;
    let inv = g.constant(ola_inverse_counts::<F>(nb, k, l, s), vec![1, nb * p_pad]);
    g.mul(summed, inv)
}

/// Full decomposition of `nb` same-length series given as concatenated frame
/// columns (`L x (nb*K)`). Returns `(trend, seasonal, remainder)`, each
/// `1 x (nb*P_pad)` with `P_pad = (K-1)*S + L`. With the separator disabled
/// the single decode of `E` is returned as the trend and the other two
/// components are zero.
pub(crate) fn forward_batch<F: Scalar>(
    g: &mut Graph<F>,
    cfg: &ModelConfig,
    ids: &ParamIds,
    x_frames: TensorId,
    nb: usize,
) -> Result<(TensorId, TensorId, TensorId), Error> {
    let (l, cols) = match *g.shape(x_frames) {
        [l, cols] => (l, cols),
        ref sh => {
            return Err(Error::shape(
                "forward",
                format!("expected L x (nb*K) frames, got {sh:?}"),
            ))
        }
    };
    if l != cfg.frame_length || nb == 0 || cols % nb != 0 {
        return Err(Error::shape(
            "forward",
            format!("frame matrix {l}x{cols} does not split into {nb} series of L={}", cfg.frame_length),
        ));
    }
    let k = cols / nb;
    let e = g.matmul(ids.u, x_frames)?;
    match &ids.separator {
        Some(sep) => {
            let masks = separate_on_graph(g, cfg, sep, e, nb, k)?;
            let n = cfg.basis_count;
            let mut comps = [e; 3];
            for (slot, out) in comps.iter_mut().enumerate() {
                let m = g.slice(masks, 0, slot, 1)?;
                let m = g.reshape(m, vec![n, nb * k])?;
                let ec = g.mul(m, e)?;
                *out = decode_on_graph(g, ids.v, ec, cfg, nb, k)?;
            }
            Ok((comps[0], comps[1], comps[2]))
        }
        None => {
            let tau = decode_on_graph(g, ids.v, e, cfg, nb, k)?;
            let p_pad = (k - 1) * cfg.stride + cfg.frame_length;
            let zs = g.constant(vec![F::zero(); nb * p_pad], vec![1, nb * p_pad]);
            let zr = g.constant(vec![F::zero(); nb * p_pad], vec![1, nb * p_pad]);
            Ok((tau, zs, zr))
        }
    }
}
