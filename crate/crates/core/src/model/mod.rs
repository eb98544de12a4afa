//! Mask-based encoder/separator/decoder that splits a framed series into
//! trend, seasonal, and remainder components.
//!
//! A series is framed into overlapping length-L windows, linearly encoded
//! against N learned bases, and a dual-path recurrent separator emits three
//! masks forming a simplex over the component slots. Masked encodings are
//! decoded by one shared basis matrix and overlap-added back to the time
//! domain, so the three reconstructions always sum to the unmasked decode.

mod checkpoint;
mod forward;
mod framing;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use framing::{frame, frame_count, overlap_add};
pub(crate) use forward::{forward_batch, ParamIds};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::numerics::{Graph, Tensor};
use crate::scalar::Scalar;

/// Network geometry. The default is the small configuration used by the fast
/// test suite; [`ModelConfig::paper_scale`] matches the published setup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Frame length L.
    pub frame_length: usize,
    /// Frame stride S, 1 <= S <= L.
    pub stride: usize,
    /// Encoder/decoder basis count N.
    pub basis_count: usize,
    /// Separator bottleneck width F.
    pub bottleneck_dim: usize,
    /// Recurrent hidden size H per direction.
    pub hidden_dim: usize,
    /// Number of dual-path blocks.
    pub block_count: usize,
    /// Frames per separator chunk; chunks overlap by half.
    pub chunk_size: usize,
    /// When false the separator is skipped and the model reduces to a plain
    /// encode/decode reconstructor.
    pub separator_enabled: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frame_length: 2,
            stride: 1,
            basis_count: 32,
            bottleneck_dim: 16,
            hidden_dim: 32,
            block_count: 2,
            chunk_size: 16,
            separator_enabled: true,
        }
    }
}

impl ModelConfig {
    /// Configuration at the scale of the published experiments.
    pub fn paper_scale() -> Self {
        ModelConfig {
            frame_length: 2,
            stride: 1,
            basis_count: 256,
            bottleneck_dim: 64,
            hidden_dim: 128,
            block_count: 6,
            chunk_size: 50,
            separator_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let field = |field: &str, detail: String| Error::Config {
            field: field.to_string(),
            detail,
        };
        if self.frame_length == 0 {
            return Err(field("frame_length", "must be at least 1".into()));
        }
        if self.stride == 0 || self.stride > self.frame_length {
            return Err(field(
                "stride",
                format!("must satisfy 1 <= S <= L, got S={} L={}", self.stride, self.frame_length),
            ));
        }
        for (name, v) in [
            ("basis_count", self.basis_count),
            ("bottleneck_dim", self.bottleneck_dim),
            ("hidden_dim", self.hidden_dim),
            ("block_count", self.block_count),
        ] {
            if v == 0 {
                return Err(field(name, "must be at least 1".into()));
            }
        }
        if self.chunk_size < 2 || self.chunk_size % 2 != 0 {
            return Err(field(
                "chunk_size",
                format!("must be even and at least 2 for half-overlap chunking, got {}", self.chunk_size),
            ));
        }
        Ok(())
    }
}

/// One GRU cell. Gate rows are stacked update, reset, candidate; the reset
/// gate multiplies only the recurrent half of the candidate.
#[derive(Debug, Clone)]
pub struct GruCellParams<F> {
    /// Input weights, `3H x I`.
    pub w: Tensor<F>,
    /// Recurrent weights for the update and reset gates, `2H x H`.
    pub u_zr: Tensor<F>,
    /// Recurrent weights for the candidate, `H x H`.
    pub u_n: Tensor<F>,
    /// Gate biases, length `3H`.
    pub b: Tensor<F>,
}

/// Bidirectional GRU with a linear projection of the concatenated states
/// back to the block width.
#[derive(Debug, Clone)]
pub struct BiGruParams<F> {
    pub fwd: GruCellParams<F>,
    pub bwd: GruCellParams<F>,
    /// `F x 2H` projection of the two concatenated directions.
    pub proj_w: Tensor<F>,
    /// Projection bias, length `F`.
    pub proj_b: Tensor<F>,
}

/// One dual-path block: an intra-chunk pass followed by an inter-chunk pass,
/// each residual.
#[derive(Debug, Clone)]
pub struct DualPathBlockParams<F> {
    pub intra: BiGruParams<F>,
    pub inter: BiGruParams<F>,
}

#[derive(Debug, Clone)]
pub struct SeparatorParams<F> {
    /// `F x N` bottleneck.
    pub bottleneck_w: Tensor<F>,
    /// Bottleneck bias, length `F`.
    pub bottleneck_b: Tensor<F>,
    pub blocks: Vec<DualPathBlockParams<F>>,
    /// `3N x F` mask-logit projection.
    pub output_w: Tensor<F>,
    /// Logit bias, length `3N`.
    pub output_b: Tensor<F>,
}

/// All trainable weights. One single `v` serves the three component decoders.
#[derive(Debug, Clone)]
pub struct ModelParams<F> {
    /// Encoder bases, `N x L`.
    pub u: Tensor<F>,
    /// Decoder bases, `N x L`, shared across the three outputs.
    pub v: Tensor<F>,
    /// Absent when the config disables the separator.
    pub separator: Option<SeparatorParams<F>>,
}

/// The three separator masks, each `N x K` on the unit simplex per cell.
#[derive(Debug, Clone)]
pub struct MaskSet<F> {
    pub trend: Tensor<F>,
    pub seasonal: Tensor<F>,
    pub remainder: Tensor<F>,
}

/// Component estimates in the time domain, each as long as the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<F> {
    pub trend: Vec<F>,
    pub seasonal: Vec<F>,
    pub remainder: Vec<F>,
}

impl<F: Scalar> ModelParams<F> {
    /// Walk the canonical parameter layout, building each tensor through
    /// `make(name, shape, fan_in)`. `fan_in` is `None` for bias vectors.
    /// Everything that names, orders, initializes, or loads parameters runs
    /// through this single definition of the structure.
    fn construct<M>(config: &ModelConfig, make: &mut M) -> Result<Self, Error>
    where
        M: FnMut(String, Vec<usize>, Option<usize>) -> Result<Tensor<F>, Error>,
    {
        config.validate()?;
        let (n, l) = (config.basis_count, config.frame_length);
        let (f, h) = (config.bottleneck_dim, config.hidden_dim);
        let u = make("U".into(), vec![n, l], Some(l))?;
        let v = make("V".into(), vec![n, l], Some(n))?;
        let cell = |prefix: &str, make: &mut M| -> Result<GruCellParams<F>, Error> {
            Ok(GruCellParams {
                w: make(format!("{prefix}.w"), vec![3 * h, f], Some(f))?,
                u_zr: make(format!("{prefix}.u_zr"), vec![2 * h, h], Some(h))?,
                u_n: make(format!("{prefix}.u_n"), vec![h, h], Some(h))?,
                b: make(format!("{prefix}.b"), vec![3 * h], None)?,
            })
        };
        let bigru = |prefix: &str, make: &mut M| -> Result<BiGruParams<F>, Error> {
            Ok(BiGruParams {
                fwd: cell(&format!("{prefix}.fwd"), make)?,
                bwd: cell(&format!("{prefix}.bwd"), make)?,
                proj_w: make(format!("{prefix}.proj.w"), vec![f, 2 * h], Some(2 * h))?,
                proj_b: make(format!("{prefix}.proj.b"), vec![f], None)?,
            })
        };
        let separator = if config.separator_enabled {
            let bottleneck_w = make("sep.bottleneck.w".into(), vec![f, n], Some(n))?;
            let bottleneck_b = make("sep.bottleneck.b".into(), vec![f], None)?;
            let mut blocks = Vec::with_capacity(config.block_count);
            for i in 0..config.block_count {
                blocks.push(DualPathBlockParams {
                    intra: bigru(&format!("sep.block{i}.intra"), make)?,
                    inter: bigru(&format!("sep.block{i}.inter"), make)?,
                });
            }
            let output_w = make("sep.out.w".into(), vec![3 * n, f], Some(f))?;
            let output_b = make("sep.out.b".into(), vec![3 * n], None)?;
            Some(SeparatorParams {
                bottleneck_w,
                bottleneck_b,
                blocks,
                output_w,
                output_b,
            })
        } else {
            None
        };
        Ok(ModelParams { u, v, separator })
    }

    /// Fresh parameters: matrices uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)),
    /// biases zero, all marked trainable. Draw order is the canonical
    /// parameter order, so a fixed seed reproduces identical weights.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self, Error> {
        Self::construct(config, &mut |_, shape, fan| {
            Ok(match fan {
                Some(fan_in) => Tensor::uniform_init(shape[0], shape[1], fan_in, rng),
                None => Tensor::zeros(shape),
            }
            .with_grad())
        })
    }

    /// Expected `(name, shape)` pairs for a config, in canonical order.
    pub(crate) fn layout(config: &ModelConfig) -> Result<Vec<(String, Vec<usize>)>, Error> {
        let mut out = Vec::new();
        Self::construct(config, &mut |name, shape, _| {
            out.push((name, shape.clone()));
            Ok(Tensor::zeros(shape))
        })?;
        Ok(out)
    }

    /// Assemble from named tensors, consuming `take(name, shape)` in
    /// canonical order. Shapes are the caller's responsibility.
    pub(crate) fn from_named<M>(config: &ModelConfig, take: &mut M) -> Result<Self, Error>
    where
        M: FnMut(&str, &[usize]) -> Result<Tensor<F>, Error>,
    {
        Self::construct(config, &mut |name, shape, _| take(&name, &shape))
    }

    /// Tensors in canonical order, paired with their checkpoint names.
    pub fn named(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out: Vec<(String, &Tensor<F>)> =
            vec![("U".into(), &self.u), ("V".into(), &self.v)];
        if let Some(s) = &self.separator {
            out.push(("sep.bottleneck.w".into(), &s.bottleneck_w));
            out.push(("sep.bottleneck.b".into(), &s.bottleneck_b));
            for (i, blk) in s.blocks.iter().enumerate() {
                for (half, bg) in [("intra", &blk.intra), ("inter", &blk.inter)] {
                    let p = format!("sep.block{i}.{half}");
                    for (dir, c) in [("fwd", &bg.fwd), ("bwd", &bg.bwd)] {
                        out.push((format!("{p}.{dir}.w"), &c.w));
                        out.push((format!("{p}.{dir}.u_zr"), &c.u_zr));
                        out.push((format!("{p}.{dir}.u_n"), &c.u_n));
                        out.push((format!("{p}.{dir}.b"), &c.b));
                    }
                    out.push((format!("{p}.proj.w"), &bg.proj_w));
                    out.push((format!("{p}.proj.b"), &bg.proj_b));
                }
            }
            out.push(("sep.out.w".into(), &s.output_w));
            out.push(("sep.out.b".into(), &s.output_b));
        }
        out
    }

    /// Mutable tensors in the same canonical order as [`Self::named`];
    /// the optimizer relies on this order staying fixed.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = vec![&mut self.u, &mut self.v];
        if let Some(s) = &mut self.separator {
            out.push(&mut s.bottleneck_w);
            out.push(&mut s.bottleneck_b);
            for blk in &mut s.blocks {
                for bg in [&mut blk.intra, &mut blk.inter] {
                    for c in [&mut bg.fwd, &mut bg.bwd] {
                        out.push(&mut c.w);
                        out.push(&mut c.u_zr);
                        out.push(&mut c.u_n);
                        out.push(&mut c.b);
                    }
                    out.push(&mut bg.proj_w);
                    out.push(&mut bg.proj_b);
                }
            }
            out.push(&mut s.output_w);
            out.push(&mut s.output_b);
        }
        out
    }

    /// Total scalar parameter count.
    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Check that the stored tensor shapes match what `config` implies.
    pub fn validate_shapes(&self, config: &ModelConfig) -> Result<(), Error> {
        let expect = Self::layout(config)?;
        let have = self.named();
        if expect.len() != have.len() {
            return Err(Error::Usage(format!(
                "parameter set has {} tensors, config implies {}",
                have.len(),
                expect.len()
            )));
        }
        for ((en, es), (hn, ht)) in expect.iter().zip(&have) {
            if en != hn || es != ht.shape() {
                return Err(Error::Usage(format!(
                    "parameter `{hn}` {:?} does not match config layout `{en}` {es:?}",
                    ht.shape()
                )));
            }
        }
        Ok(())
    }
}

/// `E = U X`: linear encoding of framed series columns.
pub fn encode<F: Scalar>(frames: &Tensor<F>, u: &Tensor<F>) -> Result<Tensor<F>, Error> {
    let mut g = Graph::new();
    let uid = g.constant(u.data().to_vec(), u.shape().to_vec());
    let xid = g.constant(frames.data().to_vec(), frames.shape().to_vec());
    let e = g.matmul(uid, xid)?;
    Ok(g.extract(e))
}

/// Run the separator on an encoding, returning the three masks.
pub fn separate<F: Scalar>(
    e: &Tensor<F>,
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> Result<MaskSet<F>, Error> {
    config.validate()?;
    params.validate_shapes(config)?;
    let (n, k) = match *e.shape() {
        [n, k] => (n, k),
        ref sh => {
            return Err(Error::shape(
                "separate",
                format!("expected N x K encoding, got {sh:?}"),
            ))
        }
    };
    if n != config.basis_count {
        return Err(Error::shape(
            "separate",
            format!("encoding has {n} bases, config has {}", config.basis_count),
        ));
    }
    let mut g = Graph::new();
    let ids = ParamIds::register(&mut g, params);
    let sep = ids
        .separator
        .as_ref()
        .ok_or_else(|| Error::Usage("separator weights absent: separator_enabled is false".into()))?;
    let eid = g.constant(e.data().to_vec(), e.shape().to_vec());
    let masks = forward::separate_on_graph(&mut g, config, sep, eid, 1, k)?;
    let mut pull = |slot: usize| -> Result<Tensor<F>, Error> {
        let m = g.slice(masks, 0, slot, 1)?;
        let m = g.reshape(m, vec![n, k])?;
        Ok(g.extract(m))
    };
    Ok(MaskSet {
        trend: pull(0)?,
        seasonal: pull(1)?,
        remainder: pull(2)?,
    })
}

/// Point-wise products of the masks with the encoding. The three outputs sum
/// back to `e` because the masks form a simplex.
pub fn apply_masks<F: Scalar>(
    e: &Tensor<F>,
    masks: &MaskSet<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>), Error> {
    let product = |m: &Tensor<F>| -> Result<Tensor<F>, Error> {
        if m.shape() != e.shape() {
            return Err(Error::shape(
                "apply_masks",
                format!("mask {:?} vs encoding {:?}", m.shape(), e.shape()),
            ));
        }
        let data = m
            .data()
            .iter()
            .zip(e.data())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::new(data, e.shape().to_vec()))
    };
    Ok((
        product(&masks.trend)?,
        product(&masks.seasonal)?,
        product(&masks.remainder)?,
    ))
}

/// Decode one masked encoding to a length-`p` series: frames `E_c^T v`,
/// then count-normalized overlap-add.
pub fn decode<F: Scalar>(
    e_c: &Tensor<F>,
    v: &Tensor<F>,
    config: &ModelConfig,
    p: usize,
) -> Result<Vec<F>, Error> {
    config.validate()?;
    let k = match *e_c.shape() {
        [_, k] => k,
        ref sh => {
            return Err(Error::shape(
                "decode",
                format!("expected N x K encoding, got {sh:?}"),
            ))
        }
    };
    if p < config.frame_length || frame_count(p, config.frame_length, config.stride) != k {
        return Err(Error::shape(
            "decode",
            format!("{k} frames do not correspond to a length-{p} series"),
        ));
    }
    let mut g = Graph::new();
    let vid = g.constant(v.data().to_vec(), v.shape().to_vec());
    let eid = g.constant(e_c.data().to_vec(), e_c.shape().to_vec());
    let out = forward::decode_on_graph(&mut g, vid, eid, config, 1, k)?;
    Ok(g.data(out)[..p].to_vec())
}

/// Frame, encode, separate, mask, and decode one series. With the separator
/// disabled the unmasked decode is returned as the trend and the seasonal
/// and remainder parts are zero.
pub fn decompose<F: Scalar>(
    x: &[F],
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> Result<Decomposition<F>, Error> {
    config.validate()?;
    params.validate_shapes(config)?;
    let frames = frame(x, config.frame_length, config.stride)?;
    let p = x.len();
    let mut g = Graph::new();
    let ids = ParamIds::register(&mut g, params);
    let xid = g.constant(frames.data().to_vec(), frames.shape().to_vec());
    let (t, s, r) = forward_batch(&mut g, config, &ids, xid, 1)?;
    Ok(Decomposition {
        trend: g.data(t)[..p].to_vec(),
        seasonal: g.data(s)[..p].to_vec(),
        remainder: g.data(r)[..p].to_vec(),
    })
}
