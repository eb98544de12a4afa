use crate::error::Error;
use crate::scalar::Scalar;

use super::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

/// How a node was produced. `Leaf` nodes carry no backward rule; an op is
/// only recorded when gradient has to flow through it.
#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    Matmul { a: TensorId, b: TensorId },
    Transpose { a: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { a: TensorId, c: F },
    AddBias { a: TensorId, bias: TensorId },
    Concat { parts: Vec<TensorId>, axis: usize },
    Slice { a: TensorId, axis: usize, start: usize },
    Reshape { a: TensorId },
    PadCols { a: TensorId },
    GatherCols { a: TensorId, indices: Vec<usize> },
    ScatterAddCols { a: TensorId, indices: Vec<usize> },
    Sum { a: TensorId },
    Mean { a: TensorId },
    Sigmoid { a: TensorId },
    Tanh { a: TensorId },
    Relu { a: TensorId },
    Softmax { a: TensorId, axis: usize },
}

struct Node<F> {
    data: Vec<F>,
    shape: Vec<usize>,
    op: Op<F>,
    needs_grad: bool,
}

/// Define-by-run tape. Nodes are appended in execution order, so reverse
/// id order is a reverse topological order: every node is visited after
/// all of its consumers.
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
    recorded_ops: usize,
    consumed: bool,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            recorded_ops: 0,
            consumed: false,
        }
    }

    /// Insert a tensor as a leaf, snapshotting its data.
    pub fn leaf(&mut self, t: &Tensor<F>) -> TensorId {
        self.push(
            t.data().to_vec(),
            t.shape().to_vec(),
            Op::Leaf,
            t.requires_grad(),
        )
    }

    /// Insert raw data as a constant (no gradient).
    pub fn constant(&mut self, data: Vec<F>, shape: Vec<usize>) -> TensorId {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "constant shape/data mismatch");
        self.push(data, shape, Op::Leaf, false)
    }

    pub fn data(&self, id: TensorId) -> &[F] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn numel(&self, id: TensorId) -> usize {
        self.nodes[id.0].data.len()
    }

    /// Gradient of the last `backward` call w.r.t. `id`, if any flowed.
    pub fn grad(&self, id: TensorId) -> Option<&[F]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Copy a node out into a standalone tensor.
    pub fn extract(&self, id: TensorId) -> Tensor<F> {
        Tensor::new(self.data(id).to_vec(), self.shape(id).to_vec())
    }

    /// Number of differentiable operations recorded so far.
    pub fn recorded_ops(&self) -> usize {
        self.recorded_ops
    }

    fn push(&mut self, data: Vec<F>, shape: Vec<usize>, op: Op<F>, needs_grad: bool) -> TensorId {
        assert!(
            !self.consumed,
            "graph already consumed by backward; build a new one"
        );
        // Ops feeding no gradient are stored as leaves: nothing to replay.
        let op = if needs_grad { op } else { Op::Leaf };
        if needs_grad && !matches!(op, Op::Leaf) {
            self.recorded_ops += 1;
        }
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            data,
            shape,
            op,
            needs_grad,
        });
        id
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn dims2(&self, id: TensorId, op: &'static str) -> Result<(usize, usize), Error> {
        match *self.nodes[id.0].shape {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::shape(op, format!("expected 2-d operand, got {s:?}"))),
        }
    }

    // ── Forward ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, Error> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("inner dims differ: [{m}, {k}] x [{k2}, {n}]"),
            ));
        }
        let out = matmul_nn(self.data(a), self.data(b), m, k, n);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, vec![m, n], Op::Matmul { a, b }, needs))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId, Error> {
        let (r, c) = self.dims2(a, "transpose")?;
        let out = transpose(self.data(a), r, c);
        let needs = self.needs(a);
        Ok(self.push(out, vec![c, r], Op::Transpose { a }, needs))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, Error> {
        self.zip_elementwise(a, b, "add", |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, Error> {
        self.zip_elementwise(a, b, "sub", |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, Error> {
        self.zip_elementwise(a, b, "mul", |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    fn zip_elementwise(
        &mut self,
        a: TensorId,
        b: TensorId,
        name: &'static str,
        f: impl Fn(F, F) -> F,
        op: impl Fn(TensorId, TensorId) -> Op<F>,
    ) -> Result<TensorId, Error> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                name,
                format!("operands {:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, shape, op(a, b), needs))
    }

    pub fn scale(&mut self, a: TensorId, c: F) -> TensorId {
        let out = self.data(a).iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(out, shape, Op::Scale { a, c }, needs)
    }

    /// Add a length-R bias vector to every column of an R x C matrix.
    pub fn add_bias(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId, Error> {
        let (r, c) = self.dims2(a, "add_bias")?;
        if self.numel(bias) != r {
            return Err(Error::shape(
                "add_bias",
                format!("bias has {} entries, matrix has {r} rows", self.numel(bias)),
            ));
        }
        let bd = self.data(bias);
        let mut out = self.data(a).to_vec();
        for i in 0..r {
            let bi = bd[i];
            for v in &mut out[i * c..(i + 1) * c] {
                *v += bi;
            }
        }
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(out, vec![r, c], Op::AddBias { a, bias }, needs))
    }

    /// Concatenate 2-d tensors along `axis` (0 = stack rows, 1 = stack cols).
    pub fn concat(&mut self, parts: &[TensorId], axis: usize) -> Result<TensorId, Error> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no operands".to_string()));
        }
        if axis > 1 {
            return Err(Error::shape("concat", format!("axis {axis} out of range")));
        }
        let (r0, c0) = self.dims2(parts[0], "concat")?;
        let mut total = 0usize;
        for &p in parts {
            let (r, c) = self.dims2(p, "concat")?;
            let (fixed, varying, fixed0) = if axis == 0 { (c, r, c0) } else { (r, c, r0) };
            if fixed != fixed0 {
                return Err(Error::shape(
                    "concat",
                    format!("operand {:?} incompatible with {:?} on axis {axis}", (r, c), (r0, c0)),
                ));
            }
            total += varying;
        }
        let (rows, cols) = if axis == 0 { (total, c0) } else { (r0, total) };
        let mut out = vec![F::zero(); rows * cols];
        if axis == 0 {
            let mut row = 0;
            for &p in parts {
                let (r, _) = self.dims2(p, "concat")?;
                out[row * cols..(row + r) * cols].copy_from_slice(self.data(p));
                row += r;
            }
        } else {
            let mut col = 0;
            for &p in parts {
                let (_, c) = self.dims2(p, "concat")?;
                let pd = self.data(p);
                for i in 0..rows {
                    out[i * cols + col..i * cols + col + c]
                        .copy_from_slice(&pd[i * c..(i + 1) * c]);
                }
                col += c;
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            out,
            vec![rows, cols],
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            needs,
        ))
    }

    /// Slice `len` indices starting at `start` along `axis` of a 2-d tensor.
    pub fn slice(
        &mut self,
        a: TensorId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<TensorId, Error> {
        let (r, c) = self.dims2(a, "slice")?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || start + len > extent {
            return Err(Error::shape(
                "slice",
                format!("range {start}..{} exceeds axis {axis} of {:?}", start + len, (r, c)),
            ));
        }
        let ad = self.data(a);
        let (out, shape) = if axis == 0 {
            (ad[start * c..(start + len) * c].to_vec(), vec![len, c])
        } else {
            let mut out = Vec::with_capacity(r * len);
            for i in 0..r {
                out.extend_from_slice(&ad[i * c + start..i * c + start + len]);
            }
            (out, vec![r, len])
        };
        let needs = self.needs(a);
        Ok(self.push(out, shape, Op::Slice { a, axis, start }, needs))
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId, Error> {
        let numel: usize = shape.iter().product();
        if numel != self.numel(a) {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?} changes element count", self.shape(a), shape),
            ));
        }
        let out = self.data(a).to_vec();
        let needs = self.needs(a);
        Ok(self.push(out, shape, Op::Reshape { a }, needs))
    }

    /// Zero-pad a 2-d tensor on the right up to `new_cols` columns.
    pub fn pad_cols(&mut self, a: TensorId, new_cols: usize) -> Result<TensorId, Error> {
        let (r, c) = self.dims2(a, "pad_cols")?;
        if new_cols < c {
            return Err(Error::shape(
                "pad_cols",
                format!("target {new_cols} cols below current {c}"),
            ));
        }
        let ad = self.data(a);
        let mut out = vec![F::zero(); r * new_cols];
        for i in 0..r {
            out[i * new_cols..i * new_cols + c].copy_from_slice(&ad[i * c..(i + 1) * c]);
        }
        let needs = self.needs(a);
        Ok(self.push(out, vec![r, new_cols], Op::PadCols { a }, needs))
    }

    /// Column gather: out[:, j] = a[:, indices[j]]. Indices may repeat.
    pub fn gather_cols(&mut self, a: TensorId, indices: Vec<usize>) -> Result<TensorId, Error> {
        let (r, c) = self.dims2(a, "gather_cols")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= c) {
            return Err(Error::shape(
                "gather_cols",
                format!("index {bad} out of range for {c} columns"),
            ));
        }
        let ad = self.data(a);
        let k = indices.len();
        let mut out = vec![F::zero(); r * k];
        for i in 0..r {
            let src = &ad[i * c..(i + 1) * c];
            let dst = &mut out[i * k..(i + 1) * k];
            for (j, &idx) in indices.iter().enumerate() {
                dst[j] = src[idx];
            }
        }
        let needs = self.needs(a);
        Ok(self.push(out, vec![r, k], Op::GatherCols { a, indices }, needs))
    }

    /// Column scatter-add: out[:, indices[j]] += a[:, j], out has `out_cols`
    /// columns. Adjoint of `gather_cols`.
    pub fn scatter_add_cols(
        &mut self,
        a: TensorId,
        indices: Vec<usize>,
        out_cols: usize,
    ) -> Result<TensorId, Error> {
        let (r, c) = self.dims2(a, "scatter_add_cols")?;
        if indices.len() != c {
            return Err(Error::shape(
                "scatter_add_cols",
                format!("{} indices for {c} columns", indices.len()),
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= out_cols) {
            return Err(Error::shape(
                "scatter_add_cols",
                format!("index {bad} out of range for {out_cols} columns"),
            ));
        }
        let ad = self.data(a);
        let mut out = vec![F::zero(); r * out_cols];
        for i in 0..r {
            let src = &ad[i * c..(i + 1) * c];
            let dst = &mut out[i * out_cols..(i + 1) * out_cols];
            for (j, &idx) in indices.iter().enumerate() {
                dst[idx] += src[j];
            }
        }
        let needs = self.needs(a);
        Ok(self.push(out, vec![r, out_cols], Op::ScatterAddCols { a, indices }, needs))
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total = self.data(a).iter().fold(F::zero(), |acc, &x| acc + x);
        let needs = self.needs(a);
        self.push(vec![total], vec![1], Op::Sum { a }, needs)
    }

    /// Mean of all elements, as a scalar tensor.
    pub fn mean(&mut self, a: TensorId) -> TensorId {
        let n = F::from_f64(self.numel(a) as f64);
        let total = self.data(a).iter().fold(F::zero(), |acc, &x| acc + x);
        let needs = self.needs(a);
        self.push(vec![total / n], vec![1], Op::Mean { a }, needs)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let out = self
            .data(a)
            .iter()
            .map(|&x| F::one() / (F::one() + (-x).exp()))
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(out, shape, Op::Sigmoid { a }, needs)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let out = self.data(a).iter().map(|&x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(out, shape, Op::Tanh { a }, needs)
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let out = self
            .data(a)
            .iter()
            .map(|&x| if x > F::zero() { x } else { F::zero() })
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(out, shape, Op::Relu { a }, needs)
    }

    /// Softmax along `axis` of a 1-d or 2-d tensor. Each slice running
    /// along the axis is shifted by its max and normalized to sum 1.
    pub fn softmax(&mut self, a: TensorId, axis: usize) -> Result<TensorId, Error> {
        let shape = self.shape(a).to_vec();
        let (rows, cols) = match *shape {
            [n] => {
                if axis != 0 {
                    return Err(Error::shape("softmax", format!("axis {axis} on 1-d tensor")));
                }
                (1, n)
            }
            [r, c] => {
                if axis > 1 {
                    return Err(Error::shape("softmax", format!("axis {axis} out of range")));
                }
                (r, c)
            }
            ref s => {
                return Err(Error::shape(
                    "softmax",
                    format!("expected 1-d or 2-d tensor, got {s:?}"),
                ))
            }
        };
        // Normalize over rows by working on the transpose, then undoing it.
        let over_rows = shape.len() == 2 && axis == 0;
        let (work, r, c) = if over_rows {
            (transpose(self.data(a), rows, cols), cols, rows)
        } else {
            (self.data(a).to_vec(), rows, cols)
        };
        let mut out = work;
        for i in 0..r {
            let row = &mut out[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut total = F::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let out = if over_rows { transpose(&out, cols, rows) } else { out };
        let needs = self.needs(a);
        Ok(self.push(out, shape, Op::Softmax { a, axis }, needs))
    }

    /// Squared-error reduction, the building block for the training losses.
    /// `mean = false` gives the sum of squared differences, `mean = true`
    /// divides by the element count.
    pub fn mse(&mut self, a: TensorId, b: TensorId, mean: bool) -> Result<TensorId, Error> {
        let diff = self.sub(a, b)?;
        let sq = self.mul(diff, diff)?;
        Ok(if mean { self.mean(sq) } else { self.sum(sq) })
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Populates per-node gradients and
    /// consumes the tape: no further ops may be recorded.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), Error> {
        if self.numel(loss) != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![F::one()]);

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(out_grad) = self.grads[i].take() else {
                continue;
            };
            self.apply_vjp(i, &out_grad);
            self.grads[i] = Some(out_grad);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: TensorId, delta: &[F]) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut self.grads[id.0] {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += *di;
                }
            }
            None => self.grads[id.0] = Some(delta.to_vec()),
        }
    }

    fn apply_vjp(&mut self, node: usize, g: &[F]) {
        let op = self.nodes[node].op.clone();
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                if self.needs(a) {
                    let da = matmul_nt(g, self.data(b), m, n, k);
                    self.accumulate(a, &da);
                }
                if self.needs(b) {
                    let db = matmul_tn(self.data(a), g, m, k, n);
                    self.accumulate(b, &db);
                }
            }
            Op::Transpose { a } => {
                let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let da = transpose(g, c, r);
                self.accumulate(a, &da);
            }
            Op::Add { a, b } => {
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            Op::Sub { a, b } => {
                self.accumulate(a, g);
                let neg: Vec<F> = g.iter().map(|&x| -x).collect();
                self.accumulate(b, &neg);
            }
            Op::Mul { a, b } => {
                if self.needs(a) {
                    let da: Vec<F> = g.iter().zip(self.data(b)).map(|(&gi, &bi)| gi * bi).collect();
                    self.accumulate(a, &da);
                }
                if self.needs(b) {
                    let db: Vec<F> = g.iter().zip(self.data(a)).map(|(&gi, &ai)| gi * ai).collect();
                    self.accumulate(b, &db);
                }
            }
            Op::Scale { a, c } => {
                let da: Vec<F> = g.iter().map(|&x| x * c).collect();
                self.accumulate(a, &da);
            }
            Op::AddBias { a, bias } => {
                self.accumulate(a, g);
                if self.needs(bias) {
                    let r = self.numel(bias);
                    let c = g.len() / r;
                    let mut db = vec![F::zero(); r];
                    for i in 0..r {
                        for j in 0..c {
                            db[i] += g[i * c + j];
                        }
                    }
                    self.accumulate(bias, &db);
                }
            }
            Op::Concat { parts, axis } => {
                let cols = self.nodes[node].shape[1];
                if axis == 0 {
                    let mut row = 0;
                    for p in parts {
                        let r = self.nodes[p.0].shape[0];
                        let dp = g[row * cols..(row + r) * cols].to_vec();
                        self.accumulate(p, &dp);
                        row += r;
                    }
                } else {
                    let rows = self.nodes[node].shape[0];
                    let mut col = 0;
                    for p in parts {
                        let c = self.nodes[p.0].shape[1];
                        let mut dp = vec![F::zero(); rows * c];
                        for i in 0..rows {
                            dp[i * c..(i + 1) * c]
                                .copy_from_slice(&g[i * cols + col..i * cols + col + c]);
                        }
                        self.accumulate(p, &dp);
                        col += c;
                    }
                }
            }
            Op::Slice { a, axis, start } => {
                let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let mut da = vec![F::zero(); r * c];
                if axis == 0 {
                    let len = self.nodes[node].shape[0];
                    da[start * c..(start + len) * c].copy_from_slice(g);
                } else {
                    let len = self.nodes[node].shape[1];
                    for i in 0..r {
                        da[i * c + start..i * c + start + len]
                            .copy_from_slice(&g[i * len..(i + 1) * len]);
                    }
                }
                self.accumulate(a, &da);
            }
            Op::Reshape { a } => {
                self.accumulate(a, g);
            }
            Op::PadCols { a } => {
                let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let padded = self.nodes[node].shape[1];
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    da[i * c..(i + 1) * c].copy_from_slice(&g[i * padded..i * padded + c]);
                }
                self.accumulate(a, &da);
            }
            Op::GatherCols { a, indices } => {
                let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let k = indices.len();
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    for (j, &idx) in indices.iter().enumerate() {
                        da[i * c + idx] += g[i * k + j];
                    }
                }
                self.accumulate(a, &da);
            }
            Op::ScatterAddCols { a, indices } => {
                let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let out_cols = self.nodes[node].shape[1];
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    for (j, &idx) in indices.iter().enumerate() {
                        da[i * c + j] = g[i * out_cols + idx];
                    }
                }
                self.accumulate(a, &da);
            }
            Op::Sum { a } => {
                let da = vec![g[0]; self.numel(a)];
                self.accumulate(a, &da);
            }
            Op::Mean { a } => {
                let n = F::from_f64(self.numel(a) as f64);
                let da = vec![g[0] / n; self.numel(a)];
                self.accumulate(a, &da);
            }
            Op::Sigmoid { a } => {
                let da: Vec<F> = g
                    .iter()
                    .zip(&self.nodes[node].data)
                    .map(|(&gi, &y)| gi * y * (F::one() - y))
                    .collect();
                self.accumulate(a, &da);
            }
            Op::Tanh { a } => {
                let da: Vec<F> = g
                    .iter()
                    .zip(&self.nodes[node].data)
                    .map(|(&gi, &y)| gi * (F::one() - y * y))
                    .collect();
                self.accumulate(a, &da);
            }
            Op::Relu { a } => {
                let da: Vec<F> = g
                    .iter()
                    .zip(self.data(a))
                    .map(|(&gi, &x)| if x > F::zero() { gi } else { F::zero() })
                    .collect();
                self.accumulate(a, &da);
            }
            Op::Softmax { a, axis } => {
                let shape = self.nodes[node].shape.clone();
                let (rows, cols) = match *shape {
                    [n] => (1, n),
                    [r, c] => (r, c),
                    _ => unreachable!(),
                };
                let over_rows = shape.len() == 2 && axis == 0;
                let (y, gy, r, c) = if over_rows {
                    (
                        transpose(&self.nodes[node].data, rows, cols),
                        transpose(g, rows, cols),
                        cols,
                        rows,
                    )
                } else {
                    (self.nodes[node].data.clone(), g.to_vec(), rows, cols)
                };
                let mut da = vec![F::zero(); y.len()];
                for i in 0..r {
                    let ys = &y[i * c..(i + 1) * c];
                    let gs = &gy[i * c..(i + 1) * c];
                    let dot = ys
                        .iter()
                        .zip(gs)
                        .fold(F::zero(), |acc, (&yi, &gi)| acc + yi * gi);
                    for j in 0..c {
                        da[i * c + j] = ys[j] * (gs[j] - dot);
                    }
                }
                let da = if over_rows { transpose(&da, cols, rows) } else { da };
                self.accumulate(a, &da);
            }
        }
    }
}

// ── Raw matrix helpers ───────────────────────────────────────────────

/// C[m,n] = A[m,k] B[k,n]
fn matmul_nn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == F::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}

/// C[m,k] = A[m,n] B[k,n]^T
fn matmul_nt<F: Scalar>(a: &[F], b: &[F], m: usize, n: usize, k: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = F::zero();
            for p in 0..n {
                acc += arow[p] * brow[p];
            }
            c[i * k + j] = acc;
        }
    }
    c
}

/// C[k,n] = A[m,k]^T B[m,n]
fn matmul_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == F::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}

fn transpose<F: Scalar>(a: &[F], r: usize, c: usize) -> Vec<F> {
    let mut out = vec![F::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}
