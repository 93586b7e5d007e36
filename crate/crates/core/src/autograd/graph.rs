//! Reverse-mode autodiff over a linear tape.
//!
//! Every operation appends one node holding the forward value; the tape is
//! topologically ordered by construction, so backward is a single reverse
//! sweep that visits each node exactly once. All exported primitives validate
//! shapes up front (errors name the primitive and both shapes) and reject
//! non-finite values.

use crate::autograd::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle into a [`Graph`]'s tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Large negative logit used to mask attention keys. exp(-1e9 - max) rounds
/// to exactly 0.0 in both f32 and f64, so masked keys carry zero weight.
const MASK_NEG: f64 = -1e9;

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Matmul { transpose_b: bool },
    Add { suffix_broadcast: bool },
    Sub,
    Mul,
    Scale(T),
    Relu,
    Abs,
    Tanh,
    Softmax,
    LayerNorm { eps: f64 },
    Conv1d { width: usize },
    MaskMul,
    MaskedMeanPool,
    EmbeddingLookup { ids: Vec<usize> },
    ConcatLast { splits: Vec<usize> },
    ScaledDotAttention { heads: usize, attn: Tensor<T> },
    CrossEntropyFromLogits { labels: Vec<usize>, probs: Tensor<T> },
    SumAll,
    MeanAll,
}

struct Node<T> {
    value: Tensor<T>,
    parents: Vec<NodeId>,
    op: Op<T>,
    requires_grad: bool,
}

/// Computation tape. Single-threaded; distinct graphs are independent.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Total bytes held by node values; used as a deterministic memory
    /// estimate by the resource benchmark.
    pub fn value_bytes(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.value.len() * std::mem::size_of::<T>())
            .sum()
    }

    /// Insert a differentiable leaf (a parameter).
    pub fn leaf(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push_leaf(value, true)
    }

    /// Insert a non-differentiable leaf (input data, masks).
    pub fn constant(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::non_finite("leaf"));
        }
        self.nodes.push(Node {
            value,
            parents: vec![],
            op: Op::Leaf,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn push(&mut self, op_name: &str, value: Tensor<T>, parents: Vec<NodeId>, op: Op<T>) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::non_finite(op_name));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            parents,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    // ---- primitives ------------------------------------------------------

    /// `a @ b` (or `a @ b^T`). `a` may carry leading batch dims; `b` is 2-D.
    pub fn matmul(&mut self, a: NodeId, b: NodeId, transpose_b: bool) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() < 2 || bv.rank() != 2 {
            return Err(Error::shape(
                "matmul",
                format!("need lhs rank>=2 and rhs rank 2, got {:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let k = av.shape()[av.rank() - 1];
        let (bk, n) = if transpose_b {
            (bv.shape()[1], bv.shape()[0])
        } else {
            (bv.shape()[0], bv.shape()[1])
        };
        if k != bk {
            return Err(Error::shape(
                "matmul",
                format!("inner dims differ: {:?} x {:?} (transpose_b={transpose_b})", av.shape(), bv.shape()),
            ));
        }
        let m = av.shape()[av.rank() - 2];
        let batch = av.len() / (m * k);
        let mut out_shape = av.shape().to_vec();
        let r = out_shape.len();
        out_shape[r - 1] = n;
        let mut out = vec![T::zero(); batch * m * n];
        matmul_kernel(av.data(), bv.data(), &mut out, batch, m, k, n, transpose_b);
        let value = Tensor::from_vec(&out_shape, out)?;
        self.push("matmul", value, vec![a, b], Op::Matmul { transpose_b })
    }

    /// Elementwise add; `b` may be a trailing-shape broadcast of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        let suffix = av.shape() != bv.shape();
        if suffix && !is_suffix(bv.shape(), av.shape()) {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}: rhs must match or be a trailing suffix", av.shape(), bv.shape()),
            ));
        }
        let blen = bv.len().max(1);
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv.data()[i % blen])
            .collect();
        let value = Tensor::from_vec(av.shape(), data)?;
        self.push("add", value, vec![a, b], Op::Add { suffix_broadcast: suffix })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("sub", av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x - y).collect();
        let value = Tensor::from_vec(av.shape(), data)?;
        self.push("sub", value, vec![a, b], Op::Sub)
    }

    /// Elementwise (Hadamard) multiply; shapes must match exactly.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("multiply", av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_vec(av.shape(), data)?;
        self.push("multiply", value, vec![a, b], Op::Mul)
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        let value = self.value(a).map(|x| x * c);
        self.push("scale", value, vec![a], Op::Scale(c))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push("relu", value, vec![a], Op::Relu)
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(|x| x.abs());
        self.push("abs", value, vec![a], Op::Abs)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(|x| x.tanh());
        self.push("tanh", value, vec![a], Op::Tanh)
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.rank() < 1 {
            return Err(Error::shape("softmax", format!("need rank>=1, got {:?}", av.shape())));
        }
        let cols = av.last_dim();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let value = Tensor::from_vec(av.shape(), data)?;
        self.push("softmax", value, vec![a], Op::Softmax)
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let cols = xv.last_dim();
        if gv.shape() != [cols] || bv.shape() != [cols] {
            return Err(Error::shape(
                "layer_norm",
                format!("x {:?} needs gain/bias of shape [{cols}], got {:?} / {:?}", xv.shape(), gv.shape(), bv.shape()),
            ));
        }
        let epsv = T::from_f64(eps);
        let mut data = vec![T::zero(); xv.len()];
        for (r, row) in xv.data().chunks(cols).enumerate() {
            let (mean, inv_std) = row_stats(row, epsv);
            for c in 0..cols {
                data[r * cols + c] = (row[c] - mean) * inv_std * gv.data()[c] + bv.data()[c];
            }
        }
        let value = Tensor::from_vec(xv.shape(), data)?;
        self.push("layer_norm", value, vec![x, gamma, beta], Op::LayerNorm { eps })
    }

    /// 1-D convolution over the sequence axis with same-padding
    /// (output length = input length). `x` is (B, L, Cin), `w` is
    /// (width, Cin, Cout).
    pub fn conv1d(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.rank() != 3 || wv.rank() != 3 || xv.shape()[2] != wv.shape()[1] {
            return Err(Error::shape(
                "conv1d",
                format!("need (B,L,Cin) x (W,Cin,Cout), got {:?} x {:?}", xv.shape(), wv.shape()),
            ));
        }
        let (b, l, cin) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (width, cout) = (wv.shape()[0], wv.shape()[2]);
        let pad_left = (width - 1) / 2;
        let mut out = vec![T::zero(); b * l * cout];
        for bi in 0..b {
            for t in 0..l {
                let orow = &mut out[(bi * l + t) * cout..(bi * l + t) * cout + cout];
                for k in 0..width {
                    let s = t + k;
                    if s < pad_left || s - pad_left >= l {
                        continue;
                    }
                    let xrow = &xv.data()[(bi * l + s - pad_left) * cin..(bi * l + s - pad_left) * cin + cin];
                    for ci in 0..cin {
                        let xval = xrow[ci];
                        let wrow = &wv.data()[(k * cin + ci) * cout..(k * cin + ci) * cout + cout];
                        for co in 0..cout {
                            orow[co] += xval * wrow[co];
                        }
                    }
                }
            }
        }
        let value = Tensor::from_vec(&[b, l, cout], out)?;
        self.push("conv1d", value, vec![x, w], Op::Conv1d { width })
    }

    /// Zero out padded positions: `x` (B, L, D) times `mask` (B, L).
    /// The mask is constant; no gradient flows into it.
    pub fn mask_mul(&mut self, x: NodeId, mask: NodeId) -> Result<NodeId> {
        let (xv, mv) = (self.value(x), self.value(mask));
        check_mask("mask_mul", xv, mv)?;
        let d = xv.shape()[2];
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * mv.data()[i / d])
            .collect();
        let value = Tensor::from_vec(xv.shape(), data)?;
        self.push("mask_mul", value, vec![x, mask], Op::MaskMul)
    }

    /// Mean over unmasked sequence positions: (B, L, D) x (B, L) -> (B, D).
    pub fn masked_mean_pool(&mut self, x: NodeId, mask: NodeId) -> Result<NodeId> {
        let (xv, mv) = (self.value(x), self.value(mask));
        check_mask("masked_mean_pool", xv, mv)?;
        let (b, l, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let mut out = vec![T::zero(); b * d];
        for bi in 0..b {
            let count: T = mv.data()[bi * l..(bi + 1) * l].iter().copied().sum();
            if count <= T::zero() {
                return Err(Error::invalid(format!(
                    "masked_mean_pool: batch row {bi} has no unmasked positions"
                )));
            }
            for t in 0..l {
                let m = mv.data()[bi * l + t];
                if m == T::zero() {
                    continue;
                }
                let xrow = &xv.data()[(bi * l + t) * d..(bi * l + t) * d + d];
                let orow = &mut out[bi * d..(bi + 1) * d];
                for c in 0..d {
                    orow[c] += xrow[c] * m;
                }
            }
            for c in 0..d {
                out[bi * d + c] /= count;
            }
        }
        let value = Tensor::from_vec(&[b, d], out)?;
        self.push("masked_mean_pool", value, vec![x, mask], Op::MaskedMeanPool)
    }

    /// Gather rows of `table` (V, D) by token id; output is `lead_shape + [D]`.
    pub fn embedding_lookup(&mut self, table: NodeId, ids: &[usize], lead_shape: &[usize]) -> Result<NodeId> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(Error::shape(
                "embedding_lookup",
                format!("table must be 2-D, got {:?}", tv.shape()),
            ));
        }
        let expect: usize = lead_shape.iter().product();
        if ids.len() != expect {
            return Err(Error::shape(
                "embedding_lookup",
                format!("{} ids vs lead shape {lead_shape:?}", ids.len()),
            ));
        }
        let (v, d) = (tv.shape()[0], tv.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::invalid(format!(
                "embedding_lookup: id {bad} out of range for vocabulary of {v}"
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(&tv.data()[id * d..(id + 1) * d]);
        }
        let mut shape = lead_shape.to_vec();
        shape.push(d);
        let value = Tensor::from_vec(&shape, data)?;
        self.push(
            "embedding_lookup",
            value,
            vec![table],
            Op::EmbeddingLookup { ids: ids.to_vec() },
        )
    }

    /// Concatenate along the last axis; all inputs share leading dims.
    pub fn concat_last(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::empty("concat input list"));
        }
        let lead = {
            let first = self.value(parts[0]);
            first.shape()[..first.rank() - 1].to_vec()
        };
        let mut splits = Vec::with_capacity(parts.len());
        for &p in parts {
            let pv = self.value(p);
            if pv.rank() == 0 || pv.shape()[..pv.rank() - 1] != lead[..] {
                return Err(Error::shape(
                    "concat",
                    format!("leading dims differ: {:?} vs {:?}", self.value(parts[0]).shape(), pv.shape()),
                ));
            }
            splits.push(pv.last_dim());
        }
        let total: usize = splits.iter().sum();
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (idx, &p) in parts.iter().enumerate() {
                let w = splits[idx];
                data.extend_from_slice(&self.value(p).data()[r * w..r * w + w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::from_vec(&shape, data)?;
        self.push("concat", value, parts.to_vec(), Op::ConcatLast { splits })
    }

    /// Multi-head scaled dot-product self-attention with key masking.
    /// `q`, `k`, `v` are (B, L, D) with D divisible by `heads`; `mask` is
    /// (B, L) over key positions and receives no gradient.
    pub fn scaled_dot_attention(&mut self, q: NodeId, k: NodeId, v: NodeId, mask: NodeId, heads: usize) -> Result<NodeId> {
        let (qv, kv, vv, mv) = (self.value(q), self.value(k), self.value(v), self.value(mask));
        if qv.rank() != 3 || qv.shape() != kv.shape() || qv.shape() != vv.shape() {
            return Err(Error::shape(
                "scaled_dot_attention",
                format!("q/k/v must share (B,L,D): {:?} / {:?} / {:?}", qv.shape(), kv.shape(), vv.shape()),
            ));
        }
        let (b, l, d) = (qv.shape()[0], qv.shape()[1], qv.shape()[2]);
        if heads == 0 || d % heads != 0 {
            return Err(Error::shape(
                "scaled_dot_attention",
                format!("model dim {d} not divisible by {heads} heads"),
            ));
        }
        if mv.shape() != [b, l] {
            return Err(Error::shape(
                "scaled_dot_attention",
                format!("mask {:?} does not match sequence shape ({b}, {l})", mv.shape()),
            ));
        }
        let dh = d / heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let neg = T::from_f64(MASK_NEG);
        let mut attn = vec![T::zero(); b * heads * l * l];
        let mut out = vec![T::zero(); b * l * d];
        for bi in 0..b {
            let mrow = &mv.data()[bi * l..(bi + 1) * l];
            for h in 0..heads {
                let off = h * dh;
                let arows = &mut attn[(bi * heads + h) * l * l..(bi * heads + h + 1) * l * l];
                for i in 0..l {
                    let qrow = &qv.data()[(bi * l + i) * d + off..(bi * l + i) * d + off + dh];
                    let srow = &mut arows[i * l..(i + 1) * l];
                    for j in 0..l {
                        let krow = &kv.data()[(bi * l + j) * d + off..(bi * l + j) * d + off + dh];
                        let mut dot = T::zero();
                        for c in 0..dh {
                            dot += qrow[c] * krow[c];
                        }
                        srow[j] = dot * scale + if mrow[j] == T::zero() { neg } else { T::zero() };
                    }
                    softmax_in_place(srow);
                    let orow_start = (bi * l + i) * d + off;
                    for j in 0..l {
                        let a = srow[j];
                        if a == T::zero() {
                            continue;
                        }
                        let vrow = &vv.data()[(bi * l + j) * d + off..(bi * l + j) * d + off + dh];
                        for c in 0..dh {
                            out[orow_start + c] += a * vrow[c];
                        }
                    }
                }
            }
        }
        let attn = Tensor::from_vec(&[b, heads, l, l], attn)?;
        let value = Tensor::from_vec(&[b, l, d], out)?;
        self.push(
            "scaled_dot_attention",
            value,
            vec![q, k, v, mask],
            Op::ScaledDotAttention { heads, attn },
        )
    }

    /// Per-example negative log likelihood from raw logits (B, C) and integer
    /// labels; output is (B,). Uses log-sum-exp with max subtraction.
    pub fn cross_entropy_from_logits(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        if lv.rank() != 2 || lv.shape()[0] != labels.len() {
            return Err(Error::shape(
                "cross_entropy_from_logits",
                format!("logits {:?} vs {} labels", lv.shape(), labels.len()),
            ));
        }
        let (b, c) = (lv.shape()[0], lv.shape()[1]);
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::invalid(format!(
                "cross_entropy_from_logits: label {bad} out of range for {c} classes"
            )));
        }
        let mut probs = lv.data().to_vec();
        let mut losses = vec![T::zero(); b];
        for (bi, row) in probs.chunks_mut(c).enumerate() {
            log_softmax_in_place(row);
            losses[bi] = -(row[labels[bi]]);
            for x in row.iter_mut() {
                *x = x.exp();
            }
        }
        let probs = Tensor::from_vec(&[b, c], probs)?;
        let value = Tensor::from_vec(&[b], losses)?;
        self.push(
            "cross_entropy_from_logits",
            value,
            vec![logits],
            Op::CrossEntropyFromLogits {
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), vec![a], Op::SumAll)
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(Error::empty("mean input"));
        }
        let n = T::from_f64(av.len() as f64);
        let s: T = av.data().iter().copied().sum();
        self.push("mean", Tensor::scalar(s / n), vec![a], Op::MeanAll)
    }

    // ---- backward --------------------------------------------------------

    /// Reverse sweep from a scalar loss. Returns per-node gradients; entries
    /// are `None` for nodes the loss does not depend on (their gradient is
    /// zero) and for non-differentiable constants.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Option<Tensor<T>>>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        for id in (0..=loss.0).rev() {
            if grads[id].is_none() || matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let g = grads[id].take().unwrap();
            let node = &self.nodes[id];
            let pgrads = self.op_backward(node, &g)?;
            for (slot, pg) in node.parents.iter().zip(pgrads) {
                let (Some(pg), true) = (pg, self.nodes[slot.0].requires_grad) else {
                    continue;
                };
                match &mut grads[slot.0] {
                    Some(acc) => accumulate(acc, &pg),
                    empty => *empty = Some(pg),
                }
            }
            grads[id] = Some(g);
        }
        Ok(grads)
    }

    fn op_backward(&self, node: &Node<T>, g: &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>> {
        let pv = |i: usize| self.value(node.parents[i]);
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Matmul { transpose_b } => {
                let (a, b) = (pv(0), pv(1));
                let k = a.shape()[a.rank() - 1];
                let m = a.shape()[a.rank() - 2];
                let batch = a.len() / (m * k);
                let n = if *transpose_b { b.shape()[0] } else { b.shape()[1] };
                let mut da = vec![T::zero(); a.len()];
                let mut db = vec![T::zero(); b.len()];
                if *transpose_b {
                    // out = A B^T: dA = g B, dB = sum_batch g^T A
                    matmul_kernel(g.data(), b.data(), &mut da, batch, m, n, k, false);
                    for bi in 0..batch {
                        let gs = &g.data()[bi * m * n..(bi + 1) * m * n];
                        let asl = &a.data()[bi * m * k..(bi + 1) * m * k];
                        for i in 0..m {
                            let grow = &gs[i * n..(i + 1) * n];
                            let arow = &asl[i * k..(i + 1) * k];
                            for j in 0..n {
                                let gij = grow[j];
                                let dbrow = &mut db[j * k..(j + 1) * k];
                                for c in 0..k {
                                    dbrow[c] += gij * arow[c];
                                }
                            }
                        }
                    }
                } else {
                    // out = A B: dA = g B^T, dB = sum_batch A^T g
                    matmul_kernel(g.data(), b.data(), &mut da, batch, m, n, k, true);
                    for bi in 0..batch {
                        let gs = &g.data()[bi * m * n..(bi + 1) * m * n];
                        let asl = &a.data()[bi * m * k..(bi + 1) * m * k];
                        for i in 0..m {
                            let grow = &gs[i * n..(i + 1) * n];
                            let arow = &asl[i * k..(i + 1) * k];
                            for c in 0..k {
                                let aic = arow[c];
                                let dbrow = &mut db[c * n..(c + 1) * n];
                                for j in 0..n {
                                    dbrow[j] += aic * grow[j];
                                }
                            }
                        }
                    }
                }
                vec![
                    Some(Tensor::from_vec(a.shape(), da)?),
                    Some(Tensor::from_vec(b.shape(), db)?),
                ]
            }
            Op::Add { suffix_broadcast } => {
                let b = pv(1);
                let db = if *suffix_broadcast {
                    let blen = b.len();
                    let mut db = vec![T::zero(); blen];
                    for (i, &gv) in g.data().iter().enumerate() {
                        db[i % blen] += gv;
                    }
                    Tensor::from_vec(b.shape(), db)?
                } else {
                    g.clone()
                };
                vec![Some(g.clone()), Some(db)]
            }
            Op::Sub => vec![Some(g.clone()), Some(g.map(|x| -x))],
            Op::Mul => {
                let (a, b) = (pv(0), pv(1));
                let da = zip_mul(g, b);
                let db = zip_mul(g, a);
                vec![Some(da), Some(db)]
            }
            Op::Scale(c) => vec![Some(g.map(|x| x * *c))],
            Op::Relu => {
                let a = pv(0);
                let data = g
                    .data()
                    .iter()
                    .zip(a.data())
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                vec![Some(Tensor::from_vec(a.shape(), data)?)]
            }
            Op::Abs => {
                let a = pv(0);
                let data = g
                    .data()
                    .iter()
                    .zip(a.data())
                    .map(|(&gv, &xv)| gv * T::from_f64(sign(xv.to_f64())))
                    .collect();
                vec![Some(Tensor::from_vec(a.shape(), data)?)]
            }
            Op::Tanh => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gv, &yv)| gv * (T::one() - yv * yv))
                    .collect();
                vec![Some(Tensor::from_vec(y.shape(), data)?)]
            }
            Op::Softmax => {
                let y = &node.value;
                let cols = y.last_dim();
                let mut dx = vec![T::zero(); y.len()];
                for r in 0..y.len() / cols {
                    let ys = &y.data()[r * cols..(r + 1) * cols];
                    let gs = &g.data()[r * cols..(r + 1) * cols];
                    let mut dot = T::zero();
                    for c in 0..cols {
                        dot += ys[c] * gs[c];
                    }
                    for c in 0..cols {
                        dx[r * cols + c] = ys[c] * (gs[c] - dot);
                    }
                }
                vec![Some(Tensor::from_vec(y.shape(), dx)?)]
            }
            Op::LayerNorm { eps } => {
                let (x, gamma) = (pv(0), pv(1));
                let cols = x.last_dim();
                let rows = x.len() / cols;
                let epsv = T::from_f64(*eps);
                let nt = T::from_f64(cols as f64);
                let mut dx = vec![T::zero(); x.len()];
                let mut dgamma = vec![T::zero(); cols];
                let mut dbeta = vec![T::zero(); cols];
                for r in 0..rows {
                    let xs = &x.data()[r * cols..(r + 1) * cols];
                    let gs = &g.data()[r * cols..(r + 1) * cols];
                    let (mean, inv_std) = row_stats(xs, epsv);
                    let mut sum_dxhat = T::zero();
                    let mut sum_dxhat_xhat = T::zero();
                    for c in 0..cols {
                        let xhat = (xs[c] - mean) * inv_std;
                        let dxhat = gs[c] * gamma.data()[c];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        dgamma[c] += gs[c] * xhat;
                        dbeta[c] += gs[c];
                    }
                    for c in 0..cols {
                        let xhat = (xs[c] - mean) * inv_std;
                        let dxhat = gs[c] * gamma.data()[c];
                        dx[r * cols + c] = inv_std / nt * (nt * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
                    }
                }
                vec![
                    Some(Tensor::from_vec(x.shape(), dx)?),
                    Some(Tensor::from_vec(&[cols], dgamma)?),
                    Some(Tensor::from_vec(&[cols], dbeta)?),
                ]
            }
            Op::Conv1d { width } => {
                let (x, w) = (pv(0), pv(1));
                let (b, l, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let cout = w.shape()[2];
                let pad_left = (width - 1) / 2;
                let mut dx = vec![T::zero(); x.len()];
                let mut dw = vec![T::zero(); w.len()];
                for bi in 0..b {
                    for t in 0..l {
                        let grow = &g.data()[(bi * l + t) * cout..(bi * l + t) * cout + cout];
                        for k in 0..*width {
                            let s = t + k;
                            if s < pad_left || s - pad_left >= l {
                                continue;
                            }
                            let src = (bi * l + s - pad_left) * cin;
                            for ci in 0..cin {
                                let xval = x.data()[src + ci];
                                let wrow = &w.data()[(k * cin + ci) * cout..(k * cin + ci) * cout + cout];
                                let mut acc = T::zero();
                                for co in 0..cout {
                                    acc += grow[co] * wrow[co];
                                    dw[(k * cin + ci) * cout + co] += xval * grow[co];
                                }
                                dx[src + ci] += acc;
                            }
                        }
                    }
                }
                vec![
                    Some(Tensor::from_vec(x.shape(), dx)?),
                    Some(Tensor::from_vec(w.shape(), dw)?),
                ]
            }
            Op::MaskMul => {
                let (x, m) = (pv(0), pv(1));
                let d = x.shape()[2];
                let data = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &gv)| gv * m.data()[i / d])
                    .collect();
                vec![Some(Tensor::from_vec(x.shape(), data)?), None]
            }
            Op::MaskedMeanPool => {
                let (x, m) = (pv(0), pv(1));
                let (b, l, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let mut dx = vec![T::zero(); x.len()];
                for bi in 0..b {
                    let count: T = m.data()[bi * l..(bi + 1) * l].iter().copied().sum();
                    let grow = &g.data()[bi * d..(bi + 1) * d];
                    for t in 0..l {
                        let mv = m.data()[bi * l + t];
                        if mv == T::zero() {
                            continue;
                        }
                        let drow = &mut dx[(bi * l + t) * d..(bi * l + t) * d + d];
                        for c in 0..d {
                            drow[c] = grow[c] * mv / count;
                        }
                    }
                }
                vec![Some(Tensor::from_vec(x.shape(), dx)?), None]
            }
            Op::EmbeddingLookup { ids } => {
                let table = pv(0);
                let d = table.shape()[1];
                let mut dt = vec![T::zero(); table.len()];
                for (row, &id) in ids.iter().enumerate() {
                    let gs = &g.data()[row * d..(row + 1) * d];
                    let ts = &mut dt[id * d..(id + 1) * d];
                    for c in 0..d {
                        ts[c] += gs[c];
                    }
                }
                vec![Some(Tensor::from_vec(table.shape(), dt)?)]
            }
            Op::ConcatLast { splits } => {
                let total: usize = splits.iter().sum();
                let rows = g.len() / total;
                let mut outs = Vec::with_capacity(splits.len());
                let mut offset = 0;
                for (idx, &w) in splits.iter().enumerate() {
                    let p = pv(idx);
                    let mut data = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        data.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                    }
                    outs.push(Some(Tensor::from_vec(p.shape(), data)?));
                    offset += w;
                }
                outs
            }
            Op::ScaledDotAttention { heads, attn } => {
                let (q, k, v) = (pv(0), pv(1), pv(2));
                let (b, l, d) = (q.shape()[0], q.shape()[1], q.shape()[2]);
                let dh = d / heads;
                let scale = T::from_f64(1.0 / (dh as f64).sqrt());
                let mut dq = vec![T::zero(); q.len()];
                let mut dk = vec![T::zero(); k.len()];
                let mut dv = vec![T::zero(); v.len()];
                let mut da = vec![T::zero(); l];
                let mut ds = vec![T::zero(); l];
                for bi in 0..b {
                    for h in 0..*heads {
                        let off = h * dh;
                        let arows = &attn.data()[(bi * heads + h) * l * l..(bi * heads + h + 1) * l * l];
                        for i in 0..l {
                            let grow = &g.data()[(bi * l + i) * d + off..(bi * l + i) * d + off + dh];
                            let arow = &arows[i * l..(i + 1) * l];
                            // dV and dA
                            let mut dot = T::zero();
                            for j in 0..l {
                                let a = arow[j];
                                let vrow = &v.data()[(bi * l + j) * d + off..(bi * l + j) * d + off + dh];
                                let mut s = T::zero();
                                for c in 0..dh {
                                    s += grow[c] * vrow[c];
                                    dv[(bi * l + j) * d + off + c] += a * grow[c];
                                }
                                da[j] = s;
                                dot += s * a;
                            }
                            // softmax jacobian
                            for j in 0..l {
                                ds[j] = arow[j] * (da[j] - dot);
                            }
                            // dQ and dK
                            for j in 0..l {
                                let dsj = ds[j] * scale;
                                if dsj == T::zero() {
                                    continue;
                                }
                                let krow = &k.data()[(bi * l + j) * d + off..(bi * l + j) * d + off + dh];
                                let qrow = &q.data()[(bi * l + i) * d + off..(bi * l + i) * d + off + dh];
                                for c in 0..dh {
                                    dq[(bi * l + i) * d + off + c] += dsj * krow[c];
                                    dk[(bi * l + j) * d + off + c] += dsj * qrow[c];
                                }
                            }
                        }
                    }
                }
                vec![
                    Some(Tensor::from_vec(q.shape(), dq)?),
                    Some(Tensor::from_vec(k.shape(), dk)?),
                    Some(Tensor::from_vec(v.shape(), dv)?),
                    None,
                ]
            }
            Op::CrossEntropyFromLogits { labels, probs } => {
                let logits = pv(0);
                let c = logits.shape()[1];
                let mut dl = probs.data().to_vec();
                for (bi, &y) in labels.iter().enumerate() {
                    let gb = g.data()[bi];
                    let row = &mut dl[bi * c..(bi + 1) * c];
                    row[y] -= T::one();
                    for x in row.iter_mut() {
                        *x *= gb;
                    }
                }
                vec![Some(Tensor::from_vec(logits.shape(), dl)?)]
            }
            Op::SumAll => {
                let a = pv(0);
                let gv = g.data()[0];
                vec![Some(Tensor::full(a.shape(), gv))]
            }
            Op::MeanAll => {
                let a = pv(0);
                let gv = g.data()[0] / T::from_f64(a.len() as f64);
                vec![Some(Tensor::full(a.shape(), gv))]
            }
        })
    }
}

// ---- kernels ---------------------------------------------------------------

/// C += A x B for each batch slab of A; B is 2-D, optionally transposed.
#[allow(clippy::too_many_arguments)]
fn matmul_kernel<T: Real>(a: &[T], b: &[T], out: &mut [T], batch: usize, m: usize, k: usize, n: usize, transpose_b: bool) {
    for bi in 0..batch {
        let asl = &a[bi * m * k..(bi + 1) * m * k];
        let osl = &mut out[bi * m * n..(bi + 1) * m * n];
        if transpose_b {
            for i in 0..m {
                let arow = &asl[i * k..(i + 1) * k];
                let orow = &mut osl[i * n..(i + 1) * n];
                for j in 0..n {
                    let brow = &b[j * k..(j + 1) * k];
                    let mut acc = T::zero();
                    for c in 0..k {
                        acc += arow[c] * brow[c];
                    }
                    orow[j] += acc;
                }
            }
        } else {
            for i in 0..m {
                let arow = &asl[i * k..(i + 1) * k];
                let orow = &mut osl[i * n..(i + 1) * n];
                for (c, &aic) in arow.iter().enumerate() {
                    if aic == T::zero() {
                        continue;
                    }
                    let brow = &b[c * n..(c + 1) * n];
                    for j in 0..n {
                        orow[j] += aic * brow[j];
                    }
                }
            }
        }
    }
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &x in row.iter() {
        if x > max {
            max = x;
        }
    }
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Turns a row of logits into log-softmax values in place.
fn log_softmax_in_place<T: Real>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &x in row.iter() {
        if x > max {
            max = x;
        }
    }
    let mut sum = T::zero();
    for &x in row.iter() {
        sum += (x - max).exp();
    }
    let lse = sum.ln() + max;
    for x in row.iter_mut() {
        *x = *x - lse;
    }
}

fn row_stats<T: Real>(row: &[T], eps: T) -> (T, T) {
    let n = T::from_f64(row.len() as f64);
    let mut mean = T::zero();
    for &x in row {
        mean += x;
    }
    mean /= n;
    let mut var = T::zero();
    for &x in row {
        let d = x - mean;
        var += d * d;
    }
    var /= n;
    (mean, (var + eps).sqrt().recip())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zip_mul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    Tensor::from_vec(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect(),
    )
    .expect("same shape by construction")
}

fn accumulate<T: Real>(acc: &mut Tensor<T>, inc: &Tensor<T>) {
    debug_assert_eq!(acc.shape(), inc.shape());
    for (a, &b) in acc.data_mut().iter_mut().zip(inc.data()) {
        *a += b;
    }
}

fn same_shape<T: Real>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn is_suffix(suffix: &[usize], of: &[usize]) -> bool {
    !suffix.is_empty() && suffix.len() <= of.len() && of[of.len() - suffix.len()..] == *suffix
}

fn check_mask<T: Real>(op: &str, x: &Tensor<T>, m: &Tensor<T>) -> Result<()> {
    if x.rank() != 3 || m.shape() != &x.shape()[..2] {
        return Err(Error::shape(
            op,
            format!("x {:?} with mask {:?}, want (B,L,D) and (B,L)", x.shape(), m.shape()),
        ));
    }
    Ok(())
}
