//! Reverse-mode differentiation over a flat operation record.
//!
//! Every primitive appends one node holding its output value and the inputs it
//! needs for the backward pass. Nodes are appended in evaluation order, so the
//! record is already topologically sorted and `backward` simply walks it in
//! reverse. Parameters are never copied onto the tape wholesale: ops refer to
//! them by [`ParamId`] and write their gradients straight into the store.

use std::sync::Arc;

use super::lattice::{ChainConstraints, ChainScores};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Row { param: ParamId, row: usize },
    ParamAt { param: ParamId, index: usize },
    Affine { w: ParamId, b: Option<ParamId>, x: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    OneMinus(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Stack(Vec<NodeId>),
    At { x: NodeId, index: usize },
    Mean(Vec<NodeId>),
    Max { inputs: Vec<NodeId>, argmax: Vec<usize> },
    Sum(NodeId),
    AddN(Vec<NodeId>),
    MaskedSoftmax(NodeId),
    NegLogAt { x: NodeId, index: usize },
    BceWithLogits { x: NodeId, target: f64 },
    Dropout { x: NodeId, scale: Vec<f64> },
    Normalize { x: NodeId, inv_std: f64 },
    ChainLogPartition {
        emissions: NodeId,
        transitions: ParamId,
        start: ParamId,
        end: ParamId,
        constraints: Arc<ChainConstraints>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_len(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn vec_of(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.constant(Tensor::zeros(&[len]))
    }

    pub fn param(&mut self, store: &ParamStore, param: ParamId) -> NodeId {
        self.push(store.value(param).clone(), Op::Param(param))
    }

    /// Row `row` of a rank-2 parameter (embedding lookup).
    pub fn row(&mut self, store: &ParamStore, param: ParamId, row: usize) -> Result<NodeId> {
        let table = store.value(param);
        let (rows, _) = table
            .dims2()
            .ok_or_else(|| Error::Contract("row lookup on non-matrix".into()))?;
        if row >= rows {
            return Err(Error::Contract(format!(
                "row {row} out of range for {} ({rows} rows)",
                store.get(param).name
            )));
        }
        let value = Tensor::vector(table.row(row).to_vec());
        Ok(self.push(value, Op::Row { param, row }))
    }

    /// Single entry of a parameter as a scalar node.
    pub fn param_at(&mut self, store: &ParamStore, param: ParamId, index: usize) -> NodeId {
        let v = store.value(param).data()[index];
        self.push(Tensor::scalar(v), Op::ParamAt { param, index })
    }

    /// `W x + b` for `W: [rows, cols]`, `x: [cols]`, `b: [rows]`.
    pub fn affine(
        &mut self,
        store: &ParamStore,
        w: ParamId,
        b: Option<ParamId>,
        x: NodeId,
    ) -> Result<NodeId> {
        let wt = store.value(w);
        let xv = self.value(x);
        let (rows, cols) = wt
            .dims2()
            .ok_or_else(|| Error::dim("affine", wt.shape(), xv.shape()))?;
        if xv.len() != cols {
            return Err(Error::dim("affine", wt.shape(), xv.shape()));
        }
        let xd = xv.data();
        let wd = wt.data();
        let mut out = match b {
            Some(b) => {
                let bv = store.value(b);
                if bv.len() != rows {
                    return Err(Error::dim("affine bias", wt.shape(), bv.shape()));
                }
                bv.data().to_vec()
            }
            None => vec![0.0; rows],
        };
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wd[r * cols..(r + 1) * cols];
            *o += row.iter().zip(xd).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(self.push(Tensor::vector(out), Op::Affine { w, b, x }))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        same_len(name, av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| f(*v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(value, op)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.map(x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| 1.0 - v, Op::OneMinus(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    /// Layer normalization without gain or bias: zero mean, unit variance
    /// (`eps` = 1e-12 added to the variance).
    pub fn normalize(&mut self, x: NodeId) -> NodeId {
        let xv = self.vec_of(x);
        let n = xv.len() as f64;
        let mean = xv.iter().sum::<f64>() / n;
        let var = xv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + 1e-12).sqrt();
        let data = xv.iter().map(|v| (v - mean) * inv_std).collect();
        self.push(Tensor::vector(data), Op::Normalize { x, inv_std })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let data: Vec<f64> = parts.iter().flat_map(|p| self.vec_of(*p).iter().copied()).collect();
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xv = self.vec_of(x);
        if start + len > xv.len() {
            return Err(Error::dim("slice", &[xv.len()], &[start, len]));
        }
        let value = Tensor::vector(xv[start..start + len].to_vec());
        Ok(self.push(value, Op::Slice { x, start }))
    }

    /// Stacks equal-length vectors into a `[rows, len]` matrix.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Contract("stack of zero rows".into()))?;
        let cols = self.vec_of(*first).len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let v = self.vec_of(*r);
            if v.len() != cols {
                return Err(Error::dim("stack", &[cols], &[v.len()]));
            }
            data.extend_from_slice(v);
        }
        let value = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(value, Op::Stack(rows.to_vec())))
    }

    /// Entry `index` (flat, row-major) as a scalar.
    pub fn at(&mut self, x: NodeId, index: usize) -> NodeId {
        let v = self.vec_of(x)[index];
        self.push(Tensor::scalar(v), Op::At { x, index })
    }

    fn check_seq(&self, op: &'static str, inputs: &[NodeId]) -> Result<usize> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Contract(format!("{op} over empty sequence")))?;
        let len = self.vec_of(*first).len();
        for i in inputs {
            let l = self.vec_of(*i).len();
            if l != len {
                return Err(Error::dim(op, &[len], &[l]));
            }
        }
        Ok(len)
    }

    /// Elementwise mean of equal-length vectors.
    pub fn mean(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let len = self.check_seq("mean", inputs)?;
        let mut out = vec![0.0; len];
        for i in inputs {
            for (o, v) in out.iter_mut().zip(self.vec_of(*i)) {
                *o += v;
            }
        }
        let k = inputs.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        Ok(self.push(Tensor::vector(out), Op::Mean(inputs.to_vec())))
    }

    /// Elementwise maximum; ties go to the earliest input.
    pub fn max(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let len = self.check_seq("max", inputs)?;
        let mut out = self.vec_of(inputs[0]).to_vec();
        let mut argmax = vec![0usize; len];
        for (k, i) in inputs.iter().enumerate().skip(1) {
            for (d, v) in self.vec_of(*i).iter().enumerate() {
                if *v > out[d] {
                    out[d] = *v;
                    argmax[d] = k;
                }
            }
        }
        let op = Op::Max {
            inputs: inputs.to_vec(),
            argmax,
        };
        Ok(self.push(Tensor::vector(out), op))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.vec_of(x).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Elementwise sum of equal-shape nodes.
    pub fn add_n(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        self.check_seq("add_n", inputs)?;
        let mut out = self.value(inputs[0]).clone();
        for i in &inputs[1..] {
            let src = self.nodes[i.0].value.data().to_vec();
            for (o, v) in out.data_mut().iter_mut().zip(src) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::AddN(inputs.to_vec())))
    }

    /// Softmax restricted to entries where `mask` is true; the rest are exactly 0.
    pub fn masked_softmax(&mut self, logits: NodeId, mask: &[bool]) -> Result<NodeId> {
        let value = masked_softmax(self.vec_of(logits), mask)?;
        Ok(self.push(Tensor::vector(value), Op::MaskedSoftmax(logits)))
    }

    /// `-ln x[index]`, the cross-entropy of a probability vector against one class.
    pub fn neg_log_at(&mut self, probs: NodeId, index: usize) -> Result<NodeId> {
        let p = self.vec_of(probs);
        if index >= p.len() {
            return Err(Error::dim("neg_log_at", &[p.len()], &[index]));
        }
        let v = -p[index].ln();
        Ok(self.push(Tensor::scalar(v), Op::NegLogAt { x: probs, index }))
    }

    /// Binary cross-entropy of `sigmoid(logit)` against `target`, evaluated stably.
    pub fn bce_with_logits(&mut self, logit: NodeId, target: f64) -> Result<NodeId> {
        let lv = self.value(logit);
        if !lv.is_scalar() {
            return Err(Error::dim("bce_with_logits", lv.shape(), &[1]));
        }
        let x = lv.item();
        let loss = x.max(0.0) - target * x + (-x.abs()).exp().ln_1p();
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits { x: logit, target }))
    }

    /// Multiplies elementwise by a fixed scale vector (0 for dropped units,
    /// `1/(1-p)` for kept ones).
    pub fn dropout(&mut self, x: NodeId, scale: Vec<f64>) -> Result<NodeId> {
        let xv = self.vec_of(x);
        if xv.len() != scale.len() {
            return Err(Error::dim("dropout", &[xv.len()], &[scale.len()]));
        }
        let data = xv.iter().zip(&scale).map(|(a, s)| a * s).collect();
        Ok(self.push(Tensor::vector(data), Op::Dropout { x, scale }))
    }

    /// Log-partition of a constrained linear chain with emissions `[len, tags]`.
    pub fn chain_log_partition(
        &mut self,
        store: &ParamStore,
        emissions: NodeId,
        transitions: ParamId,
        start: ParamId,
        end: ParamId,
        constraints: Arc<ChainConstraints>,
    ) -> Result<NodeId> {
        let em = self.value(emissions);
        let (len, tags) = em
            .dims2()
            .ok_or_else(|| Error::dim("chain_log_partition", em.shape(), &[constraints.num_tags]))?;
        if tags != constraints.num_tags || len == 0 {
            return Err(Error::dim("chain_log_partition", em.shape(), &[constraints.num_tags]));
        }
        let scores = ChainScores {
            emissions: em.data(),
            len,
            transitions: store.value(transitions).data(),
            start: store.value(start).data(),
            end: store.value(end).data(),
            constraints: &constraints,
        };
        let log_z = scores.log_partition();
        let op = Op::ChainLogPartition {
            emissions,
            transitions,
            start,
            end,
            constraints,
        };
        Ok(self.push(Tensor::scalar(log_z), op))
    }

    /// Accumulates `d loss / d param` into every parameter reached from `loss`.
    /// Gradients add to whatever the store already holds.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = node.value.data();
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    add_into(store.get_mut(*p).grad.data_mut(), &g);
                }
                Op::Row { param, row } => {
                    let grad = &mut store.get_mut(*param).grad;
                    let cols = grad.shape()[1];
                    add_into(&mut grad.data_mut()[row * cols..(row + 1) * cols], &g);
                }
                Op::ParamAt { param, index } => {
                    store.get_mut(*param).grad.data_mut()[*index] += g[0];
                }
                Op::Affine { w, b, x } => {
                    let xv = self.vec_of(*x);
                    let cols = xv.len();
                    let mut dx = vec![0.0; cols];
                    {
                        let param = store.get_mut(*w);
                        let wd = param.value.data();
                        for (r, gr) in g.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            let row = &wd[r * cols..(r + 1) * cols];
                            for (d, wv) in dx.iter_mut().zip(row) {
                                *d += gr * wv;
                            }
                        }
                        let gd = param.grad.data_mut();
                        for (r, gr) in g.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            let grow = &mut gd[r * cols..(r + 1) * cols];
                            for (gw, xj) in grow.iter_mut().zip(xv) {
                                *gw += gr * xj;
                            }
                        }
                    }
                    if let Some(b) = b {
                        add_into(store.get_mut(*b).grad.data_mut(), &g);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.iter().map(|v| -v).collect());
                }
                Op::Mul(a, b) => {
                    let av = self.vec_of(*a);
                    let bv = self.vec_of(*b);
                    let da = g.iter().zip(bv).map(|(gi, bi)| gi * bi).collect();
                    let db = g.iter().zip(av).map(|(gi, ai)| gi * ai).collect();
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(x, f) => {
                    accumulate(&mut grads, *x, g.iter().map(|v| v * f).collect());
                }
                Op::OneMinus(x) => {
                    accumulate(&mut grads, *x, g.iter().map(|v| -v).collect());
                }
                Op::Sigmoid(x) => {
                    let dx = g.iter().zip(y).map(|(gi, yi)| gi * yi * (1.0 - yi)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let dx = g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.vec_of(*p).len();
                        accumulate(&mut grads, *p, g[offset..offset + len].to_vec());
                        offset += len;
                    }
                }
                Op::Slice { x, start } => {
                    let mut dx = vec![0.0; self.vec_of(*x).len()];
                    dx[*start..*start + g.len()].copy_from_slice(&g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Stack(rows) => {
                    let cols = g.len() / rows.len();
                    for (r, id) in rows.iter().enumerate() {
                        accumulate(&mut grads, *id, g[r * cols..(r + 1) * cols].to_vec());
                    }
                }
                Op::At { x, index } => {
                    let mut dx = vec![0.0; self.vec_of(*x).len()];
                    dx[*index] = g[0];
                    accumulate(&mut grads, *x, dx);
                }
                Op::Mean(inputs) => {
                    let k = inputs.len() as f64;
                    let share: Vec<f64> = g.iter().map(|v| v / k).collect();
                    for i in inputs {
                        accumulate(&mut grads, *i, share.clone());
                    }
                }
                Op::Max { inputs, argmax } => {
                    let len = g.len();
                    for (k, i) in inputs.iter().enumerate() {
                        let dx: Vec<f64> = (0..len)
                            .map(|d| if argmax[d] == k { g[d] } else { 0.0 })
                            .collect();
                        accumulate(&mut grads, *i, dx);
                    }
                }
                Op::Sum(x) => {
                    let len = self.vec_of(*x).len();
                    accumulate(&mut grads, *x, vec![g[0]; len]);
                }
                Op::AddN(inputs) => {
                    for i in inputs {
                        accumulate(&mut grads, *i, g.clone());
                    }
                }
                Op::MaskedSoftmax(x) => {
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    let dx = g.iter().zip(y).map(|(gi, yi)| yi * (gi - dot)).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::NegLogAt { x, index } => {
                    let xv = self.vec_of(*x);
                    let mut dx = vec![0.0; xv.len()];
                    dx[*index] = -g[0] / xv[*index];
                    accumulate(&mut grads, *x, dx);
                }
                Op::BceWithLogits { x, target } => {
                    let logit = self.vec_of(*x)[0];
                    accumulate(&mut grads, *x, vec![g[0] * (sigmoid(logit) - target)]);
                }
                Op::Normalize { x, inv_std } => {
                    let n = g.len() as f64;
                    let g_mean = g.iter().sum::<f64>() / n;
                    let gy_mean = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
                    let dx = g
                        .iter()
                        .zip(y)
                        .map(|(gi, yi)| inv_std * (gi - g_mean - yi * gy_mean))
                        .collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Dropout { x, scale } => {
                    let dx = g.iter().zip(scale).map(|(gi, s)| gi * s).collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::ChainLogPartition {
                    emissions,
                    transitions,
                    start,
                    end,
                    constraints,
                } => {
                    let em = self.value(*emissions);
                    let (len, _) = em.dims2().expect("checked at record time");
                    let marg = ChainScores {
                        emissions: em.data(),
                        len,
                        transitions: store.value(*transitions).data(),
                        start: store.value(*start).data(),
                        end: store.value(*end).data(),
                        constraints,
                    }
                    .marginals();
                    let scale = g[0];
                    let scaled = |v: &[f64]| v.iter().map(|m| m * scale).collect::<Vec<_>>();
                    add_into(store.get_mut(*transitions).grad.data_mut(), &scaled(&marg.pairwise));
                    add_into(store.get_mut(*start).grad.data_mut(), &scaled(&marg.start));
                    add_into(store.get_mut(*end).grad.data_mut(), &scaled(&marg.end));
                    accumulate(&mut grads, *emissions, scaled(&marg.unary));
                }
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => add_into(existing, &g),
        slot @ None => *slot = Some(g),
    }
}

/// Softmax over the entries selected by `mask`; masked entries are exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::dim("masked_softmax", &[logits.len()], &[mask.len()]));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidMask("no entry survives the mask".into()));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}
