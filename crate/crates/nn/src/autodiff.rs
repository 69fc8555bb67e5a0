//! Tape-based reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Tape`] records every primitive applied to [`Var`] handles in
//! execution order, so node ids are already a topological order and the
//! backward sweep simply walks them in reverse. Broadcasting is limited to
//! adding a `1 x c` row to every row (bias) and row-broadcast softmax masks.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{AutodiffError, Result};
use crate::params::{ParamGrads, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const LAYER_NORM_EPS: f64 = 1e-5;

enum Op<S> {
    Leaf,
    MatMul(usize, usize),
    /// `a * b^T`.
    MatMulNt(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Scale(usize, S),
    Relu(usize),
    /// Row softmax; the additive mask is a constant and needs no record.
    Softmax(usize),
    LogSoftmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        normed: Tensor<S>,
        inv_std: Vec<S>,
    },
    GatherRows {
        src: usize,
        rows: Vec<usize>,
    },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows {
        src: usize,
        start: usize,
    },
    SliceCols {
        src: usize,
        start: usize,
    },
    Log(usize),
    Sum(usize),
    Mean(usize),
}

struct Node<S> {
    value: Arc<Tensor<S>>,
    op: Op<S>,
    requires_grad: bool,
}

struct Inner<S> {
    nodes: Vec<Node<S>>,
    params: Vec<(usize, usize)>,
    macs: u64,
}

/// Records operations for one forward/backward pass.
pub struct Tape<S> {
    inner: RefCell<Inner<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t, S> {
    tape: &'t Tape<S>,
    id: usize,
}

impl<S> std::fmt::Debug for Var<'_, S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

/// Gradients of one scalar with respect to every node that required them.
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    params: Vec<(usize, usize)>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, var: Var<'_, S>) -> Option<&Tensor<S>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Per-parameter gradients for `store`; parameters that did not
    /// participate get zeros.
    pub fn params(&self, store: &ParamStore<S>) -> ParamGrads<S> {
        let mut out = ParamGrads::zeros_like(store);
        for &(index, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                out.tensor_mut(index).add_assign(g);
            }
        }
        out
    }
}

fn shape_err<S>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> AutodiffError
where
    S: Scalar,
{
    AutodiffError::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

fn matmul_into<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, out: &mut Tensor<S>) {
    let (r, k, c) = (a.rows(), a.cols(), b.cols());
    let ad = a.data();
    let bd = b.data();
    let od = out.data_mut();
    for i in 0..r {
        let orow = &mut od[i * c..(i + 1) * c];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == S::zero() {
                continue;
            }
            let brow = &bd[p * c..(p + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `a * b^T` with both operands row-major.
fn matmul_nt_into<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, out: &mut Tensor<S>) {
    let (r, c) = (a.rows(), b.rows());
    for i in 0..r {
        let arow = a.row(i);
        for j in 0..c {
            let v = dot(arow, b.row(j));
            out.set(i, j, out.get(i, j) + v);
        }
    }
}

/// `out += a^T * b`.
fn matmul_tn_into<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, out: &mut Tensor<S>) {
    let (r, k, c) = (a.rows(), a.cols(), b.cols());
    let od = out.data_mut();
    for i in 0..r {
        let brow = b.row(i);
        for p in 0..k {
            let av = a.get(i, p);
            if av == S::zero() {
                continue;
            }
            let orow = &mut od[p * c..(p + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn softmax_rows<S: Scalar>(x: &Tensor<S>, mask: Option<&Tensor<S>>) -> Tensor<S> {
    let mut out = x.clone();
    let cols = x.cols();
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        if let Some(mask) = mask {
            let mrow = if mask.rows() == 1 { mask.row(0) } else { mask.row(r) };
            for (v, &m) in row.iter_mut().zip(mrow) {
                *v += m;
            }
        }
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
        debug_assert_eq!(row.len(), cols);
    }
    out
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(Inner {
                nodes: Vec::new(),
                params: Vec::new(),
                macs: 0,
            }),
        }
    }

    fn push(&self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var<'_, S> {
        self.push_shared(Arc::new(value), op, requires_grad)
    }

    fn push_shared(&self, value: Arc<Tensor<S>>, op: Op<S>, requires_grad: bool) -> Var<'_, S> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn value(&self, id: usize) -> Arc<Tensor<S>> {
        Arc::clone(&self.inner.borrow().nodes[id].value)
    }

    fn requires(&self, id: usize) -> bool {
        self.inner.borrow().nodes[id].requires_grad
    }

    fn add_macs(&self, macs: usize) {
        self.inner.borrow_mut().macs += macs as u64;
    }

    /// A leaf that never receives gradients.
    pub fn constant(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives gradients.
    pub fn variable(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(value, Op::Leaf, true)
    }

    /// Registers parameter `index` of `store` as a gradient-receiving leaf.
    /// Repeated calls for the same index return the same node.
    pub fn param(&self, store: &ParamStore<S>, index: usize) -> Var<'_, S> {
        if let Some(&(_, id)) = self.inner.borrow().params.iter().find(|(i, _)| *i == index) {
            return Var { tape: self, id };
        }
        let var = self.push_shared(store.shared(index), Op::Leaf, true);
        self.inner.borrow_mut().params.push((index, var.id));
        var
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multiply-accumulate operations performed by matrix products so far.
    pub fn macs(&self) -> u64 {
        self.inner.borrow().macs
    }

    /// Reverse sweep from a `1 x 1` loss.
    pub fn backward(&self, loss: Var<'_, S>) -> Result<Gradients<S>> {
        let inner = self.inner.borrow();
        let nodes = &inner.nodes;
        if nodes[loss.id].value.shape() != [1, 1] {
            return Err(AutodiffError::InvalidUse(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            ))
            .into());
        }
        let mut grads: Vec<Option<Tensor<S>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        if nodes[loss.id].requires_grad {
            grads[loss.id] = Some(Tensor::scalar(S::one()));
        }
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            backprop(nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: inner.params.clone(),
        })
    }
}

fn accumulate<S: Scalar>(
    nodes: &[Node<S>],
    grads: &mut [Option<Tensor<S>>],
    id: usize,
    make: impl FnOnce() -> Tensor<S>,
) {
    if !nodes[id].requires_grad {
        return;
    }
    let g = make();
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Like [`accumulate`] but writes straight into the parent's gradient buffer.
fn accumulate_with<S: Scalar>(
    nodes: &[Node<S>],
    grads: &mut [Option<Tensor<S>>],
    id: usize,
    write: impl FnOnce(&mut Tensor<S>),
) {
    if !nodes[id].requires_grad {
        return;
    }
    let shape = nodes[id].value.shape();
    let slot = grads[id].get_or_insert_with(|| Tensor::zeros(shape[0], shape[1]));
    write(slot);
}

fn backprop<S: Scalar>(
    nodes: &[Node<S>],
    node: &Node<S>,
    g: &Tensor<S>,
    grads: &mut [Option<Tensor<S>>],
) {
    let val = |id: usize| &*nodes[id].value;
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            // dA = dC B^T, dB = A^T dC
            accumulate_with(nodes, grads, a, |da| matmul_nt_into(g, val(b), da));
            accumulate_with(nodes, grads, b, |db| matmul_tn_into(val(a), g, db));
        }
        &Op::MatMulNt(a, b) => {
            // C = A B^T: dA = dC B, dB = dC^T A
            accumulate_with(nodes, grads, a, |da| matmul_into(g, val(b), da));
            accumulate_with(nodes, grads, b, |db| matmul_tn_into(g, val(a), db));
        }
        &Op::Transpose(a) => accumulate(nodes, grads, a, || g.transpose()),
        &Op::Add(a, b) => {
            accumulate(nodes, grads, a, || g.clone());
            accumulate(nodes, grads, b, || g.clone());
        }
        &Op::AddRow(a, b) => {
            accumulate(nodes, grads, a, || g.clone());
            accumulate_with(nodes, grads, b, |db| {
                for r in 0..g.rows() {
                    for (d, &v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
            });
        }
        &Op::Scale(a, c) => accumulate(nodes, grads, a, || g.map(|v| v * c)),
        &Op::Relu(a) => {
            let x = val(a);
            accumulate(nodes, grads, a, || {
                Tensor::from_fn(x.rows(), x.cols(), |r, c| {
                    if x.get(r, c) > S::zero() {
                        g.get(r, c)
                    } else {
                        S::zero()
                    }
                })
            });
        }
        &Op::Softmax(a) => {
            let y = &*node.value;
            accumulate_with(nodes, grads, a, |dx| {
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let inner = dot(yr, gr);
                    for ((d, &yv), &gv) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *d += yv * (gv - inner);
                    }
                }
            });
        }
        &Op::LogSoftmax(a) => {
            let y = &*node.value;
            accumulate_with(nodes, grads, a, |dx| {
                for r in 0..y.rows() {
                    let gr = g.row(r);
                    let total = gr.iter().copied().sum::<S>();
                    for ((d, &yv), &gv) in dx.row_mut(r).iter_mut().zip(y.row(r)).zip(gr) {
                        *d += gv - yv.exp() * total;
                    }
                }
            });
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            normed,
            inv_std,
        } => {
            let gv = val(*gain);
            accumulate_with(nodes, grads, *gain, |dg| {
                for r in 0..g.rows() {
                    for ((d, &gr), &nr) in dg.row_mut(0).iter_mut().zip(g.row(r)).zip(normed.row(r)) {
                        *d += gr * nr;
                    }
                }
            });
            accumulate_with(nodes, grads, *bias, |db| {
                for r in 0..g.rows() {
                    for (d, &gr) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                        *d += gr;
                    }
                }
            });
            accumulate_with(nodes, grads, *x, |dx| {
                let cols = g.cols();
                let nf = S::lit(cols as f64);
                let mut dxhat = vec![S::zero(); cols];
                for r in 0..g.rows() {
                    for c in 0..cols {
                        dxhat[c] = g.get(r, c) * gv.get(0, c);
                    }
                    let nr = normed.row(r);
                    let mean_d = dxhat.iter().copied().sum::<S>() / nf;
                    let mean_dn = dot(&dxhat, nr) / nf;
                    let inv = inv_std[r];
                    for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                        *d += inv * (dxhat[c] - mean_d - nr[c] * mean_dn);
                    }
                }
            });
        }
        Op::GatherRows { src, rows } => {
            accumulate_with(nodes, grads, *src, |ds| {
                for (k, &r) in rows.iter().enumerate() {
                    for (d, &v) in ds.row_mut(r).iter_mut().zip(g.row(k)) {
                        *d += v;
                    }
                }
            });
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let rows = val(p).rows();
                accumulate_with(nodes, grads, p, |dp| {
                    for r in 0..rows {
                        for (d, &v) in dp.row_mut(r).iter_mut().zip(g.row(offset + r)) {
                            *d += v;
                        }
                    }
                });
                offset += rows;
            }
        }
        Op::ConcatCols(parts) => {
            let mut offset = 0;
            for &p in parts {
                let cols = val(p).cols();
                accumulate_with(nodes, grads, p, |dp| {
                    for r in 0..g.rows() {
                        for (d, &v) in dp.row_mut(r).iter_mut().zip(&g.row(r)[offset..offset + cols]) {
                            *d += v;
                        }
                    }
                });
                offset += cols;
            }
        }
        &Op::SliceRows { src, start } => {
            accumulate_with(nodes, grads, src, |ds| {
                for r in 0..g.rows() {
                    for (d, &v) in ds.row_mut(start + r).iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
            });
        }
        &Op::SliceCols { src, start } => {
            accumulate_with(nodes, grads, src, |ds| {
                for r in 0..g.rows() {
                    let drow = &mut ds.row_mut(r)[start..start + g.cols()];
                    for (d, &v) in drow.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
            });
        }
        &Op::Log(a) => {
            let x = val(a);
            accumulate(nodes, grads, a, || {
                Tensor::from_fn(x.rows(), x.cols(), |r, c| g.get(r, c) / x.get(r, c))
            });
        }
        &Op::Sum(a) => {
            let [r, c] = val(a).shape();
            accumulate(nodes, grads, a, || Tensor::filled(r, c, g.item()));
        }
        &Op::Mean(a) => {
            let [r, c] = val(a).shape();
            let scale = g.item() / S::lit((r * c) as f64);
            accumulate(nodes, grads, a, || Tensor::filled(r, c, scale));
        }
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn value(self) -> Arc<Tensor<S>> {
        self.tape.value(self.id)
    }

    pub fn shape(self) -> [usize; 2] {
        self.value().shape()
    }

    pub fn requires_grad(self) -> bool {
        self.tape.requires(self.id)
    }

    fn same_tape(self, other: Var<'t, S>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(AutodiffError::InvalidUse("operands live on different tapes".into()).into())
        }
    }

    fn grad2(self, other: Var<'t, S>) -> bool {
        self.requires_grad() || other.requires_grad()
    }

    pub fn matmul(self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(rhs)?;
        let (a, b) = (self.value(), rhs.value());
        if a.cols() != b.rows() {
            return Err(shape_err("matmul", &a, &b).into());
        }
        let mut out = Tensor::zeros(a.rows(), b.cols());
        matmul_into(&a, &b, &mut out);
        self.tape.add_macs(a.rows() * a.cols() * b.cols());
        Ok(self.tape.push(out, Op::MatMul(self.id, rhs.id), self.grad2(rhs)))
    }

    /// `self * rhs^T`.
    pub fn matmul_nt(self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(rhs)?;
        let (a, b) = (self.value(), rhs.value());
        if a.cols() != b.cols() {
            return Err(shape_err("matmul_nt", &a, &b).into());
        }
        let mut out = Tensor::zeros(a.rows(), b.rows());
        matmul_nt_into(&a, &b, &mut out);
        self.tape.add_macs(a.rows() * a.cols() * b.rows());
        Ok(self.tape.push(out, Op::MatMulNt(self.id, rhs.id), self.grad2(rhs)))
    }

    pub fn transpose(self) -> Var<'t, S> {
        let out = self.value().transpose();
        self.tape.push(out, Op::Transpose(self.id), self.requires_grad())
    }

    pub fn add(self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(rhs)?;
        let (a, b) = (self.value(), rhs.value());
        if a.shape() != b.shape() {
            return Err(shape_err("add", &a, &b).into());
        }
        let mut out = (*a).clone();
        out.add_assign(&b);
        Ok(self.tape.push(out, Op::Add(self.id, rhs.id), self.grad2(rhs)))
    }

    /// Adds a `1 x c` row to every row.
    pub fn add_row(self, row: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(row)?;
        let (a, b) = (self.value(), row.value());
        if b.rows() != 1 || a.cols() != b.cols() {
            return Err(shape_err("add_row", &a, &b).into());
        }
        let mut out = (*a).clone();
        for r in 0..out.rows() {
            for (o, &v) in out.row_mut(r).iter_mut().zip(b.row(0)) {
                *o += v;
            }
        }
        Ok(self.tape.push(out, Op::AddRow(self.id, row.id), self.grad2(row)))
    }

    pub fn scale(self, c: S) -> Var<'t, S> {
        let out = self.value().map(|v| v * c);
        self.tape.push(out, Op::Scale(self.id, c), self.requires_grad())
    }

    pub fn relu(self) -> Var<'t, S> {
        let out = self.value().map(|v| v.max(S::zero()));
        self.tape.push(out, Op::Relu(self.id), self.requires_grad())
    }

    /// Row-wise softmax of `self + mask`; `mask` is `rows x cols` or `1 x cols`.
    pub fn softmax(self, mask: Option<&Tensor<S>>) -> Result<Var<'t, S>> {
        let x = self.value();
        if let Some(m) = mask {
            if m.cols() != x.cols() || (m.rows() != 1 && m.rows() != x.rows()) {
                return Err(shape_err("softmax", &x, m).into());
            }
        }
        let out = softmax_rows(&x, mask);
        Ok(self.tape.push(out, Op::Softmax(self.id), self.requires_grad()))
    }

    /// Row-wise log-softmax of `self + mask`, same mask rules as [`Var::softmax`].
    pub fn log_softmax(self, mask: Option<&Tensor<S>>) -> Result<Var<'t, S>> {
        let x = self.value();
        if let Some(m) = mask {
            if m.cols() != x.cols() || (m.rows() != 1 && m.rows() != x.rows()) {
                return Err(shape_err("log_softmax", &x, m).into());
            }
        }
        let mut out = (*x).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            if let Some(mask) = mask {
                let mrow = if mask.rows() == 1 { mask.row(0) } else { mask.row(r) };
                for (v, &m) in row.iter_mut().zip(mrow) {
                    *v += m;
                }
            }
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            // Shift first so large logits do not round away the normalizer.
            let log_total = row.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
            for v in row.iter_mut() {
                *v = (*v - max) - log_total;
            }
        }
        Ok(self.tape.push(out, Op::LogSoftmax(self.id), self.requires_grad()))
    }

    /// Per-row normalization with learned `1 x c` gain and bias.
    pub fn layer_norm(self, gain: Var<'t, S>, bias: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(gain)?;
        self.same_tape(bias)?;
        let (x, gv, bv) = (self.value(), gain.value(), bias.value());
        for p in [&gv, &bv] {
            if p.shape() != [1, x.cols()] {
                return Err(shape_err("layer_norm", &x, p).into());
            }
        }
        let cols = x.cols();
        let nf = S::lit(cols as f64);
        let eps = S::lit(LAYER_NORM_EPS);
        let mut normed = Tensor::zeros(x.rows(), cols);
        let mut out = Tensor::zeros(x.rows(), cols);
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<S>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / nf;
            let inv = S::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                normed.set(r, c, h);
                out.set(r, c, h * gv.get(0, c) + bv.get(0, c));
            }
        }
        let requires = self.requires_grad() || gain.requires_grad() || bias.requires_grad();
        Ok(self.tape.push(
            out,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                normed,
                inv_std,
            },
            requires,
        ))
    }

    /// Selects rows by index (embedding lookup).
    pub fn gather_rows(self, rows: &[usize]) -> Result<Var<'t, S>> {
        let x = self.value();
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
            return Err(AutodiffError::Shape {
                op: "gather_rows",
                lhs: x.shape(),
                rhs: [bad, 1],
            }
            .into());
        }
        let mut data = Vec::with_capacity(rows.len() * x.cols());
        for &r in rows {
            data.extend_from_slice(x.row(r));
        }
        let out = Tensor::from_vec(rows.len(), x.cols(), data)?;
        Ok(self.tape.push(
            out,
            Op::GatherRows {
                src: self.id,
                rows: rows.to_vec(),
            },
            self.requires_grad(),
        ))
    }

    pub fn slice_rows(self, start: usize, len: usize) -> Result<Var<'t, S>> {
        let x = self.value();
        if start + len > x.rows() || len == 0 {
            return Err(AutodiffError::Shape {
                op: "slice_rows",
                lhs: x.shape(),
                rhs: [start, len],
            }
            .into());
        }
        let data = x.data()[start * x.cols()..(start + len) * x.cols()].to_vec();
        let out = Tensor::from_vec(len, x.cols(), data)?;
        Ok(self
            .tape
            .push(out, Op::SliceRows { src: self.id, start }, self.requires_grad()))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t, S>> {
        let x = self.value();
        if start + len > x.cols() || len == 0 {
            return Err(AutodiffError::Shape {
                op: "slice_cols",
                lhs: x.shape(),
                rhs: [start, len],
            }
            .into());
        }
        let mut data = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let out = Tensor::from_vec(x.rows(), len, data)?;
        Ok(self
            .tape
            .push(out, Op::SliceCols { src: self.id, start }, self.requires_grad()))
    }

    pub fn ln(self) -> Var<'t, S> {
        let out = self.value().map(|v| v.ln());
        self.tape.push(out, Op::Log(self.id), self.requires_grad())
    }

    pub fn sum(self) -> Var<'t, S> {
        let total = self.value().data().iter().copied().sum::<S>();
        self.tape
            .push(Tensor::scalar(total), Op::Sum(self.id), self.requires_grad())
    }

    pub fn mean(self) -> Var<'t, S> {
        let x = self.value();
        let total = x.data().iter().copied().sum::<S>() / S::lit(x.len() as f64);
        self.tape
            .push(Tensor::scalar(total), Op::Mean(self.id), self.requires_grad())
    }
}

/// Stacks tensors vertically.
pub fn concat_rows<'t, S: Scalar>(parts: &[Var<'t, S>]) -> Result<Var<'t, S>> {
    let first = parts
        .first()
        .ok_or_else(|| AutodiffError::InvalidUse("concat_rows of nothing".into()))?;
    let tape = first.tape;
    let cols = first.shape()[1];
    let mut data = Vec::new();
    let mut rows = 0;
    let mut requires = false;
    for p in parts {
        first.same_tape(*p)?;
        let v = p.value();
        if v.cols() != cols {
            return Err(shape_err("concat_rows", &first.value(), &v).into());
        }
        rows += v.rows();
        data.extend_from_slice(v.data());
        requires |= p.requires_grad();
    }
    let out = Tensor::from_vec(rows, cols, data)?;
    Ok(tape.push(out, Op::ConcatRows(parts.iter().map(|p| p.id).collect()), requires))
}

/// Joins tensors side by side.
pub fn concat_cols<'t, S: Scalar>(parts: &[Var<'t, S>]) -> Result<Var<'t, S>> {
    let first = parts
        .first()
        .ok_or_else(|| AutodiffError::InvalidUse("concat_cols of nothing".into()))?;
    let tape = first.tape;
    let rows = first.shape()[0];
    let values: Vec<Arc<Tensor<S>>> = parts.iter().map(|p| p.value()).collect();
    let mut requires = false;
    for (p, v) in parts.iter().zip(&values) {
        first.same_tape(*p)?;
        if v.rows() != rows {
            return Err(shape_err("concat_cols", &values[0], v).into());
        }
        requires |= p.requires_grad();
    }
    let cols: usize = values.iter().map(|v| v.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for v in &values {
            data.extend_from_slice(v.row(r));
        }
    }
    let out = Tensor::from_vec(rows, cols, data)?;
    Ok(tape.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect()), requires))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn softmax_uniform_and_masked() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::filled(1, 4, 0.3));
        let y = x.softmax(None).unwrap().value();
        assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let mask = t(1, 4, &[-1e9, 0.0, -1e9, -1e9]);
        let x = tape.constant(t(1, 4, &[5.0, -2.0, 7.0, 1.0]));
        let y = x.softmax(Some(&mask)).unwrap().value();
        assert_eq!(y.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        let err = a.matmul(b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        assert!(a.add(tape.constant(Tensor::zeros(3, 2))).is_err());
        assert!(a.add_row(tape.constant(Tensor::zeros(1, 2))).is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::<f64>::new();
        let a = tape.variable(Tensor::zeros(2, 2));
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn sum_gradient_is_ones_and_constants_get_none() {
        let tape = Tape::<f64>::new();
        let theta = tape.variable(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let c = tape.constant(t(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        let loss = theta.sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(theta).unwrap().data(), &[1.0; 4]);
        assert!(grads.get(c).is_none());

        let tape = Tape::<f64>::new();
        let theta = tape.variable(t(1, 2, &[1.0, 2.0]));
        let loss = tape.constant(Tensor::scalar(3.0)).sum();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(theta).is_none());
    }

    #[test]
    fn shared_parent_accumulates() {
        let tape = Tape::<f64>::new();
        let x = tape.variable(t(1, 1, &[3.0]));
        let y = x.add(x).unwrap().sum();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 2.0);
    }

    #[test]
    fn macs_counted() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(3, 4));
        a.matmul(b).unwrap();
        a.matmul_nt(tape.constant(Tensor::zeros(5, 3))).unwrap();
        assert_eq!(tape.macs(), 24 + 30);
    }
}
