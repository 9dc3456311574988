use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;
use std::sync::Arc;

use super::param::{ParamId, ParamStore};
use super::rng::DropoutMode;
use super::{Tensor, TensorError};

/// Backward rule for [`Tape::custom`]: given the input values, the output
/// value and the output gradient, returns one gradient buffer per input.
pub type BackwardFn = Arc<dyn Fn(&[&Tensor], &Tensor, &[f64]) -> Vec<Vec<f64>> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Normalize down each column.
    Rows,
    /// Normalize across each row.
    Cols,
}

type NodeId = usize;

enum Op {
    Leaf,
    Param,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRow(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    Transpose(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    Gather(NodeId, Arc<[usize]>),
    Softmax(NodeId, Axis),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MulConst(NodeId, Arc<Tensor>),
    AddConst(NodeId),
    Propagate(NodeId, Arc<[(usize, usize, f64)]>),
    MeanRows(NodeId),
    BlendRows(NodeId, NodeId, Arc<[bool]>),
    CrossEntropy {
        logits: NodeId,
        targets: Arc<[usize]>,
        probs: Vec<f64>,
    },
    Sum(NodeId),
    Custom(Vec<NodeId>, BackwardFn),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// A tape is single-threaded; build one per forward pass and drop it after
/// the gradients have been harvested.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    bound: RefCell<BTreeMap<ParamId, NodeId>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    if t.shape().len() != 2 {
        return Err(TensorError::invalid(
            op,
            format!("expected a matrix, got shape {:?}", t.shape()),
        ));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

// out(m x n) += a(m x k) * b(k x n)
fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

// out(m x n) += a(m x k) * b(n x k)^T
fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

// out(k x n) += a(m x k)^T * b(m x n)
fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_slice(xs: &[f64], out: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn val(&self, id: NodeId) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// A free input whose gradient is tracked (useful for oracles).
    pub fn input(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a parameter. Repeated binds of the same parameter return the
    /// same node so its gradient contributions are summed.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.bound.borrow().get(&id) {
            return Var {
                tape: self,
                id: node,
            };
        }
        let value = store.shared_value(id);
        let var = {
            let mut nodes = self.nodes.borrow_mut();
            nodes.push(Node {
                value,
                op: Op::Param,
                requires_grad: true,
            });
            Var {
                tape: self,
                id: nodes.len() - 1,
            }
        };
        self.bound.borrow_mut().insert(id, var.id);
        var
    }

    /// Records an operation with a caller-supplied backward rule.
    pub fn custom<'t>(
        &'t self,
        inputs: &[Var<'t>],
        output: Tensor,
        backward: BackwardFn,
    ) -> Var<'t> {
        let ids: Vec<NodeId> = inputs.iter().map(|v| v.id).collect();
        let rg = ids.iter().any(|&i| self.rg(i));
        self.push(output, Op::Custom(ids, backward), rg)
    }

    /// Runs reverse-mode accumulation from `root`, seeding it with ones.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.id + 1);
        grads.resize_with(root.id + 1, || None);
        grads[root.id] = Some(vec![1.0; nodes[root.id].value.len()]);

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }

        let params = self
            .bound
            .borrow()
            .iter()
            .filter(|(_, &n)| n <= root.id)
            .map(|(&p, &n)| (p, n))
            .collect();
        Gradients { grads, params }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: NodeId, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]);
    f(slot);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn backprop(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &node.value;
    match &node.op {
        Op::Leaf | Op::Param => {}
        Op::Add(a, b) => {
            acc(grads, nodes, *a, |d| add_into(d, g));
            acc(grads, nodes, *b, |d| add_into(d, g));
        }
        Op::Sub(a, b) => {
            acc(grads, nodes, *a, |d| add_into(d, g));
            acc(grads, nodes, *b, |d| {
                for (d, s) in d.iter_mut().zip(g) {
                    *d -= s;
                }
            });
        }
        Op::Mul(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            acc(grads, nodes, *a, |d| {
                for ((d, s), y) in d.iter_mut().zip(g).zip(bv.data()) {
                    *d += s * y;
                }
            });
            acc(grads, nodes, *b, |d| {
                for ((d, s), x) in d.iter_mut().zip(g).zip(av.data()) {
                    *d += s * x;
                }
            });
        }
        Op::Scale(a, c) => acc(grads, nodes, *a, |d| {
            for (d, s) in d.iter_mut().zip(g) {
                *d += s * c;
            }
        }),
        Op::AddRow(a, b) => {
            acc(grads, nodes, *a, |d| add_into(d, g));
            let n = out.cols();
            acc(grads, nodes, *b, |d| {
                for row in g.chunks(n) {
                    add_into(d, row);
                }
            });
        }
        Op::MatMul(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let (m, k) = (av.rows(), av.cols());
            let n = bv.cols();
            acc(grads, nodes, *a, |d| mm_nt(g, bv.data(), m, n, k, d));
            acc(grads, nodes, *b, |d| mm_tn(av.data(), g, m, k, n, d));
        }
        Op::MatMulNt(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let (m, k) = (av.rows(), av.cols());
            let n = bv.rows();
            acc(grads, nodes, *a, |d| mm(g, bv.data(), m, n, k, d));
            acc(grads, nodes, *b, |d| mm_tn(g, av.data(), m, n, k, d));
        }
        Op::Transpose(a) => {
            let (r, c) = (out.rows(), out.cols());
            acc(grads, nodes, *a, |d| {
                // out is r x c, input is c x r
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] += g[i * c + j];
                    }
                }
            });
        }
        Op::Relu(a) => acc(grads, nodes, *a, |d| {
            for ((d, s), y) in d.iter_mut().zip(g).zip(out.data()) {
                if *y > 0.0 {
                    *d += s;
                }
            }
        }),
        Op::Sigmoid(a) => acc(grads, nodes, *a, |d| {
            for ((d, s), y) in d.iter_mut().zip(g).zip(out.data()) {
                *d += s * y * (1.0 - y);
            }
        }),
        Op::Tanh(a) => acc(grads, nodes, *a, |d| {
            for ((d, s), y) in d.iter_mut().zip(g).zip(out.data()) {
                *d += s * (1.0 - y * y);
            }
        }),
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = nodes[p].value.len();
                acc(grads, nodes, p, |d| add_into(d, &g[offset..offset + len]));
                offset += len;
            }
        }
        Op::ConcatCols(parts) => {
            let total = out.cols();
            let rows = out.rows();
            let mut offset = 0;
            for &p in parts {
                let c = nodes[p].value.cols();
                acc(grads, nodes, p, |d| {
                    for r in 0..rows {
                        add_into(
                            &mut d[r * c..(r + 1) * c],
                            &g[r * total + offset..r * total + offset + c],
                        );
                    }
                });
                offset += c;
            }
        }
        Op::SliceRows(a, start) => {
            let c = out.cols();
            acc(grads, nodes, *a, |d| {
                add_into(&mut d[start * c..start * c + g.len()], g);
            });
        }
        Op::SliceCols(a, start) => {
            let src_cols = nodes[*a].value.cols();
            let c = out.cols();
            acc(grads, nodes, *a, |d| {
                for (r, grow) in g.chunks(c).enumerate() {
                    let base = r * src_cols + start;
                    add_into(&mut d[base..base + c], grow);
                }
            });
        }
        Op::Gather(table, idx) => {
            let c = out.cols();
            acc(grads, nodes, *table, |d| {
                for (r, &i) in idx.iter().enumerate() {
                    add_into(&mut d[i * c..(i + 1) * c], &g[r * c..(r + 1) * c]);
                }
            });
        }
        Op::Softmax(a, axis) => {
            let (rows, cols) = (out.rows(), out.cols());
            let y = out.data();
            acc(grads, nodes, *a, |d| match axis {
                Axis::Cols => {
                    for r in 0..rows {
                        let ys = &y[r * cols..(r + 1) * cols];
                        let gs = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            d[r * cols + j] += ys[j] * (gs[j] - dot);
                        }
                    }
                }
                Axis::Rows => {
                    for c in 0..cols {
                        let dot: f64 = (0..rows).map(|r| y[r * cols + c] * g[r * cols + c]).sum();
                        for r in 0..rows {
                            let k = r * cols + c;
                            d[k] += y[k] * (g[k] - dot);
                        }
                    }
                }
            });
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let n = out.cols();
            let gv = &nodes[*gain].value;
            acc(grads, nodes, *gain, |d| {
                for (grow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                    for j in 0..n {
                        d[j] += grow[j] * hrow[j];
                    }
                }
            });
            acc(grads, nodes, *bias, |d| {
                for grow in g.chunks(n) {
                    add_into(d, grow);
                }
            });
            acc(grads, nodes, *x, |d| {
                let nf = n as f64;
                for (r, (grow, hrow)) in g.chunks(n).zip(xhat.chunks(n)).enumerate() {
                    let dh: Vec<f64> = grow.iter().zip(gv.data()).map(|(a, b)| a * b).collect();
                    let sum_dh: f64 = dh.iter().sum();
                    let sum_dh_h: f64 = dh.iter().zip(hrow).map(|(a, b)| a * b).sum();
                    let inv = inv_std[r];
                    for j in 0..n {
                        d[r * n + j] += inv / nf * (nf * dh[j] - sum_dh - hrow[j] * sum_dh_h);
                    }
                }
            });
        }
        Op::MulConst(a, mask) => acc(grads, nodes, *a, |d| {
            for ((d, s), m) in d.iter_mut().zip(g).zip(mask.data()) {
                *d += s * m;
            }
        }),
        Op::AddConst(a) => acc(grads, nodes, *a, |d| add_into(d, g)),
        Op::Propagate(a, edges) => {
            let c = out.cols();
            acc(grads, nodes, *a, |d| {
                for &(i, j, w) in edges.iter() {
                    for k in 0..c {
                        d[j * c + k] += w * g[i * c + k];
                    }
                }
            });
        }
        Op::MeanRows(a) => {
            let rows = nodes[*a].value.rows() as f64;
            acc(grads, nodes, *a, |d| {
                let c = g.len();
                for drow in d.chunks_mut(c) {
                    for (x, s) in drow.iter_mut().zip(g) {
                        *x += s / rows;
                    }
                }
            });
        }
        Op::BlendRows(new, old, mask) => {
            let c = out.cols();
            acc(grads, nodes, *new, |d| {
                for (r, &take) in mask.iter().enumerate() {
                    if take {
                        add_into(&mut d[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                    }
                }
            });
            acc(grads, nodes, *old, |d| {
                for (r, &take) in mask.iter().enumerate() {
                    if !take {
                        add_into(&mut d[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                    }
                }
            });
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
        } => {
            let v = nodes[*logits].value.cols();
            let s = g[0];
            acc(grads, nodes, *logits, |d| {
                for (r, &t) in targets.iter().enumerate() {
                    for j in 0..v {
                        let k = r * v + j;
                        let hot = if j == t { 1.0 } else { 0.0 };
                        d[k] += s * (probs[k] - hot);
                    }
                }
            });
        }
        Op::Sum(a) => {
            let s = g[0];
            acc(grads, nodes, *a, |d| {
                for x in d.iter_mut() {
                    *x += s;
                }
            });
        }
        Op::Custom(inputs, backward) => {
            let vals: Vec<&Tensor> = inputs.iter().map(|&i| nodes[i].value.as_ref()).collect();
            let parts = backward(&vals, out, g);
            for (&i, part) in inputs.iter().zip(parts) {
                acc(grads, nodes, i, |d| add_into(d, &part));
            }
        }
    }
}

/// Gradients harvested from one backward pass.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, NodeId)>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&[f64]> {
        self.grads.get(var.id).and_then(|g| g.as_deref())
    }

    pub fn param_grad(&self, id: ParamId) -> Option<&[f64]> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, n)| self.grads[*n].as_deref())
    }

    /// Adds every bound parameter's gradient into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(p, n) in &self.params {
            if let Some(g) = &self.grads[n] {
                store.add_grad(p, g);
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.val(self.id)
    }

    /// Borrowed view of the value; do not hold across new op calls.
    pub fn value_ref(&self) -> Ref<'_, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| n[self.id].value.as_ref())
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value_ref().shape().to_vec()
    }

    pub fn rows(&self) -> usize {
        self.value_ref().rows()
    }

    pub fn cols(&self) -> usize {
        self.value_ref().cols()
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.value_ref().data()[0]
    }

    fn rg(&self) -> bool {
        self.tape.rg(self.id)
    }

    fn same_tape(&self, other: &Var<'_>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes"
        );
    }

    fn zip_with(
        self,
        other: Var<'t>,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, TensorError> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        if a.shape() != b.shape() {
            return Err(mismatch(op_name, &a, &b));
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.push(t, op, self.rg() || other.rg()))
    }

    fn map(self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let a = self.value();
        let data = a.data().iter().map(|x| f(*x)).collect();
        let t = Tensor::new(a.shape().to_vec(), data).expect("same length");
        self.tape.push(t, op, self.rg())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.zip_with(other, "add", |x, y| x + y, Op::Add(self.id, other.id))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.zip_with(other, "sub", |x, y| x - y, Op::Sub(self.id, other.id))
    }

    /// Elementwise product.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.zip_with(other, "mul", |x, y| x * y, Op::Mul(self.id, other.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.map(|x| x * c, Op::Scale(self.id, c))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix. This is the
    /// only broadcasting rule.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&row);
        let a = self.value();
        let b = row.value();
        let (_, n) = require_matrix("add_row", &a)?;
        if b.rows() != 1 || b.cols() != n {
            return Err(mismatch("add_row", &a, &b));
        }
        let mut data = a.data().to_vec();
        for chunk in data.chunks_mut(n) {
            add_into(chunk, b.data());
        }
        let t = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.push(t, Op::AddRow(self.id, row.id), self.rg() || row.rg()))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        let (m, k) = require_matrix("matmul", &a)?;
        let (k2, n) = require_matrix("matmul", &b)?;
        if k != k2 {
            return Err(mismatch("matmul", &a, &b));
        }
        let mut out = vec![0.0; m * n];
        mm(a.data(), b.data(), m, k, n, &mut out);
        let t = Tensor::matrix(m, n, out);
        Ok(self.tape.push(t, Op::MatMul(self.id, other.id), self.rg() || other.rg()))
    }

    /// `self * other^T`.
    pub fn matmul_t(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&other);
        let a = self.value();
        let b = other.value();
        let (m, k) = require_matrix("matmul_t", &a)?;
        let (n, k2) = require_matrix("matmul_t", &b)?;
        if k != k2 {
            return Err(mismatch("matmul_t", &a, &b));
        }
        let mut out = vec![0.0; m * n];
        mm_nt(a.data(), b.data(), m, k, n, &mut out);
        let t = Tensor::matrix(m, n, out);
        Ok(self.tape.push(t, Op::MatMulNt(self.id, other.id), self.rg() || other.rg()))
    }

    pub fn transpose(self) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let (r, c) = require_matrix("transpose", &a)?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = a.data()[i * c + j];
            }
        }
        Ok(self.tape.push(Tensor::matrix(c, r, out), Op::Transpose(self.id), self.rg()))
    }

    pub fn relu(self) -> Var<'t> {
        self.map(|x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.map(sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        self.map(f64::tanh, Op::Tanh(self.id))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value_ref().data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), self.rg())
    }

    /// Column-wise mean over rows, producing a `1 x n` row.
    pub fn mean_rows(self) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let (r, c) = require_matrix("mean_rows", &a)?;
        if r == 0 {
            return Err(TensorError::invalid("mean_rows", "no rows"));
        }
        let mut out = vec![0.0; c];
        for row in a.data().chunks(c) {
            add_into(&mut out, row);
        }
        for x in &mut out {
            *x /= r as f64;
        }
        Ok(self.tape.push(Tensor::matrix(1, c, out), Op::MeanRows(self.id), self.rg()))
    }

    pub fn slice_rows(self, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let (r, c) = require_matrix("slice_rows", &a)?;
        if start + len > r {
            return Err(TensorError::invalid(
                "slice_rows",
                format!("rows {start}..{} out of {r}", start + len),
            ));
        }
        let t = Tensor::matrix(len, c, a.data()[start * c..(start + len) * c].to_vec());
        Ok(self.tape.push(t, Op::SliceRows(self.id, start), self.rg()))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let (r, c) = require_matrix("slice_cols", &a)?;
        if start + len > c {
            return Err(TensorError::invalid(
                "slice_cols",
                format!("cols {start}..{} out of {c}", start + len),
            ));
        }
        let mut out = Vec::with_capacity(r * len);
        for row in a.data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        Ok(self.tape.push(Tensor::matrix(r, len, out), Op::SliceCols(self.id, start), self.rg()))
    }

    /// Rows of `self` (an embedding table) at `indices`.
    pub fn gather(self, indices: &[usize]) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let (r, c) = require_matrix("embedding_lookup", &a)?;
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(TensorError::invalid(
                    "embedding_lookup",
                    format!("index {i} out of range for {r} rows"),
                ));
            }
            out.extend_from_slice(a.row(i));
        }
        let t = Tensor::matrix(indices.len(), c, out);
        Ok(self.tape.push(t, Op::Gather(self.id, indices.into()), self.rg()))
    }

    pub fn softmax(self, axis: Axis) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let (rows, cols) = require_matrix("softmax", &a)?;
        debug_assert!(!a.data().iter().any(|v| v.is_nan()), "softmax on NaN input");
        let mut out = vec![0.0; rows * cols];
        match axis {
            Axis::Cols => {
                for (src, dst) in a.data().chunks(cols).zip(out.chunks_mut(cols)) {
                    softmax_slice(src, dst);
                }
            }
            Axis::Rows => {
                let mut col = vec![0.0; rows];
                let mut res = vec![0.0; rows];
                for c in 0..cols {
                    for (r, x) in col.iter_mut().enumerate() {
                        *x = a.data()[r * cols + c];
                    }
                    softmax_slice(&col, &mut res);
                    for (r, x) in res.iter().enumerate() {
                        out[r * cols + c] = *x;
                    }
                }
            }
        }
        let t = Tensor::matrix(rows, cols, out);
        Ok(self.tape.push(t, Op::Softmax(self.id, axis), self.rg()))
    }

    /// Per-row normalization to zero mean and unit variance followed by an
    /// affine map with `1 x n` `gain` and `bias`.
    pub fn layer_norm(self, gain: Var<'t>, bias: Var<'t>) -> Result<Var<'t>, TensorError> {
        const EPS: f64 = 1e-5;
        let a = self.value();
        let (rows, n) = require_matrix("layer_norm", &a)?;
        let gv = gain.value();
        let bv = bias.value();
        if gv.rows() != 1 || gv.cols() != n {
            return Err(mismatch("layer_norm", &a, &gv));
        }
        if bv.rows() != 1 || bv.cols() != n {
            return Err(mismatch("layer_norm", &a, &bv));
        }
        let mut xhat = vec![0.0; rows * n];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let x = a.row(r);
            let mean = x.iter().sum::<f64>() / n as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..n {
                let h = (x[j] - mean) * inv;
                xhat[r * n + j] = h;
                out[r * n + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let rg = self.rg() || gain.rg() || bias.rg();
        let op = Op::LayerNorm {
            x: self.id,
            gain: gain.id,
            bias: bias.id,
            xhat,
            inv_std,
        };
        Ok(self.tape.push(Tensor::matrix(rows, n, out), op, rg))
    }

    /// Inverted dropout. Identity in evaluation mode or at rate 0.
    pub fn dropout(self, rate: f64, mode: DropoutMode) -> Result<Var<'t>, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::invalid(
                "dropout",
                format!("rate {rate} outside [0, 1)"),
            ));
        }
        let key = match mode {
            DropoutMode::Eval => return Ok(self),
            DropoutMode::Train { .. } if rate == 0.0 => return Ok(self),
            DropoutMode::Train { seed, step, stream } => {
                super::rng::counter_key(seed, step, stream, self.id as u64)
            }
        };
        let a = self.value();
        let keep = 1.0 / (1.0 - rate);
        let mut rng = super::rng::uniform_from_key(key);
        let mask: Vec<f64> = (0..a.len())
            .map(|_| if rng() < rate { 0.0 } else { keep })
            .collect();
        let mask = Tensor::new(a.shape().to_vec(), mask)?;
        self.mul_const(mask)
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(self, mask: Tensor) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        if a.shape() != mask.shape() {
            return Err(mismatch("mul_const", &a, &mask));
        }
        let data = a.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
        let t = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.push(t, Op::MulConst(self.id, Arc::new(mask)), self.rg()))
    }

    /// Adds a constant tensor (for example an attention mask).
    pub fn add_const(self, c: &Tensor) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        if a.shape() != c.shape() {
            return Err(mismatch("add_const", &a, c));
        }
        let data = a.data().iter().zip(c.data()).map(|(x, m)| x + m).collect();
        let t = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.push(t, Op::AddConst(self.id), self.rg()))
    }

    /// Sparse weighted aggregation: `out[i] = sum over (i, j, w) of w * self[j]`.
    pub fn propagate(self, edges: Arc<[(usize, usize, f64)]>) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let (r, c) = require_matrix("propagate", &a)?;
        let mut out = vec![0.0; r * c];
        for &(i, j, w) in edges.iter() {
            if i >= r || j >= r {
                return Err(TensorError::invalid(
                    "propagate",
                    format!("edge ({i}, {j}) out of range for {r} nodes"),
                ));
            }
            for k in 0..c {
                out[i * c + k] += w * a.data()[j * c + k];
            }
        }
        let t = Tensor::matrix(r, c, out);
        Ok(self.tape.push(t, Op::Propagate(self.id, edges), self.rg()))
    }

    /// Row `r` of the result is taken from `self` where `take_new[r]`,
    /// otherwise from `old`.
    pub fn blend_rows(self, old: Var<'t>, take_new: &[bool]) -> Result<Var<'t>, TensorError> {
        self.same_tape(&old);
        let a = self.value();
        let b = old.value();
        if a.shape() != b.shape() || take_new.len() != a.rows() {
            return Err(mismatch("blend_rows", &a, &b));
        }
        let c = a.cols();
        let mut out = Vec::with_capacity(a.len());
        for (r, &take) in take_new.iter().enumerate() {
            let src = if take { a.row(r) } else { b.row(r) };
            out.extend_from_slice(src);
        }
        let t = Tensor::new(a.shape().to_vec(), out)?;
        debug_assert_eq!(t.cols(), c);
        Ok(self.tape.push(
            t,
            Op::BlendRows(self.id, old.id, take_new.into()),
            self.rg() || old.rg(),
        ))
    }

    /// Summed `-log softmax(row)[target]` over the rows of a logit matrix.
    pub fn cross_entropy(self, targets: &[usize]) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let (rows, v) = require_matrix("cross_entropy", &a)?;
        if targets.len() != rows {
            return Err(TensorError::invalid(
                "cross_entropy",
                format!("{} targets for {rows} rows", targets.len()),
            ));
        }
        let mut probs = vec![0.0; rows * v];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= v {
                return Err(TensorError::invalid(
                    "cross_entropy",
                    format!("target {t} out of range for {v} classes"),
                ));
            }
            let row = a.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            for j in 0..v {
                probs[r * v + j] = (row[j] - lse).exp();
            }
        }
        let op = Op::CrossEntropy {
            logits: self.id,
            targets: targets.into(),
            probs,
        };
        Ok(self.tape.push(Tensor::scalar(loss), op, self.rg()))
    }

    pub fn concat_rows(parts: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::invalid("concat_rows", "no inputs"))?;
        let tape = first.tape;
        let c = first.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        let mut rg = false;
        for p in parts {
            first.same_tape(p);
            let v = p.value();
            if v.cols() != c {
                return Err(mismatch("concat_rows", &first.value(), &v));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
            rg |= p.rg();
        }
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(tape.push(Tensor::matrix(rows, c, data), Op::ConcatRows(ids), rg))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::invalid("concat_cols", "no inputs"))?;
        let tape = first.tape;
        let rows = first.rows();
        let vals: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        for (p, v) in parts.iter().zip(&vals) {
            first.same_tape(p);
            if v.rows() != rows {
                return Err(mismatch("concat_cols", &vals[0], v));
            }
        }
        let total: usize = vals.iter().map(|v| v.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &vals {
                data.extend_from_slice(v.row(r));
            }
        }
        let rg = parts.iter().any(|p| p.rg());
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(tape.push(Tensor::matrix(rows, total, data), Op::ConcatCols(ids), rg))
    }
}
