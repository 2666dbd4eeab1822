//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every operation appends a node whose parents already live on the tape, so
//! the node vector is always in topological order and `backward` is a single
//! reverse sweep.

use super::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise single-argument operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Relu,
    Softplus,
    Exp,
    Log,
    Neg,
}

/// Pointwise two-argument operations. One operand may be a scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    Unary(Unary, NodeId),
    Binary(Binary, NodeId, NodeId),
    Scale(NodeId, f64),
    Linear { w: NodeId, x: NodeId, b: Option<NodeId> },
    MatVecT { w: NodeId, x: NodeId },
    Concat(Vec<NodeId>),
    Stack(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Row { m: NodeId, row: usize },
    Dot(NodeId, NodeId),
    Sum(NodeId),
    Softmax(NodeId),
    LogSumExp(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of nodes plus the accumulated gradients of its leaves.
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eˣ)`, floored at the smallest normal `f64` so it stays strictly
/// positive where `e⁻|ˣ|` underflows.
pub(crate) fn softplus(x: f64) -> f64 {
    ((-x.abs()).exp().ln_1p() + x.max(0.0)).max(f64::MIN_POSITIVE)
}

impl Tape {
    /// A checked tape: every produced value is verified finite and `log`
    /// rejects non-positive inputs.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), leaf_grads: Vec::new(), checked: true }
    }

    pub fn unchecked() -> Self {
        Self { checked: false, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input. Its gradient starts at zero and accumulates across
    /// `backward` calls.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        let grad = Tensor::zeros_like(&value);
        let id = self.push_raw(value, Op::Leaf, true);
        self.leaf_grads[id.0] = Some(grad);
        id
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_raw(value, Op::Constant, false)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a leaf; `None` for non-leaves.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.leaf_grads[id.0].as_ref()
    }

    pub fn zero_grads(&mut self) {
        for g in self.leaf_grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        self.leaf_grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, context: &'static str) -> Result<NodeId, TensorError> {
        if self.checked && !value.all_finite() {
            return Err(TensorError::NonFinite { context });
        }
        let requires_grad = self.parents(&op).iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn parents(&self, op: &Op) -> Vec<NodeId> {
        match op {
            Op::Leaf | Op::Constant => Vec::new(),
            Op::Unary(_, x) | Op::Scale(x, _) | Op::Sum(x) | Op::Softmax(x) | Op::LogSumExp(x) => {
                vec![*x]
            }
            Op::Slice { x, .. } => vec![*x],
            Op::Row { m, .. } => vec![*m],
            Op::Binary(_, a, b) | Op::Dot(a, b) => vec![*a, *b],
            Op::Linear { w, x, b } => {
                let mut v = vec![*w, *x];
                v.extend(b.iter().copied());
                v
            }
            Op::MatVecT { w, x } => vec![*w, *x],
            Op::Concat(xs) | Op::Stack(xs) => xs.clone(),
        }
    }

    pub fn unary(&mut self, kind: Unary, x: NodeId) -> Result<NodeId, TensorError> {
        let input = &self.nodes[x.0].value;
        if self.checked && kind == Unary::Log {
            if let Some(&bad) = input.data().iter().find(|v| **v <= 0.0) {
                return Err(TensorError::LogDomain { value: bad });
            }
        }
        let f: fn(f64) -> f64 = match kind {
            Unary::Tanh => f64::tanh,
            Unary::Sigmoid => sigmoid,
            Unary::Relu => |v| v.max(0.0),
            Unary::Softplus => softplus,
            Unary::Exp => f64::exp,
            Unary::Log => f64::ln,
            Unary::Neg => |v| -v,
        };
        let data = input.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::from_raw(input.shape().to_vec(), data);
        self.push(value, Op::Unary(kind, x), "unary op")
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(Unary::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(Unary::Relu, x)
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(Unary::Softplus, x)
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(Unary::Exp, x)
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(Unary::Log, x)
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        self.unary(Unary::Neg, x)
    }

    pub fn binary(&mut self, kind: Binary, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let f: fn(f64, f64) -> f64 = match kind {
            Binary::Add => |x, y| x + y,
            Binary::Sub => |x, y| x - y,
            Binary::Mul => |x, y| x * y,
        };
        let value = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::from_raw(av.shape().to_vec(), data)
        } else if bv.is_scalar() {
            let y = bv.item();
            Tensor::from_raw(av.shape().to_vec(), av.data().iter().map(|&x| f(x, y)).collect())
        } else if av.is_scalar() {
            let x = av.item();
            Tensor::from_raw(bv.shape().to_vec(), bv.data().iter().map(|&y| f(x, y)).collect())
        } else {
            return Err(TensorError::ShapeMismatch {
                op: "elementwise",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        };
        self.push(value, Op::Binary(kind, a, b), "binary op")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary(Binary::Mul, a, b)
    }

    /// Multiplies by a fixed coefficient.
    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, TensorError> {
        let input = &self.nodes[x.0].value;
        let data = input.data().iter().map(|v| v * factor).collect();
        let value = Tensor::from_raw(input.shape().to_vec(), data);
        self.push(value, Op::Scale(x, factor), "scale")
    }

    /// `W x + b` for `W: (out × in)`, `x: (in)`, `b: (out)`.
    pub fn linear(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.affine(w, x, Some(b))
    }

    /// `W x` without bias.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId, TensorError> {
        self.affine(w, x, None)
    }

    fn affine(&mut self, w: NodeId, x: NodeId, b: Option<NodeId>) -> Result<NodeId, TensorError> {
        let (wv, xv) = (&self.nodes[w.0].value, &self.nodes[x.0].value);
        if !wv.is_matrix() || !xv.is_vector() || wv.cols() != xv.len() {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                left: wv.shape().to_vec(),
                right: xv.shape().to_vec(),
            });
        }
        let (rows, cols) = (wv.rows(), wv.cols());
        let mut out = match b {
            Some(b) => {
                let bv = &self.nodes[b.0].value;
                if !bv.is_vector() || bv.len() != rows {
                    return Err(TensorError::ShapeMismatch {
                        op: "linear bias",
                        left: vec![rows],
                        right: bv.shape().to_vec(),
                    });
                }
                bv.data().to_vec()
            }
            None => vec![0.0; rows],
        };
        let (wd, xd) = (wv.data(), xv.data());
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wd[r * cols..(r + 1) * cols];
            *o += row.iter().zip(xd).map(|(a, b)| a * b).sum::<f64>();
        }
        self.push(Tensor::vector(out), Op::Linear { w, x, b }, "linear")
    }

    /// `Wᵀ x` for `W: (rows × cols)`, `x: (rows)`.
    pub fn matvec_t(&mut self, w: NodeId, x: NodeId) -> Result<NodeId, TensorError> {
        let (wv, xv) = (&self.nodes[w.0].value, &self.nodes[x.0].value);
        if !wv.is_matrix() || !xv.is_vector() || wv.rows() != xv.len() {
            return Err(TensorError::ShapeMismatch {
                op: "matvec_t",
                left: wv.shape().to_vec(),
                right: xv.shape().to_vec(),
            });
        }
        let cols = wv.cols();
        let mut out = vec![0.0; cols];
        for (r, &xr) in xv.data().iter().enumerate() {
            let row = &wv.data()[r * cols..(r + 1) * cols];
            for (o, &wrc) in out.iter_mut().zip(row) {
                *o += wrc * xr;
            }
        }
        self.push(Tensor::vector(out), Op::MatVecT { w, x }, "matvec_t")
    }

    /// Concatenates scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let mut out = Vec::new();
        for p in parts {
            let v = &self.nodes[p.0].value;
            if v.shape().len() > 1 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: vec![],
                    right: v.shape().to_vec(),
                });
            }
            out.extend_from_slice(v.data());
        }
        self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), "concat")
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId, TensorError> {
        let first = rows.first().ok_or(TensorError::Empty { op: "stack" })?;
        let width = self.nodes[first.0].value.len();
        let mut out = Vec::with_capacity(width * rows.len());
        for r in rows {
            let v = &self.nodes[r.0].value;
            if !v.is_vector() || v.len() != width {
                return Err(TensorError::ShapeMismatch {
                    op: "stack",
                    left: vec![width],
                    right: v.shape().to_vec(),
                });
            }
            out.extend_from_slice(v.data());
        }
        let value = Tensor::from_raw(vec![rows.len(), width], out);
        self.push(value, Op::Stack(rows.to_vec()), "stack")
    }

    /// Contiguous sub-vector `x[start..start + len]`.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let v = &self.nodes[x.0].value;
        if !v.is_vector() || start + len > v.len() {
            return Err(TensorError::OutOfRange { index: start + len, len: v.len() });
        }
        let value = Tensor::vector(v.data()[start..start + len].to_vec());
        self.push(value, Op::Slice { x, start }, "slice")
    }

    /// Element `x[i]` of a vector as a scalar.
    pub fn index(&mut self, x: NodeId, i: usize) -> Result<NodeId, TensorError> {
        let v = &self.nodes[x.0].value;
        if !v.is_vector() || i >= v.len() {
            return Err(TensorError::OutOfRange { index: i, len: v.len() });
        }
        let value = Tensor::scalar(v.data()[i]);
        self.push(value, Op::Slice { x, start: i }, "index")
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, m: NodeId, row: usize) -> Result<NodeId, TensorError> {
        let v = &self.nodes[m.0].value;
        if !v.is_matrix() || row >= v.rows() {
            return Err(TensorError::OutOfRange { index: row, len: v.shape().first().copied().unwrap_or(0) });
        }
        let cols = v.cols();
        let value = Tensor::vector(v.data()[row * cols..(row + 1) * cols].to_vec());
        self.push(value, Op::Row { m, row }, "row")
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "dot",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let s = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).sum();
        self.push(Tensor::scalar(s), Op::Dot(a, b), "dot")
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let s = self.nodes[x.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), "sum")
    }

    /// Max-shifted softmax of a non-empty vector.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = &self.nodes[x.0].value;
        if v.is_empty() {
            return Err(TensorError::Empty { op: "softmax" });
        }
        let value = Tensor::from_raw(v.shape().to_vec(), softmax_values(v.data()));
        self.push(value, Op::Softmax(x), "softmax")
    }

    /// `log Σ exp(x)` computed with max subtraction.
    pub fn logsumexp(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = &self.nodes[x.0].value;
        if v.is_empty() {
            return Err(TensorError::Empty { op: "logsumexp" });
        }
        let max = v.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = v.data().iter().map(|&a| (a - max).exp()).sum();
        self.push(Tensor::scalar(max + s.ln()), Op::LogSumExp(x), "logsumexp")
    }

    /// Propagates `∂root/∂·` to every leaf and adds it to the leaf's stored
    /// gradient. Intermediate adjoints are scratch space, so repeated calls
    /// accumulate exactly.
    pub fn backward(&mut self, root: NodeId) -> Result<(), TensorError> {
        let rv = &self.nodes[root.0].value;
        if rv.len() != 1 || rv.shape().len() > 1 {
            return Err(TensorError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    if let Some(lg) = self.leaf_grads[i].as_mut() {
                        lg.add_assign(&g);
                    }
                }
                Op::Constant => {}
                Op::Unary(kind, x) => {
                    let xv = self.nodes[x.0].value.data();
                    let yv = node.value.data();
                    let dx: Vec<f64> = (0..g.len())
                        .map(|j| {
                            let d = match kind {
                                Unary::Tanh => 1.0 - yv[j] * yv[j],
                                Unary::Sigmoid => yv[j] * (1.0 - yv[j]),
                                Unary::Relu => {
                                    if xv[j] > 0.0 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                Unary::Softplus => sigmoid(xv[j]),
                                Unary::Exp => yv[j],
                                Unary::Log => 1.0 / xv[j],
                                Unary::Neg => -1.0,
                            };
                            g[j] * d
                        })
                        .collect();
                    accumulate(&mut adj, &self.nodes, *x, &dx);
                }
                Op::Binary(kind, a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let n = g.len();
                    let at = |j: usize| if av.is_scalar() && n != 1 { av.data()[0] } else { av.data()[j] };
                    let bt = |j: usize| if bv.is_scalar() && n != 1 { bv.data()[0] } else { bv.data()[j] };
                    let (da, db): (Vec<f64>, Vec<f64>) = match kind {
                        Binary::Add => (g.clone(), g.clone()),
                        Binary::Sub => (g.clone(), g.iter().map(|v| -v).collect()),
                        Binary::Mul => (
                            (0..n).map(|j| g[j] * bt(j)).collect(),
                            (0..n).map(|j| g[j] * at(j)).collect(),
                        ),
                    };
                    let da = reduce_to(av, da);
                    let db = reduce_to(bv, db);
                    accumulate(&mut adj, &self.nodes, *a, &da);
                    accumulate(&mut adj, &self.nodes, *b, &db);
                }
                Op::Scale(x, factor) => {
                    let dx: Vec<f64> = g.iter().map(|v| v * factor).collect();
                    accumulate(&mut adj, &self.nodes, *x, &dx);
                }
                Op::Linear { w, x, b } => {
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    let cols = wv.cols();
                    if self.nodes[w.0].requires_grad {
                        let mut dw = vec![0.0; wv.len()];
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            for (d, &xc) in dw[r * cols..(r + 1) * cols].iter_mut().zip(xv.data()) {
                                *d = gr * xc;
                            }
                        }
                        accumulate(&mut adj, &self.nodes, *w, &dw);
                    }
                    if self.nodes[x.0].requires_grad {
                        let mut dx = vec![0.0; cols];
                        for (r, &gr) in g.iter().enumerate() {
                            let row = &wv.data()[r * cols..(r + 1) * cols];
                            for (d, &wrc) in dx.iter_mut().zip(row) {
                                *d += gr * wrc;
                            }
                        }
                        accumulate(&mut adj, &self.nodes, *x, &dx);
                    }
                    if let Some(b) = b {
                        accumulate(&mut adj, &self.nodes, *b, &g);
                    }
                }
                Op::MatVecT { w, x } => {
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    let cols = wv.cols();
                    if self.nodes[w.0].requires_grad {
                        let mut dw = vec![0.0; wv.len()];
                        for (r, &xr) in xv.data().iter().enumerate() {
                            for (d, &gc) in dw[r * cols..(r + 1) * cols].iter_mut().zip(&g) {
                                *d = xr * gc;
                            }
                        }
                        accumulate(&mut adj, &self.nodes, *w, &dw);
                    }
                    if self.nodes[x.0].requires_grad {
                        let dx: Vec<f64> = (0..wv.rows())
                            .map(|r| {
                                let row = &wv.data()[r * cols..(r + 1) * cols];
                                row.iter().zip(&g).map(|(a, b)| a * b).sum()
                            })
                            .collect();
                        accumulate(&mut adj, &self.nodes, *x, &dx);
                    }
                }
                Op::Concat(parts) | Op::Stack(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        accumulate(&mut adj, &self.nodes, *p, &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Slice { x, start } => {
                    scatter(&mut adj, &self.nodes, *x, *start, &g);
                }
                Op::Row { m, row } => {
                    let cols = self.nodes[m.0].value.cols();
                    scatter(&mut adj, &self.nodes, *m, row * cols, &g);
                }
                Op::Dot(a, b) => {
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    let da: Vec<f64> = bv.iter().map(|v| v * g[0]).collect();
                    let db: Vec<f64> = av.iter().map(|v| v * g[0]).collect();
                    accumulate(&mut adj, &self.nodes, *a, &da);
                    accumulate(&mut adj, &self.nodes, *b, &db);
                }
                Op::Sum(x) => {
                    let n = self.nodes[x.0].value.len();
                    accumulate(&mut adj, &self.nodes, *x, &vec![g[0]; n]);
                }
                Op::Softmax(x) => {
                    let y = node.value.data();
                    let gy: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    let dx: Vec<f64> = y.iter().zip(&g).map(|(yj, gj)| yj * (gj - gy)).collect();
                    accumulate(&mut adj, &self.nodes, *x, &dx);
                }
                Op::LogSumExp(x) => {
                    let p = softmax_values(self.nodes[x.0].value.data());
                    let dx: Vec<f64> = p.iter().map(|v| v * g[0]).collect();
                    accumulate(&mut adj, &self.nodes, *x, &dx);
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / total).collect()
}

fn reduce_to(target: &Tensor, grad: Vec<f64>) -> Vec<f64> {
    if target.len() == grad.len() {
        grad
    } else {
        vec![grad.iter().sum()]
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], nodes: &[Node], id: NodeId, g: &[f64]) {
    if !nodes[id.0].requires_grad {
        return;
    }
    match &mut adj[id.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn scatter(adj: &mut [Option<Vec<f64>>], nodes: &[Node], id: NodeId, offset: usize, g: &[f64]) {
    if !nodes[id.0].requires_grad {
        return;
    }
    let n = nodes[id.0].value.len();
    let acc = adj[id.0].get_or_insert_with(|| vec![0.0; n]);
    for (a, b) in acc[offset..offset + g.len()].iter_mut().zip(g) {
        *a += b;
    }
}
