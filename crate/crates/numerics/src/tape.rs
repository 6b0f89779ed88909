//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation on a [`Var`] appends a node to its [`Tape`]. Nodes only
//! reference earlier nodes, so the tape is already in topological order and
//! [`Tape::backward`] is a single reverse sweep.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{NumericsError, Result};
use crate::tensor::{matmul_a_bt, matmul_at_b, matmul_raw, Tensor};

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    SoftmaxRows(usize),
    Sigmoid(usize),
    Tanh(usize),
    Gelu(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    MeanRows(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    LayerNormRows(usize, f64),
    Huber(usize, usize, f64),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward computation.
///
/// A tape is single-threaded; independent tapes may live on different threads.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by one backward sweep, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not require gradients.
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
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
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        self.push_arc(Arc::new(value), op, requires_grad)
    }

    fn push_arc(&self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf sharing storage with a parameter store entry.
    pub fn shared(&self, value: Arc<Tensor>, trainable: bool) -> Var<'_> {
        self.push_arc(value, Op::Leaf, trainable)
    }

    fn value_of(&self, id: usize) -> Arc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.len() != 1 {
            return Err(NumericsError::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        if !loss_node.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(Tensor::full(loss_node.value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            propagate(&nodes, id, &node.op, &upstream, &mut grads);
            grads[id] = Some(upstream);
        }
        // Interior nodes keep their gradients too; callers usually only read leaves.
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => {
            for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn broadcast_grad(target: &Tensor, g: Tensor) -> Tensor {
    if target.len() == g.len() {
        g.reshape(target.shape()).expect("same length")
    } else {
        Tensor::full(target.shape(), g.sum())
    }
}

fn propagate(nodes: &[Node], id: usize, op: &Op, up: &Tensor, grads: &mut [Option<Tensor>]) {
    let out = &nodes[id].value;
    let val = |i: usize| &nodes[i].value;
    match op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, broadcast_grad(val(*a), up.clone()));
            accumulate(grads, nodes, *b, broadcast_grad(val(*b), up.clone()));
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, broadcast_grad(val(*a), up.clone()));
            accumulate(grads, nodes, *b, broadcast_grad(val(*b), up.map(|v| -v)));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let ga = elementwise_with(up, bv, |u, x| u * x);
            let gb = elementwise_with(up, av, |u, x| u * x);
            accumulate(grads, nodes, *a, broadcast_grad(av, ga));
            accumulate(grads, nodes, *b, broadcast_grad(bv, gb));
        }
        Op::Scale(a, c) => accumulate(grads, nodes, *a, up.map(|v| v * c)),
        Op::AddScalar(a) => accumulate(grads, nodes, *a, up.clone()),
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            if nodes[*a].requires_grad {
                let g = matmul_a_bt(up.data(), bv.data(), m, n, k);
                accumulate(grads, nodes, *a, Tensor::new(av.shape().to_vec(), g).unwrap());
            }
            if nodes[*b].requires_grad {
                let g = matmul_at_b(av.data(), up.data(), m, k, n);
                accumulate(grads, nodes, *b, Tensor::new(bv.shape().to_vec(), g).unwrap());
            }
        }
        Op::Transpose(a) => accumulate(grads, nodes, *a, up.transpose()),
        Op::AddRow(a, bias) => {
            accumulate(grads, nodes, *a, up.clone());
            let cols = up.cols();
            let mut gb = vec![0.0; cols];
            for r in 0..up.rows() {
                for (g, u) in gb.iter_mut().zip(up.row_slice(r)) {
                    *g += u;
                }
            }
            let bshape = val(*bias).shape().to_vec();
            accumulate(grads, nodes, *bias, Tensor::new(bshape, gb).unwrap());
        }
        Op::MulRow(a, gain) => {
            let (av, gv) = (val(*a), val(*gain));
            let cols = av.cols();
            let mut ga = up.clone();
            let mut gg = vec![0.0; cols];
            for r in 0..av.rows() {
                for c in 0..cols {
                    let u = up.get(r, c);
                    ga.data_mut()[r * cols + c] = u * gv.data()[c];
                    gg[c] += u * av.get(r, c);
                }
            }
            accumulate(grads, nodes, *a, ga);
            accumulate(grads, nodes, *gain, Tensor::new(gv.shape().to_vec(), gg).unwrap());
        }
        Op::SoftmaxRows(a) => {
            let cols = out.cols();
            let mut g = up.clone();
            for r in 0..out.rows() {
                let s = out.row_slice(r);
                let u = up.row_slice(r);
                let dot: f64 = s.iter().zip(u).map(|(x, y)| x * y).sum();
                for c in 0..cols {
                    g.data_mut()[r * cols + c] = s[c] * (u[c] - dot);
                }
            }
            accumulate(grads, nodes, *a, g);
        }
        Op::Sigmoid(a) => accumulate(grads, nodes, *a, elementwise_with(up, out, |u, s| u * s * (1.0 - s))),
        Op::Tanh(a) => accumulate(grads, nodes, *a, elementwise_with(up, out, |u, t| u * (1.0 - t * t))),
        Op::Gelu(a) => accumulate(grads, nodes, *a, elementwise_with(up, val(*a), |u, x| u * gelu_grad(x))),
        Op::Square(a) => accumulate(grads, nodes, *a, elementwise_with(up, val(*a), |u, x| 2.0 * u * x)),
        Op::Sum(a) => accumulate(grads, nodes, *a, Tensor::full(val(*a).shape(), up.item())),
        Op::Mean(a) => {
            let n = val(*a).len() as f64;
            accumulate(grads, nodes, *a, Tensor::full(val(*a).shape(), up.item() / n));
        }
        Op::MeanRows(a) => {
            let av = val(*a);
            let (rows, cols) = (av.rows(), av.cols());
            let mut g = vec![0.0; rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    g[r * cols + c] = up.data()[c] / rows as f64;
                }
            }
            accumulate(grads, nodes, *a, Tensor::new(av.shape().to_vec(), g).unwrap());
        }
        Op::ConcatCols(parts) => {
            let total = up.cols();
            let mut offset = 0;
            for &p in parts {
                let pv = val(p);
                let pc = pv.cols();
                let mut g = Vec::with_capacity(pv.len());
                for r in 0..up.rows() {
                    g.extend_from_slice(&up.data()[r * total + offset..r * total + offset + pc]);
                }
                accumulate(grads, nodes, p, Tensor::new(pv.shape().to_vec(), g).unwrap());
                offset += pc;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let pv = val(p);
                let n = pv.len();
                let g = up.data()[offset..offset + n].to_vec();
                accumulate(grads, nodes, p, Tensor::new(pv.shape().to_vec(), g).unwrap());
                offset += n;
            }
        }
        Op::SliceCols(a, start) => {
            let av = val(*a);
            let (rows, cols) = (av.rows(), av.cols());
            let w = up.cols();
            let mut g = vec![0.0; rows * cols];
            for r in 0..rows {
                g[r * cols + start..r * cols + start + w].copy_from_slice(up.row_slice(r));
            }
            accumulate(grads, nodes, *a, Tensor::new(av.shape().to_vec(), g).unwrap());
        }
        Op::SliceRows(a, start) => {
            let av = val(*a);
            let cols = av.cols();
            let mut g = vec![0.0; av.len()];
            g[start * cols..start * cols + up.len()].copy_from_slice(up.data());
            accumulate(grads, nodes, *a, Tensor::new(av.shape().to_vec(), g).unwrap());
        }
        Op::LayerNormRows(a, eps) => {
            let av = val(*a);
            let cols = av.cols();
            let n = cols as f64;
            let mut g = vec![0.0; av.len()];
            for r in 0..av.rows() {
                let x = av.row_slice(r);
                let u = up.row_slice(r);
                let mean = x.iter().sum::<f64>() / n;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let inv = 1.0 / (var + eps).sqrt();
                let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv).collect();
                let mean_u = u.iter().sum::<f64>() / n;
                let mean_ux: f64 = u.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                for c in 0..cols {
                    g[r * cols + c] = inv * (u[c] - mean_u - xhat[c] * mean_ux);
                }
            }
            accumulate(grads, nodes, *a, Tensor::new(av.shape().to_vec(), g).unwrap());
        }
        Op::Huber(pred, target, delta) => {
            let (pv, tv) = (val(*pred), val(*target));
            let n = pv.len() as f64;
            let scale = up.item() / n;
            let g: Vec<f64> = pv
                .data()
                .iter()
                .zip(tv.data())
                .map(|(p, t)| {
                    let e = p - t;
                    let d = if e.abs() <= *delta { e } else { delta * e.signum() };
                    d * scale
                })
                .collect();
            accumulate(grads, nodes, *pred, Tensor::new(pv.shape().to_vec(), g.clone()).unwrap());
            accumulate(
                grads,
                nodes,
                *target,
                Tensor::new(tv.shape().to_vec(), g.iter().map(|v| -v).collect()).unwrap(),
            );
        }
    }
}

fn elementwise_with(up: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if other.len() == up.len() {
        Tensor::new(
            up.shape().to_vec(),
            up.data().iter().zip(other.data()).map(|(&u, &x)| f(u, x)).collect(),
        )
        .unwrap()
    } else {
        let x = other.item();
        up.map(|u| f(u, x))
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
    let t = inner.tanh();
    let d_inner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

fn shapes_compatible(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape() || a.len() == 1 || b.len() == 1
}

fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.len() == b.len() {
        let shape = if a.len() == 1 && b.shape().len() > a.shape().len() {
            b.shape().to_vec()
        } else {
            a.shape().to_vec()
        };
        Tensor::new(shape, a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()).unwrap()
    } else if b.len() == 1 {
        let y = b.item();
        a.map(|x| f(x, y))
    } else {
        let x = a.item();
        b.map(|y| f(x, y))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// Snapshot of the forward value.
    pub fn value(&self) -> Tensor {
        (*self.tape.value_of(self.id)).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.requires(&[self.id, other.id]);
        self.tape.push(value, op, rg)
    }

    fn check_elementwise(&self, other: &Var<'t>, op: &'static str) -> (Arc<Tensor>, Arc<Tensor>) {
        let (a, b) = (self.tape.value_of(self.id), self.tape.value_of(other.id));
        assert!(
            shapes_compatible(&a, &b),
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        );
        (a, b)
    }

    /// Elementwise sum; a one-element operand broadcasts.
    ///
    /// Panics on any other shape mismatch.
    pub fn add(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = self.check_elementwise(&other, "add");
        let v = zip_broadcast(&a, &b, |x, y| x + y);
        self.binary(other, v, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = self.check_elementwise(&other, "sub");
        let v = zip_broadcast(&a, &b, |x, y| x - y);
        self.binary(other, v, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = self.check_elementwise(&other, "mul");
        let v = zip_broadcast(&a, &b, |x, y| x * y);
        self.binary(other, v, Op::Mul(self.id, other.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = self.tape.value_of(self.id).map(|x| x * c);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let v = self.tape.value_of(self.id).map(|x| x + c);
        self.unary(v, Op::AddScalar(self.id))
    }

    /// `[m,k] x [k,n]`. Panics when inner dimensions differ.
    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.tape.value_of(self.id), self.tape.value_of(other.id));
        let (m, k, k2, n) = (a.rows(), a.cols(), b.rows(), b.cols());
        assert_eq!(
            k,
            k2,
            "matmul: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        );
        let v = Tensor::new(vec![m, n], matmul_raw(a.data(), b.data(), m, k, n)).unwrap();
        self.binary(other, v, Op::MatMul(self.id, other.id))
    }

    pub fn transpose(self) -> Var<'t> {
        let v = self.tape.value_of(self.id).transpose();
        self.unary(v, Op::Transpose(self.id))
    }

    /// Adds a length-`cols` bias to every row.
    pub fn add_row(self, bias: Var<'t>) -> Var<'t> {
        let (a, b) = (self.tape.value_of(self.id), self.tape.value_of(bias.id));
        assert_eq!(a.cols(), b.len(), "add_row: {:?} vs bias {:?}", a.shape(), b.shape());
        let cols = a.cols();
        let mut v = (*a).clone();
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x += b.data()[i % cols];
        }
        self.binary(bias, v, Op::AddRow(self.id, bias.id))
    }

    /// Multiplies every row elementwise by a length-`cols` gain.
    pub fn mul_row(self, gain: Var<'t>) -> Var<'t> {
        let (a, g) = (self.tape.value_of(self.id), self.tape.value_of(gain.id));
        assert_eq!(a.cols(), g.len(), "mul_row: {:?} vs gain {:?}", a.shape(), g.shape());
        let cols = a.cols();
        let mut v = (*a).clone();
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x *= g.data()[i % cols];
        }
        self.binary(gain, v, Op::MulRow(self.id, gain.id))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(self) -> Var<'t> {
        let a = self.tape.value_of(self.id);
        let cols = a.cols();
        let mut v = (*a).clone();
        for r in 0..a.rows() {
            let row = &mut v.data_mut()[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        self.unary(v, Op::SoftmaxRows(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let v = self.tape.value_of(self.id).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.unary(v, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        let v = self.tape.value_of(self.id).map(f64::tanh);
        self.unary(v, Op::Tanh(self.id))
    }

    /// GELU, tanh approximation.
    pub fn gelu(self) -> Var<'t> {
        let v = self.tape.value_of(self.id).map(gelu);
        self.unary(v, Op::Gelu(self.id))
    }

    pub fn square(self) -> Var<'t> {
        let v = self.tape.value_of(self.id).map(|x| x * x);
        self.unary(v, Op::Square(self.id))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.tape.value_of(self.id).sum());
        self.unary(v, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let a = self.tape.value_of(self.id);
        let v = Tensor::scalar(a.sum() / a.len() as f64);
        self.unary(v, Op::Mean(self.id))
    }

    /// Column means of a `[rows, cols]` matrix as a `[1, cols]` row.
    pub fn mean_rows(self) -> Var<'t> {
        let a = self.tape.value_of(self.id);
        let (rows, cols) = (a.rows(), a.cols());
        let mut m = vec![0.0; cols];
        for r in 0..rows {
            for (acc, x) in m.iter_mut().zip(a.row_slice(r)) {
                *acc += x;
            }
        }
        for x in m.iter_mut() {
            *x /= rows as f64;
        }
        self.unary(Tensor::row(&m), Op::MeanRows(self.id))
    }

    /// Squared Euclidean norm over all elements.
    pub fn sum_squares(self) -> Var<'t> {
        self.square().sum()
    }

    pub fn slice_cols(self, start: usize, width: usize) -> Var<'t> {
        let a = self.tape.value_of(self.id);
        let (rows, cols) = (a.rows(), a.cols());
        assert!(start + width <= cols, "slice_cols out of range");
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&a.data()[r * cols + start..r * cols + start + width]);
        }
        let v = Tensor::matrix(rows, width, data).unwrap();
        self.unary(v, Op::SliceCols(self.id, start))
    }

    pub fn slice_rows(self, start: usize, count: usize) -> Var<'t> {
        let a = self.tape.value_of(self.id);
        let cols = a.cols();
        assert!(start + count <= a.rows(), "slice_rows out of range");
        let v = Tensor::matrix(count, cols, a.data()[start * cols..(start + count) * cols].to_vec())
            .unwrap();
        self.unary(v, Op::SliceRows(self.id, start))
    }

    /// Row-wise normalization to zero mean and unit variance, no affine.
    pub fn layer_norm_rows(self, eps: f64) -> Var<'t> {
        let a = self.tape.value_of(self.id);
        let cols = a.cols();
        let n = cols as f64;
        let mut v = (*a).clone();
        for r in 0..a.rows() {
            let row = &mut v.data_mut()[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * inv;
            }
        }
        self.unary(v, Op::LayerNormRows(self.id, eps))
    }

    /// Mean Huber loss between `self` (prediction) and `target`.
    pub fn huber(self, target: Var<'t>, delta: f64) -> Var<'t> {
        let (p, t) = (self.tape.value_of(self.id), self.tape.value_of(target.id));
        assert_eq!(p.len(), t.len(), "huber: shape mismatch {:?} vs {:?}", p.shape(), t.shape());
        let total: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| crate::loss::huber_value(a - b, delta))
            .sum();
        let v = Tensor::scalar(total / p.len() as f64);
        self.binary(target, v, Op::Huber(self.id, target.id, delta))
    }

    /// Same value, cut off from the gradient flow.
    pub fn detach(self) -> Var<'t> {
        let v = self.tape.value_of(self.id);
        self.tape.shared(v, false)
    }
}

/// Horizontal concatenation of equally-tall parts.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Var<'t> {
    let tape = parts[0].tape;
    let values: Vec<Arc<Tensor>> = parts.iter().map(|p| tape.value_of(p.id)).collect();
    let rows = values[0].rows();
    assert!(values.iter().all(|v| v.rows() == rows), "concat_cols: row mismatch");
    let total: usize = values.iter().map(|v| v.cols()).sum();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for v in &values {
            data.extend_from_slice(v.row_slice(r));
        }
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let rg = tape.requires(&ids);
    tape.push(Tensor::matrix(rows, total, data).unwrap(), Op::ConcatCols(ids), rg)
}

/// Vertical concatenation of equally-wide parts.
pub fn concat_rows<'t>(parts: &[Var<'t>]) -> Var<'t> {
    let tape = parts[0].tape;
    let values: Vec<Arc<Tensor>> = parts.iter().map(|p| tape.value_of(p.id)).collect();
    let cols = values[0].cols();
    assert!(values.iter().all(|v| v.cols() == cols), "concat_rows: column mismatch");
    let rows: usize = values.iter().map(|v| v.rows()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for v in &values {
        data.extend_from_slice(v.data());
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let rg = tape.requires(&ids);
    tape.push(Tensor::matrix(rows, cols, data).unwrap(), Op::ConcatRows(ids), rg)
}
