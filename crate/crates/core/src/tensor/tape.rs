//! Reverse-mode differentiation on a flat tape.
//!
//! A [`Tape`] records every value produced during a forward pass together
//! with the operation that produced it. [`Tape::grad`] walks the tape
//! backwards; each operation's vector-Jacobian product is itself expressed
//! with tape operations, so gradients can be differentiated again when
//! `create_graph` is set (the gradient penalty needs this).

use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use super::value::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Affine { x: usize, scale: f64 },
    MulConst { x: usize, c: Rc<Tensor> },
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    AddRow { x: usize, bias: usize },
    SumRows(usize),
    BroadcastRows(usize),
    SumCols(usize),
    BroadcastCols(usize),
    Sum(usize),
    Fill(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    Softplus(usize),
    Powf { x: usize, p: f64 },
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    Unfold { x: usize, k: usize },
    Fold { x: usize, k: usize },
    PickRows { x: usize, idx: Rc<Vec<usize>> },
    ScatterRows { x: usize, idx: Rc<Vec<usize>> },
    ConcatCols(Vec<usize>),
    SliceCols { x: usize, start: usize },
    PadCols { x: usize, start: usize },
    ConcatRows(Vec<usize>),
    SliceRows { x: usize, start: usize },
    PadRows { x: usize, start: usize },
    GatherRows { table: usize, ids: Rc<Vec<usize>> },
    ScatterAddRows { x: usize, ids: Rc<Vec<usize>> },
    Transpose(usize),
    Reshape(usize),
    StraightThrough { soft: usize },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for later differentiation.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    recording: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// A handle to a value on a [`Tape`].
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

/// Gradients of a scalar with respect to every tracked leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    by_id: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.by_id.get(&var.id)
    }

    /// Gradient of `var`, or zeros of its shape when it did not influence the loss.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            recording: Cell::new(true),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let id = self.push_node(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            requires_grad,
        });
        Var { tape: self, id }
    }

    /// A tracked leaf: gradients flow into it.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// An untracked leaf.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = parts[0].rows();
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let total: usize = values.iter().map(|v| v.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                assert_eq!(v.rows(), rows, "concat_cols row mismatch");
                data.extend_from_slice(v.row_slice(r));
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        self.push_op(Tensor::matrix(rows, total, data), Op::ConcatCols(ids.clone()), &ids)
    }

    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = parts[0].cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = p.value();
            assert_eq!(v.cols(), cols, "concat_rows column mismatch");
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        self.push_op(Tensor::matrix(rows, cols, data), Op::ConcatRows(ids.clone()), &ids)
    }

    /// Gradients of `output` with respect to `wrt`.
    ///
    /// With `create_graph` the returned values are themselves differentiable
    /// functions of the recorded graph. Inputs that `output` does not depend
    /// on receive zeros.
    pub fn grad<'t>(
        &'t self,
        output: Var<'t>,
        wrt: &[Var<'t>],
        create_graph: bool,
    ) -> Vec<Var<'t>> {
        let seed = self.constant(Tensor::full(output.value().shape(), 1.0));
        let grads = self.propagate(output.id, seed, create_graph);
        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => g,
                None => self.constant(Tensor::zeros(w.value().shape())),
            })
            .collect()
    }

    /// Gradients of a scalar loss with respect to every tracked leaf.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let value = loss.value();
        if value.len() != 1 {
            return Err(Error::NonScalarLoss(value.shape().to_vec()));
        }
        let seed = self.constant(Tensor::full(value.shape(), 1.0));
        let grads = self.propagate(loss.id, seed, false);
        let nodes = self.nodes.borrow();
        let mut by_id = HashMap::new();
        for (id, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                let node = &nodes[id];
                if matches!(node.op, Op::Leaf) && node.requires_grad {
                    by_id.insert(id, (*nodes[g.id].value).clone());
                }
            }
        }
        Ok(Gradients { by_id })
    }

    fn propagate<'t>(
        &'t self,
        output: usize,
        seed: Var<'t>,
        create_graph: bool,
    ) -> Vec<Option<Var<'t>>> {
        let previous = self.recording.replace(create_graph);
        let mut grads: Vec<Option<Var<'t>>> = vec![None; output + 1];
        grads[output] = Some(seed);
        for id in (0..=output).rev() {
            let Some(g) = grads[id] else { continue };
            let op = {
                let nodes = self.nodes.borrow();
                let node = &nodes[id];
                if !node.requires_grad || matches!(node.op, Op::Leaf) {
                    continue;
                }
                node.op.clone()
            };
            for (input, gi) in self.vjp(id, &op, g) {
                grads[input] = Some(match grads[input] {
                    Some(acc) => acc.add(gi),
                    None => gi,
                });
            }
        }
        self.recording.set(previous);
        grads
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn v(&self, id: usize) -> Var<'_> {
        Var { tape: self, id }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn vjp<'t>(&'t self, id: usize, op: &Op, g: Var<'t>) -> Vec<(usize, Var<'t>)> {
        let mut out = Vec::with_capacity(2);
        let mut emit = |input: usize, f: &dyn Fn() -> Var<'t>| {
            if self.needs(input) {
                out.push((input, f()));
            }
        };
        let y = self.v(id);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                emit(*a, &|| g);
                emit(*b, &|| g);
            }
            Op::Sub(a, b) => {
                emit(*a, &|| g);
                emit(*b, &|| g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                emit(*a, &|| g.mul(self.v(*b)));
                emit(*b, &|| g.mul(self.v(*a)));
            }
            Op::Div(a, b) => {
                emit(*a, &|| g.div(self.v(*b)));
                emit(*b, &|| g.mul(y).div(self.v(*b)).scale(-1.0));
            }
            Op::Affine { x, scale } => emit(*x, &|| g.scale(*scale)),
            Op::MulConst { x, c } => emit(*x, &|| g.mul_const_rc(Rc::clone(c))),
            Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (self.v(*a), self.v(*b));
                match (ta, tb) {
                    (false, false) => {
                        emit(*a, &|| g.matmul_ex(bv, false, true));
                        emit(*b, &|| av.matmul_ex(g, true, false));
                    }
                    (false, true) => {
                        emit(*a, &|| g.matmul_ex(bv, false, false));
                        emit(*b, &|| g.matmul_ex(av, true, false));
                    }
                    (true, false) => {
                        emit(*a, &|| bv.matmul_ex(g, false, true));
                        emit(*b, &|| av.matmul_ex(g, false, false));
                    }
                    (true, true) => {
                        emit(*a, &|| bv.matmul_ex(g, true, true));
                        emit(*b, &|| g.matmul_ex(av, true, true));
                    }
                }
            }
            Op::AddRow { x, bias } => {
                emit(*x, &|| g);
                emit(*bias, &|| {
                    let s = g.sum_rows();
                    let shape = self.value_of(*bias).shape().to_vec();
                    if s.value().shape() == shape.as_slice() {
                        s
                    } else {
                        s.reshape(&shape)
                    }
                });
            }
            Op::SumRows(x) => {
                let n = self.value_of(*x).rows();
                emit(*x, &|| g.broadcast_rows(n));
            }
            Op::BroadcastRows(x) => emit(*x, &|| g.sum_rows()),
            Op::SumCols(x) => {
                let m = self.value_of(*x).cols();
                emit(*x, &|| g.broadcast_cols(m));
            }
            Op::BroadcastCols(x) => emit(*x, &|| g.sum_cols()),
            Op::Sum(x) => {
                let shape = self.value_of(*x).shape().to_vec();
                emit(*x, &|| g.fill(&shape));
            }
            Op::Fill(x) => emit(*x, &|| g.sum()),
            Op::Sigmoid(x) => emit(*x, &|| g.mul(y).mul(y.affine(-1.0, 1.0))),
            Op::Tanh(x) => emit(*x, &|| g.mul(y.mul(y).affine(-1.0, 1.0))),
            Op::Relu(x) => emit(*x, &|| {
                let mask = self.value_of(*x).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                g.mul_const(mask)
            }),
            Op::Exp(x) => emit(*x, &|| g.mul(y)),
            Op::Ln(x) => emit(*x, &|| g.div(self.v(*x))),
            Op::Softplus(x) => emit(*x, &|| g.mul(self.v(*x).sigmoid())),
            Op::Powf { x, p } => emit(*x, &|| g.mul(self.v(*x).powf(p - 1.0).scale(*p))),
            Op::SoftmaxRows(x) => emit(*x, &|| {
                let m = y.cols();
                let dot = g.mul(y).sum_cols().broadcast_cols(m);
                y.mul(g.sub(dot))
            }),
            Op::LogSoftmaxRows(x) => emit(*x, &|| {
                let m = y.cols();
                let total = g.sum_cols().broadcast_cols(m);
                g.sub(y.exp().mul(total))
            }),
            Op::Unfold { x, k } => {
                let len = self.value_of(*x).rows();
                emit(*x, &|| g.fold(*k, len));
            }
            Op::Fold { x, k } => emit(*x, &|| g.unfold(*k)),
            Op::PickRows { x, idx } => {
                let rows = self.value_of(*x).rows();
                emit(*x, &|| g.scatter_rows(Rc::clone(idx), rows));
            }
            Op::ScatterRows { x, idx } => emit(*x, &|| g.pick_rows(Rc::clone(idx))),
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value_of(p).cols();
                    let s = start;
                    emit(p, &|| g.slice_cols(s, s + w));
                    start += w;
                }
            }
            Op::SliceCols { x, start } => {
                let total = self.value_of(*x).cols();
                emit(*x, &|| g.pad_cols(*start, total));
            }
            Op::PadCols { x, start } => {
                let w = self.value_of(*x).cols();
                emit(*x, &|| g.slice_cols(*start, start + w));
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let h = self.value_of(p).rows();
                    let s = start;
                    emit(p, &|| g.slice_rows(s, s + h));
                    start += h;
                }
            }
            Op::SliceRows { x, start } => {
                let total = self.value_of(*x).rows();
                emit(*x, &|| g.pad_rows(*start, total));
            }
            Op::PadRows { x, start } => {
                let h = self.value_of(*x).rows();
                emit(*x, &|| g.slice_rows(*start, start + h));
            }
            Op::GatherRows { table, ids } => {
                let rows = self.value_of(*table).rows();
                emit(*table, &|| g.scatter_add_rows(Rc::clone(ids), rows));
            }
            Op::ScatterAddRows { x, ids } => emit(*x, &|| g.gather_rows_rc(Rc::clone(ids))),
            Op::Transpose(x) => emit(*x, &|| g.transpose()),
            Op::Reshape(x) => {
                let shape = self.value_of(*x).shape().to_vec();
                emit(*x, &|| g.reshape(&shape));
            }
            Op::StraightThrough { soft } => emit(*soft, &|| g),
        }
        out
    }

    fn push_node(&self, node: Node) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    fn push_op(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'_> {
        let requires_grad = self.recording.get() && {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].requires_grad)
        };
        let op = if requires_grad { op } else { Op::Leaf };
        let id = self.push_node(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(
        a.shape(),
        b.shape(),
        "elementwise op on mismatched shapes {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// `op(a) * op(b)` where `op` optionally transposes.
pub(crate) fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "matmul inner dimensions differ: {m}x{k} * {k2}x{n}");
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return Tensor::matrix(m, n, out);
    }
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    // SAFETY: the pointers cover m*k, k*n and m*n elements with the strides above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor::matrix(m, n, out)
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    /// Borrow of the value; do not hold it across other tape operations.
    pub fn value_ref(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &*n[self.id].value)
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

    pub fn item(&self) -> f64 {
        self.value_ref().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.needs(self.id)
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let v = self.value().map(f);
        self.tape.push_op(v, op, &[self.id])
    }

    fn binary(self, other: Var<'t>, op: Op, f: impl Fn(f64, f64) -> f64) -> Var<'t> {
        let v = zip_map(&self.value(), &other.value(), f);
        self.tape.push_op(v, op, &[self.id, other.id])
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn div(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::Div(self.id, other.id), |a, b| a / b)
    }

    /// `scale * x + shift`.
    pub fn affine(self, scale: f64, shift: f64) -> Var<'t> {
        self.unary(Op::Affine { x: self.id, scale }, |v| scale * v + shift)
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.affine(s, 0.0)
    }

    pub fn mul_const(self, c: Tensor) -> Var<'t> {
        self.mul_const_rc(Rc::new(c))
    }

    fn mul_const_rc(self, c: Rc<Tensor>) -> Var<'t> {
        let v = zip_map(&self.value(), &c, |a, b| a * b);
        self.tape.push_op(v, Op::MulConst { x: self.id, c }, &[self.id])
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.matmul_ex(other, false, false)
    }

    /// `self * other^T`.
    pub fn matmul_nt(self, other: Var<'t>) -> Var<'t> {
        self.matmul_ex(other, false, true)
    }

    /// `self^T * other`.
    pub fn matmul_tn(self, other: Var<'t>) -> Var<'t> {
        self.matmul_ex(other, true, false)
    }

    fn matmul_ex(self, other: Var<'t>, ta: bool, tb: bool) -> Var<'t> {
        let v = gemm(&self.value(), ta, &other.value(), tb);
        let op = Op::MatMul {
            a: self.id,
            b: other.id,
            ta,
            tb,
        };
        self.tape.push_op(v, op, &[self.id, other.id])
    }

    /// Adds a `1 x m` (or `[m]`) bias to every row.
    pub fn add_row(self, bias: Var<'t>) -> Var<'t> {
        let x = self.value();
        let b = bias.value();
        let m = x.cols();
        assert_eq!(b.len(), m, "bias width {} != {}", b.len(), m);
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(m.max(1)) {
            for (v, &bb) in row.iter_mut().zip(b.data()) {
                *v += bb;
            }
        }
        let op = Op::AddRow {
            x: self.id,
            bias: bias.id,
        };
        self.tape
            .push_op(Tensor::new(x.shape().to_vec(), data), op, &[self.id, bias.id])
    }

    /// Column sums as a `1 x m` row.
    pub fn sum_rows(self) -> Var<'t> {
        let x = self.value();
        let m = x.cols();
        let mut out = vec![0.0; m];
        for r in 0..x.rows() {
            for (o, &v) in out.iter_mut().zip(x.row_slice(r)) {
                *o += v;
            }
        }
        self.tape
            .push_op(Tensor::matrix(1, m, out), Op::SumRows(self.id), &[self.id])
    }

    pub fn broadcast_rows(self, n: usize) -> Var<'t> {
        let x = self.value();
        assert_eq!(x.rows(), 1, "broadcast_rows needs a single row");
        let mut data = Vec::with_capacity(n * x.cols());
        for _ in 0..n {
            data.extend_from_slice(x.data());
        }
        let op = Op::BroadcastRows(self.id);
        self.tape
            .push_op(Tensor::matrix(n, x.cols(), data), op, &[self.id])
    }

    /// Row sums as an `n x 1` column.
    pub fn sum_cols(self) -> Var<'t> {
        let x = self.value();
        let out: Vec<f64> = (0..x.rows()).map(|r| x.row_slice(r).iter().sum()).collect();
        self.tape
            .push_op(Tensor::matrix(x.rows(), 1, out), Op::SumCols(self.id), &[self.id])
    }

    pub fn broadcast_cols(self, m: usize) -> Var<'t> {
        let x = self.value();
        assert_eq!(x.cols(), 1, "broadcast_cols needs a single column");
        let mut data = Vec::with_capacity(x.rows() * m);
        for &v in x.data() {
            data.extend(std::iter::repeat_n(v, m));
        }
        let op = Op::BroadcastCols(self.id);
        self.tape
            .push_op(Tensor::matrix(x.rows(), m, data), op, &[self.id])
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.tape
            .push_op(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value_ref().len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    fn fill(self, shape: &[usize]) -> Var<'t> {
        let v = self.item();
        let op = Op::Fill(self.id);
        self.tape.push_op(Tensor::full(shape, v), op, &[self.id])
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |v| v.max(0.0))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Ln(self.id), f64::ln)
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(self) -> Var<'t> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        self.unary(Op::Powf { x: self.id, p }, |v| v.powf(p))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.powf(0.5)
    }

    pub fn square(self) -> Var<'t> {
        self.mul(self)
    }

    pub fn softmax_rows(self) -> Var<'t> {
        let x = self.value();
        let m = x.cols();
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(m.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        self.tape.push_op(
            Tensor::new(x.shape().to_vec(), data),
            Op::SoftmaxRows(self.id),
            &[self.id],
        )
    }

    pub fn log_softmax_rows(self) -> Var<'t> {
        let x = self.value();
        let m = x.cols();
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(m.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.tape.push_op(
            Tensor::new(x.shape().to_vec(), data),
            Op::LogSoftmaxRows(self.id),
            &[self.id],
        )
    }

    /// Sliding windows of `k` consecutive rows, each flattened into one row:
    /// `[L x d] -> [(L-k+1) x (k*d)]`.
    pub fn unfold(self, k: usize) -> Var<'t> {
        let x = self.value();
        let (len, d) = (x.rows(), x.cols());
        assert!(k >= 1 && len >= k, "unfold: length {len} < kernel {k}");
        let out_rows = len - k + 1;
        let mut data = Vec::with_capacity(out_rows * k * d);
        for t in 0..out_rows {
            data.extend_from_slice(&x.data()[t * d..(t + k) * d]);
        }
        self.tape.push_op(
            Tensor::matrix(out_rows, k * d, data),
            Op::Unfold { x: self.id, k },
            &[self.id],
        )
    }

    fn fold(self, k: usize, len: usize) -> Var<'t> {
        let g = self.value();
        let d = g.cols() / k;
        let mut data = vec![0.0; len * d];
        for t in 0..g.rows() {
            for (j, v) in g.row_slice(t).iter().enumerate() {
                data[t * d + j] += v;
            }
        }
        self.tape.push_op(
            Tensor::matrix(len, d, data),
            Op::Fold { x: self.id, k },
            &[self.id],
        )
    }

    /// Column-wise maximum over rows: `[L x m] -> [1 x m]`. Ties pick the first row.
    pub fn max_pool_rows(self) -> Var<'t> {
        let idx = {
            let x = self.value_ref();
            let (rows, m) = (x.rows(), x.cols());
            assert!(rows > 0, "max-pool over zero rows");
            let mut idx = vec![0usize; m];
            for (c, best) in idx.iter_mut().enumerate() {
                for r in 1..rows {
                    if x.get(r, c) > x.get(*best, c) {
                        *best = r;
                    }
                }
            }
            idx
        };
        self.pick_rows(Rc::new(idx))
    }

    fn pick_rows(self, idx: Rc<Vec<usize>>) -> Var<'t> {
        let x = self.value();
        let data: Vec<f64> = idx.iter().enumerate().map(|(c, &r)| x.get(r, c)).collect();
        let m = data.len();
        self.tape
            .push_op(Tensor::matrix(1, m, data), Op::PickRows { x: self.id, idx }, &[self.id])
    }

    fn scatter_rows(self, idx: Rc<Vec<usize>>, rows: usize) -> Var<'t> {
        let g = self.value();
        let m = idx.len();
        let mut data = vec![0.0; rows * m];
        for (c, &r) in idx.iter().enumerate() {
            data[r * m + c] = g.data()[c];
        }
        let op = Op::ScatterRows { x: self.id, idx };
        self.tape.push_op(Tensor::matrix(rows, m, data), op, &[self.id])
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Var<'t> {
        let x = self.value();
        assert!(start <= end && end <= x.cols(), "slice_cols out of range");
        let mut data = Vec::with_capacity(x.rows() * (end - start));
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row_slice(r)[start..end]);
        }
        let op = Op::SliceCols { x: self.id, start };
        self.tape
            .push_op(Tensor::matrix(x.rows(), end - start, data), op, &[self.id])
    }

    fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        let x = self.value();
        let w = x.cols();
        let mut data = vec![0.0; x.rows() * total];
        for r in 0..x.rows() {
            data[r * total + start..r * total + start + w].copy_from_slice(x.row_slice(r));
        }
        let op = Op::PadCols { x: self.id, start };
        self.tape
            .push_op(Tensor::matrix(x.rows(), total, data), op, &[self.id])
    }

    pub fn slice_rows(self, start: usize, end: usize) -> Var<'t> {
        let x = self.value();
        let m = x.cols();
        assert!(start <= end && end <= x.rows(), "slice_rows out of range");
        let data = x.data()[start * m..end * m].to_vec();
        let op = Op::SliceRows { x: self.id, start };
        self.tape
            .push_op(Tensor::matrix(end - start, m, data), op, &[self.id])
    }

    pub fn row(self, r: usize) -> Var<'t> {
        self.slice_rows(r, r + 1)
    }

    fn pad_rows(self, start: usize, total: usize) -> Var<'t> {
        let x = self.value();
        let m = x.cols();
        let mut data = vec![0.0; total * m];
        data[start * m..start * m + x.len()].copy_from_slice(x.data());
        let op = Op::PadRows { x: self.id, start };
        self.tape.push_op(Tensor::matrix(total, m, data), op, &[self.id])
    }

    /// Row lookup in a table: `table[ids[i]]` for each `i`.
    pub fn gather_rows(self, ids: &[usize]) -> Var<'t> {
        self.gather_rows_rc(Rc::new(ids.to_vec()))
    }

    fn gather_rows_rc(self, ids: Rc<Vec<usize>>) -> Var<'t> {
        let t = self.value();
        let m = t.cols();
        let mut data = Vec::with_capacity(ids.len() * m);
        for &i in ids.iter() {
            assert!(i < t.rows(), "gather index {i} out of range {}", t.rows());
            data.extend_from_slice(t.row_slice(i));
        }
        let n = ids.len();
        let op = Op::GatherRows {
            table: self.id,
            ids,
        };
        self.tape.push_op(Tensor::matrix(n, m, data), op, &[self.id])
    }

    fn scatter_add_rows(self, ids: Rc<Vec<usize>>, rows: usize) -> Var<'t> {
        let g = self.value();
        let m = g.cols();
        let mut data = vec![0.0; rows * m];
        for (r, &i) in ids.iter().enumerate() {
            for (d, &v) in data[i * m..(i + 1) * m].iter_mut().zip(g.row_slice(r)) {
                *d += v;
            }
        }
        let op = Op::ScatterAddRows { x: self.id, ids };
        self.tape.push_op(Tensor::matrix(rows, m, data), op, &[self.id])
    }

    pub fn transpose(self) -> Var<'t> {
        let x = self.value();
        let (r, c) = (x.rows(), x.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = x.get(i, j);
            }
        }
        self.tape
            .push_op(Tensor::matrix(c, r, data), Op::Transpose(self.id), &[self.id])
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        let v = (*self.value()).clone().reshaped(shape.to_vec());
        let op = Op::Reshape(self.id);
        self.tape.push_op(v, op, &[self.id])
    }

    /// Forward value `hard`, gradient passed straight to `self`.
    pub fn straight_through(self, hard: Tensor) -> Var<'t> {
        assert_eq!(hard.shape(), self.value_ref().shape(), "straight-through shape");
        self.tape
            .push_op(hard, Op::StraightThrough { soft: self.id }, &[self.id])
    }

    /// A copy of the value cut off from the graph.
    pub fn detach(self) -> Var<'t> {
        self.tape.constant((*self.value()).clone())
    }
}
