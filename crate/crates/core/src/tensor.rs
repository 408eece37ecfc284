//! Dense row-major matrices and a tape for reverse-mode differentiation.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles during a
//! forward pass. [`Tape::backward`] then walks the records in reverse
//! append order and accumulates gradients for every tracked leaf.
//!
//! ```
//! use gatbind::tensor::{Tape, Tensor};
//!
//! let tape = Tape::<f64>::new();
//! let w = tape.param(Tensor::scalar(0.0));
//! let loss = w.sigmoid().unwrap().scale(3.0).unwrap().sum().unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert!((grads.get(w).unwrap().item() - 0.75).abs() < 1e-12);
//! ```
//!
//! Only scalar-tensor broadcasting exists ([`Var::scale`],
//! [`Var::add_scalar`]); anything wider is spelled out with explicit
//! shapes, usually a matmul against a ones vector.

use std::cell::RefCell;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub type Shape = (usize, usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    BadLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("{op}: index {index} out of range for extent {extent}")]
    OutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward needs a tracked 1x1 loss, got shape {shape:?} (tracked: {tracked})")]
    BadLoss { shape: Shape, tracked: bool },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// A dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor<{}x{}>", self.rows, self.cols)?;
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TensorError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn full(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, T::zero())
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, T::one())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn scalar(value: T) -> Self {
        Self::full(1, 1, value)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "from_rows",
                    lhs: (1, cols),
                    rhs: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> Shape {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// The single entry of a 1x1 tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.shape(), (1, 1), "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        check_same(op, self, other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let dst = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let src = &other.data[p * m..(p + 1) * m];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

fn check_same<T>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: (a.rows, a.cols),
            rhs: (b.rows, b.cols),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    Transpose(usize),
    ConcatCols(usize, usize),
    ConcatRows(usize, usize),
    RowSlice(usize, usize),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    ColSum(usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    MaskedRowSoftmax(usize),
    Scatter(usize, Vec<(usize, usize)>),
    BceWithLogits(usize, Tensor<T>),
}

impl<T> Op<T> {
    fn inputs(&self) -> [Option<usize>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            MatMul(a, b)
            | Add(a, b)
            | Sub(a, b)
            | Mul(a, b)
            | Div(a, b)
            | ConcatCols(a, b)
            | ConcatRows(a, b) => [Some(a), Some(b)],
            Scale(a, _)
            | AddScalar(a)
            | Transpose(a)
            | RowSlice(a, _)
            | Sum(a)
            | Mean(a)
            | RowSum(a)
            | ColSum(a)
            | Relu(a)
            | Sigmoid(a)
            | Tanh(a)
            | Exp(a)
            | MaskedRowSoftmax(a)
            | Scatter(a, _)
            | BceWithLogits(a, _) => [Some(a), None],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// Append-only record of a forward computation.
///
/// A tape is single-threaded; build one per forward pass.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Var<'_, T> {}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives a gradient.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    /// A leaf that does not receive a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor<T>, tracked: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var<'_, T>> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let mut nodes = self.nodes.borrow_mut();
        let tracked = op.inputs().iter().flatten().any(|&i| nodes[i].tracked);
        nodes.push(Node { value, op, tracked });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    /// Propagates d(loss)/d(node) back to every tracked leaf.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.shape() != (1, 1) || !root.tracked {
            return Err(TensorError::BadLoss {
                shape: root.value.shape(),
                tracked: root.tracked,
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::ones(1, 1));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            backprop(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        // keep leaves only
        for (id, slot) in grads.iter_mut().enumerate() {
            if !matches!(nodes[id].op, Op::Leaf) {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Tensor<T>>],
    id: usize,
    delta: Tensor<T>,
) {
    if !nodes[id].tracked {
        return;
    }
    match &mut grads[id] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn backprop<T: Scalar>(
    nodes: &[Node<T>],
    node: &Node<T>,
    g: &Tensor<T>,
    grads: &mut [Option<Tensor<T>>],
) {
    let val = |i: usize| &nodes[i].value;
    let y = &node.value;
    let zero = T::zero();
    let one = T::one();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if nodes[*a].tracked {
                let d = g.matmul(&val(*b).transpose()).expect("matmul grad shape");
                accumulate(nodes, grads, *a, d);
            }
            if nodes[*b].tracked {
                let d = val(*a).transpose().matmul(g).expect("matmul grad shape");
                accumulate(nodes, grads, *b, d);
            }
        }
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, g.clone());
            accumulate(nodes, grads, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, g.clone());
            accumulate(nodes, grads, *b, g.map(|v| -v));
        }
        Op::Mul(a, b) => {
            let da = g.zip_with(val(*b), "mul", |x, y| x * y).unwrap();
            let db = g.zip_with(val(*a), "mul", |x, y| x * y).unwrap();
            accumulate(nodes, grads, *a, da);
            accumulate(nodes, grads, *b, db);
        }
        Op::Div(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let da = g.zip_with(vb, "div", |x, y| x / y).unwrap();
            let db = Tensor::from_fn(g.rows, g.cols, |i, j| {
                let q = vb.get(i, j);
                -g.get(i, j) * va.get(i, j) / (q * q)
            });
            accumulate(nodes, grads, *a, da);
            accumulate(nodes, grads, *b, db);
        }
        Op::Scale(a, s) => accumulate(nodes, grads, *a, g.map(|v| v * *s)),
        Op::AddScalar(a) => accumulate(nodes, grads, *a, g.clone()),
        Op::Transpose(a) => accumulate(nodes, grads, *a, g.transpose()),
        Op::ConcatCols(a, b) => {
            let ca = val(*a).cols;
            let da = Tensor::from_fn(g.rows, ca, |i, j| g.get(i, j));
            let db = Tensor::from_fn(g.rows, g.cols - ca, |i, j| g.get(i, ca + j));
            accumulate(nodes, grads, *a, da);
            accumulate(nodes, grads, *b, db);
        }
        Op::ConcatRows(a, b) => {
            let ra = val(*a).rows;
            let da = Tensor::from_fn(ra, g.cols, |i, j| g.get(i, j));
            let db = Tensor::from_fn(g.rows - ra, g.cols, |i, j| g.get(ra + i, j));
            accumulate(nodes, grads, *a, da);
            accumulate(nodes, grads, *b, db);
        }
        Op::RowSlice(a, start) => {
            let src = val(*a);
            let end = start + g.rows;
            let d = Tensor::from_fn(src.rows, src.cols, |i, j| {
                if i >= *start && i < end {
                    g.get(i - start, j)
                } else {
                    zero
                }
            });
            accumulate(nodes, grads, *a, d);
        }
        Op::Sum(a) => {
            let s = val(*a);
            accumulate(nodes, grads, *a, Tensor::full(s.rows, s.cols, g.item()));
        }
        Op::Mean(a) => {
            let s = val(*a);
            let n = T::of(s.len() as f64);
            accumulate(nodes, grads, *a, Tensor::full(s.rows, s.cols, g.item() / n));
        }
        Op::RowSum(a) => {
            let s = val(*a);
            accumulate(
                nodes,
                grads,
                *a,
                Tensor::from_fn(s.rows, s.cols, |i, _| g.get(i, 0)),
            );
        }
        Op::ColSum(a) => {
            let s = val(*a);
            accumulate(
                nodes,
                grads,
                *a,
                Tensor::from_fn(s.rows, s.cols, |_, j| g.get(0, j)),
            );
        }
        Op::Relu(a) => {
            let x = val(*a);
            let d = g
                .zip_with(x, "relu", |gv, xv| if xv > zero { gv } else { zero })
                .unwrap();
            accumulate(nodes, grads, *a, d);
        }
        Op::Sigmoid(a) => {
            let d = g
                .zip_with(y, "sigmoid", |gv, yv| gv * yv * (one - yv))
                .unwrap();
            accumulate(nodes, grads, *a, d);
        }
        Op::Tanh(a) => {
            let d = g
                .zip_with(y, "tanh", |gv, yv| gv * (one - yv * yv))
                .unwrap();
            accumulate(nodes, grads, *a, d);
        }
        Op::Exp(a) => {
            let d = g.zip_with(y, "exp", |gv, yv| gv * yv).unwrap();
            accumulate(nodes, grads, *a, d);
        }
        Op::MaskedRowSoftmax(a) => {
            let mut d = Tensor::zeros(y.rows, y.cols);
            for i in 0..y.rows {
                let (yr, gr) = (y.row(i), g.row(i));
                let dot = yr.iter().zip(gr).fold(zero, |acc, (&p, &q)| acc + p * q);
                for j in 0..y.cols {
                    d.set(i, j, yr[j] * (gr[j] - dot));
                }
            }
            accumulate(nodes, grads, *a, d);
        }
        Op::Scatter(src, index) => {
            let d = Tensor::from_fn(index.len(), 1, |k, _| {
                let (i, j) = index[k];
                g.get(i, j)
            });
            accumulate(nodes, grads, *src, d);
        }
        Op::BceWithLogits(a, target) => {
            let x = val(*a);
            let d = Tensor::from_fn(x.rows, x.cols, |i, j| {
                g.get(i, j) * (sigmoid(x.get(i, j)) - target.get(i, j))
            });
            accumulate(nodes, grads, *a, d);
        }
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` when the loss does not depend on it.
    pub fn get(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zero-filled when the loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var<'_, T>) -> Tensor<T> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = v.shape();
                Tensor::zeros(r, c)
            }
        }
    }
}

#[allow(clippy::should_implement_trait)]
impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor<T> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Shape {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn is_tracked(&self) -> bool {
        self.tape.nodes.borrow()[self.id].tracked
    }

    fn unary(
        self,
        name: &'static str,
        op: Op<T>,
        f: impl FnOnce(&Tensor<T>) -> Result<Tensor<T>>,
    ) -> Result<Self> {
        let out = {
            let nodes = self.tape.nodes.borrow();
            f(&nodes[self.id].value)?
        };
        self.tape.push(name, out, op)
    }

    fn binary(
        self,
        other: Self,
        name: &'static str,
        op: Op<T>,
        f: impl FnOnce(&Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
    ) -> Result<Self> {
        debug_assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes"
        );
        let out = {
            let nodes = self.tape.nodes.borrow();
            f(&nodes[self.id].value, &nodes[other.id].value)?
        };
        self.tape.push(name, out, op)
    }

    pub fn matmul(self, other: Self) -> Result<Self> {
        self.binary(other, "matmul", Op::MatMul(self.id, other.id), |a, b| {
            a.matmul(b)
        })
    }

    pub fn add(self, other: Self) -> Result<Self> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| {
            a.zip_with(b, "add", |x, y| x + y)
        })
    }

    pub fn sub(self, other: Self) -> Result<Self> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| {
            a.zip_with(b, "sub", |x, y| x - y)
        })
    }

    /// Elementwise product.
    pub fn mul(self, other: Self) -> Result<Self> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| {
            a.zip_with(b, "mul", |x, y| x * y)
        })
    }

    /// Elementwise quotient.
    pub fn div(self, other: Self) -> Result<Self> {
        self.binary(other, "div", Op::Div(self.id, other.id), |a, b| {
            a.zip_with(b, "div", |x, y| x / y)
        })
    }

    pub fn scale(self, s: T) -> Result<Self> {
        self.unary("scale", Op::Scale(self.id, s), |a| Ok(a.map(|v| v * s)))
    }

    pub fn neg(self) -> Result<Self> {
        self.scale(-T::one())
    }

    pub fn add_scalar(self, s: T) -> Result<Self> {
        self.unary("add_scalar", Op::AddScalar(self.id), |a| {
            Ok(a.map(|v| v + s))
        })
    }

    pub fn transpose(self) -> Result<Self> {
        self.unary("transpose", Op::Transpose(self.id), |a| Ok(a.transpose()))
    }

    /// `[self | other]`, both with the same row count.
    pub fn concat_cols(self, other: Self) -> Result<Self> {
        self.binary(
            other,
            "concat_cols",
            Op::ConcatCols(self.id, other.id),
            |a, b| {
                if a.rows != b.rows {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat_cols",
                        lhs: a.shape(),
                        rhs: b.shape(),
                    });
                }
                Ok(Tensor::from_fn(a.rows, a.cols + b.cols, |i, j| {
                    if j < a.cols {
                        a.get(i, j)
                    } else {
                        b.get(i, j - a.cols)
                    }
                }))
            },
        )
    }

    /// `self` stacked above `other`, both with the same column count.
    pub fn concat_rows(self, other: Self) -> Result<Self> {
        self.binary(
            other,
            "concat_rows",
            Op::ConcatRows(self.id, other.id),
            |a, b| {
                if a.cols != b.cols {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat_rows",
                        lhs: a.shape(),
                        rhs: b.shape(),
                    });
                }
                let mut data = Vec::with_capacity(a.len() + b.len());
                data.extend_from_slice(&a.data);
                data.extend_from_slice(&b.data);
                Tensor::new(a.rows + b.rows, a.cols, data)
            },
        )
    }

    /// Rows `start..end`.
    pub fn row_slice(self, start: usize, end: usize) -> Result<Self> {
        self.unary("row_slice", Op::RowSlice(self.id, start), |a| {
            if start > end || end > a.rows {
                return Err(TensorError::OutOfRange {
                    op: "row_slice",
                    index: end.max(start),
                    extent: a.rows,
                });
            }
            Ok(Tensor::from_fn(end - start, a.cols, |i, j| {
                a.get(start + i, j)
            }))
        })
    }

    /// Sum of all entries, 1x1.
    pub fn sum(self) -> Result<Self> {
        self.unary("sum", Op::Sum(self.id), |a| {
            Ok(Tensor::scalar(a.data.iter().fold(T::zero(), |s, &v| s + v)))
        })
    }

    /// Mean of all entries, 1x1.
    pub fn mean(self) -> Result<Self> {
        self.unary("mean", Op::Mean(self.id), |a| {
            let n = T::of(a.len().max(1) as f64);
            Ok(Tensor::scalar(
                a.data.iter().fold(T::zero(), |s, &v| s + v) / n,
            ))
        })
    }

    /// Per-row sums, Nx1.
    pub fn row_sum(self) -> Result<Self> {
        self.unary("row_sum", Op::RowSum(self.id), |a| {
            Ok(Tensor::from_fn(a.rows, 1, |i, _| {
                a.row(i).iter().fold(T::zero(), |s, &v| s + v)
            }))
        })
    }

    /// Per-row means, Nx1.
    pub fn row_mean(self) -> Result<Self> {
        let cols = self.shape().1.max(1);
        self.row_sum()?.scale(T::one() / T::of(cols as f64))
    }

    /// Sums over rows (one value per column), 1xD.
    pub fn col_sum(self) -> Result<Self> {
        self.unary("col_sum", Op::ColSum(self.id), |a| {
            let mut out = Tensor::zeros(1, a.cols);
            for i in 0..a.rows {
                for (o, &v) in out.data.iter_mut().zip(a.row(i)) {
                    *o += v;
                }
            }
            Ok(out)
        })
    }

    pub fn relu(self) -> Result<Self> {
        let zero = T::zero();
        self.unary("relu", Op::Relu(self.id), |a| {
            Ok(a.map(|v| if v > zero { v } else { zero }))
        })
    }

    pub fn sigmoid(self) -> Result<Self> {
        self.unary("sigmoid", Op::Sigmoid(self.id), |a| Ok(a.map(sigmoid)))
    }

    pub fn tanh(self) -> Result<Self> {
        self.unary("tanh", Op::Tanh(self.id), |a| Ok(a.map(|v| v.tanh())))
    }

    pub fn exp(self) -> Result<Self> {
        self.unary("exp", Op::Exp(self.id), |a| Ok(a.map(|v| v.exp())))
    }

    /// Row-wise softmax restricted to entries where `mask` is set.
    ///
    /// Masked-out entries are exactly zero. A row with no masked-in entry
    /// is all zeros.
    pub fn masked_row_softmax(self, mask: &[bool]) -> Result<Self> {
        self.unary("masked_row_softmax", Op::MaskedRowSoftmax(self.id), |a| {
            if mask.len() != a.len() {
                return Err(TensorError::BadLength {
                    rows: a.rows,
                    cols: a.cols,
                    len: mask.len(),
                });
            }
            Ok(masked_row_softmax(a, mask))
        })
    }

    /// Places the entries of a Kx1 column at `index` positions of a zero
    /// matrix of shape `shape`; repeated positions accumulate.
    pub fn scatter(self, index: &[(usize, usize)], shape: Shape) -> Result<Self> {
        let op = Op::Scatter(self.id, index.to_vec());
        self.unary("scatter", op, |src| {
            if src.shape() != (index.len(), 1) {
                return Err(TensorError::ShapeMismatch {
                    op: "scatter",
                    lhs: src.shape(),
                    rhs: (index.len(), 1),
                });
            }
            let mut out = Tensor::zeros(shape.0, shape.1);
            for (k, &(i, j)) in index.iter().enumerate() {
                if i >= shape.0 || j >= shape.1 {
                    return Err(TensorError::OutOfRange {
                        op: "scatter",
                        index: i.max(j),
                        extent: shape.0.min(shape.1),
                    });
                }
                out.data[i * shape.1 + j] += src.data[k];
            }
            Ok(out)
        })
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Elementwise binary cross-entropy of logits against `target`.
    ///
    /// Evaluated as `max(x, 0) - x*y + ln(1 + exp(-|x|))`, finite for any
    /// finite logit.
    pub fn bce_with_logits(self, target: &Tensor<T>) -> Result<Self> {
        let op = Op::BceWithLogits(self.id, target.clone());
        self.unary("bce_with_logits", op, |x| {
            x.zip_with(target, "bce_with_logits", bce_with_logits)
        })
    }
}

/// Binary cross-entropy of one logit `x` against a target `y` in [0, 1].
pub fn bce_with_logits<T: Scalar>(x: T, y: T) -> T {
    x.max(T::zero()) - x * y + (-x.abs()).exp().ln_1p()
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn masked_row_softmax<T: Scalar>(a: &Tensor<T>, mask: &[bool]) -> Tensor<T> {
    let mut out = Tensor::zeros(a.rows, a.cols);
    for i in 0..a.rows {
        let row = a.row(i);
        let m = &mask[i * a.cols..(i + 1) * a.cols];
        let Some(max) = row
            .iter()
            .zip(m)
            .filter(|(_, &keep)| keep)
            .map(|(&v, _)| v)
            .reduce(T::max)
        else {
            continue;
        };
        let mut total = T::zero();
        for j in 0..a.cols {
            if m[j] {
                let e = (row[j] - max).exp();
                out.data[i * a.cols + j] = e;
                total += e;
            }
        }
        for v in &mut out.data[i * a.cols..(i + 1) * a.cols] {
            *v /= total;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn uniform_softmax_row() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(1, 3));
        let y = x.masked_row_softmax(&[true; 3]).unwrap().value();
        for &v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_entries_are_exactly_zero_and_empty_rows_vanish() {
        let tape = Tape::new();
        let x = tape.constant(t(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]));
        let y = x
            .masked_row_softmax(&[true, false, true, false, false, false])
            .unwrap()
            .value();
        assert_eq!(y.get(0, 1), 0.0);
        assert!((y.get(0, 0) + y.get(0, 2) - 1.0).abs() < 1e-15);
        assert_eq!(y.row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn sigmoid_at_zero_and_extremes() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
    }

    #[test]
    fn matmul_identity() {
        let a = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(a.matmul(&Tensor::identity(2)).unwrap(), a);
    }

    #[test]
    fn shape_mismatch_names_shapes() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::<f64>::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        let err = a.matmul(b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                lhs: (2, 3),
                rhs: (2, 3)
            }
        );
        assert!(err.to_string().contains("(2, 3)"));
    }

    #[test]
    fn non_finite_trips_error() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::scalar(1.0f64));
        let z = tape.constant(Tensor::scalar(0.0));
        assert!(matches!(
            a.div(z),
            Err(TensorError::NonFinite { op: "div" })
        ));
    }

    #[test]
    fn sum_of_wx_gradient_is_x_broadcast_per_row() {
        // loss = sum(W x), x fixed: dW[i][j] = x[j]
        let tape = Tape::new();
        let w = tape.param(t(&[&[0.3, -0.7], &[1.1, 0.2]]));
        let x = tape.constant(t(&[&[2.0], &[-5.0]]));
        let loss = w.matmul(x).unwrap().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &t(&[&[2.0, -5.0], &[2.0, -5.0]]));
        assert!(g.get(x).is_none());
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let tape = Tape::new();
        let w = tape.param(Tensor::scalar(0.0));
        let loss = w.sigmoid().unwrap().scale(7.0).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().item(), 0.25 * 7.0);
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let w = tape.param(Tensor::scalar(3.0));
        let loss = w.add(w).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().item(), 2.0);
    }

    #[test]
    fn untracked_or_non_scalar_loss_is_rejected() {
        let tape = Tape::new();
        let c = tape.constant(Tensor::scalar(1.0f64));
        assert!(matches!(
            tape.backward(c),
            Err(TensorError::BadLoss { tracked: false, .. })
        ));
        let p = tape.param(Tensor::<f64>::zeros(2, 1));
        assert!(matches!(
            tape.backward(p),
            Err(TensorError::BadLoss { shape: (2, 1), .. })
        ));
    }

    #[test]
    fn scatter_accumulates_and_routes_gradient() {
        let tape = Tape::new();
        let v = tape.param(t(&[&[1.0], &[2.0], &[4.0]]));
        let s = v.scatter(&[(0, 1), (1, 0), (0, 1)], (2, 2)).unwrap();
        assert_eq!(s.value(), t(&[&[0.0, 5.0], &[2.0, 0.0]]));
        let weights = tape.constant(t(&[&[10.0, 20.0], &[30.0, 40.0]]));
        let loss = s.mul(weights).unwrap().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(v).unwrap(), &t(&[&[20.0], &[30.0], &[20.0]]));
    }

    #[test]
    fn f32_tape_works() {
        let tape = Tape::<f32>::new();
        let w = tape.param(Tensor::scalar(2.0f32));
        let loss = w.mul(w).unwrap().sum().unwrap();
        assert_eq!(tape.backward(loss).unwrap().get(w).unwrap().item(), 4.0f32);
    }
}
