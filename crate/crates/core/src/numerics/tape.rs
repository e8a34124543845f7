//! Tape-based reverse-mode automatic differentiation over dense [`Tensor`]s.
//!
//! A [`Tape`] is built fresh for every forward pass. Operations append nodes
//! in execution order, so the node list is always topologically sorted and
//! the backward sweep is a single reverse scan. Parameters enter the tape as
//! leaves with `requires_grad = true`; after [`Tape::backward`] their
//! gradients are read back with [`Tape::grad`].

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    ConcatLastDim,
}

impl FromStr for BinaryOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(BinaryOp::Add),
            "sub" => Ok(BinaryOp::Sub),
            "mul" => Ok(BinaryOp::Mul),
            "concat_last_dim" => Ok(BinaryOp::ConcatLastDim),
            other => Err(Error::Config(format!("unknown binary op `{other}`"))),
        }
    }
}

/// How the right operand of an elementwise op lines up with the left.
#[derive(Clone, Copy, Debug)]
enum Broadcast {
    Same,
    Rows,
    Scalar,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Elementwise(usize, usize, BinaryOp, Broadcast),
    Concat(usize, usize),
    Unary(usize, Activation),
    Propagate { adj: usize, x: usize },
    SliceCols { x: usize, start: usize },
    Sum(usize),
    Mean(usize),
    Affine(usize, f64),
    Ln(usize),
    Clamp(usize, f64, f64),
    Abs(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Vec<f64>>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "variable recorded on a different tape");
        v.index
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Records a leaf. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: &Tensor) -> Var {
        self.leaf(value.clone(), true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v)].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (sa, sb) = (self.nodes[ia].value.shape(), self.nodes[ib].value.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.nodes[ia].value.data(),
            false,
            self.nodes[ib].value.data(),
            false,
            &mut out,
            0.0,
        );
        let rg = self.needs(ia) || self.needs(ib);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(ia, ib), rg))
    }

    pub fn unary(&mut self, x: Var, f: Activation) -> Var {
        let ix = self.idx(x);
        let value = match f {
            Activation::Sigmoid => self.nodes[ix].value.map(sigmoid),
            Activation::Tanh => self.nodes[ix].value.map(f64::tanh),
            Activation::Relu => self.nodes[ix].value.map(|v| v.max(0.0)),
        };
        let rg = self.needs(ix);
        self.push(value, Op::Unary(ix, f), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Activation::Relu)
    }

    /// Elementwise `add`/`sub`/`mul` (the right operand may be a scalar or a
    /// row vector broadcast over every row of the left) and concatenation
    /// along the last axis.
    pub fn binary(&mut self, a: Var, b: Var, op: BinaryOp) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        if op == BinaryOp::ConcatLastDim {
            return self.concat_idx(ia, ib);
        }
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let mode = if ta.shape() == tb.shape() {
            Broadcast::Same
        } else if tb.len() == 1 {
            Broadcast::Scalar
        } else if tb.len() == ta.cols()
            && tb.rows() == 1
            && !ta.shape().is_empty()
            && tb.shape().len() <= 2
        {
            Broadcast::Rows
        } else {
            return Err(Error::dim(op_name(op), ta.shape(), tb.shape()));
        };
        let f: fn(f64, f64) -> f64 = match op {
            BinaryOp::Add => |x, y| x + y,
            BinaryOp::Sub => |x, y| x - y,
            BinaryOp::Mul => |x, y| x * y,
            BinaryOp::ConcatLastDim => unreachable!(),
        };
        let (da, db) = (ta.data(), tb.data());
        let cols = ta.cols();
        let out: Vec<f64> = match mode {
            Broadcast::Same => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Scalar => da.iter().map(|&x| f(x, db[0])).collect(),
            Broadcast::Rows => da
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, db[i % cols]))
                .collect(),
        };
        let value = Tensor::new(ta.shape().to_vec(), out)?;
        let rg = self.needs(ia) || self.needs(ib);
        Ok(self.push(value, Op::Elementwise(ia, ib, op, mode), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Mul)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::ConcatLastDim)
    }

    fn concat_idx(&mut self, ia: usize, ib: usize) -> Result<Var> {
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::dim("concat_last_dim", sa, sb));
        }
        let (ca, cb) = (ta.cols(), tb.cols());
        let rows = ta.rows();
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(ta.row(r));
            out.extend_from_slice(tb.row(r));
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let rg = self.needs(ia) || self.needs(ib);
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(ia, ib), rg))
    }

    /// Applies an `N×N` propagation matrix to every consecutive block of `N`
    /// rows of `x`, i.e. `blockdiag(adj, …, adj) · x`. With a single block this
    /// is a plain matrix product; stacked blocks let one tape node convolve a
    /// whole batch of graph snapshots.
    pub fn propagate(&mut self, adj: Var, x: Var) -> Result<Var> {
        let (ia, ix) = (self.idx(adj), self.idx(x));
        let (sa, sx) = (self.nodes[ia].value.shape(), self.nodes[ix].value.shape());
        if sa.len() != 2 || sa[0] != sa[1] || sx.len() != 2 || sa[0] == 0 || sx[0] % sa[0] != 0 {
            return Err(Error::dim("propagate", sa, sx));
        }
        let (n, d) = (sa[0], sx[1]);
        let blocks = sx[0] / n;
        let mut out = vec![0.0; sx[0] * d];
        let (a, xd) = (self.nodes[ia].value.data(), self.nodes[ix].value.data());
        for b in 0..blocks {
            let range = b * n * d..(b + 1) * n * d;
            gemm(n, n, d, a, false, &xd[range.clone()], false, &mut out[range], 0.0);
        }
        let rg = self.needs(ia) || self.needs(ix);
        Ok(self.push(
            Tensor::new(vec![sx[0], d], out)?,
            Op::Propagate { adj: ia, x: ix },
            rg,
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let ix = self.idx(x);
        let t = &self.nodes[ix].value;
        if t.shape().len() != 2 || start >= end || end > t.cols() {
            return Err(Error::dim("slice_cols", t.shape(), &[start, end]));
        }
        let rows = t.rows();
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&t.row(r)[start..end]);
        }
        let rg = self.needs(ix);
        Ok(self.push(
            Tensor::new(vec![rows, end - start], out)?,
            Op::SliceCols { x: ix, start },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let s = self.nodes[ix].value.data().iter().sum();
        let rg = self.needs(ix);
        self.push(Tensor::scalar(s), Op::Sum(ix), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let t = &self.nodes[ix].value;
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.needs(ix);
        self.push(Tensor::scalar(m), Op::Mean(ix), rg)
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let ix = self.idx(x);
        let value = self.nodes[ix].value.map(|v| scale * v + shift);
        let rg = self.needs(ix);
        self.push(value, Op::Affine(ix, scale), rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.affine(x, c, 0.0)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let value = self.nodes[ix].value.map(f64::ln);
        let rg = self.needs(ix);
        self.push(value, Op::Ln(ix), rg)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let ix = self.idx(x);
        let value = self.nodes[ix].value.map(|v| v.clamp(lo, hi));
        let rg = self.needs(ix);
        self.push(value, Op::Clamp(ix, lo, hi), rg)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let ix = self.idx(x);
        let value = self.nodes[ix].value.map(f64::abs);
        let rg = self.needs(ix);
        self.push(value, Op::Abs(ix), rg)
    }

    /// Runs the reverse sweep from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::State(
                "backward already ran on this tape; record a new forward pass".into(),
            ));
        }
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(Error::Contract("loss was not produced on this tape".into()));
        }
        let root = loss.index;
        if !self.nodes[root].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[root].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root] = Some(vec![1.0]);

        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(ia, ib) => {
                let (a, b) = (&self.nodes[ia].value, &self.nodes[ib].value);
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                if self.needs(ia) {
                    let ga = slot(grads, ia, a.len());
                    gemm(m, n, k, g, false, b.data(), true, ga, 1.0);
                }
                if self.needs(ib) {
                    let gb = slot(grads, ib, b.len());
                    gemm(k, m, n, a.data(), true, g, false, gb, 1.0);
                }
            }
            Op::Elementwise(ia, ib, op, mode) => {
                let (a, b) = (&self.nodes[ia].value, &self.nodes[ib].value);
                let cols = a.cols();
                let bi = |j: usize| match mode {
                    Broadcast::Same => j,
                    Broadcast::Scalar => 0,
                    Broadcast::Rows => j % cols,
                };
                if self.needs(ia) {
                    let ga = slot(grads, ia, a.len());
                    match op {
                        BinaryOp::Add | BinaryOp::Sub => {
                            ga.iter_mut().zip(g).for_each(|(d, &gj)| *d += gj)
                        }
                        BinaryOp::Mul => {
                            let bd = b.data();
                            for (j, d) in ga.iter_mut().enumerate() {
                                *d += g[j] * bd[bi(j)];
                            }
                        }
                        BinaryOp::ConcatLastDim => unreachable!(),
                    }
                }
                if self.needs(ib) {
                    let gb = slot(grads, ib, b.len());
                    let ad = a.data();
                    for (j, &gj) in g.iter().enumerate() {
                        gb[bi(j)] += match op {
                            BinaryOp::Add => gj,
                            BinaryOp::Sub => -gj,
                            BinaryOp::Mul => gj * ad[j],
                            BinaryOp::ConcatLastDim => unreachable!(),
                        };
                    }
                }
            }
            Op::Concat(ia, ib) => {
                let (ca, cb) = (self.nodes[ia].value.cols(), self.nodes[ib].value.cols());
                let rows = out.rows();
                for (idx, width, offset) in [(ia, ca, 0), (ib, cb, ca)] {
                    if !self.needs(idx) {
                        continue;
                    }
                    let gx = slot(grads, idx, rows * width);
                    for r in 0..rows {
                        let src = &g[r * (ca + cb) + offset..r * (ca + cb) + offset + width];
                        gx[r * width..(r + 1) * width]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, &s)| *d += s);
                    }
                }
            }
            Op::Unary(ix, f) => {
                let x = &self.nodes[ix].value;
                let gx = slot(grads, ix, x.len());
                let (xd, yd) = (x.data(), out.data());
                for j in 0..gx.len() {
                    let local = match f {
                        Activation::Sigmoid => yd[j] * (1.0 - yd[j]),
                        Activation::Tanh => 1.0 - yd[j] * yd[j],
                        Activation::Relu => {
                            if xd[j] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    gx[j] += g[j] * local;
                }
            }
            Op::Propagate { adj, x } => {
                let (a, xv) = (&self.nodes[adj].value, &self.nodes[x].value);
                let (n, d) = (a.shape()[0], xv.cols());
                let blocks = xv.rows() / n;
                if self.needs(x) {
                    let gx = slot(grads, x, xv.len());
                    for b in 0..blocks {
                        let r = b * n * d..(b + 1) * n * d;
                        gemm(n, n, d, a.data(), true, &g[r.clone()], false, &mut gx[r], 1.0);
                    }
                }
                if self.needs(adj) {
                    let ga = slot(grads, adj, a.len());
                    for b in 0..blocks {
                        let r = b * n * d..(b + 1) * n * d;
                        gemm(n, d, n, &g[r.clone()], false, &xv.data()[r], true, ga, 1.0);
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let xv = &self.nodes[x].value;
                let (cols, width) = (xv.cols(), out.cols());
                let gx = slot(grads, x, xv.len());
                for r in 0..out.rows() {
                    gx[r * cols + start..r * cols + start + width]
                        .iter_mut()
                        .zip(&g[r * width..(r + 1) * width])
                        .for_each(|(d, &s)| *d += s);
                }
            }
            Op::Sum(ix) => {
                let len = self.nodes[ix].value.len();
                slot(grads, ix, len).iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(ix) => {
                let len = self.nodes[ix].value.len();
                let s = g[0] / len as f64;
                slot(grads, ix, len).iter_mut().for_each(|d| *d += s);
            }
            Op::Affine(ix, c) => {
                let len = self.nodes[ix].value.len();
                slot(grads, ix, len)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, &gj)| *d += c * gj);
            }
            Op::Ln(ix) => {
                let x = &self.nodes[ix].value;
                let gx = slot(grads, ix, x.len());
                for (j, d) in gx.iter_mut().enumerate() {
                    *d += g[j] / x.data()[j];
                }
            }
            Op::Clamp(ix, lo, hi) => {
                let x = &self.nodes[ix].value;
                let gx = slot(grads, ix, x.len());
                for (j, d) in gx.iter_mut().enumerate() {
                    let v = x.data()[j];
                    if v >= lo && v <= hi {
                        *d += g[j];
                    }
                }
            }
            Op::Abs(ix) => {
                let x = &self.nodes[ix].value;
                let gx = slot(grads, ix, x.len());
                for (j, d) in gx.iter_mut().enumerate() {
                    let v = x.data()[j];
                    let s = if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *d += g[j] * s;
                }
            }
        }
    }

    /// Gradient of the last backward loss with respect to `v`, shaped like `v`.
    /// `None` before backward or for values that do not require gradients.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let i = self.idx(v);
        if !self.nodes[i].requires_grad {
            return None;
        }
        let grads = self.grads.as_ref()?;
        let shape = self.nodes[i].value.shape().to_vec();
        let data = grads[i]
            .clone()
            .unwrap_or_else(|| vec![0.0; self.nodes[i].value.len()]);
        Tensor::new(shape, data).ok()
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], i: usize, len: usize) -> &mut [f64] {
    grads[i].get_or_insert_with(|| vec![0.0; len])
}

fn op_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        BinaryOp::Mul => "mul",
        BinaryOp::ConcatLastDim => "concat_last_dim",
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c = op(a) · op(b) + beta · c` for row-major buffers, where `op` optionally
/// transposes. `a` is `m×k` after `op`, `b` is `k×n` after `op`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: buffer lengths are checked above against the m/k/n extents and
    // the strides describe exactly those row-major (or transposed) layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
