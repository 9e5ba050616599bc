//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records operations in construction order; [`Tape::backward`]
//! replays them once in reverse, accumulating adjoints into the leaves that
//! were created with `requires_grad`. Tapes are rebuilt per training step and
//! never reused after a backward pass.

use std::cell::{Cell, RefCell};

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Inputs to `log` are clamped to this floor before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// LU pivots at or below this magnitude are treated as singular.
pub const PIVOT_FLOOR: f64 = 1e-12;

const NONE: usize = usize::MAX;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul,
    Transpose,
    Add,
    /// `a [m x n] + b [1 x n]`, bias broadcast along rows.
    AddBias,
    Sub,
    Hadamard,
    /// Row `i` of `a [m x n]` scaled by entry `i` of `s [m x 1]`.
    ScaleRows,
    /// `mul * x + add`, elementwise with scalar constants.
    Affine { mul: f64 },
    Sigmoid,
    Softplus,
    Relu,
    /// `ln(max(x, LOG_FLOOR))`.
    Log,
    Sum,
    Mean,
    /// Euclidean norm of each row, `[m x n] -> [m x 1]`.
    RowNorm,
    /// Ascending sort within contiguous groups of each row. `perm[out] = in`
    /// records the gather permutation for the backward scatter.
    GroupSort { perm: Vec<u32> },
    Inverse,
    ConcatCols,
    SliceCols { start: usize, end: usize },
}

struct Node {
    op: Op,
    a: usize,
    b: usize,
    value: Tensor,
    adjoint: Option<Tensor>,
    requires_grad: bool,
}

/// Operation tape. Nodes are topologically ordered by construction.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    backward_done: Cell<bool>,
}

/// Statistics reported by a backward pass.
#[derive(Debug, Clone, Copy)]
pub struct BackwardStats {
    /// Number of nodes that carried an adjoint during the reverse sweep.
    pub nodes_visited: usize,
}

/// Lightweight handle to a tape node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), backward_done: Cell::new(false) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts a leaf value. Leaves with `requires_grad` retain their adjoint
    /// after [`Tape::backward`].
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(Node { op: Op::Leaf, a: NONE, b: NONE, value, adjoint: None, requires_grad })
    }

    /// Inserts a constant (a leaf that never receives an adjoint).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Runs the reverse sweep from a scalar loss. Adjoints of `requires_grad`
    /// leaves are retained; every other adjoint is released as soon as it has
    /// been propagated. A second call on the same tape is rejected.
    pub fn backward(&self, loss: Var<'_>) -> Result<BackwardStats> {
        if self.backward_done.get() {
            return Err(Error::Usage("backward already ran on this tape".into()));
        }
        {
            let nodes = self.nodes.borrow();
            let (r, c) = nodes[loss.id].value.shape();
            if (r, c) != (1, 1) {
                return Err(Error::Usage(format!("backward requires a 1x1 loss, got {r}x{c}")));
            }
        }
        self.backward_done.set(true);

        let mut nodes = self.nodes.borrow_mut();
        nodes[loss.id].adjoint = Some(Tensor::scalar(1.0));
        let mut visited = 0usize;
        for id in (0..=loss.id).rev() {
            let Some(g) = nodes[id].adjoint.take() else { continue };
            visited += 1;
            if matches!(nodes[id].op, Op::Leaf) {
                if nodes[id].requires_grad {
                    nodes[id].adjoint = Some(g);
                }
                continue;
            }
            if !nodes[id].requires_grad {
                continue;
            }
            let (a, b) = (nodes[id].a, nodes[id].b);
            let want_a = a != NONE && nodes[a].requires_grad;
            let want_b = b != NONE && nodes[b].requires_grad;
            let (ga, gb) = input_adjoints(&nodes, id, &g, want_a, want_b)?;
            if let Some(ga) = ga {
                accumulate(&mut nodes[a].adjoint, ga);
            }
            if let Some(gb) = gb {
                accumulate(&mut nodes[b].adjoint, gb);
            }
        }
        Ok(BackwardStats { nodes_visited: visited })
    }
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        None => *slot = Some(delta),
        Some(acc) => {
            for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a += d;
            }
        }
    }
}

/// Adjoint contributions of node `id` to its inputs, given upstream `g`.
fn input_adjoints(
    nodes: &[Node],
    id: usize,
    g: &Tensor,
    want_a: bool,
    want_b: bool,
) -> Result<(Option<Tensor>, Option<Tensor>)> {
    let node = &nodes[id];
    let av = |i: usize| &nodes[i].value;
    let out = match &node.op {
        Op::Leaf => unreachable!("leaf adjoints are not propagated"),
        Op::MatMul => {
            let ga = want_a.then(|| g.matmul(&av(node.b).transpose())).transpose()?;
            let gb = want_b.then(|| av(node.a).transpose().matmul(g)).transpose()?;
            (ga, gb)
        }
        Op::Transpose => (want_a.then(|| g.transpose()), None),
        Op::Add => (want_a.then(|| g.clone()), want_b.then(|| g.clone())),
        Op::AddBias => {
            let gb = want_b.then(|| {
                let mut sums = Tensor::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (s, v) in sums.data_mut().iter_mut().zip(g.row(i)) {
                        *s += v;
                    }
                }
                sums
            });
            (want_a.then(|| g.clone()), gb)
        }
        Op::Sub => (want_a.then(|| g.clone()), want_b.then(|| g.scale(-1.0))),
        Op::Hadamard => (
            want_a.then(|| g.hadamard(av(node.b))).transpose()?,
            want_b.then(|| g.hadamard(av(node.a))).transpose()?,
        ),
        Op::ScaleRows => {
            let x = av(node.a);
            let s = av(node.b);
            let ga = want_a.then(|| {
                let mut out = g.clone();
                for i in 0..out.rows() {
                    let si = s.get(i, 0);
                    let c = out.cols();
                    for v in &mut out.data_mut()[i * c..(i + 1) * c] {
                        *v *= si;
                    }
                }
                out
            });
            let gb = want_b.then(|| {
                let mut out = Tensor::zeros(s.rows(), 1);
                for i in 0..x.rows() {
                    let dot: f64 = g.row(i).iter().zip(x.row(i)).map(|(gv, xv)| gv * xv).sum();
                    out.set(i, 0, dot);
                }
                out
            });
            (ga, gb)
        }
        Op::Affine { mul } => (want_a.then(|| g.scale(*mul)), None),
        Op::Sigmoid => {
            let y = &node.value;
            (want_a.then(|| g.hadamard(&y.map(|v| v * (1.0 - v))).expect("same shape")), None)
        }
        Op::Softplus => {
            let x = av(node.a);
            (want_a.then(|| g.hadamard(&x.map(sigmoid)).expect("same shape")), None)
        }
        Op::Relu => {
            let x = av(node.a);
            let mask = x.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            (want_a.then(|| g.hadamard(&mask).expect("same shape")), None)
        }
        Op::Log => {
            let x = av(node.a);
            let ga = want_a.then(|| {
                let mut out = g.clone();
                for (o, xv) in out.data_mut().iter_mut().zip(x.data()) {
                    *o = if *xv > LOG_FLOOR { *o / xv } else { 0.0 };
                }
                out
            });
            (ga, None)
        }
        Op::Sum => {
            let (r, c) = av(node.a).shape();
            (want_a.then(|| Tensor::filled(r, c, g.get(0, 0))), None)
        }
        Op::Mean => {
            let (r, c) = av(node.a).shape();
            let scale = g.get(0, 0) / (r * c) as f64;
            (want_a.then(|| Tensor::filled(r, c, scale)), None)
        }
        Op::RowNorm => {
            let x = av(node.a);
            let y = &node.value;
            let ga = want_a.then(|| {
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let ni = y.get(i, 0);
                    if ni <= 0.0 {
                        continue;
                    }
                    let gi = g.get(i, 0) / ni;
                    let c = x.cols();
                    for (o, xv) in out.data_mut()[i * c..(i + 1) * c].iter_mut().zip(x.row(i)) {
                        *o = gi * xv;
                    }
                }
                out
            });
            (ga, None)
        }
        Op::GroupSort { perm } => {
            let ga = want_a.then(|| {
                let mut out = Tensor::zeros(g.rows(), g.cols());
                for (pos, &src) in perm.iter().enumerate() {
                    out.data_mut()[src as usize] += g.data()[pos];
                }
                out
            });
            (ga, None)
        }
        Op::Inverse => {
            // d(A^-1) = -A^-1 dA A^-1, so dA = -Y^T g Y^T with Y = A^-1.
            let y_t = node.value.transpose();
            let ga = if want_a {
                Some(y_t.matmul(g)?.matmul(&y_t)?.scale(-1.0))
            } else {
                None
            };
            (ga, None)
        }
        Op::ConcatCols => {
            let ca = av(node.a).cols();
            let cb = av(node.b).cols();
            let split = |lo: usize, hi: usize| {
                let mut out = Tensor::zeros(g.rows(), hi - lo);
                for i in 0..g.rows() {
                    let src = &g.row(i)[lo..hi];
                    let w = hi - lo;
                    out.data_mut()[i * w..(i + 1) * w].copy_from_slice(src);
                }
                out
            };
            (want_a.then(|| split(0, ca)), want_b.then(|| split(ca, ca + cb)))
        }
        Op::SliceCols { start, end } => {
            let x = av(node.a);
            let ga = want_a.then(|| {
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let w = end - start;
                    let c = x.cols();
                    out.data_mut()[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                out
            });
            (ga, None)
        }
    };
    Ok(out)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    /// Clones the node's value out of the tape.
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn scalar_value(&self) -> Result<f64> {
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.id].value;
        if !v.is_scalar() {
            let (r, c) = v.shape();
            return Err(Error::Usage(format!("expected 1x1 value, got {r}x{c}")));
        }
        Ok(v.get(0, 0))
    }

    /// Adjoint after a backward pass (leaves only).
    pub fn grad(&self) -> Option<Tensor> {
        self.tape.nodes.borrow()[self.id].adjoint.clone()
    }

    pub fn take_grad(&self) -> Option<Tensor> {
        self.tape.nodes.borrow_mut()[self.id].adjoint.take()
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Usage("cannot combine vars from different tapes".into()))
        }
    }

    fn unary(&self, op: Op, value: Tensor) -> Var<'t> {
        let rg = self.tape.nodes.borrow()[self.id].requires_grad;
        self.tape.push(Node { op, a: self.id, b: NONE, value, adjoint: None, requires_grad: rg })
    }

    fn binary(&self, other: &Var<'t>, op: Op, value: Tensor) -> Var<'t> {
        let nodes = self.tape.nodes.borrow();
        let rg = nodes[self.id].requires_grad || nodes[other.id].requires_grad;
        drop(nodes);
        self.tape.push(Node {
            op,
            a: self.id,
            b: other.id,
            value,
            adjoint: None,
            requires_grad: rg,
        })
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.matmul(&nodes[other.id].value)?
        };
        Ok(self.binary(other, Op::MatMul, value))
    }

    pub fn t(&self) -> Var<'t> {
        let value = self.tape.nodes.borrow()[self.id].value.transpose();
        self.unary(Op::Transpose, value)
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.add(&nodes[other.id].value)?
        };
        Ok(self.binary(other, Op::Add, value))
    }

    /// Adds a `1 x n` bias row to every row of an `m x n` value.
    pub fn add_bias(&self, bias: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(bias)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            let b = &nodes[bias.id].value;
            if b.rows() != 1 || b.cols() != x.cols() {
                return Err(Error::Shape(format!(
                    "add_bias: {}x{} with bias {}x{}",
                    x.rows(),
                    x.cols(),
                    b.rows(),
                    b.cols()
                )));
            }
            let mut out = x.clone();
            for i in 0..out.rows() {
                let c = out.cols();
                for (v, bv) in out.data_mut()[i * c..(i + 1) * c].iter_mut().zip(b.data()) {
                    *v += bv;
                }
            }
            out
        };
        Ok(self.binary(bias, Op::AddBias, value))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.sub(&nodes[other.id].value)?
        };
        Ok(self.binary(other, Op::Sub, value))
    }

    pub fn hadamard(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.hadamard(&nodes[other.id].value)?
        };
        Ok(self.binary(other, Op::Hadamard, value))
    }

    /// Scales row `i` by entry `i` of an `m x 1` column.
    pub fn scale_rows(&self, scales: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(scales)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            let s = &nodes[scales.id].value;
            if s.rows() != x.rows() || s.cols() != 1 {
                return Err(Error::Shape(format!(
                    "scale_rows: {}x{} with scales {}x{}",
                    x.rows(),
                    x.cols(),
                    s.rows(),
                    s.cols()
                )));
            }
            let mut out = x.clone();
            for i in 0..out.rows() {
                let si = s.get(i, 0);
                let c = out.cols();
                for v in &mut out.data_mut()[i * c..(i + 1) * c] {
                    *v *= si;
                }
            }
            out
        };
        Ok(self.binary(scales, Op::ScaleRows, value))
    }

    /// Elementwise `mul * x + add` with scalar constants.
    pub fn affine(&self, mul: f64, add: f64) -> Var<'t> {
        let value = self.tape.nodes.borrow()[self.id].value.map(|v| mul * v + add);
        self.unary(Op::Affine { mul }, value)
    }

    pub fn neg(&self) -> Var<'t> {
        self.affine(-1.0, 0.0)
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.affine(c, 0.0)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        let value = self.tape.nodes.borrow()[self.id].value.map(sigmoid);
        self.unary(Op::Sigmoid, value)
    }

    pub fn softplus(&self) -> Var<'t> {
        let value = self.tape.nodes.borrow()[self.id].value.map(softplus);
        self.unary(Op::Softplus, value)
    }

    pub fn relu(&self) -> Var<'t> {
        let value = self.tape.nodes.borrow()[self.id].value.map(|v| v.max(0.0));
        self.unary(Op::Relu, value)
    }

    /// Natural log with the input clamped to [`LOG_FLOOR`].
    pub fn log(&self) -> Var<'t> {
        let value = self.tape.nodes.borrow()[self.id].value.map(|v| v.max(LOG_FLOOR).ln());
        self.unary(Op::Log, value)
    }

    pub fn sum(&self) -> Var<'t> {
        let value = Tensor::scalar(self.tape.nodes.borrow()[self.id].value.sum());
        self.unary(Op::Sum, value)
    }

    pub fn mean(&self) -> Var<'t> {
        let value = Tensor::scalar(self.tape.nodes.borrow()[self.id].value.mean());
        self.unary(Op::Mean, value)
    }

    pub fn row_norm(&self) -> Var<'t> {
        let value = self.tape.nodes.borrow()[self.id].value.row_norms();
        self.unary(Op::RowNorm, value)
    }

    /// Sorts contiguous groups of `group` entries within each row, ascending.
    /// Ties keep their original order so the backward permutation is well
    /// defined.
    pub fn group_sort(&self, group: usize) -> Result<Var<'t>> {
        let (value, perm) = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            if group == 0 {
                return Err(Error::Config("group_sort: group size must be positive".into()));
            }
            if x.cols() % group != 0 {
                return Err(Error::Config(format!(
                    "group_sort: width {} not divisible by group size {}",
                    x.cols(),
                    group
                )));
            }
            let mut out = vec![0.0; x.len()];
            let mut perm = vec![0u32; x.len()];
            let mut order: Vec<usize> = Vec::with_capacity(group);
            for i in 0..x.rows() {
                let row = x.row(i);
                for g0 in (0..x.cols()).step_by(group) {
                    order.clear();
                    order.extend(g0..g0 + group);
                    order.sort_by(|&p, &q| row[p].total_cmp(&row[q]));
                    for (offset, &src) in order.iter().enumerate() {
                        let flat_out = i * x.cols() + g0 + offset;
                        out[flat_out] = row[src];
                        perm[flat_out] = (i * x.cols() + src) as u32;
                    }
                }
            }
            (Tensor::from_vec(x.rows(), x.cols(), out)?, perm)
        };
        Ok(self.unary(Op::GroupSort { perm }, value))
    }

    /// Matrix inverse via LU with partial pivoting.
    pub fn inverse(&self) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            lu_inverse(&nodes[self.id].value)?
        };
        Ok(self.unary(Op::Inverse, value))
    }

    pub fn concat_cols(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            let b = &nodes[other.id].value;
            if a.rows() != b.rows() {
                return Err(Error::Shape(format!(
                    "concat_cols: {}x{} with {}x{}",
                    a.rows(),
                    a.cols(),
                    b.rows(),
                    b.cols()
                )));
            }
            let mut data = Vec::with_capacity(a.len() + b.len());
            for i in 0..a.rows() {
                data.extend_from_slice(a.row(i));
                data.extend_from_slice(b.row(i));
            }
            Tensor::from_vec(a.rows(), a.cols() + b.cols(), data)?
        };
        Ok(self.binary(other, Op::ConcatCols, value))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            if start >= end || end > x.cols() {
                return Err(Error::Shape(format!(
                    "slice_cols: range {}..{} out of width {}",
                    start,
                    end,
                    x.cols()
                )));
            }
            let w = end - start;
            let mut data = Vec::with_capacity(x.rows() * w);
            for i in 0..x.rows() {
                data.extend_from_slice(&x.row(i)[start..end]);
            }
            Tensor::from_vec(x.rows(), w, data)?
        };
        Ok(self.unary(Op::SliceCols { start, end }, value))
    }
}

/// Inverse of a square matrix by LU factorization with partial pivoting.
/// Fails with the offending pivot index when the matrix is numerically
/// singular.
pub fn lu_inverse(a: &Tensor) -> Result<Tensor> {
    let (n, c) = a.shape();
    if n != c {
        return Err(Error::Shape(format!("inverse requires a square matrix, got {n}x{c}")));
    }
    let mut lu = a.data().to_vec();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut max = lu[k * n + k].abs();
        for i in k + 1..n {
            let v = lu[i * n + k].abs();
            if v > max {
                max = v;
                p = i;
            }
        }
        if max <= PIVOT_FLOOR {
            return Err(Error::Numerical(format!(
                "singular matrix: pivot {k} has magnitude {max:.3e}"
            )));
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            piv.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k] / pivot;
            lu[i * n + k] = f;
            if f == 0.0 {
                continue;
            }
            for j in k + 1..n {
                lu[i * n + j] -= f * lu[k * n + j];
            }
        }
    }
    // Solve A X = I as L U X = P I with whole-row (contiguous) updates.
    let mut x = vec![0.0; n * n];
    for (i, &p) in piv.iter().enumerate() {
        x[i * n + p] = 1.0;
    }
    for i in 1..n {
        let (done, rest) = x.split_at_mut(i * n);
        let xi = &mut rest[..n];
        for j in 0..i {
            let f = lu[i * n + j];
            if f == 0.0 {
                continue;
            }
            let xj = &done[j * n..j * n + n];
            for (a, b) in xi.iter_mut().zip(xj) {
                *a -= f * b;
            }
        }
    }
    for i in (0..n).rev() {
        let (head, tail) = x.split_at_mut((i + 1) * n);
        let xi = &mut head[i * n..];
        for j in i + 1..n {
            let f = lu[i * n + j];
            if f == 0.0 {
                continue;
            }
            let off = (j - i - 1) * n;
            let xj = &tail[off..off + n];
            for (a, b) in xi.iter_mut().zip(xj) {
                *a -= f * b;
            }
        }
        let inv_diag = 1.0 / lu[i * n + i];
        for a in xi.iter_mut() {
            *a *= inv_diag;
        }
    }
    Tensor::from_vec(n, n, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::rng::seeded_rng;

    #[test]
    fn backward_of_sum_is_ones() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap(), true);
        let loss = x.sum();
        tape.backward(loss).unwrap();
        assert_eq!(x.grad().unwrap(), Tensor::filled(2, 2, 1.0));
    }

    #[test]
    fn backward_of_square_sum() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap(), true);
        let loss = x.hadamard(&x).unwrap().sum();
        tape.backward(loss).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn double_backward_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0), true);
        let loss = x.sum();
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::Usage(_))));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2), true);
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_visits_every_node_once() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap(), true);
        let a = x.sigmoid();
        let b = a.softplus();
        let loss = b.sum();
        let stats = tape.backward(loss).unwrap();
        assert_eq!(stats.nodes_visited, tape.len());
    }

    #[test]
    fn group_sort_examples() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![3.0, 1.0, 2.0, 0.0]]).unwrap());
        assert_eq!(x.group_sort(2).unwrap().value().data(), &[1.0, 3.0, 0.0, 2.0]);
        assert_eq!(x.group_sort(1).unwrap().value().data(), &[3.0, 1.0, 2.0, 0.0]);
        assert_eq!(x.group_sort(4).unwrap().value().data(), &[0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(x.group_sort(3), Err(Error::Config(_))));
    }

    #[test]
    fn group_sort_adjoint_scatter() {
        // loss = sum(groupsort(x) .* w): adjoint of x is w routed through the
        // inverse permutation, so its Euclidean norm must match w's.
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![3.0, 1.0, 2.0, 0.0]]).unwrap(), true);
        let w = tape.constant(Tensor::from_rows(&[vec![10.0, 20.0, 30.0, 40.0]]).unwrap());
        let loss = x.group_sort(2).unwrap().hadamard(&w).unwrap().sum();
        tape.backward(loss).unwrap();
        // groupsort([3,1,2,0], 2) = [1,3,0,2]; positions of x entries in the
        // output are x0->1, x1->0, x2->3, x3->2.
        assert_eq!(x.grad().unwrap().data(), &[20.0, 10.0, 40.0, 30.0]);
    }

    #[test]
    fn group_sort_small_perturbation_preserves_norm() {
        let mut rng = seeded_rng(5, 0);
        for _ in 0..20 {
            let x = Tensor::uniform(1, 8, -1.0, 1.0, &mut rng);
            let delta = Tensor::uniform(1, 8, -1e-9, 1e-9, &mut rng);
            let tape = Tape::new();
            let a = tape.constant(x.clone()).group_sort(4).unwrap().value();
            let b = tape
                .constant(x.add(&delta).unwrap())
                .group_sort(4)
                .unwrap()
                .value();
            let lhs = b.sub(&a).unwrap().frobenius_norm();
            let rhs = delta.frobenius_norm();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-6);
        }
    }

    #[test]
    fn inverse_identity_and_diagonal() {
        let tape = Tape::new();
        let i3 = tape.constant(Tensor::identity(3));
        assert_eq!(i3.inverse().unwrap().value(), Tensor::identity(3));
        let d = tape.constant(Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap());
        let inv = d.inverse().unwrap().value();
        assert_eq!(inv, Tensor::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.25]]).unwrap());
    }

    #[test]
    fn inverse_roundtrip_tolerance() {
        let mut rng = seeded_rng(17, 0);
        let a = Tensor::identity(6)
            .add(&Tensor::uniform(6, 6, -0.2, 0.2, &mut rng))
            .unwrap();
        let inv = lu_inverse(&a).unwrap();
        let defect = a.matmul(&inv).unwrap().sub(&Tensor::identity(6)).unwrap().frobenius_norm();
        assert!(defect <= 1e-10, "defect {defect}");
    }

    #[test]
    fn singular_matrix_names_pivot() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let err = lu_inverse(&a).unwrap_err().to_string();
        assert!(err.contains("pivot 1"), "{err}");
    }

    #[test]
    fn scalar_activations() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::scalar(0.0));
        assert_eq!(x.sigmoid().value().get(0, 0), 0.5);
        assert_relative_eq!(x.softplus().value().get(0, 0), std::f64::consts::LN_2);
    }

    #[test]
    fn constant_subtree_receives_no_adjoint() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0), true);
        let c = tape.constant(Tensor::scalar(5.0));
        let prod = x.hadamard(&c).unwrap();
        let loss = prod.sum();
        tape.backward(loss).unwrap();
        assert_eq!(x.grad().unwrap().get(0, 0), 5.0);
        assert!(c.grad().is_none());
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut rng = seeded_rng(23, 1);
            let a = Tensor::uniform(16, 16, -1.0, 1.0, &mut rng);
            let tape = Tape::new();
            let v = tape.constant(a);
            v.sigmoid().group_sort(4).unwrap().row_norm().sum().value()
        };
        assert_eq!(run(), run());
    }
}
