//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every primitive appends one record holding its output value and operand
//! ids. Records are created in evaluation order, so the tape is always
//! topologically sorted and [`Tape::backward`] is a single reverse sweep.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::sync::Arc;

use super::param::{ParamId, ParamStore};
use super::{numel, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

type NodeId = usize;

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: S },
    Concat { parts: Vec<NodeId>, axis: usize },
    Slice { a: NodeId, axis: usize, start: usize },
    Gather { a: NodeId, index: Arc<[usize]> },
    Reshape { a: NodeId },
    Sum { a: NodeId, axis: usize },
    Exp { a: NodeId },
    Log { a: NodeId },
    Tanh { a: NodeId },
    Relu { a: NodeId },
    Sigmoid { a: NodeId },
    Softmax { a: NodeId },
    LogSoftmax { a: NodeId },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Recording context for one forward/backward pass.
pub struct Tape<S: Scalar> {
    nodes: RefCell<Vec<Node<S>>>,
    params: RefCell<HashMap<ParamId, NodeId>>,
    checked: bool,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, S: Scalar> {
    tape: &'t Tape<S>,
    id: NodeId,
}

impl<S: Scalar> std::fmt::Debug for Var<'_, S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// How the smaller operand of a binary op repeats over the larger one.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rhs repeats over the leading axes of lhs
    Rhs,
    /// lhs repeats over the leading axes of rhs
    Lhs,
}

fn broadcast_rule(op: &'static str, a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        Ok(Broadcast::Same)
    } else if b.len() < a.len() && a.ends_with(b) {
        Ok(Broadcast::Rhs)
    } else if a.len() < b.len() && b.ends_with(a) {
        Ok(Broadcast::Lhs)
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        })
    }
}

/// (outer, axis length, inner) split of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(HashMap::new()),
            checked: false,
            consumed: Cell::new(false),
        }
    }

    /// A tape that rejects non-finite results and logs of non-positive input.
    pub fn checked() -> Self {
        Tape {
            checked: true,
            ..Self::new()
        }
    }

    pub fn is_checked(&self) -> bool {
        self.checked
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<S>, op: Op<S>, requires_grad: bool, name: &'static str) -> Result<Var<'_, S>> {
        if self.checked {
            value.check_finite(name)?;
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn push_unchecked(&self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var<'_, S> {
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

    /// Leaf that does not receive a gradient.
    pub fn constant(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push_unchecked(value, Op::Leaf, false)
    }

    /// Leaf that receives a gradient.
    pub fn var(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push_unchecked(value, Op::Leaf, true)
    }

    /// Registers a parameter from `store`. Repeated calls with the same id
    /// return the same leaf, so fan-out accumulates into a single gradient.
    /// A tape should only ever see parameters from one store.
    pub fn param(&self, store: &ParamStore<S>, id: ParamId) -> Var<'_, S> {
        if let Some(&node) = self.params.borrow().get(&id) {
            return Var { tape: self, id: node };
        }
        let var = self.push_unchecked(store.tensor(id).clone(), Op::Leaf, true);
        self.params.borrow_mut().insert(id, var.id);
        var
    }

    pub fn concat(&self, parts: &[Var<'_, S>], axis: usize) -> Result<Var<'_, S>> {
        let first = parts.first().ok_or_else(|| Error::InvalidShape {
            op: "concat",
            detail: "no operands".into(),
        })?;
        let nodes = self.nodes.borrow();
        let base = nodes[first.id].value.shape().to_vec();
        if axis >= base.len() {
            return Err(Error::InvalidShape {
                op: "concat",
                detail: format!("axis {axis} out of range for {base:?}"),
            });
        }
        let mut axis_total = 0;
        for p in parts {
            let s = nodes[p.id].value.shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut shape = base.clone();
        shape[axis] = axis_total;
        let mut out = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for p in parts {
                let v = &nodes[p.id].value;
                let block = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let requires_grad = parts.iter().any(|p| nodes[p.id].requires_grad);
        drop(nodes);
        let ids = parts.iter().map(|p| p.id).collect();
        self.push(
            Tensor::new(shape, out)?,
            Op::Concat { parts: ids, axis },
            requires_grad,
            "concat",
        )
    }

    /// Computes d(loss)/d(node) for every node that requires a gradient.
    pub fn backward(&self, loss: Var<'_, S>) -> Result<Gradients<S>> {
        if self.consumed.replace(true) {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![S::one()]);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let (before, rest) = grads.split_at_mut(id);
            let Some(g) = rest[0].as_deref() else { continue };
            backprop_node(&nodes, node, g, before);
        }

        let params = self
            .params
            .borrow()
            .iter()
            .map(|(&pid, &nid)| (pid, nid))
            .collect();
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients {
            grads,
            shapes,
            params,
        })
    }
}

fn grad_slot<'g, S: Scalar>(
    grads: &'g mut [Option<Vec<S>>],
    nodes: &[Node<S>],
    id: NodeId,
) -> Option<&'g mut Vec<S>> {
    if !nodes[id].requires_grad {
        return None;
    }
    Some(grads[id].get_or_insert_with(|| vec![S::zero(); nodes[id].value.len()]))
}

/// Accumulates `g` (shaped like the larger operand) into the gradient of an
/// operand that may have been broadcast.
fn accumulate_broadcast<S: Scalar>(dst: &mut [S], g: &[S], scale: impl Fn(usize) -> S) {
    let n = dst.len();
    if n == g.len() {
        for (i, (d, &gi)) in dst.iter_mut().zip(g).enumerate() {
            *d = *d + gi * scale(i);
        }
    } else {
        for (i, &gi) in g.iter().enumerate() {
            dst[i % n] = dst[i % n] + gi * scale(i);
        }
    }
}

fn backprop_node<S: Scalar>(nodes: &[Node<S>], node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) {
    let val = |id: NodeId| nodes[id].value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let (m, k) = (nodes[*a].value.shape()[0], nodes[*a].value.shape()[1]);
            let n = nodes[*b].value.shape()[1];
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                // ga += g · bᵀ
                S::gemm(m, n, k, g, n as isize, 1, val(*b), 1, n as isize, ga, S::one());
            }
            if let Some(gb) = grad_slot(grads, nodes, *b) {
                // gb += aᵀ · g
                S::gemm(k, m, n, val(*a), 1, k as isize, g, n as isize, 1, gb, S::one());
            }
        }
        Op::Add { a, b } => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                accumulate_broadcast(ga, g, |_| S::one());
            }
            if let Some(gb) = grad_slot(grads, nodes, *b) {
                accumulate_broadcast(gb, g, |_| S::one());
            }
        }
        Op::Sub { a, b } => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                accumulate_broadcast(ga, g, |_| S::one());
            }
            if let Some(gb) = grad_slot(grads, nodes, *b) {
                accumulate_broadcast(gb, g, |_| -S::one());
            }
        }
        Op::Mul { a, b } => {
            let (va, vb) = (val(*a), val(*b));
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                accumulate_broadcast(ga, g, |i| vb[i % vb.len()]);
            }
            if let Some(gb) = grad_slot(grads, nodes, *b) {
                accumulate_broadcast(gb, g, |i| va[i % va.len()]);
            }
        }
        Op::Scale { a, c } => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for (d, &gi) in ga.iter_mut().zip(g) {
                    *d = *d + gi * *c;
                }
            }
        }
        Op::Concat { parts, axis } => {
            let (outer, total, inner) = split_axis(node.value.shape(), *axis);
            let mut offset = 0;
            for &p in parts {
                let len = nodes[p].value.shape()[*axis];
                if let Some(gp) = grad_slot(grads, nodes, p) {
                    let block = len * inner;
                    for o in 0..outer {
                        let src = &g[o * total * inner + offset * inner..][..block];
                        for (d, &s) in gp[o * block..(o + 1) * block].iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
                offset += len;
            }
        }
        Op::Slice { a, axis, start } => {
            let src_shape = nodes[*a].value.shape();
            let (outer, total, inner) = split_axis(src_shape, *axis);
            let len = node.value.shape()[*axis];
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                let block = len * inner;
                for o in 0..outer {
                    let dst = &mut ga[o * total * inner + start * inner..][..block];
                    for (d, &s) in dst.iter_mut().zip(&g[o * block..(o + 1) * block]) {
                        *d = *d + s;
                    }
                }
            }
        }
        Op::Gather { a, index } => {
            let row = nodes[*a].value.len() / nodes[*a].value.shape()[0].max(1);
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for (r, &src) in index.iter().enumerate() {
                    let dst = &mut ga[src * row..(src + 1) * row];
                    for (d, &s) in dst.iter_mut().zip(&g[r * row..(r + 1) * row]) {
                        *d = *d + s;
                    }
                }
            }
        }
        Op::Reshape { a } => {
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for (d, &s) in ga.iter_mut().zip(g) {
                    *d = *d + s;
                }
            }
        }
        Op::Sum { a, axis } => {
            let (outer, len, inner) = split_axis(nodes[*a].value.shape(), *axis);
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        let dst = &mut ga[(o * len + l) * inner..][..inner];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
        Op::Exp { a } => unary_grad(grads, nodes, *a, g, |i| node.value.data()[i]),
        Op::Log { a } => {
            let x = val(*a);
            unary_grad(grads, nodes, *a, g, |i| S::one() / x[i])
        }
        Op::Tanh { a } => {
            let y = node.value.data();
            unary_grad(grads, nodes, *a, g, |i| S::one() - y[i] * y[i])
        }
        Op::Relu { a } => {
            let x = val(*a);
            unary_grad(grads, nodes, *a, g, |i| if x[i] > S::zero() { S::one() } else { S::zero() })
        }
        Op::Sigmoid { a } => {
            let y = node.value.data();
            unary_grad(grads, nodes, *a, g, |i| y[i] * (S::one() - y[i]))
        }
        Op::Softmax { a } => {
            let y = node.value.data();
            let width = *node.value.shape().last().unwrap_or(&1);
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for ((gr, yr), dr) in g.chunks(width).zip(y.chunks(width)).zip(ga.chunks_mut(width)) {
                    let dot: S = gr.iter().zip(yr).map(|(&gi, &yi)| gi * yi).sum();
                    for ((d, &gi), &yi) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = *d + yi * (gi - dot);
                    }
                }
            }
        }
        Op::LogSoftmax { a } => {
            let y = node.value.data();
            let width = *node.value.shape().last().unwrap_or(&1);
            if let Some(ga) = grad_slot(grads, nodes, *a) {
                for ((gr, yr), dr) in g.chunks(width).zip(y.chunks(width)).zip(ga.chunks_mut(width)) {
                    let total: S = gr.iter().copied().sum();
                    for ((d, &gi), &yi) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = *d + gi - yi.exp() * total;
                    }
                }
            }
        }
    }
}

fn unary_grad<S: Scalar>(
    grads: &mut [Option<Vec<S>>],
    nodes: &[Node<S>],
    a: NodeId,
    g: &[S],
    local: impl Fn(usize) -> S,
) {
    if let Some(ga) = grad_slot(grads, nodes, a) {
        for (i, (d, &gi)) in ga.iter_mut().zip(g).enumerate() {
            *d = *d + gi * local(i);
        }
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn tape(&self) -> &'t Tape<S> {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Copy of the current value.
    pub fn value(&self) -> Tensor<S> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Borrows the value's data for the duration of `f`.
    pub fn with_data<R>(&self, f: impl FnOnce(&[S]) -> R) -> R {
        f(self.tape.nodes.borrow()[self.id].value.data())
    }

    /// The single entry of a one-element tensor.
    pub fn item(&self) -> S {
        self.with_data(|d| d[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn unary(self, name: &'static str, op: Op<S>, f: impl Fn(S) -> S) -> Result<Var<'t, S>> {
        let nodes = self.tape.nodes.borrow();
        let src = &nodes[self.id];
        let data = src.value.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.value.shape().to_vec(), data)?;
        let rg = src.requires_grad;
        drop(nodes);
        self.tape.push(value, op, rg, name)
    }

    fn binary(self, other: Var<'t, S>, name: &'static str, op: Op<S>, f: impl Fn(S, S) -> S) -> Result<Var<'t, S>> {
        let nodes = self.tape.nodes.borrow();
        let (a, b) = (&nodes[self.id], &nodes[other.id]);
        let rule = broadcast_rule(name, a.value.shape(), b.value.shape())?;
        let (da, db) = (a.value.data(), b.value.data());
        let (shape, data): (Vec<usize>, Vec<S>) = match rule {
            Broadcast::Same => (
                a.value.shape().to_vec(),
                da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            ),
            Broadcast::Rhs => (
                a.value.shape().to_vec(),
                da.iter().enumerate().map(|(i, &x)| f(x, db[i % db.len()])).collect(),
            ),
            Broadcast::Lhs => (
                b.value.shape().to_vec(),
                db.iter().enumerate().map(|(i, &y)| f(da[i % da.len()], y)).collect(),
            ),
        };
        let rg = a.requires_grad || b.requires_grad;
        drop(nodes);
        self.tape.push(Tensor::new(shape, data)?, op, rg, name)
    }

    /// 2-D matrix product `[m,k]·[k,n] → [m,n]`.
    pub fn matmul(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        let nodes = self.tape.nodes.borrow();
        let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
        if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![S::zero(); m * n];
        S::gemm(m, k, n, a.data(), k as isize, 1, b.data(), n as isize, 1, &mut out, S::zero());
        let rg = nodes[self.id].requires_grad || nodes[other.id].requires_grad;
        drop(nodes);
        self.tape.push(
            Tensor::new(vec![m, n], out)?,
            Op::MatMul { a: self.id, b: other.id },
            rg,
            "matmul",
        )
    }

    /// Elementwise sum; an operand whose shape is a suffix of the other's
    /// repeats over the leading axes.
    pub fn add(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(other, "add", Op::Add { a: self.id, b: other.id }, |x, y| x + y)
    }

    pub fn sub(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(other, "sub", Op::Sub { a: self.id, b: other.id }, |x, y| x - y)
    }

    pub fn mul(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(other, "mul", Op::Mul { a: self.id, b: other.id }, |x, y| x * y)
    }

    pub fn scale(self, c: S) -> Result<Var<'t, S>> {
        self.unary("scale", Op::Scale { a: self.id, c }, |x| x * c)
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t, S>> {
        let nodes = self.tape.nodes.borrow();
        let src = &nodes[self.id].value;
        let shape = src.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::InvalidShape {
                op: "slice",
                detail: format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            });
        }
        let (outer, total, inner) = split_axis(shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&src.data()[o * total * inner + start * inner..][..len * inner]);
        }
        let mut new_shape = shape.to_vec();
        new_shape[axis] = len;
        let rg = nodes[self.id].requires_grad;
        drop(nodes);
        self.tape.push(
            Tensor::new(new_shape, out)?,
            Op::Slice { a: self.id, axis, start },
            rg,
            "slice",
        )
    }

    /// Selects rows (entries of axis 0) by index; indices may repeat.
    pub fn gather_rows(self, index: &Arc<[usize]>) -> Result<Var<'t, S>> {
        let nodes = self.tape.nodes.borrow();
        let src = &nodes[self.id].value;
        let shape = src.shape();
        if shape.is_empty() {
            return Err(Error::InvalidShape {
                op: "gather",
                detail: "cannot gather from a scalar".into(),
            });
        }
        let rows = shape[0];
        let row = src.len() / rows.max(1);
        let mut out = Vec::with_capacity(index.len() * row);
        for &r in index.iter() {
            if r >= rows {
                return Err(Error::InvalidShape {
                    op: "gather",
                    detail: format!("row {r} out of range for {shape:?}"),
                });
            }
            out.extend_from_slice(&src.data()[r * row..(r + 1) * row]);
        }
        let mut new_shape = shape.to_vec();
        new_shape[0] = index.len();
        let rg = nodes[self.id].requires_grad;
        drop(nodes);
        self.tape.push(
            Tensor::new(new_shape, out)?,
            Op::Gather {
                a: self.id,
                index: Arc::clone(index),
            },
            rg,
            "gather",
        )
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, S>> {
        let value = self.value().reshape(shape.to_vec())?;
        let rg = self.requires_grad();
        self.tape.push(value, Op::Reshape { a: self.id }, rg, "reshape")
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum(self, axis: usize) -> Result<Var<'t, S>> {
        let nodes = self.tape.nodes.borrow();
        let src = &nodes[self.id].value;
        let shape = src.shape();
        if axis >= shape.len() {
            return Err(Error::InvalidShape {
                op: "sum",
                detail: format!("axis {axis} out of range for {shape:?}"),
            });
        }
        let (outer, len, inner) = split_axis(shape, axis);
        let mut out = vec![S::zero(); outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for l in 0..len {
                for (d, &s) in dst.iter_mut().zip(&src.data()[(o * len + l) * inner..][..inner]) {
                    *d = *d + s;
                }
            }
        }
        let mut new_shape = shape.to_vec();
        new_shape.remove(axis);
        let rg = nodes[self.id].requires_grad;
        drop(nodes);
        self.tape
            .push(Tensor::new(new_shape, out)?, Op::Sum { a: self.id, axis }, rg, "sum")
    }

    /// Sum of all entries as a scalar.
    pub fn sum_all(self) -> Result<Var<'t, S>> {
        let n = self.with_data(|d| d.len());
        self.reshape(&[n])?.sum(0)
    }

    pub fn mean_all(self) -> Result<Var<'t, S>> {
        let n = self.with_data(|d| d.len());
        self.sum_all()?.scale(S::one() / S::of(n as f64))
    }

    pub fn exp(self) -> Result<Var<'t, S>> {
        self.unary("exp", Op::Exp { a: self.id }, |x| x.exp())
    }

    pub fn log(self) -> Result<Var<'t, S>> {
        if self.tape.checked {
            if let Some(bad) = self.with_data(|d| d.iter().copied().find(|&x| x <= S::zero())) {
                return Err(Error::Domain {
                    op: "log",
                    detail: format!("non-positive input {bad}"),
                });
            }
        }
        self.unary("log", Op::Log { a: self.id }, |x| x.ln())
    }

    pub fn tanh(self) -> Result<Var<'t, S>> {
        self.unary("tanh", Op::Tanh { a: self.id }, |x| x.tanh())
    }

    pub fn relu(self) -> Result<Var<'t, S>> {
        self.unary("relu", Op::Relu { a: self.id }, |x| x.max(S::zero()))
    }

    pub fn sigmoid(self) -> Result<Var<'t, S>> {
        self.unary("sigmoid", Op::Sigmoid { a: self.id }, |x| S::one() / (S::one() + (-x).exp()))
    }

    /// Softmax over the last axis.
    pub fn softmax(self) -> Result<Var<'t, S>> {
        self.rowwise("softmax", Op::Softmax { a: self.id }, |row, out| {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut total = S::zero();
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (x - max).exp();
                total = total + *o;
            }
            for o in out.iter_mut() {
                *o = *o / total;
            }
        })
    }

    /// Log-softmax over the last axis, evaluated stably.
    pub fn log_softmax(self) -> Result<Var<'t, S>> {
        self.rowwise("log_softmax", Op::LogSoftmax { a: self.id }, |row, out| {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<S>().ln();
            for (o, &x) in out.iter_mut().zip(row) {
                *o = x - lse;
            }
        })
    }

    fn rowwise(self, name: &'static str, op: Op<S>, f: impl Fn(&[S], &mut [S])) -> Result<Var<'t, S>> {
        let nodes = self.tape.nodes.borrow();
        let src = &nodes[self.id].value;
        let width = match src.shape().last() {
            Some(&w) if w > 0 => w,
            _ => {
                return Err(Error::InvalidShape {
                    op: name,
                    detail: format!("needs a non-empty last axis, got {:?}", src.shape()),
                })
            }
        };
        let mut out = vec![S::zero(); src.len()];
        for (row, dst) in src.data().chunks(width).zip(out.chunks_mut(width)) {
            f(row, dst);
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let rg = nodes[self.id].requires_grad;
        drop(nodes);
        self.tape.push(value, op, rg, name)
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(ParamId, NodeId)>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient with respect to `var`; zeros if the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_, S>) -> Tensor<S> {
        let shape = self.shapes[var.id].clone();
        match &self.grads[var.id] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape matches node"),
            None => Tensor::zeros(shape),
        }
    }

    /// Gradient for a registered parameter, if it was used on the tape.
    pub fn param(&self, id: ParamId) -> Option<&[S]> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, n)| self.grads[*n].as_deref())
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &[S])> + '_ {
        self.params
            .iter()
            .filter_map(|(p, n)| self.grads[*n].as_deref().map(|g| (*p, g)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn identity_matmul_is_noop() {
        let tape = Tape::<f64>::new();
        let eye = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert_eq!(eye.matmul(m).unwrap().value(), m.value());
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let tape = Tape::<f64>::new();
        for a in [-30.0, 0.0, 7.5, 1e3] {
            let s = tape.constant(t(&[2], &[a, a])).softmax().unwrap();
            assert_eq!(s.value().data(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn sum_over_axis_zero() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(x.sum(0).unwrap().value().data(), &[4.0, 6.0]);
        assert_eq!(x.sum(1).unwrap().value().data(), &[3.0, 7.0]);
    }

    #[test]
    fn square_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.var(Tensor::scalar(3.0));
        let loss = x.mul(x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).data(), &[6.0]);
    }

    #[test]
    fn softmax_sum_has_zero_gradient() {
        let tape = Tape::<f64>::new();
        let z = tape.var(t(&[3], &[0.3, -1.2, 2.0]));
        let loss = z.softmax().unwrap().sum_all().unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(z).data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn loss_must_be_scalar() {
        let tape = Tape::<f64>::new();
        let z = tape.var(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(z), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn tape_is_consumed_once() {
        let tape = Tape::<f64>::new();
        let z = tape.var(Tensor::scalar(1.0));
        tape.backward(z).unwrap();
        assert!(matches!(tape.backward(z), Err(Error::TapeConsumed)));
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::<f64>::new();
        let x = tape.var(Tensor::scalar(2.0));
        let y = x.scale(3.0).unwrap().add(x).unwrap().add(x.mul(x).unwrap()).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).data(), &[8.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![2]));
        let err = a.add(b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2]"), "{err}");
        let err = a.matmul(a).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
    }

    #[test]
    fn bias_broadcast_over_leading_axes() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.var(t(&[2], &[10.0, 20.0]));
        let y = x.add(b).unwrap();
        assert_eq!(y.value().data(), &[11.0, 22.0, 13.0, 24.0]);
        let g = tape.backward(y.sum_all().unwrap()).unwrap();
        assert_eq!(g.wrt(b).data(), &[2.0, 2.0]);
    }

    #[test]
    fn checked_mode_rejects_bad_log() {
        let tape = Tape::<f64>::checked();
        let x = tape.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(x.log(), Err(Error::Domain { .. })));
        let unchecked = Tape::<f64>::new();
        let y = unchecked.constant(t(&[1], &[0.0])).log().unwrap();
        assert!(y.item().is_infinite());
    }

    #[test]
    fn concat_slice_gather_round_trip() {
        let tape = Tape::<f64>::new();
        let a = tape.var(t(&[2, 1], &[1.0, 2.0]));
        let b = tape.var(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(c.value().data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(c.slice(1, 1, 2).unwrap().value(), b.value());
        let idx: Arc<[usize]> = Arc::from(vec![1, 1, 0]);
        let g = c.gather_rows(&idx).unwrap();
        assert_eq!(g.shape(), vec![3, 3]);
        let grads = tape.backward(g.sum_all().unwrap()).unwrap();
        assert_eq!(grads.wrt(a).data(), &[1.0, 2.0]);
        assert_eq!(grads.wrt(b).data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
