//! Reverse-mode gradient recording over [`Tensor`] values.
//!
//! A [`Tape`] borrows the model's parameter tensors, records every primitive
//! applied to them in execution order, and replays the record backwards to
//! produce gradients. Parameters are never copied onto the tape; their
//! gradients can be accumulated straight into a caller-owned buffer with
//! [`Tape::backward_into`], which is what the training loops use.
//!
//! Gradients come out as plain tensors that carry no tape handle, so a
//! gradient can never itself be differentiated.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{NumericError, Real, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node recorded on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    id: usize,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }
}

enum Store<'p> {
    Param(usize, &'p Tensor),
    Owned(Tensor),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    AddCol(usize, usize),
    Mul(usize, usize),
    Scale(usize, Real),
    ScaleBy(usize, usize, usize),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    Softmax(usize, usize),
    LogSoftmax(usize),
    Nll(usize, Vec<usize>),
    MaskedNll(usize, Vec<bool>, Vec<Option<usize>>),
    ConcatRows(usize, usize),
    SliceRows(usize, usize),
    Gather(usize, Vec<usize>),
    GroupedDot(usize, usize, usize),
    Sum(usize),
}

struct Node<'p> {
    value: Store<'p>,
    op: Op,
    requires_grad: bool,
}

impl Node<'_> {
    fn value(&self) -> &Tensor {
        match &self.value {
            Store::Param(_, t) => t,
            Store::Owned(t) => t,
        }
    }
}

/// Single-owner record of forward computations.
pub struct Tape<'p> {
    id: u64,
    params: &'p [Tensor],
    param_nodes: Vec<Option<usize>>,
    nodes: Vec<Node<'p>>,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    nodes: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
    node_params: Vec<Option<usize>>,
    params: Vec<Tensor>,
}

impl Gradients {
    /// Gradient with respect to any recorded node; zero when the root does
    /// not depend on it.
    pub fn wrt(&self, v: Var) -> Result<Tensor, NumericError> {
        if v.tape != self.tape || v.id >= self.nodes.len() {
            return Err(NumericError::ForeignVar);
        }
        if let Some(pi) = self.node_params[v.id] {
            return Ok(self.params[pi].clone());
        }
        Ok(self.nodes[v.id]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.id])))
    }

    /// Gradient of parameter `index` of the slice the tape was built over.
    pub fn param(&self, index: usize) -> &Tensor {
        &self.params[index]
    }

    pub fn into_params(self) -> Vec<Tensor> {
        self.params
    }
}

macro_rules! check_shape {
    ($cond:expr, $op:expr, $a:expr, $b:expr) => {
        if !$cond {
            return Err(NumericError::ShapeMismatch {
                op: $op,
                lhs: $a.shape().to_vec(),
                rhs: $b.shape().to_vec(),
            });
        }
    };
}

impl<'p> Tape<'p> {
    /// A tape with no parameters; use [`Tape::variable`] for differentiable leaves.
    pub fn new() -> Tape<'static> {
        Tape::with_params(&[])
    }

    pub fn with_params(params: &'p [Tensor]) -> Tape<'p> {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            params,
            param_nodes: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        debug_assert_eq!(v.tape, self.id);
        self.nodes[v.id].value()
    }

    fn check(&self, v: Var) -> Result<usize, NumericError> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(NumericError::ForeignVar);
        }
        Ok(v.id)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Result<Var, NumericError> {
        if !value.is_finite() {
            return Err(NumericError::NonFinite(name));
        }
        self.nodes.push(Node {
            value: Store::Owned(value),
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self.id,
            id: self.nodes.len() - 1,
        })
    }

    fn var(&self, id: usize) -> Var {
        Var { tape: self.id, id }
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Leaf for parameter `index`; repeated calls return the same node.
    pub fn param(&mut self, index: usize) -> Var {
        if let Some(id) = self.param_nodes[index] {
            return self.var(id);
        }
        self.nodes.push(Node {
            value: Store::Param(index, &self.params[index]),
            op: Op::Leaf,
            requires_grad: true,
        });
        let id = self.nodes.len() - 1;
        self.param_nodes[index] = Some(id);
        self.var(id)
    }

    /// Differentiable leaf that is not one of the borrowed parameters.
    pub fn variable(&mut self, value: Tensor) -> Result<Var, NumericError> {
        self.push(value, Op::Leaf, true, "variable")
    }

    /// Non-differentiable input (token features, dropout masks).
    pub fn constant(&mut self, value: Tensor) -> Result<Var, NumericError> {
        self.push(value, Op::Leaf, false, "constant")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.nodes[ia].value(), self.nodes[ib].value());
        check_shape!(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.rows(), "matmul", ta, tb);
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        matmul_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let rg = self.rg(&[ia, ib]);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(ia, ib), rg, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericError> {
        let ia = self.check(a)?;
        let ta = self.nodes[ia].value();
        if ta.rank() != 2 {
            return Err(NumericError::RankMismatch { op: "transpose", shape: ta.shape().to_vec() });
        }
        let out = ta.transposed();
        let rg = self.rg(&[ia]);
        self.push(out, Op::Transpose(ia), rg, "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.nodes[ia].value(), self.nodes[ib].value());
        check_shape!(ta.same_shape(tb), "add", ta, tb);
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[ia, ib]);
        self.push(out, Op::Add(ia, ib), rg, "add")
    }

    /// Adds vector `b` (length = cols) to every row of matrix `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.nodes[ia].value(), self.nodes[ib].value());
        check_shape!(ta.rank() == 2 && tb.len() == ta.cols(), "add_row", ta, tb);
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + tb.data()[i % c])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[ia, ib]);
        self.push(out, Op::AddRow(ia, ib), rg, "add_row")
    }

    /// Adds vector `b` (length = rows) to every column of matrix `a`.
    pub fn add_col(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.nodes[ia].value(), self.nodes[ib].value());
        check_shape!(ta.rank() == 2 && tb.len() == ta.rows(), "add_col", ta, tb);
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + tb.data()[i / c])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[ia, ib]);
        self.push(out, Op::AddCol(ia, ib), rg, "add_col")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.nodes[ia].value(), self.nodes[ib].value());
        check_shape!(ta.same_shape(tb), "mul", ta, tb);
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[ia, ib]);
        self.push(out, Op::Mul(ia, ib), rg, "mul")
    }

    /// Multiplies by a constant mask (inverted dropout: entries are 0 or 1/(1-p)).
    pub fn apply_mask(&mut self, a: Var, mask: Tensor) -> Result<Var, NumericError> {
        let m = self.constant(mask)?;
        self.mul(a, m)
    }

    pub fn scale(&mut self, a: Var, c: Real) -> Result<Var, NumericError> {
        let ia = self.check(a)?;
        let ta = self.nodes[ia].value();
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * c).collect())?;
        let rg = self.rg(&[ia]);
        self.push(out, Op::Scale(ia, c), rg, "scale")
    }

    /// Multiplies every entry of `a` by the single entry `s[index]`.
    pub fn scale_by(&mut self, a: Var, s: Var, index: usize) -> Result<Var, NumericError> {
        let (ia, is) = (self.check(a)?, self.check(s)?);
        let (ta, ts) = (self.nodes[ia].value(), self.nodes[is].value());
        check_shape!(index < ts.len(), "scale_by", ta, ts);
        let c = ts.data()[index];
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * c).collect())?;
        let rg = self.rg(&[ia, is]);
        self.push(out, Op::ScaleBy(ia, is, index), rg, "scale_by")
    }

    fn unary(&mut self, a: Var, f: impl Fn(Real) -> Real, op: fn(usize) -> Op, name: &'static str) -> Result<Var, NumericError> {
        let ia = self.check(a)?;
        let ta = self.nodes[ia].value();
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x)).collect())?;
        let rg = self.rg(&[ia]);
        self.push(out, op(ia), rg, name)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericError> {
        self.unary(a, Real::tanh, Op::Tanh, "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericError> {
        self.unary(a, |x| x.max(0.0), Op::Relu, "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericError> {
        self.unary(a, sigmoid, Op::Sigmoid, "sigmoid")
    }

    /// Numerically stable softmax along `axis` (0 = down columns, last = along rows).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, NumericError> {
        let ia = self.check(a)?;
        let ta = self.nodes[ia].value();
        if axis >= ta.rank().max(1) || ta.rank() > 2 {
            return Err(NumericError::RankMismatch { op: "softmax", shape: ta.shape().to_vec() });
        }
        let mut out = ta.clone();
        for lane in lanes(ta, axis) {
            softmax_lane(out.data_mut(), &lane);
        }
        let rg = self.rg(&[ia]);
        self.push(out, Op::Softmax(ia, axis), rg, "softmax")
    }

    /// Row-wise log-softmax (last axis).
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, NumericError> {
        let ia = self.check(a)?;
        let ta = self.nodes[ia].value();
        if ta.rank() == 0 || ta.rank() > 2 {
            return Err(NumericError::RankMismatch { op: "log_softmax", shape: ta.shape().to_vec() });
        }
        let mut out = ta.clone();
        let last = ta.rank() - 1;
        for lane in lanes(ta, last) {
            let lse = logsumexp(lane.iter().map(|&i| out.data()[i]));
            for &i in &lane {
                out.data_mut()[i] -= lse;
            }
        }
        let rg = self.rg(&[ia]);
        self.push(out, Op::LogSoftmax(ia), rg, "log_softmax")
    }

    /// Negative log-likelihood `-Σ_r logp[r, targets[r]]` of a row-wise log-probability matrix.
    pub fn nll(&mut self, logp: Var, targets: &[usize]) -> Result<Var, NumericError> {
        let ia = self.check(logp)?;
        let t = self.nodes[ia].value();
        let t2 = if t.rank() == 1 { 1 } else { t.rows() };
        if targets.len() != t2 || targets.iter().any(|&k| k >= t.cols()) {
            return Err(NumericError::IndexOutOfBounds { op: "nll" });
        }
        let c = t.cols();
        let v: Real = -targets.iter().enumerate().map(|(r, &k)| t.data()[r * c + k]).sum::<Real>();
        let rg = self.rg(&[ia]);
        self.push(Tensor::scalar(v), Op::Nll(ia, targets.to_vec()), rg, "nll")
    }

    /// Fused masked softmax cross-entropy over rows of a logit matrix.
    ///
    /// `allowed[r * cols + c]` marks the candidates of row `r`; rows whose
    /// target is `None` do not contribute. Returns the summed loss.
    pub fn masked_nll(&mut self, logits: Var, allowed: Vec<bool>, targets: Vec<Option<usize>>) -> Result<Var, NumericError> {
        let ia = self.check(logits)?;
        let t = self.nodes[ia].value();
        let (r, c) = (t.rows(), t.cols());
        if allowed.len() != r * c || targets.len() != r {
            return Err(NumericError::IndexOutOfBounds { op: "masked_nll" });
        }
        let mut total = 0.0;
        for (row, target) in targets.iter().enumerate() {
            let Some(k) = *target else { continue };
            if k >= c || !allowed[row * c + k] {
                return Err(NumericError::IndexOutOfBounds { op: "masked_nll" });
            }
            let vals = t.row(row);
            let lse = logsumexp((0..c).filter(|&j| allowed[row * c + j]).map(|j| vals[j]));
            total += lse - vals[k];
        }
        let rg = self.rg(&[ia]);
        self.push(Tensor::scalar(total), Op::MaskedNll(ia, allowed, targets), rg, "masked_nll")
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.nodes[ia].value(), self.nodes[ib].value());
        check_shape!(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.cols(), "concat_rows", ta, tb);
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        let out = Tensor::new(vec![ta.rows() + tb.rows(), ta.cols()], data)?;
        let rg = self.rg(&[ia, ib]);
        self.push(out, Op::ConcatRows(ia, ib), rg, "concat_rows")
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericError> {
        let ia = self.check(a)?;
        let ta = self.nodes[ia].value();
        if ta.rank() != 2 || start > end || end > ta.rows() {
            return Err(NumericError::IndexOutOfBounds { op: "slice_rows" });
        }
        let c = ta.cols();
        let out = Tensor::new(vec![end - start, c], ta.data()[start * c..end * c].to_vec())?;
        let rg = self.rg(&[ia]);
        self.push(out, Op::SliceRows(ia, start), rg, "slice_rows")
    }

    /// Row gather; doubles as embedding lookup.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericError> {
        let ia = self.check(table)?;
        let ta = self.nodes[ia].value();
        if ta.rank() != 2 || ids.iter().any(|&i| i >= ta.rows()) {
            return Err(NumericError::IndexOutOfBounds { op: "gather_rows" });
        }
        let c = ta.cols();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            data.extend_from_slice(ta.row(i));
        }
        let out = Tensor::new(vec![ids.len(), c], data)?;
        let rg = self.rg(&[ia]);
        self.push(out, Op::Gather(ia, ids.to_vec()), rg, "gather_rows")
    }

    /// `out[j, k] = Σ_m p[j, k·M + m] · d[j, m]` with `p: [n, K·M]`, `d: [n, M]`.
    ///
    /// Evaluates K bilinear forms per row once `p` holds the row projected
    /// through every label's matrix.
    pub fn grouped_dot(&mut self, p: Var, d: Var) -> Result<Var, NumericError> {
        let (ip, id) = (self.check(p)?, self.check(d)?);
        let (tp, td) = (self.nodes[ip].value(), self.nodes[id].value());
        let m = td.cols();
        check_shape!(
            tp.rank() == 2 && td.rank() == 2 && tp.rows() == td.rows() && m > 0 && tp.cols() % m == 0,
            "grouped_dot",
            tp,
            td
        );
        let (n, groups) = (tp.rows(), tp.cols() / m);
        let mut out = vec![0.0; n * groups];
        for j in 0..n {
            let prow = tp.row(j);
            let drow = td.row(j);
            for k in 0..groups {
                out[j * groups + k] = prow[k * m..(k + 1) * m].iter().zip(drow).map(|(x, y)| x * y).sum();
            }
        }
        let out = Tensor::new(vec![n, groups], out)?;
        let rg = self.rg(&[ip, id]);
        self.push(out, Op::GroupedDot(ip, id, m), rg, "grouped_dot")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericError> {
        let ia = self.check(a)?;
        let s = self.nodes[ia].value().sum();
        let rg = self.rg(&[ia]);
        self.push(Tensor::scalar(s), Op::Sum(ia), rg, "sum")
    }

    /// Backward pass returning a gradient for every node and every parameter.
    pub fn backward(&self, root: Var) -> Result<Gradients, NumericError> {
        let mut params: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let nodes = self.run_backward(root, &mut params, true)?;
        Ok(Gradients {
            tape: self.id,
            nodes,
            shapes: self.nodes.iter().map(|n| n.value().shape().to_vec()).collect(),
            node_params: self
                .nodes
                .iter()
                .map(|n| match n.value {
                    Store::Param(pi, _) => Some(pi),
                    Store::Owned(_) => None,
                })
                .collect(),
            params,
        })
    }

    /// Backward pass that adds parameter gradients into `param_grads`.
    pub fn backward_into(&self, root: Var, param_grads: &mut [Tensor]) -> Result<(), NumericError> {
        if param_grads.len() != self.params.len() {
            return Err(NumericError::IndexOutOfBounds { op: "backward_into" });
        }
        self.run_backward(root, param_grads, false)?;
        Ok(())
    }

    fn run_backward(&self, root: Var, param_grads: &mut [Tensor], keep_all: bool) -> Result<Vec<Option<Tensor>>, NumericError> {
        let r = self.check(root)?;
        let rv = self.nodes[r].value();
        if rv.len() != 1 {
            return Err(NumericError::NotScalar(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[r] = Some(Tensor::full(rv.shape(), 1.0));
        let mut out: Vec<Option<Tensor>> = if keep_all { vec![None; self.nodes.len()] } else { Vec::new() };

        for id in (0..=r).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(id, &g, &mut grads, param_grads);
            }
            if keep_all {
                out[id] = Some(g);
            }
        }
        Ok(out)
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>], pg: &mut [Tensor]) {
        let node = &self.nodes[id];
        let y = node.value();
        match &node.op {
            Op::Leaf => {
                if let Store::Param(pi, _) = node.value {
                    pg[pi].add_scaled(g, 1.0).expect("param grad shape");
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.nodes[*a].requires_grad {
                    let ga = self.slot(*a, grads);
                    matmul_bt_acc(g.data(), tb.data(), ga.data_mut(), m, n, k);
                }
                if self.nodes[*b].requires_grad {
                    let gb = self.slot(*b, grads);
                    matmul_at_acc(ta.data(), g.data(), gb.data_mut(), m, k, n);
                }
            }
            Op::Transpose(a) => {
                if self.nodes[*a].requires_grad {
                    let gt = g.transposed();
                    self.slot(*a, grads).add_scaled(&gt, 1.0).expect("shape");
                }
            }
            Op::Add(a, b) => {
                for p in [*a, *b] {
                    if self.nodes[p].requires_grad {
                        self.slot(p, grads).add_scaled(g, 1.0).expect("shape");
                    }
                }
            }
            Op::AddRow(a, b) => {
                if self.nodes[*a].requires_grad {
                    self.slot(*a, grads).add_scaled(g, 1.0).expect("shape");
                }
                if self.nodes[*b].requires_grad {
                    let c = g.cols();
                    let gb = self.slot(*b, grads);
                    for (i, v) in g.data().iter().enumerate() {
                        gb.data_mut()[i % c] += v;
                    }
                }
            }
            Op::AddCol(a, b) => {
                if self.nodes[*a].requires_grad {
                    self.slot(*a, grads).add_scaled(g, 1.0).expect("shape");
                }
                if self.nodes[*b].requires_grad {
                    let c = g.cols();
                    let gb = self.slot(*b, grads);
                    for (i, v) in g.data().iter().enumerate() {
                        gb.data_mut()[i / c] += v;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                if self.nodes[*a].requires_grad {
                    let ga = self.slot(*a, grads);
                    for ((o, gv), bv) in ga.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *o += gv * bv;
                    }
                }
                if self.nodes[*b].requires_grad {
                    let gb = self.slot(*b, grads);
                    for ((o, gv), av) in gb.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *o += gv * av;
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.nodes[*a].requires_grad {
                    self.slot(*a, grads).add_scaled(g, *c).expect("shape");
                }
            }
            Op::ScaleBy(a, s, idx) => {
                let (ta, ts) = (self.val(*a), self.val(*s));
                if self.nodes[*a].requires_grad {
                    self.slot(*a, grads).add_scaled(g, ts.data()[*idx]).expect("shape");
                }
                if self.nodes[*s].requires_grad {
                    let dot: Real = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).sum();
                    self.slot(*s, grads).data_mut()[*idx] += dot;
                }
            }
            Op::Tanh(a) => self.elementwise_back(*a, g, grads, |_, yv| 1.0 - yv * yv, y),
            Op::Sigmoid(a) => self.elementwise_back(*a, g, grads, |_, yv| yv * (1.0 - yv), y),
            Op::Relu(a) => self.elementwise_back(*a, g, grads, |xv, _| if xv > 0.0 { 1.0 } else { 0.0 }, y),
            Op::Softmax(a, axis) => {
                if self.nodes[*a].requires_grad {
                    let ga = self.slot(*a, grads);
                    for lane in lanes(y, *axis) {
                        let dot: Real = lane.iter().map(|&i| g.data()[i] * y.data()[i]).sum();
                        for &i in &lane {
                            ga.data_mut()[i] += y.data()[i] * (g.data()[i] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                if self.nodes[*a].requires_grad {
                    let ga = self.slot(*a, grads);
                    for lane in lanes(y, y.rank() - 1) {
                        let gsum: Real = lane.iter().map(|&i| g.data()[i]).sum();
                        for &i in &lane {
                            ga.data_mut()[i] += g.data()[i] - y.data()[i].exp() * gsum;
                        }
                    }
                }
            }
            Op::Nll(a, targets) => {
                if self.nodes[*a].requires_grad {
                    let gv = g.data()[0];
                    let ga = self.slot(*a, grads);
                    let c = ga.cols();
                    for (r, &k) in targets.iter().enumerate() {
                        ga.data_mut()[r * c + k] -= gv;
                    }
                }
            }
            Op::MaskedNll(a, allowed, targets) => {
                if self.nodes[*a].requires_grad {
                    let gv = g.data()[0];
                    let ta = self.val(*a);
                    let c = ta.cols();
                    let ga = self.slot(*a, grads);
                    for (row, target) in targets.iter().enumerate() {
                        let Some(k) = *target else { continue };
                        let vals = ta.row(row);
                        let cand = || (0..c).filter(|&j| allowed[row * c + j]);
                        let max = cand().map(|j| vals[j]).fold(Real::NEG_INFINITY, Real::max);
                        let z: Real = cand().map(|j| (vals[j] - max).exp()).sum();
                        for j in cand() {
                            let p = (vals[j] - max).exp() / z;
                            ga.data_mut()[row * c + j] += gv * p;
                        }
                        ga.data_mut()[row * c + k] -= gv;
                    }
                }
            }
            Op::ConcatRows(a, b) => {
                let split = self.val(*a).len();
                if self.nodes[*a].requires_grad {
                    let ga = self.slot(*a, grads);
                    add_into(ga.data_mut(), &g.data()[..split]);
                }
                if self.nodes[*b].requires_grad {
                    let gb = self.slot(*b, grads);
                    add_into(gb.data_mut(), &g.data()[split..]);
                }
            }
            Op::SliceRows(a, start) => {
                if self.nodes[*a].requires_grad {
                    let c = g.cols();
                    let ga = self.slot(*a, grads);
                    add_into(&mut ga.data_mut()[start * c..start * c + g.len()], g.data());
                }
            }
            Op::Gather(a, ids) => {
                if self.nodes[*a].requires_grad {
                    let c = g.cols();
                    let ga = self.slot_or_param(*a, grads, pg);
                    for (r, &i) in ids.iter().enumerate() {
                        add_into(&mut ga.data_mut()[i * c..(i + 1) * c], g.row(r));
                    }
                }
            }
            Op::GroupedDot(p, d, m) => {
                let (tp, td) = (self.val(*p), self.val(*d));
                let m = *m;
                let groups = g.cols();
                if self.nodes[*p].requires_grad {
                    let gp = self.slot(*p, grads);
                    let pc = groups * m;
                    for j in 0..g.rows() {
                        let drow = td.row(j);
                        for k in 0..groups {
                            let gv = g.data()[j * groups + k];
                            let dst = &mut gp.data_mut()[j * pc + k * m..j * pc + (k + 1) * m];
                            for (o, dv) in dst.iter_mut().zip(drow) {
                                *o += gv * dv;
                            }
                        }
                    }
                }
                if self.nodes[*d].requires_grad {
                    let gd = self.slot(*d, grads);
                    for j in 0..g.rows() {
                        let prow = tp.row(j);
                        for k in 0..groups {
                            let gv = g.data()[j * groups + k];
                            let dst = &mut gd.data_mut()[j * m..(j + 1) * m];
                            for (o, pv) in dst.iter_mut().zip(&prow[k * m..(k + 1) * m]) {
                                *o += gv * pv;
                            }
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if self.nodes[*a].requires_grad {
                    let gv = g.data()[0];
                    for o in self.slot(*a, grads).data_mut() {
                        *o += gv;
                    }
                }
            }
        }
    }

    fn elementwise_back(&self, a: usize, g: &Tensor, grads: &mut [Option<Tensor>], df: impl Fn(Real, Real) -> Real, y: &Tensor) {
        if !self.nodes[a].requires_grad {
            return;
        }
        let x = self.val(a);
        let ga = self.slot(a, grads);
        for i in 0..g.len() {
            ga.data_mut()[i] += g.data()[i] * df(x.data()[i], y.data()[i]);
        }
    }

    fn val(&self, id: usize) -> &Tensor {
        self.nodes[id].value()
    }

    fn slot<'g>(&self, id: usize, grads: &'g mut [Option<Tensor>]) -> &'g mut Tensor {
        grads[id].get_or_insert_with(|| Tensor::zeros(self.nodes[id].value().shape()))
    }

    /// Parameter leaves reached through a gather are written straight into the
    /// accumulator, which avoids a dense temporary the size of the table.
    fn slot_or_param<'g>(&self, id: usize, grads: &'g mut [Option<Tensor>], pg: &'g mut [Tensor]) -> &'g mut Tensor {
        match self.nodes[id].value {
            Store::Param(pi, _) => &mut pg[pi],
            Store::Owned(_) => self.slot(id, grads),
        }
    }
}

fn add_into(dst: &mut [Real], src: &[Real]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

pub(crate) fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logsumexp(vals: impl Iterator<Item = Real> + Clone) -> Real {
    let max = vals.clone().fold(Real::NEG_INFINITY, Real::max);
    if max == Real::NEG_INFINITY {
        return max;
    }
    max + vals.map(|v| (v - max).exp()).sum::<Real>().ln()
}

fn softmax_lane(data: &mut [Real], lane: &[usize]) {
    let max = lane.iter().map(|&i| data[i]).fold(Real::NEG_INFINITY, Real::max);
    let mut z = 0.0;
    for &i in lane {
        data[i] = (data[i] - max).exp();
        z += data[i];
    }
    for &i in lane {
        data[i] /= z;
    }
}

/// Flat index lists of every 1-D lane of `t` along `axis`.
fn lanes(t: &Tensor, axis: usize) -> Vec<Vec<usize>> {
    match t.rank() {
        0 => vec![vec![0]],
        1 => vec![(0..t.len()).collect()],
        _ => {
            let (r, c) = (t.rows(), t.cols());
            if axis == 0 {
                (0..c).map(|j| (0..r).map(|i| i * c + j).collect()).collect()
            } else {
                (0..r).map(|i| (i * c..(i + 1) * c).collect()).collect()
            }
        }
    }
}
