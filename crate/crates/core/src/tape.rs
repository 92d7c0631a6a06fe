//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation of one forward pass as a node in a
//! flat list. Nodes only reference earlier nodes, so the recording order is
//! a topological order and [`Tape::backward`] is a single sweep from the
//! loss node down to index 0. Parameters enter the graph through
//! [`Tape::param`]; their gradients are accumulated into the owning
//! [`ParamStore`] at the end of the sweep.

use crate::error::{shape_err, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{self, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatVec { w: Var, x: Var },
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Reshape(Var),
    SoftmaxRows(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Tile { x: Var, times: usize },
    Columns { x: Var, start: usize, len: usize },
    Sum(Var),
    CrossEntropy { logits: Var, label: usize },
    SquaredError { pred: Var, target: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Backward-rule corruption used as a negative control for gradient checks.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    TanhDerivative,
}

/// Recorded operation graph for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    grads: Vec<Option<Vec<f64>>>,
    swept: bool,
    fault: Option<Fault>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the loss with respect to `v`, available after
    /// [`Tape::backward`]. Nodes the loss does not depend on report `None`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Records an input or constant.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Binds a parameter; repeated calls return the same node. A tape binds
    /// parameters of exactly one store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.index() {
            self.param_vars.resize(id.index() + 1, None);
        }
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.param_vars[id.index()] = Some(v);
        v
    }

    /// `w · x` for a `r x c` matrix and a length-`c` input.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (wt, xt) = (self.value(w), self.value(x));
        let shape = wt.shape();
        if shape.len() != 2 || shape[1] != xt.len() {
            return Err(shape_err("matvec", &[shape[0], xt.len()], shape));
        }
        let (rows, cols) = (shape[0], shape[1]);
        let xs = xt.data();
        let out: Vec<f64> = wt
            .data()
            .chunks_exact(cols)
            .map(|row| row.iter().zip(xs).map(|(a, b)| a * b).sum())
            .collect();
        debug_assert_eq!(out.len(), rows);
        Ok(self.push(Tensor::vector(out), Op::MatVec { w, x }))
    }

    fn same_shape(&self, context: &str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(context, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Sums any number of equally shaped nodes left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (first, rest) = terms.split_first().expect("add_all needs at least one term");
        rest.iter().try_fold(*first, |acc, &t| self.add(acc, t))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = tensor::sigmoid(self.value(x));
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = tensor::tanh_act(self.value(x));
        self.push(value, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = tensor::relu(self.value(x));
        self.push(value, Op::Relu(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Row-wise softmax of a matrix node.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let value = tensor::softmax_rows(self.value(x));
        self.push(value, Op::SoftmaxRows(x))
    }

    /// Flat concatenation of the given nodes, in order.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|&p| self.value(p).data().iter().copied())
            .collect();
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if len == 0 || start + len > t.len() {
            return Err(shape_err("slice", &[start + len], &[t.len()]));
        }
        let value = Tensor::vector(t.data()[start..start + len].to_vec());
        Ok(self.push(value, Op::Slice { x, start }))
    }

    /// Broadcasts a length-`d` vector to a `times x d` matrix.
    pub fn tile(&mut self, x: Var, times: usize) -> Var {
        let t = self.value(x);
        let d = t.len();
        let data = t.data().repeat(times);
        let value = Tensor::matrix(times, d, data).expect("tile shape");
        self.push(value, Op::Tile { x, times })
    }

    /// Extracts columns `start..start+len` of a matrix node and flattens the
    /// block row-major.
    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let shape = t.shape();
        if shape.len() != 2 || len == 0 || start + len > shape[1] {
            return Err(shape_err("columns", &[start + len], shape));
        }
        let data: Vec<f64> = (0..shape[0])
            .flat_map(|r| t.row(r)[start..start + len].iter().copied())
            .collect();
        Ok(self.push(Tensor::vector(data), Op::Columns { x, start, len }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    /// `-log softmax(logits)[label]`, computed with log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let t = self.value(logits);
        if label >= t.len() {
            return Err(Error::LabelOutOfRange { label, classes: t.len() });
        }
        let value = Tensor::scalar(log_sum_exp(t.data()) - t.data()[label]);
        Ok(self.push(value, Op::CrossEntropy { logits, label }))
    }

    /// `(pred - target)^2` for a scalar prediction.
    pub fn squared_error(&mut self, pred: Var, target: f64) -> Result<Var> {
        let t = self.value(pred);
        if t.len() != 1 {
            return Err(shape_err("squared_error", &[1], t.shape()));
        }
        let d = t.data()[0] - target;
        Ok(self.push(Tensor::scalar(d * d), Op::SquaredError { pred, target }))
    }

    fn accumulate(&mut self, v: Var, delta: impl IntoIterator<Item = f64>) {
        let len = self.nodes[v.0].value.len();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        for (g, d) in slot.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Reverse sweep from a scalar `loss`. Parameter gradients are added to
    /// the store's gradient buffers (call [`ParamStore::zero_grad`] first to
    /// start from zero). A tape can be swept only once.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.swept {
            return Err(Error::TapeConsumed);
        }
        let loss_shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(loss_shape.to_vec()));
        }
        self.swept = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &g, store);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, op: &Op, g: &[f64], store: &mut ParamStore) {
        match *op {
            Op::Leaf => {}
            Op::Param(id) => {
                for (dst, src) in store.grad_mut(id).data_mut().iter_mut().zip(g) {
                    *dst += src;
                }
            }
            Op::MatVec { w, x } => {
                let cols = self.value(x).len();
                let xs = self.value(x).data().to_vec();
                let mut dw = Vec::with_capacity(g.len() * cols);
                for &gr in g {
                    dw.extend(xs.iter().map(|&xv| gr * xv));
                }
                let mut dx = vec![0.0; cols];
                for (row, &gr) in self.value(w).data().chunks_exact(cols).zip(g) {
                    for (d, &wv) in dx.iter_mut().zip(row) {
                        *d += wv * gr;
                    }
                }
                self.accumulate(w, dw);
                self.accumulate(x, dx);
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.iter().copied());
                self.accumulate(b, g.iter().copied());
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = g.iter().zip(self.value(b).data()).map(|(g, y)| g * y).collect();
                let db: Vec<f64> = g.iter().zip(self.value(a).data()).map(|(g, x)| g * x).collect();
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::Sigmoid(x) => {
                let d: Vec<f64> = self.nodes[i]
                    .value
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(s, g)| g * s * (1.0 - s))
                    .collect();
                self.accumulate(x, d);
            }
            Op::Tanh(x) => {
                let scale = match self.fault {
                    Some(Fault::TanhDerivative) => 1.05,
                    None => 1.0,
                };
                let d: Vec<f64> = self.nodes[i]
                    .value
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(t, g)| scale * g * (1.0 - t * t))
                    .collect();
                self.accumulate(x, d);
            }
            Op::Relu(x) => {
                let d: Vec<f64> = self
                    .value(x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                self.accumulate(x, d);
            }
            Op::Reshape(x) => self.accumulate(x, g.iter().copied()),
            Op::SoftmaxRows(x) => {
                let out = &self.nodes[i].value;
                let rows = out.rows();
                let cols = out.len() / rows;
                let mut d = Vec::with_capacity(out.len());
                for r in 0..rows {
                    let s = out.row(r);
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: f64 = s.iter().zip(gr).map(|(a, b)| a * b).sum();
                    d.extend(s.iter().zip(gr).map(|(s, g)| s * (g - dot)));
                }
                self.accumulate(x, d);
            }
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    self.accumulate(p, g[offset..offset + n].iter().copied());
                    offset += n;
                }
            }
            Op::Slice { x, start } => {
                let n = self.value(x).len();
                let mut d = vec![0.0; n];
                d[start..start + g.len()].copy_from_slice(g);
                self.accumulate(x, d);
            }
            Op::Tile { x, times } => {
                let n = self.value(x).len();
                let mut d = vec![0.0; n];
                for k in 0..times {
                    for (dst, src) in d.iter_mut().zip(&g[k * n..(k + 1) * n]) {
                        *dst += src;
                    }
                }
                self.accumulate(x, d);
            }
            Op::Columns { x, start, len } => {
                let shape = self.value(x).shape().to_vec();
                let cols = shape[1];
                let mut d = vec![0.0; shape[0] * cols];
                for r in 0..shape[0] {
                    d[r * cols + start..r * cols + start + len]
                        .copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                self.accumulate(x, d);
            }
            Op::Sum(x) => {
                let n = self.value(x).len();
                self.accumulate(x, std::iter::repeat(g[0]).take(n));
            }
            Op::CrossEntropy { logits, label } => {
                let probs = tensor::softmax_rows(self.value(logits));
                let d: Vec<f64> = probs
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| g[0] * (p - if j == label { 1.0 } else { 0.0 }))
                    .collect();
                self.accumulate(logits, d);
            }
            Op::SquaredError { pred, target } => {
                let p = self.value(pred).data()[0];
                self.accumulate(pred, [g[0] * 2.0 * (p - target)]);
            }
        }
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
