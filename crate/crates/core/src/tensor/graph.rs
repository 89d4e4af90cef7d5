//! Define-by-run reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is an append-only arena: every op pushes a node whose inputs
//! precede it, so node order is already a topological order and
//! [`Graph::backward`] simply walks the arena in reverse. Graphs are cheap and
//! meant to be rebuilt for every forward pass.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Floor on row norms in [`Graph::l2_normalize_rows`].
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    MatMulNt { a: Var, b: Var },
    Sigmoid(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows { x: Var, exclude_diag: bool },
    L2NormalizeRows { x: Var, norms: Vec<f64> },
    ConcatCols { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Sum(Var),
    WeightedSum { x: Var, weights: Matrix },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that gradients never flow into.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies the value of `v` into a fresh constant, severing it from
    /// everything upstream.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m[(0, 0)]
    }

    /// Gradient accumulated by the last [`Graph::backward`], if the node was
    /// reachable from the loss and tracked.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Graph::grad`] but returns zeros for untouched nodes.
    pub fn grad_or_zeros(&self, v: Var) -> Matrix {
        self.grad(v).cloned().unwrap_or_else(|| {
            let (r, c) = self.value(v).shape();
            Matrix::zeros(r, c)
        })
    }

    /// `x · w + b`, with `b` a `1 x m` row broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.rows() {
            return Err(Error::Shape {
                op: "affine",
                left: xv.shape(),
                right: wv.shape(),
            });
        }
        if bv.shape() != (1, wv.cols()) {
            return Err(Error::Shape {
                op: "affine bias",
                left: wv.shape(),
                right: bv.shape(),
            });
        }
        let mut out = xv.matmul(wv)?;
        for i in 0..out.rows() {
            for (o, &bias) in out.row_mut(i).iter_mut().zip(bv.as_slice()) {
                *o += bias;
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(out, Op::Affine { x, w, b }, needs))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMulNt { a, b }, needs))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(stable_sigmoid);
        let needs = self.needs(x);
        self.push(out, Op::Sigmoid(x), needs)
    }

    /// Row-wise softmax with max-shift.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = xv.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - max).exp());
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
        let needs = self.needs(x);
        self.push(out, Op::SoftmaxRows(x), needs)
    }

    /// Row-wise log-softmax with max-shift.
    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        self.log_softmax_impl(x, false)
    }

    /// Row-wise log-softmax where entry `(i, i)` is excluded from row `i`'s
    /// normalizer. Excluded entries are reported as `0` and receive no
    /// gradient.
    pub fn log_softmax_rows_off_diagonal(&mut self, x: Var) -> Var {
        self.log_softmax_impl(x, true)
    }

    fn log_softmax_impl(&mut self, x: Var, exclude_diag: bool) -> Var {
        let mut out = self.value(x).clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let active = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| !(exclude_diag && j == i))
                .map(|(_, &v)| v);
            let lse = log_sum_exp(active);
            for (j, v) in row.iter_mut().enumerate() {
                *v = if exclude_diag && j == i { 0.0 } else { *v - lse };
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::LogSoftmaxRows { x, exclude_diag }, needs)
    }

    /// Divides each row by `max(‖row‖₂, NORM_EPS)`.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let mut norms = Vec::with_capacity(out.rows());
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let denom = norm.max(NORM_EPS);
            row.iter_mut().for_each(|v| *v /= denom);
            norms.push(norm);
        }
        let needs = self.needs(x);
        self.push(out, Op::L2NormalizeRows { x, norms }, needs)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::Shape {
                op: "concat_cols",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let (n, p, q) = (av.rows(), av.cols(), bv.cols());
        let mut out = Matrix::zeros(n, p + q);
        for i in 0..n {
            let row = out.row_mut(i);
            row[..p].copy_from_slice(av.row(i));
            row[p..].copy_from_slice(bv.row(i));
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::ConcatCols { a, b }, needs))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let needs = self.needs(x);
        self.push(out, Op::Scale { x, factor }, needs)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                op: "add",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let mut out = av.clone();
        out.add_scaled(bv, 1.0);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                op: "mul",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let data = av.as_slice().iter().zip(bv.as_slice()).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(av.rows(), av.cols(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul { a, b }, needs))
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Matrix::filled(1, 1, self.value(x).sum());
        let needs = self.needs(x);
        self.push(out, Op::Sum(x), needs)
    }

    /// `Σ weights ⊙ x` as a `1 x 1` node; `weights` is a constant.
    pub fn weighted_sum(&mut self, x: Var, weights: Matrix) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != weights.shape() {
            return Err(Error::Shape {
                op: "weighted_sum",
                left: xv.shape(),
                right: weights.shape(),
            });
        }
        let total = xv
            .as_slice()
            .iter()
            .zip(weights.as_slice())
            .filter(|(_, &w)| w != 0.0)
            .map(|(v, w)| v * w)
            .sum();
        let needs = self.needs(x);
        Ok(self.push(Matrix::filled(1, 1, total), Op::WeightedSum { x, weights }, needs))
    }

    /// Adds a list of `1 x 1` nodes. An empty list yields a constant zero.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = terms.split_first() else {
            return Ok(self.constant(Matrix::zeros(1, 1)));
        };
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// Populates gradients of `loss` with respect to every tracked node
    /// reachable from it. Previous gradients are discarded first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!("backward needs a 1 x 1 loss, got {shape:?}")));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.needs(loss) {
            return Ok(());
        }
        self.grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(upstream) = self.grads[id].take() else {
                continue;
            };
            self.propagate(id, &upstream)?;
            self.grads[id] = Some(upstream);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Matrix) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_scaled(&g, 1.0),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&mut self, id: usize, g: &Matrix) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        let mut pending: Vec<(Var, Matrix)> = Vec::with_capacity(3);
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                if self.nodes[x.0].needs_grad {
                    pending.push((*x, g.matmul_nt(wv)?));
                }
                if self.nodes[w.0].needs_grad {
                    pending.push((*w, xv.matmul_tn(g)?));
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, &v) in db.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    pending.push((*b, db));
                }
            }
            Op::MatMulNt { a, b } => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if self.nodes[a.0].needs_grad {
                    pending.push((*a, g.matmul(bv)?));
                }
                if self.nodes[b.0].needs_grad {
                    pending.push((*b, g.matmul_tn(av)?));
                }
            }
            Op::Sigmoid(x) => {
                let mut dx = g.clone();
                for (d, &y) in dx.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= y * (1.0 - y);
                }
                pending.push((*x, dx));
            }
            Op::SoftmaxRows(x) => {
                let mut dx = g.clone();
                for i in 0..dx.rows() {
                    let y = out.row(i);
                    let inner: f64 = g.row(i).iter().zip(y).map(|(a, b)| a * b).sum();
                    for (d, &yj) in dx.row_mut(i).iter_mut().zip(y) {
                        *d = yj * (*d - inner);
                    }
                }
                pending.push((*x, dx));
            }
            Op::LogSoftmaxRows { x, exclude_diag } => {
                let mut dx = g.clone();
                for i in 0..dx.rows() {
                    let active = |j: usize| !(*exclude_diag && j == i);
                    let total: f64 = g
                        .row(i)
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| active(j))
                        .map(|(_, v)| v)
                        .sum();
                    let y = out.row(i);
                    for (j, d) in dx.row_mut(i).iter_mut().enumerate() {
                        *d = if active(j) { *d - y[j].exp() * total } else { 0.0 };
                    }
                }
                pending.push((*x, dx));
            }
            Op::L2NormalizeRows { x, norms } => {
                let mut dx = g.clone();
                for (i, &norm) in norms.iter().enumerate() {
                    let y = out.row(i);
                    if norm > NORM_EPS {
                        let inner: f64 = g.row(i).iter().zip(y).map(|(a, b)| a * b).sum();
                        for (d, &yj) in dx.row_mut(i).iter_mut().zip(y) {
                            *d = (*d - yj * inner) / norm;
                        }
                    } else {
                        dx.row_mut(i).iter_mut().for_each(|d| *d /= NORM_EPS);
                    }
                }
                pending.push((*x, dx));
            }
            Op::ConcatCols { a, b } => {
                let p = self.nodes[a.0].value.cols();
                let q = g.cols() - p;
                let mut ga = Matrix::zeros(g.rows(), p);
                let mut gb = Matrix::zeros(g.rows(), q);
                for i in 0..g.rows() {
                    ga.row_mut(i).copy_from_slice(&g.row(i)[..p]);
                    gb.row_mut(i).copy_from_slice(&g.row(i)[p..]);
                }
                pending.push((*a, ga));
                pending.push((*b, gb));
            }
            Op::Scale { x, factor } => pending.push((*x, g.map(|v| v * factor))),
            Op::Add { a, b } => {
                pending.push((*a, g.clone()));
                pending.push((*b, g.clone()));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let hadamard = |m: &Matrix| {
                    let data = g.as_slice().iter().zip(m.as_slice()).map(|(x, y)| x * y);
                    Matrix::from_vec(g.rows(), g.cols(), data.collect())
                };
                pending.push((*a, hadamard(bv)?));
                pending.push((*b, hadamard(av)?));
            }
            Op::Sum(x) => {
                let (r, c) = self.nodes[x.0].value.shape();
                pending.push((*x, Matrix::filled(r, c, g[(0, 0)])));
            }
            Op::WeightedSum { x, weights } => {
                let s = g[(0, 0)];
                pending.push((*x, weights.map(|w| w * s)));
            }
        }
        for (v, grad) in pending {
            self.accumulate(v, grad);
        }
        Ok(())
    }
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}
