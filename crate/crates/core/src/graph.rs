//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value
//! and the inputs it came from. [`Graph::backward`] walks the tape once in
//! reverse. Graphs are built per update and dropped afterwards.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{gemm, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    PRelu(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Gather(Var, Arc<[usize]>),
    Reshape(Var),
    SumCols(Var),
    Sum(Var),
    CrossEntropy(Var, Arc<Tensor>),
    KldDiag([Var; 4]),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every node that needed one.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        libm::exp(x)
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|&x| libm::exp(x - m)).sum();
    m + libm::log(s)
}

/// Elementwise diagonal-Gaussian KLD summed over columns, one value per row.
pub(crate) fn kld_rows(mq: &Tensor, sq: &Tensor, mp: &Tensor, sp: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(mq.rows(), 1);
    for r in 0..mq.rows() {
        let mut acc = 0.0;
        for c in 0..mq.cols() {
            let (a, b, m, s) = (mq.get(r, c), sq.get(r, c), mp.get(r, c), sp.get(r, c));
            let d = a - m;
            acc += libm::log(s / b) + (b * b + d * d) / (2.0 * s * s) - 0.5;
        }
        out.set(r, 0, acc);
    }
    out
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

    fn push(&mut self, value: Tensor, op: Op, grad: bool) -> Var {
        self.nodes.push(Node { value: Arc::new(value), op, grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].grad)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A shared leaf, typically a parameter tensor.
    pub fn leaf(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, grad: requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.shape(), (1, 1));
        t.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let g = self.needs(&[a, b]);
        self.push(out, Op::MatMul(a, b), g)
    }

    /// `x + b` with `b` a `1 x cols` row broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        assert_eq!(bv.shape(), (1, xv.cols()), "bias shape mismatch");
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, &bb) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let g = self.needs(&[x, b]);
        self.push(out, Op::AddBias(x, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let g = self.needs(&[a, b]);
        self.push(out, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let g = self.needs(&[a, b]);
        self.push(out, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let g = self.needs(&[a, b]);
        self.push(out, Op::Mul(a, b), g)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| if y < x { y } else { x });
        let g = self.needs(&[a, b]);
        self.push(out, Op::Min(a, b), g)
    }

    /// Scales each row of `x` by the matching entry of the column `c`.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(c));
        assert_eq!(cv.shape(), (xv.rows(), 1), "mul_col expects a column");
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let s = cv.data()[r];
            for o in out.row_mut(r) {
                *o *= s;
            }
        }
        let g = self.needs(&[x, c]);
        self.push(out, Op::MulCol(x, c), g)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        let g = self.needs(&[x]);
        self.push(out, Op::Scale(x, s), g)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v + s);
        let g = self.needs(&[x]);
        self.push(out, Op::AddScalar(x), g)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(libm::tanh);
        let g = self.needs(&[x]);
        self.push(out, Op::Tanh(x), g)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let g = self.needs(&[x]);
        self.push(out, Op::Sigmoid(x), g)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let out = self.value(x).map(softplus);
        let g = self.needs(&[x]);
        self.push(out, Op::Softplus(x), g)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(libm::exp);
        let g = self.needs(&[x]);
        self.push(out, Op::Exp(x), g)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let out = self.value(x).map(libm::log);
        let g = self.needs(&[x]);
        self.push(out, Op::Ln(x), g)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        let g = self.needs(&[x]);
        self.push(out, Op::Square(x), g)
    }

    /// Parametric rectifier with a single learned slope (`1 x 1`).
    pub fn prelu(&mut self, x: Var, slope: Var) -> Var {
        let a = self.scalar(slope);
        let out = self.value(x).map(|v| if v > 0.0 { v } else { a * v });
        let g = self.needs(&[x, slope]);
        self.push(out, Op::PRelu(x, slope), g)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor> = parts.iter().map(|p| &*self.nodes[p.0].value).collect();
        let out = Tensor::concat_cols(&tensors);
        let g = self.needs(parts);
        self.push(out, Op::Concat(parts.to_vec()), g)
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).slice_cols(start, len);
        let g = self.needs(&[x]);
        self.push(out, Op::Slice(x, start), g)
    }

    /// `out[:, j] = x[:, index[j]]`; indices may repeat.
    pub fn gather(&mut self, x: Var, index: Arc<[usize]>) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros(xv.rows(), index.len());
        for r in 0..xv.rows() {
            let src = xv.row(r);
            for (o, &i) in out.row_mut(r).iter_mut().zip(index.iter()) {
                *o = src[i];
            }
        }
        let g = self.needs(&[x]);
        self.push(out, Op::Gather(x, index), g)
    }

    /// Reinterprets the row-major buffer under a new shape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let out = self.value(x).clone().reshaped(rows, cols);
        let g = self.needs(&[x]);
        self.push(out, Op::Reshape(x), g)
    }

    /// Row sums as a column.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros(xv.rows(), 1);
        for r in 0..xv.rows() {
            out.set(r, 0, xv.row(r).iter().sum());
        }
        let g = self.needs(&[x]);
        self.push(out, Op::SumCols(x), g)
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let g = self.needs(&[x]);
        self.push(Tensor::filled(1, 1, s), Op::Sum(x), g)
    }

    /// Row-wise `-Σ_j y_j log softmax(x)_j`; `targets` are constants.
    pub fn cross_entropy(&mut self, logits: Var, targets: Arc<Tensor>) -> Var {
        let xv = self.value(logits);
        assert_eq!(xv.shape(), targets.shape(), "cross-entropy shape mismatch");
        let mut out = Tensor::zeros(xv.rows(), 1);
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let lse = log_sum_exp(row);
            let ce: f64 = row.iter().zip(targets.row(r)).map(|(&x, &y)| -y * (x - lse)).sum();
            out.set(r, 0, ce);
        }
        let g = self.needs(&[logits]);
        self.push(out, Op::CrossEntropy(logits, targets), g)
    }

    /// Diagonal-Gaussian `KL(q || p)` summed over columns, one value per row.
    pub fn kld_diag(&mut self, mean_q: Var, std_q: Var, mean_p: Var, std_p: Var) -> Var {
        let out = kld_rows(self.value(mean_q), self.value(std_q), self.value(mean_p), self.value(std_p));
        let vars = [mean_q, std_q, mean_p, std_p];
        let g = self.needs(&vars);
        self.push(out, Op::KldDiag(vars), g)
    }

    /// Gradients of the `1 x 1` node `out` with respect to all contributing nodes.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.shape(out), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Tensor::filled(1, 1, 1.0));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Grads { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| -> &Tensor { &self.nodes[v.0].value };
        let y = &*node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].grad {
                    let bv = val(*b);
                    let mut da = Tensor::zeros(g.rows(), bv.rows());
                    gemm(g, false, bv, true, &mut da, 0.0);
                    self.accumulate(grads, *a, da);
                }
                if self.nodes[b.0].grad {
                    let av = val(*a);
                    let mut db = Tensor::zeros(av.cols(), g.cols());
                    gemm(av, true, g, false, &mut db, 0.0);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::AddBias(x, b) => {
                if self.nodes[b.0].grad {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, &gg) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += gg;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
                self.accumulate(grads, *x, g.clone());
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].grad {
                    self.accumulate(grads, *a, g.zip_map(val(*b), |gg, bb| gg * bb));
                }
                if self.nodes[b.0].grad {
                    self.accumulate(grads, *b, g.zip_map(val(*a), |gg, aa| gg * aa));
                }
            }
            Op::Min(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut da = g.clone();
                let mut db = g.clone();
                for i in 0..g.len() {
                    if bv.data()[i] < av.data()[i] {
                        da.data_mut()[i] = 0.0;
                    } else {
                        db.data_mut()[i] = 0.0;
                    }
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::MulCol(x, c) => {
                let (xv, cv) = (val(*x), val(*c));
                if self.nodes[x.0].grad {
                    let mut dx = g.clone();
                    for r in 0..dx.rows() {
                        let s = cv.data()[r];
                        for d in dx.row_mut(r) {
                            *d *= s;
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                if self.nodes[c.0].grad {
                    let mut dc = Tensor::zeros(cv.rows(), 1);
                    for r in 0..g.rows() {
                        let s: f64 = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                        dc.set(r, 0, s);
                    }
                    self.accumulate(grads, *c, dc);
                }
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, g.map(|v| v * s)),
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::Tanh(x) => self.accumulate(grads, *x, g.zip_map(y, |gg, yy| gg * (1.0 - yy * yy))),
            Op::Sigmoid(x) => self.accumulate(grads, *x, g.zip_map(y, |gg, yy| gg * yy * (1.0 - yy))),
            Op::Softplus(x) => self.accumulate(grads, *x, g.zip_map(val(*x), |gg, xx| gg * sigmoid(xx))),
            Op::Exp(x) => self.accumulate(grads, *x, g.zip_map(y, |gg, yy| gg * yy)),
            Op::Ln(x) => self.accumulate(grads, *x, g.zip_map(val(*x), |gg, xx| gg / xx)),
            Op::Square(x) => self.accumulate(grads, *x, g.zip_map(val(*x), |gg, xx| 2.0 * gg * xx)),
            Op::PRelu(x, slope) => {
                let xv = val(*x);
                let a = val(*slope).data()[0];
                if self.nodes[x.0].grad {
                    self.accumulate(grads, *x, g.zip_map(xv, |gg, xx| if xx > 0.0 { gg } else { a * gg }));
                }
                if self.nodes[slope.0].grad {
                    let da: f64 = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .filter(|(_, &xx)| xx <= 0.0)
                        .map(|(gg, xx)| gg * xx)
                        .sum();
                    self.accumulate(grads, *slope, Tensor::filled(1, 1, da));
                }
            }
            Op::Concat(parts) => {
                let mut at = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if self.nodes[p.0].grad {
                        self.accumulate(grads, *p, g.slice_cols(at, w));
                    }
                    at += w;
                }
            }
            Op::Slice(x, start) => {
                let xv = val(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Gather(x, index) => {
                let xv = val(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    let src = g.row(r);
                    let dst = dx.row_mut(r);
                    for (&gg, &i) in src.iter().zip(index.iter()) {
                        dst[i] += gg;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Reshape(x) => {
                let (r, c) = val(*x).shape();
                self.accumulate(grads, *x, g.clone().reshaped(r, c));
            }
            Op::SumCols(x) => {
                let xv = val(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..dx.rows() {
                    let s = g.data()[r];
                    dx.row_mut(r).fill(s);
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                self.accumulate(grads, *x, Tensor::filled(r, c, g.data()[0]));
            }
            Op::CrossEntropy(x, targets) => {
                let xv = val(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let row = xv.row(r);
                    let lse = log_sum_exp(row);
                    let ys = targets.row(r);
                    let total: f64 = ys.iter().sum();
                    let gg = g.data()[r];
                    for ((d, &xx), &yy) in dx.row_mut(r).iter_mut().zip(row).zip(ys) {
                        *d = gg * (total * libm::exp(xx - lse) - yy);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::KldDiag([mq, sq, mp, sp]) => {
                let (a, b, m, s) = (val(*mq), val(*sq), val(*mp), val(*sp));
                let (rows, cols) = a.shape();
                let mut dmq = Tensor::zeros(rows, cols);
                let mut dsq = Tensor::zeros(rows, cols);
                let mut dmp = Tensor::zeros(rows, cols);
                let mut dsp = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    let gg = g.data()[r];
                    for c in 0..cols {
                        let (aq, bq, mpv, spv) = (a.get(r, c), b.get(r, c), m.get(r, c), s.get(r, c));
                        let d = aq - mpv;
                        let s2 = spv * spv;
                        dmq.set(r, c, gg * d / s2);
                        dmp.set(r, c, -gg * d / s2);
                        dsq.set(r, c, gg * (-1.0 / bq + bq / s2));
                        dsp.set(r, c, gg * (1.0 / spv - (bq * bq + d * d) / (s2 * spv)));
                    }
                }
                self.accumulate(grads, *mq, dmq);
                self.accumulate(grads, *sq, dsq);
                self.accumulate(grads, *mp, dmp);
                self.accumulate(grads, *sp, dsp);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, stream_rng};

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = stream_rng(seed, 0);
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| normal(&mut rng)).collect())
    }

    /// Central finite differences of `f` around `x` against the analytic gradient.
    fn check(x: Tensor, f: impl Fn(&mut Graph, Var) -> Var) {
        let mut g = Graph::new();
        let v = g.leaf(Arc::new(x.clone()), true);
        let out = f(&mut g, v);
        let grads = g.backward(out);
        let analytic = grads.get_or_zeros(v, &x);
        let h = 1e-6;
        for i in 0..x.len() {
            let eval = |delta: f64| {
                let mut xp = x.clone();
                xp.data_mut()[i] += delta;
                let mut g = Graph::new();
                let v = g.leaf(Arc::new(xp), false);
                let o = f(&mut g, v);
                g.scalar(o)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(err < 1e-5, "component {i}: analytic {a} numeric {numeric}");
        }
    }

    #[test]
    fn elementwise_gradients() {
        let x = random(3, 4, 1);
        check(x.clone(), |g, v| {
            let t = g.tanh(v);
            let s = g.sigmoid(v);
            let p = g.softplus(v);
            let m = g.mul(t, s);
            let a = g.add(m, p);
            let e = g.exp(a);
            let sq = g.square(e);
            g.sum(sq)
        });
        let pos = x.map(|v| v.abs() + 0.5);
        check(pos, |g, v| {
            let l = g.ln(v);
            let s = g.scale(l, 1.7);
            let s = g.add_scalar(s, 0.3);
            g.sum(s)
        });
    }

    #[test]
    fn structural_gradients() {
        let x = random(2, 6, 2);
        let idx: Arc<[usize]> = Arc::from(vec![5, 0, 0, 3, 2, 2, 1]);
        check(x, move |g, v| {
            let a = g.slice(v, 1, 3);
            let b = g.gather(v, idx.clone());
            let c = g.concat(&[a, b, v]);
            let r = g.reshape(c, 4, 8);
            let sq = g.square(r);
            let rs = g.sum_cols(sq);
            let col = g.slice(v, 0, 1);
            let colsq = g.square(col);
            let cc = g.concat(&[colsq, colsq]);
            let cc = g.reshape(cc, 4, 1);
            let w = g.mul_col(r, cc);
            let m = g.min(w, r);
            let s1 = g.sum(m);
            let s2 = g.sum(rs);
            g.add(s1, s2)
        });
    }

    #[test]
    fn matmul_bias_prelu_gradients() {
        let x = random(3, 4, 3);
        let w = Arc::new(random(4, 5, 4));
        let b = Arc::new(random(1, 5, 5));
        check(x, move |g, v| {
            let wv = g.leaf(w.clone(), false);
            let bv = g.leaf(b.clone(), false);
            let a = g.constant(Tensor::filled(1, 1, 0.25));
            let y = g.matmul(v, wv);
            let y = g.add_bias(y, bv);
            let y = g.prelu(y, a);
            let y = g.square(y);
            g.sum(y)
        });
        // gradient with respect to the weights and the slope
        let w0 = random(4, 5, 6);
        check(w0, |g, wv| {
            let xv = g.constant(random(3, 4, 7));
            let y = g.matmul(xv, wv);
            let slope = g.slice(wv, 0, 1);
            let slope = g.slice(slope, 0, 1);
            let slope = g.sum(slope);
            let y = g.prelu(y, slope);
            let y = g.square(y);
            g.sum(y)
        });
    }

    #[test]
    fn cross_entropy_and_kld_gradients() {
        let logits = random(3, 5, 8);
        let mut y = Tensor::zeros(3, 5);
        y.set(0, 1, 1.0);
        y.set(1, 4, 1.0);
        y.set(2, 0, 1.0);
        let y = Arc::new(y);
        check(logits, move |g, v| {
            let ce = g.cross_entropy(v, y.clone());
            g.sum(ce)
        });
        let params = random(3, 8, 9);
        check(params, |g, v| {
            let mq = g.slice(v, 0, 2);
            let sq = g.slice(v, 2, 2);
            let sq = g.softplus(sq);
            let mp = g.slice(v, 4, 2);
            let sp = g.slice(v, 6, 2);
            let sp = g.softplus(sp);
            let k = g.kld_diag(mq, sq, mp, sp);
            g.sum(k)
        });
    }
}
