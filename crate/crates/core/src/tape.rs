//! Reverse-mode automatic differentiation over a dynamic tape.
//!
//! The tape is rebuilt for every forward pass; nodes are appended in
//! topological order, so the backward sweep is a single reverse iteration.
//! The op set is fixed: matmul, add (with row-broadcast bias), relu, concat,
//! gather-row, tempered softmax, mse, elementwise mul, sum, and the
//! straight-through compose that routes gradients from a hard one-hot onto
//! its relaxed surrogate.

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add { a: Var, b: Var, broadcast: bool },
    Matmul { a: Var, b: Var },
    Relu { a: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    ConcatCols { parts: Vec<Var> },
    GatherRow { a: Var, row: usize },
    SoftmaxTau { a: Var, tau: f64 },
    Mse { pred: Var, target: Var },
    Sum { a: Var },
    StraightThrough { soft: Var },
}

struct Node {
    op: Op,
    value: Tensor,
    adjoint: Vec<f64>,
}

/// Dynamic computation graph. Single-threaded; one tape per forward pass.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Drop all nodes but keep the allocation; used by tight sampling loops.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let adjoint = vec![0.0; value.numel()];
        self.nodes.push(Node { op, value, adjoint });
        Var(self.nodes.len() - 1)
    }

    /// Insert a tensor as a graph input. Adjoints accumulate on every leaf;
    /// whether they are read (parameter) or ignored (constant) is up to the
    /// caller.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Adjoint of `v` from the most recent backward pass.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        Tensor::new(node.value.shape().to_vec(), node.adjoint.clone())
            .expect("adjoint shape mirrors value shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::add(self.value(a), self.value(b))?;
        let broadcast = self.value(a).shape() != self.value(b).shape();
        Ok(self.push(Op::Add { a, b, broadcast }, value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::Matmul { a, b }, value))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = tensor::relu(self.value(a));
        self.push(Op::Relu { a }, value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Shape(format!(
                "mul of {:?} and {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::Mul { a, b }, value))
    }

    /// Elementwise multiply by a plain constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(Op::Scale { a, c }, value)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = tensor::concat_cols(&tensors)?;
        Ok(self.push(Op::ConcatCols { parts: parts.to_vec() }, value))
    }

    pub fn gather_row(&mut self, a: Var, row: usize) -> Result<Var> {
        let va = self.value(a);
        if va.rank() != 2 {
            return Err(Error::Rank("gather_row expects a rank-2 input".into()));
        }
        if row >= va.rows() {
            return Err(Error::Shape(format!(
                "gather_row {} from {} rows",
                row,
                va.rows()
            )));
        }
        let value = Tensor::vector(va.row(row).to_vec());
        Ok(self.push(Op::GatherRow { a, row }, value))
    }

    /// Row-wise tempered softmax, recorded for differentiation.
    pub fn softmax_tau(&mut self, a: Var, tau: f64) -> Result<Var> {
        let value = tensor::softmax_tau(self.value(a), tau)?;
        Ok(self.push(Op::SoftmaxTau { a, tau }, value))
    }

    /// Mean squared error between two same-shape tensors; scalar output.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (vp, vt) = (self.value(pred), self.value(target));
        if vp.shape() != vt.shape() {
            return Err(Error::Shape(format!(
                "mse of {:?} and {:?}",
                vp.shape(),
                vt.shape()
            )));
        }
        let n = vp.numel() as f64;
        let s: f64 = vp
            .data()
            .iter()
            .zip(vt.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(Op::Mse { pred, target }, Tensor::scalar(s / n)))
    }

    /// Sum of all elements; scalar output.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum { a }, Tensor::scalar(s))
    }

    /// Straight-through compose: forward value is `hard` exactly; the backward
    /// pass routes the incoming adjoint unchanged to `soft`. `hard` gets no
    /// gradient.
    pub fn straight_through(&mut self, hard: Var, soft: Var) -> Result<Var> {
        let (vh, vs) = (self.value(hard), self.value(soft));
        if vh.shape() != vs.shape() {
            return Err(Error::Shape(format!(
                "straight-through of {:?} and {:?}",
                vh.shape(),
                vs.shape()
            )));
        }
        let value = vh.clone();
        Ok(self.push(Op::StraightThrough { soft }, value))
    }

    /// Convenience: ⟨a, b⟩ as mul + sum.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let m = self.mul(a, b)?;
        Ok(self.sum(m))
    }

    /// Convenience: mean of all elements as sum × 1/n.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Reverse sweep from a scalar root. Adjoints are re-zeroed first, so
    /// repeated calls yield identical results.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].value.numel() != 1 {
            return Err(Error::Rank(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        for node in &mut self.nodes {
            node.adjoint.iter_mut().for_each(|a| *a = 0.0);
        }
        self.nodes[root.0].adjoint[0] = 1.0;

        for idx in (0..=root.0).rev() {
            // Take the adjoint out to appease the borrow checker while
            // scattering into parents.
            let upstream = std::mem::take(&mut self.nodes[idx].adjoint);
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Add { a, b, broadcast } => {
                    let (a, b, broadcast) = (*a, *b, *broadcast);
                    for (ga, &u) in self.nodes[a.0].adjoint.iter_mut().zip(&upstream) {
                        *ga += u;
                    }
                    if broadcast {
                        let cols = self.nodes[b.0].value.numel();
                        for (i, &u) in upstream.iter().enumerate() {
                            self.nodes[b.0].adjoint[i % cols] += u;
                        }
                    } else {
                        for (gb, &u) in self.nodes[b.0].adjoint.iter_mut().zip(&upstream) {
                            *gb += u;
                        }
                    }
                }
                Op::Matmul { a, b } => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                    let n = self.nodes[b.0].value.cols();
                    // dA = U · Bᵀ
                    {
                        let bval = self.nodes[b.0].value.data().to_vec();
                        let ga = &mut self.nodes[a.0].adjoint;
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += upstream[i * n + j] * bval[p * n + j];
                                }
                                ga[i * k + p] += s;
                            }
                        }
                    }
                    // dB = Aᵀ · U
                    {
                        let aval = self.nodes[a.0].value.data().to_vec();
                        let gb = &mut self.nodes[b.0].adjoint;
                        for i in 0..m {
                            for p in 0..k {
                                let apk = aval[i * k + p];
                                if apk == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    gb[p * n + j] += apk * upstream[i * n + j];
                                }
                            }
                        }
                    }
                }
                Op::Relu { a } => {
                    let a = *a;
                    let mask: Vec<bool> =
                        self.nodes[a.0].value.data().iter().map(|&x| x > 0.0).collect();
                    for ((ga, &u), keep) in
                        self.nodes[a.0].adjoint.iter_mut().zip(&upstream).zip(mask)
                    {
                        if keep {
                            *ga += u;
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let bval = self.nodes[b.0].value.data().to_vec();
                    for ((ga, &u), bv) in
                        self.nodes[a.0].adjoint.iter_mut().zip(&upstream).zip(&bval)
                    {
                        *ga += u * bv;
                    }
                    let aval = self.nodes[a.0].value.data().to_vec();
                    for ((gb, &u), av) in
                        self.nodes[b.0].adjoint.iter_mut().zip(&upstream).zip(&aval)
                    {
                        *gb += u * av;
                    }
                }
                Op::Scale { a, c } => {
                    let (a, c) = (*a, *c);
                    for (ga, &u) in self.nodes[a.0].adjoint.iter_mut().zip(&upstream) {
                        *ga += u * c;
                    }
                }
                Op::ConcatCols { parts } => {
                    let parts = parts.clone();
                    let rank = self.nodes[parts[0].0].value.rank();
                    if rank == 1 {
                        let mut off = 0;
                        for p in parts {
                            let n = self.nodes[p.0].value.numel();
                            for (gp, &u) in self.nodes[p.0]
                                .adjoint
                                .iter_mut()
                                .zip(&upstream[off..off + n])
                            {
                                *gp += u;
                            }
                            off += n;
                        }
                    } else {
                        let rows = self.nodes[parts[0].0].value.rows();
                        let total_cols: usize =
                            parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
                        let mut off = 0;
                        for p in parts {
                            let c = self.nodes[p.0].value.cols();
                            for r in 0..rows {
                                let src = &upstream[r * total_cols + off..r * total_cols + off + c];
                                for (gp, &u) in self.nodes[p.0].adjoint[r * c..(r + 1) * c]
                                    .iter_mut()
                                    .zip(src)
                                {
                                    *gp += u;
                                }
                            }
                            off += c;
                        }
                    }
                }
                Op::GatherRow { a, row } => {
                    let (a, row) = (*a, *row);
                    let c = self.nodes[a.0].value.cols();
                    for (gp, &u) in self.nodes[a.0].adjoint[row * c..(row + 1) * c]
                        .iter_mut()
                        .zip(&upstream)
                    {
                        *gp += u;
                    }
                }
                Op::SoftmaxTau { a, tau } => {
                    let (a, tau) = (*a, *tau);
                    let s = self.nodes[idx].value.clone();
                    let cols = s.cols();
                    let ga = &mut self.nodes[a.0].adjoint;
                    for r in 0..s.rows() {
                        let srow = s.row(r);
                        let urow = &upstream[r * cols..(r + 1) * cols];
                        let us: f64 = tensor::dot(urow, srow);
                        for j in 0..cols {
                            ga[r * cols + j] += srow[j] * (urow[j] - us) / tau;
                        }
                    }
                }
                Op::Mse { pred, target } => {
                    let (pred, target) = (*pred, *target);
                    let u = upstream[0];
                    let n = self.nodes[pred.0].value.numel() as f64;
                    let diff: Vec<f64> = self.nodes[pred.0]
                        .value
                        .data()
                        .iter()
                        .zip(self.nodes[target.0].value.data())
                        .map(|(p, t)| p - t)
                        .collect();
                    for (gp, d) in self.nodes[pred.0].adjoint.iter_mut().zip(&diff) {
                        *gp += u * 2.0 * d / n;
                    }
                    for (gt, d) in self.nodes[target.0].adjoint.iter_mut().zip(&diff) {
                        *gt -= u * 2.0 * d / n;
                    }
                }
                Op::Sum { a } => {
                    let a = *a;
                    let u = upstream[0];
                    for ga in self.nodes[a.0].adjoint.iter_mut() {
                        *ga += u;
                    }
                }
                Op::StraightThrough { soft } => {
                    let soft = *soft;
                    for (gs, &u) in self.nodes[soft.0].adjoint.iter_mut().zip(&upstream) {
                        *gs += u;
                    }
                }
            }
            self.nodes[idx].adjoint = upstream;
        }
        Ok(())
    }
}

/// Max over coordinates of |analytic − central difference| relative to the
/// central difference, for a scalar function of one tensor. The function is
/// re-evaluated at x ± h·e_j; it must be smooth there (argmax-style
/// discontinuities are out of contract).
pub fn finite_diff_check(
    f: impl Fn(&Tensor) -> f64,
    analytic: &Tensor,
    x: &Tensor,
    h: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..x.numel() {
        let mut xp = x.clone();
        xp.data_mut()[j] += h;
        let mut xm = x.clone();
        xm.data_mut()[j] -= h;
        let central = (f(&xp) - f(&xm)) / (2.0 * h);
        let rel = (analytic.data()[j] - central).abs() / (central.abs() + 1e-12);
        worst = worst.max(rel);
    }
    worst
}
