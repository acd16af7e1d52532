//! Dense row-major tensors (f64) and the plain, non-recorded math used by
//! target networks, greedy evaluation, and test oracles.

use crate::error::{Error, Result};

/// Dense row-major tensor of 64-bit floats. Rank 1 and 2 are the only ranks
/// the library constructs.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero dimension in shape {shape:?}")));
        }
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor { shape: vec![n], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { shape: vec![1], data: vec![x] }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Number of rows when viewed as a matrix; a vector counts as one row.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Row length: last dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// C[m,n] = A[m,k] · B[k,n].
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Shape(format!(
            "matmul of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, _k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &apk) in arow.iter().enumerate() {
            let brow = &b.data()[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += apk * bv;
            }
        }
    }
    Tensor::matrix(m, n, out)
}

/// a + b where b is either the same shape or a rank-1 row broadcast over a
/// rank-2 a (the bias case).
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        return Ok(Tensor { shape: a.shape.clone(), data });
    }
    if a.rank() == 2 && b.rank() == 1 && a.cols() == b.cols() {
        let mut data = a.data.clone();
        for r in 0..a.rows() {
            for (d, &bv) in data[r * a.cols()..(r + 1) * a.cols()].iter_mut().zip(b.data()) {
                *d += bv;
            }
        }
        return Ok(Tensor { shape: a.shape.clone(), data });
    }
    Err(Error::Shape(format!("add of {:?} and {:?}", a.shape(), b.shape())))
}

pub fn relu(a: &Tensor) -> Tensor {
    a.map(|x| if x > 0.0 { x } else { 0.0 })
}

/// Row-wise tempered softmax, softmax(x/tau), computed with max-subtraction.
pub fn softmax_tau(x: &Tensor, tau: f64) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    if !x.is_finite() {
        return Err(Error::InvalidInput("softmax input must be finite".into()));
    }
    let cols = x.cols();
    let mut data = vec![0.0; x.numel()];
    for r in 0..x.rows() {
        let row = x.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let out = &mut data[r * cols..(r + 1) * cols];
        let mut z = 0.0;
        for (o, &v) in out.iter_mut().zip(row) {
            *o = ((v - m) / tau).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }
    Ok(Tensor { shape: x.shape.clone(), data })
}

/// Index of the maximum element; ties break toward the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(n: usize, index: usize) -> Tensor {
    let mut data = vec![0.0; n];
    data[index] = 1.0;
    Tensor::vector(data)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Concatenate along the last axis: all rank-1, or all rank-2 with equal row
/// counts.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::EmptyInput("concat of zero tensors".into()));
    }
    let rank = parts[0].rank();
    if parts.iter().any(|p| p.rank() != rank) {
        return Err(Error::Shape("concat with mixed ranks".into()));
    }
    if rank == 1 {
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(p.data());
        }
        return Ok(Tensor::vector(data));
    }
    let rows = parts[0].rows();
    if parts.iter().any(|p| p.rows() != rows) {
        return Err(Error::Shape("concat with unequal row counts".into()));
    }
    let total_cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(rows * total_cols);
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Tensor::matrix(rows, total_cols, data)
}
