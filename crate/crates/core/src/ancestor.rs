//! Ancestor-prediction head.
//!
//! Given query features `Q` (N x C) the head predicts
//! `P = sigmoid((Q W1)(Q W2)^T / sqrt(C))`, where `P[j][i]` is the probability
//! that mask `j` is an ancestor of mask `i`. Two separate projections let the
//! relation be asymmetric. Training uses mean binary cross-entropy over all
//! N^2 entries, diagonal included (targeted at 0).

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch { left: data.len(), right: rows * cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::LengthMismatch { left: r.len(), right: cols });
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).take(self.rows).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { left: self.shape(), right: other.shape() });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other[(k, c)];
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch { left: self.shape(), right: other.shape() });
        }
        Ok(Matrix::from_fn(self.rows, other.rows, |r, c| {
            (0..self.cols).map(|k| self[(r, k)] * other[(c, k)]).sum()
        }))
    }

    fn scale(mut self, s: f64) -> Matrix {
        self.data.iter_mut().for_each(|v| *v *= s);
        self
    }

    fn add(mut self, other: &Matrix) -> Matrix {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        self
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Two square projections of the query dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AncestorHead {
    w1: Matrix,
    w2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Matrix,
    pub w2: Matrix,
    pub q: Matrix,
}

impl AncestorHead {
    pub fn new(w1: Matrix, w2: Matrix) -> Result<Self> {
        if w1.rows != w1.cols || w1.shape() != w2.shape() {
            return Err(Error::DimensionMismatch { left: w1.shape(), right: w2.shape() });
        }
        if let Some(index) = w1.data.iter().chain(&w2.data).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { w1, w2 })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { w1: Matrix::zeros(dim, dim), w2: Matrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.w1.rows
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }

    fn check_queries(&self, q: &Matrix) -> Result<()> {
        if q.cols != self.dim() {
            return Err(Error::DimensionMismatch { left: q.shape(), right: self.w1.shape() });
        }
        if let Some(index) = q.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(())
    }

    /// Pre-sigmoid scores `(Q W1)(Q W2)^T / sqrt(C)`.
    pub fn logits(&self, q: &Matrix) -> Result<Matrix> {
        self.check_queries(q)?;
        let a = q.matmul(&self.w1)?;
        let b = q.matmul(&self.w2)?;
        Ok(a.matmul_t(&b)?.scale(1.0 / libm::sqrt(self.dim() as f64)))
    }

    pub fn forward(&self, q: &Matrix) -> Result<Matrix> {
        let mut z = self.logits(q)?;
        z.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok(z)
    }

    /// Exact gradients of `bce_loss(forward(q), target)` with respect to
    /// `W1`, `W2` and `Q`. Entries where the clamp is active contribute no
    /// gradient, matching the clamped loss.
    pub fn backward(&self, q: &Matrix, target: &Matrix) -> Result<Gradients> {
        let n = q.rows;
        if target.shape() != (n, n) {
            return Err(Error::DimensionMismatch { left: target.shape(), right: (n, n) });
        }
        let a = q.matmul(&self.w1)?;
        let b = q.matmul(&self.w2)?;
        let p = self.forward(q)?;
        let count = (n * n) as f64;
        let inv_sqrt_c = 1.0 / libm::sqrt(self.dim() as f64);
        // dL/dZ scaled by 1/sqrt(C), folding in the logit scale.
        let dz = Matrix::from_fn(n, n, |r, c| {
            let pr = p[(r, c)];
            if pr <= BCE_EPS || pr >= 1.0 - BCE_EPS {
                0.0
            } else {
                (pr - target[(r, c)]) / count * inv_sqrt_c
            }
        });
        let da = dz.matmul(&b)?;
        let db = dz.transpose().matmul(&a)?;
        let qt = q.transpose();
        let dw1 = qt.matmul(&da)?;
        let dw2 = qt.matmul(&db)?;
        let dq = da.matmul(&self.w1.transpose())?.add(&db.matmul(&self.w2.transpose())?);
        Ok(Gradients { w1: dw1, w2: dw2, q: dq })
    }
}

/// Mean binary cross-entropy over all entries.
pub fn bce_loss(predicted: &Matrix, target: &Matrix) -> Result<f64> {
    if predicted.shape() != target.shape() {
        return Err(Error::DimensionMismatch { left: predicted.shape(), right: target.shape() });
    }
    if predicted.data.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = predicted
        .data
        .iter()
        .zip(&target.data)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(t * libm::log(p) + (1.0 - t) * libm::log(1.0 - p))
        })
        .sum();
    Ok(total / predicted.data.len() as f64)
}
