//! Dense row-major matrices, a stable softmax, and the central-difference
//! gradient oracle used to certify every analytic gradient in this crate.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: left is {lr}x{lc}, right is {rr}x{rc}")]
    DimMismatch { lr: usize, lc: usize, rr: usize, rc: usize },
    #[error("shape mismatch: expected {er}x{ec}, got {gr}x{gc}")]
    ShapeMismatch { er: usize, ec: usize, gr: usize, gc: usize },
    #[error("softmax input is empty")]
    EmptySoftmax,
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("data length {len} does not equal rows*cols = {expected}")]
    BadDataLength { len: usize, expected: usize },
}

/// Dense `rows x cols` matrix of `f64` in row-major order.
///
/// All numeric state in this crate (token grids, embedding tables, slot
/// dispatchers, decoder weights) is carried by this one type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::BadDataLength { len: data.len(), expected: rows * cols });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(NumericsError::NonFinite { context: "matrix construction" });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(NumericsError::ShapeMismatch { er: r, ec: c, gr: r, gc: row.len() });
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Entries drawn i.i.d. uniform in `[-scale, scale)`.
    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Standard matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimMismatch {
                lr: self.rows,
                lc: self.cols,
                rr: other.rows,
                rc: other.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let lhs = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(lhs) {
                    *d += a * b;
                }
            }
        }
        if !out.data.iter().all(|v| v.is_finite()) {
            return Err(NumericsError::NonFinite { context: "matmul output" });
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NumericsError::ShapeMismatch {
                er: self.rows,
                ec: self.cols,
                gr: other.rows,
                gc: other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let data = self.data.iter().map(|v| v * s).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Numerically stable softmax: shifts by the maximum before exponentiating.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if v.is_empty() {
        return Err(NumericsError::EmptySoftmax);
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(NumericsError::NonFinite { context: "softmax input" });
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Central-difference gradient estimate of a scalar function of a matrix:
/// `(f(x + h*e) - f(x - h*e)) / 2h` per entry.
///
/// This is the shared oracle that analytic gradients are checked against;
/// it must stay independent of any implementation it certifies.
pub fn fd_gradient<F>(f: F, x: &Matrix, h: f64) -> Result<Matrix, NumericsError>
where
    F: Fn(&Matrix) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.data.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let f_plus = f(&probe);
        probe.data[i] = orig - h;
        let f_minus = f(&probe);
        probe.data[i] = orig;
        if !f_plus.is_finite() || !f_minus.is_finite() {
            return Err(NumericsError::NonFinite { context: "fd_gradient function value" });
        }
        grad.data[i] = (f_plus - f_minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Default step size for [`fd_gradient`].
pub const FD_STEP: f64 = 1e-5;

/// max_i |a_i - b_i| / max(1, |a_i|, |b_i|), the relative error used by all
/// gradient certifications.
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "max_rel_error requires equal lengths");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / 1.0_f64.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}
