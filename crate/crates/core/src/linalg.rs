//! Row-major dense matrices and the JSON block format used by parameter files.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self * x + bias`
    pub fn affine(&self, x: &[f64], bias: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| bias[r] + dot(self.row(r), x)).collect()
    }

    /// `self^T * v`
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += vr * w;
            }
        }
        out
    }

    /// `self += scale * a b^T`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let s = scale * ar;
            if s == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, &bc) in row.iter_mut().zip(b) {
                *x += s * bc;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A parameter block as stored on disk: explicit shape plus row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Block {
    pub fn from_matrix(m: &Matrix) -> Self {
        Block {
            shape: vec![m.rows, m.cols],
            values: m.data.clone(),
        }
    }

    pub fn from_vector(v: &[f64]) -> Self {
        Block {
            shape: vec![v.len()],
            values: v.to_vec(),
        }
    }

    pub fn into_matrix(self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        if self.shape != [rows, cols] || self.values.len() != rows * cols {
            return Err(Error::InvalidConfig(vec![format!(
                "{name}: expected shape [{rows}, {cols}], found {:?} with {} values",
                self.shape,
                self.values.len()
            )]));
        }
        Ok(Matrix::from_vec(rows, cols, self.values))
    }

    pub fn into_vector(self, name: &str, len: usize) -> Result<Vec<f64>> {
        if self.shape != [len] || self.values.len() != len {
            return Err(Error::InvalidConfig(vec![format!(
                "{name}: expected shape [{len}], found {:?} with {} values",
                self.shape,
                self.values.len()
            )]));
        }
        Ok(self.values)
    }
}
