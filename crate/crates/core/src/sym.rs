use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric matrix of dimension 1 or 2, stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    // (a11, a12, a22); a12 and a22 are zero in 1D
    upper: [f64; 3],
}

impl SymMatrix {
    pub fn new_1d(a: f64) -> Self {
        SymMatrix { dim: 1, upper: [a, 0.0, 0.0] }
    }

    pub fn new_2d(a11: f64, a12: f64, a22: f64) -> Self {
        SymMatrix { dim: 2, upper: [a11, a12, a22] }
    }

    /// Symmetrizes a row-major array, mirroring `(a12 + a21)/2`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        match rows.len() {
            1 if rows[0].len() == 1 => Ok(Self::new_1d(rows[0][0])),
            2 if rows[0].len() == 2 && rows[1].len() == 2 => {
                Ok(Self::new_2d(rows[0][0], 0.5 * (rows[0][1] + rows[1][0]), rows[1][1]))
            }
            n => Err(Error::Shape { expected: 2, got: n }),
        }
    }

    pub fn zero(dim: usize) -> Self {
        SymMatrix { dim, upper: [0.0; 3] }
    }

    pub fn identity(dim: usize) -> Self {
        match dim {
            1 => Self::new_1d(1.0),
            _ => Self::new_2d(1.0, 0.0, 1.0),
        }
    }

    /// Rank-one matrix `e ⊗ e`.
    pub fn outer(e: &[f64]) -> Self {
        match e.len() {
            1 => Self::new_1d(e[0] * e[0]),
            _ => Self::new_2d(e[0] * e[0], e[0] * e[1], e[1] * e[1]),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.upper[0],
            (0, 1) | (1, 0) => self.upper[1],
            (1, 1) => self.upper[2],
            _ => panic!("index ({i},{j}) out of range for {}x{} matrix", self.dim, self.dim),
        }
    }

    pub fn trace(&self) -> f64 {
        match self.dim {
            1 => self.upper[0],
            _ => self.upper[0] + self.upper[2],
        }
    }

    /// `tr(self · other)`.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        let [a, b, c] = self.upper;
        let [p, q, r] = other.upper;
        match self.dim {
            1 => a * p,
            _ => a * p + 2.0 * b * q + c * r,
        }
    }

    /// Eigenvalues in ascending order; the second entry is unused in 1D.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let [a, b, c] = self.upper;
        match self.dim {
            1 => vec![a],
            _ => {
                let mean = 0.5 * (a + c);
                let rad = (0.5 * (a - c)).hypot(b);
                vec![mean - rad, mean + rad]
            }
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0f64, |m, l| m.max(l.abs()))
    }

    pub fn scale(&self, t: f64) -> Self {
        let [a, b, c] = self.upper;
        SymMatrix { dim: self.dim, upper: [t * a, t * b, t * c] }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        let [a, b, c] = self.upper;
        let [p, q, r] = other.upper;
        SymMatrix { dim: self.dim, upper: [a + p, b + q, c + r] }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        match self.dim {
            1 => vec![vec![self.upper[0]]],
            _ => vec![vec![self.upper[0], self.upper[1]], vec![self.upper[1], self.upper[2]]],
        }
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        [[self.upper[0], self.upper[1]], [self.upper[1], self.upper[2]]]
    }
}
