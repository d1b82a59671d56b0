//! Sparse linear algebra for the frozen-policy systems: CSR storage, a
//! Thomas solver for 1D tridiagonal systems and Jacobi-preconditioned
//! BiCGSTAB for 2D.
//!
//! Reductions are split into fixed-size chunks and summed in order, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

const CHUNK: usize = 4096;

#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz = rows.iter().map(|r| r.len()).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for r in rows {
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().cloned().zip(self.vals[a..b].iter().cloned())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).find(|&(c, _)| c == i).map(|(_, v)| v).unwrap_or(0.0)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        });
    }

    /// `b − A x`.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n];
        self.matvec(x, &mut r);
        r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
        r
    }

    /// Bandwidth-one test: every entry within one column of the diagonal.
    pub fn is_tridiagonal(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(c, _)| c + 1 >= i && c <= i + 1))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> =
        a.par_chunks(CHUNK).zip(b.par_chunks(CHUNK)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    partial.iter().sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Thomas algorithm. Stable without pivoting for the diagonally dominant
/// M-matrices produced by the monotone scheme.
pub fn solve_tridiagonal(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        for (c, v) in a.row(i) {
            if c + 1 == i {
                lower[i] = v;
            } else if c == i {
                diag[i] = v;
            } else if c == i + 1 {
                upper[i] = v;
            } else {
                return Err(Error::Numerical {
                    message: format!("row {i} is not tridiagonal"),
                    policy_snapshot: Vec::new(),
                });
            }
        }
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for i in 0..n {
        let denom = diag[i] - if i > 0 { lower[i] * cp[i - 1] } else { 0.0 };
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Numerical {
                message: format!("zero pivot at row {i} in tridiagonal solve"),
                policy_snapshot: Vec::new(),
            });
        }
        cp[i] = upper[i] / denom;
        dp[i] = (b[i] - if i > 0 { lower[i] * dp[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = dp[i] - if i + 1 < n { cp[i] * x[i + 1] } else { 0.0 };
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Final true residual, `‖b − Ax‖_∞`.
    pub residual: f64,
}

/// Jacobi-preconditioned BiCGSTAB, warm-started from `x`, stopping when the
/// true residual satisfies `‖b − Ax‖_∞ ≤ tol`.
pub fn bicgstab(a: &SparseMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<KrylovStats> {
    let n = a.n();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = a.residual(x, b);
    let mut res = norm_inf(&r);
    if res <= tol {
        return Ok(KrylovStats { iterations: 0, residual: res });
    }
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut restarts = 0;
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // breakdown: restart from the current residual
            restarts += 1;
            if restarts > 50 {
                return Err(Error::Numerical {
                    message: format!("BiCGSTAB breakdown after {it} iterations, residual {res:e}"),
                    policy_snapshot: Vec::new(),
                });
            }
            r = a.residual(x, b);
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .zip(r.par_iter().zip(v.par_iter()))
            .for_each(|(pi, (ri, vi))| *pi = ri + beta * (*pi - omega * vi));
        y.par_iter_mut().zip(p.par_iter().zip(inv_diag.par_iter())).for_each(|(yi, (pi, di))| *yi = pi * di);
        a.matvec(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            omega = 0.0;
            continue;
        }
        alpha = rho / denom;
        s.par_iter_mut().zip(r.par_iter().zip(v.par_iter())).for_each(|(si, (ri, vi))| *si = ri - alpha * vi);
        z.par_iter_mut().zip(s.par_iter().zip(inv_diag.par_iter())).for_each(|(zi, (si, di))| *zi = si * di);
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        x.par_iter_mut().zip(y.par_iter().zip(z.par_iter())).for_each(|(xi, (yi, zi))| *xi += alpha * yi + omega * zi);
        r.par_iter_mut().zip(s.par_iter().zip(t.par_iter())).for_each(|(ri, (si, ti))| *ri = si - omega * ti);
        res = norm_inf(&r);
        if res <= tol {
            // confirm against the true residual
            let true_r = a.residual(x, b);
            res = norm_inf(&true_r);
            if res <= tol {
                return Ok(KrylovStats { iterations: it, residual: res });
            }
            r = true_r;
        }
    }
    Err(Error::Numerical {
        message: format!("BiCGSTAB did not reach {tol:e} in {max_iter} iterations (residual {res:e})"),
        policy_snapshot: Vec::new(),
    })
}
