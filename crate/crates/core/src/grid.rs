//! Uniform axis-aligned lattices in one or two dimensions and scalar fields
//! on them.
//!
//! Points are numbered with the first axis fastest: `idx = i + n₀·j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sym::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    n: [usize; 2],
    h: [f64; 2],
}

impl Grid {
    pub fn new(dim: usize, lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Parameter(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if lo.len() != dim || hi.len() != dim || n.len() != dim {
            return Err(Error::Shape { expected: dim, got: lo.len().min(hi.len()).min(n.len()) });
        }
        let mut g = Grid { dim, lo: [0.0; 2], hi: [0.0; 2], n: [1; 2], h: [0.0; 2] };
        for a in 0..dim {
            if n[a] < 3 {
                return Err(Error::Parameter(format!("need at least 3 points per axis, got {}", n[a])));
            }
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(Error::Parameter(format!("axis {a}: need lo < hi, got [{}, {}]", lo[a], hi[a])));
            }
            g.lo[a] = lo[a];
            g.hi[a] = hi[a];
            g.n[a] = n[a];
            g.h[a] = (hi[a] - lo[a]) / (n[a] - 1) as f64;
        }
        Ok(g)
    }

    pub fn new_1d(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(1, &[lo], &[hi], &[n])
    }

    /// Square grid `[lo, hi]²` with `n` points per axis.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(2, &[lo, lo], &[hi, hi], &[n, n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }

    pub fn n(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn h(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    /// Largest spacing over the axes.
    pub fn h_max(&self) -> f64 {
        self.h().iter().cloned().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn split(&self, idx: usize) -> [usize; 2] {
        [idx % self.n[0], idx / self.n[0]]
    }

    pub fn join(&self, ij: [usize; 2]) -> usize {
        ij[0] + self.n[0] * ij[1]
    }

    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.split(idx);
        let x = self.lo[0] + i as f64 * self.h[0];
        let y = if self.dim == 2 { self.lo[1] + j as f64 * self.h[1] } else { 0.0 };
        [x, y]
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let ij = self.split(idx);
        (0..self.dim).any(|a| ij[a] == 0 || ij[a] == self.n[a] - 1)
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_boundary(i)).collect()
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_boundary(i)).collect()
    }

    /// Neighbor at an integer offset (grid steps), if it lies on the grid.
    pub fn offset(&self, idx: usize, off: [i64; 2]) -> Option<usize> {
        let ij = self.split(idx);
        let mut out = [0usize; 2];
        for a in 0..2 {
            let v = ij[a] as i64 + off[a];
            if v < 0 || v >= self.n[a] as i64 {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.join(out))
    }

    /// Axis-neighbors (±1 step along each axis) that exist on the grid.
    pub fn axis_neighbors(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.dim);
        for a in 0..self.dim {
            for s in [-1i64, 1] {
                let mut off = [0i64; 2];
                off[a] = s;
                if let Some(q) = self.offset(idx, off) {
                    out.push(q);
                }
            }
        }
        out
    }

    /// Grid point nearest to `x` (clamped to the box).
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let mut ij = [0usize; 2];
        for a in 0..self.dim {
            let t = ((x[a] - self.lo[a]) / self.h[a]).round();
            ij[a] = t.clamp(0.0, (self.n[a] - 1) as f64) as usize;
        }
        self.join(ij)
    }

    /// Distance from `x` to the nearest face of the box (negative outside).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        (0..self.dim).map(|a| (x[a] - self.lo[a]).min(self.hi[a] - x[a])).fold(f64::INFINITY, f64::min)
    }

    /// Radius of the largest ball inscribed in the box.
    pub fn inradius(&self) -> f64 {
        (0..self.dim).map(|a| 0.5 * (self.hi[a] - self.lo[a])).fold(f64::INFINITY, f64::min)
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim).map(|a| (self.hi[a] - self.lo[a]).powi(2)).sum::<f64>().sqrt()
    }

    /// All indices in the closed Euclidean ball `B_r(center)`.
    pub fn ball_indices(&self, center: &[f64], r: f64) -> Vec<usize> {
        let mut lo_ij = [0usize; 2];
        let mut hi_ij = [0usize; 2];
        for a in 0..2 {
            if a >= self.dim {
                continue;
            }
            let lo_t = ((center[a] - r - self.lo[a]) / self.h[a]).floor().max(0.0);
            let hi_t = ((center[a] + r - self.lo[a]) / self.h[a]).ceil().min((self.n[a] - 1) as f64);
            if hi_t < lo_t {
                return Vec::new();
            }
            lo_ij[a] = lo_t as usize;
            hi_ij[a] = hi_t as usize;
        }
        let r2 = r * r;
        let mut out = Vec::new();
        for j in lo_ij[1]..=hi_ij[1] {
            for i in lo_ij[0]..=hi_ij[0] {
                let idx = self.join([i, j]);
                let x = self.coord(idx);
                let d2: f64 = (0..self.dim).map(|a| (x[a] - center[a]).powi(2)).sum();
                if d2 <= r2 * (1.0 + 1e-12) {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Same lattice spacing doubled in resolution: `n → 2n − 1` per axis.
    pub fn refined(&self) -> Grid {
        let n: Vec<usize> = self.n().iter().map(|&k| 2 * k - 1).collect();
        Grid::new(self.dim, self.lo(), self.hi(), &n).expect("refinement of a valid grid")
    }
}

/// One real value per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Numerical { message: format!("NaN at grid index {i}"), policy_snapshot: Vec::new() });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarField { values: vec![0.0; grid.len()], grid }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField { values: vec![c; grid.len()], grid }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coord(i))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear (linear in 1D) interpolation; `None` outside the box.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let g = &self.grid;
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..g.dim {
            let t = (x[a] - g.lo[a]) / g.h[a];
            let last = (g.n[a] - 1) as f64;
            if !(t >= -1e-9 && t <= last + 1e-9) {
                return None;
            }
            let mut t = t.clamp(0.0, last);
            // snap onto nodes so interpolation at a node returns it exactly
            if (t - t.round()).abs() < 1e-9 {
                t = t.round();
            }
            let b = (t.floor() as usize).min(g.n[a] - 2);
            base[a] = b;
            frac[a] = t - b as f64;
        }
        let v = |i: usize, j: usize| self.values[g.join([i, j])];
        let [i, j] = base;
        let [fx, fy] = frac;
        Some(if g.dim == 1 {
            (1.0 - fx) * v(i, 0) + fx * v(i + 1, 0)
        } else {
            (1.0 - fx) * (1.0 - fy) * v(i, j)
                + fx * (1.0 - fy) * v(i + 1, j)
                + (1.0 - fx) * fy * v(i, j + 1)
                + fx * fy * v(i + 1, j + 1)
        })
    }
}

/// Central second differences at an interior point; mixed derivative by the
/// four-point cross formula.
pub fn hessian_central(u: &ScalarField, idx: usize) -> Result<SymMatrix> {
    let g = u.grid();
    if idx >= g.len() || g.is_boundary(idx) {
        return Err(Error::Index(format!(
            "hessian_central needs an interior index with a full neighborhood, got {idx}"
        )));
    }
    let val = |off: [i64; 2]| u.values[g.offset(idx, off).expect("interior neighborhood")];
    let c = u.values[idx];
    let [hx, hy] = g.h;
    let uxx = (val([1, 0]) - 2.0 * c + val([-1, 0])) / (hx * hx);
    if g.dim == 1 {
        return Ok(SymMatrix::new_1d(uxx));
    }
    let uyy = (val([0, 1]) - 2.0 * c + val([0, -1])) / (hy * hy);
    let uxy = (val([1, 1]) - val([1, -1]) - val([-1, 1]) + val([-1, -1])) / (4.0 * hx * hy);
    Ok(SymMatrix::new_2d(uxx, uxy, uyy))
}

/// Grid indices of `u`'s lattice inside the closed ball `B_r(center)`.
pub fn restrict_to_ball(u: &ScalarField, center: &[f64], r: f64) -> Vec<usize> {
    u.grid().ball_indices(center, r)
}
