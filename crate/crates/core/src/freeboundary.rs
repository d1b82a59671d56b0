//! Contact set, free boundary and its local geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::operators::{min_halfspace_coefficient, OperatorSpec};
use crate::params::Params;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreeBoundaryOptions {
    /// `τ = κ_τ · c_ref · (h/2)^β`.
    pub kappa_tau: f64,
    /// Regular if the contact density at the smallest radius is at least this.
    pub delta_reg: f64,
    /// Least-squares window radius for normals, in cells.
    pub normal_window: f64,
}

impl Default for FreeBoundaryOptions {
    fn default() -> Self {
        FreeBoundaryOptions { kappa_tau: 1.0, delta_reg: 0.1, normal_window: 6.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Regular,
    SingularCandidate,
    /// Too close to the grid scale for a density profile.
    Unresolved,
}

impl PointClass {
    pub fn label(&self) -> &'static str {
        match self {
            PointClass::Regular => "regular",
            PointClass::SingularCandidate => "singular_candidate",
            PointClass::Unresolved => "unresolved",
        }
    }
}

/// Linear fit of the distorted field `u^{1/β}` around a boundary point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalFit {
    /// Unit vector pointing into the positivity set.
    pub normal: Vec<f64>,
    /// Signed distance from the grid point to the zero set of a linear fit
    /// over positivity-set points only, along `normal`.
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub index: usize,
    pub coord: Vec<f64>,
    pub normal: Option<NormalFit>,
    pub class: PointClass,
    pub density_smallest_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeBoundarySet {
    pub threshold: f64,
    /// `u ≤ τ` per grid point.
    pub contact: Vec<bool>,
    /// Lexicographic by grid index.
    pub points: Vec<BoundaryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityProfile {
    pub center: Vec<f64>,
    /// `(r, |B_r ∩ {u ≤ τ}| / |B_r|)` with strictly decreasing `r`.
    pub entries: Vec<(f64, f64)>,
    pub class: PointClass,
}

impl DensityProfile {
    pub fn smallest(&self) -> f64 {
        self.entries.last().map(|e| e.1).unwrap_or(0.0)
    }
}

/// `κ_τ · c_ref · (h/2)^β`, with `c_ref` the smallest half-space coefficient.
pub fn threshold(u: &ScalarField, params: &Params, operator: &OperatorSpec, kappa_tau: f64) -> Result<f64> {
    let c_ref = min_halfspace_coefficient(operator, params.gamma(), u.grid().dim())?;
    Ok(kappa_tau * c_ref * (0.5 * u.grid().h_max()).powf(params.beta()))
}

/// Interior contact points with an axis-neighbor in the positivity set.
pub fn boundary_indices(u: &ScalarField, tau: f64) -> (Vec<bool>, Vec<usize>) {
    let grid = u.grid();
    let contact: Vec<bool> = u.values().iter().map(|&v| v <= tau).collect();
    let pts = grid
        .interior_indices()
        .into_iter()
        .filter(|&i| contact[i] && grid.axis_neighbors(i).iter().any(|&q| !contact[q]))
        .collect();
    (contact, pts)
}

pub fn extract(
    u: &ScalarField,
    params: &Params,
    operator: &OperatorSpec,
    opts: &FreeBoundaryOptions,
) -> Result<FreeBoundarySet> {
    let tau = threshold(u, params, operator, opts.kappa_tau)?;
    let (contact, idxs) = boundary_indices(u, tau);
    let grid = u.grid();
    let dim = grid.dim();
    let mut set = FreeBoundarySet { threshold: tau, contact, points: Vec::with_capacity(idxs.len()) };
    let mut points = Vec::with_capacity(idxs.len());
    for &i in &idxs {
        let normal = normal_estimate(u, params, tau, i, opts.normal_window);
        let (class, dens) = match density_profile(u, &set, i, opts.delta_reg) {
            Ok(p) => (p.class, Some(p.smallest())),
            Err(_) => (PointClass::Unresolved, None),
        };
        points.push(BoundaryPoint {
            index: i,
            coord: grid.coord(i)[..dim].to_vec(),
            normal,
            class,
            density_smallest_r: dens,
        });
    }
    set.points = points;
    Ok(set)
}

/// Contact densities over dyadic radii `R₀, R₀/2, …` down to `8h`, with
/// `R₀` a quarter of the domain inradius.
pub fn density_profile(u: &ScalarField, fb: &FreeBoundarySet, x0: usize, delta_reg: f64) -> Result<DensityProfile> {
    let grid = u.grid();
    let h = grid.h_max();
    let center = grid.coord(x0);
    let mut r = 0.25 * grid.inradius();
    let mut entries = Vec::new();
    while r >= 8.0 * h * (1.0 - 1e-12) {
        let ball = grid.ball_indices(&center, r);
        let hits = ball.iter().filter(|&&i| fb.contact[i]).count();
        entries.push((r, hits as f64 / ball.len() as f64));
        r *= 0.5;
    }
    if entries.len() < 3 {
        return Err(Error::Resolution(format!(
            "only {} dyadic radii between 8h = {} and R0 = {}",
            entries.len(),
            8.0 * h,
            0.25 * grid.inradius()
        )));
    }
    let class =
        if entries.last().unwrap().1 >= delta_reg { PointClass::Regular } else { PointClass::SingularCandidate };
    Ok(DensityProfile { center: center[..grid.dim()].to_vec(), entries, class })
}

/// Normal from the least-squares gradient of `v = u^{1/β}` (zero on the
/// contact set) over `B_{k·h}(x₀)`; unavailable when the window leaves the
/// domain or holds fewer than 5 positivity-set points.
pub fn normal_estimate(u: &ScalarField, params: &Params, tau: f64, x0: usize, window: f64) -> Option<NormalFit> {
    let grid = u.grid();
    let dim = grid.dim();
    let c = grid.coord(x0);
    // a window cut by the domain boundary biases the gradient
    if grid.distance_to_boundary(&c[..dim]) < window * grid.h_max() {
        return None;
    }
    let ball = grid.ball_indices(&c, window * grid.h_max());
    let inv_beta = 1.0 / params.beta();
    let positive: Vec<usize> = ball.iter().cloned().filter(|&i| u.get(i) > tau).collect();
    if positive.len() < 5 {
        return None;
    }
    let sample = |i: usize| {
        let x = grid.coord(i);
        let d: Vec<f64> = (0..dim).map(|a| x[a] - c[a]).collect();
        let v = if u.get(i) > tau { u.get(i).powf(inv_beta) } else { 0.0 };
        (d, v)
    };
    let full = fit_affine(ball.iter().map(|&i| sample(i)), dim)?;
    let grad = &full[1..];
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return None;
    }
    let normal: Vec<f64> = grad.iter().map(|g| g / norm).collect();
    let offset = fit_affine(positive.iter().map(|&i| sample(i)), dim).and_then(|p| {
        let gn = p[1..].iter().map(|g| g * g).sum::<f64>().sqrt();
        (gn > 0.0).then(|| -p[0] / gn)
    });
    Some(NormalFit { normal, offset })
}

/// Least-squares `v ≈ a + g·d`; returns `[a, g…]` or `None` when the normal
/// equations are singular.
fn fit_affine(samples: impl Iterator<Item = (Vec<f64>, f64)>, dim: usize) -> Option<Vec<f64>> {
    let m = dim + 1;
    let mut ata = vec![vec![0.0; m]; m];
    let mut atb = vec![0.0; m];
    let mut count = 0;
    let mut scale: f64 = 0.0;
    for (d, v) in samples {
        let mut row = vec![1.0];
        row.extend_from_slice(&d);
        for p in 0..m {
            for q in 0..m {
                ata[p][q] += row[p] * row[q];
            }
            atb[p] += row[p] * v;
        }
        scale = d.iter().fold(scale, |s, x| s.max(x.abs()));
        count += 1;
    }
    if count < m || scale == 0.0 {
        return None;
    }
    // rescale the offset columns to O(1) before elimination
    for p in 1..m {
        for q in 0..m {
            ata[p][q] /= scale;
            ata[q][p] /= scale;
        }
        atb[p] /= scale;
    }
    let sol = solve_small(ata, atb)?;
    Some(sol.iter().enumerate().map(|(p, s)| if p == 0 { *s } else { s / scale }).collect())
}

fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let norm = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * norm {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    d.clamp(-1.0, 1.0).acos()
}

/// Largest angle between normals of boundary points closer than `rho`.
pub fn normal_oscillation(fb: &FreeBoundarySet, rho: f64) -> f64 {
    let with_normals: Vec<(&[f64], &[f64])> =
        fb.points.iter().filter_map(|p| p.normal.as_ref().map(|n| (p.coord.as_slice(), n.normal.as_slice()))).collect();
    let mut worst: f64 = 0.0;
    for (i, (xa, na)) in with_normals.iter().enumerate() {
        for (xb, nb) in &with_normals[i + 1..] {
            let d2: f64 = xa.iter().zip(xb.iter()).map(|(p, q)| (p - q).powi(2)).sum();
            if d2 <= rho * rho {
                worst = worst.max(angle_between(na, nb));
            }
        }
    }
    worst
}

/// One row per boundary point: `x,(y,)nx,(ny,)class,density_smallest_r`.
pub fn to_csv(fb: &FreeBoundarySet, grid: &Grid) -> String {
    let dim = grid.dim();
    let mut out = String::new();
    out.push_str(if dim == 1 { "x,nx,class,density_smallest_r\n" } else { "x,y,nx,ny,class,density_smallest_r\n" });
    for p in &fb.points {
        let mut cols: Vec<String> = p.coord.iter().map(|v| fmt_num(*v)).collect();
        match &p.normal {
            Some(n) => cols.extend(n.normal.iter().map(|v| fmt_num(*v))),
            None => cols.extend((0..dim).map(|_| String::new())),
        }
        cols.push(p.class.label().to_string());
        cols.push(p.density_smallest_r.map(fmt_num).unwrap_or_default());
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

/// Decimal scientific notation with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}
