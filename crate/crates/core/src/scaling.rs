//! Rescalings `u(r·x + x₀)/r^β` and the scaling-law measurements built on them.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freeboundary::{FreeBoundarySet, PointClass};
use crate::grid::{hessian_central, Grid, ScalarField};
use crate::operators::{direction_lattice, halfspace_coefficient, halfspace_value, rescale_operator, OperatorSpec};
use crate::params::Params;

pub const REFERENCE_N: usize = 129;
pub const REFERENCE_HALF_WIDTH: f64 = 1.1;
pub const DIRECTION_COUNT: usize = 720;

/// A blow-up rescaling sampled on the fixed reference grid.
#[derive(Debug, Clone)]
pub struct Rescaling {
    pub center: Vec<f64>,
    pub r: f64,
    pub beta: f64,
    /// Governing operator of the rescaled problem (identical for homogeneous kinds).
    pub operator: OperatorSpec,
    pub target: ScalarField,
    /// `(h_source / r)²`, the relative size of the interpolation error.
    pub interpolation_scale: f64,
}

pub fn reference_grid(dim: usize) -> Grid {
    let w = REFERENCE_HALF_WIDTH;
    let n = [REFERENCE_N; 2];
    Grid::new(dim, &[-w, -w][..dim], &[w, w][..dim], &n[..dim]).expect("valid reference grid")
}

/// Reference points in the closed unit ball.
fn unit_ball(grid: &Grid) -> Vec<usize> {
    grid.ball_indices(&[0.0, 0.0], 1.0)
}

/// `B_r(x₀)` must lie in the domain and `r ≥ 4h`. Reference points outside
/// the domain (beyond `B_1`) sample the nearest domain point.
pub fn rescale(u: &ScalarField, x0: &[f64], r: f64, params: &Params, operator: &OperatorSpec) -> Result<Rescaling> {
    let src = u.grid();
    let dim = src.dim();
    let h = src.h_max();
    if !(r >= 4.0 * h * (1.0 - 1e-12)) {
        return Err(Error::Resolution(format!("rescaling radius {r} is below 4h = {}", 4.0 * h)));
    }
    if src.distance_to_boundary(x0) < r * (1.0 - 1e-12) {
        return Err(Error::Geometry(format!("B_{r}({x0:?}) escapes the domain")));
    }
    let beta = params.beta();
    let scale = r.powf(-beta);
    let reference = reference_grid(dim);
    let values: Vec<f64> = (0..reference.len())
        .into_par_iter()
        .map(|i| {
            let y = reference.coord(i);
            let mut x = [0.0; 2];
            for a in 0..dim {
                x[a] = (x0[a] + r * y[a]).clamp(src.lo()[a], src.hi()[a]);
            }
            scale * u.interpolate(&x[..dim]).expect("clamped into the box")
        })
        .collect();
    Ok(Rescaling {
        center: x0[..dim].to_vec(),
        r,
        beta,
        operator: rescale_operator(operator, r, beta)?,
        target: ScalarField::new(reference, values)?,
        interpolation_scale: (h / r).powi(2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    pub center: Vec<f64>,
    pub slope: f64,
    pub stderr: f64,
    pub radii: Vec<f64>,
    pub sups: Vec<f64>,
}

/// Least-squares slope of `log sup_{B_r(x₀)} u` against `log r` over dyadic
/// radii from `r_max` (default: a quarter of the inradius) down to `8h`.
pub fn fit_growth_exponent(u: &ScalarField, x0: &[f64], r_max: Option<f64>) -> Result<GrowthFit> {
    let grid = u.grid();
    let h = grid.h_max();
    let mut r = r_max.unwrap_or(0.25 * grid.inradius());
    let (mut radii, mut sups) = (Vec::new(), Vec::new());
    while r >= 8.0 * h * (1.0 - 1e-12) {
        let s = grid.ball_indices(x0, r).iter().map(|&i| u.get(i)).fold(0.0, f64::max);
        if s > 0.0 {
            radii.push(r);
            sups.push(s);
        }
        r *= 0.5;
    }
    if radii.len() < 4 {
        return Err(Error::Resolution(format!(
            "growth fit needs 4 dyadic radii with positive sup in [8h, R0], found {}",
            radii.len()
        )));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
    let (slope, stderr) = linear_regression(&xs, &ys);
    Ok(GrowthFit { center: x0[..grid.dim()].to_vec(), slope, stderr, radii, sups })
}

fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let stderr = if xs.len() > 2 { (sse / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, stderr)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackSample {
    pub center: Vec<f64>,
    pub radius: f64,
    pub constant: f64,
}

/// `sup_{B_{R/2}} u / (inf_{B_{R/2}} u + R^β)`; requires `B_R(center)` in the domain.
pub fn harnack_constant(u: &ScalarField, center: &[f64], radius: f64, params: &Params) -> Result<f64> {
    let grid = u.grid();
    if !(radius > 0.0) || grid.distance_to_boundary(center) < radius * (1.0 - 1e-12) {
        return Err(Error::Geometry(format!("B_{radius}({center:?}) escapes the domain")));
    }
    let ball = grid.ball_indices(center, 0.5 * radius);
    let sup = ball.iter().map(|&i| u.get(i)).fold(f64::NEG_INFINITY, f64::max);
    let inf = ball.iter().map(|&i| u.get(i)).fold(f64::INFINITY, f64::min);
    Ok(sup / (inf + radius.powf(params.beta())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianRatio {
    pub sup: f64,
    /// `None` when the positivity set has no point with a full stencil.
    pub argmax: Option<Vec<f64>>,
    pub samples: usize,
}

/// Max of `‖D²u‖ / u^{γ−1}` over points at distance `≥ margin` from the
/// domain boundary whose whole central stencil lies in `{u > τ}`. The bound
/// is an interior estimate: data vanishing at a slower rate than `dist^β`
/// makes the ratio blow up at the boundary.
pub fn hessian_ratio_sup(u: &ScalarField, params: &Params, tau: f64, margin: f64) -> HessianRatio {
    let grid = u.grid();
    let offsets: &[[i64; 2]] = if grid.dim() == 1 {
        &[[0, 0], [1, 0], [-1, 0]]
    } else {
        &[[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]]
    };
    let best = grid
        .interior_indices()
        .into_par_iter()
        .filter(|&i| grid.distance_to_boundary(&grid.coord(i)[..grid.dim()]) >= margin)
        .filter(|&i| offsets.iter().all(|&o| grid.offset(i, o).is_some_and(|q| u.get(q) > tau)))
        .map(|i| {
            let m = hessian_central(u, i).expect("interior point");
            (m.spectral_norm() / params.rhs(u.get(i)), i)
        })
        .collect::<Vec<_>>();
    let samples = best.len();
    let top = best.into_iter().fold(None::<(f64, usize)>, |acc, (v, i)| match acc {
        Some((w, j)) if w > v || (w == v && j < i) => Some((w, j)),
        _ => Some((v, i)),
    });
    match top {
        Some((sup, i)) => HessianRatio { sup, argmax: Some(grid.coord(i)[..grid.dim()].to_vec()), samples },
        None => HessianRatio { sup: 0.0, argmax: None, samples: 0 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileFit {
    pub distance: f64,
    pub direction: Vec<f64>,
}

/// Smallest L∞ distance on the reference `B_1` between the rescaling and a
/// half-space profile, over the direction lattice.
pub fn profile_distance(resc: &Rescaling, params: &Params) -> Result<ProfileFit> {
    let grid = resc.target.grid();
    let ball = unit_ball(grid);
    let dirs = direction_lattice(grid.dim(), DIRECTION_COUNT);
    let coeffs =
        dirs.iter().map(|e| halfspace_coefficient(&resc.operator, params.gamma(), e)).collect::<Result<Vec<f64>>>()?;
    let beta = params.beta();
    let dists: Vec<f64> = dirs
        .par_iter()
        .zip(coeffs.par_iter())
        .map(|(e, &c)| {
            ball.iter()
                .map(|&i| (resc.target.get(i) - halfspace_value(c, beta, e, &grid.coord(i))).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let (k, &distance) = dists
        .iter()
        .enumerate()
        .fold(None::<(usize, &f64)>, |acc, (k, d)| match acc {
            Some((j, b)) if b <= d => Some((j, b)),
            _ => Some((k, d)),
        })
        .expect("nonempty lattice");
    Ok(ProfileFit { distance, direction: dirs[k].clone() })
}

/// Smallest eigenvalue of the central Hessian of the target over reference
/// points of `B_1`.
pub fn convexity_margin(resc: &Rescaling) -> f64 {
    let t = &resc.target;
    let g = t.grid();
    unit_ball(g)
        .into_iter()
        .filter(|&i| !g.is_boundary(i))
        .map(|i| hessian_central(t, i).expect("interior point").min_eigenvalue())
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCone {
    pub axis: Vec<f64>,
    pub delta: f64,
    pub worst: f64,
    pub directions: usize,
}

/// Worst centered directional difference of the target over reference
/// points of `B_{1/2}`, for lattice directions `e` with `e·axis ≥ δ`.
pub fn monotonicity_cone(resc: &Rescaling, axis: &[f64], delta: f64) -> MonotonicityCone {
    let t = &resc.target;
    let g = t.grid();
    let dim = g.dim();
    let s = g.h_max();
    let pts = g.ball_indices(&[0.0, 0.0], 0.5);
    let dirs: Vec<Vec<f64>> = direction_lattice(dim, DIRECTION_COUNT)
        .into_iter()
        .filter(|e| e.iter().zip(axis).map(|(a, b)| a * b).sum::<f64>() >= delta)
        .collect();
    let worst = dirs
        .par_iter()
        .map(|e| {
            pts.iter()
                .map(|&i| {
                    let x = g.coord(i);
                    let mut p = [0.0; 2];
                    let mut m = [0.0; 2];
                    for a in 0..dim {
                        p[a] = x[a] + s * e[a];
                        m[a] = x[a] - s * e[a];
                    }
                    let up = t.interpolate(&p[..dim]).expect("inside reference box");
                    let dn = t.interpolate(&m[..dim]).expect("inside reference box");
                    (up - dn) / (2.0 * s)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    MonotonicityCone { axis: axis.to_vec(), delta, worst, directions: dirs.len() }
}

/// Regular boundary point with an available interface-offset estimate whose
/// `B_{r_max}` fits in the domain, closest to the fitted interface; ties go to
/// the first point in list order.
pub fn select_blowup_point(fb: &FreeBoundarySet, grid: &Grid, r_max: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in fb.points.iter().enumerate() {
        if p.class != PointClass::Regular || grid.distance_to_boundary(&p.coord) < r_max {
            continue;
        }
        let Some(off) = p.normal.as_ref().and_then(|n| n.offset) else { continue };
        if best.is_none_or(|(_, b)| off.abs() < b) {
            best = Some((k, off.abs()));
        }
    }
    best.map(|(k, _)| k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupSample {
    pub r: f64,
    pub distance: f64,
    pub direction: Vec<f64>,
    pub convexity_margin: f64,
    pub interpolation_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianRatioEntry {
    pub n: usize,
    pub sup: f64,
    pub tau: f64,
    pub margin: f64,
    pub samples: usize,
}

/// Every scaling measurement of one experiment, with the radii and
/// thresholds it used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub beta: f64,
    pub threshold: f64,
    pub beta_fit: Option<GrowthFit>,
    pub harnack_constants: Vec<HarnackSample>,
    pub hessian_ratio_sup: Vec<HessianRatioEntry>,
    pub blowup_center: Option<Vec<f64>>,
    pub blowup_normal: Option<Vec<f64>>,
    pub profile_distances: Vec<BlowupSample>,
    pub convexity_margin: Option<f64>,
    pub monotonicity_cone: Option<MonotonicityCone>,
    pub normal_oscillation: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}
