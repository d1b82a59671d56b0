//! Nonnegative solutions of `F(D²u) = u^{γ−1}` with Dirichlet data.
//!
//! The outer loop freezes the nonlinearity at the previous iterate and the
//! inner loop is Howard policy iteration on the resulting Bellman problem.
//! In the default [`OuterIteration::LaggedCoefficient`] mode the right-hand
//! side is written as `u^{γ−2}·u` with the coefficient lagged, so each outer
//! step solves the monotone problem `−F_h(v) + s·v = 0` with
//! `s = (u^k + ε)^{γ−2} ≥ 0`. Started from the `F_h`-harmonic extension of
//! the data (a supersolution), the iterates decrease monotonically to the
//! discrete solution.

use serde::{Deserialize, Serialize};

use crate::discretization::DiscreteOperator;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linsolve::{bicgstab, solve_tridiagonal};
use crate::operators::{halfspace_coefficient, halfspace_value, min_halfspace_coefficient, OperatorSpec};
use crate::params::Params;

/// Dirichlet data catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryData {
    Constant {
        value: f64,
    },
    /// Trace of `scale · c_{γ,e}·(x·e)₊^β`.
    Halfspace {
        direction: Vec<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `max(Σ coef·xᵖ·yᵠ, 0)`.
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// `A·Π_i cos²(π(x_i − c_i)/(2w))` on `|x_i − c_i| < w`, zero elsewhere.
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

impl BoundaryData {
    pub fn halfspace(direction: Vec<f64>) -> Self {
        BoundaryData::Halfspace { direction, scale: 1.0 }
    }

    /// Values at every grid point (used on the boundary; the interior values
    /// serve as an oracle where the data is an exact solution).
    pub fn values(&self, grid: &Grid, operator: &OperatorSpec, params: &Params) -> Result<Vec<f64>> {
        let dim = grid.dim();
        let check_len = |v: &[f64], what: &str| {
            if v.len() != dim {
                Err(Error::Shape { expected: dim, got: v.len() }).map_err(|e| match e {
                    Error::Shape { expected, got } => {
                        Error::Parameter(format!("boundary {what} has {got} components, grid dimension is {expected}"))
                    }
                    other => other,
                })
            } else {
                Ok(())
            }
        };
        let vals: Vec<f64> = match self {
            BoundaryData::Constant { value } => vec![*value; grid.len()],
            BoundaryData::Halfspace { direction, scale } => {
                check_len(direction, "direction")?;
                let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                let e: Vec<f64> = direction.iter().map(|v| v / norm).collect();
                let c = halfspace_coefficient(operator, params.gamma(), &e)?;
                (0..grid.len()).map(|i| scale * halfspace_value(c, params.beta(), &e, &grid.coord(i)[..dim])).collect()
            }
            BoundaryData::Polynomial { terms } => {
                for t in terms {
                    check_len(&t.powers.iter().map(|&p| p as f64).collect::<Vec<_>>(), "monomial powers")?;
                }
                (0..grid.len())
                    .map(|i| {
                        let x = grid.coord(i);
                        let v: f64 = terms
                            .iter()
                            .map(|t| {
                                t.coef * t.powers.iter().enumerate().map(|(a, &p)| x[a].powi(p as i32)).product::<f64>()
                            })
                            .sum();
                        v.max(0.0)
                    })
                    .collect()
            }
            BoundaryData::Bump { amplitude, center, width } => {
                check_len(center, "center")?;
                if !(*width > 0.0) {
                    return Err(Error::Parameter(format!("bump width must be positive, got {width}")));
                }
                (0..grid.len())
                    .map(|i| {
                        let x = grid.coord(i);
                        amplitude
                            * (0..dim)
                                .map(|a| {
                                    let t = (x[a] - center[a]) / width;
                                    if t.abs() < 1.0 {
                                        (0.5 * std::f64::consts::PI * t).cos().powi(2)
                                    } else {
                                        0.0
                                    }
                                })
                                .product::<f64>()
                    })
                    .collect()
            }
        };
        if let Some(i) = grid.boundary_indices().into_iter().find(|&i| !(vals[i] >= 0.0)) {
            return Err(Error::Parameter(format!(
                "boundary data must be nonnegative, got {} at {:?}",
                vals[i],
                &grid.coord(i)[..dim]
            )));
        }
        Ok(vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterIteration {
    /// Solve `F_h(v) = (u^k+ε)^{γ−2}·v`.
    LaggedCoefficient,
    /// Solve `F_h(v) = (u^k+ε)^{γ−1}`.
    LaggedRhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Relative residual target: `‖F_h(u) − u^{γ−1}‖_∞ ≤ tol·(1 + max u^{γ−1})`.
    pub tol_residual: f64,
    pub max_outer: usize,
    /// Damping `ω ∈ (0,1]`.
    pub relaxation: f64,
    /// Regularization `ε ≥ 0` of the right-hand side.
    pub rhs_floor: f64,
    pub outer: OuterIteration,
    pub max_howard: usize,
    pub max_krylov: usize,
    /// Cap on projected Newton steps run after the residual target is met to
    /// collapse the slowly decaying tails in the contact set (0 disables).
    pub contact_polish: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_residual: 1e-10,
            max_outer: 500,
            relaxation: 0.8,
            rhs_floor: 0.0,
            outer: OuterIteration::LaggedCoefficient,
            max_howard: 200,
            max_krylov: 20_000,
            contact_polish: 60,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::Parameter(format!("tol_residual must be positive, got {}", self.tol_residual)));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::Parameter(format!("relaxation must lie in (0,1], got {}", self.relaxation)));
        }
        if !(self.rhs_floor >= 0.0) {
            return Err(Error::Parameter(format!("rhs_floor must be nonnegative, got {}", self.rhs_floor)));
        }
        if self.max_outer == 0 || self.max_howard == 0 || self.max_krylov == 0 {
            return Err(Error::Parameter("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub params: Params,
    pub operator: OperatorSpec,
    pub grid: Grid,
    pub boundary: BoundaryData,
    pub options: SolverOptions,
}

impl ProblemSpec {
    pub fn new(params: Params, operator: OperatorSpec, grid: Grid, boundary: BoundaryData) -> Self {
        ProblemSpec { params, operator, grid, boundary, options: SolverOptions::default() }
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_boundary(&self, boundary: BoundaryData) -> Self {
        ProblemSpec { boundary, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: ScalarField,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Smallest value of the final iterate before clamping at zero.
    pub min_unclamped: f64,
    /// Howard iterations used by each outer step.
    pub howard_iterations: Vec<usize>,
    /// `tol·(1 + max u^{γ−1})` at the final iterate.
    pub residual_target: f64,
    /// Projected Newton steps taken after the residual target was met.
    pub polish_iterations: usize,
    /// Every point the Newton step places in the contact set has fallen
    /// below `contact_floor`.
    pub contact_settled: bool,
    /// `10⁻³ · c_ref · (h/2)^β`, numerical zero at this resolution.
    pub contact_floor: f64,
}

// floor for the lagged coefficient where u^k vanishes
const U_FLOOR: f64 = 1e-200;
// fraction kept where a Newton step leaves the positivity set
const CONTACT_CUT: f64 = 1e-4;

fn rhs_value(mode: OuterIteration, u: f64, gamma: f64, eps: f64) -> f64 {
    let u = u.max(0.0);
    match mode {
        OuterIteration::LaggedCoefficient if eps == 0.0 => {
            if u > 0.0 {
                u.powf(gamma - 1.0)
            } else {
                0.0
            }
        }
        OuterIteration::LaggedCoefficient => u * (u + eps).powf(gamma - 2.0),
        OuterIteration::LaggedRhs => {
            let v = u + eps;
            if v > 0.0 {
                v.powf(gamma - 1.0)
            } else {
                0.0
            }
        }
    }
}

/// `‖F_h(u) − rhs(u)‖_∞` over interior points.
fn residual_inf(opd: &DiscreteOperator, u: &[f64], mode: OuterIteration, gamma: f64, eps: f64) -> f64 {
    let applied = opd.apply_values(u);
    let grid = opd.grid();
    (0..grid.len())
        .filter(|&i| !grid.is_boundary(i))
        .map(|i| (applied[i] - rhs_value(mode, u[i], gamma, eps)).abs())
        .fold(0.0, f64::max)
}

/// Howard policy iteration for `−F_h(v) + shift·v = −source` with Dirichlet
/// data, warm-started from `v`.
fn howard(
    opd: &DiscreteOperator,
    v: &mut Vec<f64>,
    shift: &[f64],
    source: &[f64],
    boundary: &[f64],
    tol: f64,
    opts: &SolverOptions,
) -> Result<usize> {
    let grid = opd.grid();
    let b: Vec<f64> = (0..grid.len()).map(|i| if grid.is_boundary(i) { boundary[i] } else { -source[i] }).collect();
    let mut policy = opd.active_policy_values(v);
    let cap = opts.max_howard.min(opd.policy_count() * grid.len()).max(1);
    for it in 1..=cap {
        let a = opd.assemble(&policy, shift);
        let solved = if grid.dim() == 1 {
            solve_tridiagonal(&a, &b).map(|x| *v = x)
        } else {
            bicgstab(&a, &b, v, tol, opts.max_krylov).map(|_| ())
        };
        if let Err(e) = solved {
            return Err(with_policy(e, policy));
        }
        let next = opd.active_policy_values(v);
        if next == policy || opd.policy_count() == 1 {
            return Ok(it);
        }
        // a switch that does not change the policy row values is a tie
        let u = ScalarField::new(*grid, v.clone()).expect("finite");
        let gain = (0..grid.len())
            .filter(|&i| next[i] != policy[i])
            .map(|i| opd.apply_policy_at(&u, next[i], i) - opd.apply_policy_at(&u, policy[i], i))
            .fold(0.0, f64::max);
        policy = next;
        if gain <= tol {
            return Ok(it);
        }
    }
    Err(Error::Numerical {
        message: format!("Howard iteration did not stabilize within {cap} steps"),
        policy_snapshot: policy,
    })
}

fn with_policy(e: Error, policy: Vec<usize>) -> Error {
    match e {
        Error::Numerical { message, .. } => Error::Numerical { message, policy_snapshot: policy },
        other => other,
    }
}

pub fn solve(p: &ProblemSpec) -> Result<SolveResult> {
    p.options.validate()?;
    let opts = &p.options;
    let grid = p.grid;
    let gamma = p.params.gamma();
    let eps = opts.rhs_floor;
    let opd = DiscreteOperator::build(&p.operator, &grid)?;
    let data = p.boundary.values(&grid, &p.operator, &p.params)?;
    let boundary: Vec<f64> = (0..grid.len()).map(|i| if grid.is_boundary(i) { data[i] } else { 0.0 }).collect();

    let data_scale = boundary.iter().cloned().fold(0.0, f64::max);
    let rhs_scale = 1.0 + rhs_value(OuterIteration::LaggedRhs, data_scale, gamma, eps);
    // rounding floor of a residual evaluation
    let round_floor = 64.0 * f64::EPSILON * opd.max_diagonal() * data_scale;
    let inner_tol = (0.01 * opts.tol_residual * rhs_scale).max(round_floor);

    // F_h-harmonic extension of the data
    let zeros = vec![0.0; grid.len()];
    let mut u = boundary.clone();
    howard(&opd, &mut u, &zeros, &zeros, &boundary, inner_tol, opts)?;
    for v in u.iter_mut() {
        *v = v.max(0.0);
    }

    let omega = opts.relaxation;
    let mut history = Vec::new();
    let mut howard_its = Vec::new();
    let mut converged = false;
    let mut min_unclamped = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut target = opts.tol_residual * (1.0 + max_rhs(&u, gamma));
    let mut next = u.clone();
    for _ in 0..opts.max_outer {
        let (shift, source): (Vec<f64>, Vec<f64>) = match opts.outer {
            OuterIteration::LaggedCoefficient => {
                (u.iter().map(|&v| (v.max(0.0) + eps).max(U_FLOOR).powf(gamma - 2.0)).collect(), zeros.clone())
            }
            OuterIteration::LaggedRhs => {
                (zeros.clone(), u.iter().map(|&v| rhs_value(OuterIteration::LaggedRhs, v, gamma, eps)).collect())
            }
        };
        let its = howard(&opd, &mut next, &shift, &source, &boundary, inner_tol, opts)?;
        howard_its.push(its);
        min_unclamped = next.iter().cloned().fold(f64::INFINITY, f64::min);
        for (i, (ui, ni)) in u.iter_mut().zip(next.iter_mut()).enumerate() {
            let clamped = ni.max(0.0);
            *ui = if grid.is_boundary(i) { boundary[i] } else { (1.0 - omega) * *ui + omega * clamped };
            *ni = *ui;
        }
        let res = residual_inf(&opd, &u, opts.outer, gamma, eps);
        history.push(res);
        target = opts.tol_residual * (1.0 + max_rhs(&u, gamma));
        if res <= target {
            converged = true;
            break;
        }
    }
    let c_ref = min_halfspace_coefficient(&p.operator, gamma, grid.dim())?;
    let contact_floor = 1e-3 * c_ref * (0.5 * grid.h_max()).powf(p.params.beta());
    let mut polish_iterations = 0;
    let mut contact_settled = false;
    if converged && opts.outer == OuterIteration::LaggedCoefficient && opts.contact_polish > 0 {
        // Newton on F_h(v) = u^{γ−1}: −F_h(v) + (γ−1)u^{γ−2}v = −(2−γ)u^{γ−1}
        while polish_iterations < opts.contact_polish {
            let shift: Vec<f64> =
                u.iter().map(|&v| (gamma - 1.0) * (v.max(0.0) + eps).max(U_FLOOR).powf(gamma - 2.0)).collect();
            let source: Vec<f64> = u
                .iter()
                .map(|&v| (2.0 - gamma) * rhs_value(OuterIteration::LaggedCoefficient, v, gamma, eps))
                .collect();
            let its = howard(&opd, &mut next, &shift, &source, &boundary, inner_tol, opts)?;
            howard_its.push(its);
            polish_iterations += 1;
            let mut settled = true;
            for (i, (ui, ni)) in u.iter_mut().zip(next.iter_mut()).enumerate() {
                if grid.is_boundary(i) {
                    *ni = boundary[i];
                } else if *ni <= CONTACT_CUT * *ui {
                    *ni = CONTACT_CUT * *ui;
                    settled &= *ni <= contact_floor;
                }
                *ui = *ni;
            }
            let res = residual_inf(&opd, &u, opts.outer, gamma, eps);
            history.push(res);
            target = opts.tol_residual * (1.0 + max_rhs(&u, gamma));
            converged = res <= target;
            if settled && converged {
                contact_settled = true;
                break;
            }
        }
    }
    let u = ScalarField::new(grid, u)?;
    Ok(SolveResult {
        u,
        iterations: history.len(),
        residual_history: history,
        converged,
        min_unclamped,
        howard_iterations: howard_its,
        residual_target: target,
        polish_iterations,
        contact_settled,
        contact_floor,
    })
}

fn max_rhs(u: &[f64], gamma: f64) -> f64 {
    u.iter().map(|&v| if v > 0.0 { v.powf(gamma - 1.0) } else { 0.0 }).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub passed: bool,
    /// `max (u₁ − u₂)`.
    pub max_violation: f64,
    pub allowance: f64,
}

/// Solves with `g1 ≤ g2` and checks `u₁ ≤ u₂ + 10·tol` everywhere.
pub fn comparison_test(p: &ProblemSpec, g1: &BoundaryData, g2: &BoundaryData) -> Result<ComparisonReport> {
    let v1 = g1.values(&p.grid, &p.operator, &p.params)?;
    let v2 = g2.values(&p.grid, &p.operator, &p.params)?;
    for i in p.grid.boundary_indices() {
        if v1[i] > v2[i] {
            return Err(Error::Parameter(format!(
                "comparison_test needs g1 <= g2 on the boundary; violated at {:?}",
                p.grid.coord(i)
            )));
        }
    }
    let r1 = solve(&p.with_boundary(g1.clone()))?;
    let r2 = solve(&p.with_boundary(g2.clone()))?;
    let allowance = 10.0 * p.options.tol_residual;
    let max_violation = r1.u.values().iter().zip(r2.u.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    Ok(ComparisonReport { passed: max_violation <= allowance, max_violation, allowance })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubharmonicReport {
    /// `max (Δ_h u − rhs(u))` over interior points.
    pub worst_margin: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// `max_x [Δ_h u(x) − rhs(u(x))]` over interior points, with the five-point
/// (three-point in 1D) Laplacian.
pub fn laplacian_margin(u: &ScalarField, rhs: impl Fn(f64) -> f64) -> f64 {
    let grid = u.grid();
    let lap = DiscreteOperator::build(&OperatorSpec::trace(), grid).expect("trace is always representable");
    let applied = lap.apply(u);
    grid.interior_indices().into_iter().map(|i| applied.get(i) - rhs(u.get(i))).fold(f64::NEG_INFINITY, f64::max)
}

/// Checks the subsolution inequality `Δu ≤ u^{γ−1}` on a solved field with
/// threshold `C_fd·h²`.
pub fn subharmonic_check(res: &SolveResult, params: &Params, c_fd: f64) -> SubharmonicReport {
    let threshold = c_fd * res.u.grid().h_max().powi(2);
    let worst_margin = laplacian_margin(&res.u, |v| params.rhs(v));
    SubharmonicReport { worst_margin, threshold, passed: worst_margin <= threshold }
}

/// Consistency scale `C_fd = max |F_h(u*) − u*^{γ−1}| / h²` of the half-space
/// oracle `u* = c(x₁)₊^β` on `grid`.
pub fn measure_fd_constant(operator: &OperatorSpec, params: &Params, grid: &Grid) -> Result<f64> {
    let mut e = vec![0.0; grid.dim()];
    e[0] = 1.0;
    let oracle = crate::operators::halfspace_profile(operator, params.gamma(), &e, grid)?;
    let opd = DiscreteOperator::build(operator, grid)?;
    let applied = opd.apply(&oracle);
    let worst = grid
        .interior_indices()
        .into_iter()
        .map(|i| (applied.get(i) - params.rhs(oracle.get(i))).abs())
        .fold(0.0, f64::max);
    Ok(worst / grid.h_max().powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle_1d(n: usize, op: OperatorSpec) -> ProblemSpec {
        let params = Params::new(1.5, op.lambda()).unwrap();
        let grid = Grid::new_1d(-1.0, 1.0, n).unwrap();
        ProblemSpec::new(params, op, grid, BoundaryData::halfspace(vec![1.0]))
    }

    fn oracle_error(p: &ProblemSpec, r: &SolveResult) -> f64 {
        let exact = p.boundary.values(&p.grid, &p.operator, &p.params).unwrap();
        r.u.values().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn trace_oracle_recovered() {
        let p = oracle_1d(257, OperatorSpec::trace());
        let r = solve(&p).unwrap();
        assert!(r.converged, "{:?}", r.residual_history);
        let err = oracle_error(&p, &r);
        let h = p.grid.h_max();
        assert!(err < h * h, "err {err}");
        assert!(r.u.min() >= 0.0);
        let n = p.grid.len();
        assert_eq!(r.u.get(0), 0.0);
        assert_eq!(r.u.get(n - 1), 1.0 / 144.0);
    }

    #[test]
    fn pucci_oracle_recovered() {
        let p = oracle_1d(257, OperatorSpec::pucci_plus(2.0).unwrap());
        let r = solve(&p).unwrap();
        assert!(r.converged);
        let h = p.grid.h_max();
        assert!(oracle_error(&p, &r) < h * h);
        assert_eq!(*r.u.values().last().unwrap(), 1.0 / 576.0);
    }

    #[test]
    fn contact_tails_collapse_for_large_gamma() {
        // β = 10: the oracle is ~1e-31 at 8h, far below the residual target
        let params = Params::new(1.8, 1.0).unwrap();
        let grid = Grid::new_1d(-1.0, 1.0, 2049).unwrap();
        let opts = SolverOptions { tol_residual: 1e-17, ..Default::default() };
        let p = ProblemSpec::new(params, OperatorSpec::trace(), grid, BoundaryData::halfspace(vec![1.0]))
            .with_options(opts);
        let r = solve(&p).unwrap();
        assert!(r.converged && r.contact_settled && r.polish_iterations > 0);
        let h = grid.h_max();
        let exact = p.boundary.values(&grid, &p.operator, &params).unwrap();
        for k in [-2.0, -1.0] {
            assert!(r.u.get(grid.nearest_index(&[k * h])) <= r.contact_floor);
        }
        let i = grid.nearest_index(&[16.0 * h]);
        assert!((r.u.get(i) / exact[i] - 1.0).abs() < 0.2);
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = oracle_1d(65, OperatorSpec::trace()).with_boundary(BoundaryData::Constant { value: 0.0 });
        let r = solve(&p).unwrap();
        assert!(r.converged);
        assert!(r.u.values().iter().all(|&v| v == 0.0));
        assert_eq!(laplacian_margin(&r.u, |v| p.params.rhs(v)), 0.0);
    }

    #[test]
    fn residual_history_settles() {
        let p = oracle_1d(129, OperatorSpec::trace());
        let r = solve(&p).unwrap();
        for w in r.residual_history.windows(2).skip(5) {
            assert!(w[1] <= 1.5 * w[0], "{:?}", r.residual_history);
        }
        assert!(r.min_unclamped >= -p.options.tol_residual);
    }

    #[test]
    fn lagged_rhs_mode_reports_nonconvergence() {
        let opts = SolverOptions { outer: OuterIteration::LaggedRhs, max_outer: 50, ..Default::default() };
        let p = oracle_1d(257, OperatorSpec::trace()).with_options(opts);
        let r = solve(&p).unwrap();
        assert!(!r.converged);
        assert_eq!(r.residual_history.len(), 50);
    }

    #[test]
    fn deterministic() {
        let p = oracle_1d(129, OperatorSpec::pucci_plus(2.0).unwrap());
        let a = solve(&p).unwrap();
        let b = solve(&p).unwrap();
        let bits = |r: &SolveResult| r.u.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.residual_history, b.residual_history);
    }

    #[test]
    fn negative_boundary_data_rejected() {
        let p = oracle_1d(33, OperatorSpec::trace()).with_boundary(BoundaryData::Constant { value: -1.0 });
        assert!(matches!(solve(&p), Err(Error::Parameter(_))));
    }

    #[test]
    fn bad_options_rejected() {
        let mut o = SolverOptions { relaxation: 0.0, ..Default::default() };
        assert!(o.validate().is_err());
        o.relaxation = 1.0;
        o.tol_residual = -1.0;
        assert!(o.validate().is_err());
    }

    #[test]
    fn comparison_examples() {
        let p = oracle_1d(129, OperatorSpec::trace());
        let hs = BoundaryData::halfspace(vec![1.0]);
        let hs2 = BoundaryData::Halfspace { direction: vec![1.0], scale: 2.0 };
        let zero = BoundaryData::Constant { value: 0.0 };
        for (g1, g2) in [(&hs, &hs), (&zero, &hs), (&hs, &hs2)] {
            let rep = comparison_test(&p, g1, g2).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
        assert!(comparison_test(&p, &hs2, &hs).is_err());
    }

    #[test]
    fn subharmonic_margins() {
        let p = oracle_1d(257, OperatorSpec::trace());
        let c_fd = measure_fd_constant(&p.operator, &p.params, &p.grid).unwrap();
        assert!((c_fd - 1.0 / 72.0).abs() < 1e-6, "{c_fd}");
        let r = solve(&p).unwrap();
        let rep = subharmonic_check(&r, &p.params, c_fd);
        assert!(rep.passed && rep.worst_margin.abs() < 1e-9, "{rep:?}");

        let pp = oracle_1d(257, OperatorSpec::pucci_plus(2.0).unwrap());
        let rp = solve(&pp).unwrap();
        let rep = subharmonic_check(&rp, &pp.params, c_fd);
        assert!(rep.passed && rep.worst_margin <= 1e-9, "{rep:?}");

        // sign bug in the right-hand side must be caught
        let bad = laplacian_margin(&r.u, |v| -p.params.rhs(v));
        assert!(bad > c_fd * p.grid.h_max().powi(2));
    }

    #[test]
    fn bump_data_vanishes_outside_support() {
        let g = Grid::square(-1.0, 1.0, 9).unwrap();
        let params = Params::new(1.5, 1.0).unwrap();
        let b = BoundaryData::Bump { amplitude: 0.02, center: vec![1.0, 1.0], width: 1.0 };
        let v = b.values(&g, &OperatorSpec::trace(), &params).unwrap();
        assert_eq!(v[g.join([8, 8])], 0.02);
        assert_eq!(v[g.join([0, 0])], 0.0);
        assert_eq!(v[g.join([4, 8])], 0.0);
        let poly = BoundaryData::Polynomial { terms: vec![Monomial { coef: 1.0, powers: vec![1, 0] }] };
        let v = poly.values(&g, &OperatorSpec::trace(), &params).unwrap();
        assert_eq!(v[g.join([0, 3])], 0.0);
        assert_eq!(v[g.join([8, 3])], 1.0);
    }
}
