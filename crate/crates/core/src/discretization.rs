//! Monotone finite-difference discretization of `u ↦ F(D²u)`.
//!
//! Each policy `A_α` of the Bellman family is split over the direction set
//! (1D: `{e₁}`, 2D: `{e₁, e₂, e₁+e₂, e₁−e₂}`) with nonnegative weights, so
//! that `tr(A_α D²u) ≈ Σ_v c_{α,v} (u(x+w_v) − 2u(x) + u(x−w_v))` where `w_v`
//! is the physical displacement of the offset `v`. The discrete operator is
//! the pointwise maximum over policies.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linsolve::SparseMatrix;
use crate::operators::OperatorSpec;
use crate::sym::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilDirection {
    /// Offset in grid steps.
    pub offset: [i64; 2],
    /// Squared physical length `|v·h|²`.
    pub len2: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    directions: Vec<StencilDirection>,
    /// `weights[α][v]`, nonnegative, multiplying the raw second difference.
    weights: Vec<Vec<f64>>,
    family: Vec<SymMatrix>,
}

const NEG_WEIGHT_TOL: f64 = 1e-12;

pub fn direction_set(grid: &Grid) -> Vec<StencilDirection> {
    let h = grid.h();
    let mk = |offset: [i64; 2]| {
        let len2 = (0..grid.dim()).map(|a| (offset[a] as f64 * h[a]).powi(2)).sum();
        StencilDirection { offset, len2 }
    };
    match grid.dim() {
        1 => vec![mk([1, 0])],
        _ => vec![mk([1, 0]), mk([0, 1]), mk([1, 1]), mk([1, -1])],
    }
}

/// Nonnegative weights over [`direction_set`] reproducing `tr(A D²·)`.
pub fn decompose(a: &SymMatrix, grid: &Grid) -> Result<Vec<f64>> {
    let h = grid.h();
    if a.dim() != grid.dim() {
        return Err(Error::Shape { expected: grid.dim(), got: a.dim() });
    }
    if grid.dim() == 1 {
        let w = a.get(0, 0) / (h[0] * h[0]);
        if w < 0.0 {
            return Err(Error::Decomposition { matrix: a.as_array() });
        }
        return Ok(vec![w]);
    }
    let (hx, hy) = (h[0], h[1]);
    let a12 = a.get(0, 1);
    let plus = a12.max(0.0) / (hx * hy);
    let minus = (-a12).max(0.0) / (hx * hy);
    let diag_part = plus + minus;
    let mut wx = (a.get(0, 0) - diag_part * hx * hx) / (hx * hx);
    let mut wy = (a.get(1, 1) - diag_part * hy * hy) / (hy * hy);
    let scale = a.spectral_norm().max(1.0) / (hx * hy).min(hx * hx).min(hy * hy);
    for w in [&mut wx, &mut wy] {
        if *w < 0.0 {
            if *w < -NEG_WEIGHT_TOL * scale {
                return Err(Error::Decomposition { matrix: a.as_array() });
            }
            *w = 0.0;
        }
    }
    Ok(vec![wx, wy, plus, minus])
}

impl DiscreteOperator {
    pub fn build(spec: &OperatorSpec, grid: &Grid) -> Result<Self> {
        let family = spec.policy_family(grid.dim());
        let directions = direction_set(grid);
        let weights = family.iter().map(|a| decompose(a, grid)).collect::<Result<Vec<_>>>()?;
        Ok(DiscreteOperator { grid: *grid, directions, weights, family })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn directions(&self) -> &[StencilDirection] {
        &self.directions
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn family(&self) -> &[SymMatrix] {
        &self.family
    }

    pub fn policy_count(&self) -> usize {
        self.weights.len()
    }

    /// Largest diagonal weight `2·Σ_v c_{α,v}` over policies.
    pub fn max_diagonal(&self) -> f64 {
        self.weights.iter().map(|w| 2.0 * w.iter().sum::<f64>()).fold(0.0, f64::max)
    }

    fn second_differences(&self, u: &[f64], idx: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        let c = u[idx];
        for (k, d) in self.directions.iter().enumerate() {
            let p = self.grid.offset(idx, d.offset).expect("interior point");
            let m = self.grid.offset(idx, [-d.offset[0], -d.offset[1]]).expect("interior point");
            out[k] = u[p] - 2.0 * c + u[m];
        }
        out
    }

    fn policy_value(&self, alpha: usize, diffs: &[f64; 4]) -> f64 {
        self.weights[alpha].iter().zip(diffs).map(|(w, d)| w * d).sum()
    }

    // (argmax, max) with the lowest index winning ties
    fn best_policy(&self, u: &[f64], idx: usize) -> (usize, f64) {
        let diffs = self.second_differences(u, idx);
        let mut best = (0, f64::NEG_INFINITY);
        for alpha in 0..self.weights.len() {
            let v = self.policy_value(alpha, &diffs);
            if v > best.1 {
                best = (alpha, v);
            }
        }
        best
    }

    /// Value of a single policy row at an interior point.
    pub fn apply_policy_at(&self, u: &ScalarField, alpha: usize, idx: usize) -> f64 {
        let diffs = self.second_differences(u.values(), idx);
        self.policy_value(alpha, &diffs)
    }

    /// `max_α` of the policy rows at every interior point; zero on the
    /// boundary.
    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let vals = self.apply_values(u.values());
        ScalarField::new(self.grid, vals).expect("finite input gives finite output")
    }

    pub(crate) fn apply_values(&self, u: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|idx| if self.grid.is_boundary(idx) { 0.0 } else { self.best_policy(u, idx).1 })
            .collect()
    }

    /// Argmax policy per grid point (0 on the boundary).
    pub fn active_policy(&self, u: &ScalarField) -> Vec<usize> {
        self.active_policy_values(u.values())
    }

    pub(crate) fn active_policy_values(&self, u: &[f64]) -> Vec<usize> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|idx| if self.grid.is_boundary(idx) { 0 } else { self.best_policy(u, idx).0 })
            .collect()
    }

    /// Applies a frozen policy field.
    pub fn apply_frozen(&self, u: &ScalarField, policy: &[usize]) -> ScalarField {
        let vals: Vec<f64> = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                if self.grid.is_boundary(idx) {
                    0.0
                } else {
                    let diffs = self.second_differences(u.values(), idx);
                    self.policy_value(policy[idx], &diffs)
                }
            })
            .collect();
        ScalarField::new(self.grid, vals).expect("finite")
    }

    /// Matrix of `u ↦ −L_π u + diag(shift)·u` on interior rows; identity rows
    /// on boundary points.
    pub fn assemble(&self, policy: &[usize], shift: &[f64]) -> SparseMatrix {
        let n = self.grid.len();
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|idx| {
                if self.grid.is_boundary(idx) {
                    return vec![(idx, 1.0)];
                }
                let w = &self.weights[policy[idx]];
                let mut row = Vec::with_capacity(1 + 2 * self.directions.len());
                let mut diag = shift[idx];
                for (k, d) in self.directions.iter().enumerate() {
                    if w[k] == 0.0 {
                        continue;
                    }
                    diag += 2.0 * w[k];
                    let p = self.grid.offset(idx, d.offset).expect("interior point");
                    let m = self.grid.offset(idx, [-d.offset[0], -d.offset[1]]).expect("interior point");
                    row.push((p, -w[k]));
                    row.push((m, -w[k]));
                }
                row.push((idx, diag));
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        SparseMatrix::from_rows(n, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::hessian_central;
    use crate::operators::{halfspace_profile, OperatorSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad(m: [f64; 3]) -> impl Fn([f64; 2]) -> f64 {
        move |x| 0.5 * m[0] * x[0] * x[0] + m[1] * x[0] * x[1] + 0.5 * m[2] * x[1] * x[1] + 0.3 * x[0] - 0.1 * x[1]
    }

    #[test]
    fn trace_stencils_are_classical() {
        let g1 = Grid::new_1d(0.0, 1.0, 11).unwrap();
        let d = DiscreteOperator::build(&OperatorSpec::trace(), &g1).unwrap();
        assert!((d.weights()[0][0] - 100.0).abs() < 1e-9);
        let g2 = Grid::square(0.0, 1.0, 11).unwrap();
        let d = DiscreteOperator::build(&OperatorSpec::trace(), &g2).unwrap();
        assert_eq!(d.weights()[0].len(), 4);
        assert!((d.weights()[0][0] - 100.0).abs() < 1e-9 && (d.weights()[0][1] - 100.0).abs() < 1e-9);
        assert_eq!(&d.weights()[0][2..], &[0.0, 0.0]);
    }

    #[test]
    fn correlated_matrix_decomposes_consistently() {
        let g = Grid::square(-1.0, 1.0, 9).unwrap();
        let a = SymMatrix::new_2d(1.0, 0.5, 1.0);
        let w = decompose(&a, &g).unwrap();
        let h2 = g.h()[0] * g.h()[0];
        // per unit second derivative: 0.5 on each axis, 0.5 on the (1,1) offset
        assert!((w[0] * h2 - 0.5).abs() < 1e-12 && (w[1] * h2 - 0.5).abs() < 1e-12);
        assert!((w[2] * h2 - 0.5).abs() < 1e-12 && w[3] == 0.0);
        let spec = OperatorSpec::bellman(2.0, vec![SymMatrix::identity(2), a]).unwrap();
        let d = DiscreteOperator::build(&spec, &g).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0] * x[1]);
        let idx = g.join([4, 4]);
        assert!((d.apply_policy_at(&u, 1, idx) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_representable_member_is_rejected() {
        let g = Grid::square(-1.0, 1.0, 9).unwrap();
        let bad = SymMatrix::new_2d(0.5, 0.7, 2.0);
        let spec = OperatorSpec::bellman(5.0, vec![SymMatrix::identity(2), bad]).unwrap();
        match DiscreteOperator::build(&spec, &g) {
            Err(Error::Decomposition { matrix }) => assert_eq!(matrix[0][1], 0.7),
            other => panic!("expected decomposition error, got {other:?}"),
        }
    }

    #[test]
    fn quadratics_reproduce_operator_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let specs = [OperatorSpec::trace(), OperatorSpec::pucci_plus(2.0).unwrap()];
        let g = Grid::new(2, &[-1.0, -0.5], &[1.0, 1.5], &[17, 17]).unwrap();
        for spec in &specs {
            let d = DiscreteOperator::build(spec, &g).unwrap();
            for _ in 0..20 {
                let m = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                let u = ScalarField::from_fn(g, quad(m));
                let hess = SymMatrix::new_2d(m[0], m[1], m[2]);
                for alpha in 0..d.policy_count() {
                    let want = d.family()[alpha].trace_product(&hess);
                    for idx in g.interior_indices().into_iter().step_by(37) {
                        assert!((d.apply_policy_at(&u, alpha, idx) - want).abs() < 1e-10);
                    }
                }
                let applied = d.apply(&u);
                let want = if spec.kind() == crate::operators::OperatorKind::Trace {
                    spec.evaluate(&hess).unwrap()
                } else {
                    // the discrete Pucci is the Bellman operator over the d4 family
                    let fam = spec.policy_family(2);
                    fam.iter().map(|a| a.trace_product(&hess)).fold(f64::NEG_INFINITY, f64::max)
                };
                for idx in g.interior_indices() {
                    assert!((applied.get(idx) - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_field_and_single_policy() {
        let g = Grid::square(0.0, 1.0, 9).unwrap();
        let d = DiscreteOperator::build(&OperatorSpec::trace(), &g).unwrap();
        let z = ScalarField::zeros(g);
        assert!(d.apply(&z).values().iter().all(|&v| v == 0.0));
        let u = ScalarField::from_fn(g, |x| (3.0 * x[0]).sin() * x[1]);
        assert!(d.active_policy(&u).iter().all(|&p| p == 0));
    }

    #[test]
    fn pucci_selects_lambda_on_positive_curvature() {
        let g = Grid::new_1d(-1.0, 1.0, 21).unwrap();
        let d = DiscreteOperator::build(&OperatorSpec::pucci_plus(2.0).unwrap(), &g).unwrap();
        let convex = ScalarField::from_fn(g, |x| x[0].powi(4) + x[0] * x[0]);
        for idx in g.interior_indices() {
            assert_eq!(d.family()[d.active_policy(&convex)[idx]].get(0, 0), 2.0);
        }
        let g2 = Grid::square(-1.0, 1.0, 11).unwrap();
        let d2 = DiscreteOperator::build(&OperatorSpec::pucci_plus(2.0).unwrap(), &g2).unwrap();
        let bowl = ScalarField::from_fn(g2, |x| x[0] * x[0] + 0.5 * x[1] * x[1]);
        for idx in g2.interior_indices() {
            let a = d2.family()[d2.active_policy(&bowl)[idx]];
            assert_eq!((a.get(0, 0), a.get(1, 1), a.get(0, 1)), (2.0, 2.0, 0.0));
        }
    }

    #[test]
    fn frozen_active_policy_reproduces_apply() {
        let g = Grid::square(-1.0, 1.0, 33).unwrap();
        let d = DiscreteOperator::build(&OperatorSpec::pucci_plus(3.0).unwrap(), &g).unwrap();
        let u = ScalarField::from_fn(g, |x| (2.0 * x[0]).sin() * (x[1] * 3.0).cos() + x[0] * x[1]);
        let pol = d.active_policy(&u);
        assert_eq!(d.apply_frozen(&u, &pol), d.apply(&u));
    }

    #[test]
    fn monotone_in_neighbors_and_antitone_in_center() {
        let g = Grid::square(-1.0, 1.0, 9).unwrap();
        let spec = OperatorSpec::bellman(2.0, vec![SymMatrix::identity(2), SymMatrix::new_2d(1.5, -0.4, 0.8)]).unwrap();
        for spec in [OperatorSpec::trace(), OperatorSpec::pucci_plus(2.0).unwrap(), spec] {
            let d = DiscreteOperator::build(&spec, &g).unwrap();
            let u = ScalarField::from_fn(g, |x| x[0].exp() * (x[1] + 0.3).sin());
            let base = d.apply(&u);
            let idx = g.join([4, 4]);
            for j in 0..g.len() {
                let mut v = u.clone();
                v.values_mut()[j] += 1e-3;
                let after = d.apply(&v).get(idx);
                if j == idx {
                    assert!(after <= base.get(idx));
                } else {
                    assert!(after >= base.get(idx) - 1e-12);
                }
            }
        }
    }

    #[test]
    fn consistency_is_second_order_on_quartics() {
        let spec = OperatorSpec::pucci_plus(2.0).unwrap();
        let f = |x: [f64; 2]| x[0].powi(4) + 0.5 * x[0] * x[0] * x[1] * x[1] + x[1].powi(4) + x[0] * x[1];
        let mut scaled = Vec::new();
        for n in [33, 65] {
            let g = Grid::square(-1.0, 1.0, n).unwrap();
            let d = DiscreteOperator::build(&spec, &g).unwrap();
            let u = ScalarField::from_fn(g, f);
            let applied = d.apply(&u);
            let fam = spec.policy_family(2);
            let mut worst: f64 = 0.0;
            for idx in g.interior_indices() {
                let x = g.coord(idx);
                // exact Hessian
                let hess = SymMatrix::new_2d(
                    12.0 * x[0] * x[0] + x[1] * x[1],
                    2.0 * x[0] * x[1] + 1.0,
                    12.0 * x[1] * x[1] + x[0] * x[0],
                );
                let exact = fam.iter().map(|a| a.trace_product(&hess)).fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max((applied.get(idx) - exact).abs());
            }
            let h = g.h_max();
            scaled.push(worst / (h * h));
        }
        // fourth derivatives are bounded by 24, so C stays below 24·Λ·(weights) and
        // does not grow with refinement
        assert!(scaled[1] <= scaled[0] * 1.05, "{scaled:?}");
        assert!(scaled[0] < 50.0);
    }

    #[test]
    fn profile_residual_matches_sqrt() {
        let g = Grid::new_1d(-1.0, 1.0, 257).unwrap();
        let t = OperatorSpec::trace();
        let d = DiscreteOperator::build(&t, &g).unwrap();
        let u = halfspace_profile(&t, 1.5, &[1.0], &g).unwrap();
        let a = d.apply(&u);
        let h = g.h_max();
        for idx in g.interior_indices() {
            let err = (a.get(idx) - u.get(idx).sqrt()).abs();
            // exact residual h²·24c/12 = h²/72 wherever x > h
            assert!(err <= h * h / 72.0 * (1.0 + 1e-6) + 1e-12, "{err}");
            let hc = hessian_central(&u, idx).unwrap();
            assert!((hc.trace() - a.get(idx)).abs() < 1e-12);
        }
    }
}
