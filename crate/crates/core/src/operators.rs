//! Convex, positively homogeneous, uniformly elliptic operators `F` on
//! symmetric matrices, their half-space profiles and rescalings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::params::beta_of;
use crate::sym::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Trace,
    PucciPlus,
    Bellman,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    kind: OperatorKind,
    lambda: f64,
    family: Vec<SymMatrix>,
}

/// The coefficient matrix attaining `F(M)`, i.e. a linear operator `S_M`
/// with `tr(S_M · M) = F(M)` and `tr(S_M · N) ≤ F(M+N) − F(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDifferentialChoice {
    /// Family index for Bellman operators, `None` otherwise.
    pub index: Option<usize>,
    pub matrix: SymMatrix,
}

const IDENTITY_TOL: f64 = 1e-12;

impl OperatorSpec {
    pub fn trace() -> Self {
        OperatorSpec { kind: OperatorKind::Trace, lambda: 1.0, family: Vec::new() }
    }

    pub fn pucci_plus(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(OperatorSpec { kind: OperatorKind::PucciPlus, lambda, family: Vec::new() })
    }

    /// `F(M) = max_α tr(A_α M)`. The family must contain the identity and
    /// every member must have its spectrum in `[1/Λ, Λ]`.
    pub fn bellman(lambda: f64, family: Vec<SymMatrix>) -> Result<Self> {
        check_lambda(lambda)?;
        let dim = match family.first() {
            Some(a) => a.dim(),
            None => return Err(Error::Operator("Bellman family must be nonempty".into())),
        };
        for a in &family {
            if a.dim() != dim {
                return Err(Error::Shape { expected: dim, got: a.dim() });
            }
            let ev = a.eigenvalues();
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            if lo < 1.0 / lambda - 1e-12 || hi > lambda + 1e-12 {
                return Err(Error::Operator(format!(
                    "family member {:?} has spectrum [{lo}, {hi}] outside [1/{lambda}, {lambda}]",
                    a.to_rows()
                )));
            }
        }
        let id = SymMatrix::identity(dim);
        let has_identity = family.iter().any(|a| {
            let d = a.add(&id.scale(-1.0));
            d.spectral_norm() <= IDENTITY_TOL
        });
        if !has_identity {
            return Err(Error::Operator(
                "Bellman family must contain the identity matrix (trace normalization at 0)".into(),
            ));
        }
        Ok(OperatorSpec { kind: OperatorKind::Bellman, lambda, family })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn family(&self) -> &[SymMatrix] {
        &self.family
    }

    /// Kind label used in reports. The 2D Pucci operator is discretized over
    /// the nine-point direction set and reported as `pucci_plus_d4`.
    pub fn reported_kind(&self, dim: usize) -> &'static str {
        match (self.kind, dim) {
            (OperatorKind::Trace, _) => "trace",
            (OperatorKind::PucciPlus, 1) => "pucci_plus",
            (OperatorKind::PucciPlus, _) => "pucci_plus_d4",
            (OperatorKind::Bellman, _) => "bellman",
        }
    }

    /// Coefficient matrices of the Bellman family actually used by the
    /// discretization.
    pub fn policy_family(&self, dim: usize) -> Vec<SymMatrix> {
        match self.kind {
            OperatorKind::Trace => vec![SymMatrix::identity(dim)],
            OperatorKind::PucciPlus => pucci_d4_family(dim, self.lambda),
            OperatorKind::Bellman => self.family.clone(),
        }
    }

    pub fn evaluate(&self, m: &SymMatrix) -> Result<f64> {
        match self.kind {
            OperatorKind::Trace => Ok(m.trace()),
            OperatorKind::PucciPlus => {
                let (pos, neg) =
                    m.eigenvalues().iter().fold((0.0, 0.0), |(p, n), &l| if l > 0.0 { (p + l, n) } else { (p, n + l) });
                Ok(self.lambda * pos + neg / self.lambda)
            }
            OperatorKind::Bellman => {
                self.check_dim(m)?;
                Ok(self.argmax(m).1)
            }
        }
    }

    fn check_dim(&self, m: &SymMatrix) -> Result<()> {
        match self.family.first() {
            Some(a) if a.dim() != m.dim() => Err(Error::Shape { expected: a.dim(), got: m.dim() }),
            _ => Ok(()),
        }
    }

    // lowest index wins ties
    fn argmax(&self, m: &SymMatrix) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, a) in self.family.iter().enumerate() {
            let v = a.trace_product(m);
            if v > best.1 {
                best = (k, v);
            }
        }
        best
    }

    pub fn sub_differential(&self, m: &SymMatrix) -> Result<SubDifferentialChoice> {
        match self.kind {
            OperatorKind::Trace => Ok(SubDifferentialChoice { index: None, matrix: SymMatrix::identity(m.dim()) }),
            OperatorKind::Bellman => {
                self.check_dim(m)?;
                let (k, _) = self.argmax(m);
                Ok(SubDifferentialChoice { index: Some(k), matrix: self.family[k] })
            }
            OperatorKind::PucciPlus => {
                let (lam, inv) = (self.lambda, 1.0 / self.lambda);
                let weight = |l: f64| if l >= 0.0 { lam } else { inv };
                if m.dim() == 1 {
                    return Ok(SubDifferentialChoice { index: None, matrix: SymMatrix::new_1d(weight(m.get(0, 0))) });
                }
                let (a, b, c) = (m.get(0, 0), m.get(0, 1), m.get(1, 1));
                let ev = m.eigenvalues();
                // unit eigenvector for the larger eigenvalue
                let (vx, vy) = if b.abs() > 0.0 {
                    let (x, y) = (b, ev[1] - a);
                    let nrm = x.hypot(y);
                    (x / nrm, y / nrm)
                } else if a >= c {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                };
                let (w_hi, w_lo) = (weight(ev[1]), weight(ev[0]));
                let v = SymMatrix::outer(&[vx, vy]);
                let w = SymMatrix::outer(&[-vy, vx]);
                Ok(SubDifferentialChoice { index: None, matrix: v.scale(w_hi).add(&w.scale(w_lo)) })
            }
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 1.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("ellipticity constant must satisfy lambda >= 1, got {lambda}")))
    }
}

/// Pucci-type family representable on the nine-point stencil: diagonal
/// matrices with entries in `{1/Λ, Λ}` and the two 45° rotations of
/// `diag(Λ, 1/Λ)`.
pub fn pucci_d4_family(dim: usize, lambda: f64) -> Vec<SymMatrix> {
    let (hi, lo) = (lambda, 1.0 / lambda);
    if dim == 1 {
        return vec![SymMatrix::new_1d(lo), SymMatrix::new_1d(hi)];
    }
    let mean = 0.5 * (hi + lo);
    let half = 0.5 * (hi - lo);
    vec![
        SymMatrix::new_2d(lo, 0.0, lo),
        SymMatrix::new_2d(hi, 0.0, lo),
        SymMatrix::new_2d(lo, 0.0, hi),
        SymMatrix::new_2d(hi, 0.0, hi),
        SymMatrix::new_2d(mean, half, mean),
        SymMatrix::new_2d(mean, -half, mean),
    ]
}

/// Worst margins observed by [`ellipticity_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub trials: usize,
    /// Constant the bounds were checked against.
    pub lambda_effective: f64,
    /// `min (F(M+P) − F(M) − ‖P‖/Λ)`, nonnegative on success.
    pub lower_margin: f64,
    /// `min (Λ‖P‖ − F(M+P) + F(M))`, nonnegative on success.
    pub upper_margin: f64,
    pub failures: usize,
    pub passed: bool,
}

/// Samples random symmetric `M` and unit-norm PSD `P` and checks
/// `‖P‖/Λ ≤ F(M+P) − F(M) ≤ Λ‖P‖` with `Λ = d·lambda`.
pub fn ellipticity_check(spec: &OperatorSpec, dim: usize, trials: usize, seed: u64) -> Result<EllipticityReport> {
    if trials == 0 {
        return Err(Error::Parameter("ellipticity_check needs at least one trial".into()));
    }
    let lambda_eff = dim as f64 * spec.lambda();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EllipticityReport {
        trials,
        lambda_effective: lambda_eff,
        lower_margin: f64::INFINITY,
        upper_margin: f64::INFINITY,
        failures: 0,
        passed: true,
    };
    let slack = 1e-12;
    for _ in 0..trials {
        let m = random_symmetric(&mut rng, dim, 10.0);
        let p = random_psd_unit(&mut rng, dim);
        let inc = spec.evaluate(&m.add(&p))? - spec.evaluate(&m)?;
        let norm = p.spectral_norm();
        let lower = inc - norm / lambda_eff;
        let upper = lambda_eff * norm - inc;
        report.lower_margin = report.lower_margin.min(lower);
        report.upper_margin = report.upper_margin.min(upper);
        if lower < -slack || upper < -slack {
            report.failures += 1;
        }
    }
    report.passed = report.failures == 0;
    Ok(report)
}

pub(crate) fn random_symmetric(rng: &mut impl Rng, dim: usize, scale: f64) -> SymMatrix {
    let mut s = || scale * (2.0 * rng.gen::<f64>() - 1.0);
    match dim {
        1 => SymMatrix::new_1d(s()),
        _ => SymMatrix::new_2d(s(), s(), s()),
    }
}

fn random_psd_unit(rng: &mut impl Rng, dim: usize) -> SymMatrix {
    if dim == 1 {
        return SymMatrix::new_1d(1.0);
    }
    let theta = rng.gen::<f64>() * std::f64::consts::PI;
    let second = rng.gen::<f64>();
    let (c, s) = (theta.cos(), theta.sin());
    SymMatrix::outer(&[c, s]).add(&SymMatrix::outer(&[-s, c]).scale(second))
}

/// Returns the same operator: every kind implemented here is positively
/// homogeneous, so `F_r(M) = r^{2−β} F(r^{β−2} M) = F(M)`.
pub fn rescale_operator(spec: &OperatorSpec, r: f64, beta: f64) -> Result<OperatorSpec> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Parameter(format!("rescaling radius must be positive, got {r}")));
    }
    if !(beta > 2.0) {
        return Err(Error::Parameter(format!("beta must exceed 2, got {beta}")));
    }
    Ok(spec.clone())
}

/// `c = (β(β−1)·F(e⊗e))^{−1/(2−γ)}`, the coefficient of the half-space
/// solution `c·(x·e)₊^β`.
pub fn halfspace_coefficient(spec: &OperatorSpec, gamma: f64, e: &[f64]) -> Result<f64> {
    let beta = beta_of(gamma)?;
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!("direction must be a unit vector, |e| = {norm}")));
    }
    let fe = spec.evaluate(&SymMatrix::outer(e))?;
    if !(fe > 0.0) {
        return Err(Error::Operator(format!("F(e⊗e) = {fe} is not positive")));
    }
    Ok((beta * (beta - 1.0) * fe).powf(-1.0 / (2.0 - gamma)))
}

pub fn halfspace_profile(spec: &OperatorSpec, gamma: f64, e: &[f64], grid: &Grid) -> Result<ScalarField> {
    let c = halfspace_coefficient(spec, gamma, e)?;
    let beta = beta_of(gamma)?;
    let dim = grid.dim();
    Ok(ScalarField::from_fn(*grid, |x| {
        let t: f64 = (0..dim).map(|a| x[a] * e[a]).sum();
        if t > 0.0 {
            c * t.powf(beta)
        } else {
            0.0
        }
    }))
}

/// Half-space profile value at a single point.
pub fn halfspace_value(c: f64, beta: f64, e: &[f64], x: &[f64]) -> f64 {
    let t: f64 = e.iter().zip(x).map(|(a, b)| a * b).sum();
    if t > 0.0 {
        c * t.powf(beta)
    } else {
        0.0
    }
}

/// Smallest half-space coefficient over unit directions, sampled on a
/// 720-point angular lattice in 2D.
pub fn min_halfspace_coefficient(spec: &OperatorSpec, gamma: f64, dim: usize) -> Result<f64> {
    let dirs = direction_lattice(dim, 720);
    let mut c = f64::INFINITY;
    for e in &dirs {
        c = c.min(halfspace_coefficient(spec, gamma, e)?);
    }
    Ok(c)
}

/// Unit directions: `{−1, 1}` in 1D, `count` equally spaced angles in 2D.
pub fn direction_lattice(dim: usize, count: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    (0..count)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            vec![t.cos(), t.sin()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::hessian_central;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig, Strategy};

    fn anisotropic_bellman() -> OperatorSpec {
        OperatorSpec::bellman(
            2.0,
            vec![SymMatrix::identity(2), SymMatrix::new_2d(1.5, 0.5, 1.0), SymMatrix::new_2d(0.6, -0.2, 1.8)],
        )
        .unwrap()
    }

    fn specs() -> Vec<OperatorSpec> {
        vec![OperatorSpec::trace(), OperatorSpec::pucci_plus(2.0).unwrap(), anisotropic_bellman()]
    }

    #[test]
    fn evaluate_examples() {
        let p = OperatorSpec::pucci_plus(2.0).unwrap();
        assert!((p.evaluate(&SymMatrix::new_2d(1.0, 0.0, -1.0)).unwrap() - 1.5).abs() < 1e-14);
        assert!((p.evaluate(&SymMatrix::identity(2)).unwrap() - 4.0).abs() < 1e-14);
        for s in specs() {
            assert_eq!(s.evaluate(&SymMatrix::zero(2)).unwrap(), 0.0);
        }
    }

    #[test]
    fn bellman_dimension_mismatch_is_shape_error() {
        let b = anisotropic_bellman();
        assert!(matches!(b.evaluate(&SymMatrix::new_1d(1.0)), Err(Error::Shape { .. })));
    }

    #[test]
    fn bellman_validation() {
        assert!(OperatorSpec::bellman(2.0, vec![]).is_err());
        // no identity
        assert!(OperatorSpec::bellman(2.0, vec![SymMatrix::new_2d(1.5, 0.0, 1.5)]).is_err());
        // spectrum outside [1/2, 2]
        assert!(OperatorSpec::bellman(2.0, vec![SymMatrix::identity(2), SymMatrix::new_2d(3.0, 0.0, 1.0)]).is_err());
        let single = OperatorSpec::bellman(1.0, vec![SymMatrix::identity(2)]).unwrap();
        let m = SymMatrix::new_2d(0.3, -1.2, 2.5);
        assert_eq!(single.evaluate(&m).unwrap(), OperatorSpec::trace().evaluate(&m).unwrap());
    }

    #[test]
    fn ellipticity_reports() {
        for dim in [1, 2] {
            for s in specs() {
                if s.kind() == OperatorKind::Bellman && dim == 1 {
                    continue;
                }
                let r = ellipticity_check(&s, dim, 500, 7).unwrap();
                assert!(r.passed, "{:?} dim {dim}: {r:?}", s.kind());
                assert!(r.lower_margin >= -1e-12 && r.upper_margin >= -1e-12);
            }
        }
        let id_family = OperatorSpec::bellman(1.0, vec![SymMatrix::identity(2)]).unwrap();
        let a = ellipticity_check(&id_family, 2, 200, 3).unwrap();
        let b = ellipticity_check(&OperatorSpec::trace(), 2, 200, 3).unwrap();
        assert_eq!(a, b);
        assert!(ellipticity_check(&OperatorSpec::trace(), 2, 0, 1).is_err());
    }

    #[test]
    fn pucci_rank_one_increment_within_bounds() {
        let p = OperatorSpec::pucci_plus(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = random_symmetric(&mut rng, 2, 5.0);
            let t: f64 = rng.gen::<f64>() * std::f64::consts::PI;
            let pe = SymMatrix::outer(&[t.cos(), t.sin()]);
            let inc = p.evaluate(&m.add(&pe)).unwrap() - p.evaluate(&m).unwrap();
            assert!((0.5 - 1e-12..=2.0 + 1e-12).contains(&inc), "{inc}");
        }
    }

    #[test]
    fn rescale_is_identity_on_homogeneous_kinds() {
        for s in specs() {
            assert_eq!(rescale_operator(&s, 0.5, 4.0).unwrap(), s);
            assert_eq!(rescale_operator(&s, 1.0, 4.0).unwrap(), s);
        }
        assert_eq!(rescale_operator(&OperatorSpec::trace(), 0.125, 4.0).unwrap().kind(), OperatorKind::Trace);
        assert!(rescale_operator(&OperatorSpec::trace(), 0.0, 4.0).is_err());
        assert!(rescale_operator(&OperatorSpec::trace(), -1.0, 4.0).is_err());
    }

    #[test]
    fn halfspace_coefficient_examples() {
        let t = OperatorSpec::trace();
        let e = [0.6, 0.8];
        assert!((halfspace_coefficient(&t, 1.5, &e).unwrap() - 1.0 / 144.0).abs() < 1e-15);
        let p = OperatorSpec::pucci_plus(2.0).unwrap();
        assert!((halfspace_coefficient(&p, 1.5, &[1.0, 0.0]).unwrap() - 1.0 / 576.0).abs() < 1e-16);
        let near_one = halfspace_coefficient(&t, 1.0 + 1e-9, &[1.0]).unwrap();
        assert!((near_one - 0.5).abs() < 1e-6);
        assert!(halfspace_coefficient(&t, 1.5, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn halfspace_coefficient_solves_the_algebraic_relation() {
        for s in specs() {
            for gamma in [1.2, 1.5, 1.8] {
                let beta = beta_of(gamma).unwrap();
                let e = [0.8, -0.6];
                let c = halfspace_coefficient(&s, gamma, &e).unwrap();
                let fe = s.evaluate(&SymMatrix::outer(&e)).unwrap();
                assert!((c.powf(2.0 - gamma) * beta * (beta - 1.0) * fe - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn halfspace_profile_values() {
        let t = OperatorSpec::trace();
        let g = Grid::square(-1.0, 1.0, 5).unwrap();
        let u = halfspace_profile(&t, 1.5, &[1.0, 0.0], &g).unwrap();
        assert!((u.get(g.join([4, 2])) - 1.0 / 144.0).abs() < 1e-16);
        for idx in 0..g.len() {
            if g.coord(idx)[0] <= 0.0 {
                assert_eq!(u.get(idx), 0.0);
            }
        }
    }

    #[test]
    fn halfspace_profile_residual_is_second_order() {
        // |F(D²u) − u^{γ−1}| at points with x·e > 2h; the quartic's fourth
        // derivative is 24c, so the residual is (h²/12)·24c·(e₁⁴+e₂⁴) + cross terms.
        let t = OperatorSpec::trace();
        let th: f64 = 0.3;
        let e = [th.cos(), th.sin()];
        let mut errs = Vec::new();
        for n in [65, 129] {
            let g = Grid::square(-1.0, 1.0, n).unwrap();
            let h = g.h_max();
            let u = halfspace_profile(&t, 1.5, &e, &g).unwrap();
            let mut worst: f64 = 0.0;
            for idx in g.interior_indices() {
                let x = g.coord(idx);
                if x[0] * e[0] + x[1] * e[1] > 2.0 * h {
                    let r = t.evaluate(&hessian_central(&u, idx).unwrap()).unwrap() - u.get(idx).sqrt();
                    worst = worst.max(r.abs());
                }
            }
            errs.push(worst / (h * h));
        }
        assert!(errs[0] < 0.05 && errs[1] < 0.05, "{errs:?}");
        assert!((errs[0] / errs[1] - 1.0).abs() < 0.1, "{errs:?}");
    }

    #[test]
    fn pucci_d4_family_is_valid_bellman() {
        for lam in [1.0, 2.0, 3.5] {
            let fam = pucci_d4_family(2, lam);
            for a in &fam {
                let ev = a.eigenvalues();
                assert!(ev[0] >= 1.0 / lam - 1e-14 && ev[1] <= lam + 1e-14);
            }
        }
    }

    #[test]
    fn pucci_sub_differential_attains_value() {
        let p = OperatorSpec::pucci_plus(3.0).unwrap();
        for m in [SymMatrix::new_2d(1.0, 2.0, -0.5), SymMatrix::new_2d(-2.0, 0.0, 1.0), SymMatrix::new_1d(-0.7)] {
            let s = p.sub_differential(&m).unwrap();
            assert!((s.matrix.trace_product(&m) - p.evaluate(&m).unwrap()).abs() < 1e-12);
        }
    }

    fn sym_strategy() -> impl Strategy<Value = SymMatrix> {
        (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0).prop_map(|(a, b, c)| SymMatrix::new_2d(a, b, c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn positive_homogeneity(m in sym_strategy(), t in 0.01f64..100.0) {
            for s in specs() {
                let lhs = s.evaluate(&m.scale(t)).unwrap();
                let rhs = t * s.evaluate(&m).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn convexity(m in sym_strategy(), n in sym_strategy()) {
            for s in specs() {
                let mid = s.evaluate(&m.add(&n).scale(0.5)).unwrap();
                let avg = 0.5 * (s.evaluate(&m).unwrap() + s.evaluate(&n).unwrap());
                prop_assert!(mid <= avg + 1e-12 * (1.0 + avg.abs()));
            }
        }

        #[test]
        fn dominated_by_pucci(m in sym_strategy()) {
            for s in specs() {
                let p = OperatorSpec::pucci_plus(s.lambda()).unwrap();
                prop_assert!(s.evaluate(&m).unwrap() <= p.evaluate(&m).unwrap() + 1e-12);
            }
        }

        #[test]
        fn sub_differential_inequality(m in sym_strategy(), n in sym_strategy()) {
            for s in specs() {
                let sd = s.sub_differential(&m).unwrap();
                let fm = s.evaluate(&m).unwrap();
                prop_assert!((sd.matrix.trace_product(&m) - fm).abs() <= 1e-10 * (1.0 + fm.abs()));
                let inc = s.evaluate(&m.add(&n)).unwrap() - fm;
                prop_assert!(sd.matrix.trace_product(&n) <= inc + 1e-10 * (1.0 + inc.abs()));
            }
        }
    }
}
