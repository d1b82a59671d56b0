//! The acceptance suite: every criterion as a named check with its measured
//! values and pinned thresholds.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::experiment::{run_experiment, solution_csv, ExperimentConfig, RunOutput};
use crate::freeboundary::{angle_between, to_csv, PointClass};
use crate::operators::{ellipticity_check, random_symmetric, OperatorSpec};
use crate::solver::{comparison_test, laplacian_margin, measure_fd_constant, BoundaryData, ProblemSpec};
use crate::sym::SymMatrix;
use crate::{Grid, Params};

pub const ORACLE_1D_TRACE: &str = include_str!("../configs/oracle_1d_trace.json");
pub const ORACLE_1D_PUCCI: &str = include_str!("../configs/oracle_1d_pucci.json");
pub const ORACLE_1D_GAMMA18: &str = include_str!("../configs/oracle_1d_gamma18.json");
pub const HALFSPACE_2D: &str = include_str!("../configs/halfspace_2d.json");
pub const BUMP_2D: &str = include_str!("../configs/bump_2d.json");

/// Deliberate defects for smoke-testing the suite itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Flips the sign of `u^{γ−1}` in the subsolution check.
    RhsSign,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Run only these criteria (all when `None`).
    pub only: Option<Vec<u8>>,
    pub mutation: Option<Mutation>,
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Measured values against thresholds.
    pub detail: String,
    pub seconds: f64,
    pub budget_seconds: Option<f64>,
}

impl CriterionResult {
    pub fn over_budget(&self) -> bool {
        self.budget_seconds.is_some_and(|b| self.seconds > b)
    }

    pub fn ok(&self) -> bool {
        self.passed && !self.over_budget()
    }
}

#[derive(Debug, Clone)]
pub struct SuiteSummary {
    pub results: Vec<CriterionResult>,
}

impl SuiteSummary {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CriterionResult::ok)
    }

    /// One line per criterion; contains no timings, so identical runs render
    /// identically.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let tag = if r.ok() { "PASS" } else { "FAIL" };
            let budget = if r.over_budget() { " [runtime budget exceeded]" } else { "" };
            s.push_str(&format!("{tag} {:>2} {}: {}{budget}\n", r.id, r.name, r.detail));
        }
        let passed = self.results.iter().filter(|r| r.ok()).count();
        s.push_str(&format!("{passed}/{} criteria passed\n", self.results.len()));
        s
    }

    pub fn render_timings(&self) -> String {
        self.results
            .iter()
            .map(|r| match r.budget_seconds {
                Some(b) => format!("criterion {:>2}: {:.2} s (budget {b} s)\n", r.id, r.seconds),
                None => format!("criterion {:>2}: {:.2} s\n", r.id, r.seconds),
            })
            .collect()
    }
}

/// Solved experiments shared between criteria, keyed by `(name, n)`.
struct Cache {
    seed: u64,
    runs: BTreeMap<(String, usize), RunOutput>,
}

impl Cache {
    fn get(&mut self, cfg: &ExperimentConfig) -> Result<&RunOutput> {
        let key = (cfg.name.clone(), cfg.n);
        if !self.runs.contains_key(&key) {
            let out = run_experiment(cfg, self.seed)?;
            self.runs.insert(key.clone(), out);
        }
        Ok(&self.runs[&key])
    }
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).expect("bundled config is valid")
}

/// `n → (n+1)/2` applied `levels` times.
fn coarsened(cfg: &ExperimentConfig, levels: u32) -> ExperimentConfig {
    let mut c = cfg.clone();
    for _ in 0..levels {
        c.n = c.n.div_ceil(2);
    }
    c
}

fn fmt(v: f64) -> String {
    format!("{v:.4e}")
}

fn check(ok: &mut bool, cond: bool) -> &'static str {
    *ok &= cond;
    if cond {
        "ok"
    } else {
        "VIOLATED"
    }
}

pub fn run_suite(opts: &SuiteOptions) -> SuiteSummary {
    let mut cache = Cache { seed: opts.seed, runs: BTreeMap::new() };
    type Item = (u8, &'static str, Option<f64>, fn(&mut Cache, &SuiteOptions) -> Result<(bool, String)>);
    let items: [Item; 10] = [
        (1, "1D closed-form recovery (trace)", Some(5.0), |c, _| oracle_1d(c, ORACLE_1D_TRACE)),
        (2, "1D closed-form recovery (Pucci, lambda=2)", Some(10.0), |c, _| oracle_1d(c, ORACLE_1D_PUCCI)),
        (3, "growth exponent", Some(30.0), growth_exponent),
        (4, "Harnack uniformity", Some(120.0), harnack_uniformity),
        (5, "Hessian ratio", Some(120.0), hessian_ratio),
        (6, "subharmonic inequality", None, subharmonic),
        (7, "blow-up convergence", Some(180.0), blowup),
        (8, "regular-point density", None, density),
        (9, "normal oscillation trend", None, oscillation),
        (10, "structural properties", None, structural),
    ];
    let mut results = Vec::new();
    for (id, name, budget, f) in items {
        if opts.only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let (passed, detail) = match f(&mut cache, opts) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        results.push(CriterionResult {
            id,
            name,
            passed,
            detail,
            seconds: t.elapsed().as_secs_f64(),
            budget_seconds: budget,
        });
    }
    SuiteSummary { results }
}

fn oracle_1d(cache: &mut Cache, text: &str) -> Result<(bool, String)> {
    let fine = config(text);
    let mut errs = Vec::new();
    for k in (0..3).rev() {
        let out = cache.get(&coarsened(&fine, k))?;
        errs.push(out.report.oracle_error.expect("half-space data has an oracle"));
    }
    let out = cache.get(&fine)?;
    let orders = [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()];
    let h = out.report.h;
    let fb_off = out.free_boundary.points.iter().map(|p| p.coord[0].abs()).fold(f64::INFINITY, f64::min);
    let mut ok = out.report.solve.converged && out.free_boundary.points.len() == 1;
    let d = format!(
        "linf_err(n=1025)={} (<=5e-6 {}), orders={},{} (>=1.9 {}), fb offset={}h (<=2h {}), boundary points={}",
        fmt(errs[2]),
        check(&mut ok, errs[2] <= 5e-6),
        fmt(orders[0]),
        fmt(orders[1]),
        check(&mut ok, orders.iter().all(|&o| o >= 1.9)),
        fmt(fb_off / h),
        check(&mut ok, fb_off <= 2.0 * h),
        out.free_boundary.points.len()
    );
    Ok((ok, d))
}

fn slope_of(out: &RunOutput) -> Option<f64> {
    out.report.scaling.beta_fit.as_ref().map(|f| f.slope)
}

fn growth_exponent(cache: &mut Cache, _: &SuiteOptions) -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (text, lo, hi) in [(ORACLE_1D_TRACE, 3.9, 4.1), (ORACLE_1D_PUCCI, 3.9, 4.1), (ORACLE_1D_GAMMA18, 9.7, 10.3)] {
        let cfg = config(text);
        let out = cache.get(&cfg)?;
        let s = slope_of(out);
        let pass = s.is_some_and(|s| (lo..=hi).contains(&s));
        parts.push(format!(
            "{} n={}: slope={} in [{lo},{hi}] {}",
            cfg.name,
            cfg.n,
            s.map(fmt).unwrap_or_else(|| "unavailable".into()),
            check(&mut ok, pass)
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn harnack_max(out: &RunOutput) -> f64 {
    out.report.scaling.harnack_constants.iter().map(|h| h.constant).fold(f64::NEG_INFINITY, f64::max)
}

fn harnack_uniformity(cache: &mut Cache, _: &SuiteOptions) -> Result<(bool, String)> {
    let fine = config(HALFSPACE_2D);
    let coarse = cache.get(&coarsened(&fine, 1))?;
    let (kc, samples_c) = (harnack_max(coarse), coarse.report.scaling.harnack_constants.len());
    let out = cache.get(&fine)?;
    let (kf, samples_f) = (harnack_max(out), out.report.scaling.harnack_constants.len());
    let ratio = kf.max(kc) / kf.min(kc);
    let mut ok = true;
    let d = format!(
        "max C(n=129)={} max C(n=257)={} over {samples_c}/{samples_f} samples (15 {}), finite {}, change ratio={} (<=2 {})",
        fmt(kc),
        fmt(kf),
        check(&mut ok, samples_c == 15 && samples_f == 15),
        check(&mut ok, kc.is_finite() && kf.is_finite() && kc > 0.0),
        fmt(ratio),
        check(&mut ok, ratio <= 2.0)
    );
    Ok((ok, d))
}

fn hessian_sup(out: &RunOutput) -> f64 {
    out.report.scaling.hessian_ratio_sup[0].sup
}

fn hessian_ratio(cache: &mut Cache, _: &SuiteOptions) -> Result<(bool, String)> {
    let mut ok = true;
    let trace = hessian_sup(cache.get(&config(ORACLE_1D_TRACE))?);
    let pucci = hessian_sup(cache.get(&config(ORACLE_1D_PUCCI))?);
    let fine = config(BUMP_2D);
    let bc = hessian_sup(cache.get(&coarsened(&fine, 1))?);
    let bf = hessian_sup(cache.get(&fine)?);
    let change = (bf - bc).abs() / bc;
    let d = format!(
        "trace={} (1 +-5% {}), pucci={} (0.5 +-5% {}), bump n=129->257: {}->{} change={} (<=20% {})",
        fmt(trace),
        check(&mut ok, (trace - 1.0).abs() <= 0.05),
        fmt(pucci),
        check(&mut ok, (pucci - 0.5).abs() <= 0.05 * 0.5),
        fmt(bc),
        fmt(bf),
        fmt(change),
        check(&mut ok, bc > 0.0 && change <= 0.2)
    );
    Ok((ok, d))
}

fn subharmonic(cache: &mut Cache, opts: &SuiteOptions) -> Result<(bool, String)> {
    let flip = opts.mutation == Some(Mutation::RhsSign);
    if cache.runs.is_empty() {
        cache.get(&config(ORACLE_1D_TRACE))?;
    }
    let mut ok = true;
    let mut parts = Vec::new();
    // C_fd from the half-space oracle of each experiment's operator and γ on
    // its coarsest solved grid (keys sort by n within a name)
    let mut c_fd_by_name: BTreeMap<&str, f64> = BTreeMap::new();
    for ((name, n), out) in &cache.runs {
        if !out.report.solve.converged {
            continue;
        }
        let p: &ProblemSpec = &out.problem;
        let c_fd = match c_fd_by_name.get(name.as_str()) {
            Some(&c) => c,
            None => {
                let c = measure_fd_constant(&p.operator, &p.params, &p.grid)?;
                c_fd_by_name.insert(name, c);
                c
            }
        };
        let gamma = p.params.gamma();
        let rhs = |v: f64| {
            let r = if v > 0.0 { v.powf(gamma - 1.0) } else { 0.0 };
            if flip {
                -r
            } else {
                r
            }
        };
        let margin = laplacian_margin(&out.result.u, rhs);
        let threshold = c_fd * out.report.h.powi(2);
        let pass = margin <= threshold;
        parts.push(format!("{name}@{n}: {} <= {} {}", fmt(margin), fmt(threshold), check(&mut ok, pass)));
    }
    Ok((ok, parts.join("; ")))
}

fn blowup(cache: &mut Cache, _: &SuiteOptions) -> Result<(bool, String)> {
    let out = cache.get(&config(BUMP_2D))?;
    let s = &out.report.scaling;
    let c = out.report.c_ref;
    let dists: Vec<f64> = s.profile_distances.iter().map(|b| b.distance / c).collect();
    let mut ok = dists.len() == 3;
    let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    let last = dists.last().copied().unwrap_or(f64::INFINITY);
    let angle = match (s.profile_distances.last(), &s.blowup_normal) {
        (Some(b), Some(n)) => angle_between(&b.direction, n),
        _ => f64::INFINITY,
    };
    let regular = s
        .blowup_center
        .as_ref()
        .is_some_and(|x| out.free_boundary.points.iter().any(|p| &p.coord == x && p.class == PointClass::Regular));
    let radii: Vec<String> = s.profile_distances.iter().map(|b| fmt(b.r)).collect();
    let d = format!(
        "center={:?} regular {}, r={} distance/c={} strictly decreasing {}, final={} (<=0.15 {}), direction vs normal={} rad (<=0.1 {})",
        s.blowup_center.clone().unwrap_or_default(),
        check(&mut ok, regular),
        radii.join(","),
        dists.iter().map(|d| fmt(*d)).collect::<Vec<_>>().join(","),
        check(&mut ok, decreasing),
        fmt(last),
        check(&mut ok, last <= 0.15),
        fmt(angle),
        check(&mut ok, angle <= 0.1)
    );
    Ok((ok, d))
}

fn density(cache: &mut Cache, _: &SuiteOptions) -> Result<(bool, String)> {
    let out = cache.get(&config(HALFSPACE_2D))?;
    let pts = &out.free_boundary.points;
    let regular = pts.iter().filter(|p| p.class == PointClass::Regular).count();
    let dens: Vec<f64> = pts.iter().filter_map(|p| p.density_smallest_r).collect();
    let lo = dens.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = dens.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut ok = !pts.is_empty();
    let d = format!(
        "{regular}/{} regular {}, smallest-radius density in [{}, {}] (within [0.4,0.6] {})",
        pts.len(),
        check(&mut ok, regular == pts.len()),
        fmt(lo),
        fmt(hi),
        check(&mut ok, dens.len() == pts.len() && lo >= 0.4 && hi <= 0.6)
    );
    Ok((ok, d))
}

fn oscillation(cache: &mut Cache, _: &SuiteOptions) -> Result<(bool, String)> {
    let out = cache.get(&config(BUMP_2D))?;
    let osc = &out.report.scaling.normal_oscillation;
    let mut ok = osc.len() == 3;
    let trend = osc.windows(2).all(|w| w[1].1 <= w[0].1 + 0.02);
    let vals: Vec<String> = osc.iter().map(|(r, o)| format!("rho={}:{}", fmt(*r), fmt(*o))).collect();
    let d = format!("{} nonincreasing within +0.02 {}", vals.join(", "), check(&mut ok, trend));
    Ok((ok, d))
}

fn random_family(rng: &mut ChaCha8Rng, lambda: f64) -> Vec<SymMatrix> {
    let mut fam = vec![SymMatrix::identity(2)];
    for _ in 0..3 {
        let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let l1: f64 = rng.gen_range(1.0 / lambda..=lambda);
        let l2: f64 = rng.gen_range(1.0 / lambda..=lambda);
        let (c, s) = (th.cos(), th.sin());
        fam.push(SymMatrix::new_2d(l1 * c * c + l2 * s * s, (l1 - l2) * c * s, l1 * s * s + l2 * c * c));
    }
    fam
}

fn structural(_: &mut Cache, opts: &SuiteOptions) -> Result<(bool, String)> {
    const SAMPLES: usize = 1000;
    let lambda = 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ops = [
        OperatorSpec::trace(),
        OperatorSpec::pucci_plus(lambda)?,
        OperatorSpec::bellman(lambda, random_family(&mut rng, lambda))?,
    ];
    let pucci = OperatorSpec::pucci_plus(lambda)?;
    let (mut homog, mut convex, mut dominance) = (0usize, 0usize, 0usize);
    for k in 0..SAMPLES {
        let op = &ops[k % ops.len()];
        let m = random_symmetric(&mut rng, 2, 10.0);
        let n = random_symmetric(&mut rng, 2, 10.0);
        let t: f64 = rng.gen_range(0.0..10.0);
        let fm = op.evaluate(&m)?;
        let fn_ = op.evaluate(&n)?;
        let scale = 1.0 + fm.abs() + fn_.abs();
        if (op.evaluate(&m.scale(t))? - t * fm).abs() <= 1e-12 * (1.0 + t) * scale {
            homog += 1;
        }
        let mid = m.add(&n).scale(0.5);
        if op.evaluate(&mid)? <= 0.5 * (fm + fn_) + 1e-12 * scale {
            convex += 1;
        }
        let fam = OperatorSpec::bellman(lambda, random_family(&mut rng, lambda))?;
        if fam.evaluate(&m)? <= pucci.evaluate(&m)? + 1e-12 * scale {
            dominance += 1;
        }
    }
    let mut ell_fail = 0;
    for op in &ops {
        for dim in [1, 2] {
            if op.family().iter().any(|a| a.dim() != dim) {
                continue;
            }
            let rep = ellipticity_check(op, dim, SAMPLES, opts.seed)?;
            ell_fail += usize::from(!rep.passed);
        }
    }

    let grid = Grid::square(-1.0, 1.0, 65)?;
    let params = Params::new(1.5, 1.0)?;
    let base = ProblemSpec::new(params, OperatorSpec::trace(), grid, BoundaryData::Constant { value: 0.0 });
    let bump = |a: f64| BoundaryData::Bump { amplitude: a, center: vec![1.0, 1.0], width: 1.0 };
    let half = |s: f64| BoundaryData::Halfspace { direction: vec![1.0, 0.0], scale: s };
    let pairs = [
        (bump(0.01), bump(0.02)),
        (half(0.5), half(1.0)),
        (BoundaryData::Constant { value: 1e-3 }, BoundaryData::Constant { value: 2e-3 }),
    ];
    let mut comparison_ok = 0;
    let mut worst = f64::NEG_INFINITY;
    for (g1, g2) in &pairs {
        let rep = comparison_test(&base, g1, g2)?;
        comparison_ok += usize::from(rep.passed);
        worst = worst.max(rep.max_violation);
    }

    // identical inputs, identical bytes
    let det = base.with_boundary(bump(0.02));
    let run = |p: &ProblemSpec| -> Result<(String, String)> {
        let cfg_text = format!(
            r#"{{"name":"determinism","gamma":1.5,"operator":{{"kind":"trace"}},"domain":{{"lo":[-1.0,-1.0],"hi":[1.0,1.0]}},"n":{},"boundary":{}}}"#,
            p.grid.n()[0],
            serde_json::to_string(&p.boundary).expect("serializable")
        );
        let out = run_experiment(&config(&cfg_text), opts.seed)?;
        Ok((solution_csv(&out), to_csv(&out.free_boundary, &out.problem.grid)))
    };
    let identical = run(&det)? == run(&det)?;

    let mut ok = true;
    let d = format!(
        "homogeneity {homog}/{SAMPLES} {}, convexity {convex}/{SAMPLES} {}, Pucci dominance {dominance}/{SAMPLES} {}, ellipticity failures={ell_fail} {}, comparison {comparison_ok}/3 (max u1-u2={}) {}, repeat run byte-identical {}",
        check(&mut ok, homog == SAMPLES),
        check(&mut ok, convex == SAMPLES),
        check(&mut ok, dominance == SAMPLES),
        check(&mut ok, ell_fail == 0),
        fmt(worst),
        check(&mut ok, comparison_ok == 3),
        check(&mut ok, identical)
    );
    Ok((ok, d))
}
