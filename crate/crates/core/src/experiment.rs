//! Experiment configs, the solve → free boundary → scaling pipeline, run
//! artifacts and refinement studies.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::freeboundary::{self, normal_oscillation, FreeBoundaryOptions, FreeBoundarySet, PointClass};
use crate::grid::Grid;
use crate::operators::{ellipticity_check, min_halfspace_coefficient, EllipticityReport, OperatorSpec};
use crate::params::{beta_of, Params};
use crate::scaling::{
    convexity_margin, fit_growth_exponent, harnack_constant, hessian_ratio_sup, monotonicity_cone, profile_distance,
    rescale, select_blowup_point, BlowupSample, HarnackSample, HessianRatioEntry, ScalingReport,
};
use crate::solver::{solve, BoundaryData, ProblemSpec, SolveResult, SolverOptions};
use crate::sym::SymMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Trace,
    PucciPlus {
        lambda: f64,
    },
    /// `max_α tr(A_α M)`; each matrix given by its rows.
    Bellman {
        lambda: f64,
        family: Vec<Vec<Vec<f64>>>,
    },
}

impl OperatorConfig {
    pub fn build(&self) -> Result<OperatorSpec> {
        match self {
            OperatorConfig::Trace => Ok(OperatorSpec::trace()),
            OperatorConfig::PucciPlus { lambda } => OperatorSpec::pucci_plus(*lambda),
            OperatorConfig::Bellman { lambda, family } => {
                let mats = family.iter().map(|rows| SymMatrix::from_rows(rows)).collect::<Result<Vec<_>>>()?;
                OperatorSpec::bellman(*lambda, mats)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub kappa_tau: f64,
    pub delta_reg: f64,
    pub normal_window: f64,
    /// Largest growth-fit radius; default a quarter of the inradius.
    pub growth_r_max: Option<f64>,
    /// Distance from the domain boundary for the Hessian ratio; default a
    /// quarter of the inradius.
    pub hessian_margin: Option<f64>,
    pub rescale_radii: Vec<f64>,
    /// Empty: the domain midpoint and its shifts by a quarter of the inradius
    /// along each axis.
    pub harnack_centers: Vec<Vec<f64>>,
    pub harnack_radii: Vec<f64>,
    pub oscillation_radii: Vec<f64>,
    pub monotonicity_delta: f64,
    pub ellipticity_trials: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let fb = FreeBoundaryOptions::default();
        AnalysisConfig {
            kappa_tau: fb.kappa_tau,
            delta_reg: fb.delta_reg,
            normal_window: fb.normal_window,
            growth_r_max: None,
            hessian_margin: None,
            rescale_radii: vec![0.25, 0.125, 0.0625],
            harnack_centers: Vec::new(),
            harnack_radii: vec![0.5, 0.25, 0.125],
            oscillation_radii: vec![0.25, 0.125, 0.0625],
            monotonicity_delta: 0.5,
            ellipticity_trials: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub gamma: f64,
    pub operator: OperatorConfig,
    pub domain: DomainConfig,
    /// Points per axis.
    pub n: usize,
    pub boundary: BoundaryData,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Root for artifacts; each run writes to `<root>/<name>/`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path.is_empty() { "." } else { &path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| config_err(".", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(config_err("name", "must be a nonempty [A-Za-z0-9_-] identifier"));
        }
        beta_of(self.gamma).map_err(|e| config_err("gamma", e.to_string()))?;
        let dim = self.domain.lo.len();
        if !(1..=2).contains(&dim) || self.domain.hi.len() != dim {
            return Err(config_err("domain", "lo and hi must both have 1 or 2 components"));
        }
        for a in 0..dim {
            if !(self.domain.lo[a].is_finite()
                && self.domain.hi[a].is_finite()
                && self.domain.lo[a] < self.domain.hi[a])
            {
                return Err(config_err(&format!("domain.hi[{a}]"), "each axis needs finite lo < hi"));
            }
        }
        if self.n < 3 || self.n.is_multiple_of(2) {
            return Err(config_err("n", format!("must be odd and at least 3 so refinements nest, got {}", self.n)));
        }
        self.operator.build().map_err(|e| config_err("operator", e.to_string()))?;
        self.solver.validate().map_err(|e| config_err("solver", e.to_string()))?;
        let a = &self.analysis;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        for (field, v) in [("analysis.kappa_tau", a.kappa_tau), ("analysis.normal_window", a.normal_window)] {
            if !positive(v) {
                return Err(config_err(field, format!("must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&a.delta_reg) {
            return Err(config_err("analysis.delta_reg", "must lie in [0,1]"));
        }
        if !(-1.0..=1.0).contains(&a.monotonicity_delta) {
            return Err(config_err("analysis.monotonicity_delta", "must lie in [-1,1]"));
        }
        for (field, list) in [
            ("analysis.rescale_radii", &a.rescale_radii),
            ("analysis.harnack_radii", &a.harnack_radii),
            ("analysis.oscillation_radii", &a.oscillation_radii),
        ] {
            if let Some((k, v)) = list.iter().enumerate().find(|(_, v)| !positive(**v)) {
                return Err(config_err(&format!("{field}[{k}]"), format!("radii must be positive, got {v}")));
            }
        }
        for (field, v) in [("analysis.growth_r_max", a.growth_r_max), ("analysis.hessian_margin", a.hessian_margin)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(config_err(field, format!("must be nonnegative, got {v}")));
                }
            }
        }
        if let Some((k, _)) = a.harnack_centers.iter().enumerate().find(|(_, c)| c.len() != dim) {
            return Err(config_err(&format!("analysis.harnack_centers[{k}]"), format!("needs {dim} components")));
        }
        let problem = self.problem().map_err(|e| config_err("boundary", e.to_string()))?;
        problem
            .boundary
            .values(&problem.grid, &problem.operator, &problem.params)
            .map_err(|e| config_err("boundary", e.to_string()))?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain.lo.len()
    }

    pub fn grid(&self) -> Result<Grid> {
        let dim = self.dim();
        Grid::new(dim, &self.domain.lo, &self.domain.hi, &vec![self.n; dim])
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let op = self.operator.build()?;
        let params = Params::new(self.gamma, op.lambda())?;
        Ok(ProblemSpec::new(params, op, self.grid()?, self.boundary.clone()).with_options(self.solver))
    }

    /// Same experiment with `n → 2n − 1` applied `levels` times.
    pub fn refined(&self, levels: u32) -> Self {
        let mut c = self.clone();
        for _ in 0..levels {
            c.n = 2 * c.n - 1;
        }
        c
    }

    /// SHA-256 of the canonical JSON form, independent of `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn free_boundary_options(&self) -> FreeBoundaryOptions {
        FreeBoundaryOptions {
            kappa_tau: self.analysis.kappa_tau,
            delta_reg: self.analysis.delta_reg,
            normal_window: self.analysis.normal_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub converged: bool,
    pub iterations: usize,
    pub polish_iterations: usize,
    pub contact_settled: bool,
    pub final_residual: f64,
    pub residual_target: f64,
    pub howard_iterations_total: usize,
    pub min_unclamped: f64,
}

impl SolveSummary {
    fn of(r: &SolveResult) -> Self {
        SolveSummary {
            converged: r.converged,
            iterations: r.iterations,
            polish_iterations: r.polish_iterations,
            contact_settled: r.contact_settled,
            final_residual: r.residual_history.last().copied().unwrap_or(0.0),
            residual_target: r.residual_target,
            howard_iterations_total: r.howard_iterations.iter().sum(),
            min_unclamped: r.min_unclamped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeBoundarySummary {
    pub threshold: f64,
    pub contact_points: usize,
    pub boundary_points: usize,
    pub regular: usize,
    pub singular_candidate: usize,
    pub unresolved: usize,
    pub normals_unavailable: usize,
}

impl FreeBoundarySummary {
    fn of(fb: &FreeBoundarySet) -> Self {
        let count = |c: PointClass| fb.points.iter().filter(|p| p.class == c).count();
        FreeBoundarySummary {
            threshold: fb.threshold,
            contact_points: fb.contact.iter().filter(|&&c| c).count(),
            boundary_points: fb.points.len(),
            regular: count(PointClass::Regular),
            singular_candidate: count(PointClass::SingularCandidate),
            unresolved: count(PointClass::Unresolved),
            normals_unavailable: fb.points.iter().filter(|p| p.normal.is_none()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub config_hash: String,
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub gamma: f64,
    pub beta: f64,
    pub operator: String,
    /// Smallest half-space coefficient `c_{γ,e}` over directions.
    pub c_ref: f64,
    /// `‖u − u*‖_∞` when the boundary data is an exact half-space solution.
    pub oracle_error: Option<f64>,
    pub solve: SolveSummary,
    pub ellipticity: EllipticityReport,
    pub free_boundary: FreeBoundarySummary,
    pub scaling: ScalingReport,
}

pub struct RunOutput {
    pub config: ExperimentConfig,
    pub problem: ProblemSpec,
    pub result: SolveResult,
    pub free_boundary: FreeBoundarySet,
    pub report: RunReport,
    /// `(stage, milliseconds)`.
    pub timings: Vec<(String, f64)>,
}

/// Solve, extract the free boundary and measure every scaling quantity.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let problem = cfg.problem()?;
    let mut timings = Vec::new();
    let t = Instant::now();
    let result = solve(&problem)?;
    timings.push(("solve".to_string(), t.elapsed().as_secs_f64() * 1e3));

    let t = Instant::now();
    let fb = freeboundary::extract(&result.u, &problem.params, &problem.operator, &cfg.free_boundary_options())?;
    timings.push(("free_boundary".to_string(), t.elapsed().as_secs_f64() * 1e3));

    let t = Instant::now();
    let scaling = measure_scaling(cfg, &problem, &result, &fb)?;
    let ellipticity = ellipticity_check(&problem.operator, problem.grid.dim(), cfg.analysis.ellipticity_trials, seed)?;
    timings.push(("scaling".to_string(), t.elapsed().as_secs_f64() * 1e3));

    let grid = problem.grid;
    let oracle_error = match &cfg.boundary {
        BoundaryData::Halfspace { .. } => {
            let exact = cfg.boundary.values(&grid, &problem.operator, &problem.params)?;
            Some(result.u.values().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        }
        _ => None,
    };
    let report = RunReport {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        dim: grid.dim(),
        n: cfg.n,
        h: grid.h_max(),
        gamma: cfg.gamma,
        beta: problem.params.beta(),
        operator: problem.operator.reported_kind(grid.dim()).to_string(),
        c_ref: min_halfspace_coefficient(&problem.operator, cfg.gamma, grid.dim())?,
        oracle_error,
        solve: SolveSummary::of(&result),
        ellipticity,
        free_boundary: FreeBoundarySummary::of(&fb),
        scaling,
    };
    Ok(RunOutput { config: cfg.clone(), problem, result, free_boundary: fb, report, timings })
}

/// Default Harnack sample: the midpoint and its shifts by `±inradius/4`.
fn harnack_centers(grid: &Grid) -> Vec<Vec<f64>> {
    let dim = grid.dim();
    let mid: Vec<f64> = (0..dim).map(|a| 0.5 * (grid.lo()[a] + grid.hi()[a])).collect();
    let s = 0.25 * grid.inradius();
    let mut out = vec![mid.clone()];
    for a in 0..dim {
        for sign in [-1.0, 1.0] {
            let mut c = mid.clone();
            c[a] += sign * s;
            out.push(c);
        }
    }
    out
}

fn measure_scaling(
    cfg: &ExperimentConfig,
    p: &ProblemSpec,
    res: &SolveResult,
    fb: &FreeBoundarySet,
) -> Result<ScalingReport> {
    let a = &cfg.analysis;
    let grid = p.grid;
    let u = &res.u;
    let params = &p.params;
    let r0 = 0.25 * grid.inradius();
    let mut notes = Vec::new();

    let r_growth = a.growth_r_max.unwrap_or(r0);
    let beta_fit = match select_blowup_point(fb, &grid, r_growth) {
        Some(k) => match fit_growth_exponent(u, &fb.points[k].coord, Some(r_growth)) {
            Ok(fit) => Some(fit),
            Err(e) => {
                notes.push(format!("growth fit skipped: {e}"));
                None
            }
        },
        None => {
            notes.push(format!("growth fit skipped: no regular boundary point with B_{r_growth} in the domain"));
            None
        }
    };

    let centers = if a.harnack_centers.is_empty() { harnack_centers(&grid) } else { a.harnack_centers.clone() };
    let mut harnack_constants = Vec::new();
    for c in &centers {
        for &r in &a.harnack_radii {
            match harnack_constant(u, c, r, params) {
                Ok(k) => harnack_constants.push(HarnackSample { center: c.clone(), radius: r, constant: k }),
                Err(e) => notes.push(format!("harnack sample skipped: {e}")),
            }
        }
    }

    let margin = a.hessian_margin.unwrap_or(r0);
    let hr = hessian_ratio_sup(u, params, fb.threshold, margin);
    if hr.samples == 0 {
        notes.push("hessian ratio: no positivity-set point with a full stencil".to_string());
    }
    let hessian_ratio =
        vec![HessianRatioEntry { n: cfg.n, sup: hr.sup, tau: fb.threshold, margin, samples: hr.samples }];

    let mut radii = a.rescale_radii.clone();
    radii.sort_by(|x, y| y.total_cmp(x));
    let mut profile_distances = Vec::new();
    let mut blowup_center = None;
    let mut blowup_normal = None;
    let mut monotonicity = None;
    let mut convexity = None;
    if let Some(&r_max) = radii.first() {
        match select_blowup_point(fb, &grid, r_max) {
            Some(k) => {
                let pt = &fb.points[k];
                blowup_center = Some(pt.coord.clone());
                blowup_normal = pt.normal.as_ref().map(|n| n.normal.clone());
                let mut last = None;
                for &r in &radii {
                    match rescale(u, &pt.coord, r, params, &p.operator) {
                        Ok(resc) => {
                            let fit = profile_distance(&resc, params)?;
                            let cm = convexity_margin(&resc);
                            profile_distances.push(BlowupSample {
                                r,
                                distance: fit.distance,
                                direction: fit.direction.clone(),
                                convexity_margin: cm,
                                interpolation_scale: resc.interpolation_scale,
                            });
                            convexity = Some(cm);
                            last = Some((resc, fit.direction));
                        }
                        Err(e) => notes.push(format!("rescaling at r = {r} skipped: {e}")),
                    }
                }
                if let Some((resc, axis)) = last {
                    monotonicity = Some(monotonicity_cone(&resc, &axis, a.monotonicity_delta));
                }
            }
            None => notes.push(format!("blow-up skipped: no regular boundary point with B_{r_max} in the domain")),
        }
    }

    let normal_osc = a.oscillation_radii.iter().map(|&rho| (rho, normal_oscillation(fb, rho))).collect();
    Ok(ScalingReport {
        beta: params.beta(),
        threshold: fb.threshold,
        beta_fit,
        harnack_constants,
        hessian_ratio_sup: hessian_ratio,
        blowup_center,
        blowup_normal,
        profile_distances,
        convexity_margin: convexity,
        monotonicity_cone: monotonicity,
        normal_oscillation: normal_osc,
        notes,
    })
}

pub use crate::freeboundary::fmt_num;

pub fn solution_csv(out: &RunOutput) -> String {
    let u = &out.result.u;
    let g = u.grid();
    let mut s = String::from(if g.dim() == 1 { "x,u\n" } else { "x,y,u\n" });
    for i in 0..g.len() {
        let x = g.coord(i);
        for a in 0..g.dim() {
            s.push_str(&fmt_num(x[a]));
            s.push(',');
        }
        s.push_str(&fmt_num(u.get(i)));
        s.push('\n');
    }
    s
}

fn growth_csv(report: &ScalingReport) -> String {
    let mut s = String::from("log_r,log_sup_u\n");
    if let Some(fit) = &report.beta_fit {
        for (r, v) in fit.radii.iter().zip(&fit.sups) {
            s.push_str(&format!("{},{}\n", fmt_num(r.ln()), fmt_num(v.ln())));
        }
    }
    s
}

fn blowup_csv(report: &ScalingReport) -> String {
    let mut s = String::from("r,distance,e1,e2,convexity_margin\n");
    for b in &report.profile_distances {
        let e2 = b.direction.get(1).copied().unwrap_or(0.0);
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_num(b.r),
            fmt_num(b.distance),
            fmt_num(b.direction[0]),
            fmt_num(e2),
            fmt_num(b.convexity_margin)
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub stage_ms: Vec<(String, f64)>,
    pub files: Vec<FileEntry>,
}

/// `--out` beats the environment override, which beats the config.
pub fn output_root(cli_out: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Ok(p) = std::env::var(OUTPUT_ENV) {
        if !p.is_empty() {
            return PathBuf::from(p);
        }
    }
    PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| "out".to_string()))
}

pub const OUTPUT_ENV: &str = "ALTPHILLIPS_OUT";

fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<Vec<FileEntry>> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
        entries.push(FileEntry {
            name: name.to_string(),
            bytes: body.len(),
            sha256: hex::encode(Sha256::digest(body.as_bytes())),
        });
    }
    Ok(entries)
}

/// Writes all artifacts of a run into `<root>/<name>/` and returns the manifest.
pub fn write_artifacts(out: &RunOutput, root: &Path) -> Result<RunManifest> {
    let dir = root.join(&out.config.name);
    let t = Instant::now();
    let report = serde_json::to_string_pretty(&out.report).map_err(|e| Error::Io(e.to_string()))? + "\n";
    let files = vec![
        ("solution.csv", solution_csv(out)),
        ("fb.csv", freeboundary::to_csv(&out.free_boundary, &out.problem.grid)),
        ("report.json", report),
        ("growth.csv", growth_csv(&out.report.scaling)),
        ("blowup.csv", blowup_csv(&out.report.scaling)),
    ];
    let entries = write_files(&dir, &files)?;
    let mut stage_ms = out.timings.clone();
    stage_ms.push(("write".to_string(), t.elapsed().as_secs_f64() * 1e3));
    let manifest = RunManifest {
        config_hash: out.report.config_hash.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        stage_ms,
        files: entries,
    };
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))? + "\n";
    fs::write(dir.join("manifest.json"), body)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub converged: bool,
    pub iterations: usize,
    pub linf_error: Option<f64>,
    /// `log₂(e_{k−1}/e_k)` against the previous level.
    pub observed_order: Option<f64>,
    pub hessian_ratio_sup: f64,
    /// Relative change of `hessian_ratio_sup` against the previous level.
    pub hessian_ratio_change: Option<f64>,
    pub growth_slope: Option<f64>,
    pub harnack_max: Option<f64>,
    pub boundary_points: usize,
    pub final_profile_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub name: String,
    pub config_hash: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        let mut s = String::from(
            "n,h,converged,iterations,linf_error,observed_order,hessian_ratio_sup,hessian_ratio_change,growth_slope,harnack_max,boundary_points,final_profile_distance\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.n,
                fmt_num(r.h),
                r.converged,
                r.iterations,
                opt(r.linf_error),
                opt(r.observed_order),
                fmt_num(r.hessian_ratio_sup),
                opt(r.hessian_ratio_change),
                opt(r.growth_slope),
                opt(r.harnack_max),
                r.boundary_points,
                opt(r.final_profile_distance)
            ));
        }
        s
    }
}

/// Runs the experiment at `n, 2n−1, …` (`levels` grids).
pub fn convergence(cfg: &ExperimentConfig, levels: usize, seed: u64) -> Result<(ConvergenceTable, Vec<RunOutput>)> {
    if levels < 2 {
        return Err(config_err("levels", format!("a refinement study needs at least 2 levels, got {levels}")));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut outputs = Vec::new();
    for k in 0..levels {
        let level = cfg.refined(k as u32);
        let out = run_experiment(&level, seed)?;
        let rep = &out.report;
        let prev = rows.last();
        let err = rep.oracle_error;
        let hr = rep.scaling.hessian_ratio_sup[0].sup;
        rows.push(ConvergenceRow {
            n: level.n,
            h: rep.h,
            converged: rep.solve.converged,
            iterations: rep.solve.iterations,
            linf_error: err,
            observed_order: match (prev.and_then(|p| p.linf_error), err) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
                _ => None,
            },
            hessian_ratio_sup: hr,
            hessian_ratio_change: prev
                .filter(|p| p.hessian_ratio_sup > 0.0)
                .map(|p| (hr - p.hessian_ratio_sup).abs() / p.hessian_ratio_sup),
            growth_slope: rep.scaling.beta_fit.as_ref().map(|f| f.slope),
            harnack_max: rep.scaling.harnack_constants.iter().map(|h| h.constant).reduce(f64::max),
            boundary_points: rep.free_boundary.boundary_points,
            final_profile_distance: rep.scaling.profile_distances.last().map(|b| b.distance),
        });
        outputs.push(out);
    }
    Ok((ConvergenceTable { name: cfg.name.clone(), config_hash: cfg.hash(), rows }, outputs))
}

pub fn write_convergence(table: &ConvergenceTable, root: &Path) -> Result<()> {
    let dir = root.join(&table.name);
    let json = serde_json::to_string_pretty(table).map_err(|e| Error::Io(e.to_string()))? + "\n";
    write_files(&dir, &[("convergence.csv", table.to_csv()), ("convergence.json", json)])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORACLE: &str = r#"{
        "name": "oracle",
        "gamma": 1.5,
        "operator": {"kind": "trace"},
        "domain": {"lo": [-1.0], "hi": [1.0]},
        "n": 1025,
        "boundary": {"type": "halfspace", "direction": [1.0]}
    }"#;

    fn with(field: &str, value: &str) -> String {
        let mut v: serde_json::Value = serde_json::from_str(ORACLE).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(value).unwrap();
        let mut cur = &mut v;
        let parts: Vec<&str> = field.split('.').collect();
        for p in &parts[..parts.len() - 1] {
            cur = cur.get_mut(*p).unwrap();
        }
        cur[parts[parts.len() - 1]] = parsed;
        v.to_string()
    }

    fn config_path(text: &str) -> (String, String) {
        match ExperimentConfig::from_json(text) {
            Err(Error::Config { path, message }) => (path, message),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(ORACLE).unwrap();
        assert_eq!(cfg.solver, SolverOptions::default());
        assert_eq!(cfg.analysis, AnalysisConfig::default());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn gamma_outside_interval_cites_it() {
        let (path, msg) = config_path(&with("gamma", "2.5"));
        assert_eq!(path, "gamma");
        assert!(msg.contains("(1,2)"), "{msg}");
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let (path, msg) = config_path(&with("solver", r#"{"tol_residual": 1e-9, "bogus": 1}"#));
        assert_eq!(path, "solver.bogus");
        assert!(msg.contains("unknown field"));
        let (path, _) = config_path(&with("analysis", r#"{"rescale_radii": [0.25, -1.0]}"#));
        assert_eq!(path, "analysis.rescale_radii[1]");
        let (path, _) = config_path(&with("extra", "1"));
        assert_eq!(path, "extra");
        let (path, _) = config_path(&with("gamma", "\"1.5\""));
        assert_eq!(path, "gamma");
    }

    #[test]
    fn structural_errors() {
        assert_eq!(config_path(&with("n", "1024")).0, "n");
        assert_eq!(config_path(&with("domain", r#"{"lo": [1.0], "hi": [-1.0]}"#)).0, "domain.hi[0]");
        assert_eq!(config_path(&with("operator", r#"{"kind": "pucci_plus", "lambda": 0.5}"#)).0, "operator");
        assert_eq!(config_path(&with("boundary", r#"{"type": "constant", "value": -1.0}"#)).0, "boundary");
        assert_eq!(config_path(&with("boundary", r#"{"type": "halfspace", "direction": [1.0, 0.0]}"#)).0, "boundary");
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::from_json(ORACLE).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.gamma = 1.6;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn oracle_pipeline() {
        let cfg = ExperimentConfig::from_json(ORACLE).unwrap();
        let out = run_experiment(&cfg, 0).unwrap();
        let rep = &out.report;
        assert!(rep.solve.converged);
        assert!(rep.oracle_error.unwrap() < 5e-6);
        let fit = rep.scaling.beta_fit.as_ref().unwrap();
        assert!((3.9..=4.1).contains(&fit.slope));
        assert!((rep.scaling.hessian_ratio_sup[0].sup - 1.0).abs() < 0.05);
        assert_eq!(rep.free_boundary.boundary_points, 1);
        let csv = solution_csv(&out);
        assert_eq!(csv.lines().count(), 1026);
        assert!(csv.lines().nth(1).unwrap().starts_with("-1.0000000000000000e0,"));
    }

    #[test]
    fn convergence_needs_two_levels() {
        let cfg = ExperimentConfig::from_json(ORACLE).unwrap();
        assert!(matches!(convergence(&cfg, 1, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn refinement_nests() {
        let cfg = ExperimentConfig::from_json(&with("n", "257")).unwrap();
        assert_eq!(cfg.refined(2).n, 1025);
    }
}
