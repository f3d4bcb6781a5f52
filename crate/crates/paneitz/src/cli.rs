//! Command-line front end: configuration, pipeline orchestration, and
//! artifact persistence.
//!
//! Every run writes its artifacts plus a `manifest.json` into the output
//! directory — the manifest is written even when the stage fails, with the
//! failure named. Data artifacts (CSV/JSON/SVG) are byte-deterministic for
//! identical config and seed; the manifest carries wall-clock timings and is
//! the one exception.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bifurcation::{self, continue_branch, instants, CoefficientPath, ContinuationOpts};
use crate::coeffs::{appendix_certificate, PaneitzCoefficients};
use crate::diagram::{self, Curve, DiagramOpts};
use crate::error::{Error, Result};
use crate::profile::Profile;
use crate::shooting::{self, SolveOpts};
use crate::sturm::{spectrum, Spectrum};
use crate::verify;

pub const OUT_ENV: &str = "PANEITZ_OUT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileConfig {
    Sphere { n: u32, k: u32, c: f64 },
    Table { path: PathBuf },
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self::Sphere { n: 3, k: 1, c: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CoeffConfig {
    /// Constant (α, β).
    Fixed { alpha: f64, beta: f64 },
    /// Built-in one-parameter family a(s) = s, b(s) = c·s².
    Path { c: f64 },
    /// Product-Einstein geometry with the second constant swept as 2s.
    Einstein { n: u32, m: u32, lambda0: f64 },
}

impl Default for CoeffConfig {
    fn default() -> Self {
        Self::Path { c: 0.2 }
    }
}

fn default_q() -> f64 {
    3.0
}
fn default_gridsize() -> usize {
    4000
}
fn default_solution_grid() -> usize {
    801
}
fn default_tol() -> f64 {
    1e-9
}
fn default_i_max() -> usize {
    3
}
fn default_max_points() -> usize {
    400
}
fn default_s() -> f64 {
    1.0
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DataConfig {
    pub a: f64,
    pub b: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { a: 2.0, b: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanConfig {
    pub a_lo: f64,
    pub a_hi: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub na: usize,
    pub nb: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            a_lo: 0.2,
            a_hi: 3.0,
            b_lo: -5.0,
            b_hi: 5.0,
            na: 60,
            nb: 60,
        }
    }
}

/// One run's full configuration; every field has a default so flag-only
/// invocations work.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileConfig,
    pub coefficients: CoeffConfig,
    #[serde(rename = "q")]
    pub q: f64,
    /// Spectrum mesh cells.
    pub gridsize: usize,
    /// Assembled solution grid nodes.
    pub solution_grid: usize,
    pub tol: f64,
    /// Parameter at which path sources are evaluated for single-point stages.
    pub s: f64,
    pub s_max: Option<f64>,
    pub i_max: usize,
    /// Continuation point budget per branch.
    pub max_points: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Initial data for shoot/solve.
    pub data: DataConfig,
    pub scan: ScanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: ProfileConfig::default(),
            coefficients: CoeffConfig::default(),
            q: default_q(),
            gridsize: default_gridsize(),
            solution_grid: default_solution_grid(),
            tol: default_tol(),
            s: default_s(),
            s_max: None,
            i_max: default_i_max(),
            max_points: default_max_points(),
            seed: 0,
            out: default_out(),
            data: DataConfig::default(),
            scan: ScanConfig::default(),
        }
    }
}

impl RunConfig {
    /// Check the numeric options, naming the failing one.
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 7] = [
            ("q must exceed 1", self.q > 1.0),
            ("gridsize must be at least 40", self.gridsize >= 40),
            ("solution_grid must be at least 401", self.solution_grid >= 401),
            ("tol must be positive", self.tol > 0.0),
            ("s must be positive", self.s > 0.0),
            ("i_max must be at least 1", self.i_max >= 1),
            ("max_points must be at least 8", self.max_points >= 8),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::InvalidConfig(name.into()));
            }
        }
        if let Some(sm) = self.s_max {
            if !(sm > 0.0) {
                return Err(Error::InvalidConfig("s_max must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<Profile> {
        match &self.profile {
            ProfileConfig::Sphere { n, k, c } => Profile::sphere(*n, *k, *c),
            ProfileConfig::Table { path } => {
                let text = fs::read_to_string(path)?;
                let parsed: TableFile = serde_json::from_str(&text)?;
                Profile::tabulated(parsed.d, parsed.j0, parsed.j1, &parsed.samples)
            }
        }
    }

    /// The coefficient path, for stages that sweep the parameter.
    pub fn path(&self) -> Result<CoefficientPath> {
        match &self.coefficients {
            CoeffConfig::Fixed { .. } => Err(Error::InvalidConfig(
                "this command needs a parameterized coefficient source, \
                 but the config fixes (alpha, beta)"
                    .into(),
            )),
            CoeffConfig::Path { c } => CoefficientPath::linear_quadratic(*c, self.q),
            CoeffConfig::Einstein { n, m, lambda0 } => {
                CoefficientPath::einstein_product(*n, *m, *lambda0, self.q)
            }
        }
    }

    /// A single coefficient set, for stages that work at one parameter value.
    pub fn point_coeffs(&self) -> Result<PaneitzCoefficients> {
        match &self.coefficients {
            CoeffConfig::Fixed { alpha, beta } => {
                PaneitzCoefficients::new(*alpha, *beta, self.q)
            }
            _ => self.path()?.coeffs(self.s),
        }
    }
}

#[derive(Debug, Deserialize)]
struct TableFile {
    d: f64,
    j0: u32,
    j1: u32,
    samples: Vec<[f64; 2]>,
}

#[derive(Debug, Parser)]
#[command(name = "paneitz", version, about = "Branch analysis for a family of fourth-order radial equations")]
pub struct Cli {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (also settable via PANEITZ_OUT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Spectrum mesh cells.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Nonlinearity exponent.
    #[arg(long, global = true)]
    pub q: Option<f64>,
    /// Built-in path curvature; selects the built-in coefficient path.
    #[arg(long, global = true)]
    pub c: Option<f64>,
    /// Deepest bifurcation index to use.
    #[arg(long, global = true)]
    pub imax: Option<usize>,
    /// Continuation parameter cap.
    #[arg(long, global = true)]
    pub smax: Option<f64>,
    /// Seed for randomized sweeps.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Emit the coefficient samples for the configured source.
    Coeffs,
    /// Emit the profile's weighted eigenvalue ladder.
    Spectrum,
    /// Locate the degeneration instants of the trivial branch.
    BifurcationPoints,
    /// Evaluate the shooting residual at one initial datum.
    Shoot {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
    },
    /// Evaluate the shooting residual on a lattice and flag candidate cells.
    Scan,
    /// Newton-solve the boundary value problem from an initial guess.
    Solve {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
    },
    /// Continue one solution branch out of its bifurcation point.
    Branch {
        #[arg(long, default_value_t = 1)]
        index: usize,
    },
    /// Continue all branches and render the bifurcation diagram.
    Diagram,
    /// Cross-check the product-geometry discriminant closed forms.
    VerifyAppendix {
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        m: Option<u32>,
    },
    /// Scan a coefficient sample expected to admit no nontrivial solution.
    NonexistenceScan,
    /// Run the complete verification suite.
    VerifyAll,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Coeffs => "coeffs",
            Command::Spectrum => "spectrum",
            Command::BifurcationPoints => "bifurcation-points",
            Command::Shoot { .. } => "shoot",
            Command::Scan => "scan",
            Command::Solve { .. } => "solve",
            Command::Branch { .. } => "branch",
            Command::Diagram => "diagram",
            Command::VerifyAppendix { .. } => "verify-appendix",
            Command::NonexistenceScan => "nonexistence-scan",
            Command::VerifyAll => "verify-all",
        }
    }
}

/// Config file → environment → flags, later layers winning.
pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
        None => RunConfig::default(),
    };
    if let Ok(dir) = std::env::var(OUT_ENV) {
        if !dir.is_empty() {
            cfg.out = PathBuf::from(dir);
        }
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(g) = cli.grid {
        cfg.gridsize = g;
    }
    if let Some(q) = cli.q {
        cfg.q = q;
    }
    if let Some(c) = cli.c {
        cfg.coefficients = CoeffConfig::Path { c };
    }
    if let Some(i) = cli.imax {
        cfg.i_max = i;
    }
    if let Some(s) = cli.smax {
        cfg.s_max = Some(s);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// What one pipeline stage produced.
struct Stage {
    artifacts: Vec<String>,
    summary: serde_json::Value,
    pass: bool,
    failure: Option<String>,
}

impl Stage {
    fn ok(artifacts: Vec<String>, summary: serde_json::Value) -> Self {
        Self {
            artifacts,
            summary,
            pass: true,
            failure: None,
        }
    }

    fn verdict(
        artifacts: Vec<String>,
        summary: serde_json::Value,
        pass: bool,
        failure: impl Into<String>,
    ) -> Self {
        Self {
            artifacts,
            summary,
            pass,
            failure: if pass { None } else { Some(failure.into()) },
        }
    }
}

/// Execute the parsed invocation: run the stage, persist artifacts and the
/// manifest, and map the outcome to an exit status (0 ok, 1 failed
/// verification or stage error, 2 usage error).
pub fn run(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return 2;
        }
    };
    if let Err(e) = fs::create_dir_all(&cfg.out) {
        eprintln!("cannot create output directory {}: {e}", cfg.out.display());
        return 2;
    }

    let started = Instant::now();
    let result = dispatch(&cli.command, &cfg);
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

    let (pass, failure, artifacts, summary) = match &result {
        Ok(stage) => (
            stage.pass,
            stage.failure.clone(),
            stage.artifacts.clone(),
            stage.summary.clone(),
        ),
        Err(e) => (false, Some(e.to_string()), Vec::new(), json!(null)),
    };
    let manifest = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "artifacts": artifacts,
        "summary": summary,
        "timings_ms": { cli.command.name(): elapsed_ms },
        "pass": pass,
        "failure": failure,
    });
    let manifest_path = cfg.out.join("manifest.json");
    if let Err(e) = fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    ) {
        eprintln!("cannot write {}: {e}", manifest_path.display());
        return 2;
    }

    match result {
        Ok(stage) if stage.pass => 0,
        Ok(stage) => {
            eprintln!(
                "{}: {}",
                cli.command.name(),
                stage.failure.as_deref().unwrap_or("verification failed")
            );
            1
        }
        Err(e) => {
            eprintln!("{} failed: {e}", cli.command.name());
            1
        }
    }
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Stage> {
    match command {
        Command::Coeffs => stage_coeffs(cfg),
        Command::Spectrum => stage_spectrum(cfg),
        Command::BifurcationPoints => stage_bifurcation_points(cfg),
        Command::Shoot { a, b } => stage_shoot(cfg, a.unwrap_or(cfg.data.a), b.unwrap_or(cfg.data.b)),
        Command::Scan => stage_scan(cfg),
        Command::Solve { a, b } => stage_solve(cfg, a.unwrap_or(cfg.data.a), b.unwrap_or(cfg.data.b)),
        Command::Branch { index } => stage_branch(cfg, *index),
        Command::Diagram => stage_diagram(cfg),
        Command::VerifyAppendix { n, m } => stage_verify_appendix(cfg, *n, *m),
        Command::NonexistenceScan => stage_nonexistence(cfg),
        Command::VerifyAll => stage_verify_all(cfg),
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_text(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::write(dir.join(name), body)?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    write_text(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn stage_coeffs(cfg: &RunConfig) -> Result<Stage> {
    let mut csv = String::from("s,alpha,beta,phi\n");
    let summary;
    match &cfg.coefficients {
        CoeffConfig::Fixed { alpha, beta } => {
            let co = PaneitzCoefficients::new(*alpha, *beta, cfg.q)?;
            let phi = bifurcation::phi(co.alpha, co.beta, cfg.q);
            let _ = writeln!(csv, "{},{},{},{}", num(0.0), num(co.alpha), num(co.beta), num(phi));
            summary = json!({"source": "fixed", "alpha": co.alpha, "beta": co.beta});
        }
        _ => {
            let path = cfg.path()?;
            let (dom_lo, dom_hi) = path.domain();
            let hi = cfg.s_max.unwrap_or(2.0 * cfg.s.max(10.0)).min(dom_hi);
            let lo = (1e-3 * hi).max(dom_lo * (1.0 + 1e-12));
            let n = 200;
            for i in 0..=n {
                let s = lo + (hi - lo) * f64::from(i) / f64::from(n);
                let (a, _) = path.a(s)?;
                let (b, _) = path.b(s)?;
                let _ = writeln!(csv, "{},{},{},{}", num(s), num(a), num(b), num(path.phi_at(s)?));
            }
            summary = json!({"descriptor": path.descriptor_json(), "rows": n + 1});
        }
    }
    write_text(&cfg.out, "coeffs.csv", &csv)?;
    Ok(Stage::ok(vec!["coeffs.csv".into()], summary))
}

fn spectrum_for(cfg: &RunConfig) -> Result<(Profile, Spectrum)> {
    let p = cfg.profile()?;
    let count = cfg.i_max.max(4) + 2;
    let spec = spectrum(&p, count, cfg.gridsize)?;
    Ok((p, spec))
}

fn stage_spectrum(cfg: &RunConfig) -> Result<Stage> {
    let (_, spec) = spectrum_for(cfg)?;
    let mut csv = String::from("i,lambda,lambda_extrapolated,interior_zeros\n");
    for i in 0..spec.eigenvalues.len() {
        let _ = writeln!(
            csv,
            "{i},{},{},{}",
            num(spec.eigenvalues[i]),
            num(spec.eigenvalues_extrapolated[i]),
            spec.interior_zero_counts[i]
        );
    }
    write_text(&cfg.out, "spectrum.csv", &csv)?;
    let summary = json!({
        "count": spec.eigenvalues.len(),
        "lambda_1": spec.eigenvalues_extrapolated.get(1),
    });
    Ok(Stage::ok(vec!["spectrum.csv".into()], summary))
}

fn stage_bifurcation_points(cfg: &RunConfig) -> Result<Stage> {
    let path = cfg.path()?;
    let (_, spec) = spectrum_for(cfg)?;
    let pts = instants(&path, &spec, cfg.i_max)?;
    let mut csv = String::from("i,s,lambda,tau,closed_form_s\n");
    for bp in &pts {
        let closed = bp.closed_form.map(num).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{closed}",
            bp.index,
            num(bp.s),
            num(bp.lambda),
            num(bp.tau)
        );
    }
    write_text(&cfg.out, "bifurcation_points.csv", &csv)?;
    let summary = json!({
        "instants": pts.iter().map(|bp| json!({
            "i": bp.index, "s": bp.s, "tau": bp.tau, "valid": bp.valid,
        })).collect::<Vec<_>>(),
    });
    Ok(Stage::ok(vec!["bifurcation_points.csv".into()], summary))
}

fn stage_shoot(cfg: &RunConfig, a: f64, b: f64) -> Result<Stage> {
    let p = cfg.profile()?;
    let co = cfg.point_coeffs()?;
    let res = shooting::shoot(&co, &p, a, b)?;
    let summary = json!({
        "a": a,
        "b": b,
        "r1": res.r1,
        "r3": res.r3,
        "norm": res.norm(),
        "terminated_early": res.terminated_early,
        "certificate": res.certificate,
        "far_data": res.far_data.map(|(u, v2)| json!({"u": u, "v2": v2})),
    });
    write_json(&cfg.out, "shoot.json", &summary)?;
    Ok(Stage::ok(vec!["shoot.json".into()], summary))
}

fn stage_scan(cfg: &RunConfig) -> Result<Stage> {
    let p = cfg.profile()?;
    let co = cfg.point_coeffs()?;
    let sc = &cfg.scan;
    let result = shooting::scan(&co, &p, (sc.a_lo, sc.a_hi, sc.b_lo, sc.b_hi), sc.na, sc.nb)?;
    let mut csv = String::from("a,b,r1,r3,terminated_early\n");
    for (ia, a) in result.a_values.iter().enumerate() {
        for (ib, b) in result.b_values.iter().enumerate() {
            let r = &result.points[ia][ib];
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                num(*a),
                num(*b),
                num(r.r1),
                num(r.r3),
                r.terminated_early
            );
        }
    }
    write_text(&cfg.out, "scan.csv", &csv)?;
    let mut cells = String::from("a_lo,a_hi,b_lo,b_hi,candidate,pruned\n");
    for c in &result.cells {
        let _ = writeln!(
            cells,
            "{},{},{},{},{},{}",
            num(c.a_lo),
            num(c.a_hi),
            num(c.b_lo),
            num(c.b_hi),
            c.candidate,
            c.pruned
        );
    }
    write_text(&cfg.out, "scan_cells.csv", &cells)?;
    let candidates = result.cells.iter().filter(|c| c.candidate).count();
    let pruned = result.cells.iter().filter(|c| c.pruned).count();
    Ok(Stage::ok(
        vec!["scan.csv".into(), "scan_cells.csv".into()],
        json!({"candidates": candidates, "pruned_cells": pruned}),
    ))
}

fn stage_solve(cfg: &RunConfig, a: f64, b: f64) -> Result<Stage> {
    let p = cfg.profile()?;
    let co = cfg.point_coeffs()?;
    let opts = SolveOpts {
        tol: cfg.tol,
        grid: cfg.solution_grid,
        ..SolveOpts::default()
    };
    let solved = shooting::solve(&co, &p, a, b, &opts)?;
    let mut csv = String::from("t,u,du,ddu\n");
    let prof = &solved.profile;
    for i in 0..prof.ts.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            num(prof.ts[i]),
            num(prof.u[i]),
            num(prof.du[i]),
            num(prof.ddu[i])
        );
    }
    write_text(&cfg.out, "solution.csv", &csv)?;
    let summary = json!({
        "a": solved.a,
        "b": solved.b,
        "iterations": solved.iterations,
        "residual": solved.residual,
        "converged_at_floor": solved.converged_at_floor,
        "quality": solved.quality,
    });
    write_json(&cfg.out, "solution.json", &summary)?;
    Ok(Stage::ok(
        vec!["solution.csv".into(), "solution.json".into()],
        summary,
    ))
}

fn branch_artifacts(cfg: &RunConfig, branch: &bifurcation::Branch) -> Result<Vec<String>> {
    let i = branch.origin.index;
    let mut csv = String::from("s,a,b,min_u,max_u,critical_points\n");
    for pt in &branch.points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            num(pt.s),
            num(pt.a),
            num(pt.b),
            num(pt.quality.min_u),
            num(pt.quality.max_u),
            pt.profile.critical_point_count
        );
    }
    let csv_name = format!("branch_{i}.csv");
    write_text(&cfg.out, &csv_name, &csv)?;
    let quality: Vec<serde_json::Value> = branch
        .points
        .iter()
        .map(|pt| json!({"s": pt.s, "quality": pt.quality}))
        .collect();
    let q_name = format!("branch_{i}_quality.json");
    write_json(
        &cfg.out,
        &q_name,
        &json!({"index": i, "status": branch.status, "points": quality}),
    )?;
    Ok(vec![csv_name, q_name])
}

fn branch_summary(branch: &bifurcation::Branch) -> serde_json::Value {
    json!({
        "index": branch.origin.index,
        "origin_s": branch.origin.s,
        "status": branch.status,
        "points": branch.points.len(),
        "s_range": branch.s_range().map(|(lo, hi)| json!([lo, hi])),
        "critical_points": branch.critical_point_count,
    })
}

fn stage_branch(cfg: &RunConfig, index: usize) -> Result<Stage> {
    if index < 1 {
        return Err(Error::InvalidConfig("branch index must be at least 1".into()));
    }
    let path = cfg.path()?;
    let p = cfg.profile()?;
    let count = index.max(cfg.i_max).max(4) + 2;
    let spec = spectrum(&p, count, cfg.gridsize)?;
    let pts = instants(&path, &spec, index)?;
    let opts = ContinuationOpts {
        s_max: cfg.s_max,
        tol: cfg.tol,
        grid: cfg.solution_grid,
        max_points: cfg.max_points,
        ..ContinuationOpts::default()
    };
    let branch = continue_branch(&path, &p, &pts[index - 1], &opts)?;
    let artifacts = branch_artifacts(cfg, &branch)?;
    Ok(Stage::ok(artifacts, branch_summary(&branch)))
}

fn stage_diagram(cfg: &RunConfig) -> Result<Stage> {
    let path = cfg.path()?;
    let p = cfg.profile()?;
    let (_, spec) = spectrum_for(cfg)?;
    let pts = instants(&path, &spec, cfg.i_max)?;
    let opts = ContinuationOpts {
        s_max: cfg.s_max,
        tol: cfg.tol,
        grid: cfg.solution_grid,
        max_points: cfg.max_points,
        ..ContinuationOpts::default()
    };
    // Branches are independent; continue them in parallel.
    use rayon::prelude::*;
    let branches: Vec<bifurcation::Branch> = pts
        .par_iter()
        .map(|bp| continue_branch(&path, &p, bp, &opts))
        .collect::<Result<_>>()?;

    let mut artifacts = Vec::new();
    for branch in &branches {
        artifacts.extend(branch_artifacts(cfg, branch)?);
    }
    let markers: Vec<f64> = pts.iter().map(|bp| bp.s).collect();
    let curves: Vec<Curve> = branches
        .iter()
        .map(|br| Curve {
            label: format!(
                "branch {} ({} critical points)",
                br.origin.index, br.critical_point_count
            ),
            samples: br.points.iter().map(|pt| (pt.s, pt.a)).collect(),
        })
        .collect();
    let svg = diagram::render(&markers, &curves, &DiagramOpts::default());
    write_text(&cfg.out, "diagram.svg", &svg)?;
    artifacts.push("diagram.svg".into());
    let summary = json!({
        "instants": markers,
        "branches": branches.iter().map(branch_summary).collect::<Vec<_>>(),
    });
    Ok(Stage::ok(artifacts, summary))
}

fn stage_verify_appendix(cfg: &RunConfig, n: Option<u32>, m: Option<u32>) -> Result<Stage> {
    let (cn, cm, lambda0) = match &cfg.coefficients {
        CoeffConfig::Einstein { n, m, lambda0 } => (*n, *m, *lambda0),
        _ => (3, 3, 2.0),
    };
    let n = n.unwrap_or(cn);
    let m = m.unwrap_or(cm);
    let report = verify::appendix_check(n, m, lambda0, cfg.seed)?;
    let cert = appendix_certificate(n, m, lambda0)?;
    let summary = json!({
        "n": n,
        "m": m,
        "lambda0": lambda0,
        "h0": cert.h0,
        "h0_prime": cert.h0_prime,
        "quad_coeff": cert.quad_coeff,
        "all_positive": cert.all_positive,
        "max_rel_fd_error": report.max_rel_fd_error,
        "sweep_min": report.sweep_min,
        "sweep_count": report.sweep_count,
        "pass": report.pass,
    });
    write_json(&cfg.out, "appendix.json", &summary)?;
    Ok(Stage::verdict(
        vec!["appendix.json".into()],
        summary,
        report.pass,
        format!(
            "discriminant certificate mismatch: max relative finite-difference \
             error {:.3e}, sweep minimum {:.3e}",
            report.max_rel_fd_error, report.sweep_min
        ),
    ))
}

fn stage_nonexistence(cfg: &RunConfig) -> Result<Stage> {
    let p = cfg.profile()?;
    let co = match &cfg.coefficients {
        CoeffConfig::Fixed { alpha, beta } => PaneitzCoefficients::new(*alpha, *beta, cfg.q)?,
        // The shipped sample sits inside the proven-empty coefficient region.
        _ => PaneitzCoefficients::new(0.1, 0.002, cfg.q)?,
    };
    let sc = &cfg.scan;
    let result = shooting::scan(&co, &p, (sc.a_lo, sc.a_hi, sc.b_lo, sc.b_hi), sc.na, sc.nb)?;
    let mut rows = String::from("a_lo,a_hi,b_lo,b_hi,refined_a,refined_b,classification\n");
    let mut nontrivial = 0usize;
    let mut refined_trivial = 0usize;
    let mut unconverged = 0usize;
    for cell in result.cells.iter().filter(|c| c.candidate) {
        let (ca, cb) = (0.5 * (cell.a_lo + cell.a_hi), 0.5 * (cell.b_lo + cell.b_hi));
        let refined = shooting::solve(&co, &p, ca, cb, &SolveOpts::default());
        let (ra, rb, class) = match &refined {
            Ok(sol) => {
                if (sol.a - 1.0).abs().max(sol.b.abs()) <= 1e-8 {
                    refined_trivial += 1;
                    (sol.a, sol.b, "trivial")
                } else {
                    nontrivial += 1;
                    (sol.a, sol.b, "nontrivial")
                }
            }
            Err(Error::TrivialConvergence) => {
                refined_trivial += 1;
                (1.0, 0.0, "trivial")
            }
            Err(_) => {
                unconverged += 1;
                (f64::NAN, f64::NAN, "unconverged")
            }
        };
        let _ = writeln!(
            rows,
            "{},{},{},{},{},{},{class}",
            num(cell.a_lo),
            num(cell.a_hi),
            num(cell.b_lo),
            num(cell.b_hi),
            num(ra),
            num(rb)
        );
    }
    write_text(&cfg.out, "nonexistence.csv", &rows)?;
    let candidates = result.cells.iter().filter(|c| c.candidate).count();
    let summary = json!({
        "alpha": co.alpha,
        "beta": co.beta,
        "q": cfg.q,
        "lattice": [sc.na, sc.nb],
        "candidate_cells": candidates,
        "refined_trivial": refined_trivial,
        "refined_nontrivial": nontrivial,
        "unconverged": unconverged,
    });
    write_json(&cfg.out, "nonexistence.json", &summary)?;
    Ok(Stage::verdict(
        vec!["nonexistence.csv".into(), "nonexistence.json".into()],
        summary,
        nontrivial == 0,
        format!("{nontrivial} candidate cell(s) refined to nontrivial solutions"),
    ))
}

fn stage_verify_all(cfg: &RunConfig) -> Result<Stage> {
    let reports = verify::run_all(cfg.seed);
    let mut pass = true;
    let mut first_fail = String::new();
    for r in &reports {
        println!(
            "criterion {:2}: {:<28} {} ({})",
            r.index,
            r.name,
            if r.pass { "pass" } else { "FAIL" },
            r.detail
        );
        if !r.pass && pass {
            pass = false;
            first_fail = format!("criterion {} ({}) failed: {}", r.index, r.name, r.detail);
        }
    }
    let summary = json!({
        "criteria": reports.iter().map(|r| json!({
            "index": r.index, "name": r.name, "pass": r.pass, "detail": r.detail,
        })).collect::<Vec<_>>(),
        "pass": pass,
    });
    write_json(&cfg.out, "verify.json", &summary)?;
    Ok(Stage::verdict(
        vec!["verify.json".into()],
        summary,
        pass,
        first_fail,
    ))
}
