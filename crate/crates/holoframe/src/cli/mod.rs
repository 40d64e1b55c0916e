//! Batch front end: `holoframe CONFIG [--command ...] [--output-dir ...] [--seed ...]`.
//!
//! Exit codes: 0 success, 1 internal failure, 2 malformed input, 3 non-integrable input,
//! 4 solver budget exhausted, 5 an identity check failed.

pub mod config;
pub mod expr;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{Command, Resolved, RunConfig};

use crate::dbar_solve::{dbar_solve, interior_estimate_report, InteriorReport};
use crate::frame_solver::{frame_and_verify, integrability_check, rescaled_solve, FrameReport, SolveStatus};
use crate::grid::io::{write_binary, write_csv};
use crate::grid::ops::obstruction;
use crate::grid::weak::integrability_gate;
use crate::grid::GridDomain;
use crate::holder::{holder_norm, scaling_margin};
use crate::identities::{stream_defects, IdentityInputs};
use crate::lie::{AlgebraElement, SeriesConfig};
use crate::oracle::{fd_dexp_oracle, manufactured_lambda, sample_form};
use crate::poly::LiePoly;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_NONINTEGRABLE: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;
pub const EXIT_IDENTITY_FAIL: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Malformed(_) => EXIT_MALFORMED,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

fn internal<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "holoframe", version, about = "Integrability checks and frame solves for Lie-algebra-valued (0,1)-forms")]
pub struct Args {
    /// Run configuration (TOML).
    pub config: PathBuf,
    /// Overrides the command named in the configuration.
    #[arg(long, value_enum)]
    pub command: Option<Command>,
    /// Accepted for compatibility; computations are single-threaded.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces the configured input with a built-in fixture.
    #[arg(long = "case")]
    pub case: Option<String>,
}

/// What a command produced: its exit code and the files it wrote.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: Value,
    pub files: Vec<PathBuf>,
    pub text: String,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_MALFORMED } else { EXIT_OK };
        }
    };
    match run_args(&args) {
        Ok(out) => {
            print!("{}", out.text);
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_args(args: &Args) -> Result<Outcome, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(c) = args.command {
        cfg.command = Some(c);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(name) = &args.case {
        cfg.input.case = Some(name.clone());
        cfg.input.file = None;
        cfg.input.expression = None;
    }
    let out_dir = match (&args.output_dir, &cfg.output_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => base.join(d),
        (None, None) => PathBuf::from("."),
    };
    execute(cfg, &base, &out_dir)
}

/// Runs a configuration, writing artefacts into `out_dir`.
pub fn execute(cfg: RunConfig, base: &Path, out_dir: &Path) -> Result<Outcome, CliError> {
    let r = cfg.resolve(base)?;
    fs::create_dir_all(out_dir).map_err(internal)?;
    match r.command {
        Command::Check => cmd_check(&r, out_dir),
        Command::Solve => cmd_solve(&r, out_dir),
        Command::Verify => cmd_verify(&r, out_dir),
        Command::Norms => cmd_norms(&r, out_dir),
    }
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(internal)?;
    s.push('\n');
    fs::write(path, s).map_err(internal)
}

fn envelope<T: Serialize>(r: &Resolved, body: &T) -> Result<Value, CliError> {
    let mut v = json!({ "command": r.command, "config": r.config });
    let body = serde_json::to_value(body).map_err(internal)?;
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    Ok(v)
}

fn input(r: &Resolved) -> Result<&crate::grid::GForm, CliError> {
    r.input.as_ref().ok_or_else(|| CliError::Malformed("this command needs an input form".into()))
}

fn one_form(r: &Resolved) -> Result<&crate::grid::GForm, CliError> {
    let f = input(r)?;
    if f.degree() != 1 {
        return Err(CliError::Malformed(format!("expected a (0,1)-form, got degree {}", f.degree())));
    }
    Ok(f)
}

#[derive(Debug, Serialize)]
struct CheckReport {
    strong_obstruction_sup: f64,
    weak_residual: f64,
    gate: f64,
    verdict: &'static str,
}

fn cmd_check(r: &Resolved, out: &Path) -> Result<Outcome, CliError> {
    let alpha = one_form(r)?;
    let strong = obstruction(alpha).map_err(internal)?.sup_norm();
    let (weak, gate) = match integrability_check(alpha, &r.config.solver).map_err(internal)? {
        Some(p) => p,
        None => (0.0, integrability_gate(alpha, r.config.solver.gate_factor)),
    };
    let verdict = if weak <= gate { "integrable" } else { "non_integrable" };
    let body = CheckReport { strong_obstruction_sup: strong, weak_residual: weak, gate, verdict };
    let report = envelope(r, &body)?;
    let path = out.join("report.json");
    write_json(&path, &report)?;
    let text = format!("verdict: {verdict}\nstrong obstruction: {strong:.6e}\nweak residual: {weak:.6e} (gate {gate:.6e})\n");
    Ok(Outcome { code: EXIT_OK, report, files: vec![path], text })
}

#[derive(Debug, Serialize)]
struct SolveReport<'a> {
    result: &'a crate::frame_solver::SolveResult,
    verification: Option<FrameReport>,
}

fn cmd_solve(r: &Resolved, out: &Path) -> Result<Outcome, CliError> {
    let alpha = one_form(r)?;
    let solver = r.canonical_solver(alpha.domain())?;
    let res = rescaled_solve(alpha, &solver, &r.config.solver).map_err(internal)?;
    let verification = if res.status == SolveStatus::Converged {
        Some(frame_and_verify(&res.u, alpha, r.config.solver.series()).map_err(internal)?)
    } else {
        None
    };
    let mut files = Vec::new();
    let mut residuals = String::from("iteration,residual\n");
    for (i, v) in res.residual_history.iter().enumerate() {
        let _ = writeln!(residuals, "{i},{v:e}");
    }
    let rpath = out.join("residuals.csv");
    fs::write(&rpath, residuals).map_err(internal)?;
    files.push(rpath);
    if res.status.is_success() {
        let bpath = out.join("u.bin");
        let mut w = BufWriter::new(File::create(&bpath).map_err(internal)?);
        write_binary(&res.u, &mut w).map_err(internal)?;
        w.flush().map_err(internal)?;
        let cpath = out.join("u.csv");
        let mut w = BufWriter::new(File::create(&cpath).map_err(internal)?);
        write_csv(&res.u, &mut w).map_err(internal)?;
        w.flush().map_err(internal)?;
        files.extend([bpath, cpath]);
    }
    let report = envelope(r, &SolveReport { result: &res, verification })?;
    let path = out.join("report.json");
    write_json(&path, &report)?;
    files.push(path);
    let code = match res.status {
        SolveStatus::Converged | SolveStatus::RescaledConverged => EXIT_OK,
        SolveStatus::FailedNonintegrable => EXIT_NONINTEGRABLE,
        SolveStatus::FailedBudget => EXIT_BUDGET,
    };
    let text = format!(
        "status: {}\niterations: {}\nfinal residual: {:.3e}\nepsilon: {}\n{}",
        report["result"]["status"].as_str().unwrap_or("unknown"),
        res.iterations,
        res.final_residual(),
        res.epsilon_used,
        res.message.as_deref().map(|m| format!("note: {m}\n")).unwrap_or_default()
    );
    Ok(Outcome { code, report, files, text })
}

#[derive(Debug, Clone, Serialize)]
struct IdentityRow {
    name: String,
    value: f64,
    /// Upper bound, or lower bound when `lower_bound` is set.
    tolerance: f64,
    lower_bound: bool,
    pass: bool,
}

impl IdentityRow {
    fn upper(name: &str, value: f64, tol: f64) -> Self {
        IdentityRow { name: name.into(), value, tolerance: tol, lower_bound: false, pass: value <= tol }
    }

    fn lower(name: &str, value: f64, floor: f64) -> Self {
        IdentityRow { name: name.into(), value, tolerance: floor, lower_bound: true, pass: value >= floor }
    }
}

fn table(rows: &[IdentityRow]) -> String {
    let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in rows {
        let cmp = if r.lower_bound { ">=" } else { "<=" };
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "{:w$}  {:>12.4e}  {cmp} {:<10.3e}  {verdict}", r.name, r.value, r.tolerance);
    }
    s
}

fn cmd_verify(r: &Resolved, out: &Path) -> Result<Outcome, CliError> {
    let v = &r.config.verify;
    let g = &r.algebra;
    let mut rows = vec![IdentityRow::upper("jacobi_defect", g.jacobi_defect(), v.jacobi_tolerance)];
    let mut identities = None;
    if rows[0].pass {
        let series = r.config.solver.series();
        let tol = if g.is_abelian() { v.abelian_tolerance } else { v.tolerance };
        let mut rng = ChaCha8Rng::seed_from_u64(r.config.seed);
        let inp = IdentityInputs::random(g.clone(), &mut rng, v.terms, v.scale);
        let d = stream_defects(&inp, r.domain.r(), r.domain.h(), series).map_err(internal)?;
        for (name, value) in d.rows() {
            rows.push(IdentityRow::upper(name, value, tol));
        }
        identities = Some(d);
        if g.matrix_rep().is_some() {
            rows.push(IdentityRow::upper("dexp_vs_finite_difference", dexp_check(g, &mut rng, v.dexp_pairs, series)?, v.dexp_tolerance));
        }
        let margin = margin_check(r, &mut rng)?;
        rows.push(IdentityRow::lower("scaling_margin", margin, v.margin_floor));
    }
    let all_pass = rows.iter().all(|r| r.pass);
    let body = json!({ "rows": rows, "defects": identities, "all_pass": all_pass });
    let report = envelope(r, &body)?;
    let path = out.join("identities.json");
    write_json(&path, &report)?;
    let code = if all_pass { EXIT_OK } else { EXIT_IDENTITY_FAIL };
    Ok(Outcome { code, report, files: vec![path], text: table(&rows) })
}

/// Largest deviation of `D(ad_u)v` from the finite-difference oracle over random pairs.
fn dexp_check<R: Rng>(g: &crate::lie::LieAlgebra, rng: &mut R, pairs: usize, series: SeriesConfig) -> Result<f64, CliError> {
    let d = g.dim();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let mut el = || AlgebraElement::new((0..d).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
        let (u, w) = (el(), el());
        let m = g.dexp_factor(&u, series).map_err(internal)?;
        let exact: Vec<C64> = (0..d).map(|i| (0..d).map(|j| m[(i, j)] * w.coeffs[j]).sum()).collect();
        let fd = fd_dexp_oracle(g, &u, &w, 1e-4).map_err(internal)?;
        worst = worst.max(AlgebraElement::new(exact).sub(&fd).norm());
    }
    Ok(worst)
}

/// `scaling_margin` of a random one-variable form at the configured ε.
fn margin_check<R: Rng>(r: &Resolved, rng: &mut R) -> Result<f64, CliError> {
    let v = &r.config.verify;
    let dom = GridDomain::new(1, r.domain.r(), r.domain.h(), r.domain.subdomain_fraction()).map_err(internal)?;
    let p = LiePoly::random(rng, r.algebra.dim(), 1, 3, v.terms, v.scale);
    let alpha = sample_form(&dom, &r.algebra, &[p]).map_err(internal)?;
    scaling_margin(&alpha, v.epsilon, &r.config.solver.kappa, &r.config.solver.holder).map_err(internal)
}

#[derive(Debug, Serialize)]
struct InteriorRow {
    h: f64,
    #[serde(flatten)]
    report: InteriorReport,
}

fn cmd_norms(r: &Resolved, out: &Path) -> Result<Outcome, CliError> {
    let f = input(r)?;
    let s = &r.config.solver;
    let holder = holder_norm(f, &s.kappa, &s.holder).map_err(internal)?;
    let mut text = format!("C^{} norm: {:.6}\n", s.kappa.kappa, holder.value);
    let mut interior = Vec::new();
    if let Some(c) = &r.case {
        for &h in &r.config.norms.refinements {
            let dom = GridDomain::new(c.n, r.domain.r(), h, r.domain.subdomain_fraction()).map_err(|e| CliError::Malformed(e.to_string()))?;
            let (_, lam) = manufactured_lambda(c, &dom).map_err(internal)?;
            let solver = r.canonical_solver(&dom)?;
            let u = dbar_solve(&solver, &lam).map_err(internal)?.u;
            let report = interior_estimate_report(&u, &lam, &s.kappa, &s.holder).map_err(internal)?;
            let _ = writeln!(text, "h = {h}: ratio {:?}", report.ratio);
            interior.push(InteriorRow { h, report });
        }
    } else if !r.config.norms.refinements.is_empty() {
        return Err(CliError::Malformed("the interior-estimate table needs a fixture input".into()));
    }
    let body = json!({ "holder": holder, "interior": interior });
    let report = envelope(r, &body)?;
    let path = out.join("report.json");
    write_json(&path, &report)?;
    Ok(Outcome { code: EXIT_OK, report, files: vec![path], text })
}
