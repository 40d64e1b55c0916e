//! Right inverses of the lattice ∂̄.
//!
//! In one variable the Cauchy transform `u = (1/π) Σ λ(w) ∬_cell dA/(z − w)` gives a
//! smooth particular solution, evaluated as an FFT convolution; a CGLS correction then
//! makes `∂̄u = λ` hold to solver tolerance. In two variables the minimal-norm solution
//! of `∂̄u = λ` is computed by CGLS from zero. The same machinery on the 1-form block
//! gives the solution operator for 2-forms used by the K-map.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::ops::{plane_dbar, plane_dbar_adj_acc, wedge_bracket};
use crate::grid::{GForm, GridDomain, GridError, Set};
use crate::holder::{holder_norm, holder_norm_where, HolderError, HolderOptions, HolderSpec};
use crate::linalg::{cgls, LinOp};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Holder(#[from] HolderError),
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {rel_residual:e}")]
    NotConverged { iterations: usize, rel_residual: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error("solve failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Cauchy,
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    MeanZero,
    MinimalNorm,
}

/// Precomputed spectrum of the Cauchy kernel for one domain.
#[derive(Debug)]
struct CauchyKernel {
    size: usize,
    spectrum: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct CanonicalSolver {
    domain: GridDomain,
    mode: SolveMode,
    normalization: Normalization,
    cg_tolerance: f64,
    cg_max_iters: usize,
    kernel: OnceLock<Arc<CauchyKernel>>,
}

impl CanonicalSolver {
    pub fn new(
        domain: &GridDomain,
        mode: SolveMode,
        normalization: Normalization,
        cg_tolerance: f64,
        cg_max_iters: usize,
    ) -> Result<Self, SolveError> {
        if mode == SolveMode::Cauchy && domain.n() != 1 {
            return Err(SolveError::Config("the Cauchy transform needs n = 1".into()));
        }
        if mode == SolveMode::Cauchy && normalization == Normalization::MinimalNorm {
            return Err(SolveError::Config("the Cauchy mode uses mean-zero normalisation".into()));
        }
        if !(cg_tolerance > 0.0) || cg_max_iters == 0 {
            return Err(SolveError::Config("tolerance and iteration budget must be positive".into()));
        }
        Ok(CanonicalSolver { domain: domain.clone(), mode, normalization, cg_tolerance, cg_max_iters, kernel: OnceLock::new() })
    }

    /// Cauchy with mean-zero normalisation for n = 1, minimal-norm least squares for n = 2;
    /// tolerance `1e-10`, at most `10·sqrt(node count)` iterations.
    pub fn for_domain(domain: &GridDomain) -> Self {
        let (mode, norm) = match domain.n() {
            1 => (SolveMode::Cauchy, Normalization::MeanZero),
            _ => (SolveMode::LeastSquares, Normalization::MinimalNorm),
        };
        Self::new(domain, mode, norm, 1e-10, default_max_iters(domain)).expect("defaults are valid")
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.cg_tolerance = tol;
        self
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn mode(&self) -> SolveMode {
        self.mode
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn cg_tolerance(&self) -> f64 {
        self.cg_tolerance
    }

    pub fn cg_max_iters(&self) -> usize {
        self.cg_max_iters
    }

    fn kernel(&self) -> Arc<CauchyKernel> {
        self.kernel.get_or_init(|| Arc::new(CauchyKernel::new(&self.domain))).clone()
    }
}

pub fn default_max_iters(domain: &GridDomain) -> usize {
    ((10.0 * (domain.node_count() as f64).sqrt()).ceil() as usize).max(100)
}

#[derive(Debug, Clone)]
pub struct DbarSolution {
    pub u: GForm,
    /// `‖∂̄u − λ‖_sup`
    pub residual_sup: f64,
    pub iterations: usize,
    pub rel_residual: f64,
    /// Relative residual per CG iteration.
    pub history: Vec<f64>,
}

/// `u ↦ ∂̄u` from functions to (0,1)-forms, with values flattened component by component.
struct Dbar0<'a> {
    dom: &'a GridDomain,
    d: usize,
}

impl Dbar0<'_> {
    fn lens(&self) -> Vec<usize> {
        let ls = crate::grid::layouts(self.dom.n(), 1);
        ls.iter().map(|&l| self.dom.size(l) * self.d).collect()
    }
}

impl LinOp for Dbar0<'_> {
    fn rows(&self) -> usize {
        self.lens().iter().sum()
    }

    fn cols(&self) -> usize {
        self.dom.size([Set::A, Set::A]) * self.d
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let mut off = 0;
        for p in 0..self.dom.n() {
            let v = plane_dbar(self.dom, x, [Set::A, Set::A], p, self.d);
            y[off..off + v.len()].copy_from_slice(&v);
            off += v.len();
        }
    }

    fn apply_adj(&self, y: &[C64], x: &mut [C64]) {
        x.iter_mut().for_each(|v| *v = ZERO);
        let mut off = 0;
        for (p, len) in self.lens().into_iter().enumerate() {
            let mut lo = [Set::A, Set::A];
            lo[p] = Set::I;
            plane_dbar_adj_acc(self.dom, &y[off..off + len], lo, p, self.d, x);
            off += len;
        }
    }
}

/// `(β₁, β₂) ↦ ∂̄₁β₂ − ∂̄₂β₁` from (0,1)-forms to (0,2)-forms (n = 2).
struct Dbar1<'a> {
    dom: &'a GridDomain,
    d: usize,
}

impl Dbar1<'_> {
    fn split(&self) -> usize {
        self.dom.size([Set::I, Set::A]) * self.d
    }
}

impl LinOp for Dbar1<'_> {
    fn rows(&self) -> usize {
        self.dom.size([Set::I, Set::I]) * self.d
    }

    fn cols(&self) -> usize {
        self.split() + self.dom.size([Set::A, Set::I]) * self.d
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let (x1, x2) = x.split_at(self.split());
        let a = plane_dbar(self.dom, x2, [Set::A, Set::I], 0, self.d);
        let b = plane_dbar(self.dom, x1, [Set::I, Set::A], 1, self.d);
        for ((o, p), q) in y.iter_mut().zip(&a).zip(&b) {
            *o = p - q;
        }
    }

    fn apply_adj(&self, y: &[C64], x: &mut [C64]) {
        x.iter_mut().for_each(|v| *v = ZERO);
        let s = self.split();
        let (x1, x2) = x.split_at_mut(s);
        plane_dbar_adj_acc(self.dom, y, [Set::I, Set::I], 0, self.d, x2);
        let neg: Vec<C64> = y.iter().map(|v| -v).collect();
        plane_dbar_adj_acc(self.dom, &neg, [Set::I, Set::I], 1, self.d, x1);
    }
}

// Antiderivatives with ∂²G1/∂x∂y = x/(x²+y²) and ∂²G2/∂x∂y = y/(x²+y²).
fn g1(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return 0.0;
    }
    let t = if x == 0.0 { 0.0 } else { x * (y / x).atan() };
    0.5 * y * r2.ln() - y + t
}

fn g2(x: f64, y: f64) -> f64 {
    g1(y, x)
}

/// `∬ dA(ξ)/ξ` over the square of side `h` centred at `c`.
pub fn cell_integral(c: C64, h: f64) -> C64 {
    let (x0, x1, y0, y1) = (c.re - h / 2.0, c.re + h / 2.0, c.im - h / 2.0, c.im + h / 2.0);
    let rect = |g: fn(f64, f64) -> f64| g(x1, y1) - g(x0, y1) - g(x1, y0) + g(x0, y0);
    C64::new(rect(g1), -rect(g2))
}

fn fft2(data: &mut [C64], size: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(size) } else { planner.plan_fft_forward(size) };
    fft.process(data);
    let mut t = vec![ZERO; data.len()];
    for i in 0..size {
        for j in 0..size {
            t[j * size + i] = data[i * size + j];
        }
    }
    fft.process(&mut t);
    for i in 0..size {
        for j in 0..size {
            data[j * size + i] = t[i * size + j];
        }
    }
}

impl CauchyKernel {
    fn new(dom: &GridDomain) -> Self {
        let r = dom.plane().half_width();
        let h = dom.h();
        let size = (4 * r as usize + 1).next_power_of_two();
        let mut k = vec![ZERO; size * size];
        let wrap = |v: i32| v.rem_euclid(size as i32) as usize;
        for dj in -2 * r..=2 * r {
            for di in -2 * r..=2 * r {
                if di == 0 && dj == 0 {
                    // the centred cell integrates 1/ξ to zero by symmetry
                    continue;
                }
                let delta = C64::new(di as f64 * h, dj as f64 * h);
                let v = if di.abs().max(dj.abs()) <= 2 { cell_integral(delta, h) } else { h * h / delta };
                k[wrap(dj) * size + wrap(di)] = v / PI;
            }
        }
        fft2(&mut k, size, false);
        CauchyKernel { size, spectrum: k }
    }

    /// Cauchy transform of d-vector data on I nodes, returned on A nodes.
    fn apply(&self, dom: &GridDomain, lam: &[C64], d: usize) -> Vec<C64> {
        let plane = dom.plane();
        let r = plane.half_width();
        let size = self.size;
        let scale = 1.0 / (size * size) as f64;
        let mut out = vec![ZERO; plane.len_a() * d];
        let mut buf = vec![ZERO; size * size];
        for t in 0..d {
            buf.iter_mut().for_each(|v| *v = ZERO);
            for k in 0..plane.len_i() {
                let [i, j] = plane.point(plane.to_a(Set::I, k));
                buf[(j + r) as usize * size + (i + r) as usize] = lam[k * d + t];
            }
            fft2(&mut buf, size, false);
            for (b, s) in buf.iter_mut().zip(&self.spectrum) {
                *b *= s * scale;
            }
            fft2(&mut buf, size, true);
            for a in 0..plane.len_a() {
                let [i, j] = plane.point(a);
                out[a * d + t] = buf[(j + r) as usize * size + (i + r) as usize];
            }
        }
        out
    }
}

fn subtract_mean(v: &mut [C64], d: usize) {
    let n = v.len() / d;
    for t in 0..d {
        let mean: C64 = v.iter().skip(t).step_by(d).sum::<C64>() / n as f64;
        v.iter_mut().skip(t).step_by(d).for_each(|x| *x -= mean);
    }
}

/// Solves `∂̄u = λ` for a (0,1)-form `λ`.
pub fn dbar_solve(s: &CanonicalSolver, lambda: &GForm) -> Result<DbarSolution, SolveError> {
    if lambda.degree() != 1 {
        return Err(GridError::Mismatch("dbar_solve expects a (0,1)-form".into()).into());
    }
    if lambda.domain() != &s.domain {
        return Err(SolveError::Config("form and solver live on different domains".into()));
    }
    let dom = &s.domain;
    let d = lambda.dim();
    let b = lambda.flat();
    let op = Dbar0 { dom, d };
    let x0 = match s.mode {
        SolveMode::Cauchy => Some(s.kernel().apply(dom, lambda.component(0), d)),
        SolveMode::LeastSquares => None,
    };
    if b.iter().all(|v| *v == ZERO) {
        let u = GForm::zeros(dom, lambda.algebra(), 0)?;
        return Ok(DbarSolution { u, residual_sup: 0.0, iterations: 0, rel_residual: 0.0, history: vec![0.0] });
    }
    let out = cgls(&op, &b, x0.as_deref(), s.cg_tolerance, s.cg_max_iters);
    if !out.converged {
        return Err(SolveError::NotConverged { iterations: out.iterations, rel_residual: out.rel_residual });
    }
    let mut x = out.x;
    if s.normalization == Normalization::MeanZero {
        subtract_mean(&mut x, d);
    }
    let u = GForm::from_components(dom, lambda.algebra(), 0, vec![x])?;
    let residual_sup = crate::grid::ops::dbar(&u)?.sub(lambda)?.sup_norm();
    Ok(DbarSolution { u, residual_sup, iterations: out.iterations, rel_residual: out.rel_residual, history: out.history })
}

/// Minimal-norm solution `β` of `∂̄β = g` for a (0,2)-form `g` (n = 2).
pub fn dbar_solve_2(s: &CanonicalSolver, g: &GForm) -> Result<DbarSolution, SolveError> {
    let dom = &s.domain;
    if g.degree() != 2 || dom.n() != 2 {
        return Err(GridError::Mismatch("the 2-form solve expects a (0,2)-form with n = 2".into()).into());
    }
    let d = g.dim();
    let op = Dbar1 { dom, d };
    let b = g.flat();
    if b.iter().all(|v| *v == ZERO) {
        let u = GForm::zeros(dom, g.algebra(), 1)?;
        return Ok(DbarSolution { u, residual_sup: 0.0, iterations: 0, rel_residual: 0.0, history: vec![0.0] });
    }
    let out = cgls(&op, &b, None, s.cg_tolerance, s.cg_max_iters);
    if !out.converged {
        return Err(SolveError::NotConverged { iterations: out.iterations, rel_residual: out.rel_residual });
    }
    let u = GForm::from_flat(dom, g.algebra(), 1, &out.x)?;
    let residual_sup = crate::grid::ops::dbar(&u)?.sub(g)?.sup_norm();
    Ok(DbarSolution { u, residual_sup, iterations: out.iterations, rel_residual: out.rel_residual, history: out.history })
}

/// `K(λ) = λ + ½ S₂[λ∧λ]`, where `S₂` is the minimal-norm right inverse on 2-forms.
pub fn kmap(s: &CanonicalSolver, lambda: &GForm) -> Result<GForm, SolveError> {
    if lambda.domain().n() == 1 || lambda.algebra().is_abelian() {
        return Ok(lambda.clone());
    }
    let w = wedge_bracket(lambda, lambda)?;
    let beta = dbar_solve_2(s, &w)?.u;
    Ok(lambda.axpy(C64::new(0.5, 0.0), &beta)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorReport {
    /// `‖∂̄u‖_{C^κ}`
    pub k_norm: f64,
    /// `C^{κ+1}` norm of `u` over the interior subdomain.
    pub v_norm: f64,
    /// `v_norm / k_norm`, or `None` when both vanish.
    pub ratio: Option<f64>,
    pub lambda_norm: f64,
}

/// Compares the `C^{κ+1}` size of `u` on the interior subdomain with `‖∂̄u‖_{C^κ}`.
pub fn interior_estimate_report(
    u: &GForm,
    lambda: &GForm,
    spec: &HolderSpec,
    opts: &HolderOptions,
) -> Result<InteriorReport, SolveError> {
    let du = crate::grid::ops::dbar(u)?;
    let k_norm = holder_norm(&du, spec, opts)?.value;
    let lambda_norm = holder_norm(lambda, spec, opts)?.value;
    let up = HolderSpec::new(spec.kappa + 1.0)?;
    let dom = u.domain();
    let (n, rv) = (dom.n(), dom.r() * dom.subdomain_fraction());
    let v_norm = holder_norm_where(u, &up, opts, |x| crate::holder::in_polydisc(x, n, rv))?.value;
    let ratio = if k_norm == 0.0 && v_norm == 0.0 {
        None
    } else {
        Some(v_norm / k_norm)
    };
    Ok(InteriorReport { k_norm, v_norm, ratio, lambda_norm })
}
