//! Newton iteration for the frame equation `l̄(exp u) = λ`.
//!
//! The default step inverts the differential at zero, `u ← u − S(l̄(exp u) − λ)` with `S`
//! a right inverse of ∂̄. The exact variant linearises `u ↦ D(ad_u)∂̄u` at the current
//! iterate instead. Forms outside the convergence basin are handled by solving for the
//! pullback along `z ↦ εz` on a shrinking schedule of `ε`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dbar_solve::{dbar_solve, kmap, CanonicalSolver, SolveError};
use crate::grid::ops::{dbar, gauge_transform, mc_pullback, obstruction, plane_dbar, plane_dbar_adj_acc, plane_extend_acc, plane_restrict};
use crate::grid::weak::{default_test_family, integrability_gate, weak_obstruction_residual};
use crate::grid::{interp, layouts, GForm, GridDomain, Set};
use crate::holder::{holder_norm, rescale, scaling_margin, HolderOptions, HolderSpec};
use crate::lie::{matvec, matvec_adj, CMat, SeriesConfig, SeriesScratch};
use crate::linalg::{cgls, LinOp};
use crate::oracle::{frame_matrices, matrix_mc};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianKind {
    /// The differential at zero, `∂̄`.
    Frozen,
    /// The differential at the current iterate.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Target for `‖l̄(exp u) − λ‖_sup`.
    pub newton_tolerance: f64,
    pub max_newton_iters: usize,
    pub dexp_truncation: usize,
    pub series_tolerance: f64,
    pub epsilon_schedule: Vec<f64>,
    pub kappa: HolderSpec,
    /// Allowed `|ratio − 1|` when judging the small-data limit.
    pub accept_ratio_window: f64,
    /// Integrability gate multiplier: the weak residual must stay below `factor·h²·‖α‖`.
    pub gate_factor: f64,
    /// An iterate whose residual exceeds this multiple of the initial one counts as diverged.
    pub divergence_factor: f64,
    pub jacobian: JacobianKind,
    pub holder: HolderOptions,
    /// Whether to evaluate Hölder norms of the result.
    pub compute_norms: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tolerance: 1e-9,
            max_newton_iters: 40,
            dexp_truncation: 30,
            series_tolerance: 1e-12,
            epsilon_schedule: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            kappa: HolderSpec::new(0.5).expect("valid"),
            accept_ratio_window: 0.1,
            gate_factor: 10.0,
            divergence_factor: 100.0,
            jacobian: JacobianKind::Frozen,
            holder: HolderOptions::default(),
            compute_norms: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::Config(m.to_string()));
        if !(self.newton_tolerance > 0.0 && self.series_tolerance > 0.0 && self.gate_factor > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_newton_iters == 0 || self.dexp_truncation == 0 {
            return bad("iteration counts must be positive");
        }
        if self.epsilon_schedule.is_empty() {
            return bad("epsilon schedule is empty");
        }
        if self.epsilon_schedule.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("epsilon values must lie in (0, 1]");
        }
        if self.epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilon schedule must be strictly decreasing");
        }
        if !(self.divergence_factor > 1.0) {
            return bad("divergence factor must exceed 1");
        }
        Ok(())
    }

    pub fn series(&self) -> SeriesConfig {
        SeriesConfig { truncation: self.dexp_truncation, tolerance: self.series_tolerance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    RescaledConverged,
    FailedNonintegrable,
    FailedBudget,
}

impl SolveStatus {
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Converged | SolveStatus::RescaledConverged)
    }
}

/// One attempt of the rescaling driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub epsilon: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_residual: f64,
    pub scaling_margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    #[serde(skip_serializing)]
    pub u: GForm,
    pub residual_history: Vec<f64>,
    pub epsilon_used: f64,
    pub iterations: usize,
    /// `‖∂̄u‖_{C^κ}`
    pub k_norm: Option<f64>,
    /// `‖λ‖_{C^κ}` of the form actually solved for.
    pub lambda_norm: Option<f64>,
    /// `k_norm / lambda_norm`.
    pub ratio: Option<f64>,
    pub status: SolveStatus,
    pub weak_residual: Option<f64>,
    pub gate: Option<f64>,
    pub trials: Vec<Trial>,
    pub message: Option<String>,
}

impl SolveResult {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }
}

/// Linearisation of `u ↦ D(ad_u)∂̄u` at a fixed `u`.
struct ExactJacobian<'a> {
    dom: &'a GridDomain,
    d: usize,
    /// Per component: `D(ad_u)` per node (row-major d×d).
    dmat: Vec<Vec<C64>>,
    /// Per component: `v ↦ (dD_u[v]) ∂̄u` per node.
    lmat: Vec<Vec<C64>>,
}

impl<'a> ExactJacobian<'a> {
    fn new(u: &'a GForm, series: SeriesConfig) -> Result<Self, SolveError> {
        let dom = u.domain();
        let g = u.algebra();
        let d = g.dim();
        let du = dbar(u)?;
        let mut scratch = SeriesScratch::new(d);
        let mut dmat = Vec::new();
        let mut lmat = Vec::new();
        let mut neg = vec![ZERO; d];
        let mut col = vec![ZERO; d];
        for (p, l) in layouts(dom.n(), 1).into_iter().enumerate() {
            let ur = plane_restrict(dom, u.component(0), [Set::A, Set::A], p, d);
            let nodes = dom.size(l);
            let mut dm = vec![ZERO; nodes * d * d];
            let mut lm = vec![ZERO; nodes * d * d];
            for i in 0..nodes {
                let ui = &ur[i * d..(i + 1) * d];
                for t in 0..d {
                    neg[t] = -ui[t];
                }
                g.exp_and_dexp(&neg, series, &mut scratch).map_err(|e| SolveError::Failed(e.to_string()))?;
                dm[i * d * d..(i + 1) * d * d].copy_from_slice(&scratch.f);
                let gi = du.value(p, i);
                for j in 0..d {
                    let mut e = vec![ZERO; d];
                    e[j] = C64::new(1.0, 0.0);
                    g.dexp_derivative_apply(ui, &e, gi, series, &mut col).map_err(|e| SolveError::Failed(e.to_string()))?;
                    for k in 0..d {
                        lm[i * d * d + k * d + j] = col[k];
                    }
                }
            }
            dmat.push(dm);
            lmat.push(lm);
        }
        Ok(ExactJacobian { dom, d, dmat, lmat })
    }

    fn comp_lens(&self) -> Vec<usize> {
        layouts(self.dom.n(), 1).iter().map(|&l| self.dom.size(l) * self.d).collect()
    }
}

impl LinOp for ExactJacobian<'_> {
    fn rows(&self) -> usize {
        self.comp_lens().iter().sum()
    }

    fn cols(&self) -> usize {
        self.dom.size([Set::A, Set::A]) * self.d
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let d = self.d;
        let mut off = 0;
        for p in 0..self.dom.n() {
            let dx = plane_dbar(self.dom, x, [Set::A, Set::A], p, d);
            let rx = plane_restrict(self.dom, x, [Set::A, Set::A], p, d);
            for i in 0..dx.len() / d {
                let m = i * d * d..(i + 1) * d * d;
                let s = i * d..(i + 1) * d;
                let o = &mut y[off + i * d..off + (i + 1) * d];
                matvec(&self.dmat[p][m.clone()], &dx[s.clone()], o, d, false);
                matvec(&self.lmat[p][m], &rx[s], o, d, true);
            }
            off += dx.len();
        }
    }

    fn apply_adj(&self, y: &[C64], x: &mut [C64]) {
        let d = self.d;
        x.iter_mut().for_each(|v| *v = ZERO);
        let mut off = 0;
        for (p, len) in self.comp_lens().into_iter().enumerate() {
            let yc = &y[off..off + len];
            let mut a = vec![ZERO; len];
            let mut b = vec![ZERO; len];
            for i in 0..len / d {
                let m = i * d * d..(i + 1) * d * d;
                let s = i * d..(i + 1) * d;
                matvec_adj(&self.dmat[p][m.clone()], &yc[s.clone()], &mut a[s.clone()], d, false);
                matvec_adj(&self.lmat[p][m], &yc[s.clone()], &mut b[s], d, false);
            }
            let mut lo = [Set::A, Set::A];
            lo[p] = Set::I;
            plane_dbar_adj_acc(self.dom, &a, lo, p, d, x);
            plane_extend_acc(self.dom, &b, lo, p, d, x);
            off += len;
        }
    }
}

fn failure(u: GForm, status: SolveStatus, history: Vec<f64>, message: String) -> SolveResult {
    let iterations = history.len().saturating_sub(1);
    SolveResult {
        u,
        residual_history: history,
        epsilon_used: 1.0,
        iterations,
        k_norm: None,
        lambda_norm: None,
        ratio: None,
        status,
        weak_residual: None,
        gate: None,
        trials: Vec::new(),
        message: Some(message),
    }
}

/// Weak residual and gate for n = 2; `None` in one variable.
pub fn integrability_check(alpha: &GForm, cfg: &SolverConfig) -> Result<Option<(f64, f64)>, SolveError> {
    if alpha.domain().n() == 1 {
        return Ok(None);
    }
    let tests = default_test_family(alpha.domain(), alpha.dim());
    let weak = weak_obstruction_residual(alpha, &tests)?;
    Ok(Some((weak, integrability_gate(alpha, cfg.gate_factor))))
}

fn attach_norms(res: &mut SolveResult, lambda: &GForm, cfg: &SolverConfig) -> Result<(), SolveError> {
    if !cfg.compute_norms {
        return Ok(());
    }
    let k = holder_norm(&dbar(&res.u)?, &cfg.kappa, &cfg.holder)?.value;
    let l = holder_norm(lambda, &cfg.kappa, &cfg.holder)?.value;
    res.k_norm = Some(k);
    res.lambda_norm = Some(l);
    res.ratio = (l > 0.0).then(|| k / l);
    Ok(())
}

/// Newton loop with a caller-supplied correction `step(u, residual)`.
fn newton_loop<F>(lambda: &GForm, cfg: &SolverConfig, mut step: F) -> Result<SolveResult, SolveError>
where
    F: FnMut(&GForm, &GForm) -> Result<GForm, SolveError>,
{
    cfg.validate()?;
    let series = cfg.series();
    let mut u = GForm::zeros(lambda.domain(), lambda.algebra(), 0)?;
    let mut r = mc_pullback(&u, series)?.sub(lambda)?;
    let r0 = r.sup_norm();
    let mut history = vec![r0];
    let mut it = 0;
    while history[it] > cfg.newton_tolerance {
        if it == cfg.max_newton_iters {
            return Ok(failure(u, SolveStatus::FailedBudget, history, "iteration budget exhausted".into()));
        }
        let delta = match step(&u, &r) {
            Ok(d) => d,
            Err(e) => return Ok(failure(u, SolveStatus::FailedBudget, history, format!("correction failed: {e}"))),
        };
        let next = u.sub(&delta)?;
        let rn = match mc_pullback(&next, series) {
            Ok(m) => m.sub(lambda)?,
            Err(e) => return Ok(failure(next, SolveStatus::FailedBudget, history, format!("diverged: {e}"))),
        };
        let s = rn.sup_norm();
        u = next;
        r = rn;
        history.push(s);
        it += 1;
        if !s.is_finite() || s > cfg.divergence_factor * r0 {
            return Ok(failure(u, SolveStatus::FailedBudget, history, "diverged".into()));
        }
    }
    Ok(SolveResult {
        u,
        residual_history: history,
        epsilon_used: 1.0,
        iterations: it,
        k_norm: None,
        lambda_norm: None,
        ratio: None,
        status: SolveStatus::Converged,
        weak_residual: None,
        gate: None,
        trials: Vec::new(),
        message: None,
    })
}

fn newton_inner(lambda: &GForm, s: &CanonicalSolver, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    let series = cfg.series();
    match cfg.jacobian {
        JacobianKind::Frozen => newton_loop(lambda, cfg, |_, r| Ok(dbar_solve(s, r)?.u)),
        JacobianKind::Exact => newton_loop(lambda, cfg, |u, r| {
            let j = ExactJacobian::new(u, series)?;
            let out = cgls(&j, &r.flat(), None, s.cg_tolerance(), s.cg_max_iters());
            Ok(GForm::from_flat(u.domain(), u.algebra(), 0, &out.x)?)
        }),
    }
}

fn gated<F>(lambda: &GForm, cfg: &SolverConfig, body: F) -> Result<SolveResult, SolveError>
where
    F: FnOnce() -> Result<SolveResult, SolveError>,
{
    let check = integrability_check(lambda, cfg)?;
    if let Some((weak, gate)) = check {
        if weak > gate {
            let u = GForm::zeros(lambda.domain(), lambda.algebra(), 0)?;
            let mut res = failure(u, SolveStatus::FailedNonintegrable, vec![], format!("weak obstruction {weak:e} exceeds gate {gate:e}"));
            res.weak_residual = Some(weak);
            res.gate = Some(gate);
            return Ok(res);
        }
    }
    let mut res = body()?;
    if let Some((weak, gate)) = check {
        res.weak_residual = Some(weak);
        res.gate = Some(gate);
    }
    Ok(res)
}

/// Solves `l̄(exp u) = λ` by Newton iteration from `u = 0`.
pub fn newton_frame_solve(lambda: &GForm, s: &CanonicalSolver, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    gated(lambda, cfg, || {
        let mut res = newton_inner(lambda, s, cfg)?;
        if res.status.is_success() {
            attach_norms(&mut res, lambda, cfg)?;
        }
        Ok(res)
    })
}

/// Newton iteration on `u ↦ K(l̄(exp u))` with the frozen inverse, targeting `K(λ)`.
pub fn kmap_newton(lambda: &GForm, s: &CanonicalSolver, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    gated(lambda, cfg, || {
        let series = cfg.series();
        let target = kmap(s, lambda)?;
        let mut res = newton_loop(lambda, cfg, |u, _| {
            let k = kmap(s, &mc_pullback(u, series)?)?;
            Ok(dbar_solve(s, &k.sub(&target)?)?.u)
        })?;
        if res.status.is_success() {
            attach_norms(&mut res, lambda, cfg)?;
        }
        Ok(res)
    })
}

/// `u ∘ h_ε⁻¹` on the grid over the ball of radius `εr` with the same spacing.
pub fn unscale(u: &GForm, eps: f64) -> Result<GForm, SolveError> {
    let dom = u.domain();
    let small = GridDomain::new(dom.n(), eps * dom.r(), dom.h(), dom.subdomain_fraction())?;
    let d = u.dim();
    let l = [Set::A, Set::A];
    let mut out = Vec::with_capacity(small.size(l) * d);
    let mut buf = vec![ZERO; d];
    for i in 0..small.size(l) {
        let x = small.coords(l, i).map(|v| v / eps);
        interp::interpolate(dom, l, u.component(0), d, x, &mut buf)?;
        out.extend_from_slice(&buf);
    }
    Ok(GForm::from_components(&small, u.algebra(), 0, vec![out])?)
}

/// Walks the ε schedule until Newton converges for the pullback of `α` along `z ↦ εz`.
pub fn rescaled_solve(alpha: &GForm, s: &CanonicalSolver, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    cfg.validate()?;
    gated(alpha, cfg, || {
        let mut trials = Vec::new();
        let mut last = None;
        for &eps in &cfg.epsilon_schedule {
            let a = rescale(alpha, eps)?;
            let mut res = newton_inner(&a, s, cfg)?;
            let margin = if cfg.compute_norms { Some(scaling_margin(alpha, eps, &cfg.kappa, &cfg.holder)?) } else { None };
            trials.push(Trial {
                epsilon: eps,
                status: res.status,
                iterations: res.iterations,
                final_residual: res.final_residual(),
                scaling_margin: margin,
            });
            if res.status.is_success() {
                attach_norms(&mut res, &a, cfg)?;
                if eps < 1.0 {
                    res.u = unscale(&res.u, eps)?;
                    res.status = SolveStatus::RescaledConverged;
                }
                res.epsilon_used = eps;
                res.trials = trials;
                return Ok(res);
            }
            last = Some(res);
        }
        let mut res = last.expect("schedule is nonempty");
        res.status = SolveStatus::FailedBudget;
        res.epsilon_used = *cfg.epsilon_schedule.last().unwrap();
        res.message = Some("epsilon schedule exhausted".into());
        res.trials = trials;
        Ok(res)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameReport {
    /// Pointwise `exp(ρ(u))` when the algebra carries a representation.
    #[serde(skip_serializing)]
    pub frame: Option<Vec<CMat>>,
    /// `‖l̄(exp u) − λ‖_sup`
    pub residual_strong: f64,
    /// `‖σ⁻¹∂̄σ − ρ(λ)‖_sup` with `σ = exp(ρ(u))`, over the interior subdomain.
    pub residual_matrix: Option<f64>,
    /// Sup norm of the obstruction of the gauged form `gauge_transform(λ, −u)`.
    pub gauge_check: f64,
    /// Sup norm of the gauged form itself.
    pub gauged_sup: f64,
}

/// Independent checks of a computed solution.
pub fn frame_and_verify(u: &GForm, lambda: &GForm, series: SeriesConfig) -> Result<FrameReport, SolveError> {
    let residual_strong = mc_pullback(u, series)?.sub(lambda)?.sup_norm();
    let neg = u.scale(C64::new(-1.0, 0.0));
    let gauged = gauge_transform(lambda, &neg, series)?;
    let gauge_check = obstruction(&gauged)?.sup_norm();
    let gauged_sup = gauged.sup_norm();
    let g = u.algebra();
    let (frame, residual_matrix) = if g.matrix_rep().is_some() {
        let frame = frame_matrices(u)?;
        let m = matrix_mc(u.domain(), &frame)?;
        let dom = u.domain();
        let ls = layouts(dom.n(), 1);
        let dist = m.distance_where(g, lambda, |c, i| dom.in_subdomain(ls[c], i))?;
        (Some(frame), Some(dist))
    } else {
        (None, None)
    };
    Ok(FrameReport { frame, residual_strong, residual_matrix, gauge_check, gauged_sup })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub t: f64,
    pub ratio: f64,
    pub iterations: usize,
    /// Set for `t = 0`, where the ratio is 1 by convention.
    pub skipped: bool,
}

/// `‖∂̄u_t‖_{C^κ} / ‖tλ‖_{C^κ}` for the Newton solutions `u_t` of `l̄(exp u_t) = tλ`.
pub fn ratio_study(lambda: &GForm, s: &CanonicalSolver, cfg: &SolverConfig, scales: &[f64]) -> Result<Vec<RatioPoint>, SolveError> {
    let mut cfg = cfg.clone();
    cfg.compute_norms = true;
    let mut out = Vec::new();
    for &t in scales {
        if t == 0.0 {
            out.push(RatioPoint { t, ratio: 1.0, iterations: 0, skipped: true });
            continue;
        }
        let lt = lambda.scale(C64::new(t, 0.0));
        let res = newton_frame_solve(&lt, s, &cfg)?;
        if !res.status.is_success() {
            return Err(SolveError::Failed(format!("no convergence at t = {t}: {:?}", res.status)));
        }
        let ratio = res.ratio.ok_or_else(|| SolveError::Failed("ratio undefined for zero data".into()))?;
        out.push(RatioPoint { t, ratio, iterations: res.iterations, skipped: false });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::LieAlgebra;
    use crate::oracle::{case, manufactured_lambda};

    fn fixture(name: &str, h: f64) -> (Option<GForm>, GForm) {
        let c = case(name).unwrap();
        let dom = GridDomain::new(c.n, c.radius, h, 0.5).unwrap();
        manufactured_lambda(&c, &dom).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.epsilon_schedule = vec![1.0, 1.0];
        assert!(cfg.validate().is_err());
        cfg.epsilon_schedule = vec![0.5, 1.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_data_takes_no_steps() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 16.0, 0.5).unwrap();
        let lam = GForm::zeros(&dom, &std::sync::Arc::new(LieAlgebra::sl2c()), 1).unwrap();
        let res = newton_frame_solve(&lam, &CanonicalSolver::for_domain(&dom), &SolverConfig::default()).unwrap();
        assert_eq!((res.status, res.iterations), (SolveStatus::Converged, 0));
        assert_eq!(res.u.sup_norm(), 0.0);
    }

    #[test]
    fn abelian_takes_one_step() {
        let (_, lam) = fixture("abelian_1d", 1.0 / 32.0);
        let s = CanonicalSolver::for_domain(lam.domain());
        let res = newton_frame_solve(&lam, &s, &SolverConfig::default()).unwrap();
        assert_eq!(res.iterations, 1);
        let direct = dbar_solve(&s, &lam).unwrap().u;
        assert!(res.u.sub(&direct).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn heisenberg_closed_loop() {
        let (_, lam) = fixture("heisenberg_step2_1d", 1.0 / 32.0);
        let s = CanonicalSolver::for_domain(lam.domain());
        let res = newton_frame_solve(&lam, &s, &SolverConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert!(res.final_residual() <= 1e-9 && res.iterations <= 8, "{:?}", res.residual_history);
        let rep = frame_and_verify(&res.u, &lam, SolverConfig::default().series()).unwrap();
        assert!(rep.gauged_sup < 1e-8);
        assert!(rep.residual_matrix.unwrap() < 5.0 / 32.0 / 32.0, "{}", rep.residual_matrix.unwrap());
    }

    #[test]
    fn exact_jacobian_matches_finite_difference() {
        let (u, lam) = fixture("gl2_1d", 1.0 / 8.0);
        let u = u.unwrap().scale(C64::new(0.7, 0.2));
        let series = SolverConfig::default().series();
        let j = ExactJacobian::new(&u, series).unwrap();
        let v = GForm::from_fn(u.domain(), u.algebra(), 0, |_, z, o| {
            for (t, x) in o.iter_mut().enumerate() {
                *x = z[0] * (t as f64 + 1.0) * 0.1 + C64::new(0.05, -0.02);
            }
        })
        .unwrap();
        let mut jv = vec![ZERO; j.rows()];
        j.apply(&v.flat(), &mut jv);
        let eps = 1e-6;
        let plus = mc_pullback(&u.axpy(C64::new(eps, 0.0), &v).unwrap(), series).unwrap();
        let minus = mc_pullback(&u.axpy(C64::new(-eps, 0.0), &v).unwrap(), series).unwrap();
        let fd: Vec<C64> = plus.flat().iter().zip(minus.flat()).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let err = jv.iter().zip(&fd).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        // adjointness
        let y: Vec<C64> = (0..j.rows()).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let mut jhy = vec![ZERO; j.cols()];
        j.apply_adj(&y, &mut jhy);
        let lhs: C64 = jv.iter().zip(&y).map(|(a, b)| b.conj() * a).sum();
        let rhs: C64 = v.flat().iter().zip(&jhy).map(|(a, b)| b.conj() * a).sum();
        assert!((lhs - rhs).norm() < 1e-9 * lhs.norm().max(1.0));
        let _ = lam;
    }

    #[test]
    fn exact_newton_on_nonnilpotent_fixture() {
        let (_, lam) = fixture("gl2_1d", 1.0 / 32.0);
        let s = CanonicalSolver::for_domain(lam.domain());
        let cfg = SolverConfig { jacobian: JacobianKind::Exact, compute_norms: false, ..SolverConfig::default() };
        let res = newton_frame_solve(&lam, &s, &cfg).unwrap();
        assert_eq!(res.status, SolveStatus::Converged, "{:?}", res.residual_history);
        let frozen = newton_frame_solve(&lam, &s, &SolverConfig { compute_norms: false, ..SolverConfig::default() }).unwrap();
        assert!(res.iterations < frozen.iterations, "{} vs {}", res.iterations, frozen.iterations);
    }

    #[test]
    fn kmap_newton_agrees_with_frozen_newton() {
        let (_, lam) = fixture("heisenberg_step2_2d", 1.0 / 16.0);
        let s = CanonicalSolver::for_domain(lam.domain());
        let cfg = SolverConfig { compute_norms: false, ..SolverConfig::default() };
        let a = newton_frame_solve(&lam, &s, &cfg).unwrap();
        let b = kmap_newton(&lam, &s, &cfg).unwrap();
        assert!(a.status.is_success() && b.status.is_success());
        assert!(a.u.sub(&b.u).unwrap().sup_norm() < 1e-7);
    }

    #[test]
    fn nonintegrable_input_is_rejected() {
        let (_, a) = fixture("nonintegrable_2d", 1.0 / 16.0);
        let s = CanonicalSolver::for_domain(a.domain());
        let res = rescaled_solve(&a, &s, &SolverConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::FailedNonintegrable);
        assert!(res.weak_residual.unwrap() > 10.0 * res.gate.unwrap());
    }

    #[test]
    fn unscale_inverts_rescale_on_the_small_ball() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 32.0, 0.5).unwrap();
        let g = std::sync::Arc::new(LieAlgebra::abelian(1));
        let u = GForm::from_fn(&dom, &g, 0, |_, z, o| o[0] = z[0].conj() * z[0]).unwrap();
        let scaled = rescale(&u, 0.5).unwrap();
        let back = unscale(&scaled, 0.5).unwrap();
        let l = [Set::A, Set::A];
        for i in 0..back.domain().size(l) {
            let z = back.domain().z(l, i)[0];
            assert!((back.value(0, i)[0] - z.conj() * z).norm() < 1e-12);
        }
    }
}
