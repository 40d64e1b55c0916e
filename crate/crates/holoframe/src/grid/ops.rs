//! Differential and algebraic operations on forms: ∂̄, the bracket-wedge,
//! the obstruction, the Maurer-Cartan pullback and the gauge action.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::{layouts, GForm, GridDomain, GridError, Layout, Set};
use crate::lie::{matvec, vec_norm, CMat, LieAlgebra, SeriesConfig, SeriesScratch};

const ZERO: C64 = C64::new(0.0, 0.0);

fn with_set(l: Layout, p: usize, s: Set) -> Layout {
    let mut out = l;
    out[p] = s;
    out
}

fn strides(dom: &GridDomain, l: Layout) -> [usize; 2] {
    [1, dom.plane().len(l[0])]
}

fn other_len(dom: &GridDomain, l: Layout, p: usize) -> usize {
    if dom.n() == 2 {
        dom.plane().len(l[1 - p])
    } else {
        1
    }
}

/// Centred ∂/∂z̄ in plane `p`: maps data on `l` (with `l[p] = A`) to `l` with `l[p] = I`.
pub fn plane_dbar(dom: &GridDomain, src: &[C64], l: Layout, p: usize, d: usize) -> Vec<C64> {
    debug_assert_eq!(l[p], Set::A);
    let lo = with_set(l, p, Set::I);
    let mut out = vec![ZERO; dom.size(lo) * d];
    let (si, so) = (strides(dom, l), strides(dom, lo));
    let q = 1 - p;
    let c = 1.0 / (4.0 * dom.h());
    let plane = dom.plane();
    for o in 0..other_len(dom, l, p) {
        for k in 0..plane.len_i() {
            let [e, w, n, s] = plane.neighbours(k);
            let base = |a: usize| (a * si[p] + o * si[q]) * d;
            let (be, bw, bn, bs) = (base(e), base(w), base(n), base(s));
            let bo = (k * so[p] + o * so[q]) * d;
            for t in 0..d {
                let dx = src[be + t] - src[bw + t];
                let dy = src[bn + t] - src[bs + t];
                out[bo + t] = C64::new(c * (dx.re - dy.im), c * (dx.im + dy.re));
            }
        }
    }
    out
}

/// Accumulates the adjoint of [`plane_dbar`]: `out (layout with A in plane p) += D_p^H src`.
pub fn plane_dbar_adj_acc(dom: &GridDomain, src: &[C64], lo: Layout, p: usize, d: usize, out: &mut [C64]) {
    debug_assert_eq!(lo[p], Set::I);
    let l = with_set(lo, p, Set::A);
    let (si, so) = (strides(dom, l), strides(dom, lo));
    let q = 1 - p;
    let c = 1.0 / (4.0 * dom.h());
    let plane = dom.plane();
    for o in 0..other_len(dom, l, p) {
        for k in 0..plane.len_i() {
            let [e, w, n, s] = plane.neighbours(k);
            let base = |a: usize| (a * si[p] + o * si[q]) * d;
            let bo = (k * so[p] + o * so[q]) * d;
            let (be, bw, bn, bs) = (base(e), base(w), base(n), base(s));
            for t in 0..d {
                let y = src[bo + t] * c;
                let iy = C64::new(-y.im, y.re);
                out[be + t] += y;
                out[bw + t] -= y;
                out[bn + t] -= iy;
                out[bs + t] += iy;
            }
        }
    }
}

/// Restriction from `A` to `I` in plane `p`.
pub fn plane_restrict(dom: &GridDomain, src: &[C64], l: Layout, p: usize, d: usize) -> Vec<C64> {
    let lo = with_set(l, p, Set::I);
    let mut out = vec![ZERO; dom.size(lo) * d];
    let (si, so) = (strides(dom, l), strides(dom, lo));
    let q = 1 - p;
    let plane = dom.plane();
    for o in 0..other_len(dom, l, p) {
        for k in 0..plane.len_i() {
            let a = plane.to_a(Set::I, k);
            let bi = (a * si[p] + o * si[q]) * d;
            let bo = (k * so[p] + o * so[q]) * d;
            out[bo..bo + d].copy_from_slice(&src[bi..bi + d]);
        }
    }
    out
}

/// Adjoint of [`plane_restrict`] (extension by zero), accumulated into `out`.
pub fn plane_extend_acc(dom: &GridDomain, src: &[C64], lo: Layout, p: usize, d: usize, out: &mut [C64]) {
    let l = with_set(lo, p, Set::A);
    let (si, so) = (strides(dom, l), strides(dom, lo));
    let q = 1 - p;
    let plane = dom.plane();
    for o in 0..other_len(dom, l, p) {
        for k in 0..plane.len_i() {
            let a = plane.to_a(Set::I, k);
            let bi = (a * si[p] + o * si[q]) * d;
            let bo = (k * so[p] + o * so[q]) * d;
            for t in 0..d {
                out[bi + t] += src[bo + t];
            }
        }
    }
}

/// Restricts data on `from` to the smaller layout `to`.
pub fn restrict(dom: &GridDomain, src: &[C64], from: Layout, to: Layout, d: usize) -> Vec<C64> {
    let mut cur = src.to_vec();
    let mut l = from;
    for p in 0..dom.n() {
        if l[p] == Set::A && to[p] == Set::I {
            cur = plane_restrict(dom, &cur, l, p, d);
            l[p] = Set::I;
        }
    }
    debug_assert!((0..dom.n()).all(|p| l[p] == to[p]));
    cur
}

fn require_degree(f: &GForm, q: usize, what: &str) -> Result<(), GridError> {
    if f.degree() != q {
        return Err(GridError::Mismatch(format!("{what} expects a (0,{q})-form, got degree {}", f.degree())));
    }
    Ok(())
}

/// ∂̄ of a (0,q)-form.
pub fn dbar(f: &GForm) -> Result<GForm, GridError> {
    let dom = f.domain();
    let n = dom.n();
    let d = f.dim();
    let q = f.degree();
    if q >= n {
        return Err(GridError::Degree { q: q + 1, n });
    }
    let comps = if q == 0 {
        (0..n).map(|p| plane_dbar(dom, f.component(0), [Set::A, Set::A], p, d)).collect()
    } else {
        // (∂̄α)_12 = ∂_1 α_2 − ∂_2 α_1
        let d1a2 = plane_dbar(dom, f.component(1), [Set::A, Set::I], 0, d);
        let d2a1 = plane_dbar(dom, f.component(0), [Set::I, Set::A], 1, d);
        vec![d1a2.iter().zip(&d2a1).map(|(a, b)| a - b).collect()]
    };
    GForm::from_components(dom, f.algebra(), q + 1, comps)
}

/// Both (0,1) components restricted to the (0,2) node set.
fn restrict_pair(f: &GForm) -> (Vec<C64>, Vec<C64>) {
    let dom = f.domain();
    let d = f.dim();
    let a1 = plane_restrict(dom, f.component(0), [Set::I, Set::A], 1, d);
    let a2 = plane_restrict(dom, f.component(1), [Set::A, Set::I], 0, d);
    (a1, a2)
}

/// `[a∧b]_12 = [a_1, b_2] − [a_2, b_1]`; empty for n = 1.
pub fn wedge_bracket(a: &GForm, b: &GForm) -> Result<GForm, GridError> {
    a.same_space(b)?;
    require_degree(a, 1, "wedge_bracket")?;
    require_degree(b, 1, "wedge_bracket")?;
    let dom = a.domain();
    if dom.n() == 1 {
        return GForm::zeros(dom, a.algebra(), 2);
    }
    let g = a.algebra();
    let d = g.dim();
    let (a1, a2) = restrict_pair(a);
    let (b1, b2) = restrict_pair(b);
    let mut out = vec![ZERO; a1.len()];
    let one = C64::new(1.0, 0.0);
    for i in 0..a1.len() / d {
        let s = i * d..(i + 1) * d;
        let o = &mut out[s.clone()];
        g.bracket_acc(&a1[s.clone()], &b2[s.clone()], one, o);
        g.bracket_acc(&a2[s.clone()], &b1[s.clone()], -one, o);
    }
    GForm::from_components(dom, g, 2, vec![out])
}

/// `f = ∂̄α + ½[α∧α]`; the empty (0,2)-form for n = 1.
pub fn obstruction(alpha: &GForm) -> Result<GForm, GridError> {
    require_degree(alpha, 1, "obstruction")?;
    let dom = alpha.domain();
    if dom.n() == 1 {
        return GForm::zeros(dom, alpha.algebra(), 2);
    }
    let g = alpha.algebra();
    let d = g.dim();
    let mut f = dbar(alpha)?;
    let (a1, a2) = restrict_pair(alpha);
    let out = f.component_mut(0);
    for i in 0..a1.len() / d {
        let s = i * d..(i + 1) * d;
        g.bracket_acc(&a1[s.clone()], &a2[s.clone()], C64::new(1.0, 0.0), &mut out[s]);
    }
    Ok(f)
}

/// Pointwise series factors at every node of each layout, fed to `body(component, node, e, f)`
/// where `e = Ad_exp(w)` and `f = sum ad_w^m/(m+1)!`, with `w = sign * u`.
fn for_each_series<F>(
    u: &GForm,
    targets: &[Layout],
    sign: f64,
    cfg: SeriesConfig,
    mut body: F,
) -> Result<(), GridError>
where
    F: FnMut(usize, usize, &[C64], &[C64]),
{
    let dom = u.domain();
    let g = u.algebra();
    let d = g.dim();
    let mut scratch = SeriesScratch::new(d);
    let mut w = vec![ZERO; d];
    for (c, &l) in targets.iter().enumerate() {
        let ur = restrict(dom, u.component(0), [Set::A, Set::A], l, d);
        for i in 0..dom.size(l) {
            for t in 0..d {
                w[t] = ur[i * d + t] * sign;
            }
            g.exp_and_dexp(&w, cfg, &mut scratch)
                .map_err(|source| GridError::Series { component: c, node: i, source })?;
            body(c, i, &scratch.e, &scratch.f);
        }
    }
    Ok(())
}

/// `l̄(exp u)`: pointwise `D(ad_u) ∂̄u`.
pub fn mc_pullback(u: &GForm, cfg: SeriesConfig) -> Result<GForm, GridError> {
    require_degree(u, 0, "mc_pullback")?;
    let du = dbar(u)?;
    if u.algebra().is_abelian() {
        return Ok(du);
    }
    let d = u.dim();
    let ls = layouts(u.domain().n(), 1);
    let mut comps: Vec<Vec<C64>> = (0..ls.len()).map(|c| vec![ZERO; du.component(c).len()]).collect();
    for_each_series(u, &ls, -1.0, cfg, |c, i, _e, f| {
        let s = i * d..(i + 1) * d;
        matvec(f, &du.component(c)[s.clone()], &mut comps[c][s], d, false);
    })?;
    GForm::from_components(u.domain(), u.algebra(), 1, comps)
}

/// `Ad_exp(−u) α + l̄(exp u)`.
pub fn gauge_transform(alpha: &GForm, u: &GForm, cfg: SeriesConfig) -> Result<GForm, GridError> {
    alpha.same_space(u)?;
    require_degree(alpha, 1, "gauge_transform")?;
    require_degree(u, 0, "gauge_transform")?;
    let du = dbar(u)?;
    let d = u.dim();
    let ls = layouts(u.domain().n(), 1);
    let mut comps: Vec<Vec<C64>> = (0..ls.len()).map(|c| vec![ZERO; alpha.component(c).len()]).collect();
    for_each_series(u, &ls, -1.0, cfg, |c, i, e, f| {
        let s = i * d..(i + 1) * d;
        let o = &mut comps[c][s.clone()];
        matvec(e, &alpha.component(c)[s.clone()], o, d, false);
        matvec(f, &du.component(c)[s], o, d, true);
    })?;
    GForm::from_components(alpha.domain(), alpha.algebra(), 1, comps)
}

/// Pointwise `Ad_exp(sign * u) f` for a form `f` of any degree.
pub fn ad_exp_apply(u: &GForm, f: &GForm, sign: f64, cfg: SeriesConfig) -> Result<GForm, GridError> {
    u.same_space(f)?;
    require_degree(u, 0, "ad_exp_apply")?;
    let d = u.dim();
    let ls = layouts(u.domain().n(), f.degree());
    let mut comps: Vec<Vec<C64>> = (0..ls.len()).map(|c| vec![ZERO; f.component(c).len()]).collect();
    for_each_series(u, &ls, sign, cfg, |c, i, e, _f| {
        let s = i * d..(i + 1) * d;
        matvec(e, &f.component(c)[s.clone()], &mut comps[c][s], d, false);
    })?;
    GForm::from_components(f.domain(), f.algebra(), f.degree(), comps)
}

/// Sup norm of `∂̄b + [α∧b] + ½[b∧b] − (Ad_exp(−u) − id) f(α)` with `b = gauge_transform(α,u) − α`.
pub fn kj_identity_defect(alpha: &GForm, u: &GForm, cfg: SeriesConfig) -> Result<f64, GridError> {
    if alpha.domain().n() != 2 {
        return Err(GridError::Degree { q: 2, n: alpha.domain().n() });
    }
    let b = gauge_transform(alpha, u, cfg)?.sub(alpha)?;
    let lhs = dbar(&b)?
        .add(&wedge_bracket(alpha, &b)?)?
        .axpy(C64::new(0.5, 0.0), &wedge_bracket(&b, &b)?)?;
    let f = obstruction(alpha)?;
    let rhs = ad_exp_apply(u, &f, -1.0, cfg)?.sub(&f)?;
    Ok(lhs.sub(&rhs)?.sup_norm())
}

/// Curvature of the induced matrix-valued operator next to the represented obstruction.
#[derive(Debug, Clone)]
pub struct RepCurvature {
    /// `∂̄ρ(α) + ρ(α)∧ρ(α)` per (0,2) node.
    pub curvature: Vec<CMat>,
    /// `ρ(f(α))` per (0,2) node.
    pub represented_obstruction: Vec<CMat>,
    pub max_deviation: f64,
}

/// Computes `∂̄ρ(α) + ρ(α)∧ρ(α)` from matrix-valued data and compares with `ρ(obstruction(α))`.
pub fn rep_curvature(alpha: &GForm) -> Result<RepCurvature, GridError> {
    require_degree(alpha, 1, "rep_curvature")?;
    let g = alpha.algebra();
    let r = g.rep_size().ok_or(crate::lie::LieError::NoRepresentation)?;
    let dom = alpha.domain();
    if dom.n() == 1 {
        return Ok(RepCurvature { curvature: vec![], represented_obstruction: vec![], max_deviation: 0.0 });
    }
    let rr = r * r;
    let to_mats = |c: usize| -> Result<Vec<C64>, GridError> {
        let d = g.dim();
        let src = alpha.component(c);
        let mut out = Vec::with_capacity(src.len() / d * rr);
        for v in src.chunks(d) {
            // row-major entries of rho(v)
            let m = g.rep(v)?;
            for i in 0..r {
                for j in 0..r {
                    out.push(m[(i, j)]);
                }
            }
        }
        Ok(out)
    };
    let m1 = to_mats(0)?;
    let m2 = to_mats(1)?;
    let dm2 = plane_dbar(dom, &m2, [Set::A, Set::I], 0, rr);
    let dm1 = plane_dbar(dom, &m1, [Set::I, Set::A], 1, rr);
    let m1r = plane_restrict(dom, &m1, [Set::I, Set::A], 1, rr);
    let m2r = plane_restrict(dom, &m2, [Set::A, Set::I], 0, rr);
    let f = obstruction(alpha)?;
    let nodes = dom.size([Set::I, Set::I]);
    let mut curvature = Vec::with_capacity(nodes);
    let mut rep_f = Vec::with_capacity(nodes);
    let mut worst = 0.0f64;
    for i in 0..nodes {
        let s = i * rr..(i + 1) * rr;
        let a1 = CMat::from_row_slice(r, r, &m1r[s.clone()]);
        let a2 = CMat::from_row_slice(r, r, &m2r[s.clone()]);
        let dpart = CMat::from_row_slice(r, r, &dm2[s.clone()]) - CMat::from_row_slice(r, r, &dm1[s]);
        let curv = dpart + &a1 * &a2 - &a2 * &a1;
        let rf = g.rep(f.value(0, i))?;
        worst = worst.max((&curv - &rf).norm());
        curvature.push(curv);
        rep_f.push(rf);
    }
    Ok(RepCurvature { curvature, represented_obstruction: rep_f, max_deviation: worst })
}

/// Sup norm of the difference of two forms restricted to nodes where `mask` holds.
pub fn sup_diff_where<F>(a: &GForm, b: &GForm, mut mask: F) -> Result<f64, GridError>
where
    F: FnMut(usize, usize) -> bool,
{
    a.same_space(b)?;
    let d = a.dim();
    let mut worst = 0.0f64;
    for c in 0..a.num_components() {
        let (x, y) = (a.component(c), b.component(c));
        for i in 0..x.len() / d {
            if mask(c, i) {
                let diff: Vec<C64> = (0..d).map(|t| x[i * d + t] - y[i * d + t]).collect();
                worst = worst.max(vec_norm(&diff));
            }
        }
    }
    Ok(worst)
}

/// Nodes of a (0,2)-form whose full ∂̄∘∂̄ stencil stays inside the disc ("doubly interior").
pub fn doubly_interior(dom: &GridDomain, l: Layout, idx: usize) -> bool {
    let p = dom.lattice(l, idx);
    let plane = dom.plane();
    let ok = |i: i32, j: i32| plane.find_in(Set::I, i, j).is_some();
    let plane_ok = |i: i32, j: i32| ok(i + 1, j) && ok(i - 1, j) && ok(i, j + 1) && ok(i, j - 1);
    plane_ok(p[0], p[1]) && (dom.n() == 1 || plane_ok(p[2], p[3]))
}

/// Convenience: builds a shared algebra handle.
pub fn shared(g: LieAlgebra) -> Arc<LieAlgebra> {
    Arc::new(g)
}
