//! Gauge-calculus identity checks in two variables.
//!
//! [`stream_defects`] evaluates random polynomial data directly on the lattice of a ball
//! and never materialises full forms, so fine grids fit in memory. [`form_defects`]
//! computes the same quantities through the [`GForm`] operations and serves as its
//! cross-check on small grids.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::grid::ops::{ad_exp_apply, dbar, gauge_transform, obstruction, rep_curvature, wedge_bracket};
use crate::grid::{GForm, GridDomain, GridError, Set};
use crate::lie::{matvec, vec_norm, LieAlgebra, LieError, SeriesConfig, SeriesScratch};
use crate::poly::LiePoly;

const ZERO: C64 = C64::new(0.0, 0.0);
const HALF: C64 = C64::new(0.5, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("identity checks need two variables, got n = {0}")]
    Dimension(usize),
}

/// Polynomial data `α = α₁dz̄₁ + α₂dz̄₂`, `b = b₁dz̄₁ + b₂dz̄₂` and `u` on ℂ².
#[derive(Debug, Clone)]
pub struct IdentityInputs {
    pub algebra: Arc<LieAlgebra>,
    pub alpha: [LiePoly; 2],
    pub b: [LiePoly; 2],
    pub u: LiePoly,
}

impl IdentityInputs {
    /// Sparse random polynomials of degree at most 3 with coefficients bounded by `scale`.
    pub fn random<R: Rng>(algebra: Arc<LieAlgebra>, rng: &mut R, terms: usize, scale: f64) -> Self {
        let d = algebra.dim();
        let mut p = || LiePoly::random(rng, d, 2, 3, terms, scale);
        let alpha = [p(), p()];
        let b = [p(), p()];
        let u = p();
        IdentityInputs { algebra, alpha, b, u }
    }
}

/// Maximum defects over the checked (0,2) nodes.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityDefects {
    /// `f(α+b) − f(α) − ∂̄b − [α∧b] − ½[b∧b]`
    pub fg_j_plus_b: f64,
    /// `f(gauge(α,u)) − Ad_exp(−u) f(α)`
    pub j_dot_sigma: f64,
    /// `∂̄c + [α∧c] + ½[c∧c] − (Ad_exp(−u) − id) f(α)` with `c = gauge(α,u) − α`
    pub kj_lj: f64,
    /// `∂̄ρ(α) + ρ(α)∧ρ(α) − ρ(f(α))`; absent without a representation.
    pub rep_curvature: Option<f64>,
    /// Size of `f(α)` on the same nodes, for scale.
    pub obstruction_sup: f64,
    pub nodes: usize,
    #[serde(skip)]
    pub seconds: f64,
}

impl IdentityDefects {
    fn empty() -> Self {
        IdentityDefects {
            fg_j_plus_b: 0.0,
            j_dot_sigma: 0.0,
            kj_lj: 0.0,
            rep_curvature: None,
            obstruction_sup: 0.0,
            nodes: 0,
            seconds: 0.0,
        }
    }

    /// `(name, value)` for every identity that was evaluated.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![("fg_j_plus_b", self.fg_j_plus_b), ("j_dot_sigma", self.j_dot_sigma), ("kj_lj", self.kj_lj)];
        if let Some(r) = self.rep_curvature {
            v.push(("rep_curvature", r));
        }
        v
    }

    pub fn max_defect(&self) -> f64 {
        self.rows().iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

/// Values of a (0,1)-form at the five points of an obstruction stencil.
///
/// Slot 0 is the centre; slots 1..=4 hold the east, west, north, south neighbours in
/// the plane that the component is differentiated in.
#[derive(Clone)]
struct Local {
    d: usize,
    /// first component at (centre, neighbours in plane 2)
    c1: Vec<C64>,
    /// second component at (centre, neighbours in plane 1)
    c2: Vec<C64>,
}

impl Local {
    fn new(d: usize) -> Self {
        Local { d, c1: vec![ZERO; 5 * d], c2: vec![ZERO; 5 * d] }
    }

    fn at(v: &[C64], s: usize, d: usize) -> &[C64] {
        &v[s * d..(s + 1) * d]
    }

    fn lin_into(&self, a: C64, o: &Local, b: C64, out: &mut Local) {
        for (r, (x, y)) in out.c1.iter_mut().zip(self.c1.iter().zip(&o.c1)) {
            *r = a * x + b * y;
        }
        for (r, (x, y)) in out.c2.iter_mut().zip(self.c2.iter().zip(&o.c2)) {
            *r = a * x + b * y;
        }
    }

    fn dbar(&self, c: f64, out: &mut [C64]) {
        let d = self.d;
        for t in 0..d {
            let s = |v: &[C64], k: usize| v[k * d + t];
            let d1 = (s(&self.c2, 1) - s(&self.c2, 2)) + C64::i() * (s(&self.c2, 3) - s(&self.c2, 4));
            let d2 = (s(&self.c1, 1) - s(&self.c1, 2)) + C64::i() * (s(&self.c1, 3) - s(&self.c1, 4));
            out[t] = (d1 - d2) * c;
        }
    }

    /// `out += s·[self∧o]`
    fn wedge_acc(&self, g: &LieAlgebra, o: &Local, s: C64, out: &mut [C64]) {
        let d = self.d;
        g.bracket_acc(Self::at(&self.c1, 0, d), Self::at(&o.c2, 0, d), s, out);
        g.bracket_acc(Self::at(&self.c2, 0, d), Self::at(&o.c1, 0, d), -s, out);
    }

    fn obstruction(&self, g: &LieAlgebra, c: f64, out: &mut [C64]) {
        self.dbar(c, out);
        self.wedge_acc(g, self, HALF, out);
    }
}

/// Row-major `r×r` representation matrices without heap traffic per node.
struct FlatRep {
    r: usize,
    basis: Vec<Vec<C64>>,
    bufs: [Vec<C64>; 3],
}

impl FlatRep {
    fn new(g: &LieAlgebra) -> Option<Self> {
        let mats = g.matrix_rep()?;
        let r = mats[0].nrows();
        let basis = mats.iter().map(|m| (0..r * r).map(|k| m[(k / r, k % r)]).collect()).collect();
        Some(FlatRep { r, basis, bufs: std::array::from_fn(|_| vec![ZERO; r * r]) })
    }

    fn rep_into(basis: &[Vec<C64>], v: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        for (a, m) in v.iter().zip(basis) {
            if *a != ZERO {
                for (o, x) in out.iter_mut().zip(m) {
                    *o += a * x;
                }
            }
        }
    }

    /// `‖∂̄ρ(α) + ρ(α₁)ρ(α₂) − ρ(α₂)ρ(α₁) − ρ(f)‖_F` at the stencil centre.
    ///
    /// `ρ` is linear, so `∂̄ρ(α) − ρ(f) = ρ(∂̄α − f)` is formed in algebra coordinates.
    fn deviation(&mut self, alpha: &Local, f: &[C64], c: f64, scratch: &mut [C64]) -> f64 {
        let (r, d) = (self.r, alpha.d);
        let [m1, m2, acc] = &mut self.bufs;
        alpha.dbar(c, scratch);
        scratch.iter_mut().zip(f).for_each(|(s, f)| *s -= f);
        Self::rep_into(&self.basis, scratch, acc);
        Self::rep_into(&self.basis, Local::at(&alpha.c1, 0, d), m1);
        Self::rep_into(&self.basis, Local::at(&alpha.c2, 0, d), m2);
        for i in 0..r {
            for j in 0..r {
                let mut s = ZERO;
                for k in 0..r {
                    s += m1[i * r + k] * m2[k * r + j] - m2[i * r + k] * m1[k * r + j];
                }
                acc[i * r + j] += s;
            }
        }
        acc.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

const NF: usize = 5;
const F_ALPHA: usize = 0;
const F_B: usize = 2;
const F_U: usize = 4;

/// Data for one plane-2 lattice point over all plane-1 points.
struct Slab {
    /// Per plane-1 node: α₁, α₂, b₁, b₂, u.
    raw: Vec<C64>,
    /// Gauged first component on plane-1 interior nodes (indexed by plane-1 node).
    g1: Option<Vec<C64>>,
    /// Gauged second component; only for plane-2 interior points.
    g2: Option<Vec<C64>>,
    /// `Ad_exp(−u)` per plane-1 node, filled together with `g2`.
    ad: Option<Vec<C64>>,
}

impl Slab {
    fn raw(&self, a1: usize, f: usize, d: usize) -> &[C64] {
        let o = (a1 * NF + f) * d;
        &self.raw[o..o + d]
    }
}

struct Streamer<'a> {
    inp: &'a IdentityInputs,
    dom: GridDomain,
    radius: f64,
    series: SeriesConfig,
    slabs: HashMap<usize, Slab>,
    scratch: SeriesScratch,
}

impl<'a> Streamer<'a> {
    fn z(&self, a: usize) -> C64 {
        let [i, j] = self.dom.plane().point(a);
        C64::new(i as f64, j as f64) * self.dom.h()
    }

    /// Plane-1 extent needed around plane-2 point `y`.
    fn reach(&self, y: C64) -> f64 {
        let m = 3.0 * self.dom.h();
        let inner = (y.norm() - m).max(0.0);
        (self.radius * self.radius - inner * inner).max(0.0).sqrt() + m
    }

    fn ensure_raw(&mut self, a2: usize) {
        if self.slabs.contains_key(&a2) {
            return;
        }
        let d = self.inp.algebra.dim();
        let plane = self.dom.plane();
        let y = self.z(a2);
        let reach = self.reach(y);
        let mut raw = vec![ZERO; plane.len_a() * NF * d];
        let polys = [&self.inp.alpha[0], &self.inp.alpha[1], &self.inp.b[0], &self.inp.b[1], &self.inp.u];
        // With y fixed every polynomial is one in (x, x̄) only.
        let mut terms: Vec<(usize, usize, usize, Vec<C64>)> = Vec::new();
        for (f, p) in polys.iter().enumerate() {
            for (e, c) in p.terms() {
                let w = y.powu(e[2] as u32) * y.conj().powu(e[3] as u32);
                let key = (f * d, e[0] as usize, e[1] as usize);
                match terms.iter_mut().find(|t| (t.0, t.1, t.2) == key) {
                    Some(t) => t.3.iter_mut().zip(c).for_each(|(a, b)| *a += b * w),
                    None => terms.push((key.0, key.1, key.2, c.iter().map(|b| b * w).collect())),
                }
            }
        }
        let top = terms.iter().map(|t| t.1.max(t.2)).max().unwrap_or(0) + 1;
        let (mut px, mut pxb) = (vec![ONE; top], vec![ONE; top]);
        for a1 in 0..plane.len_a() {
            let x = self.z(a1);
            if x.norm() > reach {
                continue;
            }
            for k in 1..top {
                px[k] = px[k - 1] * x;
                pxb[k] = pxb[k - 1] * x.conj();
            }
            let out = &mut raw[a1 * NF * d..(a1 + 1) * NF * d];
            for (o, e0, e1, c) in &terms {
                let m = px[*e0] * pxb[*e1];
                for (r, v) in out[*o..*o + d].iter_mut().zip(c) {
                    *r += v * m;
                }
            }
        }
        self.slabs.insert(a2, Slab { raw, g1: None, g2: None, ad: None });
    }

    fn dbar_of(h: f64, vals: [&[C64]; 4], out: &mut [C64]) {
        let c = 1.0 / (4.0 * h);
        for t in 0..out.len() {
            out[t] = ((vals[0][t] - vals[1][t]) + C64::i() * (vals[2][t] - vals[3][t])) * c;
        }
    }

    /// Gauged components on slab `a2`: the first at plane-1 interior nodes, and for
    /// interior `a2` the second together with `Ad_exp(−u)`. One series per node.
    fn ensure_gauged(&mut self, a2: usize) -> Result<(), IdentityError> {
        self.ensure_raw(a2);
        if self.slabs[&a2].g1.is_some() {
            return Ok(());
        }
        let plane = self.dom.plane();
        let k2 = plane.from_a(Set::I, a2);
        let nb2 = k2.map(|k| plane.neighbours(k));
        if let Some(nb) = nb2 {
            for a in nb {
                self.ensure_raw(a);
            }
        }
        let g = &self.inp.algebra;
        let d = g.dim();
        let h = self.dom.h();
        let reach = self.reach(self.z(a2)) - h;
        let plane = self.dom.plane();
        let centre = &self.slabs[&a2];
        let around = nb2.map(|nb| nb.map(|a| &self.slabs[&a]));
        let mut g1 = vec![ZERO; plane.len_a() * d];
        let (mut g2, mut ad) = match around {
            Some(_) => (vec![ZERO; plane.len_a() * d], vec![ZERO; plane.len_a() * d * d]),
            None => (Vec::new(), Vec::new()),
        };
        let mut du = vec![ZERO; d];
        let mut w = vec![ZERO; d];
        for a1 in 0..plane.len_a() {
            let k1 = plane.from_a(Set::I, a1);
            if k1.is_none() && around.is_none() {
                continue;
            }
            let [i, j] = plane.point(a1);
            if C64::new(i as f64, j as f64).norm() * h > reach {
                continue;
            }
            w.iter_mut().zip(centre.raw(a1, F_U, d)).for_each(|(w, u)| *w = -u);
            g.exp_and_dexp(&w, self.series, &mut self.scratch)?;
            if let Some(k1) = k1 {
                Self::dbar_of(h, plane.neighbours(k1).map(|a| centre.raw(a, F_U, d)), &mut du);
                let out = &mut g1[a1 * d..(a1 + 1) * d];
                matvec(&self.scratch.e, centre.raw(a1, F_ALPHA, d), out, d, false);
                matvec(&self.scratch.f, &du, out, d, true);
            }
            if let Some(around) = &around {
                Self::dbar_of(h, around.map(|s| s.raw(a1, F_U, d)), &mut du);
                let out = &mut g2[a1 * d..(a1 + 1) * d];
                matvec(&self.scratch.e, centre.raw(a1, F_ALPHA + 1, d), out, d, false);
                matvec(&self.scratch.f, &du, out, d, true);
                ad[a1 * d * d..(a1 + 1) * d * d].copy_from_slice(&self.scratch.e);
            }
        }
        let interior = around.is_some();
        let slab = self.slabs.get_mut(&a2).expect("present");
        slab.g1 = Some(g1);
        if interior {
            slab.g2 = Some(g2);
            slab.ad = Some(ad);
        }
        Ok(())
    }

    fn evict_below(&mut self, row: i32) {
        let plane = self.dom.plane();
        self.slabs.retain(|&a, _| plane.point(a)[1] >= row);
    }
}

/// Evaluates the identity defects at every (0,2) node of the lattice with spacing `h`
/// inside the closed ball of the given radius in ℂ².
pub fn stream_defects(inp: &IdentityInputs, radius: f64, h: f64, series: SeriesConfig) -> Result<IdentityDefects, IdentityError> {
    let start = Instant::now();
    let dom = GridDomain::new(2, radius, h, 0.5)?;
    let g = inp.algebra.clone();
    let d = g.dim();
    let mut rep = FlatRep::new(&g);
    let plane = dom.plane().clone();
    let mut st = Streamer { inp, dom, radius, series, slabs: HashMap::new(), scratch: SeriesScratch::new(d) };
    let c = 1.0 / (4.0 * h);
    let r2 = radius * radius * (1.0 + 1e-12);
    let one = C64::new(1.0, 0.0);
    let mut out = IdentityDefects::empty();
    if rep.is_some() {
        out.rep_curvature = Some(0.0);
    }
    let mut row = i32::MIN;
    let (mut alpha, mut b, mut gauged) = (Local::new(d), Local::new(d), Local::new(d));
    let (mut sum, mut cd) = (Local::new(d), Local::new(d));
    let [mut f_alpha, mut rhs, mut lhs, mut adj, mut tmp] = std::array::from_fn(|_| vec![ZERO; d]);
    let zc = |a: usize| {
        let [i, j] = plane.point(a);
        C64::new(i as f64, j as f64) * h
    };
    for k2 in 0..plane.len_i() {
        let a2 = plane.to_a(Set::I, k2);
        let y = zc(a2);
        let j = plane.point(a2)[1];
        if j != row {
            st.evict_below(j - 1);
            row = j;
        }
        if y.norm_sqr() > r2 {
            continue;
        }
        let n2 = plane.neighbours(k2);
        let stencil2 = [a2, n2[0], n2[1], n2[2], n2[3]];
        for &a in &stencil2 {
            st.ensure_gauged(a)?;
        }
        let sl = stencil2.map(|a| &st.slabs[&a]);
        let (g1s, g2c, adc) = (
            sl.map(|s| s.g1.as_deref().expect("built")),
            sl[0].g2.as_deref().expect("built"),
            sl[0].ad.as_deref().expect("built"),
        );
        for k1 in 0..plane.len_i() {
            let a1 = plane.to_a(Set::I, k1);
            if zc(a1).norm_sqr() + y.norm_sqr() > r2 {
                continue;
            }
            let n1 = plane.neighbours(k1);
            let stencil1 = [a1, n1[0], n1[1], n1[2], n1[3]];
            for s in 0..5 {
                let o = s * d..(s + 1) * d;
                let p1 = stencil1[s];
                alpha.c1[o.clone()].copy_from_slice(sl[s].raw(a1, F_ALPHA, d));
                alpha.c2[o.clone()].copy_from_slice(sl[0].raw(p1, F_ALPHA + 1, d));
                b.c1[o.clone()].copy_from_slice(sl[s].raw(a1, F_B, d));
                b.c2[o.clone()].copy_from_slice(sl[0].raw(p1, F_B + 1, d));
                gauged.c1[o.clone()].copy_from_slice(&g1s[s][a1 * d..(a1 + 1) * d]);
                gauged.c2[o].copy_from_slice(&g2c[p1 * d..(p1 + 1) * d]);
            }
            alpha.obstruction(&g, c, &mut f_alpha);
            out.obstruction_sup = out.obstruction_sup.max(vec_norm(&f_alpha));

            // f(α+b) against its expansion in b
            alpha.lin_into(one, &b, one, &mut sum);
            b.dbar(c, &mut rhs);
            rhs.iter_mut().zip(&f_alpha).for_each(|(r, v)| *r += v);
            alpha.wedge_acc(&g, &b, one, &mut rhs);
            b.wedge_acc(&g, &b, HALF, &mut rhs);
            sum.obstruction(&g, c, &mut tmp);
            out.fg_j_plus_b = out.fg_j_plus_b.max(diff(&tmp, &rhs));

            // gauge covariance
            matvec(&adc[a1 * d * d..(a1 + 1) * d * d], &f_alpha, &mut adj, d, false);
            gauged.obstruction(&g, c, &mut tmp);
            out.j_dot_sigma = out.j_dot_sigma.max(diff(&tmp, &adj));

            // the gauge difference c = G − α
            gauged.lin_into(one, &alpha, -one, &mut cd);
            cd.dbar(c, &mut lhs);
            alpha.wedge_acc(&g, &cd, one, &mut lhs);
            cd.wedge_acc(&g, &cd, HALF, &mut lhs);
            tmp.iter_mut().zip(adj.iter().zip(&f_alpha)).for_each(|(t, (a, f))| *t = a - f);
            out.kj_lj = out.kj_lj.max(diff(&lhs, &tmp));

            if let Some(rep) = rep.as_mut() {
                let dev = rep.deviation(&alpha, &f_alpha, c, &mut tmp);
                out.rep_curvature = out.rep_curvature.map(|v| v.max(dev));
            }
            out.nodes += 1;
        }
    }
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// The same defects through whole-form operations, over (0,2) nodes accepted by `keep`.
pub fn form_defects<K>(alpha: &GForm, b: &GForm, u: &GForm, series: SeriesConfig, keep: K) -> Result<IdentityDefects, IdentityError>
where
    K: Fn(usize) -> bool,
{
    let start = Instant::now();
    let n = alpha.domain().n();
    if n != 2 {
        return Err(IdentityError::Dimension(n));
    }
    let one = C64::new(1.0, 0.0);
    let sup = |f: &GForm| -> f64 {
        (0..f.domain().size([Set::I, Set::I])).filter(|&i| keep(i)).map(|i| vec_norm(f.value(0, i))).fold(0.0, f64::max)
    };
    let fa = obstruction(alpha)?;
    let fg = obstruction(&alpha.add(b)?)?
        .sub(&fa)?
        .sub(&dbar(b)?)?
        .sub(&wedge_bracket(alpha, b)?)?
        .axpy(-HALF, &wedge_bracket(b, b)?)?;
    let gauged = gauge_transform(alpha, u, series)?;
    let adj = ad_exp_apply(u, &fa, -1.0, series)?;
    let js = obstruction(&gauged)?.sub(&adj)?;
    let cd = gauged.sub(alpha)?;
    let kj = dbar(&cd)?
        .axpy(one, &wedge_bracket(alpha, &cd)?)?
        .axpy(HALF, &wedge_bracket(&cd, &cd)?)?
        .sub(&adj.sub(&fa)?)?;
    let rep = if alpha.algebra().matrix_rep().is_some() {
        let rc = rep_curvature(alpha)?;
        let worst = rc
            .curvature
            .iter()
            .zip(&rc.represented_obstruction)
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, (a, b))| (a - b).norm())
            .fold(0.0, f64::max);
        Some(worst)
    } else {
        None
    };
    let nodes = (0..alpha.domain().size([Set::I, Set::I])).filter(|&i| keep(i)).count();
    Ok(IdentityDefects {
        fg_j_plus_b: sup(&fg),
        j_dot_sigma: sup(&js),
        kj_lj: sup(&kj),
        rep_curvature: rep,
        obstruction_sup: sup(&fa),
        nodes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Samples the polynomial data on a grid and runs [`form_defects`] over the ball of radius `dom.r()`.
pub fn sampled_defects(inp: &IdentityInputs, dom: &GridDomain, series: SeriesConfig) -> Result<IdentityDefects, IdentityError> {
    if dom.n() != 2 {
        return Err(IdentityError::Dimension(dom.n()));
    }
    let g = &inp.algebra;
    let one_form = |p: &[LiePoly; 2]| GForm::from_fn(dom, g, 1, |c, z, o| p[c].eval(z, o));
    let alpha = one_form(&inp.alpha)?;
    let b = one_form(&inp.b)?;
    let u = GForm::from_fn(dom, g, 0, |_, z, o| inp.u.eval(z, o))?;
    let r2 = dom.r() * dom.r() * (1.0 + 1e-12);
    let keep = |i: usize| {
        let x = dom.coords([Set::I, Set::I], i);
        x.iter().map(|v| v * v).sum::<f64>() <= r2
    };
    form_defects(&alpha, &b, &u, series, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(g: LieAlgebra, seed: u64) -> IdentityInputs {
        IdentityInputs::random(Arc::new(g), &mut ChaCha8Rng::seed_from_u64(seed), 6, 0.15)
    }

    #[test]
    fn streamed_matches_whole_form_evaluation() {
        let series = SeriesConfig::default();
        for (g, seed) in [(LieAlgebra::heisenberg3(), 1), (LieAlgebra::sl2c(), 2), (LieAlgebra::abelian(2), 3)] {
            let inp = inputs(g, seed);
            let dom = GridDomain::new(2, 1.0, 1.0 / 6.0, 0.5).unwrap();
            let a = stream_defects(&inp, 1.0, 1.0 / 6.0, series).unwrap();
            let b = sampled_defects(&inp, &dom, series).unwrap();
            assert_eq!(a.nodes, b.nodes);
            assert!(a.nodes > 100);
            for ((na, va), (_, vb)) in a.rows().iter().zip(b.rows()) {
                assert!((va - vb).abs() < 1e-12 + 1e-9 * vb, "{na}: {va} vs {vb}");
            }
            assert!((a.obstruction_sup - b.obstruction_sup).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gauge_and_zero_perturbation_are_exact() {
        let mut inp = inputs(LieAlgebra::sl2c(), 9);
        inp.u = LiePoly::zero(3);
        inp.b = [LiePoly::zero(3), LiePoly::zero(3)];
        let r = stream_defects(&inp, 1.0, 0.125, SeriesConfig::default()).unwrap();
        assert!(r.j_dot_sigma < 1e-13 && r.kj_lj < 1e-13 && r.fg_j_plus_b < 1e-13, "{r:?}");
        assert!(r.obstruction_sup > 0.01);
    }

    #[test]
    fn defects_shrink_with_spacing() {
        let inp = inputs(LieAlgebra::sl2c(), 4);
        let s = SeriesConfig::default();
        let coarse = stream_defects(&inp, 1.0, 1.0 / 8.0, s).unwrap().j_dot_sigma;
        let fine = stream_defects(&inp, 1.0, 1.0 / 16.0, s).unwrap().j_dot_sigma;
        assert!(fine < coarse / 3.0, "{coarse} {fine}");
    }
}
