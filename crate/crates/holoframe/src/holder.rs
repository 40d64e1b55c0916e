//! Discrete Hölder norms `‖f‖_{C^κ}` of lattice forms and the contraction `z ↦ εz`.
//!
//! The norm of a form is the largest norm among its coefficient functions. For one
//! coefficient function, derivatives up to order `k = ⌊κ⌋` are centred differences,
//! and the value is `max(sup_0, …, sup_k, seminorm)`, where the seminorm is the
//! `ν`-Hölder quotient of the order-`k` derivatives, maximised over point pairs.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{interp, GForm, GridError};
use crate::lie::vec_norm;

#[derive(Debug, Error)]
pub enum HolderError {
    #[error("kappa must be positive and not an integer, got {0}")]
    InvalidKappa(f64),
    #[error("derivative order {0} is not supported (at most 2)")]
    UnsupportedOrder(usize),
    #[error("grid spacing too coarse for derivatives of order {0}")]
    TooCoarse(usize),
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `κ = k + ν` with integer `k` and `0 < ν < 1`. Serialised as the bare number `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HolderSpec {
    pub kappa: f64,
    pub k: usize,
    pub nu: f64,
}

impl HolderSpec {
    pub fn new(kappa: f64) -> Result<Self, HolderError> {
        if !(kappa > 0.0) || !kappa.is_finite() || kappa.fract() == 0.0 {
            return Err(HolderError::InvalidKappa(kappa));
        }
        let k = kappa.floor() as usize;
        if k > 2 {
            return Err(HolderError::UnsupportedOrder(k));
        }
        Ok(HolderSpec { kappa, k, nu: kappa - k as f64 })
    }
}

impl TryFrom<f64> for HolderSpec {
    type Error = HolderError;

    fn try_from(kappa: f64) -> Result<Self, HolderError> {
        HolderSpec::new(kappa)
    }
}

impl From<HolderSpec> for f64 {
    fn from(s: HolderSpec) -> f64 {
        s.kappa
    }
}

/// How pairs for the seminorm are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    /// All pairs up to `exhaustive_limit` points per field, otherwise `samples` random pairs.
    Auto { exhaustive_limit: usize, samples: usize },
    Exhaustive,
    Sampled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HolderOptions {
    pub pairs: PairPolicy,
    pub seed: u64,
}

impl Default for HolderOptions {
    fn default() -> Self {
        HolderOptions { pairs: PairPolicy::Auto { exhaustive_limit: 4096, samples: 1_000_000 }, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub kappa: f64,
    pub k: usize,
    pub nu: f64,
    pub value: f64,
    pub sup_terms: Vec<f64>,
    pub seminorm: f64,
    pub pair_count: u64,
    pub seed: u64,
}

/// Scattered lattice samples of a vector-valued function.
struct Field {
    pts: Vec<[i32; 4]>,
    vals: Vec<C64>,
}

impl Field {
    fn len(&self) -> usize {
        self.pts.len()
    }

    fn index(&self) -> HashMap<[i32; 4], usize> {
        self.pts.iter().enumerate().map(|(i, p)| (*p, i)).collect()
    }

    /// Centred difference along lattice axis `axis`.
    fn derivative(&self, axis: usize, d: usize, h: f64) -> Field {
        let map = self.index();
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        let s = 1.0 / (2.0 * h);
        for p in &self.pts {
            let mut fwd = *p;
            fwd[axis] += 1;
            let mut bwd = *p;
            bwd[axis] -= 1;
            if let (Some(&a), Some(&b)) = (map.get(&fwd), map.get(&bwd)) {
                pts.push(*p);
                for t in 0..d {
                    vals.push((self.vals[a * d + t] - self.vals[b * d + t]) * s);
                }
            }
        }
        Field { pts, vals }
    }

    fn filter<M: Fn([i32; 4]) -> bool>(self, d: usize, keep: &M) -> Field {
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        for (i, p) in self.pts.iter().enumerate() {
            if keep(*p) {
                pts.push(*p);
                vals.extend_from_slice(&self.vals[i * d..(i + 1) * d]);
            }
        }
        Field { pts, vals }
    }

    fn sup(&self, d: usize) -> f64 {
        self.vals.chunks(d).map(vec_norm).fold(0.0, f64::max)
    }
}

/// Squared-quotient evaluator `|f(p) − f(q)|² / (h|p − q|)^{2ν}`.
struct Quotient<'a> {
    f: &'a Field,
    d: usize,
    h2: f64,
    nu: f64,
    table: Vec<f64>,
}

impl<'a> Quotient<'a> {
    fn new(f: &'a Field, d: usize, h: f64, nu: f64, dims: usize) -> Self {
        let mut lo = [i32::MAX; 4];
        let mut hi = [i32::MIN; 4];
        for p in &f.pts {
            for k in 0..dims {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let max_d2: i64 = (0..dims).map(|k| ((hi[k] - lo[k]) as i64).pow(2)).sum();
        let h2 = h * h;
        let table = if max_d2 <= 1 << 22 {
            (0..=max_d2).map(|m| (h2 * m as f64).powf(nu)).collect()
        } else {
            Vec::new()
        };
        Quotient { f, d, h2, nu, table }
    }

    fn eval(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.f.pts[a], self.f.pts[b]);
        let mut m = 0i64;
        for k in 0..4 {
            m += ((pa[k] - pb[k]) as i64).pow(2);
        }
        if m == 0 {
            return 0.0;
        }
        let d = self.d;
        let mut diff = 0.0;
        for t in 0..d {
            diff += (self.f.vals[a * d + t] - self.f.vals[b * d + t]).norm_sqr();
        }
        let den = match self.table.get(m as usize) {
            Some(v) => *v,
            None => (self.h2 * m as f64).powf(self.nu),
        };
        diff / den
    }
}

fn exhaustive(q: &Quotient) -> (f64, u64) {
    let n = q.f.len();
    let mut best = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            best = best.max(q.eval(a, b));
        }
    }
    (best, (n as u64) * (n as u64).saturating_sub(1) / 2)
}

fn sampled(q: &Quotient, dims: usize, samples: usize, seed: u64) -> (f64, u64) {
    let f = q.f;
    let n = f.len();
    if n < 2 {
        return (0.0, 0);
    }
    let map = f.index();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = [i32::MAX; 4];
    let mut hi = [i32::MIN; 4];
    for p in &f.pts {
        for k in 0..dims {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diam: f64 = (0..dims).map(|k| ((hi[k] - lo[k]) as f64).powi(2)).sum::<f64>().sqrt().max(1.0);
    const KEEP: usize = 8;
    let mut top: Vec<(f64, usize, usize)> = Vec::with_capacity(KEEP + 1);
    let mut count = 0u64;
    let push = |top: &mut Vec<(f64, usize, usize)>, v: f64, a: usize, b: usize| {
        if top.len() < KEEP || v > top[top.len() - 1].0 {
            top.push((v, a, b));
            top.sort_by(|x, y| y.0.total_cmp(&x.0));
            top.truncate(KEEP);
        }
    };
    for s in 0..samples {
        let a = rng.gen_range(0..n);
        let b = if s % 2 == 0 {
            rng.gen_range(0..n)
        } else {
            // distance log-uniform over decades, random direction
            let rho = diam.powf(rng.gen::<f64>());
            let mut dir = [0.0f64; 4];
            let mut norm = 0.0;
            for x in dir.iter_mut().take(dims) {
                *x = rng.gen::<f64>() * 2.0 - 1.0;
                norm += *x * *x;
            }
            let norm = norm.sqrt().max(1e-12);
            let mut p = f.pts[a];
            for k in 0..dims {
                p[k] += (rho * dir[k] / norm).round() as i32;
            }
            match map.get(&p) {
                Some(&b) => b,
                None => continue,
            }
        };
        if a == b {
            continue;
        }
        count += 1;
        let v = q.eval(a, b);
        push(&mut top, v, a, b);
    }
    // pairs among the axis-extreme points catch diameters
    let mut extremes = Vec::new();
    for k in 0..dims {
        extremes.push((0..n).min_by_key(|&i| f.pts[i][k]).unwrap());
        extremes.push((0..n).max_by_key(|&i| f.pts[i][k]).unwrap());
    }
    for (i, &a) in extremes.iter().enumerate() {
        for &b in &extremes[i + 1..] {
            if a != b {
                count += 1;
                let v = q.eval(a, b);
                push(&mut top, v, a, b);
            }
        }
    }
    // hill-climb each leading pair over lattice points within two steps of either endpoint
    let offsets: Vec<[i32; 4]> = {
        let mut out = Vec::new();
        let span = 5i32.pow(dims as u32);
        for code in 0..span {
            let mut o = [0i32; 4];
            let mut c = code;
            for x in o.iter_mut().take(dims) {
                *x = c % 5 - 2;
                c /= 5;
            }
            if o != [0; 4] {
                out.push(o);
            }
        }
        out
    };
    let mut best = top.first().map_or(0.0, |t| t.0);
    for &(mut v, mut a, mut b) in &top.clone() {
        loop {
            let mut improved = None;
            for (end, other) in [(a, b), (b, a)] {
                for o in &offsets {
                    let mut p = f.pts[end];
                    for k in 0..dims {
                        p[k] += o[k];
                    }
                    if let Some(&c) = map.get(&p) {
                        if c == other {
                            continue;
                        }
                        count += 1;
                        let w = q.eval(c, other);
                        if w > v && improved.is_none_or(|(x, _, _)| w > x) {
                            improved = Some((w, c, other));
                        }
                    }
                }
            }
            match improved {
                Some((w, c, o)) => {
                    v = w;
                    a = c;
                    b = o;
                }
                None => break,
            }
        }
        best = best.max(v);
    }
    (best, count)
}

/// Derivative fields of orders `0..=k` of one component.
fn derivative_fields(base: Field, d: usize, h: f64, dims: usize, k: usize) -> Result<Vec<Vec<Field>>, HolderError> {
    let mut orders: Vec<Vec<Field>> = vec![vec![base]];
    // order 1: one field per axis; order 2: axes a <= b
    if k >= 1 {
        let first: Vec<Field> = (0..dims).map(|a| orders[0][0].derivative(a, d, h)).collect();
        if first.iter().any(|f| f.len() == 0) {
            return Err(HolderError::TooCoarse(1));
        }
        orders.push(first);
    }
    if k >= 2 {
        let mut second = Vec::new();
        for a in 0..dims {
            for b in a..dims {
                second.push(orders[1][a].derivative(b, d, h));
            }
        }
        if second.iter().any(|f| f.len() == 0) {
            return Err(HolderError::TooCoarse(2));
        }
        orders.push(second);
    }
    Ok(orders)
}

/// Hölder norm of `f`, with derivatives taken on the full grid and all terms evaluated
/// at nodes whose real coordinates satisfy `keep`.
pub fn holder_norm_where<M>(f: &GForm, spec: &HolderSpec, opts: &HolderOptions, keep: M) -> Result<HolderReport, HolderError>
where
    M: Fn([f64; 4]) -> bool,
{
    let dom = f.domain();
    let d = f.dim();
    let h = dom.h();
    let dims = 2 * dom.n();
    let mut sup_terms = vec![0.0f64; spec.k + 1];
    let mut seminorm = 0.0f64;
    let mut pair_count = 0u64;
    let keep_lattice = |p: [i32; 4]| keep([p[0] as f64 * h, p[1] as f64 * h, p[2] as f64 * h, p[3] as f64 * h]);
    let mut field_no = 0u64;
    for c in 0..f.num_components() {
        let l = f.layout(c);
        let pts: Vec<[i32; 4]> = (0..dom.size(l)).map(|i| dom.lattice(l, i)).collect();
        let base = Field { pts, vals: f.component(c).to_vec() };
        let orders = derivative_fields(base, d, h, dims, spec.k)?;
        for (j, fields) in orders.into_iter().enumerate() {
            for field in fields {
                let field = field.filter(d, &keep_lattice);
                if field.len() == 0 {
                    continue;
                }
                sup_terms[j] = sup_terms[j].max(field.sup(d));
                if j == spec.k {
                    let q = Quotient::new(&field, d, h, spec.nu, dims);
                    let exhaust = match opts.pairs {
                        PairPolicy::Exhaustive => true,
                        PairPolicy::Sampled(_) => false,
                        PairPolicy::Auto { exhaustive_limit, .. } => field.len() <= exhaustive_limit,
                    };
                    let (best, count) = if exhaust {
                        exhaustive(&q)
                    } else {
                        let samples = match opts.pairs {
                            PairPolicy::Sampled(s) | PairPolicy::Auto { samples: s, .. } => s,
                            PairPolicy::Exhaustive => unreachable!(),
                        };
                        let seed = opts.seed.wrapping_add(field_no.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                        sampled(&q, dims, samples, seed)
                    };
                    seminorm = seminorm.max(best.sqrt());
                    pair_count += count;
                    field_no += 1;
                }
            }
        }
    }
    let value = sup_terms.iter().copied().fold(seminorm, f64::max);
    Ok(HolderReport { kappa: spec.kappa, k: spec.k, nu: spec.nu, value, sup_terms, seminorm, pair_count, seed: opts.seed })
}

pub fn holder_norm(f: &GForm, spec: &HolderSpec, opts: &HolderOptions) -> Result<HolderReport, HolderError> {
    holder_norm_where(f, spec, opts, |_| true)
}

/// Whether `x` lies in the closed polydisc of the given radius (per-plane discs).
pub fn in_polydisc(x: [f64; 4], n: usize, radius: f64) -> bool {
    let slack = 1e-12 * radius.max(1.0);
    (0..n).all(|p| x[2 * p].hypot(x[2 * p + 1]) <= radius + slack)
}

/// Pullback by `z ↦ εz` on the same grid: the node value at `z` is `ε^q α(εz)`.
pub fn rescale(alpha: &GForm, eps: f64) -> Result<GForm, HolderError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(HolderError::InvalidEpsilon(eps));
    }
    if eps == 1.0 {
        return Ok(alpha.clone());
    }
    let dom = alpha.domain();
    let d = alpha.dim();
    let q = alpha.degree();
    let factor = eps.powi(q as i32);
    let mut comps = Vec::with_capacity(alpha.num_components());
    let mut buf = vec![C64::new(0.0, 0.0); d];
    for c in 0..alpha.num_components() {
        let l = alpha.layout(c);
        let src = alpha.component(c);
        let mut out = Vec::with_capacity(src.len());
        for idx in 0..dom.size(l) {
            let x = dom.coords(l, idx).map(|v| v * eps);
            interp::interpolate(dom, l, src, d, x, &mut buf)?;
            out.extend(buf.iter().map(|v| v * factor));
        }
        comps.push(out);
    }
    Ok(GForm::from_components(dom, alpha.algebra(), q, comps)?)
}

/// `ε‖α|_{B̄_{εr}}‖_{C^κ} − ‖rescale(α, ε)‖_{C^κ}`.
pub fn scaling_margin(alpha: &GForm, eps: f64, spec: &HolderSpec, opts: &HolderOptions) -> Result<f64, HolderError> {
    let rescaled = rescale(alpha, eps)?;
    let dom = alpha.domain();
    let (n, r) = (dom.n(), dom.r());
    let restricted = holder_norm_where(alpha, spec, opts, |x| in_polydisc(x, n, eps * r))?;
    let scaled = holder_norm(&rescaled, spec, opts)?;
    Ok(eps * restricted.value - scaled.value)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::GridDomain;
    use crate::lie::LieAlgebra;

    fn abelian() -> Arc<LieAlgebra> {
        Arc::new(LieAlgebra::abelian(1))
    }

    #[test]
    fn spec_validation() {
        assert!(HolderSpec::new(1.0).is_err());
        assert!(HolderSpec::new(-0.5).is_err());
        assert!(matches!(HolderSpec::new(3.5), Err(HolderError::UnsupportedOrder(3))));
        let s = HolderSpec::new(1.25).unwrap();
        assert_eq!((s.k, s.nu), (1, 0.25));
    }

    #[test]
    fn constant_has_magnitude_norm() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 8.0, 0.5).unwrap();
        let g = Arc::new(LieAlgebra::heisenberg3());
        let f = GForm::from_fn(&dom, &g, 0, |_, _, o| {
            o[0] = C64::new(3.0, 0.0);
            o[2] = C64::new(0.0, 4.0);
        })
        .unwrap();
        for kappa in [0.5, 1.5, 2.5] {
            let rep = holder_norm(&f, &HolderSpec::new(kappa).unwrap(), &HolderOptions::default()).unwrap();
            assert_eq!(rep.value, 5.0);
            assert_eq!(rep.seminorm, 0.0);
        }
    }

    #[test]
    fn zbar_form_matches_its_coefficient() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 16.0, 0.5).unwrap();
        let g = abelian();
        let coef = GForm::from_fn(&dom, &g, 0, |_, z, o| o[0] = z[0].conj()).unwrap();
        let form = GForm::from_fn(&dom, &g, 1, |_, z, o| o[0] = z[0].conj()).unwrap();
        let spec = HolderSpec::new(0.5).unwrap();
        let opts = HolderOptions { pairs: PairPolicy::Exhaustive, seed: 0 };
        let a = holder_norm(&coef, &spec, &opts).unwrap();
        let b = holder_norm(&form, &spec, &opts).unwrap();
        // the 1-form lives on interior nodes, so compare each with the analytic value
        assert!((a.value - 2f64.sqrt()).abs() < 0.02 * 2f64.sqrt());
        assert!((b.value - 2f64.sqrt()).abs() < 0.1);
    }

    #[test]
    fn sampled_seminorm_finds_diameter() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 32.0, 0.5).unwrap();
        let f = GForm::from_fn(&dom, &abelian(), 0, |_, z, o| o[0] = z[0].conj()).unwrap();
        let spec = HolderSpec::new(0.5).unwrap();
        let opts = HolderOptions { pairs: PairPolicy::Sampled(20_000), seed: 7 };
        let rep = holder_norm(&f, &spec, &opts).unwrap();
        assert!((rep.seminorm - 2f64.sqrt()).abs() < 1e-3, "{}", rep.seminorm);
        let again = holder_norm(&f, &spec, &opts).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn second_derivatives_of_quadratic() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 16.0, 0.5).unwrap();
        // f = x^2 has f_xx = 2, all other second derivatives 0
        let f = GForm::from_fn(&dom, &abelian(), 0, |_, z, o| o[0] = C64::new(z[0].re * z[0].re, 0.0)).unwrap();
        let rep = holder_norm(&f, &HolderSpec::new(2.5).unwrap(), &HolderOptions::default()).unwrap();
        assert!((rep.sup_terms[2] - 2.0).abs() < 1e-9);
        assert!(rep.seminorm < 1e-9);
        // first derivatives exist one step inside the rim
        assert!((rep.sup_terms[1] - 2.0 * (1.0 - dom.h())).abs() < 1e-9);
    }

    #[test]
    fn too_coarse_grid_is_reported() {
        let dom = GridDomain::new(1, 1.0, 0.5, 0.5).unwrap();
        let f = GForm::zeros(&dom, &abelian(), 1).unwrap();
        assert!(matches!(
            holder_norm(&f, &HolderSpec::new(2.5).unwrap(), &HolderOptions::default()),
            Err(HolderError::TooCoarse(_))
        ));
    }

    #[test]
    fn rescale_examples() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 16.0, 0.5).unwrap();
        let a = GForm::from_fn(&dom, &abelian(), 1, |_, z, o| o[0] = z[0].conj()).unwrap();
        assert_eq!(rescale(&a, 1.0).unwrap().flat(), a.flat());
        let r = rescale(&a, 0.5).unwrap();
        let expect = a.scale(C64::new(0.25, 0.0));
        assert!(r.sub(&expect).unwrap().sup_norm() < 1e-13);
        assert!(rescale(&a, 0.0).is_err() && rescale(&a, 1.5).is_err());
    }

    #[test]
    fn margin_examples() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 32.0, 0.5).unwrap();
        let spec = HolderSpec::new(0.5).unwrap();
        let opts = HolderOptions::default();
        let c = GForm::from_fn(&dom, &abelian(), 1, |_, _, o| o[0] = C64::new(0.3, 0.4)).unwrap();
        assert!(scaling_margin(&c, 0.5, &spec, &opts).unwrap().abs() < 1e-12);
        let a = GForm::from_fn(&dom, &abelian(), 1, |_, z, o| o[0] = z[0].conj()).unwrap();
        assert!(scaling_margin(&a, 0.5, &spec, &opts).unwrap() > 0.0);
        assert!(scaling_margin(&a, 1.0, &spec, &opts).unwrap().abs() < 1e-12);
    }
}
