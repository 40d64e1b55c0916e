//! Polynomials in `z1, z̄1, z2, z̄2` with scalar or Lie-algebra coefficients.
//!
//! Only what fixtures and the expression parser need: ring operations,
//! brackets, `∂/∂z̄_i` and evaluation.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::lie::LieAlgebra;

/// Exponents of `z1, z̄1, z2, z̄2`.
pub type Exps = [u8; 4];

const ZERO: C64 = C64::new(0.0, 0.0);

/// Index of `z̄_i` (1-based `i`) in [`Exps`].
pub fn zbar_slot(i: usize) -> usize {
    2 * (i - 1) + 1
}

/// Index of `z_i` (1-based `i`) in [`Exps`].
pub fn z_slot(i: usize) -> usize {
    2 * (i - 1)
}

fn add_exps(a: Exps, b: Exps) -> Exps {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

const TABLE: usize = 8;

/// Powers of `z₁, z̄₁, z₂, z̄₂`, tabulated up to a small degree.
struct Powers {
    vars: [C64; 4],
    p: [[C64; TABLE]; 4],
}

impl Powers {
    fn new(z: [C64; 2]) -> Powers {
        let vars = [z[0], z[0].conj(), z[1], z[1].conj()];
        let p = std::array::from_fn(|k| {
            let mut v = [C64::new(1.0, 0.0); TABLE];
            for e in 1..TABLE {
                v[e] = v[e - 1] * vars[k];
            }
            v
        });
        Powers { vars, p }
    }

    fn pow(&self, k: usize, e: u8) -> C64 {
        match self.p[k].get(e as usize) {
            Some(v) => *v,
            None => self.vars[k].powu(e as u32),
        }
    }

    fn mono(&self, e: Exps) -> C64 {
        self.pow(0, e[0]) * self.pow(1, e[1]) * self.pow(2, e[2]) * self.pow(3, e[3])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarPoly {
    terms: BTreeMap<Exps, C64>,
}

impl ScalarPoly {
    pub fn constant(c: C64) -> Self {
        let mut terms = BTreeMap::new();
        if c != ZERO {
            terms.insert([0; 4], c);
        }
        ScalarPoly { terms }
    }

    pub fn monomial(e: Exps, c: C64) -> Self {
        let mut terms = BTreeMap::new();
        if c != ZERO {
            terms.insert(e, c);
        }
        ScalarPoly { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exps, &C64)> {
        self.terms.iter()
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &o.terms {
            *out.terms.entry(*e).or_insert(ZERO) += c;
        }
        out.terms.retain(|_, c| *c != ZERO);
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = ScalarPoly { terms: self.terms.iter().map(|(e, c)| (*e, c * s)).collect() };
        out.terms.retain(|_, c| *c != ZERO);
        out
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = ScalarPoly::default();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                *out.terms.entry(add_exps(*ea, *eb)).or_insert(ZERO) += ca * cb;
            }
        }
        out.terms.retain(|_, c| *c != ZERO);
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = ScalarPoly::constant(C64::new(1.0, 0.0));
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn eval(&self, z: [C64; 2]) -> C64 {
        let pw = Powers::new(z);
        self.terms.iter().map(|(e, c)| c * pw.mono(*e)).sum()
    }

    /// The constant value, when the polynomial has no variable terms.
    pub fn as_constant(&self) -> Option<C64> {
        match self.terms.len() {
            0 => Some(ZERO),
            1 => self.terms.get(&[0; 4]).copied(),
            _ => None,
        }
    }
}

/// A polynomial with coefficients in a fixed-dimensional Lie algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct LiePoly {
    dim: usize,
    terms: Vec<(Exps, Vec<C64>)>,
}

impl LiePoly {
    pub fn zero(dim: usize) -> Self {
        LiePoly { dim, terms: Vec::new() }
    }

    fn from_map(dim: usize, map: BTreeMap<Exps, Vec<C64>>) -> Self {
        let terms: Vec<_> = map.into_iter().filter(|(_, v)| v.iter().any(|c| *c != ZERO)).collect();
        LiePoly { dim, terms }
    }

    fn to_map(&self) -> BTreeMap<Exps, Vec<C64>> {
        self.terms.iter().cloned().collect()
    }

    /// `c * z^e` with a constant algebra element `c`.
    pub fn monomial(e: Exps, c: Vec<C64>) -> Self {
        let dim = c.len();
        let mut m = BTreeMap::new();
        m.insert(e, c);
        Self::from_map(dim, m)
    }

    pub fn constant(c: Vec<C64>) -> Self {
        Self::monomial([0; 4], c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[(Exps, Vec<C64>)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().map(|&x| x as u32).sum()).max().unwrap_or(0)
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut m = self.to_map();
        for (e, v) in &o.terms {
            let slot = m.entry(*e).or_insert_with(|| vec![ZERO; self.dim]);
            for (a, b) in slot.iter_mut().zip(v) {
                *a += b;
            }
        }
        Self::from_map(self.dim, m)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = self.terms.iter().map(|(e, v)| (*e, v.iter().map(|c| c * s).collect())).collect();
        Self::from_map(self.dim, m)
    }

    pub fn mul_scalar(&self, p: &ScalarPoly) -> Self {
        let mut m: BTreeMap<Exps, Vec<C64>> = BTreeMap::new();
        for (ea, v) in &self.terms {
            for (eb, c) in p.terms() {
                let slot = m.entry(add_exps(*ea, *eb)).or_insert_with(|| vec![ZERO; self.dim]);
                for (a, b) in slot.iter_mut().zip(v) {
                    *a += b * c;
                }
            }
        }
        Self::from_map(self.dim, m)
    }

    /// Pointwise bracket `[self, o]`.
    pub fn bracket(&self, g: &LieAlgebra, o: &Self) -> Self {
        let mut m: BTreeMap<Exps, Vec<C64>> = BTreeMap::new();
        for (ea, va) in &self.terms {
            for (eb, vb) in &o.terms {
                let slot = m.entry(add_exps(*ea, *eb)).or_insert_with(|| vec![ZERO; self.dim]);
                g.bracket_acc(va, vb, C64::new(1.0, 0.0), slot);
            }
        }
        Self::from_map(self.dim, m)
    }

    /// `∂/∂z̄_i` (1-based `i`).
    pub fn dbar(&self, i: usize) -> Self {
        let slot = zbar_slot(i);
        let mut m: BTreeMap<Exps, Vec<C64>> = BTreeMap::new();
        for (e, v) in &self.terms {
            if e[slot] == 0 {
                continue;
            }
            let mut e2 = *e;
            e2[slot] -= 1;
            let k = e[slot] as f64;
            let entry = m.entry(e2).or_insert_with(|| vec![ZERO; self.dim]);
            for (a, b) in entry.iter_mut().zip(v) {
                *a += b * k;
            }
        }
        Self::from_map(self.dim, m)
    }

    pub fn eval(&self, z: [C64; 2], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        let pw = Powers::new(z);
        for (e, v) in &self.terms {
            let m = pw.mono(*e);
            for (o, c) in out.iter_mut().zip(v) {
                *o += c * m;
            }
        }
    }

    /// Random sparse polynomial of total degree at most `max_degree` in the first `n` planes.
    pub fn random<R: Rng>(rng: &mut R, dim: usize, n: usize, max_degree: u32, terms: usize, scale: f64) -> Self {
        let mut p = LiePoly::zero(dim);
        for _ in 0..terms {
            let deg = rng.gen_range(0..=max_degree);
            let mut e = [0u8; 4];
            for _ in 0..deg {
                e[rng.gen_range(0..2 * n)] += 1;
            }
            let v = (0..dim)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
                .collect();
            p = p.add(&LiePoly::monomial(e, v));
        }
        p
    }
}

/// `l̄(exp u)` for a step-2 nilpotent algebra: `∂̄_i u − ½[u, ∂̄_i u]` for `i = 1..=n`.
pub fn step2_pullback(g: &LieAlgebra, u: &LiePoly, n: usize) -> Vec<LiePoly> {
    (1..=n)
        .map(|i| {
            let du = u.dbar(i);
            du.sub(&u.bracket(g, &du).scale(C64::new(0.5, 0.0)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn heisenberg_step2_pullback() {
        let g = LieAlgebra::heisenberg3();
        // u = z̄X + z̄²Y
        let u = LiePoly::monomial([0, 1, 0, 0], vec![c(1.0), c(0.0), c(0.0)])
            .add(&LiePoly::monomial([0, 2, 0, 0], vec![c(0.0), c(1.0), c(0.0)]));
        let lam = &step2_pullback(&g, &u, 1)[0];
        let expected = LiePoly::constant(vec![c(1.0), c(0.0), c(0.0)])
            .add(&LiePoly::monomial([0, 1, 0, 0], vec![c(0.0), c(2.0), c(0.0)]))
            .add(&LiePoly::monomial([0, 2, 0, 0], vec![c(0.0), c(0.0), c(-0.5)]));
        assert_eq!(lam, &expected);
    }

    #[test]
    fn two_plane_fixture_is_flat() {
        let g = LieAlgebra::heisenberg3();
        let u = LiePoly::monomial([0, 1, 0, 0], vec![c(1.0), c(0.0), c(0.0)])
            .add(&LiePoly::monomial([0, 0, 0, 1], vec![c(0.0), c(1.0), c(0.0)]));
        let lam = step2_pullback(&g, &u, 2);
        assert_eq!(lam[0], LiePoly::constant(vec![c(1.0), c(0.0), c(0.0)]).add(&LiePoly::monomial([0, 0, 0, 1], vec![c(0.0), c(0.0), c(0.5)])));
        assert_eq!(lam[1], LiePoly::constant(vec![c(0.0), c(1.0), c(0.0)]).add(&LiePoly::monomial([0, 1, 0, 0], vec![c(0.0), c(0.0), c(-0.5)])));
        // ∂̄_1 λ_2 − ∂̄_2 λ_1 + [λ_1, λ_2] = 0
        let f = lam[1].dbar(1).sub(&lam[0].dbar(2)).add(&lam[0].bracket(&g, &lam[1]));
        assert!(f.is_zero());
    }

    #[test]
    fn evaluation_and_scalar_products() {
        let p = ScalarPoly::monomial([1, 0, 0, 0], c(1.0)).add(&ScalarPoly::constant(c(2.0))).pow(2);
        let z = [C64::new(0.3, -0.4), C64::new(0.0, 0.0)];
        assert!((p.eval(z) - (z[0] + 2.0) * (z[0] + 2.0)).norm() < 1e-14);
        let l = LiePoly::constant(vec![c(1.0), c(2.0)]).mul_scalar(&p);
        let mut out = [ZERO; 2];
        l.eval(z, &mut out);
        assert!((out[1] - p.eval(z) * 2.0).norm() < 1e-14);
        assert_eq!(l.degree(), 2);
        assert_eq!(ScalarPoly::constant(c(3.0)).as_constant(), Some(c(3.0)));
    }
}
