//! Lattice domains over discs/polydiscs in C^n and Lie-algebra-valued (0,q)-forms on them.
//!
//! Each complex plane carries the lattice points of a closed disc (`A`) and the
//! sub-lattice of points whose four axis neighbours are also in the disc (`I`).
//! A (0,q)-form component with multi-index `J` lives on the product of per-plane
//! sets in which plane `p` uses `I` when `p` is in `J` and `A` otherwise. The
//! centred difference maps `A` onto `I` in a single plane, so the ∂̄ of a component
//! lands exactly where the next degree expects it and ∂̄∘∂̄ vanishes identically.

pub mod interp;
pub mod io;
pub mod ops;
pub mod weak;

use std::sync::Arc;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::lie::{vec_norm, LieAlgebra, LieError};

const NONE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("no (0,{q})-forms on a domain of dimension {n}")]
    Degree { q: usize, n: usize },
    #[error("mismatched operands: {0}")]
    Mismatch(String),
    #[error("series failure at node {node} (component {component}): {source}")]
    Series { component: usize, node: usize, source: LieError },
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("test family is empty")]
    EmptyTests,
    #[error("test form support leaves the interior: {0}")]
    Support(String),
    #[error("point {0:?} cannot be interpolated from the grid")]
    Interpolation(Vec<f64>),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lattice points of one disc, with interior sub-lattice and stencil neighbours.
#[derive(Debug, Clone)]
pub struct Plane {
    m: i32,
    pts: Vec<[i32; 2]>,
    lookup: Vec<u32>,
    interior: Vec<u32>,
    iidx: Vec<u32>,
    nbr: Vec<[u32; 4]>,
}

impl Plane {
    fn new(radius_cells: f64) -> Plane {
        let m = (radius_cells + 1e-9).floor() as i32;
        let r2 = radius_cells * radius_cells * (1.0 + 1e-12);
        let side = (2 * m + 1) as usize;
        let mut lookup = vec![NONE; side * side];
        let mut pts = Vec::new();
        for j in -m..=m {
            for i in -m..=m {
                if (i * i + j * j) as f64 <= r2 {
                    lookup[((j + m) as usize) * side + (i + m) as usize] = pts.len() as u32;
                    pts.push([i, j]);
                }
            }
        }
        let mut plane = Plane { m, pts, lookup, interior: Vec::new(), iidx: Vec::new(), nbr: Vec::new() };
        plane.iidx = vec![NONE; plane.pts.len()];
        for a in 0..plane.pts.len() {
            let [i, j] = plane.pts[a];
            let e = plane.find(i + 1, j);
            let w = plane.find(i - 1, j);
            let n = plane.find(i, j + 1);
            let s = plane.find(i, j - 1);
            if let (Some(e), Some(w), Some(n), Some(s)) = (e, w, n, s) {
                plane.iidx[a] = plane.interior.len() as u32;
                plane.interior.push(a as u32);
                plane.nbr.push([e as u32, w as u32, n as u32, s as u32]);
            }
        }
        plane
    }

    /// A-index of lattice point `(i, j)`.
    pub fn find(&self, i: i32, j: i32) -> Option<usize> {
        if i.abs() > self.m || j.abs() > self.m {
            return None;
        }
        let side = (2 * self.m + 1) as usize;
        let v = self.lookup[((j + self.m) as usize) * side + (i + self.m) as usize];
        (v != NONE).then_some(v as usize)
    }

    pub fn half_width(&self) -> i32 {
        self.m
    }

    pub fn len_a(&self) -> usize {
        self.pts.len()
    }

    pub fn len_i(&self) -> usize {
        self.interior.len()
    }

    pub fn len(&self, s: Set) -> usize {
        match s {
            Set::A => self.pts.len(),
            Set::I => self.interior.len(),
        }
    }

    pub fn point(&self, a: usize) -> [i32; 2] {
        self.pts[a]
    }

    /// A-index of an element of set `s`.
    pub fn to_a(&self, s: Set, idx: usize) -> usize {
        match s {
            Set::A => idx,
            Set::I => self.interior[idx] as usize,
        }
    }

    /// Index within set `s` of an A-index, if it belongs to `s`.
    pub fn from_a(&self, s: Set, a: usize) -> Option<usize> {
        match s {
            Set::A => Some(a),
            Set::I => {
                let v = self.iidx[a];
                (v != NONE).then_some(v as usize)
            }
        }
    }

    /// A-indices of the east, west, north and south neighbours of interior node `k`.
    pub fn neighbours(&self, k: usize) -> [usize; 4] {
        let n = self.nbr[k];
        [n[0] as usize, n[1] as usize, n[2] as usize, n[3] as usize]
    }

    /// Index within `s` of lattice point `(i, j)`.
    pub fn find_in(&self, s: Set, i: i32, j: i32) -> Option<usize> {
        self.find(i, j).and_then(|a| self.from_a(s, a))
    }
}

/// Per-plane node set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Set {
    A,
    I,
}

/// Node sets of the (up to) two planes; the second entry is unused when n = 1.
pub type Layout = [Set; 2];

/// Layouts of the components of (0,q)-forms, ordered by increasing multi-index.
pub fn layouts(n: usize, q: usize) -> Vec<Layout> {
    use Set::*;
    match (n, q) {
        (1, 0) => vec![[A, A]],
        (1, 1) => vec![[I, A]],
        (2, 0) => vec![[A, A]],
        (2, 1) => vec![[I, A], [A, I]],
        (2, 2) => vec![[I, I]],
        _ => Vec::new(),
    }
}

/// Multi-index labels (1-based) of the components, e.g. `"12"`.
pub fn multi_indices(n: usize, q: usize) -> Vec<String> {
    match (n, q) {
        (_, 0) => vec![String::new()],
        (1, 1) => vec!["1".into()],
        (2, 1) => vec!["1".into(), "2".into()],
        (2, 2) => vec!["12".into()],
        _ => Vec::new(),
    }
}

/// A discretised closed disc (n = 1) or polydisc (n = 2) of radius `r`.
#[derive(Debug, Clone)]
pub struct GridDomain {
    n: usize,
    r: f64,
    h: f64,
    subdomain_fraction: f64,
    plane: Arc<Plane>,
}

impl PartialEq for GridDomain {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.r == other.r
            && self.h == other.h
            && self.subdomain_fraction == other.subdomain_fraction
    }
}

impl GridDomain {
    pub fn new(n: usize, r: f64, h: f64, subdomain_fraction: f64) -> Result<Self, GridError> {
        if n != 1 && n != 2 {
            return Err(GridError::InvalidDomain(format!("n must be 1 or 2, got {n}")));
        }
        if !(r > 0.0 && r.is_finite()) || !(h > 0.0 && h.is_finite()) {
            return Err(GridError::InvalidDomain(format!("need r > 0 and h > 0, got r={r}, h={h}")));
        }
        if !(subdomain_fraction > 0.0 && subdomain_fraction < 1.0) {
            return Err(GridError::InvalidDomain(format!(
                "subdomain_fraction must lie in (0,1), got {subdomain_fraction}"
            )));
        }
        let cells = r / h;
        if cells > 4096.0 {
            return Err(GridError::InvalidDomain(format!("r/h = {cells} is too large")));
        }
        let plane = Plane::new(cells);
        if plane.len_i() == 0 {
            return Err(GridError::InvalidDomain(format!("r={r}, h={h} leaves no interior nodes")));
        }
        Ok(GridDomain { n, r, h, subdomain_fraction, plane: Arc::new(plane) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn subdomain_fraction(&self) -> f64 {
        self.subdomain_fraction
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    /// Set lengths of the two planes (second is 1 when n = 1).
    pub fn lens(&self, l: Layout) -> [usize; 2] {
        let l0 = self.plane.len(l[0]);
        let l1 = if self.n == 2 { self.plane.len(l[1]) } else { 1 };
        [l0, l1]
    }

    pub fn size(&self, l: Layout) -> usize {
        let [a, b] = self.lens(l);
        a * b
    }

    pub fn node_count(&self) -> usize {
        self.size([Set::A, Set::A])
    }

    /// Per-plane set indices of a flat node index.
    pub fn split(&self, l: Layout, idx: usize) -> [usize; 2] {
        let len0 = self.plane.len(l[0]);
        [idx % len0, idx / len0]
    }

    pub fn join(&self, l: Layout, i: [usize; 2]) -> usize {
        i[0] + self.plane.len(l[0]) * i[1]
    }

    /// Integer lattice coordinates `(i1, j1, i2, j2)`; the last pair is zero when n = 1.
    pub fn lattice(&self, l: Layout, idx: usize) -> [i32; 4] {
        let [i0, i1] = self.split(l, idx);
        let p0 = self.plane.point(self.plane.to_a(l[0], i0));
        if self.n == 2 {
            let p1 = self.plane.point(self.plane.to_a(l[1], i1));
            [p0[0], p0[1], p1[0], p1[1]]
        } else {
            [p0[0], p0[1], 0, 0]
        }
    }

    /// Real coordinates `(x1, y1, x2, y2)` of a node.
    pub fn coords(&self, l: Layout, idx: usize) -> [f64; 4] {
        let p = self.lattice(l, idx);
        [p[0] as f64 * self.h, p[1] as f64 * self.h, p[2] as f64 * self.h, p[3] as f64 * self.h]
    }

    /// Complex coordinates `(z1, z2)` of a node.
    pub fn z(&self, l: Layout, idx: usize) -> [C64; 2] {
        let c = self.coords(l, idx);
        [C64::new(c[0], c[1]), C64::new(c[2], c[3])]
    }

    /// Flat index of the node at lattice coordinates, if present in layout `l`.
    pub fn find(&self, l: Layout, p: [i32; 4]) -> Option<usize> {
        let i0 = self.plane.find_in(l[0], p[0], p[1])?;
        let i1 = if self.n == 2 { self.plane.find_in(l[1], p[2], p[3])? } else { 0 };
        Some(self.join(l, [i0, i1]))
    }

    /// Largest lattice radius (in cells) reached by the interior set.
    pub fn interior_radius_cells(&self) -> f64 {
        (0..self.plane.len_i())
            .map(|k| {
                let [i, j] = self.plane.point(self.plane.to_a(Set::I, k));
                ((i * i + j * j) as f64).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Whether a node lies in the report subdomain V = B(fraction * r) in every plane.
    pub fn in_subdomain(&self, l: Layout, idx: usize) -> bool {
        let c = self.coords(l, idx);
        let rv = self.subdomain_fraction * self.r * (1.0 + 1e-12);
        (c[0] * c[0] + c[1] * c[1]).sqrt() <= rv && (self.n == 1 || (c[2] * c[2] + c[3] * c[3]).sqrt() <= rv)
    }
}

/// A 𝔤-valued (0,q)-form: one array of d-vectors per component, stored node-major.
#[derive(Debug, Clone)]
pub struct GForm {
    domain: GridDomain,
    algebra: Arc<LieAlgebra>,
    q: usize,
    comps: Vec<Vec<C64>>,
}

impl GForm {
    pub fn zeros(domain: &GridDomain, algebra: &Arc<LieAlgebra>, q: usize) -> Result<Self, GridError> {
        if q > domain.n() && !(q == 2 && domain.n() == 1) {
            return Err(GridError::Degree { q, n: domain.n() });
        }
        let d = algebra.dim();
        let comps = layouts(domain.n(), q)
            .into_iter()
            .map(|l| vec![C64::new(0.0, 0.0); domain.size(l) * d])
            .collect();
        Ok(GForm { domain: domain.clone(), algebra: algebra.clone(), q, comps })
    }

    /// Samples `f(component, z, out)` at every node of every component.
    pub fn from_fn<F>(domain: &GridDomain, algebra: &Arc<LieAlgebra>, q: usize, mut f: F) -> Result<Self, GridError>
    where
        F: FnMut(usize, [C64; 2], &mut [C64]),
    {
        let mut g = Self::zeros(domain, algebra, q)?;
        let d = algebra.dim();
        for (c, l) in layouts(domain.n(), q).into_iter().enumerate() {
            for idx in 0..domain.size(l) {
                let z = domain.z(l, idx);
                f(c, z, &mut g.comps[c][idx * d..(idx + 1) * d]);
            }
        }
        Ok(g)
    }

    pub fn from_components(
        domain: &GridDomain,
        algebra: &Arc<LieAlgebra>,
        q: usize,
        comps: Vec<Vec<C64>>,
    ) -> Result<Self, GridError> {
        let ls = layouts(domain.n(), q);
        if comps.len() != ls.len() {
            return Err(GridError::Mismatch(format!("expected {} components, got {}", ls.len(), comps.len())));
        }
        for (c, l) in comps.iter().zip(&ls) {
            if c.len() != domain.size(*l) * algebra.dim() {
                return Err(GridError::Mismatch("component length does not match its node set".into()));
            }
        }
        Ok(GForm { domain: domain.clone(), algebra: algebra.clone(), q, comps })
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn algebra(&self) -> &Arc<LieAlgebra> {
        &self.algebra
    }

    pub fn degree(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.algebra.dim()
    }

    pub fn num_components(&self) -> usize {
        self.comps.len()
    }

    pub fn layout(&self, c: usize) -> Layout {
        layouts(self.domain.n(), self.q)[c]
    }

    pub fn component(&self, c: usize) -> &[C64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [C64] {
        &mut self.comps[c]
    }

    pub fn into_components(self) -> Vec<Vec<C64>> {
        self.comps
    }

    pub fn value(&self, c: usize, idx: usize) -> &[C64] {
        let d = self.dim();
        &self.comps[c][idx * d..(idx + 1) * d]
    }

    /// Value at a lattice point, if that point carries component `c`.
    pub fn value_at(&self, c: usize, p: [i32; 4]) -> Option<&[C64]> {
        let idx = self.domain.find(self.layout(c), p)?;
        Some(self.value(c, idx))
    }

    /// Max over components and nodes of the coordinate norm.
    pub fn sup_norm(&self) -> f64 {
        let d = self.dim();
        self.comps
            .iter()
            .flat_map(|c| c.chunks(d).map(vec_norm))
            .fold(0.0, f64::max)
    }

    pub fn same_space(&self, other: &GForm) -> Result<(), GridError> {
        if self.domain != other.domain {
            return Err(GridError::Mismatch("different domains".into()));
        }
        if self.algebra.id() != other.algebra.id() || self.dim() != other.dim() {
            return Err(GridError::Mismatch("different algebras".into()));
        }
        Ok(())
    }

    fn check_same(&self, other: &GForm) -> Result<(), GridError> {
        self.same_space(other)?;
        if self.q != other.q {
            return Err(GridError::Mismatch(format!("degrees {} and {}", self.q, other.q)));
        }
        Ok(())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: C64, other: &GForm) -> Result<GForm, GridError> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (a, b) in out.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &GForm) -> Result<GForm, GridError> {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &GForm) -> Result<GForm, GridError> {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    pub fn scale(&self, s: C64) -> GForm {
        let mut out = self.clone();
        out.comps.iter_mut().flatten().for_each(|x| *x *= s);
        out
    }

    /// Concatenation of all components, for use by the linear solvers.
    pub fn flat(&self) -> Vec<C64> {
        self.comps.concat()
    }

    /// Inverse of [`GForm::flat`].
    pub fn from_flat(domain: &GridDomain, algebra: &Arc<LieAlgebra>, q: usize, v: &[C64]) -> Result<Self, GridError> {
        let d = algebra.dim();
        let mut comps = Vec::new();
        let mut off = 0;
        for l in layouts(domain.n(), q) {
            let len = domain.size(l) * d;
            if off + len > v.len() {
                return Err(GridError::Mismatch("flat vector too short".into()));
            }
            comps.push(v[off..off + len].to_vec());
            off += len;
        }
        if off != v.len() {
            return Err(GridError::Mismatch("flat vector too long".into()));
        }
        Self::from_components(domain, algebra, q, comps)
    }

    pub fn flat_len(domain: &GridDomain, algebra: &LieAlgebra, q: usize) -> usize {
        layouts(domain.n(), q).iter().map(|l| domain.size(*l)).sum::<usize>() * algebra.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_lattice_counts() {
        let d = GridDomain::new(1, 1.0, 0.25, 0.5).unwrap();
        // points with i^2 + j^2 <= 16
        let count = (-4..=4).flat_map(|i| (-4..=4).map(move |j| (i, j))).filter(|(i, j)| i * i + j * j <= 16).count();
        assert_eq!(d.plane().len_a(), count);
        for k in 0..d.plane().len_i() {
            for nb in d.plane().neighbours(k) {
                assert!(nb < d.plane().len_a());
            }
        }
        assert!(d.plane().len_i() < count);
    }

    #[test]
    fn layouts_and_sizes() {
        let d = GridDomain::new(2, 0.25, 1.0 / 16.0, 0.5).unwrap();
        let (na, ni) = (d.plane().len_a(), d.plane().len_i());
        assert_eq!(d.size([Set::I, Set::A]), ni * na);
        assert_eq!(d.node_count(), na * na);
        let l = [Set::A, Set::I];
        for idx in [0, 7, d.size(l) - 1] {
            let p = d.lattice(l, idx);
            assert_eq!(d.find(l, p), Some(idx));
        }
        assert_eq!(layouts(1, 2).len(), 0);
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(GridDomain::new(3, 1.0, 0.1, 0.5).is_err());
        assert!(GridDomain::new(1, 1.0, 0.0, 0.5).is_err());
        assert!(GridDomain::new(1, 1.0, 0.1, 1.0).is_err());
        assert!(GridDomain::new(1, 0.1, 1.0, 0.5).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let d = GridDomain::new(2, 0.25, 1.0 / 8.0, 0.5).unwrap();
        let g = Arc::new(LieAlgebra::heisenberg3());
        let f = GForm::from_fn(&d, &g, 1, |c, z, out| {
            out[0] = z[0] * (c as f64 + 1.0);
            out[2] = z[1].conj();
        })
        .unwrap();
        let back = GForm::from_flat(&d, &g, 1, &f.flat()).unwrap();
        assert_eq!(back.flat(), f.flat());
        assert_eq!(GForm::flat_len(&d, &g, 1), f.flat().len());
    }
}
