//! Reference computations: closed-form fixtures, a finite-difference check of the
//! dexp factor, and the matrix form `σ⁻¹∂̄σ` computed from sampled group elements.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::grid::ops::{mc_pullback, plane_dbar, plane_restrict};
use crate::grid::{layouts, GForm, GridDomain, GridError, Set};
use crate::lie::{AlgebraElement, CMat, LieAlgebra, LieError, SeriesConfig};
use crate::poly::{step2_pullback, LiePoly};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("group element is singular at node {0}")]
    Singular(usize),
    #[error("step {0} outside [1e-6, 1e-3]")]
    Step(f64),
    #[error("no closed form for this case: {0}")]
    Unsupported(String),
    #[error("unknown fixture '{0}'")]
    UnknownCase(String),
}

/// A closed-form test problem `l̄(exp u) = λ`, or a bare form `α` when no solution is known.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub algebra: Arc<LieAlgebra>,
    pub n: usize,
    /// Radius the fixture is meant to be used on.
    pub radius: f64,
    pub u: Option<LiePoly>,
    /// Components of `λ`; derived from `u` when absent.
    pub lambda: Option<Vec<LiePoly>>,
    pub note: String,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn elem(g: &LieAlgebra, terms: &[(&str, f64)]) -> Vec<C64> {
    let mut v = vec![c(0.0); g.dim()];
    for (name, x) in terms {
        v[g.index_of(name).expect("basis name")] += c(*x);
    }
    v
}

/// Names of the built-in fixtures.
pub const CASE_NAMES: [&str; 7] = [
    "abelian_1d",
    "heisenberg_step2_1d",
    "heisenberg_step2_2d",
    "nonintegrable_2d",
    "abelian_2d",
    "sl2c_large_1d",
    "gl2_1d",
];

const ZB1: [u8; 4] = [0, 1, 0, 0];
const ZB2: [u8; 4] = [0, 0, 0, 1];
const Z1: [u8; 4] = [1, 0, 0, 0];

/// Looks up a built-in fixture.
pub fn case(name: &str) -> Result<ManufacturedCase, OracleError> {
    let mk = |alg: LieAlgebra, n: usize, radius: f64, u: Option<LiePoly>, lambda: Option<Vec<LiePoly>>, note: &str| {
        ManufacturedCase { name: name.to_string(), algebra: Arc::new(alg), n, radius, u, lambda, note: note.to_string() }
    };
    Ok(match name {
        "abelian_1d" => {
            let g = LieAlgebra::abelian(1);
            let u = LiePoly::monomial([0, 2, 0, 0], vec![c(0.5)]);
            mk(g, 1, 1.0, Some(u), None, "u = z̄²/2, λ = z̄ dz̄")
        }
        "heisenberg_step2_1d" => {
            let g = LieAlgebra::heisenberg3();
            let u = LiePoly::monomial(ZB1, elem(&g, &[("X", 1.0)])).add(&LiePoly::monomial([0, 2, 0, 0], elem(&g, &[("Y", 1.0)])));
            mk(g, 1, 1.0, Some(u), None, "u = z̄X + z̄²Y")
        }
        "heisenberg_step2_2d" => {
            let g = LieAlgebra::heisenberg3();
            let u = LiePoly::monomial(ZB1, elem(&g, &[("X", 1.0)])).add(&LiePoly::monomial(ZB2, elem(&g, &[("Y", 1.0)])));
            mk(g, 2, 0.25, Some(u), None, "u = z̄1 X + z̄2 Y")
        }
        "nonintegrable_2d" => {
            let g = LieAlgebra::heisenberg3();
            let a1 = LiePoly::monomial(ZB2, elem(&g, &[("X", 1.0)]));
            let a2 = LiePoly::zero(3);
            mk(g, 2, 0.25, None, Some(vec![a1, a2]), "α = z̄2 X dz̄1, obstruction −X")
        }
        "abelian_2d" => {
            let g = LieAlgebra::abelian(1);
            let u = LiePoly::monomial([0, 1, 0, 1], vec![c(1.0)]);
            mk(g, 2, 0.25, Some(u), None, "u = z̄1 z̄2")
        }
        "sl2c_large_1d" => {
            let g = LieAlgebra::sl2c();
            let a = LiePoly::constant(elem(&g, &[("E", 2.0)]))
                .add(&LiePoly::monomial(Z1, elem(&g, &[("F", 2.0)])))
                .add(&LiePoly::monomial(ZB1, elem(&g, &[("H", 2.0)])));
            mk(g, 1, 1.0, None, Some(vec![a]), "α = 2(E + zF + z̄H) dz̄, outside the direct Newton basin")
        }
        "gl2_1d" => {
            let g = LieAlgebra::gl(2);
            let u = LiePoly::monomial(ZB1, elem(&g, &[("E12", 0.4), ("E11", 0.2)]))
                .add(&LiePoly::monomial([1, 1, 0, 0], elem(&g, &[("E21", 0.3)])))
                .add(&LiePoly::monomial([0, 2, 0, 0], elem(&g, &[("E22", -0.25), ("E12", 0.1)])));
            mk(g, 1, 1.0, Some(u), None, "polynomial u in gl(2); λ from the lattice pullback")
        }
        other => return Err(OracleError::UnknownCase(other.to_string())),
    })
}

/// Samples a (0,1)-form from polynomial components.
pub fn sample_form(dom: &GridDomain, g: &Arc<LieAlgebra>, comps: &[LiePoly]) -> Result<GForm, GridError> {
    if comps.len() != dom.n() {
        return Err(GridError::Mismatch(format!("{} components for n = {}", comps.len(), dom.n())));
    }
    GForm::from_fn(dom, g, 1, |k, z, o| comps[k].eval(z, o))
}

pub fn sample_function(dom: &GridDomain, g: &Arc<LieAlgebra>, u: &LiePoly) -> Result<GForm, GridError> {
    GForm::from_fn(dom, g, 0, |_, z, o| u.eval(z, o))
}

/// Samples `u` (when known) and `λ` on `dom`.
///
/// For algebras of nilpotency order at most 2, `λ = ∂̄u − ½[u, ∂̄u]` is formed
/// symbolically and sampled; otherwise `λ` is the lattice pullback of the sampled `u`.
pub fn manufactured_lambda(case: &ManufacturedCase, dom: &GridDomain) -> Result<(Option<GForm>, GForm), OracleError> {
    if dom.n() != case.n {
        return Err(OracleError::Grid(GridError::Mismatch(format!("fixture '{}' needs n = {}", case.name, case.n))));
    }
    let g = &case.algebra;
    let u = match &case.u {
        Some(p) => {
            if p.degree() > 6 {
                return Err(OracleError::Unsupported("polynomial degree above 6".into()));
            }
            Some(sample_function(dom, g, p)?)
        }
        None => None,
    };
    let lam = match (&case.lambda, &case.u, &u) {
        (Some(l), _, _) => sample_form(dom, g, l)?,
        (None, Some(p), Some(uh)) => match g.nilpotency_order() {
            Some(m) if m <= 2 => sample_form(dom, g, &step2_pullback(g, p, case.n))?,
            _ => mc_pullback(uh, SeriesConfig { truncation: 40, tolerance: 1e-14 })?,
        },
        _ => return Err(OracleError::Unsupported(format!("fixture '{}' has neither u nor λ", case.name))),
    };
    Ok((u, lam))
}

/// `exp(−u) d/ds exp(u + s v)` at `s = 0` by central differences on the representation.
pub fn fd_dexp_oracle(g: &LieAlgebra, u: &AlgebraElement, v: &AlgebraElement, step: f64) -> Result<AlgebraElement, OracleError> {
    if !(1e-6..=1e-3).contains(&step) {
        return Err(OracleError::Step(step));
    }
    let s = C64::new(step, 0.0);
    let plus = g.exp_rep(&u.add(&v.scale(s)))?;
    let minus = g.exp_rep(&u.sub(&v.scale(s)))?;
    let inv = g.exp_rep(&u.scale(C64::new(-1.0, 0.0)))?;
    let m = inv * (plus - minus) / C64::new(2.0 * step, 0.0);
    Ok(g.coords_of_matrix(&m)?.0)
}

/// Matrix-valued (0,1)-form: per component, one `r×r` matrix per node of its layout.
#[derive(Debug, Clone)]
pub struct MatrixForm {
    pub components: Vec<Vec<CMat>>,
}

impl MatrixForm {
    /// Sup over nodes of the Frobenius distance to `ρ(f)`.
    pub fn distance_to(&self, g: &LieAlgebra, f: &GForm) -> Result<f64, OracleError> {
        self.distance_where(g, f, |_, _| true)
    }

    /// As [`MatrixForm::distance_to`], restricted to nodes `(component, index)` accepted by `keep`.
    pub fn distance_where<K: Fn(usize, usize) -> bool>(&self, g: &LieAlgebra, f: &GForm, keep: K) -> Result<f64, OracleError> {
        let mut worst = 0.0f64;
        for (c, mats) in self.components.iter().enumerate() {
            for (i, m) in mats.iter().enumerate() {
                if keep(c, i) {
                    worst = worst.max((m - g.rep(f.value(c, i))?).norm());
                }
            }
        }
        Ok(worst)
    }
}

/// `σ⁻¹ ∂̄σ` per dz̄ component, for `σ` sampled on all nodes.
pub fn matrix_mc(dom: &GridDomain, sigma: &[CMat]) -> Result<MatrixForm, OracleError> {
    let l0 = [Set::A, Set::A];
    if sigma.len() != dom.size(l0) || sigma.is_empty() {
        return Err(OracleError::Grid(GridError::Mismatch("one matrix per node is required".into())));
    }
    let r = sigma[0].nrows();
    let rr = r * r;
    let mut flat = Vec::with_capacity(sigma.len() * rr);
    for m in sigma {
        for i in 0..r {
            for j in 0..r {
                flat.push(m[(i, j)]);
            }
        }
    }
    let mut components = Vec::new();
    for (p, l) in layouts(dom.n(), 1).into_iter().enumerate() {
        let ds = plane_dbar(dom, &flat, l0, p, rr);
        let s = plane_restrict(dom, &flat, l0, p, rr);
        let mut out = Vec::with_capacity(dom.size(l));
        for i in 0..dom.size(l) {
            let sm = CMat::from_row_slice(r, r, &s[i * rr..(i + 1) * rr]);
            let dm = CMat::from_row_slice(r, r, &ds[i * rr..(i + 1) * rr]);
            let inv = sm.try_inverse().ok_or(OracleError::Singular(i))?;
            out.push(inv * dm);
        }
        components.push(out);
    }
    Ok(MatrixForm { components })
}

/// Pointwise `exp(ρ(u))` on every node of a function.
pub fn frame_matrices(u: &GForm) -> Result<Vec<CMat>, OracleError> {
    let g = u.algebra();
    let d = u.dim();
    u.component(0)
        .chunks(d)
        .map(|v| Ok(g.exp_rep(&AlgebraElement::new(v.to_vec()))?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ops::{obstruction, shared};

    #[test]
    fn registry_round_trip() {
        for name in CASE_NAMES {
            assert_eq!(case(name).unwrap().name, name);
        }
        assert!(matches!(case("nope"), Err(OracleError::UnknownCase(_))));
    }

    #[test]
    fn closed_forms_match_lattice_pullback() {
        for name in ["abelian_1d", "heisenberg_step2_1d", "heisenberg_step2_2d", "abelian_2d"] {
            let cs = case(name).unwrap();
            let dom = GridDomain::new(cs.n, cs.radius, cs.radius / 16.0, 0.5).unwrap();
            let (u, lam) = manufactured_lambda(&cs, &dom).unwrap();
            let lat = mc_pullback(&u.unwrap(), SeriesConfig::default()).unwrap();
            // polynomials of degree <= 2 are differentiated exactly by the centred stencil
            assert!(lat.sub(&lam).unwrap().sup_norm() < 1e-13, "{name}");
        }
    }

    #[test]
    fn two_plane_fixture_is_integrable() {
        let cs = case("heisenberg_step2_2d").unwrap();
        let dom = GridDomain::new(2, 0.25, 1.0 / 64.0, 0.5).unwrap();
        let (_, lam) = manufactured_lambda(&cs, &dom).unwrap();
        assert!(obstruction(&lam).unwrap().sup_norm() < 1e-13);
        let bad = manufactured_lambda(&case("nonintegrable_2d").unwrap(), &GridDomain::new(2, 0.25, 1.0 / 16.0, 0.5).unwrap()).unwrap().1;
        assert!((obstruction(&bad).unwrap().sup_norm() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn fd_dexp_examples() {
        let g = LieAlgebra::heisenberg3();
        let v = AlgebraElement::basis(3, 1);
        let at0 = fd_dexp_oracle(&g, &AlgebraElement::zero(3), &v, 1e-4).unwrap();
        assert!(at0.sub(&v).norm() < 1e-8);
        let x = AlgebraElement::basis(3, 0);
        let got = fd_dexp_oracle(&g, &x, &v, 1e-4).unwrap();
        let want = AlgebraElement::new(vec![c(0.0), c(1.0), c(-0.5)]);
        assert!(got.sub(&want).norm() < 1e-8);
        assert!(fd_dexp_oracle(&g, &x, &v, 0.1).is_err());
        assert!(matches!(fd_dexp_oracle(&LieAlgebra::from_triplets("t", 1, &[], None, None, None).unwrap(), &AlgebraElement::zero(1), &AlgebraElement::zero(1), 1e-4), Err(OracleError::Lie(LieError::NoRepresentation))));
    }

    #[test]
    fn matrix_mc_examples() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 16.0, 0.5).unwrap();
        let g = shared(LieAlgebra::sl2c());
        let n = dom.size([Set::A, Set::A]);
        let k = CMat::from_row_slice(2, 2, &[c(2.0), c(1.0), c(0.0), c(1.0)]);
        let m = matrix_mc(&dom, &vec![k.clone(); n]).unwrap();
        assert!(m.components[0].iter().all(|x| x.norm() == 0.0));
        // σ = exp(z̄ A) with A diagonal
        let u = GForm::from_fn(&dom, &g, 0, |_, z, o| o[0] = z[0].conj() * 0.3).unwrap();
        let sig = frame_matrices(&u).unwrap();
        let m = matrix_mc(&dom, &sig).unwrap();
        let a = GForm::from_fn(&dom, &g, 1, |_, _, o| o[0] = c(0.3)).unwrap();
        assert!(m.distance_to(&g, &a).unwrap() < 0.01);
        let mut sing = vec![k; n];
        sing[dom.plane().find(0, 0).unwrap()] = CMat::zeros(2, 2);
        assert!(matches!(matrix_mc(&dom, &sing), Err(OracleError::Singular(_))));
    }
}
