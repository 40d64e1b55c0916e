//! Finite-dimensional complex Lie algebras described by structure constants.
//!
//! The basis is fixed at construction; elements are coordinate vectors in it.
//! `[e_i, e_j] = sum_k c[i][j][k] e_k`.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CMat = DMatrix<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance used when checking float input (antisymmetry, Jacobi).
pub const STRUCTURE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LieError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("series tail bound {bound:e} exceeds tolerance {tol:e} at truncation {truncation}")]
    TailBound { bound: f64, tol: f64, truncation: usize },
    #[error("truncation {truncation} is below the declared nilpotency order {order}")]
    TruncationBelowNilpotency { truncation: usize, order: usize },
    #[error("algebra has no matrix representation")]
    NoRepresentation,
    #[error("invalid algebra: {0}")]
    Invalid(String),
    #[error("cannot read algebra: {0}")]
    Parse(String),
}

/// Truncation policy for the `Ad` and `dexp` series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub truncation: usize,
    pub tolerance: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig { truncation: 20, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement {
    pub coeffs: Vec<C64>,
}

impl AlgebraElement {
    pub fn new(coeffs: Vec<C64>) -> Self {
        AlgebraElement { coeffs }
    }

    pub fn zero(dim: usize) -> Self {
        AlgebraElement { coeffs: vec![ZERO; dim] }
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut e = Self::zero(dim);
        e.coeffs[i] = ONE;
        e
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.coeffs)
    }

    pub fn scale(&self, s: C64) -> Self {
        AlgebraElement { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        AlgebraElement {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        AlgebraElement {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Euclidean norm of a coordinate vector (coordinate Hermitian inner product).
pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct LieAlgebra {
    id: String,
    dim: usize,
    c: Vec<C64>,
    nonzero: Vec<(usize, usize, usize, C64)>,
    nilpotency_order: Option<usize>,
    matrix_rep: Option<Vec<CMat>>,
    names: Vec<String>,
}

impl LieAlgebra {
    /// Builds an algebra from a dense `d*d*d` array indexed `(i*d + j)*d + k`.
    pub fn new(
        id: impl Into<String>,
        dim: usize,
        c: Vec<C64>,
        nilpotency_order: Option<usize>,
        matrix_rep: Option<Vec<CMat>>,
        names: Option<Vec<String>>,
    ) -> Result<Self, LieError> {
        if dim == 0 {
            return Err(LieError::Invalid("dim must be positive".into()));
        }
        if c.len() != dim * dim * dim {
            return Err(LieError::Invalid(format!(
                "expected {} structure constants, got {}",
                dim * dim * dim,
                c.len()
            )));
        }
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let s = c[(i * dim + j) * dim + k] + c[(j * dim + i) * dim + k];
                    if s.norm() > STRUCTURE_TOL {
                        return Err(LieError::Invalid(format!(
                            "structure constants not antisymmetric at ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        if nilpotency_order == Some(0) {
            return Err(LieError::Invalid("nilpotency_order must be positive".into()));
        }
        if let Some(rep) = &matrix_rep {
            if rep.len() != dim {
                return Err(LieError::Invalid(format!(
                    "matrix_rep has {} matrices, expected {dim}",
                    rep.len()
                )));
            }
            let r = rep[0].nrows();
            if rep.iter().any(|m| m.nrows() != r || m.ncols() != r) || r == 0 {
                return Err(LieError::Invalid("matrix_rep matrices must be square of one size".into()));
            }
        }
        let names = match names {
            Some(n) if n.len() == dim => n,
            Some(n) => {
                return Err(LieError::Invalid(format!("{} basis names for dim {dim}", n.len())))
            }
            None => (1..=dim).map(|i| format!("e{i}")).collect(),
        };
        let mut nonzero = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let v = c[(i * dim + j) * dim + k];
                    if v != ZERO {
                        nonzero.push((i, j, k, v));
                    }
                }
            }
        }
        Ok(LieAlgebra { id: id.into(), dim, c, nonzero, nilpotency_order, matrix_rep, names })
    }

    /// Builds from sparse triplets `(i, j, k, value)`; the `(j, i, k)` entry is filled by antisymmetry.
    pub fn from_triplets(
        id: impl Into<String>,
        dim: usize,
        triplets: &[(usize, usize, usize, C64)],
        nilpotency_order: Option<usize>,
        matrix_rep: Option<Vec<CMat>>,
        names: Option<Vec<String>>,
    ) -> Result<Self, LieError> {
        let mut c = vec![ZERO; dim * dim * dim];
        for &(i, j, k, v) in triplets {
            if i >= dim || j >= dim || k >= dim {
                return Err(LieError::Invalid(format!("index ({i},{j},{k}) out of range")));
            }
            if i == j {
                if v != ZERO {
                    return Err(LieError::Invalid(format!("[e_{i},e_{i}] must vanish")));
                }
                continue;
            }
            let a = &mut c[(i * dim + j) * dim + k];
            let b_idx = (j * dim + i) * dim + k;
            if *a != ZERO && (*a - v).norm() > STRUCTURE_TOL {
                return Err(LieError::Invalid(format!("conflicting entries for ({i},{j},{k})")));
            }
            *a = v;
            let existing = c[b_idx];
            if existing != ZERO && (existing + v).norm() > STRUCTURE_TOL {
                return Err(LieError::Invalid(format!("entries ({i},{j},{k}) and ({j},{i},{k}) not antisymmetric")));
            }
            c[b_idx] = -v;
        }
        Self::new(id, dim, c, nilpotency_order, matrix_rep, names)
    }

    pub fn abelian(d: usize) -> Self {
        let rep = (0..d)
            .map(|i| {
                let mut m = CMat::zeros(d, d);
                m[(i, i)] = ONE;
                m
            })
            .collect();
        Self::new(format!("abelian({d})"), d, vec![ZERO; d * d * d], Some(1), Some(rep), None)
            .expect("abelian algebra is valid")
    }

    /// Basis X, Y, Z with `[X, Y] = Z`, represented by strictly upper-triangular 3x3 matrices.
    pub fn heisenberg3() -> Self {
        let unit = |a: usize, b: usize| {
            let mut m = CMat::zeros(3, 3);
            m[(a, b)] = ONE;
            m
        };
        Self::from_triplets(
            "heisenberg3",
            3,
            &[(0, 1, 2, ONE)],
            Some(2),
            Some(vec![unit(0, 1), unit(1, 2), unit(0, 2)]),
            Some(vec!["X".into(), "Y".into(), "Z".into()]),
        )
        .expect("heisenberg algebra is valid")
    }

    /// Basis H, E, F with the standard 2x2 representation.
    pub fn sl2c() -> Self {
        let two = C64::new(2.0, 0.0);
        let h = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        let e = CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        let f = CMat::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO]);
        Self::from_triplets(
            "sl2C",
            3,
            &[(0, 1, 1, two), (0, 2, 2, -two), (1, 2, 0, ONE)],
            None,
            Some(vec![h, e, f]),
            Some(vec!["H".into(), "E".into(), "F".into()]),
        )
        .expect("sl2C is valid")
    }

    /// gl(r) with basis E_ab (index `a*r + b`) and its defining representation.
    pub fn gl(r: usize) -> Self {
        let d = r * r;
        let mut trip = Vec::new();
        for a in 0..r {
            for b in 0..r {
                for cc in 0..r {
                    for dd in 0..r {
                        let i = a * r + b;
                        let j = cc * r + dd;
                        if i >= j {
                            continue;
                        }
                        // [E_ab, E_cd] = d_bc E_ad - d_da E_cb
                        let mut terms = vec![ZERO; d];
                        if b == cc {
                            terms[a * r + dd] += ONE;
                        }
                        if dd == a {
                            terms[cc * r + b] -= ONE;
                        }
                        for (k, v) in terms.into_iter().enumerate() {
                            if v != ZERO {
                                trip.push((i, j, k, v));
                            }
                        }
                    }
                }
            }
        }
        let rep = (0..d)
            .map(|i| {
                let mut m = CMat::zeros(r, r);
                m[(i / r, i % r)] = ONE;
                m
            })
            .collect();
        let names = (0..d).map(|i| format!("E{}{}", i / r + 1, i % r + 1)).collect();
        Self::from_triplets(format!("gl({r})"), d, &trip, None, Some(rep), Some(names))
            .expect("gl(r) is valid")
    }

    /// Resolves `abelian(d)`, `heisenberg3`, `sl2C` or `gl(r)`.
    pub fn by_name(name: &str) -> Result<Self, LieError> {
        let s = name.trim();
        let arg = |prefix: &str| -> Option<Result<usize, LieError>> {
            let rest = s.strip_prefix(prefix)?;
            let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
            Some(
                inner
                    .trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v > 0)
                    .ok_or_else(|| LieError::Parse(format!("bad size in '{s}'"))),
            )
        };
        if s == "abelian" {
            return Ok(Self::abelian(1));
        }
        if let Some(d) = arg("abelian") {
            return Ok(Self::abelian(d?));
        }
        if let Some(r) = arg("gl") {
            return Ok(Self::gl(r?));
        }
        match s {
            "heisenberg3" | "heisenberg" => Ok(Self::heisenberg3()),
            "sl2C" | "sl2c" | "sl2" => Ok(Self::sl2c()),
            _ => Err(LieError::Parse(format!("unknown algebra '{s}'"))),
        }
    }

    /// Reads an algebra definition (TOML, or JSON when the text starts with `{`).
    pub fn from_text(id: &str, text: &str) -> Result<Self, LieError> {
        let file: AlgebraFile = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| LieError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| LieError::Parse(e.to_string()))?
        };
        file.build(id)
    }

    pub fn from_file(path: &Path) -> Result<Self, LieError> {
        let text = std::fs::read_to_string(path).map_err(|e| LieError::Parse(format!("{}: {e}", path.display())))?;
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
        Self::from_text(id, &text)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn nilpotency_order(&self) -> Option<usize> {
        self.nilpotency_order
    }

    pub fn matrix_rep(&self) -> Option<&[CMat]> {
        self.matrix_rep.as_deref()
    }

    pub fn rep_size(&self) -> Option<usize> {
        self.matrix_rep.as_ref().map(|r| r[0].nrows())
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> C64 {
        self.c[(i * self.dim + j) * self.dim + k]
    }

    /// Adds `delta` to a single constant without restoring antisymmetry; for validation tests.
    pub fn perturbed(&self, i: usize, j: usize, k: usize, delta: C64) -> Self {
        let mut out = self.clone();
        let d = self.dim;
        out.c[(i * d + j) * d + k] += delta;
        out.c[(j * d + i) * d + k] -= delta;
        out.nonzero = Vec::new();
        for a in 0..d {
            for b in 0..d {
                for cc in 0..d {
                    let v = out.c[(a * d + b) * d + cc];
                    if v != ZERO {
                        out.nonzero.push((a, b, cc, v));
                    }
                }
            }
        }
        out.id = format!("{}~perturbed", self.id);
        out
    }

    pub fn is_abelian(&self) -> bool {
        self.nonzero.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn check(&self, v: &[C64]) -> Result<(), LieError> {
        if v.len() != self.dim {
            Err(LieError::DimensionMismatch { expected: self.dim, found: v.len() })
        } else {
            Ok(())
        }
    }

    pub fn bracket(&self, a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement, LieError> {
        self.check(&a.coeffs)?;
        self.check(&b.coeffs)?;
        let mut out = vec![ZERO; self.dim];
        self.bracket_into(&a.coeffs, &b.coeffs, &mut out);
        Ok(AlgebraElement::new(out))
    }

    /// `out = [a, b]`; no length checks.
    #[inline]
    pub fn bracket_into(&self, a: &[C64], b: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        self.bracket_acc(a, b, ONE, out);
    }

    /// `out += s * [a, b]`.
    #[inline]
    pub fn bracket_acc(&self, a: &[C64], b: &[C64], s: C64, out: &mut [C64]) {
        for &(i, j, k, v) in &self.nonzero {
            out[k] += s * v * a[i] * b[j];
        }
    }

    pub fn ad_matrix(&self, a: &AlgebraElement) -> Result<CMat, LieError> {
        self.check(&a.coeffs)?;
        let mut m = vec![ZERO; self.dim * self.dim];
        self.ad_into(&a.coeffs, &mut m);
        Ok(CMat::from_row_slice(self.dim, self.dim, &m))
    }

    /// Row-major `ad_a`: `ad[k][j] = sum_i a_i c[i][j][k]`.
    #[inline]
    pub fn ad_into(&self, a: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        for &(i, j, k, v) in &self.nonzero {
            out[k * self.dim + j] += a[i] * v;
        }
    }

    /// `Ad_{exp u} = sum_{m<=t} ad_u^m / m!`.
    pub fn ad_exp(&self, u: &AlgebraElement, cfg: SeriesConfig) -> Result<CMat, LieError> {
        self.check(&u.coeffs)?;
        let mut s = SeriesScratch::new(self.dim);
        self.exp_and_dexp(&u.coeffs, cfg, &mut s)?;
        Ok(CMat::from_row_slice(self.dim, self.dim, &s.e))
    }

    /// `D(ad_u) = sum_{m<=t} (-ad_u)^m / (m+1)!`.
    pub fn dexp_factor(&self, u: &AlgebraElement, cfg: SeriesConfig) -> Result<CMat, LieError> {
        self.check(&u.coeffs)?;
        let neg: Vec<C64> = u.coeffs.iter().map(|c| -c).collect();
        let mut s = SeriesScratch::new(self.dim);
        self.exp_and_dexp(&neg, cfg, &mut s)?;
        Ok(CMat::from_row_slice(self.dim, self.dim, &s.f))
    }

    /// With `P = ad_w`, fills `s.e = sum P^m/m!` and `s.f = sum P^m/(m+1)!`.
    ///
    /// For `w = -u` these are `Ad_{exp(-u)}` and `D(ad_u)`.
    pub fn exp_and_dexp(&self, w: &[C64], cfg: SeriesConfig, s: &mut SeriesScratch) -> Result<usize, LieError> {
        let d = self.dim;
        self.ad_into(w, &mut s.p);
        let pnorm = inf_norm(&s.p, d);
        let terms = self.series_terms(pnorm, cfg)?;
        if d <= SMALL_DIM && pnorm <= 2.0 && terms > d + 1 {
            small_series(&s.p, pnorm, terms, d, &mut s.e, &mut s.f);
            return Ok(terms);
        }
        set_identity(&mut s.e, d);
        set_identity(&mut s.f, d);
        set_identity(&mut s.pow, d);
        let mut fact = 1.0f64;
        let mut bound = 1.0f64;
        for m in 1..=terms {
            bound *= pnorm / m as f64;
            if bound < 1e-18 {
                break;
            }
            matmul(&s.pow, &s.p, &mut s.tmp, d);
            std::mem::swap(&mut s.pow, &mut s.tmp);
            fact *= m as f64;
            let a = 1.0 / fact;
            let b = a / (m + 1) as f64;
            for ((e, f), p) in s.e.iter_mut().zip(s.f.iter_mut()).zip(&s.pow) {
                *e += p * a;
                *f += p * b;
            }
        }
        Ok(terms)
    }

    /// Number of series terms to sum, or an error when the tail bound is too large.
    fn series_terms(&self, pnorm: f64, cfg: SeriesConfig) -> Result<usize, LieError> {
        let t = cfg.truncation;
        if let Some(m) = self.nilpotency_order {
            if t + 1 < m {
                return Err(LieError::TruncationBelowNilpotency { truncation: t, order: m });
            }
            return Ok(m.saturating_sub(1));
        }
        let mut bound = 1.0;
        for m in 1..=t + 1 {
            bound *= pnorm / m as f64;
        }
        if bound > cfg.tolerance {
            return Err(LieError::TailBound { bound, tol: cfg.tolerance, truncation: t });
        }
        Ok(t)
    }

    /// Directional derivative of `D(ad_u)` applied to `g`: `(dD_u[edot]) g`.
    pub fn dexp_derivative_apply(
        &self,
        u: &[C64],
        edot: &[C64],
        g: &[C64],
        cfg: SeriesConfig,
        out: &mut [C64],
    ) -> Result<(), LieError> {
        let d = self.dim;
        let mut adu = vec![ZERO; d * d];
        self.ad_into(u, &mut adu);
        let pnorm = inf_norm(&adu, d);
        let terms = self.series_terms(pnorm, cfg)?;
        // p_m = (-ad_u)^m g, q_m = (-ad_edot) p_{m-1} + (-ad_u) q_{m-1}
        let mut p = g.to_vec();
        let mut q = vec![ZERO; d];
        let mut tmp = vec![ZERO; d];
        let mut tmp2 = vec![ZERO; d];
        out.iter_mut().for_each(|o| *o = ZERO);
        let mut fact = 1.0f64;
        for m in 1..=terms.max(1) {
            self.bracket_into(edot, &p, &mut tmp);
            self.bracket_into(u, &q, &mut tmp2);
            for k in 0..d {
                q[k] = -tmp[k] - tmp2[k];
            }
            self.bracket_into(u, &p, &mut tmp);
            for k in 0..d {
                p[k] = -tmp[k];
            }
            fact *= (m + 1) as f64;
            for k in 0..d {
                out[k] += q[k] / fact;
            }
        }
        Ok(())
    }

    /// `rho(a) = sum a_i rho(e_i)`.
    pub fn rep(&self, a: &[C64]) -> Result<CMat, LieError> {
        let rep = self.matrix_rep.as_ref().ok_or(LieError::NoRepresentation)?;
        self.check(a)?;
        let r = rep[0].nrows();
        let mut m = CMat::zeros(r, r);
        for (ai, ri) in a.iter().zip(rep) {
            if *ai != ZERO {
                m += ri * *ai;
            }
        }
        Ok(m)
    }

    /// Matrix exponential of `rho(u)` by scaling and squaring around a Taylor core.
    pub fn exp_rep(&self, u: &AlgebraElement) -> Result<CMat, LieError> {
        let a = self.rep(&u.coeffs)?;
        Ok(expm(&a))
    }

    /// Least-squares coordinates of a matrix in the span of the representation.
    ///
    /// Returns the coordinates and the residual Frobenius norm of the projection.
    pub fn coords_of_matrix(&self, m: &CMat) -> Result<(AlgebraElement, f64), LieError> {
        let rep = self.matrix_rep.as_ref().ok_or(LieError::NoRepresentation)?;
        let r = rep[0].nrows();
        if m.nrows() != r || m.ncols() != r {
            return Err(LieError::DimensionMismatch { expected: r, found: m.nrows() });
        }
        let mut a = CMat::zeros(r * r, self.dim);
        for (j, rj) in rep.iter().enumerate() {
            for (idx, v) in rj.iter().enumerate() {
                a[(idx, j)] = *v;
            }
        }
        let b = CMat::from_iterator(r * r, 1, m.iter().cloned());
        let svd = a.clone().svd(true, true);
        let x = svd
            .solve(&b, 1e-12)
            .map_err(|e| LieError::Invalid(format!("projection failed: {e}")))?;
        let resid = (&a * &x - &b).norm();
        Ok((AlgebraElement::new(x.iter().cloned().collect()), resid))
    }

    /// Max over basis triples of the norm of the cyclic Jacobi sum.
    pub fn jacobi_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        let mut t1 = vec![ZERO; d];
        let mut t2 = vec![ZERO; d];
        let mut acc = vec![ZERO; d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let (ei, ej, ek) = (basis(d, i), basis(d, j), basis(d, k));
                    acc.iter_mut().for_each(|a| *a = ZERO);
                    for (x, y, z) in [(&ei, &ej, &ek), (&ej, &ek, &ei), (&ek, &ei, &ej)] {
                        self.bracket_into(y, z, &mut t1);
                        self.bracket_into(x, &t1, &mut t2);
                        for q in 0..d {
                            acc[q] += t2[q];
                        }
                    }
                    worst = worst.max(vec_norm(&acc));
                }
            }
        }
        worst
    }

    /// Max deviation of `rho([e_i, e_j])` from the matrix commutator.
    pub fn rep_defect(&self) -> Option<f64> {
        let rep = self.matrix_rep.as_ref()?;
        let d = self.dim;
        let mut worst = 0.0f64;
        let mut br = vec![ZERO; d];
        for i in 0..d {
            for j in 0..d {
                self.bracket_into(&basis(d, i), &basis(d, j), &mut br);
                let lhs = self.rep(&br).ok()?;
                let rhs = &rep[i] * &rep[j] - &rep[j] * &rep[i];
                worst = worst.max((lhs - rhs).norm());
            }
        }
        Some(worst)
    }

    /// Max norm of `ad_x^m` over the basis and the supplied extra elements.
    pub fn nilpotency_defect(&self, extra: &[Vec<C64>]) -> Option<f64> {
        let m = self.nilpotency_order?;
        let d = self.dim;
        let mut worst = 0.0f64;
        let mut ad = vec![ZERO; d * d];
        let mut pow = vec![ZERO; d * d];
        let mut tmp = vec![ZERO; d * d];
        let samples = (0..d).map(|i| basis(d, i)).chain(extra.iter().cloned());
        for x in samples {
            self.ad_into(&x, &mut ad);
            set_identity(&mut pow, d);
            for _ in 0..m {
                matmul(&pow, &ad, &mut tmp, d);
                std::mem::swap(&mut pow, &mut tmp);
            }
            worst = worst.max(vec_norm(&pow));
        }
        Some(worst)
    }
}

fn basis(d: usize, i: usize) -> Vec<C64> {
    let mut v = vec![ZERO; d];
    v[i] = ONE;
    v
}

/// Scratch buffers for the series kernels; reused across nodes in hot loops.
#[derive(Debug, Clone)]
pub struct SeriesScratch {
    pub e: Vec<C64>,
    pub f: Vec<C64>,
    p: Vec<C64>,
    pow: Vec<C64>,
    tmp: Vec<C64>,
}

impl SeriesScratch {
    pub fn new(d: usize) -> Self {
        let z = vec![ZERO; d * d];
        SeriesScratch { e: z.clone(), f: z.clone(), p: z.clone(), pow: z.clone(), tmp: z }
    }
}

const SMALL_DIM: usize = 4;

/// The same sums for `d <= SMALL_DIM`, carried out on coefficients in the basis
/// `I, P, .., P^(d-1)`: by Cayley-Hamilton `P^d = sum_k c_k P^k`, so each further
/// power costs O(d) instead of a matrix product.
fn small_series(p: &[C64], pnorm: f64, terms: usize, d: usize, e_out: &mut [C64], f_out: &mut [C64]) {
    let mut pows = [[ZERO; SMALL_DIM * SMALL_DIM]; SMALL_DIM + 1];
    set_identity(&mut pows[0][..d * d], d);
    for k in 1..=d {
        let (lo, hi) = pows.split_at_mut(k);
        matmul(&lo[k - 1][..d * d], p, &mut hi[0][..d * d], d);
    }
    // power sums tr(P^k), then elementary symmetric functions by Newton's identities
    let mut el = [ZERO; SMALL_DIM + 1];
    el[0] = ONE;
    for k in 1..=d {
        let mut acc = ZERO;
        let mut sign = 1.0;
        for i in 1..=k {
            let tr: C64 = (0..d).map(|j| pows[i][j * d + j]).sum();
            acc += el[k - i] * tr * sign;
            sign = -sign;
        }
        el[k] = acc / k as f64;
    }
    let mut c = [ZERO; SMALL_DIM];
    for (k, ck) in c.iter_mut().enumerate().take(d) {
        let sign = if (d - k) % 2 == 1 { 1.0 } else { -1.0 };
        *ck = el[d - k] * sign;
    }
    let mut beta = [ZERO; SMALL_DIM];
    beta[0] = ONE;
    let (mut a, mut b) = ([ZERO; SMALL_DIM], [ZERO; SMALL_DIM]);
    a[0] = ONE;
    b[0] = ONE;
    let (mut fact, mut bound) = (1.0f64, 1.0f64);
    for m in 1..=terms {
        bound *= pnorm / m as f64;
        if bound < 1e-18 {
            break;
        }
        let top = beta[d - 1];
        for k in (1..d).rev() {
            beta[k] = beta[k - 1] + top * c[k];
        }
        beta[0] = top * c[0];
        fact *= m as f64;
        let wa = 1.0 / fact;
        let wb = wa / (m + 1) as f64;
        for k in 0..d {
            a[k] += beta[k] * wa;
            b[k] += beta[k] * wb;
        }
    }
    e_out.fill(ZERO);
    f_out.fill(ZERO);
    for k in 0..d {
        for ((e, f), x) in e_out.iter_mut().zip(f_out.iter_mut()).zip(&pows[k][..d * d]) {
            *e += a[k] * x;
            *f += b[k] * x;
        }
    }
}

pub(crate) fn set_identity(m: &mut [C64], d: usize) {
    m.iter_mut().for_each(|x| *x = ZERO);
    for i in 0..d {
        m[i * d + i] = ONE;
    }
}

/// Row-major square product `out = a * b`.
#[inline]
pub(crate) fn matmul(a: &[C64], b: &[C64], out: &mut [C64], d: usize) {
    for (arow, orow) in a.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        orow.fill(ZERO);
        for (aik, brow) in arow.iter().zip(b.chunks_exact(d)) {
            if *aik != ZERO {
                for (o, x) in orow.iter_mut().zip(brow) {
                    *o += aik * x;
                }
            }
        }
    }
}

/// `out = m v` (row-major `m`), or `out += m v` when `acc`.
#[inline]
pub(crate) fn matvec(m: &[C64], v: &[C64], out: &mut [C64], d: usize, acc: bool) {
    for i in 0..d {
        let mut s = if acc { out[i] } else { ZERO };
        for k in 0..d {
            s += m[i * d + k] * v[k];
        }
        out[i] = s;
    }
}

/// `out (+)= m^H v`.
#[inline]
pub(crate) fn matvec_adj(m: &[C64], v: &[C64], out: &mut [C64], d: usize, acc: bool) {
    if !acc {
        out.iter_mut().for_each(|o| *o = ZERO);
    }
    for i in 0..d {
        for k in 0..d {
            out[k] += m[i * d + k].conj() * v[i];
        }
    }
}

fn inf_norm(m: &[C64], d: usize) -> f64 {
    (0..d)
        .map(|i| m[i * d..(i + 1) * d].iter().map(|c| c.norm_sqr().sqrt()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential: scale so the 1-norm is at most 1/2, Taylor to degree 18, square back.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0i32;
    if norm1 > 0.5 {
        s = (norm1 / 0.5).log2().ceil() as i32;
    }
    let scaled = a * C64::new(0.5f64.powi(s), 0.0);
    let mut result = CMat::identity(n, n);
    let mut term = CMat::identity(n, n);
    for m in 1..=18 {
        term = &term * &scaled * C64::new(1.0 / m as f64, 0.0);
        result += &term;
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

#[derive(Debug, Deserialize)]
struct AlgebraFile {
    dim: usize,
    #[serde(default)]
    structure_constants: Vec<(usize, usize, usize, f64, f64)>,
    nilpotency_order: Option<usize>,
    matrix_rep: Option<Vec<Vec<Vec<(f64, f64)>>>>,
    names: Option<Vec<String>>,
}

impl AlgebraFile {
    fn build(self, id: &str) -> Result<LieAlgebra, LieError> {
        let trip: Vec<_> = self
            .structure_constants
            .iter()
            .map(|&(i, j, k, re, im)| (i, j, k, C64::new(re, im)))
            .collect();
        let rep = match self.matrix_rep {
            None => None,
            Some(ms) => {
                let mut out = Vec::new();
                for m in ms {
                    let r = m.len();
                    if m.iter().any(|row| row.len() != r) {
                        return Err(LieError::Parse("matrix_rep entries must be square".into()));
                    }
                    let flat: Vec<C64> = m.iter().flatten().map(|&(re, im)| C64::new(re, im)).collect();
                    out.push(CMat::from_row_slice(r, r, &flat));
                }
                Some(out)
            }
        };
        LieAlgebra::from_triplets(id, self.dim, &trip, self.nilpotency_order, rep, self.names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn small_dimension_series_matches_direct_taylor_sums() {
        let mut state = 7u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for g in [LieAlgebra::sl2c(), LieAlgebra::heisenberg3(), LieAlgebra::abelian(2)] {
            let d = g.dim();
            for scale in [0.05, 0.5, 1.5] {
                let w: Vec<C64> = (0..d).map(|_| C64::new(rnd(), rnd()) * scale).collect();
                let mut s = SeriesScratch::new(d);
                g.exp_and_dexp(&w, SeriesConfig { truncation: 40, tolerance: 1e-12 }, &mut s).unwrap();
                let p = g.ad_matrix(&AlgebraElement::new(w)).unwrap();
                let (mut e, mut f, mut pw) = (CMat::identity(d, d), CMat::identity(d, d), CMat::identity(d, d));
                let mut fact = 1.0;
                for m in 1..60 {
                    pw = &pw * &p;
                    fact *= m as f64;
                    e += &pw * c(1.0 / fact);
                    f += &pw * c(1.0 / (fact * (m + 1) as f64));
                }
                assert!(close(&CMat::from_row_slice(d, d, &s.e), &e, 1e-12), "{} e", g.id());
                assert!(close(&CMat::from_row_slice(d, d, &s.f), &f, 1e-12), "{} f", g.id());
            }
        }
    }

    #[test]
    fn abelian_bracket_is_zero() {
        let g = LieAlgebra::abelian(1);
        let one = AlgebraElement::new(vec![c(1.0)]);
        assert_eq!(g.bracket(&one, &one).unwrap().coeffs, vec![c(0.0)]);
        assert!(g.ad_matrix(&one).unwrap().iter().all(|v| *v == ZERO));
    }

    #[test]
    fn heisenberg_brackets() {
        let g = LieAlgebra::heisenberg3();
        let x = AlgebraElement::basis(3, 0);
        let y = AlgebraElement::basis(3, 1);
        assert_eq!(g.bracket(&x, &y).unwrap(), AlgebraElement::basis(3, 2));
        assert_eq!(g.bracket(&y, &x).unwrap(), AlgebraElement::basis(3, 2).scale(c(-1.0)));
        let ad = g.ad_matrix(&x).unwrap();
        // Y -> Z, X -> 0, Z -> 0
        assert_eq!(ad[(2, 1)], ONE);
        assert_eq!(ad.iter().filter(|v| **v != ZERO).count(), 1);
    }

    #[test]
    fn sl2_bracket_matches_matrix_commutator() {
        let g = LieAlgebra::sl2c();
        let e = AlgebraElement::basis(3, 1);
        let f = AlgebraElement::basis(3, 2);
        let ef = g.bracket(&e, &f).unwrap();
        assert_eq!(ef, AlgebraElement::basis(3, 0));
        let rep = g.matrix_rep().unwrap();
        let comm = &rep[1] * &rep[2] - &rep[2] * &rep[1];
        assert!(close(&g.rep(&ef.coeffs).unwrap(), &comm, 0.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = LieAlgebra::heisenberg3();
        let bad = AlgebraElement::zero(2);
        assert!(matches!(
            g.bracket(&bad, &AlgebraElement::zero(3)),
            Err(LieError::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn ad_exp_examples() {
        let cfg = SeriesConfig::default();
        let g = LieAlgebra::heisenberg3();
        let id = g.ad_exp(&AlgebraElement::zero(3), cfg).unwrap();
        assert!(close(&id, &CMat::identity(3, 3), 0.0));
        let m = g.ad_exp(&AlgebraElement::basis(3, 0), SeriesConfig { truncation: 2, tolerance: 1e-12 }).unwrap();
        // Y -> Y + Z
        let y = nalgebra::DVector::from_vec(vec![ZERO, ONE, ZERO]);
        let img = &m * y;
        assert_eq!(img.as_slice(), &[ZERO, ONE, ONE]);
    }

    #[test]
    fn ad_exp_matches_conjugation_on_sl2() {
        let g = LieAlgebra::sl2c();
        let u = AlgebraElement::new(vec![c(0.3), ZERO, ZERO]);
        let ad = g.ad_exp(&u, SeriesConfig::default()).unwrap();
        let s = g.exp_rep(&u).unwrap();
        let sinv = s.clone().try_inverse().unwrap();
        for j in 0..3 {
            let v = AlgebraElement::basis(3, j);
            let conj = &s * g.rep(&v.coeffs).unwrap() * &sinv;
            let (coords, resid) = g.coords_of_matrix(&conj).unwrap();
            assert!(resid < 1e-12);
            for k in 0..3 {
                assert!((coords.coeffs[k] - ad[(k, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dexp_factor_examples() {
        let cfg = SeriesConfig::default();
        let g = LieAlgebra::heisenberg3();
        assert!(close(&g.dexp_factor(&AlgebraElement::zero(3), cfg).unwrap(), &CMat::identity(3, 3), 0.0));
        let u = AlgebraElement::new(vec![c(0.7), C64::new(-0.2, 1.1), c(3.0)]);
        let expected = CMat::identity(3, 3) - g.ad_matrix(&u).unwrap() * c(0.5);
        assert!(close(&g.dexp_factor(&u, cfg).unwrap(), &expected, 1e-15));
        let a = LieAlgebra::abelian(1);
        let d = a.dexp_factor(&AlgebraElement::new(vec![c(5.0)]), cfg).unwrap();
        assert_eq!(d[(0, 0)], ONE);
    }

    #[test]
    fn exp_rep_examples() {
        let a = LieAlgebra::abelian(1);
        let z = a.exp_rep(&AlgebraElement::zero(1)).unwrap();
        assert_eq!(z[(0, 0)], ONE);
        let m = a.exp_rep(&AlgebraElement::new(vec![C64::new(0.0, std::f64::consts::PI)])).unwrap();
        assert!((m[(0, 0)] + ONE).norm() < 1e-14);
        let h = LieAlgebra::heisenberg3();
        let u = AlgebraElement::new(vec![ONE, ONE, ZERO]);
        let r = h.rep(&u.coeffs).unwrap();
        let exact = CMat::identity(3, 3) + &r + &r * &r * c(0.5);
        assert!(close(&h.exp_rep(&u).unwrap(), &exact, 1e-15));
    }

    #[test]
    fn expm_relative_accuracy_on_large_argument() {
        // diag(10, -3) has a closed-form exponential
        let a = CMat::from_row_slice(2, 2, &[c(10.0), ZERO, ZERO, c(-3.0)]);
        let e = expm(&a);
        assert!(((e[(0, 0)].re - 10f64.exp()) / 10f64.exp()).abs() < 1e-12);
        assert!(((e[(1, 1)].re - (-3f64).exp()) / (-3f64).exp()).abs() < 1e-12);
    }

    fn jacobi_oracle(g: &LieAlgebra) -> f64 {
        let d = g.dim();
        let br = |a: &[C64], b: &[C64]| {
            let mut o = vec![ZERO; d];
            g.bracket_into(a, b, &mut o);
            o
        };
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let (ei, ej, ek) = (basis(d, i), basis(d, j), basis(d, k));
                    let (a, b, cc) = (br(&ei, &br(&ej, &ek)), br(&ej, &br(&ek, &ei)), br(&ek, &br(&ei, &ej)));
                    let s: Vec<C64> = (0..d).map(|q| a[q] + b[q] + cc[q]).collect();
                    worst = worst.max(vec_norm(&s));
                }
            }
        }
        worst
    }

    #[test]
    fn jacobi_defect_examples() {
        assert_eq!(LieAlgebra::heisenberg3().jacobi_defect(), 0.0);
        assert_eq!(LieAlgebra::abelian(4).jacobi_defect(), 0.0);
        assert!(LieAlgebra::sl2c().jacobi_defect() < 1e-14);
        assert!(LieAlgebra::gl(2).jacobi_defect() < 1e-14);
        // Rescaling [X,Y] keeps a Lie algebra.
        let scaled = LieAlgebra::heisenberg3().perturbed(0, 1, 2, c(0.1));
        assert_eq!(scaled.jacobi_defect(), jacobi_oracle(&scaled));
        assert_eq!(scaled.jacobi_defect(), 0.0);
        // [Y,Z] = 0.1 Y gives [X,[Y,Z]] = 0.1 Z with the other cyclic terms zero.
        let bad = LieAlgebra::heisenberg3().perturbed(1, 2, 1, c(0.1));
        assert!((bad.jacobi_defect() - jacobi_oracle(&bad)).abs() < 1e-15);
        assert!((bad.jacobi_defect() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn perturbing_sl2_breaks_jacobi() {
        let bad = LieAlgebra::sl2c().perturbed(1, 2, 1, c(0.1));
        assert!(bad.jacobi_defect() > 0.05);
    }

    #[test]
    fn representations_are_homomorphisms() {
        for g in [LieAlgebra::heisenberg3(), LieAlgebra::sl2c(), LieAlgebra::gl(3), LieAlgebra::abelian(2)] {
            assert!(g.rep_defect().unwrap() < 1e-14, "{}", g.id());
        }
    }

    #[test]
    fn nilpotency_checks() {
        let g = LieAlgebra::heisenberg3();
        let extra = vec![vec![C64::new(0.3, 1.0), c(-2.0), c(0.5)]];
        assert_eq!(g.nilpotency_defect(&extra), Some(0.0));
        assert_eq!(LieAlgebra::abelian(2).nilpotency_defect(&[]), Some(0.0));
    }

    #[test]
    fn tail_bound_is_enforced() {
        let g = LieAlgebra::sl2c();
        let u = AlgebraElement::new(vec![c(20.0), ZERO, ZERO]);
        assert!(matches!(g.ad_exp(&u, SeriesConfig::default()), Err(LieError::TailBound { .. })));
        let h = LieAlgebra::heisenberg3();
        assert!(matches!(
            h.ad_exp(&AlgebraElement::zero(3), SeriesConfig { truncation: 0, tolerance: 1e-10 }),
            Err(LieError::TruncationBelowNilpotency { .. })
        ));
    }

    #[test]
    fn names_and_files() {
        assert_eq!(LieAlgebra::by_name("abelian(3)").unwrap().dim(), 3);
        assert_eq!(LieAlgebra::by_name("gl(2)").unwrap().dim(), 4);
        assert_eq!(LieAlgebra::by_name("sl2C").unwrap().names()[1], "E");
        assert!(LieAlgebra::by_name("so(3)").is_err());
        let text = r#"
dim = 3
structure_constants = [[0, 1, 2, 1.0, 0.0]]
nilpotency_order = 2
names = ["X", "Y", "Z"]
matrix_rep = [
  [[[0,0],[1,0],[0,0]], [[0,0],[0,0],[0,0]], [[0,0],[0,0],[0,0]]],
  [[[0,0],[0,0],[0,0]], [[0,0],[0,0],[1,0]], [[0,0],[0,0],[0,0]]],
  [[[0,0],[0,0],[1,0]], [[0,0],[0,0],[0,0]], [[0,0],[0,0],[0,0]]],
]
"#;
        let g = LieAlgebra::from_text("h", text).unwrap();
        let h = LieAlgebra::heisenberg3();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(g.structure_constant(i, j, k), h.structure_constant(i, j, k));
                }
            }
        }
        assert_eq!(g.rep_defect(), Some(0.0));
        let json = r#"{"dim": 2, "structure_constants": [[0, 1, 1, 1.0, 0.0]]}"#;
        let aff = LieAlgebra::from_text("aff", json).unwrap();
        assert_eq!(aff.structure_constant(1, 0, 1), c(-1.0));
        assert!(LieAlgebra::from_text("bad", "dim = 2\nstructure_constants = [[0, 0, 1, 1.0, 0.0]]").is_err());
    }

    #[test]
    fn dexp_derivative_matches_finite_difference() {
        let g = LieAlgebra::sl2c();
        let cfg = SeriesConfig::default();
        let u = vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.4), c(0.25)];
        let e = vec![c(0.1), C64::new(0.0, -0.3), c(0.2)];
        let gv = vec![c(1.0), C64::new(0.5, 0.5), c(-0.7)];
        let mut out = vec![ZERO; 3];
        g.dexp_derivative_apply(&u, &e, &gv, cfg, &mut out).unwrap();
        let s = 1e-6;
        let shift = |t: f64| {
            let w: Vec<C64> = u.iter().zip(&e).map(|(a, b)| a + b * t).collect();
            let m = g.dexp_factor(&AlgebraElement::new(w), cfg).unwrap();
            m * nalgebra::DVector::from_vec(gv.clone())
        };
        let fd = (shift(s) - shift(-s)) / C64::new(2.0 * s, 0.0);
        for k in 0..3 {
            assert!((fd[k] - out[k]).norm() < 1e-8);
        }
    }
}
