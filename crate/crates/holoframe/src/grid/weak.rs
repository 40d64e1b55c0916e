//! Distributional test of the obstruction against compactly supported bumps.
//!
//! For a bump `ψ` times a dual vector `φ*`, the pairing `∫⟨α∧∂̄φ⟩ − ½∫⟨[α∧α]∧φ⟩`
//! equals `∫⟨φ*, f(α)⟩ψ` after integration by parts. On the lattice the same
//! identity holds exactly when the adjoint difference stencil stands in for the
//! derivative of the bump, so the residual is evaluated as the lattice sum of
//! `ψ⟨φ*, f_h(α)⟩` with `ψ` normalised to unit discrete mass.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{ops, GForm, GridDomain, GridError, Set};

/// Radial profile of the test bump, as a function of `t = |x − c| / radius`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    /// `exp(1 − 1/(1 − t²))` for `t < 1`.
    Bump,
}

impl Profile {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Profile::Bump => {
                if t >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - t * t)).exp()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestForm {
    pub center: [f64; 4],
    pub radius: f64,
    pub profile: Profile,
    /// Coordinates of `φ*` in the dual basis.
    pub dual: Vec<C64>,
}

/// Eight bump centres on a coarse sub-lattice, each paired with every dual basis vector.
pub fn default_test_family(domain: &GridDomain, dim: usize) -> Vec<TestForm> {
    let h = domain.h();
    let safe = (domain.r() - h).max(0.0);
    let radius = (0.3 * safe).max(1.5 * h).min(safe.max(1.5 * h));
    let s = ((0.5 * (safe - radius).max(0.0)) / h).floor() * h;
    let offs = [[0.0, 0.0], [s, 0.0], [0.0, s], [-s, 0.0], [0.0, -s]];
    let pairs: [(usize, usize); 8] = [(0, 0), (1, 0), (0, 1), (3, 0), (0, 3), (1, 1), (3, 4), (4, 3)];
    let mut out = Vec::new();
    for (a, b) in pairs {
        let center = if domain.n() == 2 {
            [offs[a][0], offs[a][1], offs[b][0], offs[b][1]]
        } else {
            [offs[(a + b) % 5][0], offs[(a + b) % 5][1], 0.0, 0.0]
        };
        for k in 0..dim {
            let mut dual = vec![C64::new(0.0, 0.0); dim];
            dual[k] = C64::new(1.0, 0.0);
            out.push(TestForm { center, radius, profile: Profile::Bump, dual });
        }
    }
    out
}

/// Lattice points inside the support of `t`, with bump weights.
fn support(domain: &GridDomain, t: &TestForm) -> Result<Vec<(usize, f64)>, GridError> {
    let h = domain.h();
    let n = domain.n();
    let dims = 2 * n;
    let mut lo = [0i32; 4];
    let mut hi = [0i32; 4];
    for k in 0..dims {
        lo[k] = ((t.center[k] - t.radius) / h).floor() as i32;
        hi[k] = ((t.center[k] + t.radius) / h).ceil() as i32;
    }
    let l = [Set::I, Set::I];
    let mut pts = Vec::new();
    let mut p = lo;
    loop {
        let mut r2 = 0.0;
        for k in 0..dims {
            let x = p[k] as f64 * h - t.center[k];
            r2 += x * x;
        }
        let tt = r2.sqrt() / t.radius;
        if tt < 1.0 {
            let w = t.profile.eval(tt);
            if w > 0.0 {
                match domain.find(l, p) {
                    Some(idx) => pts.push((idx, w)),
                    None => return Err(GridError::Support(format!("lattice point {p:?} outside the interior"))),
                }
            }
        }
        let mut k = 0;
        loop {
            if k == dims {
                return Ok(pts);
            }
            p[k] += 1;
            if p[k] <= hi[k] {
                break;
            }
            p[k] = lo[k];
            k += 1;
        }
    }
}

/// Max over the family of `|∫⟨φ*, f(α)⟩ψ|` with unit-mass bumps.
///
/// Returns 0 for n = 1, where every form is integrable.
pub fn weak_obstruction_residual(alpha: &GForm, tests: &[TestForm]) -> Result<f64, GridError> {
    if alpha.degree() != 1 {
        return Err(GridError::Mismatch("weak residual expects a (0,1)-form".into()));
    }
    if tests.is_empty() {
        return Err(GridError::EmptyTests);
    }
    let domain = alpha.domain();
    if domain.n() == 1 {
        return Ok(0.0);
    }
    let d = alpha.dim();
    let f = ops::obstruction(alpha)?;
    let mut worst = 0.0f64;
    for t in tests {
        if t.dual.len() != d {
            return Err(GridError::Mismatch("dual vector length differs from the algebra dimension".into()));
        }
        let pts = support(domain, t)?;
        if pts.is_empty() {
            return Err(GridError::Support("bump contains no lattice points".into()));
        }
        let mass: f64 = pts.iter().map(|(_, w)| w).sum();
        let mut acc = C64::new(0.0, 0.0);
        for (idx, w) in pts {
            let v = f.value(0, idx);
            let pairing: C64 = t.dual.iter().zip(v).map(|(a, b)| a * b).sum();
            acc += pairing * w;
        }
        worst = worst.max((acc / mass).norm());
    }
    Ok(worst)
}

/// Integrability threshold `factor * h² * ‖α‖_sup`.
pub fn integrability_gate(alpha: &GForm, factor: f64) -> f64 {
    factor * alpha.domain().h().powi(2) * alpha.sup_norm()
}
