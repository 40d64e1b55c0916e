//! Matrix-free least squares by conjugate gradients on the normal equations (CGLS).

use num_complex::Complex64 as C64;

/// A linear map between flat complex vectors, with its conjugate transpose.
pub trait LinOp {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[C64], y: &mut [C64]);
    /// `x = A^H y`
    fn apply_adj(&self, y: &[C64], x: &mut [C64]);
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// `‖b − Ax‖ / ‖b‖`
    pub rel_residual: f64,
    /// `‖A^H(b − Ax)‖ / ‖A^H b‖`
    pub rel_normal_residual: f64,
    pub converged: bool,
    /// Relative residual after each iteration, starting with the initial guess.
    pub history: Vec<f64>,
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Minimises `‖Ax − b‖` starting from `x0`; from `x0 = 0` the limit is the minimal-norm solution.
///
/// Stops when the residual or the normal-equation residual drops below `tol` (relative).
pub fn cgls<A: LinOp + ?Sized>(a: &A, b: &[C64], x0: Option<&[C64]>, tol: f64, max_iters: usize) -> CgOutcome {
    let zero = C64::new(0.0, 0.0);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![zero; a.cols()]);
    let mut r = b.to_vec();
    let mut ax = vec![zero; a.rows()];
    if x.iter().any(|v| *v != zero) {
        a.apply(&x, &mut ax);
        for (ri, axi) in r.iter_mut().zip(&ax) {
            *ri -= axi;
        }
    }
    let bnorm = norm2(b);
    let mut atb = vec![zero; a.cols()];
    a.apply_adj(b, &mut atb);
    let atb_norm = norm2(&atb);
    let mut s = vec![zero; a.cols()];
    a.apply_adj(&r, &mut s);
    let mut p = s.clone();
    let mut gamma: f64 = s.iter().map(|c| c.norm_sqr()).sum();
    let mut q = vec![zero; a.rows()];
    let status = |r: &[C64], gamma: f64| {
        let rel = if bnorm > 0.0 { norm2(r) / bnorm } else { norm2(r) };
        let reln = if atb_norm > 0.0 { gamma.sqrt() / atb_norm } else { gamma.sqrt() };
        (rel, reln)
    };
    let (mut rel, mut reln) = status(&r, gamma);
    if bnorm == 0.0 && x0.is_none() {
        return CgOutcome { x, iterations: 0, rel_residual: 0.0, rel_normal_residual: 0.0, converged: true, history: vec![0.0] };
    }
    let mut history = vec![rel];
    let mut it = 0;
    while it < max_iters && rel > tol && reln > tol {
        a.apply(&p, &mut q);
        let qq: f64 = q.iter().map(|c| c.norm_sqr()).sum();
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += pi * alpha;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= qi * alpha;
        }
        a.apply_adj(&r, &mut s);
        let gnew: f64 = s.iter().map(|c| c.norm_sqr()).sum();
        let beta = gnew / gamma;
        gamma = gnew;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + *pi * beta;
        }
        it += 1;
        (rel, reln) = status(&r, gamma);
        history.push(rel);
    }
    CgOutcome { x, iterations: it, rel_residual: rel, rel_normal_residual: reln, converged: rel <= tol || reln <= tol, history }
}
