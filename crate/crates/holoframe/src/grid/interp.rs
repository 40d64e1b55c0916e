//! Interpolation of lattice data at off-lattice points: tensor cubic Lagrange
//! where a full 4x4 patch exists, bilinear otherwise, and bilinear extrapolation
//! from a nearby complete cell as a last resort near the rim.

use num_complex::Complex64 as C64;

use super::{GridDomain, GridError, Layout, Plane, Set};

fn cubic_weights(t: f64) -> [f64; 4] {
    // nodes at -1, 0, 1, 2
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Interpolation weights over the elements of set `s` in one plane.
pub fn plane_weights(plane: &Plane, s: Set, h: f64, x: f64, y: f64) -> Option<Vec<(usize, f64)>> {
    let fx = x / h;
    let fy = y / h;
    let i0 = fx.floor() as i32;
    let j0 = fy.floor() as i32;
    let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
    if tx == 0.0 && ty == 0.0 {
        if let Some(idx) = plane.find_in(s, i0, j0) {
            return Some(vec![(idx, 1.0)]);
        }
    }
    let (wx, wy) = (cubic_weights(tx), cubic_weights(ty));
    let mut out = Vec::with_capacity(16);
    'cubic: {
        for b in 0..4 {
            for a in 0..4 {
                match plane.find_in(s, i0 - 1 + a, j0 - 1 + b) {
                    Some(idx) => out.push((idx, wx[a as usize] * wy[b as usize])),
                    None => break 'cubic,
                }
            }
        }
        return Some(out);
    }
    let bilinear = |ci: i32, cj: i32| -> Option<Vec<(usize, f64)>> {
        let (sx, sy) = (fx - ci as f64, fy - cj as f64);
        let mut w = Vec::with_capacity(4);
        for (a, b, wt) in [
            (0, 0, (1.0 - sx) * (1.0 - sy)),
            (1, 0, sx * (1.0 - sy)),
            (0, 1, (1.0 - sx) * sy),
            (1, 1, sx * sy),
        ] {
            w.push((plane.find_in(s, ci + a, cj + b)?, wt));
        }
        Some(w)
    };
    if let Some(w) = bilinear(i0, j0) {
        return Some(w);
    }
    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    for dj in -2..=2 {
        for di in -2..=2 {
            if let Some(w) = bilinear(i0 + di, j0 + dj) {
                let (cx, cy) = ((i0 + di) as f64 + 0.5, (j0 + dj) as f64 + 0.5);
                let dist = (cx - fx).hypot(cy - fy);
                if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                    best = Some((dist, w));
                }
            }
        }
    }
    best.map(|(_, w)| w)
}

/// Weights over flat node indices of layout `l` for the point `x` (real coordinates).
pub fn weights(domain: &GridDomain, l: Layout, x: [f64; 4]) -> Result<Vec<(usize, f64)>, GridError> {
    let plane = domain.plane();
    let h = domain.h();
    let fail = || GridError::Interpolation(x[..2 * domain.n()].to_vec());
    let w0 = plane_weights(plane, l[0], h, x[0], x[1]).ok_or_else(fail)?;
    if domain.n() == 1 {
        return Ok(w0);
    }
    let w1 = plane_weights(plane, l[1], h, x[2], x[3]).ok_or_else(fail)?;
    let mut out = Vec::with_capacity(w0.len() * w1.len());
    for &(b, wb) in &w1 {
        for &(a, wa) in &w0 {
            out.push((domain.join(l, [a, b]), wa * wb));
        }
    }
    Ok(out)
}

/// Interpolates d-vector data `src` on layout `l` at `x`.
pub fn interpolate(domain: &GridDomain, l: Layout, src: &[C64], d: usize, x: [f64; 4], out: &mut [C64]) -> Result<(), GridError> {
    out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
    for (idx, w) in weights(domain, l, x)? {
        for t in 0..d {
            out[t] += src[idx * d + t] * w;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_exact_for_cubics() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 16.0, 0.5).unwrap();
        let l = [Set::A, Set::A];
        let f = |x: f64, y: f64| C64::new(x * x * x - 2.0 * x * y * y + y, x * y);
        let src: Vec<C64> = (0..dom.size(l)).map(|i| {
            let c = dom.coords(l, i);
            f(c[0], c[1])
        }).collect();
        let mut out = [C64::new(0.0, 0.0)];
        for p in [[0.013, -0.4], [0.5, 0.5], [-0.31, 0.02]] {
            interpolate(&dom, l, &src, 1, [p[0], p[1], 0.0, 0.0], &mut out).unwrap();
            assert!((out[0] - f(p[0], p[1])).norm() < 1e-12);
        }
    }

    #[test]
    fn rim_points_fall_back() {
        let dom = GridDomain::new(1, 1.0, 1.0 / 8.0, 0.5).unwrap();
        let l = [Set::A, Set::A];
        let src: Vec<C64> = (0..dom.size(l)).map(|i| C64::new(dom.coords(l, i)[0], 0.0)).collect();
        let mut out = [C64::new(0.0, 0.0)];
        // near the rim the full patch is missing; linear data is still reproduced
        interpolate(&dom, l, &src, 1, [0.99, 0.05, 0.0, 0.0], &mut out).unwrap();
        assert!((out[0].re - 0.99).abs() < 1e-12);
        assert!(interpolate(&dom, l, &src, 1, [3.0, 0.0, 0.0, 0.0], &mut out).is_err());
    }

    #[test]
    fn tensor_weights_in_two_planes() {
        let dom = GridDomain::new(2, 0.25, 1.0 / 16.0, 0.5).unwrap();
        let l = [Set::I, Set::A];
        let src: Vec<C64> = (0..dom.size(l)).map(|i| {
            let c = dom.coords(l, i);
            C64::new(c[0] * c[3], c[1] - c[2])
        }).collect();
        let mut out = [C64::new(0.0, 0.0)];
        let x = [0.03, -0.02, 0.011, 0.07];
        interpolate(&dom, l, &src, 1, x, &mut out).unwrap();
        assert!((out[0] - C64::new(x[0] * x[3], x[1] - x[2])).norm() < 1e-13);
    }
}
