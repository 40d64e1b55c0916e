use std::sync::Arc;

use holoframe::dbar_solve::{dbar_solve, kmap, CanonicalSolver};
use holoframe::frame_solver::{integrability_check, newton_frame_solve, SolverConfig};
use holoframe::grid::io::{read_binary, read_csv, write_binary, write_csv};
use holoframe::grid::ops::{dbar, doubly_interior, gauge_transform, mc_pullback, obstruction, wedge_bracket};
use holoframe::grid::{GForm, GridDomain, Set};
use holoframe::holder::{holder_norm, holder_norm_where, HolderOptions, HolderSpec};
use holoframe::lie::{expm, AlgebraElement, CMat, LieAlgebra, SeriesConfig};
use holoframe::oracle::{fd_dexp_oracle, sample_form, sample_function};
use holoframe::poly::LiePoly;
use holoframe::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SERIES: SeriesConfig = SeriesConfig { truncation: 40, tolerance: 1e-12 };

fn algebras() -> Vec<LieAlgebra> {
    vec![LieAlgebra::heisenberg3(), LieAlgebra::sl2c(), LieAlgebra::gl(2)]
}

fn element(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> AlgebraElement {
    AlgebraElement::new((0..d).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale).collect())
}

fn random_form(dom: &GridDomain, g: &Arc<LieAlgebra>, q: usize, rng: &mut ChaCha8Rng) -> GForm {
    GForm::from_fn(dom, g, q, |_, _, o| {
        for v in o.iter_mut() {
            *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    })
    .unwrap()
}

fn rep_of(g: &LieAlgebra, a: &AlgebraElement) -> CMat {
    g.rep(&a.coeffs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bracket_is_antisymmetric_and_bilinear(seed in any::<u64>(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in algebras() {
            let d = g.dim();
            let (a, b, c) = (element(&mut rng, d, 1.0), element(&mut rng, d, 1.0), element(&mut rng, d, 1.0));
            let ab = g.bracket(&a, &b).unwrap();
            let ba = g.bracket(&b, &a).unwrap();
            prop_assert!(ab.add(&ba).norm() < 1e-14);
            let lhs = g.bracket(&a.scale(C64::new(s, 0.0)).add(&c.scale(C64::new(0.0, t))), &b).unwrap();
            let rhs = ab.scale(C64::new(s, 0.0)).add(&g.bracket(&c, &b).unwrap().scale(C64::new(0.0, t)));
            prop_assert!(lhs.sub(&rhs).norm() < 1e-13);
        }
    }

    #[test]
    fn jacobi_and_representation_hold_on_random_elements(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in algebras() {
            let d = g.dim();
            let (a, b, c) = (element(&mut rng, d, 1.0), element(&mut rng, d, 1.0), element(&mut rng, d, 1.0));
            let br = |x: &AlgebraElement, y: &AlgebraElement| g.bracket(x, y).unwrap();
            let j = br(&a, &br(&b, &c)).add(&br(&b, &br(&c, &a))).add(&br(&c, &br(&a, &b)));
            prop_assert!(j.norm() < 1e-13);
            let (ra, rb) = (rep_of(&g, &a), rep_of(&g, &b));
            let comm = &ra * &rb - &rb * &ra;
            prop_assert!((rep_of(&g, &br(&a, &b)) - comm).norm() < 1e-13);
        }
    }

    #[test]
    fn heisenberg_ad_is_nilpotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = LieAlgebra::heisenberg3();
        let m = g.nilpotency_order().unwrap();
        let ad = g.ad_matrix(&element(&mut rng, 3, 3.0)).unwrap();
        let mut p = CMat::identity(3, 3);
        for _ in 0..m {
            p = &p * &ad;
        }
        prop_assert!(p.norm() < 1e-12);
    }

    #[test]
    fn ad_exp_is_an_invertible_automorphism(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in algebras() {
            let d = g.dim();
            let u = element(&mut rng, d, 0.7);
            let ad = g.ad_exp(&u, SERIES).unwrap();
            let inv = g.ad_exp(&u.scale(C64::new(-1.0, 0.0)), SERIES).unwrap();
            prop_assert!((&ad * &inv - CMat::identity(d, d)).norm() < 1e-10);
            let (a, b) = (element(&mut rng, d, 1.0), element(&mut rng, d, 1.0));
            let apply = |x: &AlgebraElement| AlgebraElement::new((&ad * nalgebra::DVector::from_vec(x.coeffs.clone())).iter().copied().collect());
            let lhs = apply(&g.bracket(&a, &b).unwrap());
            let rhs = g.bracket(&apply(&a), &apply(&b)).unwrap();
            prop_assert!(lhs.sub(&rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn ad_exp_matches_conjugation_in_the_representation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in algebras() {
            let d = g.dim();
            let mut u = element(&mut rng, d, 1.0);
            let n = u.norm();
            if n > 2.0 {
                u = u.scale(C64::new(2.0 / n, 0.0));
            }
            let v = element(&mut rng, d, 1.0);
            let ad = g.ad_exp(&u, SERIES).unwrap();
            let lhs: Vec<C64> = (&ad * nalgebra::DVector::from_vec(v.coeffs.clone())).iter().copied().collect();
            let e = expm(&rep_of(&g, &u));
            let einv = expm(&rep_of(&g, &u.scale(C64::new(-1.0, 0.0))));
            let (coords, off) = g.coords_of_matrix(&(&e * rep_of(&g, &v) * &einv)).unwrap();
            prop_assert!(off < 1e-8);
            prop_assert!(AlgebraElement::new(lhs).sub(&coords).norm() < 1e-8);
        }
    }

    #[test]
    fn dexp_factor_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in algebras() {
            let d = g.dim();
            let (u, v) = (element(&mut rng, d, 1.0), element(&mut rng, d, 1.0));
            let m = g.dexp_factor(&u, SERIES).unwrap();
            let exact: Vec<C64> = (&m * nalgebra::DVector::from_vec(v.coeffs.clone())).iter().copied().collect();
            let fd = fd_dexp_oracle(&g, &u, &v, 1e-4).unwrap();
            prop_assert!(AlgebraElement::new(exact).sub(&fd).norm() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dbar_squares_to_zero_on_random_functions(seed in any::<u64>(), k in 5u32..9) {
        let dom = GridDomain::new(2, 1.0, 1.0 / k as f64, 0.5).unwrap();
        let g = Arc::new(LieAlgebra::sl2c());
        let u = random_form(&dom, &g, 0, &mut ChaCha8Rng::seed_from_u64(seed));
        let dd = dbar(&dbar(&u).unwrap()).unwrap();
        let l = [Set::I, Set::I];
        for i in (0..dom.size(l)).filter(|&i| doubly_interior(&dom, l, i)) {
            prop_assert!(dd.value(0, i).iter().all(|c| c.norm() < 1e-12));
        }
    }

    #[test]
    fn obstruction_expands_exactly_in_a_perturbation(seed in any::<u64>()) {
        let dom = GridDomain::new(2, 1.0, 1.0 / 6.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in [LieAlgebra::heisenberg3(), LieAlgebra::sl2c()] {
            let g = Arc::new(g);
            let a = random_form(&dom, &g, 1, &mut rng);
            let b = random_form(&dom, &g, 1, &mut rng);
            let lhs = obstruction(&a.add(&b).unwrap()).unwrap();
            let rhs = obstruction(&a)
                .unwrap()
                .add(&dbar(&b).unwrap())
                .unwrap()
                .add(&wedge_bracket(&a, &b).unwrap())
                .unwrap()
                .axpy(C64::new(0.5, 0.0), &wedge_bracket(&b, &b).unwrap())
                .unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() < 1e-12);
        }
    }

    #[test]
    fn gauging_back_by_minus_u_recovers_the_form(seed in any::<u64>()) {
        let h = 1.0 / 32.0;
        let dom = GridDomain::new(1, 1.0, h, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in [LieAlgebra::heisenberg3(), LieAlgebra::sl2c()] {
            let g = Arc::new(g);
            let alpha = sample_form(&dom, &g, &[LiePoly::random(&mut rng, 3, 1, 3, 4, 0.3)]).unwrap();
            let up = LiePoly::random(&mut rng, 3, 1, 3, 4, 0.3);
            let u = sample_function(&dom, &g, &up).unwrap();
            let back = gauge_transform(&gauge_transform(&alpha, &u, SERIES).unwrap(), &u.scale(C64::new(-1.0, 0.0)), SERIES).unwrap();
            prop_assert!(back.sub(&alpha).unwrap().sup_norm() < 50.0 * h * h);
        }
    }

    #[test]
    fn pullbacks_pass_the_integrability_gate(seed in any::<u64>()) {
        let dom = GridDomain::new(2, 0.25, 1.0 / 16.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(LieAlgebra::sl2c());
        let u = sample_function(&dom, &g, &LiePoly::random(&mut rng, 3, 2, 3, 5, 1.0)).unwrap();
        let alpha = mc_pullback(&u, SERIES).unwrap();
        let (weak, gate) = integrability_check(&alpha, &SolverConfig::default()).unwrap().unwrap();
        prop_assert!(weak <= gate, "weak {weak:e} gate {gate:e}");
    }

    #[test]
    fn holder_norm_is_a_seminorm_and_shrinks_on_subdomains(seed in any::<u64>(), s in -3.0f64..3.0, kappa in prop_oneof![0.1f64..0.9, 1.1f64..1.9]) {
        let dom = GridDomain::new(1, 1.0, 1.0 / 12.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(LieAlgebra::heisenberg3());
        let f = sample_function(&dom, &g, &LiePoly::random(&mut rng, 3, 1, 3, 4, 1.0)).unwrap();
        let k = sample_function(&dom, &g, &LiePoly::random(&mut rng, 3, 1, 3, 4, 1.0)).unwrap();
        let spec = HolderSpec::new(kappa).unwrap();
        let opts = HolderOptions::default();
        let nf = holder_norm(&f, &spec, &opts).unwrap().value;
        let nk = holder_norm(&k, &spec, &opts).unwrap().value;
        let sum = holder_norm(&f.add(&k).unwrap(), &spec, &opts).unwrap().value;
        prop_assert!(sum <= (nf + nk) * (1.0 + 1e-12));
        let scaled = holder_norm(&f.scale(C64::new(0.0, s)), &spec, &opts).unwrap().value;
        prop_assert!((scaled - s.abs() * nf).abs() <= 1e-12 * (1.0 + nf));
        let inner = holder_norm_where(&f, &spec, &opts, |x| x[0] * x[0] + x[1] * x[1] <= 0.25).unwrap().value;
        prop_assert!(inner <= nf * (1.0 + 1e-12));
    }

    #[test]
    fn cauchy_solve_inverts_dbar(seed in any::<u64>()) {
        let dom = GridDomain::new(1, 1.0, 1.0 / 32.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(LieAlgebra::sl2c());
        let u0 = sample_function(&dom, &g, &LiePoly::random(&mut rng, 3, 1, 3, 5, 1.0)).unwrap();
        let lambda = dbar(&u0).unwrap();
        let s = CanonicalSolver::for_domain(&dom);
        let sol = dbar_solve(&s, &lambda).unwrap();
        let mask = |_: usize, i: usize| dom.in_subdomain(lambda.layout(0), i);
        let err = holoframe::grid::ops::sup_diff_where(&dbar(&sol.u).unwrap(), &lambda, mask).unwrap();
        prop_assert!(err <= 5.0 * dom.h() * dom.h() * (1.0 + lambda.sup_norm()), "err {err:e}");
    }

    #[test]
    fn cauchy_solve_is_linear(seed in any::<u64>(), s in -2.0f64..2.0) {
        let dom = GridDomain::new(1, 1.0, 1.0 / 16.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(LieAlgebra::heisenberg3());
        let a = random_form(&dom, &g, 1, &mut rng);
        let b = random_form(&dom, &g, 1, &mut rng);
        let solver = CanonicalSolver::for_domain(&dom);
        let solve = |x: &GForm| dbar_solve(&solver, x).unwrap().u;
        let lhs = solve(&a.axpy(C64::new(s, 0.0), &b).unwrap());
        let rhs = solve(&a).axpy(C64::new(s, 0.0), &solve(&b)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() <= 1e-10 * (1.0 + rhs.sup_norm()));
    }

    #[test]
    fn converged_solves_retract_onto_lambda(seed in any::<u64>()) {
        let dom = GridDomain::new(1, 1.0, 1.0 / 24.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(LieAlgebra::sl2c());
        let lambda = sample_form(&dom, &g, &[LiePoly::random(&mut rng, 3, 1, 2, 4, 0.2)]).unwrap();
        let cfg = SolverConfig { compute_norms: false, ..SolverConfig::default() };
        let res = newton_frame_solve(&lambda, &CanonicalSolver::for_domain(&dom), &cfg).unwrap();
        prop_assert!(res.status.is_success());
        prop_assert!(res.final_residual() <= cfg.newton_tolerance);
        let r = &res.residual_history;
        prop_assert!(r.windows(2).skip(1).all(|w| w[1] < w[0]), "{r:?}");
        let mc = mc_pullback(&res.u, cfg.series()).unwrap();
        prop_assert!(mc.sub(&lambda).unwrap().sup_norm() <= cfg.newton_tolerance);
    }

    #[test]
    fn forms_round_trip_through_binary_and_csv(seed in any::<u64>(), q in 0usize..3) {
        let dom = GridDomain::new(2, 1.0, 1.0 / 4.0, 0.5).unwrap();
        let g = Arc::new(LieAlgebra::heisenberg3());
        let f = random_form(&dom, &g, q, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        let back = read_binary(&mut buf.as_slice(), Some(&g)).unwrap();
        prop_assert_eq!(back.flat(), f.flat());
        let mut csv = Vec::new();
        write_csv(&f, &mut csv).unwrap();
        let back = read_csv(csv.as_slice(), Some(&g)).unwrap();
        prop_assert_eq!(back.flat(), f.flat());
    }
}

#[test]
fn kmap_of_zero_is_zero() {
    let dom = GridDomain::new(2, 0.25, 1.0 / 16.0, 0.5).unwrap();
    let g = Arc::new(LieAlgebra::sl2c());
    let zero = GForm::zeros(&dom, &g, 1).unwrap();
    assert_eq!(kmap(&CanonicalSolver::for_domain(&dom), &zero).unwrap().sup_norm(), 0.0);
}
