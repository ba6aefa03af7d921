mod common;

use approx::assert_abs_diff_eq;
use kawasaki_core::ensemble::{ConfigFunction, Measure};
use kawasaki_core::lattice::Domain;
use kawasaki_core::rates::{cooperative, speed_change, ssep};
use kawasaki_core::variational::*;
use nalgebra::DMatrix;

fn line(side: u64) -> Domain {
    Domain::cube(side, 1).unwrap()
}

#[test]
fn ssep_matrices_are_identity() {
    for (side, dim) in [(3, 1), (5, 1), (3, 2)] {
        let d = Domain::cube(side, dim).unwrap();
        for rho in [0.2, 0.5, 0.7] {
            let r = diffusion_matrices(rho, &d, &ssep()).unwrap();
            let id = DMatrix::<f64>::identity(dim, dim);
            assert!((r.dbar.unwrap() - &id).abs().max() < 1e-10);
            assert!((r.dbar_star.unwrap() - &id).abs().max() < 1e-10);
        }
    }
}

#[test]
fn ssep_minimizer_is_affine() {
    let d = line(5);
    let r = solve_nu(0.3, &d, &[1.0], &ssep()).unwrap();
    assert_abs_diff_eq!(r.value, 0.5, epsilon = 1e-10);
    let plus = r.minimizer.space().sites().to_vec();
    let l = ConfigFunction::affine(r.minimizer.space(), &[1.0], &plus).unwrap();
    assert!(r.minimizer.sub(&l).unwrap().sup_norm() < 1e-9);
}

#[test]
fn nu_matches_dense_oracle() {
    for (side, rho, a) in [(3, 0.5, 0.5), (5, 0.5, 0.5), (5, 0.3, 1.0), (3, 0.8, 2.0)] {
        let sc = |x: i32, o: &dyn Fn(i32) -> bool| common::speed_change_rate(a, x, o);
        let got = solve_nu(rho, &line(side), &[1.0], &speed_change(a).unwrap()).unwrap().value;
        assert_abs_diff_eq!(got, common::nu_dense(rho, side as i32, 1.0, &sc), epsilon = 1e-9);
        let co = |x: i32, o: &dyn Fn(i32) -> bool| common::cooperative_rate(a, x, o);
        let got = solve_nu(rho, &line(side), &[1.0], &cooperative(a).unwrap()).unwrap().value;
        assert_abs_diff_eq!(got, common::nu_dense(rho, side as i32, 1.0, &co), epsilon = 1e-9);
    }
}

#[test]
fn nu_star_matches_dense_oracle() {
    for (side, rho, a) in [(3, 0.5, 0.5), (5, 0.5, 0.5), (3, 0.25, 1.0)] {
        let sc = |x: i32, o: &dyn Fn(i32) -> bool| common::speed_change_rate(a, x, o);
        let dual = solve_nu_star(&line(side), &speed_change(a).unwrap()).unwrap();
        let want = common::nu_star_dense(rho, side as i32, 1.0, &sc, false);
        assert_abs_diff_eq!(dual.nu_star(rho, &[1.0]).unwrap(), want, epsilon = 1e-9);
        let co = |x: i32, o: &dyn Fn(i32) -> bool| common::cooperative_rate(a, x, o);
        let dual = solve_nu_star(&line(side), &cooperative(a).unwrap()).unwrap();
        let want = common::nu_star_dense(rho, side as i32, 1.0, &co, false);
        assert_abs_diff_eq!(dual.nu_star(rho, &[1.0]).unwrap(), want, epsilon = 1e-9);
    }
    let one = |_: i32, _: &dyn Fn(i32) -> bool| 1.0;
    let dual = solve_nu_star(&line(3), &ssep()).unwrap();
    assert_abs_diff_eq!(dual.nu_star(0.6, &[1.0]).unwrap(), common::nu_star_dense(0.6, 3, 1.0, &one, true), epsilon = 1e-9);
}

/// The additive speed-change current telescopes, so ℓ_p is optimal and ν sits
/// exactly at the value of the affine trial function.
#[test]
fn speed_change_is_gradient() {
    for (a, rho, side) in [(0.5, 0.5, 5), (1.0, 0.3, 9), (2.0, 0.8, 5)] {
        let nu = solve_nu(rho, &line(side), &[1.0], &speed_change(a).unwrap()).unwrap().value;
        assert_abs_diff_eq!(nu, 0.5 * (1.0 + 2.0 * a * rho), epsilon = 1e-10);
    }
}

/// For the cooperative law the corrector strictly lowers the energy below the
/// affine value ½⟨c⟩ = ½(1 + aρ²). On Λ_5 the interior is one site and every
/// competitor is reflection symmetric, so the gap only opens from Λ_7 on.
#[test]
fn cooperative_is_non_gradient() {
    let nu5 = solve_nu(0.5, &line(5), &[1.0], &cooperative(0.5).unwrap()).unwrap().value;
    assert_abs_diff_eq!(nu5, 0.5625, epsilon = 1e-10);
    for (a, rho, side) in [(0.5, 0.5, 7), (1.0, 0.3, 7), (2.0, 0.6, 9)] {
        let nu = solve_nu(rho, &line(side), &[1.0], &cooperative(a).unwrap()).unwrap().value;
        let affine = 0.5 * (1.0 + a * rho * rho);
        assert!(nu < affine - 1e-6, "{nu} vs {affine}");
    }
}

#[test]
fn speed_change_examples() {
    let model = speed_change(0.5).unwrap();
    let d = line(5);
    let nu = solve_nu(0.5, &d, &[1.0], &model).unwrap().value;
    assert!(nu <= 0.75 + 1e-12, "{nu}");
    let nus = solve_nu_star(&d, &model).unwrap().nu_star(0.5, &[1.0]).unwrap();
    assert!((0.25..=0.5).contains(&nus));
    let r = diffusion_matrices(0.5, &d, &model).unwrap();
    let (db, ds) = (r.dbar.unwrap()[(0, 0)], r.dbar_star.unwrap()[(0, 0)]);
    assert!(1.0 - 1e-12 <= ds && ds <= db && db <= 2.0 + 1e-12, "{ds} {db}");
}

#[test]
fn primal_first_order_condition() {
    let model = speed_change(1.0).unwrap();
    let p = solve_primal(0.4, &line(5), &model).unwrap();
    assert!(p.first_order_residual(&[1.0]).unwrap() < 1e-9);
    let phi = p.corrector(&[1.0]);
    assert!(Measure::bernoulli(&p.space, 0.4).unwrap().expect(&phi).unwrap().abs() < 1e-12);
}

#[test]
fn master_identities() {
    let model = speed_change(0.5).unwrap();
    let d = line(5);
    let primal = solve_primal(0.35, &d, &model).unwrap();
    let dual = solve_nu_star(&d, &model).unwrap();
    let m = Master::new(&primal, &dual).unwrap();
    for (p, q) in [(0.7, 1.3), (1.0, 0.0), (-0.4, 0.9)] {
        let r = m.report(&[p], &[q]).unwrap();
        assert!(r.j >= -1e-12);
        assert_abs_diff_eq!(r.j, r.j_quadratic, epsilon = 1e-9);
        assert_abs_diff_eq!(r.slope[0], r.slope_expected[0], epsilon = 1e-9);
    }
    let ds = dual.dbar_star(0.35).unwrap()[(0, 0)];
    let r = m.report(&[1.0], &[ds]).unwrap();
    assert_abs_diff_eq!(r.j, 0.5 * (primal.dbar[(0, 0)] - ds), epsilon = 1e-10);
}

#[test]
fn ssep_master() {
    let d = line(3);
    let r = master_j(0.4, &d, &[0.3], &[1.1], &ssep()).unwrap();
    assert_abs_diff_eq!(r.j, 0.5 * 0.8f64.powi(2), epsilon = 1e-10);
}

#[test]
fn canonical_ssep_and_clt_identity() {
    let d = line(3);
    let sec = CanonicalSector::new(&d, 1, &ssep(), &|_| Some(false)).unwrap();
    let rep = sec.matrices().unwrap();
    assert_abs_diff_eq!(rep.dhat.unwrap()[(0, 0)], 1.0, epsilon = 1e-10);
    assert_abs_diff_eq!(rep.dhat_star.clone().unwrap()[(0, 0)], 1.0, epsilon = 1e-10);
    let sf = sec.special_functions(&[]).unwrap();
    let delta = sec.clt_variance(&sf.a[0], &sf.a[0]).unwrap();
    let chi = rep.chi_hat;
    assert_abs_diff_eq!(delta / 3.0, chi / rep.dhat_star.unwrap()[(0, 0)], epsilon = 1e-12);
}

#[test]
fn canonical_clt_identity_speed_change() {
    let model = speed_change(0.5).unwrap();
    let d = line(7);
    for m in [2, 3, 5] {
        let sec = CanonicalSector::new(&d, m, &model, &|s| Some(s[0] % 2 == 0)).unwrap();
        let rep = sec.matrices().unwrap();
        let ds = rep.dhat_star.unwrap()[(0, 0)];
        let dh = rep.dhat.unwrap()[(0, 0)];
        assert!(1.0 - 1e-10 <= ds && ds <= dh + 1e-10 && dh <= 2.0 + 1e-10);
        let sf = sec.special_functions(&[]).unwrap();
        let delta = sec.clt_variance(&sf.a[0], &sf.a[0]).unwrap();
        assert_abs_diff_eq!(delta / 7.0, rep.chi_hat / ds, epsilon = 1e-9);
    }
}
