//! Structural invariants checked on randomly drawn inputs.

mod common;

use kawasaki_core::dynamics::{Torus, TorusState};
use kawasaki_core::ensemble::{swap_bits, ConfigFunction, Measure, StateSpace};
use kawasaki_core::lattice::{Bond, Domain};
use kawasaki_core::lifting::{alpha_of, PoissonMeasure};
use kawasaki_core::rates::{bond_tables, cooperative, sample_disorder, speed_change, ssep, validate, Outside, RateModel};
use kawasaki_core::variational::{master_j, solve_primal, theta, theta_two_sided};
use proptest::prelude::*;

fn model(kind: u8, a: f64) -> RateModel {
    match kind % 3 {
        0 => ssep(),
        1 => speed_change(a).unwrap(),
        _ => cooperative(a).unwrap(),
    }
}

fn interval(side: u64) -> std::sync::Arc<StateSpace> {
    StateSpace::new(Domain::cube(side, 1).unwrap().sites().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cube_partitions_into_interior_and_boundary(side in 1u64..8, dim in 1usize..3) {
        let d = Domain::cube(side, dim).unwrap();
        let st = d.structure();
        prop_assert_eq!(st.interior.len() + st.boundary.len(), d.len());
        let h = (side as i32 - 1) / 2;
        for s in d.sites() {
            prop_assert!(s.iter().all(|c| 2 * c.abs() < side as i32 && c.abs() <= h));
            prop_assert!(st.interior.contains(s) != st.boundary.contains(s));
        }
        for b in &st.enlarged_bonds.bonds {
            prop_assert!(d.contains(&b.base));
        }
        prop_assert_eq!(st.enlarged_bonds.len(), d.len() * dim);
    }

    #[test]
    fn exchange_is_an_involution(cfg in 0u64..1 << 12, i in 0usize..12, j in 0usize..12) {
        let once = swap_bits(cfg, i, j);
        prop_assert_eq!(swap_bits(once, i, j), cfg);
        prop_assert_eq!(once.count_ones(), cfg.count_ones());
    }

    #[test]
    fn kawasaki_difference_squares_to_minus_two(side in 3u64..8, seed in any::<u64>(), at in 0usize..6) {
        let space = interval(side);
        let f = common::random_function(&space, seed);
        let sites = space.sites();
        let k = at % (sites.len() - 1);
        let b = Bond::new(sites[k].clone(), 0);
        let once = f.kawasaki(&b).unwrap();
        let twice = once.kawasaki(&b).unwrap();
        for (u, v) in twice.values().iter().zip(once.values()) {
            prop_assert!((u + 2.0 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn exchange_is_self_adjoint(side in 3u64..8, s1 in any::<u64>(), s2 in any::<u64>(), rho in 0.05f64..0.95, at in 0usize..6) {
        // ⟨g π_b f⟩_ρ = ⟨f π_b g⟩_ρ because η ↦ η^b preserves P_ρ.
        let space = interval(side);
        let f = common::random_function(&space, s1);
        let g = common::random_function(&space, s2);
        let sites = space.sites();
        let b = Bond::new(sites[at % (sites.len() - 1)].clone(), 0);
        let mu = Measure::bernoulli(&space, rho).unwrap();
        let lhs = mu.expect(&g.mul(&f.kawasaki(&b).unwrap()).unwrap()).unwrap();
        let rhs = mu.expect(&f.mul(&g.kawasaki(&b).unwrap()).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn measures_are_probabilities(side in 1u64..8, rho in 0.0f64..=1.0, count in 0usize..8) {
        let space = interval(side);
        let mu = Measure::bernoulli(&space, rho).unwrap();
        prop_assert!(mu.weights().iter().all(|w| *w >= 0.0));
        prop_assert!((mu.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let count = count.min(space.len());
        let nu = Measure::canonical(&space, space.sites(), count, &|_| None).unwrap();
        let members: Vec<f64> = nu.support().map(|(c, w)| { assert_eq!(c.count_ones() as usize, count); w }).collect();
        prop_assert!(members.iter().all(|w| (w - members[0]).abs() < 1e-15));
        prop_assert!((members.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rates_are_elliptic_and_reversible(kind in 0u8..3, a in 0.0f64..3.0) {
        let m = model(kind, a);
        let report = validate(&m, 1);
        prop_assert!(report.pass, "{:?}", report.violation);
        prop_assert!(report.observed_min >= 1.0 - 1e-12 && report.observed_max <= m.lambda() + 1e-12);
    }

    #[test]
    fn disordered_rates_stay_in_bounds(a_max in 0.0f64..2.0, seed in any::<u64>()) {
        let m = sample_disorder(a_max, seed).unwrap();
        prop_assert!(validate(&m, 1).pass);
        prop_assert!(m.lambda() <= 1.0 + 2.0 * a_max + 1e-12);
    }

    #[test]
    fn generator_is_reversible(kind in 0u8..3, a in 0.0f64..2.0, rho in 0.05f64..0.95, s1 in any::<u64>(), s2 in any::<u64>()) {
        // ⟨g L f⟩_ρ = ⟨f L g⟩_ρ on a segment large enough to hold every window.
        let m = model(kind, a);
        let space = interval(9);
        let inner: Vec<Bond> = (-2..2).map(|x| Bond::new(vec![x], 0)).collect();
        let f = common::random_function(&space, s1);
        let g = common::random_function(&space, s2);
        let mu = Measure::bernoulli(&space, rho).unwrap();
        let lf = kawasaki_core::ensemble::generator(&f, &inner, &m).unwrap();
        let lg = kawasaki_core::ensemble::generator(&g, &inner, &m).unwrap();
        let lhs = mu.expect(&g.mul(&lf).unwrap()).unwrap();
        let rhs = mu.expect(&f.mul(&lg).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
        // Bond rates do not see the exchanged pair.
        let tables = bond_tables(&m, &inner, &|s| space.position(s), &Outside::Forbid).unwrap();
        for t in &tables {
            for c in 0..space.size() as u64 {
                prop_assert!((t.rate(c) - t.rate(swap_bits(c, t.x, t.y))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bias_factors_are_at_least_one(r1 in 0.01f64..0.99, r2 in 0.01f64..0.99) {
        prop_assert!(theta(r1, r2) >= 1.0);
        prop_assert_eq!(theta_two_sided(r1, r2), theta_two_sided(r2, r1));
    }

    #[test]
    fn poisson_truncation_is_normalized(rho in 0.01f64..0.95, k in 1u32..30) {
        let p = PoissonMeasure::new(alpha_of(rho), k).unwrap();
        prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.weights.iter().all(|w| *w >= 0.0));
        // P(η̃ ≥ 1) under the untruncated law is ρ.
        prop_assert!(((1.0 - (-alpha_of(rho)).exp()) - rho).abs() < 1e-12);
    }

    #[test]
    fn dynamics_conserves_mass(kind in 0u8..3, a in 0.0f64..2.0, n in 5usize..12, seed in any::<u64>(), rho in 0.1f64..0.9) {
        let torus = Torus::new(n, 1, &model(kind, a)).unwrap();
        let mut s = TorusState::sample_initial(&torus, &|_| rho, seed, 0).unwrap();
        let count = s.particle_count();
        let mut last = s.time();
        for _ in 0..5 {
            s.advance(0.002).unwrap();
            prop_assert_eq!(s.particle_count(), count);
            prop_assert!(s.time() >= last);
            last = s.time();
            let e = s.empirical();
            prop_assert!((e.total_mass() - count as f64 / n as f64).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn corrector_is_centred_and_linear(kind in 0u8..3, a in 0.0f64..2.0, rho in 0.05f64..0.95, x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let m = model(kind, a);
        let d = Domain::cube(3, 2).unwrap();
        let s = solve_primal(rho, &d, &m).unwrap();
        let mu = Measure::bernoulli(&s.space, rho).unwrap();
        let phi = s.corrector(&[x, y]);
        prop_assert!(mu.expect(&phi).unwrap().abs() < 1e-9);
        let sum = s.corrector(&[1.0, 0.0]).scale(x).add(&s.corrector(&[0.0, 1.0]).scale(y)).unwrap();
        for (u, v) in phi.values().iter().zip(sum.values()) {
            prop_assert!((u - v).abs() < 1e-9);
        }
        let measurable = s.space.mask(&d.structure().interior).unwrap();
        prop_assert!(phi.is_measurable(measurable));
        // Id ≤ D̄ ≤ λ Id, symmetric.
        let sym = (&s.dbar - s.dbar.transpose()).abs().max();
        prop_assert!(sym < 1e-9);
        let eig = s.dbar.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|e| *e >= 1.0 - 1e-8 && *e <= m.lambda() + 1e-8));
    }

    #[test]
    fn master_quantity_is_nonnegative(kind in 0u8..3, a in 0.0f64..2.0, rho in 0.1f64..0.9, p in -1.0f64..1.0, q in -1.0f64..1.0) {
        let r = master_j(rho, &Domain::cube(5, 1).unwrap(), &[p], &[q], &model(kind, a)).unwrap();
        prop_assert!(r.j >= -1e-9);
        prop_assert!((r.j - (r.nu + r.nu_star - p * q)).abs() < 1e-12);
        prop_assert!((r.j - r.j_quadratic).abs() < 1e-7 * (1.0 + r.j.abs()));
    }
}

#[test]
fn config_function_round_trips_values() {
    let space = interval(4);
    let f = ConfigFunction::from_fn(&space, |c| c as f64);
    for c in 0..space.size() as u64 {
        assert_eq!(f.value(c), c as f64);
    }
}
