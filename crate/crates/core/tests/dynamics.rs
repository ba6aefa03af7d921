use kawasaki_core::dynamics::*;
use kawasaki_core::rates::{cooperative, speed_change, ssep};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::PI;

fn sine(v: &[f64]) -> f64 {
    0.5 + 0.25 * (2.0 * PI * v[0]).sin()
}

#[test]
fn zero_step_and_full_state_do_not_move() {
    let torus = Torus::new(16, 1, &speed_change(0.5).unwrap()).unwrap();
    let mut s = TorusState::sample_initial(&torus, &sine, 3, 0).unwrap();
    let before = s.occupation().to_vec();
    s.advance(0.0).unwrap();
    assert_eq!(s.occupation(), &before[..]);
    let mut full = TorusState::from_occupation(&torus, vec![true; 16], 1, 0).unwrap();
    full.advance(1.0).unwrap();
    full.advance_exact(1.0).unwrap();
    assert!(full.occupation().iter().all(|b| *b));
    assert_eq!(full.time(), 2.0);
}

#[test]
fn mass_is_conserved() {
    for model in [ssep(), speed_change(1.0).unwrap(), cooperative(2.0).unwrap()] {
        let torus = Torus::new(12, 2, &model).unwrap();
        let mut s = TorusState::sample_initial(&torus, &|v| 0.3 + 0.2 * v[1], 9, 1).unwrap();
        let m = s.particle_count();
        for _ in 0..5 {
            s.advance(0.01).unwrap();
            assert_eq!(s.occupation().iter().filter(|b| **b).count(), m);
            s.advance_exact(0.01).unwrap();
            assert_eq!(s.occupation().iter().filter(|b| **b).count(), m);
        }
        assert!((s.empirical().total_mass() - m as f64 / 144.0).abs() < 1e-15);
    }
}

#[test]
fn initial_occupancy_is_binomial() {
    let torus = Torus::new(64, 1, &ssep()).unwrap();
    let total: usize = (0..100)
        .map(|seed| TorusState::sample_initial(&torus, &|_| 0.5, seed, 0).unwrap().particle_count())
        .sum();
    let n = 6400.0;
    let sigma = (n * 0.25f64).sqrt();
    assert!((total as f64 - 0.5 * n).abs() < 3.0 * sigma, "{total}");
    assert!(TorusState::sample_initial(&torus, &|_| 1.0, 0, 0).is_err());
    assert!(TorusState::sample_initial(&torus, &sine, 0, 0).is_ok());
}

#[test]
fn same_seed_same_trajectory() {
    let torus = Torus::new(32, 1, &speed_change(0.5).unwrap()).unwrap();
    let run = || {
        let mut s = TorusState::sample_initial(&torus, &sine, 42, 7).unwrap();
        s.advance(0.02).unwrap();
        s.occupation().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn full_and_empty_modes() {
    let torus = Torus::new(8, 1, &ssep()).unwrap();
    let full = TorusState::from_occupation(&torus, vec![true; 8], 0, 0).unwrap().fourier_modes(4).unwrap();
    let empty = TorusState::from_occupation(&torus, vec![false; 8], 0, 0).unwrap().fourier_modes(4).unwrap();
    for k in -4i32..=4 {
        let want = if k == 0 { 1.0 } else { 0.0 };
        assert!((full.get(&[k]).unwrap() - want).norm() < 1e-14);
        assert_eq!(empty.get(&[k]).unwrap().norm(), 0.0);
    }
}

/// Both engines against the exact semigroup on a 5-site torus with a
/// range-2 rate law.
#[test]
fn engines_match_exact_semigroup() {
    let t = 0.02;
    let runs = 20_000;
    for model in [speed_change(1.0).unwrap(), cooperative(2.0).unwrap()] {
        let torus = Torus::new(5, 1, &model).unwrap();
        let start = vec![true, true, false, true, false];
        let exact = exact_transition(&torus, t).unwrap();
        let row = 0b01011;
        for exact_engine in [false, true] {
            let mut counts = vec![0usize; 32];
            for r in 0..runs {
                let mut s = TorusState::from_occupation(&torus, start.clone(), 11, r as u64).unwrap();
                if exact_engine {
                    s.advance_exact(t).unwrap();
                } else {
                    s.advance(t).unwrap();
                }
                counts[s.bits() as usize] += 1;
            }
            let tv: f64 = 0.5 * (0..32).map(|c| (counts[c] as f64 / runs as f64 - exact[(row, c)]).abs()).sum::<f64>();
            assert!(tv < 0.03, "{} exact={exact_engine}: tv {tv}", model.name());
        }
    }
}

/// Long-run occupation statistics are uniform on the particle-number sector.
#[test]
fn stationary_law_is_uniform_on_the_sector() {
    let torus = Torus::new(6, 1, &cooperative(1.0).unwrap()).unwrap();
    let mut s = TorusState::from_occupation(&torus, vec![true, true, true, false, false, false], 5, 0).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    let samples = 6000;
    s.advance(1.0).unwrap();
    for _ in 0..samples {
        s.advance(0.15).unwrap();
        *counts.entry(s.bits()).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 20);
    let expected = samples as f64 / 20.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(19.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "χ² = {chi2}, p = {p}");
}
