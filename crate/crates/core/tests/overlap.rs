mod common;

use std::f64::consts::PI;

use condensate_core::constants::HBAR;
use condensate_core::trap_spectrum::{
    enumerate_modes, overlap_zeta, OverlapProvider, QuarticRule, SpectrumTable, TrapModel,
};
use proptest::prelude::*;

fn reference_spectrum(cutoff: f64) -> SpectrumTable {
    let mut trap = TrapModel::rb87_reference();
    trap.energy_cutoff = cutoff;
    enumerate_modes(&trap).unwrap()
}

fn find(s: &SpectrumTable, q: [u32; 3]) -> usize {
    s.modes.iter().position(|m| m.quanta() == q).unwrap()
}

#[test]
fn ground_axis_value_is_gaussian_integral() {
    let s = reference_spectrum(4.0);
    let p = OverlapProvider::new(&s);
    let m = s.mass();
    for (a, w) in s.omegas().iter().enumerate() {
        let expect = (m * w / (2.0 * PI * HBAR)).sqrt();
        let got = p.axis_scale(a) * p.axis_integral(a, 0, 0, 0);
        assert!((got - expect).abs() <= 1e-14 * expect);
    }
}

#[test]
fn two_zero_two_matches_adaptive_quadrature() {
    let s = reference_spectrum(4.0);
    let p = OverlapProvider::new(&s);
    let k = find(&s, [2, 0, 0]);
    let zeta = p.zeta_quanta([2, 0, 0], [0, 0, 0], [2, 0, 0]);
    let ix = common::integrate(
        &|x: f64| common::hermite_explicit(0, x).powi(2) * common::hermite_explicit(2, x).powi(2),
        -12.0,
        12.0,
        1e-16,
    );
    let m = s.mass();
    let w = s.omegas();
    let ground = |o: f64| (m * o / (2.0 * PI * HBAR)).sqrt();
    let expect = (m * w[0] / HBAR).sqrt() * ix * ground(w[1]) * ground(w[2]);
    assert!(
        (zeta - expect).abs() <= 1e-12 * expect,
        "{zeta} vs {expect}"
    );
    // the same value through the index-addressed path
    let z2 = overlap_zeta(&p, k, k, find(&s, [0, 1, 0]));
    assert_eq!(z2, 0.0);
}

#[test]
fn odd_axis_sum_is_exact_zero() {
    let s = reference_spectrum(6.0);
    let p = OverlapProvider::new(&s);
    for k in 0..s.len().min(40) {
        for l in 0..s.len().min(40) {
            for m in 0..s.len().min(40) {
                let (a, b, c) = (
                    s.modes[k].quanta(),
                    s.modes[l].quanta(),
                    s.modes[m].quanta(),
                );
                let odd = (0..3).any(|i| (a[i] + b[i] + c[i]) % 2 == 1);
                if odd {
                    assert_eq!(p.zeta(k, l, m), 0.0);
                }
            }
        }
    }
}

/// Largest relative deviation between the standard rule and the
/// doubled-node rule over every integral of magnitude above `1e-15`, and the
/// largest absolute deviation over all of them.
fn doubled_node_deviation(n_max: usize) -> (f64, f64) {
    let r1 = QuarticRule::new(n_max);
    let r2 = QuarticRule::with_nodes(n_max, 2 * r1.node_count());
    let (mut rel, mut abs): (f64, f64) = (0.0, 0.0);
    for a in 0..=n_max {
        for b in a..=n_max {
            for c in b..=n_max {
                let (x, y) = (r1.integral(a, b, c), r2.integral(a, b, c));
                abs = abs.max((x - y).abs());
                if y.abs() > 1e-15 {
                    rel = rel.max((x - y).abs() / y.abs());
                }
            }
        }
    }
    (rel, abs)
}

#[test]
fn doubled_node_rule_agrees() {
    for n in [4, 12, 30, 60] {
        let (rel, abs) = doubled_node_deviation(n);
        assert!(rel <= 1e-13, "n_max={n}: relative {rel:e}");
        assert!(abs <= 1e-26, "n_max={n}: absolute {abs:e}");
    }
}

#[test]
fn cache_is_filled_lazily_and_symmetric() {
    let s = reference_spectrum(5.0);
    let p = OverlapProvider::new(&s);
    assert_eq!(p.cached_entries(), 0);
    let a = p.zeta(3, 7, 11);
    assert_eq!(p.cached_entries(), 1);
    for (k, l, m) in [(7, 3, 11), (11, 7, 3), (3, 11, 7)] {
        assert_eq!(p.zeta(k, l, m), a);
    }
    assert_eq!(p.cached_entries(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_formula_holds_for_every_mode(cut in 1.0f64..8.0) {
        let s = reference_spectrum(cut);
        let w = s.omegas();
        for m in &s.modes {
            let e = HBAR * (w[0] * (m.nx as f64 + 0.5) + w[1] * (m.ny as f64 + 0.5) + w[2] * (m.nz as f64 + 0.5));
            prop_assert_eq!(m.energy, e);
        }
    }

    #[test]
    fn exchange_symmetry(i in 0usize..200, j in 0usize..200, k in 0usize..200) {
        let s = reference_spectrum(6.0);
        let p = OverlapProvider::new(&s);
        let (i, j, k) = (i % s.len(), j % s.len(), k % s.len());
        let q = |x: usize| s.modes[x].quanta();
        prop_assert_eq!(p.zeta_quanta(q(i), q(j), q(k)), p.zeta_quanta(q(j), q(i), q(k)));
    }

    #[test]
    fn frequency_rescaling(sc in 0.3f64..3.0, i in 0usize..100, j in 0usize..100, k in 0usize..100) {
        let s = reference_spectrum(5.0);
        let w = s.omegas();
        let quanta: Vec<[u32; 3]> = s.modes.iter().map(|m| m.quanta()).collect();
        let s2 = SpectrumTable::from_quanta([w[0] * sc, w[1] * sc, w[2] * sc], s.mass(), &quanta).unwrap();
        let p1 = OverlapProvider::new(&s);
        let p2 = OverlapProvider::new(&s2);
        let q = |x: usize| quanta[x % quanta.len()];
        let z1 = p1.zeta_quanta(q(i), q(j), q(k));
        let z2 = p2.zeta_quanta(q(i), q(j), q(k));
        prop_assert!((z2 - z1 * sc.powf(1.5)).abs() <= 1e-13 * z1.abs().max(1e-300) + 0.0);
    }
}
