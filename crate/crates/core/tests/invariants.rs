use std::f64::consts::PI;

use chaotrans::dynamics::{bloch_norm, total_energy, AtomState, EnergyH, LatticeParams};
use chaotrans::integrator::{integrate, IntegratorConfig};
use chaotrans::nodemap::{classify_crossing, stochastic_jump, wrap_angle, CrossingOutcome, JumpAmplitude, MapState};
use chaotrans::seed::task_seed;
use chaotrans::transport::{first_passage_pdf, turn_probability, FirstPassageParams, PdfHistogram};
use proptest::prelude::*;

fn hist(ls: &[u64]) -> PdfHistogram {
    let mut h = PdfHistogram::new();
    for &l in ls {
        h.add(l);
    }
    h
}

proptest! {
    #[test]
    fn wrapped_angle_is_principal(t in -1e4f64..1e4) {
        let w = wrap_angle(t);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!((w.sin() - t.sin()).abs() < 1e-9);
    }

    #[test]
    fn jump_keeps_theta_and_u_consistent(u0 in -1.0f64..1.0, k in 0.0f64..5.0, phi in 0.0f64..(2.0 * PI)) {
        let s = MapState::new(u0).unwrap();
        let n = stochastic_jump(&s, JumpAmplitude(k), phi);
        prop_assert_eq!(n.m, s.m + 1);
        prop_assert!(n.u().abs() <= 1.0);
        prop_assert!((n.u() - n.theta.sin()).abs() == 0.0);
        // The angular step never exceeds K on the circle.
        prop_assert!(wrap_angle(n.theta - s.theta).abs() <= k + 1e-12);
    }

    #[test]
    fn zero_jump_is_identity(u0 in -1.0f64..1.0, phi in 0.0f64..(2.0 * PI)) {
        let s = MapState::new(u0).unwrap();
        let n = stochastic_jump(&s, JumpAmplitude(0.0), phi);
        prop_assert_eq!(n.theta, s.theta);
    }

    #[test]
    fn turn_rule_follows_parity(u in -1.0f64..1.0, m in 1u64..1000, h in 0.01f64..0.99) {
        let s = if m % 2 == 1 { u } else { -u };
        prop_assume!((s - h).abs() > 1e-9);
        let o = classify_crossing(u, m, EnergyH(h));
        prop_assert_eq!(o == CrossingOutcome::Continue, s < h);
    }

    #[test]
    fn turn_probabilities_sum_to_one(h in 0.001f64..0.999) {
        let (pm, pp) = turn_probability(EnergyH(h)).unwrap();
        prop_assert!((pm + pp - 1.0).abs() < 1e-15);
        prop_assert!(pm > 0.0 && pm < 0.5);
    }

    #[test]
    fn histogram_mass_accounts_for_every_event(ls in prop::collection::vec(0u64..10_000_000_000_000, 1..200)) {
        let h = hist(&ls);
        let binned: f64 = (0..h.len()).map(|i| h.mass(i)).sum();
        let over = h.overflow() as f64 / h.total() as f64;
        prop_assert!((binned + over - 1.0).abs() < 1e-12);
        for &l in &ls {
            if let Some(i) = h.bin_index(l) {
                let (lo, hi) = h.bounds(i);
                prop_assert!(lo <= l && l < hi);
            }
        }
    }

    #[test]
    fn histogram_merge_is_order_free(a in prop::collection::vec(0u64..100_000, 0..100), b in prop::collection::vec(0u64..100_000, 0..100)) {
        let mut ab = hist(&a);
        ab.merge(&hist(&b));
        let mut ba = hist(&b);
        ba.merge(&hist(&a));
        let all: Vec<u64> = a.iter().chain(&b).copied().collect();
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(&ab, &hist(&all));
    }

    #[test]
    fn task_seeds_are_distinct(master in any::<u64>(), i in any::<u64>(), j in any::<u64>()) {
        prop_assume!(i != j);
        prop_assert_ne!(task_seed(master, i), task_seed(master, j));
        prop_assert_eq!(task_seed(master, i), task_seed(master, i));
    }

    #[test]
    fn first_passage_density_is_nonnegative(
        theta in 0.05f64..1.5,
        d in 1e-5f64..1e-2,
        frac in -0.99f64..0.99,
        l in 1.0f64..1e5,
    ) {
        let fp = FirstPassageParams { theta0: frac * theta, ..FirstPassageParams::centered(0.0, theta, d) };
        let p = first_passage_pdf(l, &fp).unwrap();
        prop_assert!(p >= -1e-14, "{}", p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trajectories_conserve_energy_and_norm(
        p0 in 100.0f64..700.0,
        delta in -0.1f64..0.1,
        a in 0.0f64..(2.0 * PI),
        b in 0.0f64..PI,
    ) {
        let s0 = AtomState::normalized(0.0, p0, b.sin() * a.cos(), b.sin() * a.sin(), b.cos()).unwrap();
        let params = LatticeParams::new(1e-5, delta).unwrap();
        let traj = integrate(&s0, params, IntegratorConfig::default(), 2e4).unwrap();
        let h0 = total_energy(&s0, &params).0;
        for s in &traj.samples {
            prop_assert!((total_energy(s, &params).0 - h0).abs() < 1e-9);
            prop_assert!((bloch_norm(s) - 1.0).abs() < 1e-9);
        }
        prop_assert!(traj.drift.max_delta_h < 1e-9);
        // Crossings alternate parity and are numbered consecutively.
        for w in traj.crossings.windows(2) {
            prop_assert_eq!(w[1].m, w[0].m + 1);
        }
    }
}
