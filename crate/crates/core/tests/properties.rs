//! Randomized invariants for the score families, the M-scale, the PAVA
//! solver, and the convex-minorant routine.

use isom_core::asymptotics::gcm;
use isom_core::scale::{m_scale, DEFAULT_BISQUARE_B, DEFAULT_BISQUARE_C};
use isom_core::solver::{fit_pava, DesignSample};
use isom_core::ScoreFamily;
use proptest::prelude::*;

fn families() -> impl Strategy<Value = ScoreFamily> {
    prop_oneof![
        Just(ScoreFamily::L2),
        (0.2f64..3.0).prop_map(|k| ScoreFamily::Huber { k }),
        (5.0f64..2000.0).prop_map(|m| ScoreFamily::SmoothedL1 { m }),
        ((0.2f64..3.0), (5.0f64..2000.0))
            .prop_map(|(k, m)| ScoreFamily::SmoothedHuber { k, m }),
        Just(ScoreFamily::l1()),
    ]
}

proptest! {
    #[test]
    fn psi_is_odd_and_nondecreasing(f in families(), u in -20.0f64..20.0, v in -20.0f64..20.0) {
        prop_assert!((f.psi(u) + f.psi(-u)).abs() <= 1e-12 * f.psi(u).abs().max(1.0));
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        prop_assert!(f.psi(lo) <= f.psi(hi) + 1e-12);
        if let Some(sup) = f.psi_sup() {
            prop_assert!(f.psi(u).abs() <= sup + 1e-12);
        }
    }

    #[test]
    fn psi_is_rho_derivative(f in families(), u in -10.0f64..10.0) {
        prop_assume!(!f.is_l1_limit());
        // keep a margin from the kinks so the central difference is clean
        let h = 1e-6;
        let near_kink = f.breakpoints().iter().any(|&b| (u.abs() - b).abs() < 10.0 * h);
        prop_assume!(!near_kink);
        let fd = (f.rho(u + h) - f.rho(u - h)) / (2.0 * h);
        prop_assert!((fd - f.psi(u)).abs() <= 1e-5 * f.psi(u).abs().max(1.0),
            "fd {} vs psi {}", fd, f.psi(u));
    }

    #[test]
    fn psi_prime_is_psi_derivative(f in families(), u in -10.0f64..10.0) {
        prop_assume!(!f.is_l1_limit());
        let h = 1e-6;
        let near_kink = f.breakpoints().iter().any(|&b| (u.abs() - b).abs() < 10.0 * h);
        prop_assume!(!near_kink);
        let fd = (f.psi(u + h) - f.psi(u - h)) / (2.0 * h);
        let scale = match f {
            // the smoothed-L1 inner slope is m, so the tolerance must track it
            ScoreFamily::SmoothedL1 { m } => m,
            _ => 1.0,
        };
        prop_assert!((fd - f.psi_prime(u)).abs() <= 1e-4 * scale.max(f.psi_prime(u).abs()),
            "fd {} vs psi' {}", fd, f.psi_prime(u));
    }

    #[test]
    fn m_scale_is_homogeneous(
        values in prop::collection::vec(-50.0f64..50.0, 5..40),
        lambda in 0.01f64..100.0,
    ) {
        let base = m_scale(&values, DEFAULT_BISQUARE_C, DEFAULT_BISQUARE_B);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| lambda * v).collect();
        let s = m_scale(&scaled, DEFAULT_BISQUARE_C, DEFAULT_BISQUARE_B).unwrap();
        prop_assert!((s - lambda * base).abs() <= 1e-9 * (lambda * base));
    }

    #[test]
    fn fit_levels_are_monotone_and_bracketed(
        pairs in prop::collection::vec(((0u8..6), -10.0f64..10.0), 1..25),
        f in families(),
        sigma in 0.3f64..3.0,
    ) {
        let pts: Vec<(f64, f64)> = pairs.iter().map(|&(t, x)| (t as f64 / 5.0, x)).collect();
        let sample = DesignSample::new(pts).unwrap();
        let fit = fit_pava(&sample, &f, sigma).unwrap();
        let (lo, hi) = sample.x().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
            (l.min(x), h.max(x))
        });
        for w in fit.blocks.windows(2) {
            prop_assert!(w[0].level < w[1].level);
            prop_assert_eq!(w[0].end, w[1].start);
        }
        for b in &fit.blocks {
            prop_assert!(b.level >= lo - 1e-9 && b.level <= hi + 1e-9);
            for i in b.start..b.end {
                prop_assert_eq!(fit.fitted[i], b.level);
            }
        }
        prop_assert_eq!(fit.blocks[0].start, 0);
        prop_assert_eq!(fit.blocks.last().unwrap().end, sample.len());
    }

    #[test]
    fn gcm_is_a_convex_minorant(
        ys in prop::collection::vec(-10.0f64..10.0, 2..60),
    ) {
        let points: Vec<(f64, f64)> = ys.iter().enumerate()
            .map(|(i, &y)| (i as f64 * 0.25, y)).collect();
        let hull = gcm(&points).unwrap();
        let slopes = hull.slopes();
        for w in slopes.windows(2) {
            prop_assert!(w[0] < w[1] + 1e-12);
        }
        for &(v, y) in &points {
            prop_assert!(hull.value_at(v) <= y + 1e-9);
        }
        // endpoints always touch
        prop_assert_eq!(hull.vertices.first().copied(), points.first().copied());
        prop_assert_eq!(hull.vertices.last().copied(), points.last().copied());
    }
}
