use monosim_core::gauss::{normal_cdf, two_sided_tail};
use monosim_core::partition::{BandPartition, DEFAULT_BAND_CAP};
use monosim_core::{Error, RegularityParams};
use proptest::prelude::*;

/// Bisection for `Pr[|z| >= m] = tail`, independent of the library quantile.
fn tail_point(tail: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 2.0 * (1.0 - normal_cdf(mid)) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn worked_example() {
    let p = BandPartition::from_params(&RegularityParams::new(1.0, 1.0, 0.1).unwrap(), DEFAULT_BAND_CAP).unwrap();
    assert!((p.delta - 0.01).abs() < 1e-15);
    let m_star = tail_point(0.01);
    assert!((m_star - 2.5758293035489).abs() < 1e-9);
    assert_eq!(p.len(), 516);
    assert!((p.m_prime - 2.58).abs() < 1e-12);
    assert!(two_sided_tail(p.m_prime) <= 0.01);
    let total: f64 = p.band_probs.iter().sum();
    assert!((total - (1.0 - two_sided_tail(p.m_prime))).abs() < 1e-13);
}

#[test]
fn band_cap_is_enforced() {
    let tiny = RegularityParams::new(1.0, 1.0, 1e-4).unwrap();
    assert!(matches!(BandPartition::from_params(&tiny, DEFAULT_BAND_CAP), Err(Error::TooManyBands { .. })));
}

#[test]
fn band_lookup_at_edges() {
    let p = BandPartition::uniform(0.1, 10).unwrap();
    assert_eq!(p.band_of(-0.5), Some(0));
    assert_eq!(p.band_of(-0.4999999), Some(0));
    assert_eq!(p.band_of(0.0), Some(5));
    assert_eq!(p.band_of(0.4999999), Some(9));
    assert_eq!(p.band_of(0.5), None);
    assert_eq!(p.band_of(-0.50000001), None);
    for j in 0..p.len() {
        assert_eq!(p.band_of(p.edge(j)), Some(j), "edge {j}");
    }
}

proptest! {
    #[test]
    fn partition_covers_required_mass(delta in 1e-3f64..0.5, tail in 1e-6f64..0.2) {
        let p = BandPartition::with_tail(delta, tail, DEFAULT_BAND_CAP).unwrap();
        prop_assert!(two_sided_tail(p.m_prime) <= tail);
        // one band fewer would not cover enough mass
        let shorter = p.m_prime - delta / 2.0;
        prop_assert!(p.len() == 1 || two_sided_tail(shorter) > tail * (1.0 - 1e-12));
        prop_assert!((p.m_prime - 0.5 * delta * p.len() as f64).abs() < 1e-12);
        prop_assert!(p.band_probs.iter().all(|&q| q > 0.0));
    }

    #[test]
    fn band_of_respects_edges(z in -3.0f64..3.0) {
        let p = BandPartition::uniform(0.037, 150).unwrap();
        match p.band_of(z) {
            Some(j) => prop_assert!(p.edge(j) <= z && z < p.edge(j + 1)),
            None => prop_assert!(z < -p.m_prime || z >= p.m_prime),
        }
    }
}
