use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xanes_deconv::emc::{autocorrelation, integrated_time};
use xanes_deconv::Error;

fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n + 1000 {
        x = phi * x + rng.sample::<f64, _>(StandardNormal);
        out.push(x);
    }
    out.split_off(1000)
}

#[test]
fn ar1_autocorrelation_decays_geometrically() {
    let phi = 0.9;
    let rho = autocorrelation(&ar1(phi, 400_000, 1), 30).unwrap();
    for t in 0..=30 {
        assert!((rho[t] - phi.powi(t as i32)).abs() < 0.02, "lag {t}: {}", rho[t]);
    }
    let tau = integrated_time(&rho);
    // (1 + φ)/(1 − φ) = 19, truncated at the first non-positive lag or lag 30
    let truncated = 1.0 + 2.0 * (1..=30).map(|t| phi.powi(t)).sum::<f64>();
    assert!((tau - truncated).abs() < 0.5, "{tau} vs {truncated}");
}

#[test]
fn white_noise_is_uncorrelated() {
    let rho = autocorrelation(&ar1(0.0, 100_000, 2), 10).unwrap();
    assert_eq!(rho[0], 1.0);
    assert!(rho[1..].iter().all(|r| r.abs() < 0.015));
}

#[test]
fn alternating_series_has_lag_one_minus_one() {
    let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let rho = autocorrelation(&x, 2).unwrap();
    assert!((rho[1] + 1.0).abs() < 1e-12);
    assert!((rho[2] - 1.0).abs() < 1e-12);
}

#[test]
fn degenerate_series() {
    assert!(matches!(autocorrelation(&[2.0; 50], 5), Err(Error::Degenerate(_))));
    assert!(autocorrelation(&[1.0, 2.0, 3.0], 3).is_err());
    assert!(autocorrelation(&[1.0, 2.0, 3.0], 0).is_err());
}

proptest! {
    #[test]
    fn lag_zero_is_one_and_values_are_bounded(
        x in prop::collection::vec(-1e3f64..1e3, 20..200),
    ) {
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let rho = autocorrelation(&x, 5).unwrap();
        prop_assert!((rho[0] - 1.0).abs() < 1e-12);
        prop_assert!(rho.iter().all(|r| r.is_finite()));
    }
}
