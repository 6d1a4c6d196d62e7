use pwx::bundled;
use pwx::cohomology::multiplier_functional;
use pwx::family::{LinearFamily, MapFamily};
use pwx::flow::{itinerary_oracle, FlowControls};
use pwx::skew::*;
use pwx::{Observable, SignedPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn random_samples(n: usize, t_max: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (rng.random_range(0.0..1.0), rng.random_range(-t_max..t_max))).collect()
}

#[test]
fn central_field_is_invariant() {
    let fam = bundled::perturbed_doubling_family();
    let s = SkewProduct::new(&fam);
    let samples = random_samples(100, 0.1, 11);
    assert!(central_invariance_residual(&s, &samples, true).unwrap() < 1e-8);
    // without alpha the residual is |v_t|
    let bare = central_invariance_residual(&s, &samples, false).unwrap();
    let expect = samples
        .iter()
        .map(|&(x, t)| fam.tangent_at(t).unwrap().value(SignedPoint::plus(x)).abs())
        .fold(0.0, f64::max);
    assert!(bare > 0.5 && (bare - expect).abs() < 1e-12);
}

#[test]
fn constant_family_has_trivial_field() {
    let f = bundled::doubling();
    let fam = LinearFamily::new(f.clone(), Observable::zero(&f), (0.0, 1.0));
    let s = SkewProduct::new(&fam);
    let samples = random_samples(20, 1.0, 3).into_iter().map(|(x, t)| (x, t.abs())).collect::<Vec<_>>();
    assert_eq!(central_invariance_residual(&s, &samples, true).unwrap(), 0.0);
    assert_eq!(s.central_field(0.3, 0.5).unwrap(), (0.0, 1.0));
}

#[test]
fn holonomy_identity_oracle_and_composition() {
    let fam = bundled::skew_tent_family();
    let s = SkewProduct::new(&fam);
    let ctl = FlowControls::default();
    let xs: Vec<f64> = (1..20).map(|k| k as f64 / 20.0 + 0.003).collect();
    assert_eq!(holonomy(&s, 0.07, 0.07, &xs, &ctl).unwrap(), xs);

    let h = holonomy(&s, 0.0, 0.1, &xs, &ctl).unwrap();
    let (f0, f1) = (fam.map_at(0.0).unwrap(), fam.map_at(0.1).unwrap());
    for (x, y) in xs.iter().zip(&h) {
        assert!((itinerary_oracle(&f0, &f1, *x, 60).unwrap() - y).abs() < 1e-4);
    }
    assert!(h.windows(2).all(|w| w[1] > w[0]));

    let half = holonomy(&s, 0.0, 0.05, &xs, &ctl).unwrap();
    let two = holonomy(&s, 0.05, 0.1, &half, &ctl).unwrap();
    let gap = two.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-5, "{gap}");
}

#[test]
fn skew_tent_multiplier_is_monotone() {
    let fam = bundled::skew_tent_family();
    let s = SkewProduct::new(&fam);
    let ts: Vec<f64> = (0..=10).map(|k| 0.02 * k as f64).collect();
    let r = nightmare_diagnostic(&s, SignedPoint::plus(2.0 / 3.0), 1, &ts, &FlowControls::default()).unwrap();
    for (t, v) in ts.iter().zip(&r.values) {
        let a = 0.5 + t;
        assert!((v - (1.0 / (1.0 - a)).ln()).abs() < 1e-8);
    }
    assert!(r.strictly_increasing && r.injective);
}

#[test]
fn constant_family_multiplier_is_not_injective() {
    let f = bundled::doubling();
    let fam = LinearFamily::new(f.clone(), Observable::zero(&f), (0.0, 1.0));
    let s = SkewProduct::new(&fam);
    let ts = [0.0, 0.1, 0.2];
    let r = nightmare_diagnostic(&s, SignedPoint::plus(1.0 / 3.0), 2, &ts, &FlowControls::default()).unwrap();
    assert!(!r.injective && !r.strictly_increasing);
}

#[test]
fn multiplier_derivative_matches_functional() {
    let fam = bundled::perturbed_doubling_family();
    let s = SkewProduct::new(&fam);
    let ctl = FlowControls::default();
    let dt = 1e-4;
    let r = nightmare_diagnostic(&s, SignedPoint::plus(1.0 / 3.0), 2, &[-dt, dt], &ctl).unwrap();
    let fd = (r.values[1] - r.values[0]) / (2.0 * dt);
    let (f, v) = fam.pair_at(0.0).unwrap();
    let mf = multiplier_functional(&f, SignedPoint::plus(1.0 / 3.0), 2, &v).unwrap();
    assert!((mf + PI).abs() < 1e-10);
    assert!((fd - mf).abs() < 1e-3, "{fd} vs {mf}");
}

#[test]
fn critical_periodic_point_is_rejected() {
    let fam = bundled::skew_tent_family();
    let s = SkewProduct::new(&fam);
    let r = nightmare_diagnostic(&s, SignedPoint::plus(0.0), 1, &[0.0, 0.1], &FlowControls::default());
    assert!(matches!(r, Err(pwx::PwxError::OrbitHitsCritical(_))));
}
