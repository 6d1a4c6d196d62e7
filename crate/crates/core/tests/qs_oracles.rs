use pwx::bundled::{self, FOUR_ORBIT, THREE_BRANCH, THREE_BRANCH_MIRRORED};
use pwx::cohomology::{dual_basis, horizontal_correction};
use pwx::expr::{Bump, BumpSide, Expr};
use pwx::family::{LinearFamily, MapFamily};
use pwx::flow::itinerary_oracle;
use pwx::map_core::{CritId, DEFAULT_RELATION_DEPTH};
use pwx::qs::*;
use pwx::regularity::{dyadic_scales, uniform_grid};
use pwx::{Observable, PiecewiseMap, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEPTH: usize = DEFAULT_RELATION_DEPTH;

fn left_linear(f: &PiecewiseMap) -> Observable {
    let mut pieces = vec![Expr::constant(0.0); f.n_branches()];
    pieces[0] = Expr::linear(0.0, 1.0);
    Observable::from_pieces(f, pieces).unwrap()
}

fn horizontal(f: &PiecewiseMap, v: &Observable) -> Observable {
    let basis = dual_basis(f, 1e-3, DEPTH).unwrap();
    let hc = horizontal_correction(f, v, &basis);
    assert!(hc.max_abs_j < 1e-10, "correction left J = {}", hc.max_abs_j);
    hc.corrected
}

#[test]
fn tent_sides_land_on_the_origin() {
    let f = bundled::tent();
    let cl = classify_critical(&f, DEPTH);
    for side in [Side::Plus, Side::Minus] {
        match cl.side(CritId { index: 1, side }).unwrap() {
            SideKind::TypeI { n, m, orbit } => {
                assert_eq!((*n, *m), (2, 1));
                assert_eq!(cl.orbits[*orbit].points[0].x, 0.0);
            }
            k => panic!("unexpected {k:?}"),
        }
    }
    assert!(cl.exact);
    assert_eq!(qs_invariant(&f, &cl).unwrap().entries[0].ratio, 1.0);
}

#[test]
fn three_branch_invariant_and_its_mirror() {
    let f = bundled::map(THREE_BRANCH);
    let g = bundled::map(THREE_BRANCH_MIRRORED);
    let tf = qs_invariant(&f, &classify_critical(&f, DEPTH)).unwrap();
    let tg = qs_invariant(&g, &classify_critical(&g, DEPTH)).unwrap();
    let r = 2f64.ln() / 3f64.ln();
    assert!((tf.entries[0].ratio - r).abs() < 1e-12);
    assert!((tg.entries[0].ratio - 1.0 / r).abs() < 1e-12);
    assert_eq!(qs_obstruction(&f, &g, DEPTH).unwrap(), QsVerdict::Obstructed);
    assert_eq!(qs_obstruction(&f, &f, DEPTH).unwrap(), QsVerdict::QsCompatible);
}

#[test]
fn tent_and_skew_tent_are_compatible() {
    let f = bundled::tent();
    let g = bundled::map(bundled::SKEW_TENT_06);
    assert_eq!(qs_obstruction(&f, &g, DEPTH).unwrap(), QsVerdict::QsCompatible);
}

#[test]
fn codimension_counts_unpaired_orbits() {
    for (text, expect) in [(bundled::TENT, 1), (THREE_BRANCH, 1), (FOUR_ORBIT, 2)] {
        let f = bundled::map(text);
        let cl = classify_critical(&f, DEPTH);
        assert_eq!(qs_codimension(&f, &cl).unwrap(), expect);
    }
}

#[test]
fn four_orbit_map_has_the_constructed_orbits() {
    let f = bundled::map(FOUR_ORBIT);
    let cl = classify_critical(&f, DEPTH);
    assert!(cl.exact);
    let mut sizes: Vec<usize> = cl.orbits.iter().map(|o| o.points.len()).collect();
    sizes.sort();
    assert_eq!(sizes, vec![1, 1, 2, 3]);
}

#[test]
fn irrational_landing_is_unresolved_at_small_depth() {
    let f = PiecewiseMap::from_json(
        r#"{"interval":[0,1],"breakpoints":[0.5],"branches":[{"kind":"affine","coeffs":[0.0585786437626905,1.8]},
            {"kind":"affine","coeffs":[-1,2]}]}"#,
    )
    .unwrap();
    let cl = classify_critical(&f, 4);
    let kinds: Vec<_> = cl.sides.iter().map(|s| s.kind.clone()).collect();
    assert!(kinds.iter().any(|k| matches!(k, SideKind::Unresolved { .. } | SideKind::TypeII { .. })));
    assert!(qs_invariant(&f, &cl).is_err());
}

#[test]
fn skew_tent_tangent_condition_vanishes() {
    let fam = bundled::skew_tent_family();
    let (f, v) = fam.pair_at(0.0).unwrap();
    let cl = classify_critical(&f, DEPTH);
    assert!(qs_tangent_residual(&f, &v, &cl).unwrap() < 1e-9);
    let zero = Observable::zero(&f);
    assert_eq!(qs_tangent_residual(&f, &zero, &cl).unwrap(), 0.0);
}

#[test]
fn non_horizontal_direction_is_rejected() {
    let f = bundled::map(THREE_BRANCH);
    let cl = classify_critical(&f, DEPTH);
    let v = left_linear(&f);
    assert!(matches!(qs_tangent_residual(&f, &v, &cl), Err(pwx::PwxError::NonHorizontal(_))));
}

#[test]
fn tangent_condition_matches_invariant_drift() {
    let f = bundled::map(THREE_BRANCH);
    let cl = classify_critical(&f, DEPTH);
    let v = horizontal(&f, &left_linear(&f));
    let tangent = tangent_condition(&f, &v, &cl, 1e-8).unwrap()[0];
    let fam = LinearFamily::new(f.clone(), v, (-0.01, 0.01));
    let ln_ratio = |t: f64| {
        let g = fam.map_at(t).unwrap();
        qs_invariant(&g, &classify_critical(&g, DEPTH)).unwrap().entries[0].ratio.ln()
    };
    let h = 1e-4;
    let fd = (ln_ratio(h) - ln_ratio(-h)) / (2.0 * h);
    assert!((fd - tangent).abs() < 1e-4, "fd {fd} vs {tangent}");
    assert!((tangent - 0.5 / 2f64.ln()).abs() < 1e-6);
}

#[test]
fn frozen_multipliers_keep_the_invariant() {
    let f = bundled::map(THREE_BRANCH);
    let cl = classify_critical(&f, DEPTH);
    let mut pieces = vec![Expr::constant(0.0); 3];
    pieces[0] = Expr::Bump(Bump { center: 0.25, delta: 0.1, value: 0.02, slope: 0.0, side: BumpSide::Both });
    let v = Observable::from_pieces(&f, pieces).unwrap();
    assert!(qs_tangent_residual(&f, &v, &cl).unwrap() < 1e-8);
    let g = LinearFamily::new(f.clone(), v, (0.0, 1.0)).map_at(0.5).unwrap();
    let r0 = qs_invariant(&f, &cl).unwrap().entries[0].ratio;
    let r1 = qs_invariant(&g, &classify_critical(&g, DEPTH)).unwrap().entries[0].ratio;
    assert_eq!(r0, r1);
}

fn random_direction(f: &PiecewiseMap, rng: &mut ChaCha8Rng) -> Observable {
    let pieces = (0..f.n_branches())
        .map(|_| {
            let mut e = Expr::linear(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            for k in 1..=3 {
                e = e.add(&Expr::sin_2pi(rng.random_range(-0.05..0.05), k as f64));
                e = e.add(&Expr::cos_2pi(rng.random_range(-0.05..0.05), k as f64));
            }
            e
        })
        .collect();
    Observable::from_pieces(f, pieces).unwrap()
}

#[test]
fn codimension_matches_the_rank_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for text in [bundled::TENT, THREE_BRANCH, FOUR_ORBIT] {
        let f = bundled::map(text);
        let cl = classify_critical(&f, DEPTH);
        let probes: Vec<Observable> =
            (0..6).map(|_| horizontal(&f, &random_direction(&f, &mut rng))).collect();
        let rank = tangent_rank(&f, &probes, &cl).unwrap();
        assert_eq!(qs_codimension(&f, &cl).unwrap(), cl.orbits.len() - rank);
    }
}

#[test]
fn identity_has_unit_ratio() {
    let xs = uniform_grid(0.0, 1.0, 1 << 10);
    let scan = empirical_qs_ratio(&xs, &xs, &dyadic_scales(3, 8)).unwrap();
    assert!((scan.sup - 1.0).abs() < 1e-9);
}

#[test]
fn square_ratio_grows_at_the_origin() {
    let xs = uniform_grid(0.0, 1.0, 1 << 12);
    let hs: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let scan = empirical_qs_ratio(&xs, &hs, &dyadic_scales(2, 10)).unwrap();
    // at x = d the ratio is exactly 3
    assert!(scan.per_scale.iter().all(|r| (r - 3.0).abs() < 1e-6));
}

#[test]
fn obstructed_pair_ratio_diverges() {
    let f = bundled::map(THREE_BRANCH);
    let g = bundled::map(THREE_BRANCH_MIRRORED);
    let xs = uniform_grid(0.0, 1.0, 1 << 14);
    let hs: Vec<f64> = xs.iter().map(|&x| itinerary_oracle(&f, &g, x, 60).unwrap()).collect();
    let scan = empirical_qs_ratio(&xs, &hs, &dyadic_scales(6, 12)).unwrap();
    assert!(scan.per_scale.windows(2).all(|w| w[1] > w[0]), "{:?}", scan.per_scale);
}

#[test]
fn exact_orbits_of_rational_data() {
    let f = bundled::map(THREE_BRANCH);
    let e = ExactMap::from_map(&f).unwrap();
    let c = e.crit_point(CritId { index: 2, side: Side::Plus });
    let p = e.eval(&e.eval(&c));
    assert!(p.x == recover_rational(0.0).unwrap());
    assert!(ExactMap::from_map(&bundled::map(THREE_BRANCH_MIRRORED)).is_none());
}
