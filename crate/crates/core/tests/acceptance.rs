//! Acceptance suite: one line per criterion.
//!
//! Failures are reported but only fail the process under `PWX_ACCEPTANCE_STRICT=1`, so that
//! cargo still runs the test targets sorted after this one.

use pwx::bundled::{self, THREE_BRANCH, THREE_BRANCH_MIRRORED};
use pwx::cohomology::{self, AlphaSeries};
use pwx::expr::{Expr, Wave};
use pwx::family::MapFamily;
use pwx::flow::{self, FlowControls};
use pwx::metric::{self, SigmaControls};
use pwx::qs;
use pwx::regularity::{self, RegularityClass};
use pwx::skew::{self, SkewProduct};
use pwx::transfer;
use pwx::{Observable, PiecewiseMap, SignedPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

type Outcome = Result<(bool, String), String>;

fn sine_poly(f: &PiecewiseMap, rng: &mut ChaCha8Rng) -> Observable {
    let waves = (1..=3)
        .map(|k| Wave { amp: rng.random_range(-1.0..1.0), freq: 2.0 * PI * k as f64, phase: 0.0 })
        .collect();
    Observable::uniform(f, Expr::AffineTrig { c0: 0.0, c1: 0.0, waves })
}

fn criterion_1() -> Outcome {
    let f = bundled::doubling();
    let v = bundled::observable(bundled::SIN_2PI, &f);
    let a = AlphaSeries::new(&f, &v, 1e-15);
    let grid = cohomology::uniform_grid(&f, 1000);
    let res = cohomology::tce_residual(&f, &v, |p| a.eval(p), &grid);
    let third = a.eval(SignedPoint::plus(1.0 / 3.0));
    let err = (third + 3f64.sqrt() / 6.0).abs();
    let zeros = [SignedPoint::plus(0.0), SignedPoint::minus(0.5), SignedPoint::plus(0.5)]
        .iter()
        .all(|p| a.eval(*p) == 0.0);
    Ok((
        res < 1e-10 && err < 1e-12 && zeros,
        format!("residual {res:.2e}, |alpha(1/3) + sqrt3/6| {err:.2e}, zeros exact {zeros}"),
    ))
}

fn criterion_2() -> Outcome {
    let f = bundled::doubling();
    let basis = cohomology::dual_basis(&f, 1e-3, 8).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut equivalence = true;
    let mut ladder_ok = true;
    let mut min_growth = f64::INFINITY;
    let mut weakest = (0.0, 0.0);
    let mut growing = 0;
    let mut classes = Vec::new();
    let xs = regularity::uniform_grid(0.0, 1.0, regularity::DEFAULT_GRID);
    let mut check = cohomology::uniform_grid(&f, 1000);
    check.extend(cohomology::critical_points(&f));
    for k in 0..20 {
        let v = sine_poly(&f, &mut rng);
        // the same direction pushed off the horizontal space by one dual observable
        let w = v.add(&basis.basis[k % basis.basis.len()]);
        for (u, horizontal_expected) in [(&v, true), (&w, false)] {
            let a = AlphaSeries::new(&f, u, 1e-15);
            let j_small = cohomology::max_abs_j(&f, u, 1e-15) < 1e-8;
            let res_small = cohomology::tce_residual(&f, u, |p| a.eval(p), &check) < 1e-6;
            equivalence &= j_small == res_small && j_small == horizontal_expected;
            checked += 1;
        }
        let a = AlphaSeries::new(&f, &v, 1e-15);
        let gs: Vec<f64> = xs.iter().map(|&x| a.eval(f.point(x))).collect();
        let rep = regularity::modulus_scan(&xs, &gs, &regularity::default_scales()).map_err(|e| e.to_string())?;
        let class = regularity::classify(&rep, regularity::DEFAULT_STABILITY);
        // two decades: 2^-4 against 2^-11
        let growth = rep.lipschitz[7] / rep.lipschitz[0];
        if growth < min_growth {
            min_growth = growth;
            weakest = (rep.lipschitz[0], rep.lipschitz[rep.lipschitz.len() - 1]);
        }
        growing += (growth >= 2.0) as usize;
        ladder_ok &= class.rank() <= RegularityClass::LogLipschitz.rank()
            && class != RegularityClass::Lipschitz
            && growth >= 2.0;
        classes.push(class.name());
    }
    classes.sort();
    classes.dedup();
    Ok((
        equivalence && ladder_ok,
        format!(
            "{checked} directions, equivalence {equivalence}, classes {classes:?}, {growing}/20 grow 2x over 2^-4..2^-11, weakest {min_growth:.2} (quotient {:.2} at 2^-4, {:.2} at 2^-14)",
            weakest.0, weakest.1
        ),
    ))
}

fn criterion_3() -> Outcome {
    let e = |e: pwx::PwxError| e.to_string();
    let d = transfer::ulam_matrix(&bundled::doubling(), 256).map_err(e)?;
    let pd = transfer::peripheral_spectrum(&d, transfer::DEFAULT_PERIPHERAL_TOL).map_err(e)?;
    let only_one = pd.lambdas.len() == 1 && (pd.lambdas[0].0 - 1.0).abs() < 1e-9 && pd.lambdas[0].1.abs() < 1e-9;
    let flat = pd.density.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    let swap = bundled::map(bundled::SWAP);
    let mut stable = true;
    for n in [128, 256, 512] {
        let u = transfer::ulam_matrix(&swap, n).map_err(e)?;
        let ps = transfer::peripheral_spectrum(&u, transfer::DEFAULT_PERIPHERAL_TOL).map_err(e)?;
        stable &= ps.period == 2 && ps.has_lambda(transfer::C64::new(-1.0, 0.0), 1e-8);
    }
    Ok((
        only_one && flat < 1e-8 && stable,
        format!("doubling peripheral {:?}, density defect {flat:.2e}; swap period 2 with -1 at n=128,256,512: {stable}", pd.lambdas),
    ))
}

fn criterion_4() -> Outcome {
    let e = |e: pwx::PwxError| e.to_string();
    let fam = bundled::skew_tent_family();
    let ctl = FlowControls::default();
    let xs: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
    let grid = flow::conjugacy_grid(&fam, &[0.1], &xs, &ctl).map_err(e)?;
    let (f0, f1) = (fam.map_at(0.0).map_err(e)?, fam.map_at(0.1).map_err(e)?);
    let mut oracle: f64 = 0.0;
    for (x, h) in xs.iter().zip(&grid.values[0]) {
        oracle = oracle.max((flow::itinerary_oracle(&f0, &f1, *x, 60).map_err(e)? - h).abs());
    }
    let fixed = flow::transport(&fam, 2.0 / 3.0, 0.0, 0.1, &ctl).map_err(e)?;
    let fixed_err = (fixed - 1.0 / (2.0 - 0.6)).abs();
    let s = SkewProduct::new(&fam);
    let half = skew::holonomy(&s, 0.0, 0.05, &xs, &ctl).map_err(e)?;
    let two = skew::holonomy(&s, 0.05, 0.1, &half, &ctl).map_err(e)?;
    let group = two.iter().zip(&grid.values[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((
        grid.residual < 1e-6 && oracle < 1e-4 && fixed_err < 1e-8 && group < 1e-5,
        format!(
            "residual {:.2e}, oracle gap {oracle:.2e}, |h(2/3) - 1/(2 - a)| {fixed_err:.2e}, group gap {group:.2e}",
            grid.residual
        ),
    ))
}

fn criterion_5() -> Outcome {
    let e = |e: pwx::PwxError| e.to_string();
    let fam = bundled::skew_tent_family();
    let xs = regularity::uniform_grid(0.0, 1.0, regularity::DEFAULT_GRID);
    let mut c_ll: f64 = 0.0;
    for k in 0..=4 {
        let t = 0.025 * k as f64;
        let (f, v) = fam.pair_at(t).map_err(e)?;
        let a = AlphaSeries::new(&f, &v, 1e-14);
        let gs: Vec<f64> = xs.iter().map(|&x| a.eval(f.point(x))).collect();
        let rep = regularity::modulus_scan(&xs, &gs, &regularity::default_scales()).map_err(e)?;
        c_ll = c_ll.max(rep.loglip_constant);
    }
    let hx = regularity::uniform_grid(0.0, 1.0, 1 << 10);
    let grid = flow::conjugacy_grid(&fam, &[0.1], &hx, &FlowControls::default()).map_err(e)?;
    let rep = regularity::modulus_scan(&hx, &grid.values[0], &regularity::dyadic_scales(3, 7)).map_err(e)?;
    let beta = rep.holder_fit.0;
    let (exponent, _) = flow::holder_budget(c_ll, 0.1);
    let bound = exponent - 0.05;
    Ok((beta >= bound, format!("Hoelder fit {beta:.4} vs bound {bound:.4} (C_LL {c_ll:.4})")))
}

fn criterion_6() -> Outcome {
    let e = |e: pwx::PwxError| e.to_string();
    let fam = bundled::perturbed_doubling_family();
    let (f, v) = fam.pair_at(0.0).map_err(e)?;
    let mf = cohomology::multiplier_functional(&f, SignedPoint::plus(1.0 / 3.0), 2, &v).map_err(e)?;
    let fd = flow::lyapunov_fd(&fam, 1.0 / 3.0, 2, 1e-4, &FlowControls::default()).map_err(e)?;
    let (a, b) = ((mf + PI).abs(), (fd - mf).abs());
    Ok((a < 1e-10 && b < 1e-3, format!("|Psi + pi| {a:.2e}, |finite difference - Psi| {b:.2e}")))
}

fn criterion_7() -> Outcome {
    let e = |e: pwx::PwxError| e.to_string();
    let f = bundled::doubling();
    let ctl = SigmaControls::default();
    let cos = bundled::observable(bundled::COS_2PI, &f);
    let s = metric::sigma(&f, &cos, &cos, &ctl).map_err(e)?.extrapolated;
    let cob = Observable::uniform(&f, Expr::cos_2pi(1.0, 2.0).add(&Expr::cos_2pi(-1.0, 1.0)));
    let est = metric::sigma(&f, &cob, &cob, &ctl).map_err(e)?;
    let k = est.values.len();
    let slope = (est.values[k - 1] / est.values[0]).ln() / (est.n_list[k - 1] as f64 / est.n_list[0] as f64).ln();
    let sin = bundled::observable(bundled::SIN_2PI, &f);
    let p = metric::pressure_inner(&f, &sin, &sin, &ctl).map_err(e)?.extrapolated;
    let rel = (p / (PI * PI / 2.0) - 1.0).abs();
    Ok((
        (s - 0.5).abs() < 1e-3 && (slope + 1.0).abs() <= 0.2 && rel < 0.01,
        format!("sigma(cos) {s:.6}, coboundary slope {slope:.3}, <sin, sin> relative error {rel:.2e}"),
    ))
}

fn criterion_8() -> Outcome {
    let e = |e: pwx::PwxError| e.to_string();
    let depth = pwx::map_core::DEFAULT_RELATION_DEPTH;
    let f = bundled::map(THREE_BRANCH);
    let g = bundled::map(THREE_BRANCH_MIRRORED);
    let cf = qs::classify_critical(&f, depth);
    let ratio = qs::qs_invariant(&f, &cf).map_err(e)?.entries[0].ratio;
    let inv_err = (ratio - 2f64.ln() / 3f64.ln()).abs();
    let verdict = qs::qs_obstruction(&f, &g, depth).map_err(e)?;
    let fam = bundled::skew_tent_family();
    let (t0, v0) = fam.pair_at(0.0).map_err(e)?;
    let tangent = qs::qs_tangent_residual(&t0, &v0, &qs::classify_critical(&t0, depth)).map_err(e)?;
    let tent = bundled::tent();
    let d_tent = qs::qs_codimension(&tent, &qs::classify_critical(&tent, depth)).map_err(e)?;
    let d_three = qs::qs_codimension(&f, &cf).map_err(e)?;
    let xs = regularity::uniform_grid(0.0, 1.0, 1 << 14);
    let hs: Vec<f64> = xs
        .iter()
        .map(|&x| flow::itinerary_oracle(&f, &g, x, 60))
        .collect::<pwx::Result<Vec<f64>>>()
        .map_err(e)?;
    let scan = qs::empirical_qs_ratio(&xs, &hs, &regularity::dyadic_scales(6, 12)).map_err(e)?;
    // the scan lists coarse to fine scales
    let growing = scan.per_scale.windows(2).all(|w| w[1] > w[0]);
    Ok((
        inv_err < 1e-12 && verdict == qs::QsVerdict::Obstructed && tangent < 1e-9 && d_tent == 1 && d_three == 1 && growing,
        format!(
            "invariant error {inv_err:.2e}, verdict {verdict:?}, tangent residual {tangent:.2e}, D_f tent {d_tent} three-branch {d_three}, ratio growth {growing} ({:.2} -> {:.2})",
            scan.per_scale[0],
            scan.per_scale[scan.per_scale.len() - 1]
        ),
    ))
}

fn criterion_9() -> Outcome {
    let e = |e: pwx::PwxError| e.to_string();
    let fam = bundled::perturbed_doubling_family();
    let s = SkewProduct::new(&fam);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let samples: Vec<(f64, f64)> =
        (0..100).map(|_| (rng.random_range(0.0..1.0), rng.random_range(-0.1..0.1))).collect();
    let res = skew::central_invariance_residual(&s, &samples, true).map_err(e)?;
    let tent = bundled::skew_tent_family();
    let st = SkewProduct::new(&tent);
    let ts: Vec<f64> = (0..=10).map(|k| 0.02 * k as f64).collect();
    let r = skew::nightmare_diagnostic(&st, SignedPoint::plus(2.0 / 3.0), 1, &ts, &FlowControls::default()).map_err(e)?;
    Ok((
        res < 1e-8 && r.strictly_increasing && r.values.len() == 11,
        format!("central residual {res:.2e}, multiplier strictly increasing over {} points: {}", r.values.len(), r.strictly_increasing),
    ))
}

fn maps_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("maps")
}

/// Every bundled input through the CLI, written under `dir`.
fn example_suite(dir: &Path) -> Result<(), String> {
    let m = maps_dir();
    let p = |s: &str| m.join(s).to_string_lossy().into_owned();
    let mut jobs: Vec<(String, Vec<String>)> = Vec::new();
    for (name, _) in bundled::MAPS {
        let map = p(&format!("{name}.json"));
        jobs.push((format!("check_{name}"), vec!["check".into(), map.clone()]));
        jobs.push((format!("qs_{name}"), vec!["qs".into(), map.clone()]));
        jobs.push((format!("orbit_{name}"), vec!["orbit".into(), map, "--x".into(), "0.3".into()]));
    }
    let doubling = p("doubling.json");
    let sin = p("observables/sin2pi.json");
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    jobs.push(("qs_pair".into(), s(&["qs", &p("three_branch.json"), &p("three_branch_mirrored.json")])));
    jobs.push(("ulam_doubling".into(), s(&["ulam", &doubling])));
    jobs.push(("ulam_swap".into(), s(&["ulam", &p("swap.json"), "--bins", "128"])));
    for cmd in ["jfunc", "alpha", "psi"] {
        jobs.push((format!("{cmd}_sin"), s(&[cmd, &doubling, &sin])));
    }
    jobs.push(("jfunc_identity".into(), s(&["jfunc", &doubling, &p("observables/identity.json")])));
    jobs.push(("metric_sin".into(), s(&["metric", &doubling, &sin])));
    jobs.push(("deform_skew_tent".into(), s(&["deform", &p("families/skew_tent.json"), "--t", "0.05,0.1", "--grid", "50"])));
    jobs.push(("skew_tent".into(), s(&["skew", &p("families/skew_tent.json"), "--q", "0.6666666666666666", "--seed", "5"])));
    jobs.push((
        "skew_doubling".into(),
        s(&["skew", &p("families/perturbed_doubling.json"), "--q", "0.3333333333333333", "--period", "2", "--t-grid=-0.05:0.05:5"]),
    ));
    let exe = env!("CARGO_BIN_EXE_pwx");
    for (name, args) in &jobs {
        let out = dir.join(name);
        let status = Command::new(exe)
            .args(args)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("{name} exited with {status}"));
        }
    }
    // the regularity command consumes the alpha grid written above
    let csv = dir.join("alpha_sin.csv");
    let status = Command::new(exe)
        .args(["regularity", &csv.to_string_lossy(), "--scales", "2:6", "--out"])
        .arg(dir.join("regularity_alpha"))
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("regularity exited with {status}"));
    }
    Ok(())
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|entry| {
            let path = entry.map_err(|e| e.to_string())?.path();
            let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            Ok((path.file_name().unwrap().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn criterion_10() -> Outcome {
    let root = std::env::temp_dir().join(format!("pwx-acceptance-{}", std::process::id()));
    let runs = [root.join("a"), root.join("b")];
    for d in &runs {
        std::fs::create_dir_all(d).map_err(|e| e.to_string())?;
        example_suite(d)?;
    }
    let a = read_dir_sorted(&runs[0])?;
    let b = read_dir_sorted(&runs[1])?;
    let same = a == b;
    let n = a.len();
    let _ = std::fs::remove_dir_all(&root);
    Ok((same && n > 0, format!("{n} output files, byte-identical across two runs: {same}")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("twisted equation solver", criterion_1),
        ("horizontal characterization and regularity", criterion_2),
        ("peripheral spectrum", criterion_3),
        ("deformation flow", criterion_4),
        ("Hoelder budget", criterion_5),
        ("multiplier derivative", criterion_6),
        ("pressure metric", criterion_7),
        ("quasisymmetric invariants", criterion_8),
        ("skew product", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut passed = 0;
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(msg) => (false, format!("error: {msg}")),
        };
        passed += ok as usize;
        if !ok {
            failed.push(k + 1);
        }
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag} {name}: {detail} [{:.1}s]", k + 1, start.elapsed().as_secs_f64());
    }
    println!("{passed}/{} criteria passed, failing: {failed:?}", criteria.len());
    if !failed.is_empty() && std::env::var_os("PWX_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
