//! Twisted cohomological equation `v = alpha o f - Df * alpha`, critical-orbit
//! functionals, the dual bump basis and the observable `phi`.

use crate::error::{PwxError, Result};
use crate::expr::{Bump, BumpSide, Expr};
use crate::map_core::{CritId, PiecewiseMap, Side, SignedPoint};
use crate::observable::{Evaluator, Observable};
use nalgebra::DMatrix;

/// Default truncation tolerance for series.
pub const DEFAULT_TOL: f64 = 1e-13;

/// Number of series terms needed so that `sup|v| lambda^-j / (lambda - 1) < tol`.
pub fn series_terms(sup_v: f64, lambda: f64, tol: f64) -> usize {
    if sup_v <= 0.0 {
        return 1;
    }
    let r = sup_v / ((lambda - 1.0) * tol);
    if r <= 1.0 {
        return 1;
    }
    (r.ln() / lambda.ln()).ceil() as usize + 1
}

/// Evaluator of the formal series solution
/// `alpha(x) = -sum_i v(f^i x) / Df^{i+1}(x)`.
///
/// Orbits that land on a breakpoint `c'` stop there and add the prescribed
/// value `alpha(c')` (zero unless the breakpoints move).
pub struct AlphaSeries<'a> {
    f: &'a PiecewiseMap,
    v: &'a Observable,
    n_terms: usize,
}

impl<'a> AlphaSeries<'a> {
    pub fn new(f: &'a PiecewiseMap, v: &'a Observable, tol: f64) -> Self {
        let n_terms = series_terms(v.sup_abs(), f.expansion_floor(), tol);
        AlphaSeries { f, v, n_terms }
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn eval(&self, p: SignedPoint) -> f64 {
        let f = self.f;
        if let Some(i) = f.crit_index(p.x) {
            return self.v.velocity(i);
        }
        let mut x = p;
        let mut prod = 1.0;
        let mut sum = 0.0;
        for i in 0..self.n_terms {
            if i > 0 {
                if let Some(c) = f.crit_index(x.x) {
                    sum += self.v.velocity(c) / prod;
                    break;
                }
            }
            let b = f.branch_index(x);
            prod *= f.branch(b).eval(x.x, x.side, 1);
            sum -= self.v.on_piece_order(b, x.x, x.side, 0) / prod;
            x = f.eval_on(b, x);
        }
        sum
    }

    pub fn at(&self, x: f64) -> f64 {
        self.eval(self.f.point(x))
    }
}

pub fn alpha_series(f: &PiecewiseMap, v: &Observable, p: SignedPoint, tol: f64) -> f64 {
    AlphaSeries::new(f, v, tol).eval(p)
}

/// `J(f, c, v) = sum_{i<k} v(f^i c) / Df^i(f c)`, plus boundary terms when the
/// breakpoints carry nonzero prescribed values.
pub fn j_functional(f: &PiecewiseMap, c: SignedPoint, v: &Observable, tol: f64) -> f64 {
    let lambda = f.expansion_floor();
    let sup_v = v.sup_abs();
    let max_terms = if sup_v == 0.0 {
        1
    } else {
        series_terms(sup_v * lambda, lambda, tol)
    };
    let boundary_start = match f.crit_index(c.x) {
        Some(i) => f.d1(c) * v.velocity(i),
        None => 0.0,
    };
    let mut sum = boundary_start;
    let mut x = c;
    let mut denom = 1.0;
    for _ in 0..max_terms.max(1) {
        sum += v.value(x) / denom;
        let next = f.eval(x);
        if let Some(j) = f.crit_index(next.x) {
            sum -= v.velocity(j) / denom;
            return sum;
        }
        denom *= f.d1(next);
        x = next;
    }
    sum
}

/// All J-functionals over the signed critical set.
pub fn j_functionals(f: &PiecewiseMap, v: &Observable, tol: f64) -> Vec<(CritId, f64)> {
    f.signed_critical_set()
        .into_iter()
        .map(|c| (c, j_functional(f, f.crit_point(c), v, tol)))
        .collect()
}

pub fn max_abs_j(f: &PiecewiseMap, v: &Observable, tol: f64) -> f64 {
    j_functionals(f, v, tol).iter().map(|(_, j)| j.abs()).fold(0.0, f64::max)
}

/// Errors unless every J-functional is below `tol_j`.
pub fn require_horizontal(f: &PiecewiseMap, v: &Observable, tol_j: f64) -> Result<()> {
    let m = max_abs_j(f, v, DEFAULT_TOL);
    if m > tol_j {
        Err(PwxError::NonHorizontal(m))
    } else {
        Ok(())
    }
}

/// `(k + 1/2) / n` grid of signed points.
pub fn uniform_grid(f: &PiecewiseMap, n: usize) -> Vec<SignedPoint> {
    (0..n)
        .map(|k| f.point(f.a() + f.len() * (k as f64 + 0.5) / n as f64))
        .collect()
}

/// The signed critical set as points.
pub fn critical_points(f: &PiecewiseMap) -> Vec<SignedPoint> {
    f.signed_critical_set().into_iter().map(|c| f.crit_point(c)).collect()
}

/// `sup |v(x) - alpha(f x) + Df(x) alpha(x)|` over the grid, with lateral limits.
pub fn tce_residual<A: Fn(SignedPoint) -> f64>(
    f: &PiecewiseMap,
    v: &Observable,
    alpha: A,
    grid: &[SignedPoint],
) -> f64 {
    grid.iter()
        .map(|&p| (v.value(p) - alpha(f.eval(p)) + f.d1(p) * alpha(p)).abs())
        .fold(0.0, f64::max)
}

/// `phi = (Dv + D^2 f * alpha) / Df`.
pub struct Phi<'a> {
    f: &'a PiecewiseMap,
    v: &'a Observable,
    alpha: AlphaSeries<'a>,
}

pub fn phi_observable<'a>(f: &'a PiecewiseMap, v: &'a Observable, tol: f64) -> Phi<'a> {
    Phi { f, v, alpha: AlphaSeries::new(f, v, tol) }
}

impl Phi<'_> {
    pub fn eval(&self, p: SignedPoint) -> f64 {
        self.on_piece(self.f.branch_index(p), p.x, p.side)
    }
}

impl Evaluator for Phi<'_> {
    fn on_piece(&self, piece: usize, x: f64, side: Side) -> f64 {
        let e = self.f.branch(piece);
        let d1 = e.eval(x, side, 1);
        let d2 = e.eval(x, side, 2);
        let dv = self.v.on_piece_order(piece, x, side, 1);
        if d2 == 0.0 {
            return dv / d1;
        }
        let a = self.alpha.eval(SignedPoint::new(x, side));
        (dv + d2 * a) / d1
    }
}

/// Observables `w_c` dual to the J-functionals.
#[derive(Debug, Clone)]
pub struct DualBasis {
    pub points: Vec<CritId>,
    pub basis: Vec<Observable>,
    /// `[J(f, d, w_c^0)]` for the uncorrected bumps.
    pub raw_gram: Vec<Vec<f64>>,
    /// `[J(f, d, w_c)]` after the correction solve.
    pub gram: Vec<Vec<f64>>,
    pub delta: f64,
}

impl DualBasis {
    pub fn gram_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for (i, row) in self.gram.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                e = e.max((g - target).abs());
            }
        }
        e
    }
}

/// Minimal separation between distinct points of the truncated critical orbits.
pub fn critical_orbit_gap(f: &PiecewiseMap, depth: usize) -> f64 {
    let mut xs: Vec<f64> = f.breakpoints().to_vec();
    let tol = f.snap_tol();
    for c in f.signed_critical_set() {
        let orbit = f.iterate(f.crit_point(c), depth);
        let stop = orbit.hit_critical.unwrap_or(depth);
        // stop at the first return so float drift on cycles adds no spurious points
        for (i, p) in orbit.points[..=stop].iter().enumerate() {
            if orbit.points[..i].iter().any(|q| (q.x - p.x).abs() <= tol) {
                break;
            }
            xs.push(p.x);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup_by(|a, b| (*a - *b).abs() <= tol);
    xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

pub fn dual_basis(f: &PiecewiseMap, delta: f64, orbit_depth: usize) -> Result<DualBasis> {
    let gap = critical_orbit_gap(f, orbit_depth);
    if gap < 2.0 * delta {
        return Err(PwxError::GapTooSmall { gap, delta });
    }
    let points = f.signed_critical_set();
    let n = f.n_branches();
    let raw: Vec<Observable> = points
        .iter()
        .map(|c| {
            let p = f.crit_point(*c);
            let piece = f.branch_index(p);
            // the piece already confines the bump to the correct side of c
            let side = BumpSide::Both;
            let mut pieces = vec![Expr::constant(0.0); n];
            pieces[piece] =
                Expr::Bump(Bump { center: p.x, delta, value: 1.0, slope: 0.0, side });
            Observable::from_pieces(f, pieces).unwrap().with_sup_hint(1.0)
        })
        .collect();
    let gram_of = |basis: &[Observable]| -> Vec<Vec<f64>> {
        points
            .iter()
            .map(|d| basis.iter().map(|w| j_functional(f, f.crit_point(*d), w, 1e-15)).collect())
            .collect()
    };
    let raw_gram = gram_of(&raw);
    let m = points.len();
    let g = DMatrix::from_fn(m, m, |i, j| raw_gram[i][j]);
    let ginv = g.try_inverse().ok_or(PwxError::GapTooSmall { gap, delta })?;
    let basis: Vec<Observable> = (0..m)
        .map(|c| {
            let coeffs: Vec<f64> = (0..m).map(|e| ginv[(e, c)]).collect();
            let refs: Vec<&Observable> = raw.iter().collect();
            let sup = coeffs.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
            Observable::combination(&refs, &coeffs).with_sup_hint(sup)
        })
        .collect();
    let gram = gram_of(&basis);
    Ok(DualBasis { points, basis, raw_gram, gram, delta })
}

#[derive(Debug, Clone)]
pub struct HorizontalCorrection {
    pub coefficients: Vec<(CritId, f64)>,
    pub corrected: Observable,
    pub max_abs_j: f64,
}

/// `v + sum_c t_c w_c` with `t_c = -J(f, c, v)`.
pub fn horizontal_correction(
    f: &PiecewiseMap,
    v: &Observable,
    basis: &DualBasis,
) -> HorizontalCorrection {
    let coefficients: Vec<(CritId, f64)> = basis
        .points
        .iter()
        .map(|c| (*c, -j_functional(f, f.crit_point(*c), v, 1e-15)))
        .collect();
    let mut corrected = v.clone();
    for ((_, t), w) in coefficients.iter().zip(&basis.basis) {
        if *t != 0.0 {
            corrected = corrected.add(&w.scale(*t));
        }
    }
    let max_abs_j = max_abs_j(f, &corrected, 1e-15);
    HorizontalCorrection { coefficients, corrected, max_abs_j }
}

fn periodic_orbit(f: &PiecewiseMap, p: SignedPoint, period: usize) -> Result<(Vec<SignedPoint>, Vec<f64>)> {
    if period == 0 {
        return Err(PwxError::NotPeriodic(0));
    }
    let mut pts = Vec::with_capacity(period);
    let mut ds = Vec::with_capacity(period);
    let mut cur = p;
    for j in 0..period {
        if f.is_critical(cur) {
            return Err(PwxError::OrbitHitsCritical(j));
        }
        pts.push(cur);
        ds.push(f.d1(cur));
        cur = f.eval(cur);
    }
    let mult: f64 = ds.iter().product();
    if (cur.x - p.x).abs() > f.snap_tol() * mult.abs().max(1.0) {
        return Err(PwxError::NotPeriodic(period));
    }
    Ok((pts, ds))
}

/// Exact value of the series solution at every point of a periodic orbit.
pub fn periodic_alpha(f: &PiecewiseMap, v: &Observable, p: SignedPoint, period: usize) -> Result<Vec<f64>> {
    let (pts, ds) = periodic_orbit(f, p, period)?;
    let m = period;
    let mult: f64 = ds.iter().product();
    Ok((0..m)
        .map(|j| {
            let mut prod = 1.0;
            let mut s = 0.0;
            for k in 0..m {
                let idx = (j + k) % m;
                prod *= ds[idx];
                s += v.value(pts[idx]) / prod;
            }
            -s / (1.0 - 1.0 / mult)
        })
        .collect())
}

/// Sum of `phi` along a periodic orbit.
pub fn multiplier_functional(
    f: &PiecewiseMap,
    p: SignedPoint,
    period: usize,
    v: &Observable,
) -> Result<f64> {
    let (pts, ds) = periodic_orbit(f, p, period)?;
    let alpha = periodic_alpha(f, v, p, period)?;
    let mut s = 0.0;
    for j in 0..period {
        let q = pts[j];
        let d2 = f.deriv(q, 2)?;
        s += (v.eval(q, 1) + d2 * alpha[j]) / ds[j];
    }
    Ok(s)
}

/// Values on a finite set of signed points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrbitFunction {
    pub points: Vec<SignedPoint>,
    pub values: Vec<f64>,
}

impl OrbitFunction {
    pub fn find(&self, f: &PiecewiseMap, p: SignedPoint) -> Option<usize> {
        let tol = f.snap_tol();
        self.points.iter().position(|q| {
            (q.x - p.x).abs() <= tol && (q.side == p.side || !f.is_critical(p))
        })
    }

    pub fn get(&self, f: &PiecewiseMap, p: SignedPoint) -> Option<f64> {
        self.find(f, p).map(|i| self.values[i])
    }
}

/// Truncated forward orbits of the signed critical set and of extra seeds.
pub fn orbit_set(f: &PiecewiseMap, depth: usize, seeds: &[SignedPoint]) -> Vec<SignedPoint> {
    let mut set = OrbitFunction::default();
    let starts: Vec<SignedPoint> = critical_points(f).into_iter().chain(seeds.iter().copied()).collect();
    for s in starts {
        let mut cur = s;
        for step in 0..=depth {
            if set.find(f, cur).is_some() {
                break;
            }
            set.points.push(cur);
            set.values.push(0.0);
            if step > 0 && f.is_critical(cur) {
                break;
            }
            cur = f.eval(cur);
        }
    }
    set.points
}

/// Samples `v` on the truncated orbit set.
pub fn sample_on_orbits(f: &PiecewiseMap, v: &Observable, depth: usize, seeds: &[SignedPoint]) -> OrbitFunction {
    let points = orbit_set(f, depth, seeds);
    let values = points.iter().map(|&p| v.value(p)).collect();
    OrbitFunction { points, values }
}

#[derive(Debug, Clone)]
pub struct OrbitSolution {
    pub alpha: OrbitFunction,
    /// Largest equation residual over points whose image is stored.
    pub residual: f64,
    /// Points whose forward orbit left the stored set before closing.
    pub truncated: usize,
}

/// Solves `v(a) = alpha(f a) - Df(a) alpha(a)` on a stored orbit set with
/// `alpha = 0` on the signed critical set.
pub fn orbit_solve(f: &PiecewiseMap, data: &OrbitFunction, depth: usize, tol: f64) -> Result<OrbitSolution> {
    let n = data.points.len();
    let mut alpha = vec![0.0; n];
    let mut truncated = 0;
    for (ia, &a) in data.points.iter().enumerate() {
        if f.is_critical(a) {
            continue;
        }
        let mut path: Vec<usize> = Vec::new();
        let mut ds: Vec<f64> = Vec::new();
        let mut cur = a;
        let mut sum = 0.0;
        let mut prod = 1.0;
        loop {
            let Some(idx) = data.find(f, cur) else {
                truncated += 1;
                break;
            };
            if !path.is_empty() && f.is_critical(cur) {
                break;
            }
            if let Some(r) = path.iter().position(|&q| q == idx) {
                let cyc_d = &ds[r..];
                let mult: f64 = cyc_d.iter().product();
                let mut cp = 1.0;
                let mut cs = 0.0;
                for (k, &q) in path[r..].iter().enumerate() {
                    cp *= cyc_d[k];
                    cs += data.values[q] / cp;
                }
                sum += (-cs / (1.0 - 1.0 / mult)) / prod;
                break;
            }
            if path.len() > depth {
                truncated += 1;
                break;
            }
            let d = f.d1(cur);
            path.push(idx);
            ds.push(d);
            prod *= d;
            sum -= data.values[idx] / prod;
            cur = f.eval(cur);
        }
        alpha[ia] = sum;
    }
    let sol = OrbitFunction { points: data.points.clone(), values: alpha };
    let mut residual: f64 = 0.0;
    for (i, &a) in data.points.iter().enumerate() {
        let fa = f.eval(a);
        let Some(j) = sol.find(f, fa) else { continue };
        let r = (data.values[i] - sol.values[j] + f.d1(a) * sol.values[i]).abs();
        if f.is_critical(a) && r > tol {
            return Err(PwxError::InconsistentData(r));
        }
        residual = residual.max(r);
    }
    Ok(OrbitSolution { alpha: sol, residual, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling() -> PiecewiseMap {
        PiecewiseMap::new(vec![0.0, 0.5, 1.0], vec![Expr::linear(0.0, 2.0), Expr::linear(-1.0, 2.0)])
            .unwrap()
    }

    #[test]
    fn series_terms_cover_tail() {
        let n = series_terms(1.0, 2.0, 1e-12);
        assert!(0.5f64.powi(n as i32) < 1e-12);
    }

    #[test]
    fn alpha_at_breakpoints_is_prescribed() {
        let f = doubling();
        let v = Observable::uniform(&f, Expr::sin_2pi(1.0, 1.0));
        assert_eq!(alpha_series(&f, &v, SignedPoint::plus(0.5), 1e-13), 0.0);
        let moved = v.clone().with_velocity(vec![0.0, 0.25, 0.0]).unwrap();
        assert_eq!(alpha_series(&f, &moved, SignedPoint::minus(0.5), 1e-13), 0.25);
    }

    #[test]
    fn orbit_solve_matches_series_on_periodic_seed() {
        let f = doubling();
        let v = Observable::uniform(&f, Expr::sin_2pi(1.0, 1.0));
        let seeds = [SignedPoint::plus(1.0 / 3.0), SignedPoint::plus(0.1)];
        let data = sample_on_orbits(&f, &v, 20, &seeds);
        let sol = orbit_solve(&f, &data, 20, 1e-12).unwrap();
        let i = sol.alpha.find(&f, SignedPoint::plus(1.0 / 3.0)).unwrap();
        assert!((sol.alpha.values[i] + 3f64.sqrt() / 6.0).abs() < 1e-12);
    }
}
