//! Critical-orbit classification (finite orbit or Misiurewicz), multiplier
//! ratio invariants, the quasisymmetric obstruction, the tangent condition and
//! the codimension `D_f`.

use crate::cohomology::{self, Phi};
use crate::error::{PwxError, Result};
use crate::map_core::{CritId, PiecewiseMap, Side, SignedPoint};
use crate::observable::Observable;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use serde::Serialize;

/// Depth used to confirm a Misiurewicz side.
pub const TYPE_II_DEPTH: usize = 512;
/// Relative tolerance when comparing invariants.
pub const INVARIANT_TOL: f64 = 1e-9;
const MAX_DENOM: i64 = 1_000_000;

/// `p/q` with `q <= MAX_DENOM` reproducing `x` to rounding, if any.
pub fn recover_rational(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e12 {
            break;
        }
        let ai = a as i64;
        let h2 = ai.checked_mul(h1)?.checked_add(h0)?;
        let k2 = ai.checked_mul(k1)?.checked_add(k0)?;
        if k2 > MAX_DENOM {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let approx = h1 as f64 / k1 as f64;
        if (approx - x).abs() <= 2e-16 * x.abs().max(1.0) {
            return Some(BigRational::new(BigInt::from(h1), BigInt::from(k1)));
        }
        let frac = r - a;
        if frac == 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

/// Affine map with rational data, iterated exactly.
#[derive(Debug, Clone)]
pub struct ExactMap {
    breaks: Vec<BigRational>,
    coeffs: Vec<(BigRational, BigRational)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactPoint {
    pub x: BigRational,
    pub side: Side,
}

impl ExactMap {
    pub fn from_map(f: &PiecewiseMap) -> Option<ExactMap> {
        let breaks = f.breakpoints().iter().map(|&c| recover_rational(c)).collect::<Option<Vec<_>>>()?;
        let coeffs = f
            .branches()
            .iter()
            .map(|e| {
                let (c0, c1) = e.as_affine()?;
                Some((recover_rational(c0)?, recover_rational(c1)?))
            })
            .collect::<Option<Vec<_>>>()?;
        Some(ExactMap { breaks, coeffs })
    }

    fn locate(&self, p: &ExactPoint) -> usize {
        let n = self.breaks.len() - 1;
        let i = match p.side {
            Side::Plus => self.breaks.iter().filter(|c| **c <= p.x).count(),
            Side::Minus => self.breaks.iter().filter(|c| **c < p.x).count(),
        };
        i.saturating_sub(1).min(n - 1)
    }

    pub fn eval(&self, p: &ExactPoint) -> ExactPoint {
        let i = self.locate(p);
        let (c0, c1) = &self.coeffs[i];
        let y = c0 + c1 * &p.x;
        let mut side = if c1.is_positive() { p.side } else { p.side.flip() };
        if y <= self.breaks[0] {
            side = Side::Plus;
        } else if y >= *self.breaks.last().unwrap() {
            side = Side::Minus;
        }
        ExactPoint { x: y, side }
    }

    pub fn is_critical(&self, p: &ExactPoint) -> bool {
        self.breaks.contains(&p.x)
    }

    pub fn crit_point(&self, c: CritId) -> ExactPoint {
        ExactPoint { x: self.breaks[c.index].clone(), side: c.side }
    }
}

#[derive(Debug, Clone)]
enum Key {
    Exact(ExactPoint),
    Float(SignedPoint),
}

fn same(a: &Key, b: &Key, tol: f64) -> bool {
    match (a, b) {
        (Key::Exact(p), Key::Exact(q)) => p == q,
        (Key::Float(p), Key::Float(q)) => (p.x - q.x).abs() <= tol && p.side == q.side,
        _ => false,
    }
}

fn key_float(k: &Key) -> SignedPoint {
    match k {
        Key::Exact(p) => SignedPoint::new(p.x.to_f64().unwrap_or(f64::NAN), p.side),
        Key::Float(p) => *p,
    }
}

/// Critical orbit as identity keys (exact when possible).
fn critical_orbit_keys(f: &PiecewiseMap, exact: Option<&ExactMap>, c: CritId, depth: usize) -> Vec<Key> {
    let mut out = Vec::with_capacity(depth + 1);
    match exact {
        Some(e) => {
            let mut p = e.crit_point(c);
            for _ in 0..=depth {
                out.push(Key::Exact(p.clone()));
                p = e.eval(&p);
            }
        }
        None => {
            let mut p = f.crit_point(c);
            for _ in 0..=depth {
                out.push(Key::Float(p));
                p = f.eval(p);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct LandingOrbit {
    pub points: Vec<SignedPoint>,
    /// `|Df^M|` along the orbit.
    pub multiplier: f64,
}

#[derive(Debug, Clone, Serialize)]
pub enum SideKind {
    TypeI { n: usize, m: usize, orbit: usize },
    TypeII { n: usize },
    Unresolved { depth: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct SideClass {
    pub crit: CritId,
    pub kind: SideKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalClassification {
    pub sides: Vec<SideClass>,
    pub orbits: Vec<LandingOrbit>,
    pub exact: bool,
}

impl CriticalClassification {
    pub fn side(&self, c: CritId) -> Option<&SideKind> {
        self.sides.iter().find(|s| s.crit == c).map(|s| &s.kind)
    }

    pub fn fo_or_mc(&self) -> bool {
        self.sides.iter().all(|s| !matches!(s.kind, SideKind::Unresolved { .. }))
    }

    /// `(orbit, multiplier)` of a Type I side.
    pub fn landing(&self, c: CritId) -> Option<(usize, f64)> {
        match self.side(c)? {
            SideKind::TypeI { orbit, .. } => Some((*orbit, self.orbits[*orbit].multiplier)),
            _ => None,
        }
    }
}

/// Classifies every side of the signed critical set.
pub fn classify_critical(f: &PiecewiseMap, depth: usize) -> CriticalClassification {
    let exact = ExactMap::from_map(f);
    let tol = f.snap_tol();
    let mut sides = Vec::new();
    let mut orbits: Vec<LandingOrbit> = Vec::new();
    let mut orbit_keys: Vec<Vec<Key>> = Vec::new();
    for c in f.signed_critical_set() {
        let keys = critical_orbit_keys(f, exact.as_ref(), c, depth.max(2));
        let mut found = None;
        'outer: for j in 1..keys.len() {
            for i in 0..j {
                if same(&keys[i], &keys[j], tol) {
                    found = Some((i, j - i));
                    break 'outer;
                }
            }
        }
        let kind = match found {
            Some((n, m)) => {
                let cycle: Vec<Key> = keys[n..n + m].to_vec();
                let existing = orbit_keys
                    .iter()
                    .position(|o| o.iter().any(|k| same(k, &cycle[0], tol)));
                let orbit = match existing {
                    Some(o) => o,
                    None => {
                        let points: Vec<SignedPoint> = cycle.iter().map(key_float).collect();
                        let multiplier = points.iter().map(|p| f.d1(*p)).product::<f64>().abs();
                        orbits.push(LandingOrbit { points, multiplier });
                        orbit_keys.push(cycle);
                        orbits.len() - 1
                    }
                };
                SideKind::TypeI { n, m, orbit }
            }
            None => misiurewicz(f, c).map_or(SideKind::Unresolved { depth }, |n| SideKind::TypeII { n }),
        };
        sides.push(SideClass { crit: c, kind });
    }
    CriticalClassification { sides, orbits, exact: exact.is_some() }
}

/// Step after which both lateral orbits of `c` agree and stay away from the
/// breakpoints, if that happens within the Misiurewicz depth.
fn misiurewicz(f: &PiecewiseMap, c: CritId) -> Option<usize> {
    let gap = 1e-3 * f.len();
    let p0 = f.crit_point(c);
    let other = if p0.x > f.a() && p0.x < f.b() { Some(SignedPoint::new(p0.x, p0.side.flip())) } else { None };
    let mut p = p0;
    let mut q = other;
    let mut last_close = 0;
    for i in 1..=TYPE_II_DEPTH {
        p = f.eval(p);
        if let Some(qq) = q {
            let qn = f.eval(qq);
            if (qn.x - p.x).abs() > f.snap_tol() * 1e3 * (i as f64) {
                return None;
            }
            q = Some(qn);
        }
        let d = f.breakpoints().iter().map(|b| (b - p.x).abs()).fold(f64::INFINITY, f64::min);
        if d < gap {
            last_close = i;
        }
    }
    let n = last_close + 1;
    (n <= TYPE_II_DEPTH / 2).then_some(n)
}

#[derive(Debug, Clone, Serialize)]
pub struct QsEntry {
    pub index: usize,
    pub c: f64,
    pub orbit_plus: usize,
    pub orbit_minus: usize,
    pub ln_mult_plus: f64,
    pub ln_mult_minus: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QsInvariantTable {
    pub entries: Vec<QsEntry>,
}

pub fn qs_invariant(f: &PiecewiseMap, cl: &CriticalClassification) -> Result<QsInvariantTable> {
    let n = f.breakpoints().len() - 1;
    let mut entries = Vec::new();
    for index in 1..n {
        let plus = CritId { index, side: Side::Plus };
        let minus = CritId { index, side: Side::Minus };
        let (Some((op, mp)), Some((om, mm))) = (cl.landing(plus), cl.landing(minus)) else {
            return Err(PwxError::NotTypeI(format!("breakpoint {index}")));
        };
        entries.push(QsEntry {
            index,
            c: f.breakpoints()[index],
            orbit_plus: op,
            orbit_minus: om,
            ln_mult_plus: mp.ln(),
            ln_mult_minus: mm.ln(),
            ratio: mp.ln() / mm.ln(),
        });
    }
    Ok(QsInvariantTable { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QsVerdict {
    Obstructed,
    QsCompatible,
    Inconclusive,
}

pub fn qs_obstruction(f: &PiecewiseMap, g: &PiecewiseMap, depth: usize) -> Result<QsVerdict> {
    let cf = classify_critical(f, depth);
    let cg = classify_critical(g, depth);
    let tf = qs_invariant(f, &cf)?;
    let tg = qs_invariant(g, &cg)?;
    if tf.entries.len() != tg.entries.len() {
        return Err(PwxError::CombinatoricsMismatch("different number of breakpoints".into()));
    }
    for (a, b) in tf.entries.iter().zip(&tg.entries) {
        if (a.ratio - b.ratio).abs() > INVARIANT_TOL * a.ratio.abs().max(b.ratio.abs()) {
            return Ok(QsVerdict::Obstructed);
        }
    }
    Ok(if cf.fo_or_mc() { QsVerdict::QsCompatible } else { QsVerdict::Inconclusive })
}

/// Sum of `phi` over a landing orbit.
fn orbit_phi_sum(phi: &Phi, orbit: &LandingOrbit) -> f64 {
    orbit.points.iter().map(|&p| phi.eval(p)).sum()
}

/// Per interior Type I breakpoint: `(1/ln mu+) sum phi on O+ - (1/ln mu-) sum phi on O-`.
pub fn tangent_condition(
    f: &PiecewiseMap,
    v: &Observable,
    cl: &CriticalClassification,
    tol_j: f64,
) -> Result<Vec<f64>> {
    cohomology::require_horizontal(f, v, tol_j)?;
    let table = qs_invariant(f, cl)?;
    let phi = cohomology::phi_observable(f, v, 1e-15);
    let sums: Vec<f64> = cl.orbits.iter().map(|o| orbit_phi_sum(&phi, o)).collect();
    Ok(table
        .entries
        .iter()
        .map(|e| sums[e.orbit_plus] / e.ln_mult_plus - sums[e.orbit_minus] / e.ln_mult_minus)
        .collect())
}

pub fn qs_tangent_residual(f: &PiecewiseMap, v: &Observable, cl: &CriticalClassification) -> Result<f64> {
    Ok(tangent_condition(f, v, cl, 1e-8)?.iter().map(|r| r.abs()).fold(0.0, f64::max))
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

/// Landing orbits modulo the pairings imposed by interior Type I breakpoints.
pub fn qs_codimension(f: &PiecewiseMap, cl: &CriticalClassification) -> Result<usize> {
    if !cl.fo_or_mc() {
        return Err(PwxError::FOorMCFails("some critical side is unresolved".into()));
    }
    let mut parent: Vec<usize> = (0..cl.orbits.len()).collect();
    let n = f.breakpoints().len() - 1;
    for index in 1..n {
        let plus = cl.landing(CritId { index, side: Side::Plus });
        let minus = cl.landing(CritId { index, side: Side::Minus });
        if let (Some((a, _)), Some((b, _))) = (plus, minus) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    let roots = (0..parent.len()).filter(|&i| find(&mut parent, i) == i).count();
    Ok(roots)
}

/// Rank of the tangent-condition map over the probe directions.
pub fn tangent_rank(f: &PiecewiseMap, probes: &[Observable], cl: &CriticalClassification) -> Result<usize> {
    let rows: Vec<Vec<f64>> = probes
        .iter()
        .map(|v| tangent_condition(f, v, cl, 1e-8))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() || rows[0].is_empty() {
        return Ok(0);
    }
    let m = nalgebra::DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    Ok(sv.iter().filter(|&&s| s > 1e-8 * top.max(1e-300)).count())
}

#[derive(Debug, Clone, Serialize)]
pub struct QsRatioScan {
    pub scales: Vec<f64>,
    /// `sup max(r, 1/r)` per scale.
    pub per_scale: Vec<f64>,
    pub sup: f64,
}

/// `sup |h(x + d) - h(x)| / |h(x) - h(x - d)|` (symmetrized) over a uniform sample grid.
pub fn empirical_qs_ratio(xs: &[f64], hs: &[f64], scales: &[f64]) -> Result<QsRatioScan> {
    if xs.len() != hs.len() || xs.len() < 3 {
        return Err(PwxError::Schema("need matching samples".into()));
    }
    let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    let mut per_scale = Vec::new();
    for &d in scales {
        let s = (d / step).round() as usize;
        if s == 0 {
            return Err(PwxError::GridTooCoarse { spacing: step, limit: d });
        }
        let mut m: f64 = 1.0;
        for i in s..hs.len().saturating_sub(s) {
            let r = (hs[i + s] - hs[i]) / (hs[i] - hs[i - s]);
            if r.is_finite() && r > 0.0 {
                m = m.max(r.max(1.0 / r));
            } else {
                m = f64::INFINITY;
            }
        }
        per_scale.push(m);
    }
    let sup = per_scale.iter().copied().fold(1.0, f64::max);
    Ok(QsRatioScan { scales: scales.to_vec(), per_scale, sup })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::{One, Zero};

    #[test]
    fn rational_recovery() {
        let r = recover_rational(5.0 / 6.0).unwrap();
        assert_eq!(r, BigRational::new(5.into(), 6.into()));
        let r = recover_rational(-105.0 / 52.0).unwrap();
        assert_eq!(r, BigRational::new((-105).into(), 52.into()));
        assert!(recover_rational(std::f64::consts::PI).is_none());
        assert!(recover_rational(0.0).unwrap().is_zero());
        assert!(recover_rational(1.0).unwrap().is_one());
    }
}
