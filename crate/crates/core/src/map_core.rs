//! Piecewise expanding maps on the doubled interval.

use crate::cylinder;
use crate::error::{PwxError, Result};
use crate::expr::{Expr, RawExpr};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Relative tolerance deciding when a coordinate is a breakpoint.
pub const EPS_SNAP: f64 = 1e-12;

/// Default depth for critical relation searches.
pub const DEFAULT_RELATION_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Side::Plus => '+',
            Side::Minus => '-',
        }
    }
}

/// A point of the doubled interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedPoint {
    pub x: f64,
    pub side: Side,
}

impl SignedPoint {
    pub fn new(x: f64, side: Side) -> Self {
        SignedPoint { x, side }
    }

    pub fn plus(x: f64) -> Self {
        SignedPoint { x, side: Side::Plus }
    }

    pub fn minus(x: f64) -> Self {
        SignedPoint { x, side: Side::Minus }
    }
}

impl fmt::Display for SignedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.x, self.side.symbol())
    }
}

/// A signed breakpoint `c_index^side`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CritId {
    pub index: usize,
    pub side: Side,
}

impl fmt::Display for CritId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}{}", self.index, self.side.symbol())
    }
}

/// `f^k(from) = to` with both ends in the signed critical set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CriticalRelation {
    pub from: CritId,
    pub to: CritId,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedOrbit {
    pub points: Vec<SignedPoint>,
    /// First index `k >= 1` with `points[k]` in the signed critical set.
    pub hit_critical: Option<usize>,
}

/// A map in the class of piecewise expanding maps with breakpoints `c_0 < ... < c_n`.
#[derive(Debug, Clone)]
pub struct PiecewiseMap {
    breaks: Vec<f64>,
    branches: Vec<Expr>,
    increasing: Vec<bool>,
    expansion_floor: f64,
}

/// JSON form of a map. `breakpoints` lists the interior breakpoints only.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MapDef {
    pub interval: [f64; 2],
    pub breakpoints: Vec<f64>,
    pub branches: Vec<RawExpr>,
}

const FLOOR_GRID: usize = 512;

/// Index of the piece of the partition `breaks` used at `p`.
pub fn locate(breaks: &[f64], p: SignedPoint) -> usize {
    let n = breaks.len() - 1;
    let i = match p.side {
        Side::Plus => breaks.partition_point(|&c| c <= p.x),
        Side::Minus => breaks.partition_point(|&c| c < p.x),
    };
    i.saturating_sub(1).min(n - 1)
}

fn branch_floor(e: &Expr, lo: f64, hi: f64, increasing: bool) -> f64 {
    if let Some((_, c1)) = e.as_affine() {
        return c1.abs();
    }
    let d = |x: f64| {
        let v = e.eval(x, crate::map_core::Side::Plus, 1);
        if increasing {
            v
        } else {
            -v
        }
    };
    let n = FLOOR_GRID;
    let h = (hi - lo) / n as f64;
    let mut best = f64::INFINITY;
    let mut best_i = 0;
    for i in 0..=n {
        let x = if i == n { hi } else { lo + i as f64 * h };
        let v = d(x);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    if best <= 0.0 {
        return best.min(0.0);
    }
    // golden-section refinement around the grid minimum
    let mut l = (lo + (best_i as f64 - 1.0) * h).max(lo);
    let mut r = (lo + (best_i as f64 + 1.0) * h).min(hi);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = r - g * (r - l);
        let m2 = l + g * (r - l);
        if d(m1) < d(m2) {
            r = m2;
        } else {
            l = m1;
        }
    }
    best.min(d(0.5 * (l + r)))
}

impl PiecewiseMap {
    /// Builds and validates a map from the full breakpoint list `c_0..c_n`.
    pub fn new(breaks: Vec<f64>, branches: Vec<Expr>) -> Result<Self> {
        Self::check_structure(&breaks, &branches)?;
        let (a, b) = (breaks[0], *breaks.last().unwrap());
        let tol = 1e-10 * (b - a);
        let mut increasing = Vec::with_capacity(branches.len());
        let mut floor = f64::INFINITY;
        for (i, e) in branches.iter().enumerate() {
            let (lo, hi) = (breaks[i], breaks[i + 1]);
            let d_lo = e.eval(lo, Side::Plus, 1);
            let d_hi = e.eval(hi, Side::Minus, 1);
            if d_lo == 0.0 || d_hi == 0.0 {
                return Err(PwxError::InvalidMap(format!(
                    "branch {i} has zero derivative at an endpoint"
                )));
            }
            let inc = d_lo > 0.0;
            increasing.push(inc);
            floor = floor.min(branch_floor(e, lo, hi, inc));
            let n = 256;
            for k in 0..=n {
                let x = lo + (hi - lo) * k as f64 / n as f64;
                let y = e.value(x);
                if !y.is_finite() || y < a - tol || y > b + tol {
                    return Err(PwxError::InvalidMap(format!(
                        "branch {i} leaves the interval: f({x}) = {y}"
                    )));
                }
            }
        }
        Ok(PiecewiseMap { breaks, branches, increasing, expansion_floor: floor })
    }

    /// Builds a map whose expansion floor is already known (used by families).
    pub fn with_floor(breaks: Vec<f64>, branches: Vec<Expr>, floor: f64) -> Result<Self> {
        Self::check_structure(&breaks, &branches)?;
        let increasing = branches
            .iter()
            .enumerate()
            .map(|(i, e)| e.eval(0.5 * (breaks[i] + breaks[i + 1]), Side::Plus, 1) > 0.0)
            .collect();
        Ok(PiecewiseMap { breaks, branches, increasing, expansion_floor: floor })
    }

    fn check_structure(breaks: &[f64], branches: &[Expr]) -> Result<()> {
        if breaks.len() < 2 || branches.len() + 1 != breaks.len() {
            return Err(PwxError::InvalidMap(format!(
                "{} breakpoints for {} branches",
                breaks.len(),
                branches.len()
            )));
        }
        if breaks.iter().any(|v| !v.is_finite()) || breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PwxError::InvalidMap("breakpoints must increase strictly".into()));
        }
        Ok(())
    }

    pub fn from_def(def: &MapDef) -> Result<Self> {
        let mut breaks = vec![def.interval[0]];
        breaks.extend(def.breakpoints.iter().copied());
        breaks.push(def.interval[1]);
        if def.branches.len() + 1 != breaks.len() {
            return Err(PwxError::Schema(format!(
                "{} interior breakpoints need {} branches, got {}",
                def.breakpoints.len(),
                def.breakpoints.len() + 1,
                def.branches.len()
            )));
        }
        let branches = def.branches.iter().map(Expr::from_raw).collect::<Result<Vec<_>>>()?;
        Self::new(breaks, branches)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let def: MapDef =
            serde_json::from_str(text).map_err(|e| PwxError::Schema(e.to_string()))?;
        Self::from_def(&def)
    }

    pub fn to_def(&self) -> MapDef {
        let n = self.breaks.len();
        MapDef {
            interval: [self.breaks[0], self.breaks[n - 1]],
            breakpoints: self.breaks[1..n - 1].to_vec(),
            branches: self.branches.iter().map(|e| e.to_raw()).collect(),
        }
    }

    /// The full breakpoint list `c_0..c_n`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn branches(&self) -> &[Expr] {
        &self.branches
    }

    pub fn branch(&self, i: usize) -> &Expr {
        &self.branches[i]
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn increasing(&self, i: usize) -> bool {
        self.increasing[i]
    }

    pub fn a(&self) -> f64 {
        self.breaks[0]
    }

    pub fn b(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn len(&self) -> f64 {
        self.b() - self.a()
    }

    pub fn snap_tol(&self) -> f64 {
        EPS_SNAP * self.len()
    }

    pub fn expansion_floor(&self) -> f64 {
        self.expansion_floor
    }

    /// Index of the breakpoint at coordinate `x`, if any (exact match).
    pub fn crit_index(&self, x: f64) -> Option<usize> {
        self.breaks.binary_search_by(|c| c.partial_cmp(&x).unwrap()).ok()
    }

    /// Replaces `y` by a breakpoint within the snap tolerance.
    pub fn snap(&self, y: f64) -> f64 {
        let tol = self.snap_tol();
        let i = self.breaks.partition_point(|&c| c < y);
        for j in [i.wrapping_sub(1), i] {
            if let Some(&c) = self.breaks.get(j) {
                if (c - y).abs() <= tol {
                    return c;
                }
            }
        }
        y.clamp(self.a(), self.b())
    }

    /// Valid signed point for coordinate `x` (side plus except at `b`).
    pub fn point(&self, x: f64) -> SignedPoint {
        if x >= self.b() {
            SignedPoint::minus(self.b())
        } else {
            SignedPoint::plus(x.max(self.a()))
        }
    }

    pub fn is_critical(&self, p: SignedPoint) -> bool {
        self.crit_index(p.x).is_some()
    }

    pub fn crit_id(&self, p: SignedPoint) -> Option<CritId> {
        self.crit_index(p.x).map(|index| CritId { index, side: p.side })
    }

    pub fn crit_point(&self, c: CritId) -> SignedPoint {
        SignedPoint::new(self.breaks[c.index], c.side)
    }

    /// The signed critical set `c_0^+, c_1^-, c_1^+, ..., c_n^-`.
    pub fn signed_critical_set(&self) -> Vec<CritId> {
        let n = self.breaks.len() - 1;
        let mut out = vec![CritId { index: 0, side: Side::Plus }];
        for i in 1..n {
            out.push(CritId { index: i, side: Side::Minus });
            out.push(CritId { index: i, side: Side::Plus });
        }
        out.push(CritId { index: n, side: Side::Minus });
        out
    }

    /// Branch used for the lateral evaluation at `p`.
    pub fn branch_index(&self, p: SignedPoint) -> usize {
        locate(&self.breaks, p)
    }

    /// Lateral evaluation with the outgoing side fixed by branch monotonicity.
    pub fn eval(&self, p: SignedPoint) -> SignedPoint {
        let i = self.branch_index(p);
        self.eval_on(i, p)
    }

    /// Evaluation on a prescribed branch (its analytic extension).
    pub fn eval_on(&self, i: usize, p: SignedPoint) -> SignedPoint {
        let y = self.snap(self.branches[i].eval(p.x, p.side, 0));
        let mut side = if self.increasing[i] { p.side } else { p.side.flip() };
        if y <= self.a() {
            side = Side::Plus;
        } else if y >= self.b() {
            side = Side::Minus;
        }
        SignedPoint::new(y, side)
    }

    /// One-sided derivative of order 1..=3.
    pub fn deriv(&self, p: SignedPoint, order: u8) -> Result<f64> {
        if !(1..=3).contains(&order) {
            return Err(PwxError::OrderUnavailable(order));
        }
        let i = self.branch_index(p);
        Ok(self.branches[i].eval(p.x, p.side, order as usize))
    }

    /// First derivative at a signed point.
    pub fn d1(&self, p: SignedPoint) -> f64 {
        let i = self.branch_index(p);
        self.branches[i].eval(p.x, p.side, 1)
    }

    pub fn iterate(&self, p: SignedPoint, n: usize) -> SignedOrbit {
        let mut points = Vec::with_capacity(n + 1);
        points.push(p);
        let mut hit = None;
        let mut cur = p;
        for k in 1..=n {
            cur = self.eval(cur);
            if hit.is_none() && self.is_critical(cur) {
                hit = Some(k);
            }
            points.push(cur);
        }
        SignedOrbit { points, hit_critical: hit }
    }

    /// `f^n(p)` and `Df^n(p)`.
    pub fn iterate_with_derivative(&self, p: SignedPoint, n: usize) -> (SignedPoint, f64) {
        let mut cur = p;
        let mut d = 1.0;
        for _ in 0..n {
            d *= self.d1(cur);
            cur = self.eval(cur);
        }
        (cur, d)
    }

    /// Infimum of `|Df|`; errors when it does not exceed 1.
    pub fn verify_expanding(&self) -> Result<f64> {
        if self.expansion_floor > 1.0 {
            Ok(self.expansion_floor)
        } else {
            Err(PwxError::NotExpanding(self.expansion_floor))
        }
    }

    pub fn critical_relations(&self, depth: usize) -> BTreeSet<CriticalRelation> {
        let mut out = BTreeSet::new();
        for from in self.signed_critical_set() {
            let orbit = self.iterate(self.crit_point(from), depth);
            for (k, p) in orbit.points.iter().enumerate().skip(1) {
                if let Some(to) = self.crit_id(*p) {
                    out.insert(CriticalRelation { from, to, k });
                }
            }
        }
        out
    }

    /// Empirical distortion constants of `f^n` over its branch cylinders.
    ///
    /// Returns the largest ratio `sup |Df^n| / inf |Df^n|` over a cylinder and
    /// the largest `|ln|Df^n x| - ln|Df^n y|| / |f^n x - f^n y|`.
    pub fn distortion_constants(&self, n: usize) -> Result<(f64, f64)> {
        let cyls = cylinder::cylinders(self, n, 1 << 18)?;
        let stride = (cyls.len() / 4096).max(1);
        let m = 9;
        let mut c_dist: f64 = 1.0;
        let mut c_distp: f64 = 0.0;
        for cyl in cyls.iter().step_by(stride) {
            let mut samples = Vec::with_capacity(m);
            for j in 0..m {
                let s = (j as f64 + 0.5) / m as f64;
                let x = cyl.lo + s * (cyl.hi - cyl.lo);
                let (y, d) = cylinder::compose(self, &cyl.itinerary, x);
                samples.push((y, d.abs()));
            }
            let dmax = samples.iter().map(|s| s.1).fold(0.0, f64::max);
            let dmin = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            c_dist = c_dist.max(dmax / dmin);
            for w in samples.windows(2) {
                let dy = (w[1].0 - w[0].0).abs();
                if dy > 0.0 {
                    c_distp = c_distp.max((w[1].1.ln() - w[0].1.ln()).abs() / dy);
                }
            }
        }
        Ok((c_dist, c_distp))
    }
}
