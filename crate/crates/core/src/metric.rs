//! The pressure pseudo-metric: asymptotic covariance of Birkhoff sums of the
//! observables `phi_v`, and the degeneracy test for coboundary directions.

use crate::cohomology::{self, Phi};
use crate::cylinder::{self, compose, pull_back, Cylinder};
use crate::error::{PwxError, Result};
use crate::map_core::{PiecewiseMap, SignedPoint};
use crate::observable::{Evaluator, Observable};
use crate::quad::{self, Budget};
use crate::transfer::{self, UlamOperator};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct SigmaControls {
    /// Multipliers of the period `p(f)` used as `N`.
    pub n_multipliers: Vec<usize>,
    pub n_bins: usize,
    /// Correlations below this (relative to the lag-0 term) end the lag sum.
    pub lag_tol: f64,
    pub max_lag: usize,
    pub mean_zero_tol: f64,
    pub budget: u64,
}

impl Default for SigmaControls {
    fn default() -> Self {
        SigmaControls {
            n_multipliers: vec![8, 16, 32, 64],
            n_bins: 256,
            lag_tol: 1e-12,
            max_lag: 16,
            mean_zero_tol: 1e-6,
            budget: quad::DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaEstimate {
    pub n_list: Vec<usize>,
    pub values: Vec<f64>,
    pub extrapolated: f64,
    pub converged: bool,
    pub period: usize,
    /// Largest lag kept in the correlation sums.
    pub lags: usize,
    pub evaluations: u64,
}

/// Lebesgue pushed forward `i` times, as bin densities; `None` means constant one.
fn pushed_densities(u: &UlamOperator, count: usize) -> Vec<Option<Vec<f64>>> {
    let w = u.width();
    let mut mu = vec![w; u.n_bins];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let dens: Vec<f64> = mu.iter().map(|m| m / w).collect();
        let flat = dens.iter().all(|d| (d - 1.0).abs() < 1e-13);
        out.push(if flat { None } else { Some(dens) });
        mu = u.push(&mu);
    }
    out
}

/// `int phi_a(x) rho(x) phi_b(f^k x) dx` over the level-`k + 1` cylinders.
fn correlation<A: Evaluator + ?Sized, B: Evaluator + ?Sized>(
    f: &PiecewiseMap,
    cyls: &[Cylinder],
    k: usize,
    a: &A,
    b: &B,
    rho: Option<&[f64]>,
    u: &UlamOperator,
    budget: &Budget,
) -> Result<f64> {
    let parts: Vec<f64> = cyls
        .par_iter()
        .map(|c| -> Result<f64> {
            let itin = &c.itinerary;
            let g = |x: f64| {
                let (y, _) = compose(f, &itin[..k], x);
                let r = rho.map_or(1.0, |d| d[u.bin_of(x)]);
                a.on_piece(itin[0] as usize, x, crate::Side::Plus)
                    * r
                    * b.on_piece(itin[k] as usize, y, crate::Side::Plus)
            };
            // split at bin edges where the density jumps
            let mut cuts = vec![c.lo];
            if rho.is_some() {
                let (i0, i1) = (u.bin_of(c.lo), u.bin_of(c.hi));
                for i in i0 + 1..=i1 {
                    let e = u.edge(i);
                    if e > c.lo && e < c.hi {
                        cuts.push(e);
                    }
                }
            }
            cuts.push(c.hi);
            budget.charge((cuts.len() as u64 - 1) * 20 * (k as u64 + 1))?;
            Ok(cuts
                .windows(2)
                .map(|w| {
                    let m = 0.5 * (w[0] + w[1]);
                    quad::gauss(&g, w[0], m) + quad::gauss(&g, m, w[1])
                })
                .sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(quad::pairwise_sum(&parts))
}

/// `sigma_N = (1/N) int (sum_{i<N} phi1 o f^i)(sum_{j<N} phi2 o f^j) dm` for
/// `N` in the multiples of the period, via lagged correlations against the
/// pushed-forward Lebesgue densities.
pub fn sigma<A: Evaluator + ?Sized, B: Evaluator + ?Sized>(
    f: &PiecewiseMap,
    phi1: &A,
    phi2: &B,
    ctl: &SigmaControls,
) -> Result<SigmaEstimate> {
    let u = transfer::ulam_matrix(f, ctl.n_bins)?;
    let period = transfer::peripheral_spectrum(&u, transfer::DEFAULT_PERIPHERAL_TOL)?.period;
    let one = |_: f64| 1.0;
    let tests: [&(dyn Fn(f64) -> f64 + Sync); 1] = [&one];
    let m = transfer::phi_mean_zero_check(f, &u, period, phi1, &tests)
        .max(transfer::phi_mean_zero_check(f, &u, period, phi2, &tests));
    if m > ctl.mean_zero_tol {
        return Err(PwxError::MeanZeroViolated(m));
    }
    let n_list: Vec<usize> = ctl.n_multipliers.iter().map(|m| m * period).collect();
    let n_max = *n_list.iter().max().ok_or(PwxError::Schema("empty N list".into()))?;
    let budget = Budget::new(ctl.budget);
    let rhos = pushed_densities(&u, n_max);

    // correlations c12[i][k] and c21[i][k], reused while the density is unchanged
    let mut cyls = cylinder::cylinders(f, 1, usize::MAX)?;
    let mut levels = vec![cyls.clone()];
    let mut c12: Vec<Vec<f64>> = Vec::with_capacity(n_max);
    let mut c21: Vec<Vec<f64>> = Vec::with_capacity(n_max);
    let mut lags = 0;
    let mut capped = false;
    for i in 0..n_max {
        if i > 0 && rhos[i] == rhos[i - 1] {
            c12.push(c12[i - 1].clone());
            c21.push(c21[i - 1].clone());
            continue;
        }
        let rho = rhos[i].as_deref();
        let mut r12 = Vec::new();
        let mut r21 = Vec::new();
        let mut quiet = 0;
        for k in 0..n_max {
            if k > ctl.max_lag {
                capped = true;
                break;
            }
            while levels.len() <= k {
                cyls = cylinder::next_level(f, &cyls, (ctl.budget / 20) as usize)?;
                levels.push(cyls.clone());
            }
            let cl = &levels[k];
            let a = correlation(f, cl, k, phi1, phi2, rho, &u, &budget)?;
            let b = if k == 0 { a } else { correlation(f, cl, k, phi2, phi1, rho, &u, &budget)? };
            r12.push(a);
            r21.push(b);
            let scale = r12[0].abs().max(r21[0].abs()).max(1e-300);
            if k > 0 && a.abs().max(b.abs()) <= ctl.lag_tol * scale {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        lags = lags.max(r12.len() - 1);
        c12.push(r12);
        c21.push(r21);
    }
    let values: Vec<f64> = n_list
        .iter()
        .map(|&n| {
            let terms: Vec<f64> = (0..n)
                .map(|i| {
                    let kmax = (n - 1 - i).min(c12[i].len() - 1);
                    let mut s = c12[i][0];
                    for k in 1..=kmax {
                        s += c12[i][k] + c21[i][k];
                    }
                    s
                })
                .collect();
            quad::pairwise_sum(&terms) / n as f64
        })
        .collect();
    let k = values.len();
    let extrapolated = if k >= 2 { 0.5 * (values[k - 1] + values[k - 2]) } else { values[0] };
    let drift = if k >= 2 { (values[k - 1] - values[k - 2]).abs() } else { f64::INFINITY };
    let converged = !capped && drift <= 0.05 * extrapolated.abs() + 1e-9;
    Ok(SigmaEstimate { n_list, values, extrapolated, converged, period, lags, evaluations: budget.used() })
}

/// `<v1, v2> = sigma(phi_v1, phi_v2)` on horizontal directions.
pub fn pressure_inner(f: &PiecewiseMap, v1: &Observable, v2: &Observable, ctl: &SigmaControls) -> Result<SigmaEstimate> {
    cohomology::require_horizontal(f, v1, 1e-8)?;
    cohomology::require_horizontal(f, v2, 1e-8)?;
    let p1: Phi = cohomology::phi_observable(f, v1, 1e-15);
    let p2: Phi = cohomology::phi_observable(f, v2, 1e-15);
    sigma(f, &p1, &p2, ctl)
}

/// Periodic points of minimal period `1..=max_period` whose orbits avoid the
/// breakpoints, one representative per orbit.
pub fn periodic_orbits(f: &PiecewiseMap, max_period: usize) -> Result<Vec<(SignedPoint, usize)>> {
    let mut out: Vec<(SignedPoint, usize)> = Vec::new();
    let mut seen: Vec<f64> = Vec::new();
    let tol = 1e-9 * f.len();
    let mut cyls = vec![cylinder::root(f)];
    for m in 1..=max_period {
        cyls = cylinder::next_level(f, &cyls, 1 << 20)?;
        for c in &cyls {
            let (lo, hi) = if c.img_lo <= c.img_hi { (c.img_lo, c.img_hi) } else { (c.img_hi, c.img_lo) };
            if lo > c.lo || hi < c.hi {
                continue;
            }
            let mut x = 0.5 * (c.lo + c.hi);
            for _ in 0..400 {
                x = pull_back(f, &c.itinerary, x);
            }
            let p = f.point(x);
            let orbit = f.iterate(p, m);
            if orbit.hit_critical.is_some() || (orbit.points[m].x - x).abs() > tol {
                continue;
            }
            let minimal = (1..m).all(|d| (orbit.points[d].x - x).abs() > tol);
            if !minimal || seen.iter().any(|s| (s - x).abs() <= tol) {
                continue;
            }
            seen.extend(orbit.points[..m].iter().map(|q| q.x));
            out.push((p, m));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyReport {
    pub inner: SigmaEstimate,
    /// `sum_{j<M} phi(f^j q)` per probe orbit.
    pub periodic_sums: Vec<(f64, usize, f64)>,
    pub max_periodic_sum: f64,
    pub degenerate: bool,
}

/// Default `N` multipliers for the degeneracy test, long enough that a
/// coboundary's `1/N` decay falls below the threshold.
pub const DEGENERACY_MULTIPLIERS: [usize; 5] = [8, 16, 32, 64, 128];
pub const DEGENERACY_TOL: f64 = 0.02;

pub fn degeneracy_check(
    f: &PiecewiseMap,
    w: &Observable,
    probes: &[(SignedPoint, usize)],
    ctl: &SigmaControls,
    tol: f64,
) -> Result<DegeneracyReport> {
    cohomology::require_horizontal(f, w, 1e-8)?;
    let inner = pressure_inner(f, w, w, ctl)?;
    let phi = cohomology::phi_observable(f, w, 1e-15);
    let mut periodic_sums = Vec::new();
    for &(q, m) in probes {
        let orbit = f.iterate(q, m);
        if let Some(j) = orbit.hit_critical.filter(|&j| j <= m) {
            return Err(PwxError::OrbitHitsCritical(j));
        }
        let s: f64 = orbit.points[..m].iter().map(|&p| phi.eval(p)).sum();
        periodic_sums.push((q.x, m, s));
    }
    let max_periodic_sum = periodic_sums.iter().map(|s| s.2.abs()).fold(0.0, f64::max);
    let degenerate = inner.extrapolated.abs() < tol && max_periodic_sum < tol;
    Ok(DegeneracyReport { inner, periodic_sums, max_periodic_sum, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn doubling_periodic_orbits() {
        let f = bundled::doubling();
        let orbits = periodic_orbits(&f, 3).unwrap();
        // period 2: {1/3, 2/3}; period 3: {1/7, 2/7, 4/7} and {3/7, 6/7, 5/7}
        let count = |m| orbits.iter().filter(|o| o.1 == m).count();
        assert_eq!((count(2), count(3)), (1, 2));
    }
}
