//! Deformation flows: decide whether a family stays in one topological class,
//! integrate `dh/dt = alpha_t(h)` into conjugacies and check them.

use crate::cohomology::{self, AlphaSeries, Phi};
use crate::cylinder::inverse_branch;
use crate::error::{PwxError, Result};
use crate::family::MapFamily;
use crate::map_core::{CriticalRelation, PiecewiseMap, SignedPoint};
use crate::transfer;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy)]
pub struct FlowControls {
    /// Local error allowed per unit of `t`.
    pub tol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Truncation tolerance of the series for `alpha_t`.
    pub series_tol: f64,
}

impl Default for FlowControls {
    fn default() -> Self {
        FlowControls { tol: 1e-9, initial_step: 1e-2, min_step: 1e-12, max_step: 0.05, series_tol: 1e-14 }
    }
}

/// `alpha_t(x)` for the family.
pub fn alpha_at<F: MapFamily + ?Sized>(fam: &F, t: f64, x: f64, series_tol: f64) -> Result<f64> {
    let (f, v) = fam.pair_at(t)?;
    Ok(AlphaSeries::new(&f, &v, series_tol).eval(f.point(x)))
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub ts: Vec<f64>,
    pub hs: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn end(&self) -> f64 {
        *self.hs.last().unwrap()
    }
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn breakpoint_hit(f: &PiecewiseMap, x: f64) -> Option<usize> {
    let tol = f.snap_tol();
    f.breakpoints().iter().position(|&c| (c - x).abs() <= tol)
}

/// Integrates from `t0` through the monotone list `times`, returning `h` at each.
pub fn integrate_times<F: MapFamily + ?Sized>(
    fam: &F,
    x0: f64,
    t0: f64,
    times: &[f64],
    ctl: &FlowControls,
) -> Result<Trajectory> {
    let rhs = |t: f64, x: f64| alpha_at(fam, t, x, ctl.series_tol);
    let mut out = Trajectory { ts: Vec::new(), hs: Vec::new(), accepted: 0, rejected: 0 };
    let mut t = t0;
    let mut x = x0;
    let mut pinned = breakpoint_hit(&fam.map_at(t0)?, x0);
    let mut h = ctl.initial_step;
    for &target in times {
        let dir = if target >= t { 1.0 } else { -1.0 };
        while (target - t) * dir > 0.0 {
            if let Some(i) = pinned {
                // breakpoints move with the family and carry the trajectory along
                t = target;
                x = fam.map_at(t)?.breakpoints()[i];
                break;
            }
            let step = h.min(ctl.max_step).min((target - t).abs());
            let hs = dir * step;
            let mut k = [0.0; 7];
            for s in 0..7 {
                let xs = x + hs * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
                k[s] = rhs(t + C[s] * hs, xs)?;
            }
            let x5 = x + hs * (0..7).map(|j| B5[j] * k[j]).sum::<f64>();
            let x4 = x + hs * (0..7).map(|j| B4[j] * k[j]).sum::<f64>();
            let err = (x5 - x4).abs();
            let allowed = ctl.tol * step;
            if err <= allowed || step <= ctl.min_step {
                if err > allowed {
                    return Err(PwxError::StepCollapse { t, x, step });
                }
                t = if step == (target - t).abs() { target } else { t + hs };
                x = x5;
                out.accepted += 1;
                let f = fam.map_at(t)?;
                x = x.clamp(f.a(), f.b());
                if let Some(i) = breakpoint_hit(&f, x) {
                    pinned = Some(i);
                    x = f.breakpoints()[i];
                }
                let grow = if err == 0.0 { 4.0 } else { (0.9 * (allowed / err).powf(0.2)).clamp(0.2, 4.0) };
                h = step * grow;
            } else {
                out.rejected += 1;
                h = (step * (0.9 * (allowed / err).powf(0.2)).clamp(0.1, 0.5)).max(ctl.min_step);
            }
        }
        out.ts.push(t);
        out.hs.push(x);
    }
    Ok(out)
}

/// `h_{t_target}(x0)` starting from `h_0 = id`.
pub fn integrate_deformation<F: MapFamily + ?Sized>(
    fam: &F,
    x0: f64,
    t_target: f64,
    ctl: &FlowControls,
) -> Result<Trajectory> {
    integrate_times(fam, x0, 0.0, &[t_target], ctl)
}

/// Transports `x` from parameter `t0` to `t1` along the flow.
pub fn transport<F: MapFamily + ?Sized>(fam: &F, x: f64, t0: f64, t1: f64, ctl: &FlowControls) -> Result<f64> {
    Ok(integrate_times(fam, x, t0, &[t1], ctl)?.end())
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugacyGrid {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// `values[i][j] = h_{t_i}(x_j)`.
    pub values: Vec<Vec<f64>>,
    pub residual: f64,
}

/// Fills `h_t(x)` for every `t` in the (sorted, same-sign) grid.
pub fn conjugacy_grid<F: MapFamily + ?Sized>(
    fam: &F,
    t_grid: &[f64],
    x_grid: &[f64],
    ctl: &FlowControls,
) -> Result<ConjugacyGrid> {
    let cols: Vec<Vec<f64>> = x_grid
        .par_iter()
        .map(|&x| Ok(integrate_times(fam, x, 0.0, t_grid, ctl)?.hs))
        .collect::<Result<Vec<_>>>()?;
    let values = (0..t_grid.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    let mut grid = ConjugacyGrid { t_grid: t_grid.to_vec(), x_grid: x_grid.to_vec(), values, residual: 0.0 };
    grid.residual = conjugacy_residual(fam, &grid, ctl)?;
    Ok(grid)
}

/// `sup |h_t(f_0 x) - f_t(h_t x)|`, with `h_t(f_0 x)` integrated afresh.
pub fn conjugacy_residual<F: MapFamily + ?Sized>(
    fam: &F,
    grid: &ConjugacyGrid,
    ctl: &FlowControls,
) -> Result<f64> {
    let f0 = fam.map_at(0.0)?;
    let mut worst: f64 = 0.0;
    for (i, &t) in grid.t_grid.iter().enumerate() {
        let ft = fam.map_at(t)?;
        let r = grid
            .x_grid
            .par_iter()
            .enumerate()
            .map(|(j, &x)| {
                let fx = f0.eval(f0.point(x)).x;
                let lhs = transport(fam, fx, 0.0, t, ctl)?;
                let rhs = ft.eval(ft.point(grid.values[i][j])).x;
                Ok((lhs - rhs).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        worst = r.into_iter().fold(worst, f64::max);
    }
    Ok(worst)
}

/// The point whose `f1`-itinerary matches the `f0`-itinerary of `x`.
pub fn itinerary_oracle(f0: &PiecewiseMap, f1: &PiecewiseMap, x: f64, depth: usize) -> Result<f64> {
    if f0.n_branches() != f1.n_branches() {
        return Err(PwxError::CombinatoricsMismatch(format!(
            "{} vs {} branches",
            f0.n_branches(),
            f1.n_branches()
        )));
    }
    for i in 0..f0.n_branches() {
        if f0.increasing(i) != f1.increasing(i) {
            return Err(PwxError::CombinatoricsMismatch(format!("branch {i} orientation differs")));
        }
    }
    let mut p = f0.point(x);
    let mut itin = Vec::with_capacity(depth);
    for _ in 0..depth {
        let k = f0.branch_index(p);
        itin.push(k);
        p = f0.eval_on(k, p);
    }
    // start at the same relative position inside the branch reached last
    let k = f0.branch_index(p);
    let (c0, c1) = (f0.breakpoints(), f1.breakpoints());
    let s = (p.x - c0[k]) / (c0[k + 1] - c0[k]);
    let mut y = c1[k] + s * (c1[k + 1] - c1[k]);
    for &k in itin.iter().rev() {
        y = inverse_branch(f1, k, y);
    }
    Ok(y)
}

/// `sum_{j<k} phi(f_0^j x)`, the derivative of `ln |Df_t^k(h_t x)|` at `t = 0`.
pub fn lyapunov_derivative<F: MapFamily + ?Sized>(fam: &F, x: SignedPoint, k: usize, tol: f64) -> Result<f64> {
    let (f, v) = fam.pair_at(0.0)?;
    let phi: Phi = cohomology::phi_observable(&f, &v, tol);
    let mut p = x;
    let mut s = 0.0;
    for j in 0..k {
        if f.is_critical(p) {
            return Err(PwxError::OrbitHitsCritical(j));
        }
        s += phi.eval(p);
        p = f.eval(p);
    }
    Ok(s)
}

/// `ln |Df_t^k(h_t x)|` with `h_t x` from the flow.
pub fn log_multiplier<F: MapFamily + ?Sized>(fam: &F, x: f64, k: usize, t: f64, ctl: &FlowControls) -> Result<f64> {
    let y = transport(fam, x, 0.0, t, ctl)?;
    let f = fam.map_at(t)?;
    let (_, d) = f.iterate_with_derivative(f.point(y), k);
    Ok(d.abs().ln())
}

/// Central difference of [`log_multiplier`] at `t = 0`.
pub fn lyapunov_fd<F: MapFamily + ?Sized>(fam: &F, x: f64, k: usize, dt: f64, ctl: &FlowControls) -> Result<f64> {
    Ok((log_multiplier(fam, x, k, dt, ctl)? - log_multiplier(fam, x, k, -dt, ctl)?) / (2.0 * dt))
}

/// Guaranteed Hölder exponent and prefactor of `h_t o h_{t0}^-1` for `|t - t0| = dt`.
pub fn holder_budget(c_ll: f64, dt: f64) -> (f64, f64) {
    let e = (-c_ll * dt.abs()).exp();
    (e, (1.0 - e).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct DeformationReport {
    pub relations_constant: bool,
    pub relation_counts: Vec<usize>,
    pub max_abs_j: f64,
    pub ly_contraction_sup: f64,
    pub ly_iterate: usize,
    pub is_deformation: bool,
}

pub fn check_deformation<F: MapFamily + ?Sized>(
    fam: &F,
    t_samples: &[f64],
    depth: usize,
    tol: f64,
) -> Result<DeformationReport> {
    let mut first: Option<BTreeSet<CriticalRelation>> = None;
    let mut constant = true;
    let mut counts = Vec::new();
    let mut max_j: f64 = 0.0;
    let mut ly_sup: f64 = 0.0;
    let mut ly_n = 1;
    for &t in t_samples {
        let (f, v) = fam.pair_at(t)?;
        let rel = f.critical_relations(depth);
        counts.push(rel.len());
        match &first {
            None => first = Some(rel),
            Some(r0) => constant &= *r0 == rel,
        }
        max_j = max_j.max(cohomology::max_abs_j(&f, &v, 1e-15));
        ly_n = transfer::contracting_iterate(&f);
        let ly = transfer::lasota_yorke_estimate(&f, ly_n)?;
        ly_sup = ly_sup.max(ly.contraction);
    }
    Ok(DeformationReport {
        relations_constant: constant,
        relation_counts: counts,
        max_abs_j: max_j,
        ly_contraction_sup: ly_sup,
        ly_iterate: ly_n,
        is_deformation: constant && max_j < tol && ly_sup < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_formula() {
        assert_eq!(holder_budget(0.0, 0.3), (1.0, 1.0));
        let (e, p) = holder_budget(1.0, 0.1);
        assert!((e - (-0.1f64).exp()).abs() < 1e-15);
        assert!((p - (1.0 - e).exp()).abs() < 1e-15);
    }
}
