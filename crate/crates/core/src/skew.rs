//! The skew product `F(x, t) = (f_t(x), t)` over a deformation, its central
//! field `(alpha_t(x), 1)`, holonomies along the centre and multiplier
//! diagnostics along a periodic orbit.

use crate::cohomology::AlphaSeries;
use crate::error::{PwxError, Result};
use crate::family::MapFamily;
use crate::flow::{self, FlowControls};
use crate::map_core::SignedPoint;
use rayon::prelude::*;
use serde::Serialize;

pub struct SkewProduct<'a, F: MapFamily + ?Sized> {
    pub family: &'a F,
    pub series_tol: f64,
}

impl<'a, F: MapFamily + ?Sized> SkewProduct<'a, F> {
    pub fn new(family: &'a F) -> Self {
        SkewProduct { family, series_tol: 1e-15 }
    }

    /// `F(x, t)`.
    pub fn apply(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        let f = self.family.map_at(t)?;
        Ok((f.eval(f.point(x)).x, t))
    }

    /// `(alpha_t(x), 1)`.
    pub fn central_field(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        Ok((flow::alpha_at(self.family, t, x, self.series_tol)?, 1.0))
    }
}

/// `max |DF(x, t) (alpha_t(x), 1) - (alpha_t(f_t x), 1)|` over the samples.
///
/// With `use_alpha = false` the field is replaced by `(0, 1)`.
pub fn central_invariance_residual<F: MapFamily + ?Sized>(
    s: &SkewProduct<F>,
    samples: &[(f64, f64)],
    use_alpha: bool,
) -> Result<f64> {
    let r = samples
        .par_iter()
        .map(|&(x, t)| -> Result<f64> {
            let (f, v) = s.family.pair_at(t)?;
            let p = f.point(x);
            let q = f.eval(p);
            let (ax, afx) = if use_alpha {
                let a = AlphaSeries::new(&f, &v, s.series_tol);
                (a.eval(p), a.eval(q))
            } else {
                (0.0, 0.0)
            };
            // first row of [[Df, v], [0, 1]] (alpha, 1); the second row is exact
            Ok((f.d1(p) * ax + v.value(p) - afx).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(r.into_iter().fold(0.0, f64::max))
}

/// `h_{t1} o h_{t0}^{-1}` on `xs`.
pub fn holonomy<F: MapFamily + ?Sized>(
    s: &SkewProduct<F>,
    t0: f64,
    t1: f64,
    xs: &[f64],
    ctl: &FlowControls,
) -> Result<Vec<f64>> {
    if t0 == t1 {
        return Ok(xs.to_vec());
    }
    xs.par_iter().map(|&x| flow::transport(s.family, x, t0, t1, ctl)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct NightmareReport {
    pub q: f64,
    pub period: usize,
    pub t_grid: Vec<f64>,
    pub positions: Vec<f64>,
    /// `ln |Df_t^M(h_t q)|`.
    pub values: Vec<f64>,
    pub strictly_increasing: bool,
    pub strictly_decreasing: bool,
    pub injective: bool,
}

pub fn nightmare_diagnostic<F: MapFamily + ?Sized>(
    s: &SkewProduct<F>,
    q: SignedPoint,
    period: usize,
    t_grid: &[f64],
    ctl: &FlowControls,
) -> Result<NightmareReport> {
    let f0 = s.family.map_at(0.0)?;
    let mut p = q;
    for j in 0..period {
        if f0.is_critical(p) {
            return Err(PwxError::OrbitHitsCritical(j));
        }
        p = f0.eval(p);
    }
    if (p.x - q.x).abs() > 1e-9 * f0.len() {
        return Err(PwxError::NotPeriodic(period));
    }
    let positions: Vec<f64> = t_grid
        .par_iter()
        .map(|&t| flow::transport(s.family, q.x, 0.0, t, ctl))
        .collect::<Result<Vec<f64>>>()?;
    let values = t_grid
        .iter()
        .zip(&positions)
        .map(|(&t, &y)| {
            let f = s.family.map_at(t)?;
            let (_, d) = f.iterate_with_derivative(SignedPoint::new(y, q.side), period);
            Ok(d.abs().ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    let inc = values.windows(2).all(|w| w[1] > w[0]);
    let dec = values.windows(2).all(|w| w[1] < w[0]);
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let distinct = sorted.windows(2).all(|w| w[1] - w[0] > 1e-12 * w[1].abs().max(1.0));
    Ok(NightmareReport {
        q: q.x,
        period,
        t_grid: t_grid.to_vec(),
        positions,
        values,
        strictly_increasing: inc,
        strictly_decreasing: dec,
        injective: distinct,
    })
}
