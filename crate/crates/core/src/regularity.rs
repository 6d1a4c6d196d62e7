//! Moduli of continuity of sampled functions and the regularity ladder
//! Lipschitz / Zygmund / Log-Lipschitz / Hölder.

use crate::error::{PwxError, Result};
use serde::Serialize;

/// Dyadic scales `2^-lo ..= 2^-hi`, coarsest first.
pub fn dyadic_scales(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(-k)).collect()
}

pub fn default_scales() -> Vec<f64> {
    dyadic_scales(4, 14)
}

/// Fine enough for the smallest default scale with eight samples per step.
pub const DEFAULT_GRID: usize = 1 << 17;
pub const DEFAULT_STABILITY: f64 = 2.0;

#[derive(Debug, Clone, Serialize)]
pub struct ModulusReport {
    pub scales: Vec<f64>,
    /// `sup |g(x + d) - g(x)|` per scale.
    pub first_diff: Vec<f64>,
    /// `sup |g(x + d) + g(x - d) - 2 g(x)|` per scale.
    pub second_diff: Vec<f64>,
    pub lipschitz: Vec<f64>,
    pub loglip: Vec<f64>,
    pub zygmund: Vec<f64>,
    /// `(beta, C)` from the log–log fit of `first_diff`.
    pub holder_fit: (f64, f64),
    pub lipschitz_constant: f64,
    pub loglip_constant: f64,
    pub zygmund_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RegularityClass {
    Lipschitz,
    Zygmund,
    LogLipschitz,
    Holder(f64),
    Rougher,
}

impl RegularityClass {
    /// Position on the ladder, strongest first.
    pub fn rank(&self) -> u8 {
        match self {
            RegularityClass::Lipschitz => 0,
            RegularityClass::Zygmund => 1,
            RegularityClass::LogLipschitz => 2,
            RegularityClass::Holder(_) => 3,
            RegularityClass::Rougher => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularityClass::Lipschitz => "lipschitz",
            RegularityClass::Zygmund => "zygmund",
            RegularityClass::LogLipschitz => "log_lipschitz",
            RegularityClass::Holder(_) => "holder",
            RegularityClass::Rougher => "rougher",
        }
    }
}

fn spacing(xs: &[f64]) -> Result<f64> {
    if xs.len() < 3 {
        return Err(PwxError::Schema("need at least three samples".into()));
    }
    let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    let bad = xs.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h);
    if bad || h <= 0.0 {
        return Err(PwxError::Schema("samples must lie on an increasing uniform grid".into()));
    }
    Ok(h)
}

fn shift_for(h: f64, delta: f64) -> Result<usize> {
    let s = (delta / h).round() as usize;
    if h > delta / 8.0 * (1.0 + 1e-9) || s == 0 {
        return Err(PwxError::GridTooCoarse { spacing: h, limit: delta / 8.0 });
    }
    Ok(s)
}

pub fn modulus_scan(xs: &[f64], gs: &[f64], scales: &[f64]) -> Result<ModulusReport> {
    if xs.len() != gs.len() {
        return Err(PwxError::Schema("x and g lengths differ".into()));
    }
    let h = spacing(xs)?;
    let mut first = Vec::new();
    let mut second = Vec::new();
    for &d in scales {
        let s = shift_for(h, d)?;
        let n = gs.len();
        let mut m1: f64 = 0.0;
        let mut m2: f64 = 0.0;
        for i in 0..n.saturating_sub(s) {
            m1 = m1.max((gs[i + s] - gs[i]).abs());
            if i >= s {
                m2 = m2.max((gs[i + s] + gs[i - s] - 2.0 * gs[i]).abs());
            }
        }
        first.push(m1);
        second.push(m2);
    }
    let lipschitz: Vec<f64> = first.iter().zip(scales).map(|(m, d)| m / d).collect();
    let loglip: Vec<f64> = first.iter().zip(scales).map(|(m, d)| m / (d * (1.0 - d.ln()))).collect();
    let zygmund: Vec<f64> = second.iter().zip(scales).map(|(m, d)| m / d).collect();
    let holder_fit = fit_power(scales, &first);
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(ModulusReport {
        scales: scales.to_vec(),
        lipschitz_constant: sup(&lipschitz),
        loglip_constant: sup(&loglip),
        zygmund_constant: sup(&zygmund),
        first_diff: first,
        second_diff: second,
        lipschitz,
        loglip,
        zygmund,
        holder_fit,
    })
}

/// Least-squares fit `m ~ C d^beta` over positive samples.
fn fit_power(ds: &[f64], ms: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> =
        ds.iter().zip(ms).filter(|(_, m)| **m > 0.0).map(|(d, m)| (d.ln(), m.ln())).collect();
    if pts.len() < 2 {
        return (1.0, 0.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    (beta, (my - beta * mx).exp())
}

/// Ratio of the largest to the smallest constant over the finest three
/// scales, and of the finest to the coarsest constant.
fn stable(vals: &[f64], factor: f64) -> bool {
    let n = vals.len();
    if n < 3 || vals.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let tail = &vals[n - 3..];
    let hi = tail.iter().copied().fold(0.0, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == 0.0 {
        return true;
    }
    lo > 0.0 && hi / lo < factor && vals[n - 1] / vals[0].max(f64::MIN_POSITIVE) < factor
}

pub fn classify(report: &ModulusReport, stability_factor: f64) -> RegularityClass {
    if stable(&report.lipschitz, stability_factor) {
        RegularityClass::Lipschitz
    } else if stable(&report.zygmund, stability_factor) {
        RegularityClass::Zygmund
    } else if stable(&report.loglip, stability_factor) {
        RegularityClass::LogLipschitz
    } else if report.holder_fit.0 > 0.05 {
        RegularityClass::Holder(report.holder_fit.0.min(1.05))
    } else {
        RegularityClass::Rougher
    }
}

/// Growth of the Lipschitz quotient from the coarsest to the finest scale.
pub fn lipschitz_growth(report: &ModulusReport) -> f64 {
    let l = &report.lipschitz;
    l[l.len() - 1] / l[0].max(f64::MIN_POSITIVE)
}

/// All quotients `|g(x + d) - g(x)| / (d (1 - ln d))` at one scale.
pub fn quotient_distribution(xs: &[f64], gs: &[f64], delta: f64) -> Result<Vec<f64>> {
    let h = spacing(xs)?;
    let s = shift_for(h, delta)?;
    let w = delta * (1.0 - delta.ln());
    Ok((0..gs.len().saturating_sub(s)).map(|i| (gs[i + s] - gs[i]).abs() / w).collect())
}

/// Uniform grid of `n + 1` points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| if k == n { b } else { a + (b - a) * k as f64 / n as f64 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_lipschitz() {
        let xs = uniform_grid(0.0, 1.0, DEFAULT_GRID);
        let r = modulus_scan(&xs, &xs, &default_scales()).unwrap();
        assert!((r.lipschitz_constant - 1.0).abs() < 1e-9);
        assert!((r.holder_fit.0 - 1.0).abs() < 1e-9);
        assert_eq!(classify(&r, DEFAULT_STABILITY), RegularityClass::Lipschitz);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let xs = uniform_grid(0.0, 1.0, 64);
        assert!(matches!(
            modulus_scan(&xs, &xs, &default_scales()),
            Err(PwxError::GridTooCoarse { .. })
        ));
    }
}
