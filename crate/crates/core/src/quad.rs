//! Adaptive Gauss–Legendre quadrature with an evaluation budget.

use crate::error::{PwxError, Result};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

/// Default number of integrand evaluations allowed per integral.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

const ORDER: usize = 10;

fn nodes() -> &'static ([f64; ORDER], [f64; ORDER]) {
    static NODES: OnceLock<([f64; ORDER], [f64; ORDER])> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = ORDER;
        let mut x = [0.0; ORDER];
        let mut w = [0.0; ORDER];
        for i in 0..n {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    })
}

/// Shared evaluation counter.
#[derive(Debug)]
pub struct Budget {
    used: AtomicU64,
    limit: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget { used: AtomicU64::new(0), limit }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }

    pub fn charge(&self, n: u64) -> Result<()> {
        let used = self.used.fetch_add(n, Ordering::Relaxed) + n;
        if used > self.limit {
            Err(PwxError::QuadratureBudgetExceeded(self.limit))
        } else {
            Ok(())
        }
    }
}

/// Fixed Gauss–Legendre rule on `[lo, hi]`.
pub fn gauss<F: Fn(f64) -> f64>(g: &F, lo: f64, hi: f64) -> f64 {
    let (x, w) = nodes();
    let m = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    let mut s = 0.0;
    for i in 0..ORDER {
        s += w[i] * g(m + r * x[i]);
    }
    s * r
}

/// Adaptive bisection until two-level Gauss estimates agree within `tol`.
pub fn adaptive<F: Fn(f64) -> f64>(g: &F, lo: f64, hi: f64, tol: f64, budget: &Budget) -> Result<f64> {
    budget.charge(ORDER as u64)?;
    let whole = gauss(g, lo, hi);
    adaptive_rec(g, lo, hi, whole, tol, budget, 0)
}

fn adaptive_rec<F: Fn(f64) -> f64>(
    g: &F,
    lo: f64,
    hi: f64,
    whole: f64,
    tol: f64,
    budget: &Budget,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (lo + hi);
    budget.charge(2 * ORDER as u64)?;
    let left = gauss(g, lo, m);
    let right = gauss(g, m, hi);
    let split = left + right;
    if (split - whole).abs() <= tol || depth >= 40 || m <= lo || m >= hi {
        return Ok(split);
    }
    Ok(adaptive_rec(g, lo, m, left, 0.5 * tol, budget, depth + 1)?
        + adaptive_rec(g, m, hi, right, 0.5 * tol, budget, depth + 1)?)
}

/// Pairwise summation, deterministic regardless of thread count.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let g = |x: f64| x.powi(7) - 3.0 * x * x;
        let exact = 1.0 / 8.0 - 1.0;
        assert!((gauss(&g, 0.0, 1.0) - exact).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let g = |x: f64| (40.0 * x).sin();
        let exact = (1.0 - 40f64.cos()) / 40.0;
        let b = Budget::new(DEFAULT_BUDGET);
        let v = adaptive(&g, 0.0, 1.0, 1e-12, &b).unwrap();
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn budget_is_enforced() {
        let g = |x: f64| (1.0 / (x + 1e-9)).sin();
        let b = Budget::new(1000);
        assert!(matches!(
            adaptive(&g, 0.0, 1.0, 1e-14, &b),
            Err(PwxError::QuadratureBudgetExceeded(1000))
        ));
    }
}
