//! Ulam discretization of the transfer operator, its peripheral spectrum,
//! Lasota–Yorke estimates and Birkhoff primitives.

use crate::cylinder::{self, inverse_branch, Cylinder};
use crate::error::{PwxError, Result};
use crate::map_core::{PiecewiseMap, Side};
use crate::observable::Evaluator;
use crate::quad::{self, Budget};
use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

pub type C64 = Complex<f64>;

/// Default modulus tolerance for peripheral eigenvalues.
pub const DEFAULT_PERIPHERAL_TOL: f64 = 0.05;
const MAX_PERIOD: usize = 64;
const DENSE_LIMIT: usize = 1024;

/// Row-stochastic matrix `P[i][j] = m(I_i ∩ f^-1 I_j) / m(I_i)` on a uniform partition.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    pub n_bins: usize,
    a: f64,
    b: f64,
    rows: Vec<Vec<(usize, f64)>>,
}

impl UlamOperator {
    pub fn width(&self) -> f64 {
        (self.b - self.a) / self.n_bins as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == self.n_bins {
            self.b
        } else {
            self.a + (self.b - self.a) * i as f64 / self.n_bins as f64
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edge(i) + self.edge(i + 1))
    }

    pub fn bin_of(&self, x: f64) -> usize {
        let k = ((x - self.a) / self.width()).floor();
        (k.max(0.0) as usize).min(self.n_bins - 1)
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n_bins;
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[(i, j)] = p;
            }
        }
        m
    }

    pub fn max_row_defect(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|e| e.1).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Push-forward of bin masses: `mu P`.
    pub fn push(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bins];
        for (i, row) in self.rows.iter().enumerate() {
            if mu[i] == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j] += mu[i] * p;
            }
        }
        out
    }

    /// Koopman action on bin values: `P g`.
    pub fn pull(&self, g: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(j, p)| p * g[j]).sum()).collect()
    }
}

/// Exact Ulam matrix via monotone inverse branches.
pub fn ulam_matrix(f: &PiecewiseMap, n_bins: usize) -> Result<UlamOperator> {
    if n_bins == 0 {
        return Err(PwxError::Schema("n_bins must be positive".into()));
    }
    let (a, b) = (f.a(), f.b());
    let mut u = UlamOperator { n_bins, a, b, rows: Vec::new() };
    let c = f.breakpoints().to_vec();
    let rows: Vec<Vec<(usize, f64)>> = (0..n_bins)
        .into_par_iter()
        .map(|i| {
            let (x0, x1) = (u.edge(i), u.edge(i + 1));
            let mut row: Vec<(usize, f64)> = Vec::new();
            for k in 0..f.n_branches() {
                let lo = x0.max(c[k]);
                let hi = x1.min(c[k + 1]);
                if hi <= lo {
                    continue;
                }
                let e = f.branch(k);
                let (ya, yb) = (e.value(lo), e.value(hi));
                let (ylo, yhi) = if ya <= yb { (ya, yb) } else { (yb, ya) };
                let j0 = u.bin_of(ylo.max(a));
                let j1 = u.bin_of(yhi.min(b));
                for j in j0..=j1 {
                    let s = ylo.max(u.edge(j));
                    let t = yhi.min(u.edge(j + 1));
                    if t <= s {
                        continue;
                    }
                    let xs = inverse_branch(f, k, s).clamp(lo, hi);
                    let xt = inverse_branch(f, k, t).clamp(lo, hi);
                    let m = (xt - xs).abs();
                    if m > 0.0 {
                        match row.iter_mut().find(|e| e.0 == j) {
                            Some(e) => e.1 += m,
                            None => row.push((j, m)),
                        }
                    }
                }
            }
            let total: f64 = row.iter().map(|e| e.1).sum();
            for e in &mut row {
                e.1 /= total;
            }
            row.sort_by_key(|e| e.0);
            row
        })
        .collect();
    u.rows = rows;
    Ok(u)
}

#[derive(Debug, Clone, Serialize)]
pub struct PeripheralData {
    /// `(re, im)` of the peripheral eigenvalues.
    pub lambdas: Vec<(f64, f64)>,
    pub period: usize,
    /// Invariant density per bin (integrates to 1).
    pub density: Vec<f64>,
    pub gap: f64,
}

impl PeripheralData {
    pub fn lambdas_c(&self) -> Vec<C64> {
        self.lambdas.iter().map(|&(r, i)| C64::new(r, i)).collect()
    }

    pub fn has_lambda(&self, target: C64, tol: f64) -> bool {
        self.lambdas_c().iter().any(|l| (l - target).norm() < tol)
    }
}

/// All eigenvalues (dense Schur) or the dominant ones (subspace iteration).
pub fn eigenvalues(u: &UlamOperator) -> Result<Vec<C64>> {
    let mut ev: Vec<C64> = if u.n_bins <= DENSE_LIMIT {
        let schur = nalgebra::linalg::Schur::try_new(u.dense(), 1e-14, 100_000)
            .ok_or_else(|| PwxError::Eigen("Schur iteration did not converge".into()))?;
        schur.complex_eigenvalues().iter().copied().collect()
    } else {
        subspace_eigenvalues(u, 16, 400)
    };
    ev.sort_by(|x, y| {
        y.norm()
            .partial_cmp(&x.norm())
            .unwrap()
            .then(y.re.partial_cmp(&x.re).unwrap())
            .then(y.im.partial_cmp(&x.im).unwrap())
    });
    Ok(ev)
}

fn subspace_eigenvalues(u: &UlamOperator, k: usize, iters: usize) -> Vec<C64> {
    use rand::{Rng, SeedableRng};
    let n = u.n_bins;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut q = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() - 0.5);
    let apply = |q: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(n, k);
        for c in 0..k {
            let col: Vec<f64> = q.column(c).iter().copied().collect();
            let y = u.push(&col);
            out.set_column(c, &DVector::from_vec(y));
        }
        out
    };
    for _ in 0..iters {
        q = apply(&q).qr().q();
    }
    let h = q.transpose() * apply(&q);
    h.complex_eigenvalues().iter().copied().collect()
}

fn period_of(lambdas: &[C64]) -> Option<usize> {
    (1..=MAX_PERIOD).find(|&p| {
        lambdas.iter().all(|l| {
            let turns = p as f64 * l.arg() / std::f64::consts::TAU;
            (turns - turns.round()).abs() < 1e-3
        })
    })
}

/// Invariant density by averaged power iteration.
pub fn invariant_density(u: &UlamOperator, period: usize) -> Vec<f64> {
    let n = u.n_bins;
    let mut mu = vec![1.0 / n as f64; n];
    let avg = |mu: &[f64]| {
        let mut acc = vec![0.0; n];
        let mut cur = mu.to_vec();
        for _ in 0..period {
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += c / period as f64;
            }
            cur = u.push(&cur);
        }
        acc
    };
    mu = avg(&mu);
    for _ in 0..20_000 {
        let next = avg(&u.push(&mu));
        let diff: f64 = next.iter().zip(&mu).map(|(x, y)| (x - y).abs()).sum();
        mu = next;
        if diff < 1e-15 {
            break;
        }
    }
    let total: f64 = mu.iter().sum();
    mu.iter().map(|m| m / total / u.width()).collect()
}

pub fn peripheral_spectrum(u: &UlamOperator, tol: f64) -> Result<PeripheralData> {
    let ev = eigenvalues(u)?;
    let (per, rest): (Vec<C64>, Vec<C64>) = ev.iter().partition(|l| l.norm() > 1.0 - tol);
    if !per.iter().any(|l| (l - C64::new(1.0, 0.0)).norm() < tol) {
        return Err(PwxError::NoUnitEigenvalue);
    }
    let period = period_of(&per).ok_or(PwxError::PeriodNotFound(MAX_PERIOD))?;
    let gap = rest.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let density = invariant_density(u, period);
    Ok(PeripheralData {
        lambdas: per.iter().map(|l| (clean(l.re), clean(l.im))).collect(),
        period,
        density,
        gap,
    })
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-14 {
        0.0
    } else {
        v
    }
}

/// Right and left Ulam eigenvectors for `lambda` by inverse iteration,
/// scaled so that `<l, r> = 1`.
pub fn eigenpair(u: &UlamOperator, lambda: C64) -> Result<(Vec<C64>, Vec<C64>)> {
    let n = u.n_bins;
    let p = u.dense().map(|v| C64::new(v, 0.0));
    let shift = lambda * C64::new(1.0 + 1e-9, 1e-9);
    let iterate = |m: DMatrix<C64>| -> Result<DVector<C64>> {
        let lu = m.lu();
        let mut x = DVector::from_fn(n, |i, _| C64::new(1.0 + (i as f64 * 0.37).sin(), 0.0));
        for _ in 0..4 {
            x = lu.solve(&x).ok_or_else(|| PwxError::Eigen("singular shifted matrix".into()))?;
            let s = x.norm();
            x /= C64::new(s, 0.0);
        }
        Ok(x)
    };
    let eye = DMatrix::<C64>::identity(n, n);
    let r = iterate(&p - &eye * shift)?;
    let l = iterate(p.transpose() - &eye * shift)?;
    let dot: C64 = l.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
    if dot.norm() < 1e-300 {
        return Err(PwxError::Eigen("left and right eigenvectors are orthogonal".into()));
    }
    let r: Vec<C64> = r.iter().map(|v| v / dot).collect();
    Ok((r, l.iter().copied().collect()))
}

/// Integral of an evaluator over `[lo, hi]`, split at the map's breakpoints.
pub fn integrate<E: Evaluator + ?Sized>(f: &PiecewiseMap, ev: &E, lo: f64, hi: f64) -> f64 {
    let c = f.breakpoints();
    let mut s = 0.0;
    for k in 0..f.n_branches() {
        let l = lo.max(c[k]);
        let h = hi.min(c[k + 1]);
        if h <= l {
            continue;
        }
        let g = |x: f64| ev.on_piece(k, x, Side::Plus);
        let m = 4;
        for j in 0..m {
            let a = l + (h - l) * j as f64 / m as f64;
            let b = l + (h - l) * (j + 1) as f64 / m as f64;
            s += quad::gauss(&g, a, b);
        }
    }
    s
}

/// Averages of `ev` over the Ulam bins.
pub fn bin_averages<E: Evaluator + ?Sized>(f: &PiecewiseMap, u: &UlamOperator, ev: &E) -> Vec<f64> {
    (0..u.n_bins)
        .into_par_iter()
        .map(|i| integrate(f, ev, u.edge(i), u.edge(i + 1)) / u.width())
        .collect()
}

/// `Phi_1(psi)` as bin masses: Cesaro average over the period of `psi P^k`.
pub fn project_peripheral_one(u: &UlamOperator, masses: &[f64], period: usize) -> Vec<f64> {
    let mut cur = masses.to_vec();
    let mut prev = cur.clone();
    for k in 0..20_000 {
        cur = u.push(&cur);
        if k % period == period - 1 {
            let diff: f64 = cur.iter().zip(&prev).map(|(a, b)| (a - b).abs()).sum();
            prev.clone_from(&cur);
            if diff < 1e-15 {
                break;
            }
        }
    }
    let mut acc = vec![0.0; u.n_bins];
    for _ in 0..period {
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += c / period as f64;
        }
        cur = u.push(&cur);
    }
    acc
}

/// `max_psi |∫ phi Phi_1(psi) dm|` over the test functions.
pub fn phi_mean_zero_check<E: Evaluator + ?Sized>(
    f: &PiecewiseMap,
    u: &UlamOperator,
    period: usize,
    phi: &E,
    test_set: &[&(dyn Fn(f64) -> f64 + Sync)],
) -> f64 {
    let phi_avg = bin_averages(f, u, phi);
    test_set
        .iter()
        .map(|psi| {
            let masses: Vec<f64> = (0..u.n_bins)
                .map(|i| {
                    let g = |x: f64| psi(x);
                    quad::gauss(&g, u.edge(i), u.edge(i + 1))
                })
                .collect();
            let proj = project_peripheral_one(u, &masses, period);
            proj.iter().zip(&phi_avg).map(|(m, a)| m * a).sum::<f64>().abs()
        })
        .fold(0.0, f64::max)
}

/// `G(x) = ∫ phi sum_{lambda != 1} Phi_lambda(1_[a,x]) / (1 - lambda) dm`.
///
/// Experimental: `Phi_lambda` uses biorthogonal Ulam eigenvectors. `None` when
/// the period is one.
pub fn experimental_g<E: Evaluator + ?Sized>(
    f: &PiecewiseMap,
    u: &UlamOperator,
    data: &PeripheralData,
    phi: &E,
    xs: &[f64],
) -> Result<Option<Vec<f64>>> {
    if data.period == 1 {
        return Ok(None);
    }
    let phi_avg = bin_averages(f, u, phi);
    let mut out = vec![0.0; xs.len()];
    for lam in data.lambdas_c() {
        if (lam - C64::new(1.0, 0.0)).norm() < 1e-6 {
            continue;
        }
        // Phi_lambda acts on masses: mu -> <mu, r> l
        let (r, l) = eigenpair(u, lam)?;
        let phi_l: C64 = l.iter().zip(&phi_avg).map(|(a, b)| a * b).sum();
        for (k, &x) in xs.iter().enumerate() {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..u.n_bins {
                let m = (x.min(u.edge(i + 1)) - u.edge(i)).max(0.0);
                if m == 0.0 {
                    break;
                }
                s += r[i] * m;
            }
            out[k] += (s * phi_l / (C64::new(1.0, 0.0) - lam)).re;
        }
    }
    Ok(Some(out))
}

#[derive(Debug, Clone, Serialize)]
pub struct LasotaYorke {
    pub n_iter: usize,
    /// `2 / inf |Df^n|`.
    pub contraction: f64,
    /// Empirical `sup (var L^n g - contraction var g) / |g|_1` on the test set.
    pub bound: f64,
    /// Largest `var L^n g / var g` over non-constant test densities.
    pub measured_ratio: f64,
    /// Shortest image of a level-`n` cylinder.
    pub min_image: f64,
    /// Distortion of `f^n` over its cylinders.
    pub distortion: f64,
}

const LY_GRID: usize = 4096;

fn transfer_on_grid(f: &PiecewiseMap, cyls: &[Cylinder], g: &dyn Fn(f64) -> f64, ys: &[f64]) -> Vec<f64> {
    ys.iter()
        .map(|&y| {
            let mut s = 0.0;
            for cyl in cyls {
                let (lo, hi) = if cyl.img_lo <= cyl.img_hi {
                    (cyl.img_lo, cyl.img_hi)
                } else {
                    (cyl.img_hi, cyl.img_lo)
                };
                if y < lo || y > hi {
                    continue;
                }
                let x = cylinder::pull_back(f, &cyl.itinerary, y).clamp(cyl.lo, cyl.hi);
                let (_, d) = cylinder::compose(f, &cyl.itinerary, x);
                s += g(x) / d.abs();
            }
            s
        })
        .collect()
}

fn variation(vals: &[f64]) -> f64 {
    vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

pub fn lasota_yorke_estimate(f: &PiecewiseMap, n_iter: usize) -> Result<LasotaYorke> {
    let n_iter = n_iter.max(1);
    let cyls = cylinder::cylinders(f, n_iter, 1 << 16)?;
    let lambda_n = cyls
        .iter()
        .map(|c| {
            let mut m = f64::INFINITY;
            for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let x = c.lo + s * (c.hi - c.lo);
                m = m.min(cylinder::compose(f, &c.itinerary, x).1.abs());
            }
            m
        })
        .fold(f64::INFINITY, f64::min);
    let contraction = 2.0 / lambda_n;
    let min_image = cyls.iter().map(|c| (c.img_hi - c.img_lo).abs()).fold(f64::INFINITY, f64::min);
    let distortion = f.distortion_constants(n_iter)?.0;
    let (a, b) = (f.a(), f.b());
    let len = b - a;
    let ys: Vec<f64> = (0..=LY_GRID).map(|k| a + len * k as f64 / LY_GRID as f64).collect();
    let mut tests: Vec<Box<dyn Fn(f64) -> f64 + Sync>> = vec![Box::new(|_| 1.0)];
    for &(u, w) in &[(0.0, 0.5), (0.5, 1.0), (0.1, 0.3), (0.37, 0.41), (0.0, 0.05), (0.6, 0.95)] {
        let (lo, hi) = (a + u * len, a + w * len);
        tests.push(Box::new(move |x| if x >= lo && x <= hi { 1.0 } else { 0.0 }));
    }
    for &(m, r) in &[(0.5, 0.5), (0.25, 0.1), (0.8, 0.02)] {
        let (cm, cr) = (a + m * len, r * len);
        tests.push(Box::new(move |x| (1.0 - (x - cm).abs() / cr).max(0.0)));
    }
    let mut bound: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    let h = len / LY_GRID as f64;
    for g in &tests {
        let gv: Vec<f64> = ys.iter().map(|&y| g(y)).collect();
        let var = variation(&gv);
        let l1 = h * gv.iter().map(|v| v.abs()).sum::<f64>();
        let lg = transfer_on_grid(f, &cyls, g.as_ref(), &ys);
        let v = variation(&lg);
        bound = bound.max((v - contraction * var) / l1);
        if var > 0.0 {
            ratio = ratio.max(v / var);
        }
    }
    Ok(LasotaYorke { n_iter, contraction, bound, measured_ratio: ratio, min_image, distortion })
}

/// Smallest `n` with `lambda^n > 2`, so that `2 / lambda^n < 1`.
pub fn contracting_iterate(f: &PiecewiseMap) -> usize {
    let l = f.expansion_floor();
    ((2f64.ln() / l.ln()).floor() as usize + 1).max(1)
}

fn birkhoff_integrand<'a, E: Evaluator + ?Sized>(
    f: &'a PiecewiseMap,
    phi: &'a E,
    itin: &'a [u16],
) -> impl Fn(f64) -> f64 + 'a {
    move |s: f64| {
        let mut y = s;
        let mut acc = 0.0;
        for &k in itin {
            acc += phi.on_piece(k as usize, y, Side::Plus);
            y = f.branch(k as usize).value(y);
        }
        acc
    }
}

/// `∫_a^x sum_{n<N} phi(f^n s) ds` at every `x` of a sorted grid.
pub fn birkhoff_primitive_grid<E: Evaluator + ?Sized>(
    f: &PiecewiseMap,
    phi: &E,
    xs: &[f64],
    n: usize,
    tol: f64,
    budget: &Budget,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(vec![0.0; xs.len()]);
    }
    let cyls = cylinder::cylinders(f, n, 1 << 22)?;
    let ctol = tol / cyls.len() as f64;
    let whole: Vec<f64> = cyls
        .par_iter()
        .map(|c| {
            let g = birkhoff_integrand(f, phi, &c.itinerary);
            quad::adaptive(&g, c.lo, c.hi, ctol, budget)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(xs.len());
    let mut ci = 0;
    let mut acc = 0.0;
    for &x in xs {
        while ci < cyls.len() && cyls[ci].hi <= x {
            acc += whole[ci];
            ci += 1;
        }
        let mut v = acc;
        if ci < cyls.len() && x > cyls[ci].lo {
            let c = &cyls[ci];
            let g = birkhoff_integrand(f, phi, &c.itinerary);
            v += quad::adaptive(&g, c.lo, x, ctol, budget)?;
        }
        out.push(v);
    }
    Ok(out)
}

pub fn birkhoff_primitive<E: Evaluator + ?Sized>(
    f: &PiecewiseMap,
    phi: &E,
    x: f64,
    n: usize,
    period: usize,
) -> Result<f64> {
    if period == 0 || n % period != 0 {
        return Err(PwxError::Schema(format!("N = {n} is not a multiple of the period {period}")));
    }
    let budget = Budget::new(quad::DEFAULT_BUDGET);
    Ok(birkhoff_primitive_grid(f, phi, &[x], n, 1e-12, &budget)?[0])
}
