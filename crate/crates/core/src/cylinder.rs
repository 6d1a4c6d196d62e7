//! Branch cylinders of iterates and inverse branches.

use crate::error::{PwxError, Result};
use crate::map_core::{PiecewiseMap, Side};

/// Maximal interval on which `f^L` is a smooth monotone composition of branches.
#[derive(Debug, Clone)]
pub struct Cylinder {
    pub lo: f64,
    pub hi: f64,
    /// Branch indices used at steps `0..L`.
    pub itinerary: Vec<u16>,
    /// `f^L(lo)` and `f^L(hi)` along the itinerary.
    pub img_lo: f64,
    pub img_hi: f64,
}

impl Cylinder {
    pub fn level(&self) -> usize {
        self.itinerary.len()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Inverse of branch `i` evaluated at `y`, clamped to the branch domain.
pub fn inverse_branch(f: &PiecewiseMap, i: usize, y: f64) -> f64 {
    let (lo, hi) = (f.breakpoints()[i], f.breakpoints()[i + 1]);
    let e = f.branch(i);
    if let Some((c0, c1)) = e.as_affine() {
        return ((y - c0) / c1).clamp(lo, hi);
    }
    let inc = f.increasing(i);
    let g = |x: f64| {
        let v = e.value(x) - y;
        if inc {
            v
        } else {
            -v
        }
    };
    if g(lo) >= 0.0 {
        return lo;
    }
    if g(hi) <= 0.0 {
        return hi;
    }
    let (mut l, mut r) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (l + r);
        if m <= l || m >= r {
            break;
        }
        if g(m) < 0.0 {
            l = m;
        } else {
            r = m;
        }
    }
    0.5 * (l + r)
}

/// Applies the branches of `itinerary` to `x`; returns the image and the derivative product.
pub fn compose(f: &PiecewiseMap, itinerary: &[u16], x: f64) -> (f64, f64) {
    let mut y = x;
    let mut d = 1.0;
    for &i in itinerary {
        let e = f.branch(i as usize);
        d *= e.eval(y, Side::Plus, 1);
        y = e.value(y);
    }
    (y, d)
}

/// Pulls `y` back through the itinerary.
pub fn pull_back(f: &PiecewiseMap, itinerary: &[u16], y: f64) -> f64 {
    let mut x = y;
    for &i in itinerary.iter().rev() {
        x = inverse_branch(f, i as usize, x);
    }
    x
}

/// Splits one cylinder of level `L` into its children of level `L + 1`.
pub fn refine(f: &PiecewiseMap, cyl: &Cylinder, out: &mut Vec<Cylinder>) {
    let c = f.breakpoints();
    let inc = cyl.img_hi >= cyl.img_lo;
    let (k_lo, k_hi) = if inc { (cyl.img_lo, cyl.img_hi) } else { (cyl.img_hi, cyl.img_lo) };
    let pull = |y: f64| -> f64 {
        if y == cyl.img_lo {
            cyl.lo
        } else if y == cyl.img_hi {
            cyl.hi
        } else {
            pull_back(f, &cyl.itinerary, y).clamp(cyl.lo, cyl.hi)
        }
    };
    let n = f.n_branches();
    let order: Vec<usize> = if inc { (0..n).collect() } else { (0..n).rev().collect() };
    for j in order {
        let s_lo = k_lo.max(c[j]);
        let s_hi = k_hi.min(c[j + 1]);
        if s_hi <= s_lo {
            continue;
        }
        let (x_a, x_b) = (pull(s_lo), pull(s_hi));
        let (lo, hi, u_lo, u_hi) =
            if x_a <= x_b { (x_a, x_b, s_lo, s_hi) } else { (x_b, x_a, s_hi, s_lo) };
        if hi <= lo {
            continue;
        }
        let e = f.branch(j);
        let mut itinerary = cyl.itinerary.clone();
        itinerary.push(j as u16);
        out.push(Cylinder { lo, hi, itinerary, img_lo: e.value(u_lo), img_hi: e.value(u_hi) });
    }
}

/// Level-0 cylinder: the whole interval.
pub fn root(f: &PiecewiseMap) -> Cylinder {
    Cylinder { lo: f.a(), hi: f.b(), itinerary: Vec::new(), img_lo: f.a(), img_hi: f.b() }
}

/// All cylinders of level `level`, ordered by position.
pub fn cylinders(f: &PiecewiseMap, level: usize, max_count: usize) -> Result<Vec<Cylinder>> {
    let mut cur = vec![root(f)];
    for _ in 0..level {
        cur = next_level(f, &cur, max_count)?;
    }
    Ok(cur)
}

/// Refines every cylinder of a level.
pub fn next_level(f: &PiecewiseMap, cur: &[Cylinder], max_count: usize) -> Result<Vec<Cylinder>> {
    let mut next = Vec::with_capacity(cur.len() * f.n_branches());
    for cyl in cur {
        refine(f, cyl, &mut next);
        if next.len() > max_count {
            return Err(PwxError::QuadratureBudgetExceeded(max_count as u64));
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    #[test]
    fn doubling_cylinders_are_dyadic() {
        let f = PiecewiseMap::new(
            vec![0.0, 0.5, 1.0],
            vec![Expr::linear(0.0, 2.0), Expr::linear(-1.0, 2.0)],
        )
        .unwrap();
        let cyl = cylinders(&f, 4, 1 << 20).unwrap();
        assert_eq!(cyl.len(), 16);
        for (k, c) in cyl.iter().enumerate() {
            assert_eq!(c.lo, k as f64 / 16.0);
            assert_eq!(c.hi, (k + 1) as f64 / 16.0);
        }
    }

    #[test]
    fn tent_cylinders_tile_interval() {
        let f = PiecewiseMap::new(
            vec![0.0, 0.5, 1.0],
            vec![Expr::linear(0.0, 2.0), Expr::linear(2.0, -2.0)],
        )
        .unwrap();
        let cyl = cylinders(&f, 5, 1 << 20).unwrap();
        assert_eq!(cyl.len(), 32);
        assert_eq!(cyl[0].lo, 0.0);
        assert_eq!(cyl[31].hi, 1.0);
        for w in cyl.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
    }
}
