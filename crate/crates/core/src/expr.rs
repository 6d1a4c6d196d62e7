//! Closed-form scalar expressions used for branches and observables.
//!
//! Every expression carries exact derivatives up to order three.

use crate::error::{PwxError, Result};
use crate::map_core::Side;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One sinusoid `amp * sin(freq * x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
}

/// Which side of its center a bump is supported on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpSide {
    Left,
    Right,
    Both,
}

/// `value * u0((x - center)/delta) + slope * delta * u1((x - center)/delta)`.
///
/// `u0(s) = cos^4(pi s / 2)` on `|s| < 1`, `u1(s) = s u0(s)`. Both are `C^3`
/// with `u0(0) = 1`, `u0'(0) = 0`, `u1(0) = 0`, `u1'(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub delta: f64,
    pub value: f64,
    pub slope: f64,
    pub side: BumpSide,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// `c0 + c1 x`
    Affine { c0: f64, c1: f64 },
    /// `sum c_k x^k`
    Poly(Vec<f64>),
    /// `c0 + c1 x + sum waves`
    AffineTrig { c0: f64, c1: f64, waves: Vec<Wave> },
    Bump(Bump),
    Sum(Vec<Expr>),
}

fn u0_derivs(s: f64) -> [f64; 4] {
    if s.abs() >= 1.0 {
        return [0.0; 4];
    }
    let th = 0.5 * PI * s;
    let (sn, c) = th.sin_cos();
    let k = 0.5 * PI;
    let c2 = c * c;
    let c3 = c2 * c;
    [
        c2 * c2,
        k * (-4.0 * c3 * sn),
        k * k * (12.0 * c2 * sn * sn - 4.0 * c2 * c2),
        k * k * k * (-24.0 * c * sn * sn * sn + 40.0 * c3 * sn),
    ]
}

fn u1_derivs(s: f64) -> [f64; 4] {
    let u = u0_derivs(s);
    [s * u[0], u[0] + s * u[1], 2.0 * u[1] + s * u[2], 3.0 * u[2] + s * u[3]]
}

impl Bump {
    fn active(&self, x: f64, side: Side) -> bool {
        match self.side {
            BumpSide::Both => true,
            BumpSide::Right => x > self.center || (x == self.center && side == Side::Plus),
            BumpSide::Left => x < self.center || (x == self.center && side == Side::Minus),
        }
    }

    pub fn eval(&self, x: f64, side: Side, order: usize) -> f64 {
        if !self.active(x, side) {
            return 0.0;
        }
        let s = (x - self.center) / self.delta;
        let a = u0_derivs(s)[order];
        let b = u1_derivs(s)[order];
        let scale = self.delta.powi(order as i32);
        (self.value * a + self.slope * self.delta * b) / scale
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Affine { c0: c, c1: 0.0 }
    }

    pub fn linear(c0: f64, c1: f64) -> Expr {
        Expr::Affine { c0, c1 }
    }

    /// `amp * sin(2 pi k x)`.
    pub fn sin_2pi(amp: f64, k: f64) -> Expr {
        Expr::AffineTrig {
            c0: 0.0,
            c1: 0.0,
            waves: vec![Wave { amp, freq: 2.0 * PI * k, phase: 0.0 }],
        }
    }

    /// `amp * cos(2 pi k x)`.
    pub fn cos_2pi(amp: f64, k: f64) -> Expr {
        Expr::AffineTrig {
            c0: 0.0,
            c1: 0.0,
            waves: vec![Wave { amp, freq: 2.0 * PI * k, phase: 0.5 * PI }],
        }
    }

    /// Value (`order = 0`) or derivative of order 1..=3.
    pub fn eval(&self, x: f64, side: Side, order: usize) -> f64 {
        debug_assert!(order <= 3);
        match self {
            Expr::Affine { c0, c1 } => match order {
                0 => c0 + c1 * x,
                1 => *c1,
                _ => 0.0,
            },
            Expr::Poly(c) => {
                let mut acc = 0.0;
                for k in (order..c.len()).rev() {
                    let mut f = 1.0;
                    for j in 0..order {
                        f *= (k - j) as f64;
                    }
                    acc = acc * x + f * c[k];
                }
                acc
            }
            Expr::AffineTrig { c0, c1, waves } => {
                let mut acc = match order {
                    0 => c0 + c1 * x,
                    1 => *c1,
                    _ => 0.0,
                };
                for w in waves {
                    let arg = w.freq * x + w.phase + order as f64 * 0.5 * PI;
                    acc += w.amp * w.freq.powi(order as i32) * arg.sin();
                }
                acc
            }
            Expr::Bump(b) => b.eval(x, side, order),
            Expr::Sum(terms) => terms.iter().map(|t| t.eval(x, side, order)).sum(),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x, Side::Plus, 0)
    }

    /// `(c0, c1)` when the expression is exactly affine.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match self {
            Expr::Affine { c0, c1 } => Some((*c0, *c1)),
            Expr::Poly(c) if c.len() <= 2 => {
                Some((c.first().copied().unwrap_or(0.0), c.get(1).copied().unwrap_or(0.0)))
            }
            Expr::Poly(c) if c[2..].iter().all(|&v| v == 0.0) => Some((c[0], c[1])),
            Expr::AffineTrig { c0, c1, waves } if waves.iter().all(|w| w.amp == 0.0) => {
                Some((*c0, *c1))
            }
            _ => None,
        }
    }

    /// True when the second derivative vanishes identically.
    pub fn is_affine(&self) -> bool {
        self.as_affine().is_some()
    }

    pub fn scale(&self, k: f64) -> Expr {
        match self {
            Expr::Affine { c0, c1 } => Expr::Affine { c0: k * c0, c1: k * c1 },
            Expr::Poly(c) => Expr::Poly(c.iter().map(|v| k * v).collect()),
            Expr::AffineTrig { c0, c1, waves } => Expr::AffineTrig {
                c0: k * c0,
                c1: k * c1,
                waves: waves.iter().map(|w| Wave { amp: k * w.amp, ..*w }).collect(),
            },
            Expr::Bump(b) => Expr::Bump(Bump { value: k * b.value, slope: k * b.slope, ..*b }),
            Expr::Sum(t) => Expr::Sum(t.iter().map(|e| e.scale(k)).collect()),
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        let mut terms = Vec::new();
        for e in [self, other] {
            match e {
                Expr::Sum(t) => terms.extend(t.iter().cloned()),
                _ => terms.push(e.clone()),
            }
        }
        Expr::Sum(terms)
    }

    pub fn to_raw(&self) -> RawExpr {
        let (kind, coeffs) = match self {
            Expr::Affine { c0, c1 } => ("affine", vec![*c0, *c1]),
            Expr::Poly(c) => ("poly", c.clone()),
            Expr::AffineTrig { c0, c1, waves } => {
                let mut v = vec![*c0, *c1];
                for w in waves {
                    v.extend([w.amp, w.freq, w.phase]);
                }
                ("affine_trig", v)
            }
            Expr::Bump(b) => {
                let s = match b.side {
                    BumpSide::Left => -1.0,
                    BumpSide::Right => 1.0,
                    BumpSide::Both => 0.0,
                };
                ("bump", vec![b.center, b.delta, b.value, b.slope, s])
            }
            Expr::Sum(t) => {
                return RawExpr {
                    kind: "sum".into(),
                    coeffs: None,
                    terms: Some(t.iter().map(|e| e.to_raw()).collect()),
                }
            }
        };
        RawExpr { kind: kind.into(), coeffs: Some(coeffs), terms: None }
    }

    pub fn from_raw(raw: &RawExpr) -> Result<Expr> {
        let need = |n: usize| -> Result<&Vec<f64>> {
            let c = raw
                .coeffs
                .as_ref()
                .ok_or_else(|| PwxError::Schema(format!("'{}' needs coeffs", raw.kind)))?;
            if c.len() < n || c.iter().any(|v| !v.is_finite()) {
                return Err(PwxError::Schema(format!(
                    "'{}' needs at least {n} finite coeffs",
                    raw.kind
                )));
            }
            Ok(c)
        };
        match raw.kind.as_str() {
            "affine" => {
                let c = need(2)?;
                if c.len() != 2 {
                    return Err(PwxError::Schema("'affine' takes exactly 2 coeffs".into()));
                }
                Ok(Expr::Affine { c0: c[0], c1: c[1] })
            }
            "poly" => Ok(Expr::Poly(need(1)?.clone())),
            "affine_trig" => {
                let c = need(2)?;
                if (c.len() - 2) % 3 != 0 {
                    return Err(PwxError::Schema(
                        "'affine_trig' takes c0, c1 followed by (amp, freq, phase) triples".into(),
                    ));
                }
                let waves = c[2..]
                    .chunks(3)
                    .map(|w| Wave { amp: w[0], freq: w[1], phase: w[2] })
                    .collect();
                Ok(Expr::AffineTrig { c0: c[0], c1: c[1], waves })
            }
            "bump" => {
                let c = need(5)?;
                let side = match c[4] {
                    s if s < 0.0 => BumpSide::Left,
                    s if s > 0.0 => BumpSide::Right,
                    _ => BumpSide::Both,
                };
                if c[1] <= 0.0 {
                    return Err(PwxError::Schema("bump width must be positive".into()));
                }
                Ok(Expr::Bump(Bump { center: c[0], delta: c[1], value: c[2], slope: c[3], side }))
            }
            "sum" => {
                let t = raw
                    .terms
                    .as_ref()
                    .ok_or_else(|| PwxError::Schema("'sum' needs terms".into()))?;
                Ok(Expr::Sum(t.iter().map(Expr::from_raw).collect::<Result<_>>()?))
            }
            k => Err(PwxError::Schema(format!("unknown expression kind '{k}'"))),
        }
    }
}

/// Serialized form of [`Expr`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawExpr {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<RawExpr>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(e: &Expr, x: f64, order: usize) -> f64 {
        let h = 1e-5;
        (e.eval(x + h, Side::Plus, order - 1) - e.eval(x - h, Side::Plus, order - 1)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let exprs = [
            Expr::Poly(vec![0.3, -1.0, 2.0, 0.5]),
            Expr::AffineTrig {
                c0: 0.1,
                c1: 2.0,
                waves: vec![Wave { amp: 0.3, freq: 5.0, phase: 0.2 }],
            },
            Expr::Bump(Bump { center: 0.5, delta: 0.2, value: 1.3, slope: -0.7, side: BumpSide::Both }),
        ];
        for e in &exprs {
            for &x in &[0.37, 0.52, 0.61] {
                for order in 1..=3 {
                    let exact = e.eval(x, Side::Plus, order);
                    assert!((exact - fd(e, x, order)).abs() < 1e-6 * (1.0 + exact.abs()));
                }
            }
        }
    }

    #[test]
    fn bump_normalization() {
        let b = Bump { center: 0.5, delta: 0.1, value: 2.0, slope: 3.0, side: BumpSide::Both };
        assert_eq!(b.eval(0.5, Side::Plus, 0), 2.0);
        assert!((b.eval(0.5, Side::Plus, 1) - 3.0).abs() < 1e-12);
        assert_eq!(b.eval(0.65, Side::Plus, 0), 0.0);
        let r = Bump { side: BumpSide::Right, ..b };
        assert_eq!(r.eval(0.5, Side::Minus, 0), 0.0);
        assert_eq!(r.eval(0.5, Side::Plus, 0), 2.0);
        assert_eq!(r.eval(0.45, Side::Plus, 0), 0.0);
    }

    #[test]
    fn raw_round_trip() {
        let e = Expr::Sum(vec![
            Expr::Affine { c0: 1.0, c1: 2.0 },
            Expr::sin_2pi(0.5, 3.0),
            Expr::Bump(Bump { center: 0.2, delta: 0.01, value: 1.0, slope: 0.0, side: BumpSide::Left }),
        ]);
        assert_eq!(Expr::from_raw(&e.to_raw()).unwrap(), e);
    }
}
