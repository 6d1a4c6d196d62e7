//! Piecewise-smooth observables sharing the breakpoints of a map.

use crate::error::{PwxError, Result};
use crate::expr::{Expr, RawExpr};
use crate::map_core::{locate, PiecewiseMap, Side, SignedPoint};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Anything that can be evaluated on a branch piece with lateral information.
pub trait Evaluator: Sync {
    fn on_piece(&self, piece: usize, x: f64, side: Side) -> f64;
}

/// Piece-independent closure evaluator.
pub struct FnEval<F: Fn(f64) -> f64 + Sync>(pub F);

impl<F: Fn(f64) -> f64 + Sync> Evaluator for FnEval<F> {
    fn on_piece(&self, _piece: usize, x: f64, _side: Side) -> f64 {
        (self.0)(x)
    }
}

/// Evaluates `ev` at a signed point, locating the piece with the map's rule.
pub fn eval_at<E: Evaluator + ?Sized>(ev: &E, f: &PiecewiseMap, p: SignedPoint) -> f64 {
    ev.on_piece(f.branch_index(p), p.x, p.side)
}

/// A function in the piecewise class with pieces on the branches of a map.
///
/// `breakpoint_velocity` prescribes the value an infinitesimal deformation
/// takes at each breakpoint; it is zero unless a family moves its breakpoints.
#[derive(Debug, Clone)]
pub struct Observable {
    breaks: Vec<f64>,
    pieces: Vec<Expr>,
    velocity: Vec<f64>,
    sup: OnceLock<f64>,
}

/// JSON form of an observable. Either `pieces` (one per branch) or a single
/// `expr` used on every branch.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObservableDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<RawExpr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<RawExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoint_velocity: Option<Vec<f64>>,
}

impl PartialEq for Observable {
    fn eq(&self, other: &Self) -> bool {
        self.breaks == other.breaks && self.pieces == other.pieces && self.velocity == other.velocity
    }
}

impl Observable {
    pub fn new(breaks: Vec<f64>, pieces: Vec<Expr>) -> Result<Self> {
        if pieces.len() + 1 != breaks.len() {
            return Err(PwxError::Schema(format!(
                "observable has {} pieces for {} breakpoints",
                pieces.len(),
                breaks.len()
            )));
        }
        let velocity = vec![0.0; breaks.len()];
        Ok(Observable { breaks, pieces, velocity, sup: OnceLock::new() })
    }

    /// Same expression on every branch of `f`.
    pub fn uniform(f: &PiecewiseMap, e: Expr) -> Self {
        let n = f.n_branches();
        Observable::new(f.breakpoints().to_vec(), vec![e; n]).unwrap()
    }

    pub fn from_pieces(f: &PiecewiseMap, pieces: Vec<Expr>) -> Result<Self> {
        Observable::new(f.breakpoints().to_vec(), pieces)
    }

    pub fn zero(f: &PiecewiseMap) -> Self {
        Observable::uniform(f, Expr::constant(0.0))
    }

    pub fn with_velocity(mut self, velocity: Vec<f64>) -> Result<Self> {
        if velocity.len() != self.breaks.len() {
            return Err(PwxError::Schema("one breakpoint velocity per breakpoint".into()));
        }
        self.velocity = velocity;
        Ok(self)
    }

    /// Supplies a known bound for `sup |v|` instead of sampling it.
    pub fn with_sup_hint(self, s: f64) -> Self {
        let _ = self.sup.set(s);
        self
    }

    pub fn from_def(def: &ObservableDef, f: &PiecewiseMap) -> Result<Self> {
        let pieces = match (&def.pieces, &def.expr) {
            (Some(p), None) => p.iter().map(Expr::from_raw).collect::<Result<Vec<_>>>()?,
            (None, Some(e)) => vec![Expr::from_raw(e)?; f.n_branches()],
            _ => {
                return Err(PwxError::Schema(
                    "observable needs exactly one of 'pieces' or 'expr'".into(),
                ))
            }
        };
        let obs = Observable::from_pieces(f, pieces)?;
        match &def.breakpoint_velocity {
            Some(v) => obs.with_velocity(v.clone()),
            None => Ok(obs),
        }
    }

    pub fn from_json(text: &str, f: &PiecewiseMap) -> Result<Self> {
        let def: ObservableDef =
            serde_json::from_str(text).map_err(|e| PwxError::Schema(e.to_string()))?;
        Observable::from_def(&def, f)
    }

    pub fn to_def(&self) -> ObservableDef {
        ObservableDef {
            pieces: Some(self.pieces.iter().map(|e| e.to_raw()).collect()),
            expr: None,
            breakpoint_velocity: if self.velocity.iter().all(|&v| v == 0.0) {
                None
            } else {
                Some(self.velocity.clone())
            },
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[Expr] {
        &self.pieces
    }

    /// Prescribed value at breakpoint `i`.
    pub fn velocity(&self, i: usize) -> f64 {
        self.velocity[i]
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocity
    }

    pub fn piece_index(&self, p: SignedPoint) -> usize {
        locate(&self.breaks, p)
    }

    pub fn eval(&self, p: SignedPoint, order: usize) -> f64 {
        self.pieces[self.piece_index(p)].eval(p.x, p.side, order)
    }

    pub fn value(&self, p: SignedPoint) -> f64 {
        self.eval(p, 0)
    }

    pub fn on_piece_order(&self, piece: usize, x: f64, side: Side, order: usize) -> f64 {
        self.pieces[piece].eval(x, side, order)
    }

    /// Sampled bound for `sup |v|` (cached).
    pub fn sup_abs(&self) -> f64 {
        *self.sup.get_or_init(|| {
            let mut s: f64 = 0.0;
            for (i, e) in self.pieces.iter().enumerate() {
                let (lo, hi) = (self.breaks[i], self.breaks[i + 1]);
                let n = 2048;
                for k in 0..=n {
                    let x = lo + (hi - lo) * k as f64 / n as f64;
                    let side = if k == n { Side::Minus } else { Side::Plus };
                    s = s.max(e.eval(x, side, 0).abs());
                }
            }
            for &v in &self.velocity {
                s = s.max(v.abs());
            }
            // grid sampling can miss narrow peaks; leave a margin
            1.05 * s + 1e-300
        })
    }

    pub fn scale(&self, k: f64) -> Observable {
        Observable {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(|e| e.scale(k)).collect(),
            velocity: self.velocity.iter().map(|v| k * v).collect(),
            sup: OnceLock::new(),
        }
    }

    pub fn add(&self, other: &Observable) -> Observable {
        assert_eq!(self.breaks, other.breaks, "observables on different partitions");
        Observable {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().zip(&other.pieces).map(|(a, b)| a.add(b)).collect(),
            velocity: self.velocity.iter().zip(&other.velocity).map(|(a, b)| a + b).collect(),
            sup: OnceLock::new(),
        }
    }

    /// `sum_k coeffs[k] * obs[k]`.
    pub fn combination(obs: &[&Observable], coeffs: &[f64]) -> Observable {
        let mut acc = obs[0].scale(coeffs[0]);
        for (o, &c) in obs.iter().zip(coeffs).skip(1) {
            acc = acc.add(&o.scale(c));
        }
        acc
    }
}

impl Evaluator for Observable {
    fn on_piece(&self, piece: usize, x: f64, side: Side) -> f64 {
        self.pieces[piece].eval(x, side, 0)
    }
}
