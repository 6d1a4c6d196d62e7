//! One-parameter families `t -> f_t` with closed-form tangents `v_t = d f_t / dt`.

use crate::error::{PwxError, Result};
use crate::expr::{Expr, Wave};
use crate::map_core::{PiecewiseMap, Side};
use crate::observable::Observable;
use crate::texpr::{Coeff, Dual, TExpr};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

pub trait MapFamily: Sync {
    fn param_range(&self) -> (f64, f64);

    fn map_at(&self, t: f64) -> Result<PiecewiseMap>;

    /// `v_t`, including the breakpoint velocities when breakpoints move.
    fn tangent_at(&self, t: f64) -> Result<Observable>;

    /// `(f_t, v_t)` in one call.
    fn pair_at(&self, t: f64) -> Result<(PiecewiseMap, Observable)> {
        Ok((self.map_at(t)?, self.tangent_at(t)?))
    }
}

/// Largest gap between `v_t` and a central difference of `f_t` on an interior grid.
pub fn tangent_fd_error<F: MapFamily + ?Sized>(fam: &F, t: f64, n: usize) -> Result<f64> {
    let h = 1e-5;
    let (f, v) = fam.pair_at(t)?;
    let fp = fam.map_at(t + h)?;
    let fm = fam.map_at(t - h)?;
    let c = f.breakpoints();
    let mut err: f64 = 0.0;
    for i in 0..f.n_branches() {
        let (lo, hi) = (c[i], c[i + 1]);
        for k in 1..n {
            let x = lo + (hi - lo) * k as f64 / n as f64;
            // stay clear of breakpoints that move with t
            if (x - lo).abs() < 1e-3 || (hi - x).abs() < 1e-3 {
                continue;
            }
            let fd = (fp.branch(i).value(x) - fm.branch(i).value(x)) / (2.0 * h);
            err = err.max((fd - v.on_piece_order(i, x, Side::Plus, 0)).abs());
        }
    }
    Ok(err)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FamilyBranchDef {
    pub kind: String,
    pub coeffs: Vec<Coeff>,
}

/// JSON form of a family: a map definition whose coefficients and interior
/// breakpoints may be strings in `t`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FamilyDef {
    pub interval: [f64; 2],
    pub param_range: [f64; 2],
    pub breakpoints: Vec<Coeff>,
    pub branches: Vec<FamilyBranchDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Affine,
    Poly,
    AffineTrig,
}

#[derive(Debug, Clone)]
struct FamilyBranch {
    kind: Kind,
    coeffs: Vec<TExpr>,
}

impl FamilyBranch {
    fn expr(&self, t: f64) -> (Expr, Expr) {
        let d: Vec<Dual> = self.coeffs.iter().map(|c| c.eval(t)).collect();
        match self.kind {
            Kind::Affine => (
                Expr::Affine { c0: d[0].v, c1: d[1].v },
                Expr::Affine { c0: d[0].d, c1: d[1].d },
            ),
            Kind::Poly => (
                Expr::Poly(d.iter().map(|c| c.v).collect()),
                Expr::Poly(d.iter().map(|c| c.d).collect()),
            ),
            Kind::AffineTrig => {
                let mut waves = Vec::new();
                let mut dwaves = Vec::new();
                for w in d[2..].chunks(3) {
                    let (amp, freq, phase) = (w[0], w[1], w[2]);
                    waves.push(Wave { amp: amp.v, freq: freq.v, phase: phase.v });
                    if amp.d != 0.0 {
                        dwaves.push(Wave { amp: amp.d, freq: freq.v, phase: phase.v });
                    }
                    if phase.d != 0.0 {
                        dwaves.push(Wave {
                            amp: amp.v * phase.d,
                            freq: freq.v,
                            phase: phase.v + FRAC_PI_2,
                        });
                    }
                }
                (
                    Expr::AffineTrig { c0: d[0].v, c1: d[1].v, waves },
                    Expr::AffineTrig { c0: d[0].d, c1: d[1].d, waves: dwaves },
                )
            }
        }
    }
}

/// Family parsed from JSON.
#[derive(Debug, Clone)]
pub struct ExprFamily {
    def: FamilyDef,
    interval: [f64; 2],
    range: (f64, f64),
    breaks: Vec<TExpr>,
    branches: Vec<FamilyBranch>,
    floor: f64,
    sup_v: f64,
}

const SURVEY: usize = 32;

impl ExprFamily {
    pub fn from_def(def: &FamilyDef) -> Result<Self> {
        let [a, b] = def.interval;
        let [t0, t1] = def.param_range;
        if !(a < b) || !(t0 <= t1) || !t0.is_finite() || !t1.is_finite() {
            return Err(PwxError::Schema("bad interval or param_range".into()));
        }
        if def.branches.len() != def.breakpoints.len() + 1 {
            return Err(PwxError::Schema(format!(
                "{} interior breakpoints need {} branches, got {}",
                def.breakpoints.len(),
                def.breakpoints.len() + 1,
                def.branches.len()
            )));
        }
        let breaks = def.breakpoints.iter().map(Coeff::compile).collect::<Result<Vec<_>>>()?;
        let mut branches = Vec::new();
        for raw in &def.branches {
            let coeffs = raw.coeffs.iter().map(Coeff::compile).collect::<Result<Vec<_>>>()?;
            let kind = match raw.kind.as_str() {
                "affine" if coeffs.len() == 2 => Kind::Affine,
                "poly" if !coeffs.is_empty() => Kind::Poly,
                "affine_trig" if coeffs.len() >= 2 && (coeffs.len() - 2) % 3 == 0 => {
                    if coeffs[2..].chunks(3).any(|w| !w[1].is_constant()) {
                        return Err(PwxError::Schema("wave frequencies must not depend on t".into()));
                    }
                    Kind::AffineTrig
                }
                k => {
                    return Err(PwxError::Schema(format!(
                        "family branch kind '{k}' with {} coeffs is not supported",
                        coeffs.len()
                    )))
                }
            };
            branches.push(FamilyBranch { kind, coeffs });
        }
        let mut fam = ExprFamily {
            def: def.clone(),
            interval: def.interval,
            range: (t0, t1),
            breaks,
            branches,
            floor: f64::NAN,
            sup_v: f64::NAN,
        };
        // survey the parameter range once so that stage maps skip validation
        let mut floor = f64::INFINITY;
        let mut sup_v: f64 = 0.0;
        for k in 0..=SURVEY {
            let t = t0 + (t1 - t0) * k as f64 / SURVEY as f64;
            let (bk, br, _, _) = fam.parts(t);
            let f = PiecewiseMap::new(bk, br)?;
            floor = floor.min(f.verify_expanding()?);
            sup_v = sup_v.max(fam.tangent_raw(t)?.sup_abs());
        }
        fam.floor = if floor * 0.995 > 1.0 { floor * 0.995 } else { 0.5 * (1.0 + floor) };
        fam.sup_v = 1.25 * sup_v + 1e-300;
        Ok(fam)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let def: FamilyDef =
            serde_json::from_str(text).map_err(|e| PwxError::Schema(e.to_string()))?;
        Self::from_def(&def)
    }

    pub fn def(&self) -> &FamilyDef {
        &self.def
    }

    /// Expansion floor valid over the whole parameter range.
    pub fn expansion_floor(&self) -> f64 {
        self.floor
    }

    fn parts(&self, t: f64) -> (Vec<f64>, Vec<Expr>, Vec<Expr>, Vec<f64>) {
        let mut breaks = vec![self.interval[0]];
        let mut vel = vec![0.0];
        for c in &self.breaks {
            let d = c.eval(t);
            breaks.push(d.v);
            vel.push(d.d);
        }
        breaks.push(self.interval[1]);
        vel.push(0.0);
        let (br, dbr) = self.branches.iter().map(|b| b.expr(t)).unzip();
        (breaks, br, dbr, vel)
    }

    fn tangent_raw(&self, t: f64) -> Result<Observable> {
        let (breaks, _, dbr, vel) = self.parts(t);
        Observable::new(breaks, dbr)?.with_velocity(vel)
    }

    pub fn moves_breakpoints(&self) -> bool {
        self.breaks.iter().any(|c| !c.is_constant())
    }
}

impl MapFamily for ExprFamily {
    fn param_range(&self) -> (f64, f64) {
        self.range
    }

    fn map_at(&self, t: f64) -> Result<PiecewiseMap> {
        let (breaks, br, _, _) = self.parts(t);
        PiecewiseMap::with_floor(breaks, br, self.floor)
    }

    fn tangent_at(&self, t: f64) -> Result<Observable> {
        Ok(self.tangent_raw(t)?.with_sup_hint(self.sup_v))
    }
}

/// `f_t = f + t v` with fixed breakpoints.
#[derive(Debug, Clone)]
pub struct LinearFamily {
    pub base: PiecewiseMap,
    pub direction: Observable,
    pub range: (f64, f64),
}

impl LinearFamily {
    pub fn new(base: PiecewiseMap, direction: Observable, range: (f64, f64)) -> Self {
        LinearFamily { base, direction, range }
    }
}

impl MapFamily for LinearFamily {
    fn param_range(&self) -> (f64, f64) {
        self.range
    }

    fn map_at(&self, t: f64) -> Result<PiecewiseMap> {
        let branches = self
            .base
            .branches()
            .iter()
            .zip(self.direction.pieces())
            .map(|(e, w)| if t == 0.0 { e.clone() } else { e.add(&w.scale(t)) })
            .collect();
        PiecewiseMap::new(self.base.breakpoints().to_vec(), branches)
    }

    fn tangent_at(&self, _t: f64) -> Result<Observable> {
        Ok(self.direction.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::SignedPoint;

    const SKEW: &str = r#"{"interval":[0,1],"param_range":[-0.2,0.2],"breakpoints":["0.5+t"],
        "branches":[{"kind":"affine","coeffs":[0,"1/(0.5+t)"]},
                    {"kind":"affine","coeffs":["1/(0.5-t)","-1/(0.5-t)"]}]}"#;

    #[test]
    fn skew_tent_family_evaluates() {
        let fam = ExprFamily::from_json(SKEW).unwrap();
        let f = fam.map_at(0.1).unwrap();
        assert!((f.breakpoints()[1] - 0.6).abs() < 1e-15);
        let y = f.eval(SignedPoint::plus(0.3));
        assert!((y.x - 0.5).abs() < 1e-15);
        let v = fam.tangent_at(0.1).unwrap();
        assert_eq!(v.velocity(1), 1.0);
        assert!(tangent_fd_error(&fam, 0.1, 50).unwrap() < 1e-6);
        assert!(fam.moves_breakpoints());
    }

    #[test]
    fn trig_tangent_includes_phase_motion() {
        let text = r#"{"interval":[0,1],"param_range":[-0.05,0.05],"breakpoints":[0.5],
            "branches":[{"kind":"affine_trig","coeffs":[0.05,1.8,"0.01+t","6.283185307179586","t"]},
                        {"kind":"affine_trig","coeffs":[-0.85,1.8,"0.01+t","6.283185307179586","t"]}]}"#;
        let fam = ExprFamily::from_json(text).unwrap();
        assert!(tangent_fd_error(&fam, 0.02, 40).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_moving_frequency() {
        let text = r#"{"interval":[0,1],"param_range":[0,0.1],"breakpoints":[],
            "branches":[{"kind":"affine_trig","coeffs":[0,2,0.01,"t",0]}]}"#;
        assert!(matches!(ExprFamily::from_json(text), Err(PwxError::Schema(_))));
    }
}
