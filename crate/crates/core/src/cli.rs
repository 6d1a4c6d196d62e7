//! The `pwx` command line: subcommands wiring definition files to the library.
//!
//! Reports are canonical JSON (sorted keys, 17 significant digits); grids are
//! CSV. With `--out PATH` the JSON goes to `PATH` with extension `.json` and the
//! CSV, when there is one, next to it with extension `.csv`. Without `--out`
//! the JSON report is printed. Exit status: 0 success, 2 schema error, 3
//! numerical failure (with a JSON error record).

use crate::canon;
use crate::cohomology::{self, AlphaSeries};
use crate::error::{PwxError, Result};
use crate::family::{ExprFamily, MapFamily};
use crate::flow::{self, FlowControls};
use crate::map_core::{PiecewiseMap, Side, SignedPoint, DEFAULT_RELATION_DEPTH};
use crate::metric::{self, SigmaControls};
use crate::observable::Observable;
use crate::qs;
use crate::regularity;
use crate::skew::{self, SkewProduct};
use crate::transfer;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "pwx", version, about = "Deformations of piecewise expanding interval maps")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Numerical tolerance; each command documents its default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Orbit depth for critical relations and classification.
    #[arg(long, global = true, default_value_t = DEFAULT_RELATION_DEPTH)]
    pub depth: usize,
    /// Number of Ulam bins.
    #[arg(long, global = true, default_value_t = 256)]
    pub bins: usize,
    /// Seed for every random sample drawn by a command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output path stem; `.json` and `.csv` are substituted as extension.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a map and report expansion, relations and a Lasota-Yorke estimate.
    Check { map: PathBuf },
    /// Signed orbit of a point with the derivative along it.
    Orbit {
        map: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// `+` or `-`.
        #[arg(long, default_value = "+")]
        side: String,
        #[arg(long, default_value_t = 20)]
        n: usize,
    },
    /// J-functionals of a direction at every signed breakpoint.
    Jfunc { map: PathBuf, direction: PathBuf },
    /// Series solution of the twisted cohomological equation on a grid.
    Alpha {
        map: PathBuf,
        direction: PathBuf,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
    },
    /// The observable `phi_v = (Dv + D^2 f alpha) / Df` on a grid.
    Psi {
        map: PathBuf,
        direction: PathBuf,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
    },
    /// Ulam discretization: peripheral spectrum, period, gap and density.
    Ulam {
        map: PathBuf,
        /// Include the dense matrix in the report.
        #[arg(long)]
        matrix: bool,
    },
    /// Integrate the deformation flow of a family into conjugacies.
    Deform {
        family: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        t: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        grid: usize,
    },
    /// Moduli of continuity of CSV samples `x,g`.
    Regularity {
        samples: PathBuf,
        /// Dyadic exponents `lo:hi` of the scales.
        #[arg(long, default_value = "4:14")]
        scales: String,
        #[arg(long, default_value_t = regularity::DEFAULT_STABILITY)]
        stability: f64,
    },
    /// Critical classification, multiplier invariants and codimension.
    Qs {
        map: PathBuf,
        /// Second map for the obstruction verdict.
        other: Option<PathBuf>,
    },
    /// Pressure pseudo-metric between two horizontal directions.
    Metric {
        map: PathBuf,
        v1: PathBuf,
        v2: Option<PathBuf>,
        /// Multipliers of the period used as Birkhoff lengths.
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        n_list: Vec<usize>,
    },
    /// Skew product diagnostics along a family.
    Skew {
        family: PathBuf,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 1)]
        period: usize,
        /// Comma list of parameters, or `lo:hi:count`.
        #[arg(long, default_value = "0:0.2:11")]
        t_grid: String,
        /// Random `(x, t)` samples for the central invariance residual.
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

/// Result of one command.
pub struct Output {
    pub report: Value,
    pub csv: Option<String>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| PwxError::Schema(format!("{}: {e}", path.display())))
}

fn load_map(path: &Path) -> Result<PiecewiseMap> {
    PiecewiseMap::from_json(&read(path)?)
}

fn load_family(path: &Path) -> Result<ExprFamily> {
    ExprFamily::from_json(&read(path)?)
}

fn load_obs(path: &Path, f: &PiecewiseMap) -> Result<Observable> {
    Observable::from_json(&read(path)?, f)
}

fn parse_side(s: &str) -> Result<Side> {
    match s {
        "+" | "plus" => Ok(Side::Plus),
        "-" | "minus" => Ok(Side::Minus),
        _ => Err(PwxError::Schema(format!("side must be + or -, got '{s}'"))),
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || PwxError::Schema(format!("bad parameter grid '{s}'"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n < 2 {
            return Err(bad());
        }
        Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
    } else {
        s.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect()
    }
}

fn parse_samples(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut gs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let parsed: Option<(f64, f64)> = match cells.as_slice() {
            [x, g] => x.trim().parse().ok().zip(g.trim().parse().ok()),
            _ => None,
        };
        match parsed {
            Some((x, g)) => {
                xs.push(x);
                gs.push(g);
            }
            None if i == 0 => continue,
            None => return Err(PwxError::Schema(format!("line {}: expected 'x,g'", i + 1))),
        }
    }
    Ok((xs, gs))
}

fn grid_points(f: &PiecewiseMap, n: usize) -> Vec<SignedPoint> {
    cohomology::uniform_grid(f, n.max(1))
}

pub fn execute(cli: &Cli) -> Result<Output> {
    let c = &cli.common;
    let json_only = |report: Value| Ok(Output { report, csv: None });
    match &cli.command {
        Command::Check { map } => {
            let f = load_map(map)?;
            let rel = f.critical_relations(c.depth);
            let n_ly = transfer::contracting_iterate(&f);
            let ly = transfer::lasota_yorke_estimate(&f, n_ly)?;
            json_only(json!({
                "expansion_floor": f.expansion_floor(),
                "n_branches": f.n_branches(),
                "breakpoints": f.breakpoints(),
                "critical_relations": rel,
                "lasota_yorke": ly,
            }))
        }
        Command::Orbit { map, x, side, n } => {
            let f = load_map(map)?;
            let p = SignedPoint::new(*x, parse_side(side)?);
            let orbit = f.iterate(p, *n);
            let (_, d) = f.iterate_with_derivative(p, *n);
            let pts: Vec<Value> =
                orbit.points.iter().map(|q| json!({"x": q.x, "side": q.side})).collect();
            json_only(json!({"points": pts, "hit_critical": orbit.hit_critical, "derivative": d}))
        }
        Command::Jfunc { map, direction } => {
            let f = load_map(map)?;
            let v = load_obs(direction, &f)?;
            let tol = c.tol.unwrap_or(cohomology::DEFAULT_TOL);
            let js = cohomology::j_functionals(&f, &v, tol);
            let rows: Vec<Vec<f64>> = js.iter().map(|(cid, j)| vec![f.crit_point(*cid).x, *j]).collect();
            let entries: Vec<Value> = js
                .iter()
                .map(|(cid, j)| json!({"index": cid.index, "side": cid.side, "point": f.crit_point(*cid).x, "value": j}))
                .collect();
            let max = js.iter().map(|(_, j)| j.abs()).fold(0.0, f64::max);
            Ok(Output {
                report: json!({"j": entries, "max_abs_j": max}),
                csv: Some(canon::csv(&["point", "value"], &rows)),
            })
        }
        Command::Alpha { map, direction, grid } => {
            let f = load_map(map)?;
            let v = load_obs(direction, &f)?;
            let tol = c.tol.unwrap_or(cohomology::DEFAULT_TOL);
            let a = AlphaSeries::new(&f, &v, tol);
            let pts = grid_points(&f, *grid);
            let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.x, a.eval(*p)]).collect();
            let mut check = pts.clone();
            check.extend(cohomology::critical_points(&f));
            let residual = cohomology::tce_residual(&f, &v, |p| a.eval(p), &check);
            Ok(Output {
                report: json!({
                    "tce_residual": residual,
                    "n_terms": a.n_terms(),
                    "max_abs_j": cohomology::max_abs_j(&f, &v, tol),
                }),
                csv: Some(canon::csv(&["point", "value"], &rows)),
            })
        }
        Command::Psi { map, direction, grid } => {
            let f = load_map(map)?;
            let v = load_obs(direction, &f)?;
            let tol = c.tol.unwrap_or(cohomology::DEFAULT_TOL);
            let phi = cohomology::phi_observable(&f, &v, tol);
            let rows: Vec<Vec<f64>> = grid_points(&f, *grid).iter().map(|p| vec![p.x, phi.eval(*p)]).collect();
            let sup = rows.iter().map(|r| r[1].abs()).fold(0.0, f64::max);
            Ok(Output {
                report: json!({"sup_abs": sup, "max_abs_j": cohomology::max_abs_j(&f, &v, tol)}),
                csv: Some(canon::csv(&["point", "value"], &rows)),
            })
        }
        Command::Ulam { map, matrix } => {
            let f = load_map(map)?;
            let u = transfer::ulam_matrix(&f, c.bins)?;
            let tol = c.tol.unwrap_or(transfer::DEFAULT_PERIPHERAL_TOL);
            let data = transfer::peripheral_spectrum(&u, tol)?;
            let rows: Vec<Vec<f64>> =
                data.density.iter().enumerate().map(|(i, d)| vec![u.center(i), *d]).collect();
            let mut report = json!({
                "n_bins": c.bins,
                "lambdas": data.lambdas,
                "period": data.period,
                "gap": data.gap,
                "density": data.density,
                "max_row_defect": u.max_row_defect(),
            });
            if *matrix {
                let m = u.dense();
                let dense: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
                report["matrix"] = json!(dense);
            }
            Ok(Output { report, csv: Some(canon::csv(&["bin_center", "value"], &rows)) })
        }
        Command::Deform { family, t, grid } => {
            let fam = load_family(family)?;
            let ctl = FlowControls { tol: c.tol.unwrap_or(FlowControls::default().tol), ..FlowControls::default() };
            let (a, b) = {
                let f0 = fam.map_at(0.0)?;
                (f0.a(), f0.b())
            };
            let n = (*grid).max(1);
            let xs: Vec<f64> = (0..n).map(|k| a + (b - a) * (k as f64 + 0.5) / n as f64).collect();
            let mut ts = t.clone();
            ts.sort_by(|p, q| p.partial_cmp(q).unwrap());
            let (neg, pos): (Vec<f64>, Vec<f64>) = ts.iter().partition(|&&v| v < 0.0);
            let mut rows = Vec::new();
            let mut residual: f64 = 0.0;
            let mut budgets = Vec::new();
            for part in [neg.into_iter().rev().collect::<Vec<_>>(), pos] {
                if part.is_empty() {
                    continue;
                }
                let g = flow::conjugacy_grid(&fam, &part, &xs, &ctl)?;
                residual = residual.max(g.residual);
                for (i, tv) in g.t_grid.iter().enumerate() {
                    for (j, x) in g.x_grid.iter().enumerate() {
                        rows.push(vec![*tv, *x, g.values[i][j]]);
                    }
                }
            }
            rows.sort_by(|p, q| p[0].partial_cmp(&q[0]).unwrap().then(p[1].partial_cmp(&q[1]).unwrap()));
            for &tv in &ts {
                let c_ll = loglip_along(&fam, tv)?;
                let (exponent, prefactor) = flow::holder_budget(c_ll, tv);
                budgets.push(json!({"t": tv, "c_ll": c_ll, "exponent": exponent, "prefactor": prefactor}));
            }
            Ok(Output {
                report: json!({"residual": residual, "t": ts, "grid": n, "budgets": budgets}),
                csv: Some(canon::csv(&["t", "x", "h"], &rows)),
            })
        }
        Command::Regularity { samples, scales, stability } => {
            let (xs, gs) = parse_samples(&read(samples)?)?;
            let (lo, hi) = scales
                .split_once(':')
                .and_then(|(l, h)| Some((l.trim().parse::<i32>().ok()?, h.trim().parse::<i32>().ok()?)))
                .ok_or_else(|| PwxError::Schema(format!("bad scales '{scales}'")))?;
            let report = regularity::modulus_scan(&xs, &gs, &regularity::dyadic_scales(lo, hi))?;
            let class = regularity::classify(&report, *stability);
            let exponent = match class {
                regularity::RegularityClass::Holder(b) => Some(b),
                _ => None,
            };
            json_only(json!({"report": report, "class": class.name(), "holder_exponent": exponent}))
        }
        Command::Qs { map, other } => {
            let f = load_map(map)?;
            let cl = qs::classify_critical(&f, c.depth);
            let table = qs::qs_invariant(&f, &cl).ok();
            let d_f = qs::qs_codimension(&f, &cl).ok();
            let mut report = json!({"classification": cl, "invariants": table, "codimension": d_f});
            if let Some(g) = other {
                let g = load_map(g)?;
                report["verdict"] = json!(qs::qs_obstruction(&f, &g, c.depth)?);
            }
            json_only(report)
        }
        Command::Metric { map, v1, v2, n_list } => {
            let f = load_map(map)?;
            let a = load_obs(v1, &f)?;
            let b = match v2 {
                Some(p) => load_obs(p, &f)?,
                None => a.clone(),
            };
            let ctl = SigmaControls { n_multipliers: n_list.clone(), n_bins: c.bins, ..SigmaControls::default() };
            json_only(json!(metric::pressure_inner(&f, &a, &b, &ctl)?))
        }
        Command::Skew { family, q, period, t_grid, samples } => {
            let fam = load_family(family)?;
            let s = SkewProduct::new(&fam);
            let ctl = FlowControls { tol: c.tol.unwrap_or(FlowControls::default().tol), ..FlowControls::default() };
            let ts = parse_grid(t_grid)?;
            let report = skew::nightmare_diagnostic(&s, SignedPoint::plus(*q), *period, &ts, &ctl)?;
            let (t0, t1) = fam.param_range();
            let f0 = fam.map_at(0.0)?;
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            let pts: Vec<(f64, f64)> = (0..*samples)
                .map(|_| (rng.random_range(f0.a()..f0.b()), rng.random_range(t0..=t1)))
                .collect();
            let central = skew::central_invariance_residual(&s, &pts, true)?;
            json_only(json!({"nightmare": report, "central_invariance_residual": central, "samples": samples}))
        }
    }
}

/// Largest log-Lipschitz constant of `alpha_s` over `s` between 0 and `t`.
fn loglip_along(fam: &ExprFamily, t: f64) -> Result<f64> {
    let n = 1 << 14;
    let scales = regularity::dyadic_scales(4, 11);
    let mut c_ll: f64 = 0.0;
    for k in 0..=2 {
        let s = t * k as f64 / 2.0;
        let (f, v) = fam.pair_at(s)?;
        let a = AlphaSeries::new(&f, &v, 1e-14);
        let xs = regularity::uniform_grid(f.a(), f.b(), n);
        let gs: Vec<f64> = xs.iter().map(|&x| a.eval(f.point(x))).collect();
        c_ll = c_ll.max(regularity::modulus_scan(&xs, &gs, &scales)?.loglip_constant);
    }
    Ok(c_ll)
}

fn error_record(e: &PwxError) -> String {
    canon::to_string(&json!({"error": {"kind": e.kind(), "message": e.to_string()}}))
}

fn write_outputs(out: &Option<PathBuf>, o: &Output) -> std::io::Result<()> {
    let text = canon::to_string(&o.report);
    match out {
        Some(p) => {
            std::fs::write(p.with_extension("json"), text)?;
            if let Some(csv) = &o.csv {
                std::fs::write(p.with_extension("csv"), csv)?;
            }
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Runs the parsed command and returns the process exit status.
pub fn run(cli: &Cli) -> i32 {
    if let Some(n) = std::env::var("PWX_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match execute(cli) {
        Ok(o) => match write_outputs(&cli.common.out, &o) {
            Ok(()) => 0,
            Err(e) => {
                let err = PwxError::Schema(format!("cannot write output: {e}"));
                print!("{}", error_record(&err));
                2
            }
        },
        Err(e) => {
            print!("{}", error_record(&e));
            if e.is_schema() {
                2
            } else {
                3
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!(parse_grid("0:0.2:3").unwrap(), vec![0.0, 0.1, 0.2]);
        assert_eq!(parse_grid("0.1, 0.3").unwrap(), vec![0.1, 0.3]);
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn samples_skip_header() {
        let (xs, gs) = parse_samples("x,g\n0,1\n0.5,2\n").unwrap();
        assert_eq!((xs, gs), (vec![0.0, 0.5], vec![1.0, 2.0]));
        assert!(parse_samples("x,g\n0,1\nbad\n").is_err());
    }
}
