//! Deformations of piecewise expanding interval maps: twisted cohomological
//! equations, transfer operators, conjugacy flows, regularity scans,
//! quasisymmetric invariants and the pressure pseudo-metric.

pub mod bundled;
pub mod canon;
pub mod cli;
pub mod cohomology;
pub mod cylinder;
pub mod error;
pub mod expr;
pub mod flow;
pub mod family;
pub mod map_core;
pub mod metric;
pub mod observable;
pub mod qs;
pub mod quad;
pub mod regularity;
pub mod skew;
pub mod texpr;
pub mod transfer;

pub use error::{PwxError, Result};
pub use map_core::{PiecewiseMap, Side, SignedPoint};
pub use observable::Observable;
