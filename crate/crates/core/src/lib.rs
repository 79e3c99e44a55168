//! Feasibility solving with the cyclic relaxed Douglas-Rachford operator.
//!
//! The library is organized around a small catalog of analytic sets with
//! exact projectors ([`geometry`]), the two-set and cyclic relaxed
//! Douglas-Rachford fixed-point maps ([`operators`]), an iteration driver
//! with trace capture ([`engine`]), gap/shadow/rate monitoring
//! ([`diagnostics`]), and the fixed-point characterization and
//! regularity-violation calculus ([`analysis`]).
//!
//! A feasibility problem is specified by an ordered list of closed sets
//! `A_1, ..., A_m` and a relaxation parameter `lambda` in `[0, 1]`.  The
//! cyclic operator composes the pair maps
//!
//! ```text
//! T_{j,j+1} = (lambda/2) (R_{A_j} R_{A_{j+1}} + I) + (1 - lambda) P_{A_{j+1}}
//! ```
//!
//! around the cycle (indices wrap, `A_{m+1} = A_1`), interpolating between
//! cyclic projections (`lambda = 0`) and cyclic Douglas-Rachford
//! (`lambda = 1`).  Fixed points of the composite are meaningful even when
//! the intersection of the sets is empty; the diagnostics quantify that gap.

pub mod analysis;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod operators;
pub mod point;

pub use analysis::{AffineApproxBudget, AffineMap, FixCharacterizationReport, RegularityBudget};
pub use diagnostics::{FneEstimate, GapReport, RateFit};
pub use engine::{IterationTrace, OrbitReport, StopCriteria, StopReason};
pub use error::{Error, Result};
pub use geometry::{AffineSubspace, ProjectionOutcome, SetSpec, TieRule};
pub use operators::{CycleOp, PairDROp, StepRecord};
pub use point::Point;
