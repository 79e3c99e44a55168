//! Relaxed Douglas-Rachford fixed-point maps: the two-set operator, its
//! cyclic composition, and the plain/extended cyclic projection operators.
//!
//! The two-set operator for an ordered pair `(A_i, A_j)` is
//!
//! ```text
//! T_{i,j} = (lambda/2) (R_{A_i} R_{A_j} + I) + (1 - lambda) P_{A_j}
//! ```
//!
//! (`R_{A_j}` acts first).  `lambda = 0` reduces it to `P_{A_j}`;
//! `lambda = 1` is the classical Douglas-Rachford map.  The cyclic operator
//! composes `T_{1,2} ∘ T_{2,3} ∘ ... ∘ T_{m,m+1}` with indices wrapping
//! (`A_{m+1} = A_1`); application is rightmost-first, so `T_{m,m+1}` acts
//! on the input before any other pair.

use crate::error::{Error, Result};
use crate::geometry::SetSpec;
use crate::point::Point;
use serde::{Deserialize, Serialize};

/// Two-set relaxed Douglas-Rachford operator `T_{i,j}`; `inner` is the
/// first-reflected set `A_i`, `outer` is `A_j`.
#[derive(Clone, Debug)]
pub struct PairDROp {
    inner: SetSpec,
    outer: SetSpec,
    lambda: f64,
}

/// One application of a pair operator together with multivaluedness info.
#[derive(Clone, Debug)]
pub struct PairApplication {
    pub output: Point,
    /// Reflection of the input across the outer set (the `y` point of the
    /// fixed-point chain).
    pub reflected_outer: Point,
    pub multivalued: bool,
}

impl PairDROp {
    pub fn new(inner: SetSpec, outer: SetSpec, lambda: f64) -> Result<Self> {
        if inner.dim() != outer.dim() {
            return Err(Error::DimensionMismatch {
                expected: inner.dim(),
                got: outer.dim(),
            });
        }
        check_lambda(lambda)?;
        Ok(PairDROp {
            inner,
            outer,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn inner(&self) -> &SetSpec {
        &self.inner
    }

    pub fn outer(&self) -> &SetSpec {
        &self.outer
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Defining form `(lambda/2)(R_i R_j x + x) + (1 - lambda) P_j x`.
    pub fn apply(&self, x: &Point) -> Result<Point> {
        Ok(self.apply_tracked(x)?.output)
    }

    /// As [`apply`](Self::apply), also reporting the outer reflection and
    /// whether any projector along the way was multivalued.
    pub fn apply_tracked(&self, x: &Point) -> Result<PairApplication> {
        let p_outer = self.outer.project(x)?;
        let r_outer = &p_outer.point * 2.0 - x;
        let p_inner = self.inner.project(&r_outer)?;
        let r_inner = &p_inner.point * 2.0 - &r_outer;
        let output = (r_inner + x) * (self.lambda / 2.0) + &p_outer.point * (1.0 - self.lambda);
        Ok(PairApplication {
            output,
            reflected_outer: r_outer,
            multivalued: p_outer.multivalued || p_inner.multivalued,
        })
    }

    /// Alternative representation
    /// `lambda P_i R_j x + (1 - 2 lambda) P_j x + lambda x`.
    ///
    /// Algebraically identical to [`apply`](Self::apply) whenever the same
    /// projection selections are used; kept as an independent cross-check
    /// route.
    pub fn apply_alt(&self, x: &Point) -> Result<Point> {
        let p_outer = self.outer.project(x)?;
        let r_outer = &p_outer.point * 2.0 - x;
        let p_inner = self.inner.project(&r_outer)?;
        Ok(&p_inner.point * self.lambda
            + &p_outer.point * (1.0 - 2.0 * self.lambda)
            + x * self.lambda)
    }
}

/// Cyclic relaxed Douglas-Rachford operator over an ordered set list, with
/// one relaxation parameter shared by every pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "CycleOpRaw", into = "CycleOpRaw")]
pub struct CycleOp {
    sets: Vec<SetSpec>,
    lambda: f64,
}

/// One application of the cyclic operator, recording the full chain of
/// intermediate points.
///
/// `intermediates` lists, in application order, the stage label and point
/// for `x_{m+1} = x`, each outer reflection `y_{j+1} = R_{A_{j+1}} x_{j+1}`
/// and each partial composition `x_j = T_{j,j+1} x_{j+1}` (1-based indices,
/// `j = m, ..., 1`).  Replaying the pair steps on the recorded inputs
/// reproduces the recorded outputs exactly: all selections are
/// deterministic.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub input: Point,
    pub output: Point,
    pub intermediates: Vec<(String, Point)>,
    pub multivalued_hit: bool,
}

impl CycleOp {
    pub fn new(sets: Vec<SetSpec>, lambda: f64) -> Result<Self> {
        if sets.len() < 2 {
            return Err(Error::invalid(
                "sets",
                format!("a cycle needs at least 2 sets, got {}", sets.len()),
            ));
        }
        let n = sets[0].dim();
        for s in &sets {
            if s.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: s.dim(),
                });
            }
        }
        check_lambda(lambda)?;
        Ok(CycleOp { sets, lambda })
    }

    pub fn sets(&self) -> &[SetSpec] {
        &self.sets
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.sets[0].dim()
    }

    /// The pair operator `T_{j,j+1}` for 1-based `j`; indices wrap so that
    /// `A_{m+1} = A_1`.
    pub fn pair(&self, j: usize) -> PairDROp {
        let m = self.sets.len();
        PairDROp {
            inner: self.sets[j - 1].clone(),
            outer: self.sets[j % m].clone(),
            lambda: self.lambda,
        }
    }

    /// Applies the cyclic operator, rightmost pair first.
    pub fn apply(&self, x: &Point) -> Result<StepRecord> {
        let m = self.sets.len();
        let mut intermediates = Vec::with_capacity(2 * m + 1);
        intermediates.push((format!("x_{}", m + 1), x.clone()));
        let mut current = x.clone();
        let mut multivalued_hit = false;
        for j in (1..=m).rev() {
            let step = self.pair(j).apply_tracked(&current)?;
            multivalued_hit |= step.multivalued;
            intermediates.push((format!("y_{}", j + 1), step.reflected_outer));
            current = step.output;
            intermediates.push((format!("x_{j}"), current.clone()));
        }
        Ok(StepRecord {
            input: x.clone(),
            output: current,
            intermediates,
            multivalued_hit,
        })
    }

    /// Applies the cyclic operator, returning only the output point.
    pub fn apply_point(&self, x: &Point) -> Result<Point> {
        let m = self.sets.len();
        let mut current = x.clone();
        for j in (1..=m).rev() {
            current = self.pair(j).apply_tracked(&current)?.output;
        }
        Ok(current)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(Error::invalid(
            "lambda",
            format!("must lie in [0, 1], got {lambda}"),
        ));
    }
    Ok(())
}

/// Cyclic projection operator `P_{A_2} ∘ ... ∘ P_{A_m} ∘ P_{A_1}`:
/// `P_{A_1}` acts first, then `P_{A_m}` down to `P_{A_2}`.  This is the
/// `lambda = 0` degeneration of the cyclic operator.  A single-set list
/// degenerates to one projection.
pub fn cyclic_projections(sets: &[SetSpec], x: &Point) -> Result<Point> {
    if sets.is_empty() {
        return Err(Error::Empty("set list"));
    }
    let mut current = sets[0].project(x)?.point;
    for s in sets.iter().skip(1).rev() {
        current = s.project(&current)?.point;
    }
    Ok(current)
}

/// Extended cyclic projection operator
/// `P_{A_1} ∘ P_{A_2} ∘ ... ∘ P_{A_m} ∘ P_{A_1}` (rightmost first).  Its
/// fixed points coincide with those of `P_{A_1} ∘ ... ∘ P_{A_m}`.
pub fn extended_cyclic_projections(sets: &[SetSpec], x: &Point) -> Result<Point> {
    if sets.is_empty() {
        return Err(Error::Empty("set list"));
    }
    let inner = cyclic_projections(sets, x)?;
    Ok(sets[0].project(&inner)?.point)
}

#[derive(Serialize, Deserialize)]
struct CycleOpRaw {
    lambda: f64,
    sets: Vec<SetSpec>,
}

impl TryFrom<CycleOpRaw> for CycleOp {
    type Error = Error;
    fn try_from(raw: CycleOpRaw) -> Result<CycleOp> {
        CycleOp::new(raw.sets, raw.lambda)
    }
}

impl From<CycleOp> for CycleOpRaw {
    fn from(op: CycleOp) -> CycleOpRaw {
        CycleOpRaw {
            lambda: op.lambda,
            sets: op.sets,
        }
    }
}
