//! Fixed-point iteration driver with trace capture, stopping rules,
//! divergence guard, and orbit detection.

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::operators::CycleOp;
use crate::point::Point;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Iterates whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Stopping rules for [`iterate`].  A tolerance of `0` disables that rule;
/// `max_iters` always applies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    /// Maximum number of operator applications.
    pub max_iters: usize,
    /// Stop when `|x^{k+1} - x^k|` falls to this value.
    #[serde(default)]
    pub step_tol: f64,
    /// Stop when the shadow step `|P_{A_1} x^{k+1} - P_{A_1} x^k|` falls to
    /// this value.
    #[serde(default)]
    pub shadow_tol: f64,
    /// Stop when the fixed-point residual `|x^k - T x^k|` falls to this
    /// value.
    #[serde(default)]
    pub residual_tol: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            max_iters: 100_000,
            step_tol: 1e-10,
            shadow_tol: 0.0,
            residual_tol: 0.0,
        }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid(
                "max_iters",
                "must be at least 1".to_string(),
            ));
        }
        for (name, v) in [
            ("step_tol", self.step_tol),
            ("shadow_tol", self.shadow_tol),
            ("residual_tol", self.residual_tol),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParam {
                    name: "stop",
                    reason: format!("{name} must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Which rule ended the iteration.  `Diverged` appears only inside the
/// partial trace carried by a divergence error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    StepTol,
    ShadowTol,
    ResidualTol,
    Diverged,
}

/// Per-iteration record of a run.
///
/// `iterates`, `shadows` and `gaps` have one entry per iterate;
/// `step_norms`, `residuals` and `shadow_step_norms` are one entry shorter
/// (they difference consecutive iterates).  Because the operator is applied
/// with deterministic selections, `residuals[k] = |x^k - T x^k|` coincides
/// with `step_norms[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iterates: Vec<Point>,
    pub step_norms: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Deterministic `P_{A_1}` selection at every iterate.
    pub shadows: Vec<Point>,
    pub shadow_step_norms: Vec<f64>,
    /// Gap value (sum of the projection-chain distances) at every iterate.
    pub gaps: Vec<f64>,
    pub stop_reason: StopReason,
}

impl IterationTrace {
    /// Number of recorded iterates.
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn final_iterate(&self) -> &Point {
        self.iterates.last().expect("trace holds at least x0")
    }

    pub fn final_gap(&self) -> f64 {
        *self.gaps.last().expect("trace holds at least x0")
    }

    pub fn final_shadow(&self) -> &Point {
        self.shadows.last().expect("trace holds at least x0")
    }

    /// Writes the trace as CSV with header
    /// `iter,x_0..x_{n-1},step_norm,residual,shadow_0..shadow_{n-1},shadow_step_norm,gap`.
    ///
    /// Differenced columns are empty on the first row.  Floats are printed
    /// with Rust's shortest round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.iterates.first().map_or(0, Point::dim);
        write!(w, "iter")?;
        for i in 0..n {
            write!(w, ",x_{i}")?;
        }
        write!(w, ",step_norm,residual")?;
        for i in 0..n {
            write!(w, ",shadow_{i}")?;
        }
        writeln!(w, ",shadow_step_norm,gap")?;
        for (k, x) in self.iterates.iter().enumerate() {
            write!(w, "{k}")?;
            for c in x.iter() {
                write!(w, ",{c}")?;
            }
            if k > 0 {
                write!(w, ",{},{}", self.step_norms[k - 1], self.residuals[k - 1])?;
            } else {
                write!(w, ",,")?;
            }
            for c in self.shadows[k].iter() {
                write!(w, ",{c}")?;
            }
            if k > 0 {
                write!(w, ",{}", self.shadow_step_norms[k - 1])?;
            } else {
                write!(w, ",")?;
            }
            writeln!(w, ",{}", self.gaps[k])?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Fixed-point residual `|x - T x|` with the deterministic selection of
/// `T`.  For multivalued encounters this is an upper bound on the true set
/// distance `dist(x, Tx)`.
pub fn residual(op: &CycleOp, x: &Point) -> Result<f64> {
    Ok(x.dist(&op.apply_point(x)?))
}

/// Runs `x^{k+1} = T x^k` from `x0` until a stopping rule fires.
///
/// Records iterates, step norms, residuals, the `P_{A_1}` shadow sequence
/// and the gap value at every iterate.  A non-finite iterate or an iterate
/// norm beyond [`DIVERGENCE_GUARD`] aborts with a divergence error carrying
/// the partial trace.
pub fn iterate(op: &CycleOp, x0: &Point, stop: &StopCriteria) -> Result<IterationTrace> {
    stop.validate()?;
    if x0.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: x0.dim(),
        });
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("x0"));
    }

    let first_set = &op.sets()[0];
    let mut iterates = vec![x0.clone()];
    let mut shadows = vec![first_set.project(x0)?.point];
    let mut gaps = vec![diagnostics::gap_at(op.sets(), x0)?.total];
    let mut step_norms = Vec::new();
    let mut residuals = Vec::new();
    let mut shadow_step_norms = Vec::new();

    let mut stop_reason = StopReason::MaxIters;
    for k in 0..stop.max_iters {
        let current = iterates.last().expect("nonempty").clone();
        let next = op.apply_point(&current)?;
        let step = next.dist(&current);

        if !next.is_finite() || next.norm() > DIVERGENCE_GUARD {
            let mut trace = IterationTrace {
                iterates,
                step_norms,
                residuals,
                shadows,
                shadow_step_norms,
                gaps,
                stop_reason: StopReason::Diverged,
            };
            if next.is_finite() {
                trace.iterates.push(next.clone());
                trace.step_norms.push(step);
                trace.residuals.push(step);
                let sh = first_set.project(&next)?.point;
                trace
                    .shadow_step_norms
                    .push(sh.dist(trace.shadows.last().expect("nonempty")));
                trace.shadows.push(sh);
                trace
                    .gaps
                    .push(diagnostics::gap_at(op.sets(), &next)?.total);
            }
            return Err(Error::Diverged {
                at: k + 1,
                guard: DIVERGENCE_GUARD,
                trace: Box::new(trace),
            });
        }

        let shadow = first_set.project(&next)?.point;
        let shadow_step = shadow.dist(shadows.last().expect("nonempty"));
        let gap = diagnostics::gap_at(op.sets(), &next)?.total;

        iterates.push(next);
        step_norms.push(step);
        residuals.push(step);
        shadows.push(shadow);
        shadow_step_norms.push(shadow_step);
        gaps.push(gap);

        if stop.step_tol > 0.0 && step <= stop.step_tol {
            stop_reason = StopReason::StepTol;
            break;
        }
        if stop.shadow_tol > 0.0 && shadow_step <= stop.shadow_tol {
            stop_reason = StopReason::ShadowTol;
            break;
        }
        if stop.residual_tol > 0.0 && step <= stop.residual_tol {
            stop_reason = StopReason::ResidualTol;
            break;
        }
    }

    Ok(IterationTrace {
        iterates,
        step_norms,
        residuals,
        shadows,
        shadow_step_norms,
        gaps,
        stop_reason,
    })
}

/// Orbit diagnosis over the trailing `window` steps of a trace.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OrbitReport {
    pub is_orbit: bool,
    pub mean_step: f64,
    /// Spread (max minus min) of the step norms over the window.
    pub step_variation: f64,
    /// Last shadow step norm.
    pub shadow_final_diff: f64,
    pub window: usize,
}

/// Detects the "orbit" regime: step norms settle to a nonzero constant
/// while the shadow sequence converges.
///
/// The thresholds (relative step variation below `1e-3`, mean step above
/// `10 * shadow_tol`) are heuristic diagnostics, not statements about the
/// underlying operator.
pub fn detect_orbit(trace: &IterationTrace, window: usize, shadow_tol: f64) -> Result<OrbitReport> {
    if window < 1 {
        return Err(Error::invalid("window", "must be at least 1".to_string()));
    }
    if trace.iterates.len() < window + 1 {
        return Err(Error::invalid(
            "window",
            format!(
                "window {window} needs {} iterates, trace has {}",
                window + 1,
                trace.iterates.len()
            ),
        ));
    }
    let steps = &trace.step_norms[trace.step_norms.len() - window..];
    let mean = steps.iter().sum::<f64>() / window as f64;
    let max = steps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = steps.iter().cloned().fold(f64::INFINITY, f64::min);
    let variation = max - min;
    let shadow_final_diff = *trace
        .shadow_step_norms
        .last()
        .expect("window >= 1 implies at least one step");
    let is_orbit = mean > 0.0
        && variation < 1e-3 * mean
        && mean > 10.0 * shadow_tol
        && shadow_final_diff <= shadow_tol;
    Ok(OrbitReport {
        is_orbit,
        mean_step: mean,
        step_variation: variation,
        shadow_final_diff,
        window,
    })
}
