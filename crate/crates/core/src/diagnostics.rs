//! Gap monitoring, shadow analysis, almost-fixed-point tests, and
//! empirical rate and regularity estimation.

use crate::engine::{self, IterationTrace};
use crate::error::{Error, Result};
use crate::geometry::SetSpec;
use crate::operators::CycleOp;
use crate::point::Point;
use serde::{Deserialize, Serialize};

/// Projection chain through all sets at a point, and the distances along
/// it.  The chain starts with `y^{(m+1)} in P_{A_{m+1}} y` (`A_{m+1} = A_1`)
/// and continues with `y^{(i)} in P_{A_i} y^{(i+1)}` for `i = m, ..., 1`;
/// `pair_gaps[i-1] = |y^{(i+1)} - y^{(i)}|` and `total` is their sum.  The
/// limit of `total` along a convergent run measures the inconsistency of
/// the instance: zero limit means the sets intersect.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    /// `[y^{(m+1)}, y^{(m)}, ..., y^{(1)}]`; entry `i` lies in `A_{m+1-i}`.
    pub shadow_chain: Vec<Point>,
    pub pair_gaps: Vec<f64>,
    pub total: f64,
}

/// Evaluates the gap chain at `y` using deterministic selections.
pub fn gap_at(sets: &[SetSpec], y: &Point) -> Result<GapReport> {
    if sets.is_empty() {
        return Err(Error::Empty("set list"));
    }
    let m = sets.len();
    let mut chain = Vec::with_capacity(m + 1);
    chain.push(sets[0].project(y)?.point);
    for i in (0..m).rev() {
        let prev = chain.last().expect("nonempty");
        let next = sets[i].project(prev)?.point;
        chain.push(next);
    }
    // chain[k] = y^{(m+1-k)}; pair_gaps[i-1] pairs y^{(i+1)} with y^{(i)}.
    let mut pair_gaps = Vec::with_capacity(m);
    for i in 1..=m {
        pair_gaps.push(chain[m - i].dist(&chain[m + 1 - i]));
    }
    let total = pair_gaps.iter().sum();
    Ok(GapReport {
        shadow_chain: chain,
        pair_gaps,
        total,
    })
}

/// Whether `x` is an almost fixed point of `T` with error `eps`, i.e.
/// `|x - Tx| <= eps` under the deterministic selection.
pub fn almost_fixed(op: &CycleOp, x: &Point, eps: f64) -> Result<bool> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::invalid("eps", format!("must be >= 0, got {eps}")));
    }
    Ok(engine::residual(op, x)? <= eps)
}

/// Log-linear fit of a decaying sequence over its trailing window.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RateFit {
    /// Per-step contraction factor `exp(slope)`.
    pub rate: f64,
    pub intercept: f64,
    /// First index of the fitted window.
    pub window_start: usize,
    pub r_squared: f64,
    /// True when the fit certifies contraction: `rate < 1` with
    /// `r_squared >= 0.99`.
    pub converged: bool,
}

/// Least-squares line on the log of the trailing `tail_fraction` of the
/// sequence.  Nonpositive values truncate the window from the left; fewer
/// than 3 usable values is an error.
pub fn fit_rate(values: &[f64], tail_fraction: f64) -> Result<RateFit> {
    if values.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 values, got {}",
            values.len()
        )));
    }
    if tail_fraction.is_nan() || tail_fraction <= 0.0 || tail_fraction > 1.0 {
        return Err(Error::invalid(
            "tail_fraction",
            format!("must lie in (0, 1], got {tail_fraction}"),
        ));
    }
    let len = values.len();
    let mut start = ((len as f64) * (1.0 - tail_fraction)).floor() as usize;
    for (i, v) in values.iter().enumerate().skip(start) {
        if v.is_nan() || *v <= 0.0 {
            start = i + 1;
        }
    }
    if len - start < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} positive values in the fitted tail",
            len - start
        )));
    }
    let xs: Vec<f64> = (start..len).map(|i| i as f64).collect();
    let ys: Vec<f64> = values[start..].iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let r_squared = if ss_tot < 1e-30 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    let rate = slope.exp();
    Ok(RateFit {
        rate,
        intercept,
        window_start: start,
        r_squared,
        converged: rate < 1.0 && r_squared >= 0.99,
    })
}

/// Sampled estimate of the metric-subregularity modulus: the largest ratio
/// `|x - fix_approx| / |x - Tx|` over the samples.
///
/// `fix_approx` stands in for the nearest point of `Fix T`, so the estimate
/// is biased upward whenever `Fix T` is not a singleton.  Samples with
/// residual below `1e-14` are skipped.
pub fn estimate_kappa(op: &CycleOp, fix_approx: &Point, samples: &[Point]) -> Result<f64> {
    let fix_res = engine::residual(op, fix_approx)?;
    if fix_res > 1e-8 {
        return Err(Error::NotFixed {
            residual: fix_res,
            tol: 1e-8,
        });
    }
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let mut best: Option<f64> = None;
    for x in samples {
        let r = engine::residual(op, x)?;
        if r < 1e-14 {
            continue;
        }
        let ratio = x.dist(fix_approx) / r;
        best = Some(best.map_or(ratio, |b| b.max(ratio)));
    }
    best.ok_or_else(|| {
        Error::InsufficientData("all samples were skipped (residual below 1e-14)".to_string())
    })
}

/// Sampled violation of the almost-alpha-firmly-nonexpansive inequality.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FneEstimate {
    pub alpha: f64,
    /// Smallest slack making the inequality hold on every sampled pair.
    pub epsilon_hat: f64,
    pub samples: usize,
}

/// Estimates the smallest violation `eps` such that
///
/// ```text
/// |x+ - y+|^2 <= (1 + eps) |x - y|^2 - ((1-alpha)/alpha) |(x+ - x) - (y+ - y)|^2
/// ```
///
/// holds at `y = anchor` against every sample `x`, for the map `map`.
/// Samples coinciding with the anchor are skipped; if none remain this is
/// an error.
pub fn estimate_violation<F>(
    map: F,
    anchor: &Point,
    samples: &[Point],
    alpha: f64,
) -> Result<FneEstimate>
where
    F: Fn(&Point) -> Result<Point>,
{
    if alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::invalid(
            "alpha",
            format!("must lie in (0, 1), got {alpha}"),
        ));
    }
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let anchor_image = map(anchor)?;
    let ratio_coeff = (1.0 - alpha) / alpha;
    let mut eps = f64::NEG_INFINITY;
    let mut used = 0usize;
    for x in samples {
        let base = x.dist(anchor).powi(2);
        if base == 0.0 {
            continue;
        }
        let image = map(x)?;
        let transport = (&image - x) - (&anchor_image - anchor);
        let lhs = image.dist(&anchor_image).powi(2) + ratio_coeff * transport.norm_sq();
        eps = eps.max(lhs / base - 1.0);
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid(
            "samples",
            "all samples coincide with the anchor".to_string(),
        ));
    }
    Ok(FneEstimate {
        alpha,
        epsilon_hat: eps.max(0.0),
        samples: used,
    })
}

/// The deterministic projector of a set as a point map, for feeding into
/// [`estimate_violation`].
pub fn projector_of(set: &SetSpec) -> impl Fn(&Point) -> Result<Point> + '_ {
    move |x| Ok(set.project(x)?.point)
}

/// Applies `P_{first_set}` to every iterate of a trace.
pub fn shadow_trace(trace: &IterationTrace, first_set: &SetSpec) -> Result<Vec<Point>> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    trace
        .iterates
        .iter()
        .map(|x| Ok(first_set.project(x)?.point))
        .collect()
}
