//! Numerical embodiment of the fixed-point and convergence calculus:
//! the 2m-point characterization of cyclic relaxed Douglas-Rachford fixed
//! points, shadow checks against (extended) cyclic projections,
//! regularity-violation propagation, linear gauge/rate bounds, and affine
//! approximation error budgets for curved sets.

use crate::engine;
use crate::error::{Error, Result};
use crate::geometry::{AffineSubspace, SetSpec};
use crate::operators::{extended_cyclic_projections, CycleOp};
use crate::point::Point;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Fixed-point characterization
// ---------------------------------------------------------------------------

/// Which identity a characterization evaluated: the coefficient form `M1`
/// (valid for `lambda < 1`) or the telescoped shadow identity `M2`
/// (`lambda = 1`, where the `M1` denominator `1 - lambda^m` vanishes).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharacterizationBranch {
    M1,
    M2,
}

/// Evaluation of the fixed-point identity at a candidate point.
///
/// A point `x` is fixed for the cyclic operator exactly when the chain
/// `x_{m+1} = x`, `x_j = T_{j,j+1} x_{j+1}` closes (`x_1 = x`), which in
/// turn is equivalent to `x` being the `M1` linear combination of the `2m`
/// projected points `P_{A_j} y_{j+1}` and `P_{A_{j+1}} x_{j+1}` with
/// coefficients `lambda^j / (1 - lambda^m)` and
/// `(1 - 2 lambda) lambda^{j-1} / (1 - lambda^m)`.  For `lambda <= 1/2`
/// the combination is convex, which places every fixed point in the convex
/// hull of the union of the sets.
#[derive(Clone, Debug, Serialize)]
pub struct FixCharacterizationReport {
    pub branch: CharacterizationBranch,
    /// `[x_{m+1} = x, x_m, ..., x_1]`.
    pub chain_x: Vec<Point>,
    /// `[y_2, ..., y_{m+1}]` with `y_{j+1} = R_{A_{j+1}} x_{j+1}`.
    pub chain_y: Vec<Point>,
    /// For `M1`: the `2m` coefficients, interleaved per pair index `j` as
    /// `[c^P_1, c^Q_1, c^P_2, c^Q_2, ...]`.  Empty for `M2`.
    pub coefficients: Vec<f64>,
    pub coefficient_sum: f64,
    /// The projected points the combination is built from, interleaved the
    /// same way as `coefficients`: `(P_{A_j} y_{j+1}, P_{A_{j+1}} x_{j+1})`.
    pub terms: Vec<Point>,
    /// `|x - sum|` for `M1`; `|P_{A_1} x - rhs|` for `M2`.
    pub representation_residual: f64,
    /// Chain closure `|x_1 - x| <= tol`.
    pub is_fixed: bool,
    /// All coefficients `>= -1e-12` (meaningful for `M1`).
    pub convex_combination: bool,
    pub multivalued_hit: bool,
}

/// The `2m` characterization coefficients and their sum for `lambda` in
/// `[0, 1)`; the sum is identically 1.  Interleaved as in
/// [`FixCharacterizationReport::coefficients`].
pub fn coefficient_table(lambda: f64, m: usize) -> Result<(Vec<f64>, f64)> {
    if m < 2 {
        return Err(Error::invalid("m", format!("must be >= 2, got {m}")));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::invalid(
            "lambda",
            format!("coefficient form requires lambda in [0, 1), got {lambda}"),
        ));
    }
    let denom = 1.0 - lambda.powi(m as i32);
    let mut coeffs = Vec::with_capacity(2 * m);
    for j in 1..=m {
        coeffs.push(lambda.powi(j as i32) / denom);
        coeffs.push((1.0 - 2.0 * lambda) * lambda.powi(j as i32 - 1) / denom);
    }
    let sum = coeffs.iter().sum();
    Ok((coeffs, sum))
}

/// Builds the fixed-point chain at `x` and evaluates the characterization
/// identity (`M1` for `lambda < 1`, `M2` for `lambda = 1`).
pub fn characterize_fixed_point(
    sets: &[SetSpec],
    lambda: f64,
    x: &Point,
    tol: f64,
) -> Result<FixCharacterizationReport> {
    let op = CycleOp::new(sets.to_vec(), lambda)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }
    let m = sets.len();

    // chain_x[k] = x_{m+1-k}; chain_y[j-1] = y_{j+1}.
    let mut chain_x = vec![x.clone()];
    let mut multivalued_hit = false;
    for j in (1..=m).rev() {
        let step = op
            .pair(j)
            .apply_tracked(chain_x.last().expect("nonempty"))?;
        multivalued_hit |= step.multivalued;
        chain_x.push(step.output);
    }
    let x_of = |j: usize| &chain_x[m + 1 - j]; // x_j, 1-based
    let mut chain_y = Vec::with_capacity(m);
    for j in 1..=m {
        let outer = &sets[j % m]; // A_{j+1}
        let proj = outer.project(x_of(j + 1))?;
        multivalued_hit |= proj.multivalued;
        chain_y.push(&proj.point * 2.0 - x_of(j + 1));
    }

    let is_fixed = x_of(1).dist(x) <= tol;

    let n = x.dim();
    let mut terms = Vec::with_capacity(2 * m);
    for j in 1..=m {
        let inner = &sets[j - 1]; // A_j
        let outer = &sets[j % m]; // A_{j+1}
        let p_y = inner.project(&chain_y[j - 1])?;
        let p_x = outer.project(x_of(j + 1))?;
        multivalued_hit |= p_y.multivalued || p_x.multivalued;
        terms.push(p_y.point);
        terms.push(p_x.point);
    }

    if lambda < 1.0 {
        let (coefficients, coefficient_sum) = coefficient_table(lambda, m)?;
        let mut combo = Point::zeros(n);
        for (c, t) in coefficients.iter().zip(&terms) {
            combo = combo + t * *c;
        }
        let representation_residual = x.dist(&combo);
        let convex_combination = coefficients.iter().all(|c| *c >= -1e-12);
        Ok(FixCharacterizationReport {
            branch: CharacterizationBranch::M1,
            chain_x,
            chain_y,
            coefficients,
            coefficient_sum,
            terms,
            representation_residual,
            is_fixed,
            convex_combination,
            multivalued_hit,
        })
    } else {
        // M2: P_{A_1} x = sum_j P_{A_j} y_{j+1} - sum_{j<m} P_{A_{j+1}} x_{j+1}.
        let lhs = sets[0].project(x)?.point;
        let mut rhs = Point::zeros(n);
        for j in 1..=m {
            rhs = rhs + &terms[2 * (j - 1)];
            if j < m {
                rhs = rhs - &terms[2 * (j - 1) + 1];
            }
        }
        let representation_residual = lhs.dist(&rhs);
        Ok(FixCharacterizationReport {
            branch: CharacterizationBranch::M2,
            chain_x,
            chain_y,
            coefficients: Vec::new(),
            coefficient_sum: 1.0, // m terms at +1, m-1 terms at -1
            terms,
            representation_residual,
            is_fixed,
            convex_combination: false,
            multivalued_hit,
        })
    }
}

// ---------------------------------------------------------------------------
// Shadow checks
// ---------------------------------------------------------------------------

/// Shadow verification on an all-affine instance.
#[derive(Clone, Debug, Serialize)]
pub struct ShadowAffineReport {
    /// `P_{A_1} x`, the shadow of the fixed point.
    pub shadow: Point,
    /// `|P_{A_1} x - T_ecp(P_{A_1} x)|` where `T_ecp` is the extended
    /// cyclic projection operator; vanishes on affine instances.
    pub cp_residual: f64,
    /// `T_ecp(x)` is itself a fixed point of `T_ecp` (within `10 * tol`).
    pub extended_cp_image_fixed: bool,
    /// `P_{A_1}(T_cdr0 x)` is a fixed point of `P_{A_1} ∘ T_cdr0`.
    pub cdr0_shadow_fixed: bool,
}

/// Verifies that the shadow of a fixed point of the cyclic operator is a
/// fixed point of the extended cyclic projection operator, on instances
/// whose sets are all affine (affine subspaces or hyperplanes).
pub fn verify_shadow_affine(
    sets: &[SetSpec],
    lambda: f64,
    x_fixed: &Point,
    tol: f64,
) -> Result<ShadowAffineReport> {
    for s in sets {
        if !matches!(s, SetSpec::Affine(_) | SetSpec::Hyperplane { .. }) {
            return Err(Error::Unsupported(
                "shadow verification requires affine-type sets".into(),
            ));
        }
    }
    let op = CycleOp::new(sets.to_vec(), lambda)?;
    let res = engine::residual(&op, x_fixed)?;
    if res > tol {
        return Err(Error::NotFixed { residual: res, tol });
    }

    let shadow = sets[0].project(x_fixed)?.point;
    let cp_residual = shadow.dist(&extended_cyclic_projections(sets, &shadow)?);

    let image = extended_cyclic_projections(sets, x_fixed)?;
    let extended_cp_image_fixed =
        image.dist(&extended_cyclic_projections(sets, &image)?) <= 10.0 * tol;

    let cdr0 = CycleOp::new(sets.to_vec(), 0.0)?;
    let w = sets[0].project(&cdr0.apply_point(x_fixed)?)?.point;
    let qw = sets[0].project(&cdr0.apply_point(&w)?)?.point;
    let cdr0_shadow_fixed = w.dist(&qw) <= 10.0 * tol;

    Ok(ShadowAffineReport {
        shadow,
        cp_residual,
        extended_cp_image_fixed,
        cdr0_shadow_fixed,
    })
}

/// Shadow check against an affine-approximation error budget.
#[derive(Clone, Debug, Serialize)]
pub struct ShadowBudgetReport {
    /// Total tolerated error `4 * sum of composed epsilons`.
    pub eps_budget: f64,
    /// `|P_{A_1} x - T_ecp(P_{A_1} x)|` observed at the fixed point.
    pub observed_residual: f64,
    /// `observed_residual <= eps_budget`.  A failed budget is reported,
    /// not raised as an error.
    pub holds: bool,
}

/// Checks that the shadow of a fixed point is an almost fixed point of the
/// extended cyclic projection operator within the supplied budget.
///
/// Every set must admit a tangent space construction (affine, hyperplane
/// or sphere variants).
pub fn verify_shadow_almost_fixed(
    sets: &[SetSpec],
    lambda: f64,
    x_fixed: &Point,
    budget: &AffineApproxBudget,
    tol: f64,
) -> Result<ShadowBudgetReport> {
    for s in sets {
        if !matches!(
            s,
            SetSpec::Affine(_) | SetSpec::Hyperplane { .. } | SetSpec::Sphere { .. }
        ) {
            return Err(Error::Unsupported(
                "budgeted shadow verification needs tangent-space-capable sets".into(),
            ));
        }
    }
    let op = CycleOp::new(sets.to_vec(), lambda)?;
    let res = engine::residual(&op, x_fixed)?;
    if res > tol {
        return Err(Error::NotFixed { residual: res, tol });
    }
    let shadow = sets[0].project(x_fixed)?.point;
    let observed_residual = shadow.dist(&extended_cyclic_projections(sets, &shadow)?);
    Ok(ShadowBudgetReport {
        eps_budget: budget.total_eps,
        observed_residual,
        holds: observed_residual <= budget.total_eps,
    })
}

// ---------------------------------------------------------------------------
// Violation calculus
// ---------------------------------------------------------------------------

/// Projector/reflector violations inherited from an epsilon-super-regular
/// set with constant `eps_u`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProjectorViolations {
    /// Almost-nonexpansiveness violation of the projector,
    /// `4 e / (1 - e)^2`.
    pub eps_hat: f64,
    /// Firm-nonexpansiveness violation of the projector,
    /// `4 e (1 + e) / (1 - e)^2`.
    pub eps_check: f64,
    /// Almost-nonexpansiveness violation of the reflector,
    /// `8 e (1 + e) / (1 - e)^2`.
    pub eps_tilde: f64,
    /// `eps_u` is small enough (`< 2 sqrt(3)/3 - 1`) for the projector
    /// violation to certify the almost-firmly-nonexpansive property.
    pub projector_regime: bool,
    /// `eps_u` is small enough (`< 4 sqrt(2)/7 - 5/7`) for the reflector
    /// bound to apply.
    pub reflector_regime: bool,
}

/// Closed-form violation triple for super-regularity constant
/// `eps_u in [0, 1)`.
pub fn projector_violations(eps_u: f64) -> Result<ProjectorViolations> {
    if !(0.0..1.0).contains(&eps_u) {
        return Err(Error::invalid(
            "eps_u",
            format!("must lie in [0, 1), got {eps_u}"),
        ));
    }
    let denom = (1.0 - eps_u) * (1.0 - eps_u);
    let eps_hat = 4.0 * eps_u / denom;
    let eps_check = 4.0 * eps_u * (1.0 + eps_u) / denom;
    let eps_tilde = 8.0 * eps_u * (1.0 + eps_u) / denom;
    Ok(ProjectorViolations {
        eps_hat,
        eps_check,
        eps_tilde,
        projector_regime: eps_u < 2.0 * 3f64.sqrt() / 3.0 - 1.0,
        reflector_regime: eps_u < 4.0 * 2f64.sqrt() / 7.0 - 5.0 / 7.0,
    })
}

/// Violation of the two-set relaxed Douglas-Rachford operator built from
/// reflectors with almost-nonexpansiveness violations `eps_tilde_inner`
/// (the first-reflected set) and `eps_tilde_outer`:
///
/// ```text
/// eps = 1/2 [ (lambda sqrt(1 + e_in) + 1 - lambda)^2 (1 + e_out) - 1 ]
/// ```
pub fn pair_violation(lambda: f64, eps_tilde_inner: f64, eps_tilde_outer: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(
            "lambda",
            format!("must lie in [0, 1], got {lambda}"),
        ));
    }
    for (name, v) in [
        ("eps_tilde_inner", eps_tilde_inner),
        ("eps_tilde_outer", eps_tilde_outer),
    ] {
        if v.is_nan() || v < 0.0 {
            return Err(Error::InvalidParam {
                name: "eps_tilde",
                reason: format!("{name} must be >= 0, got {v}"),
            });
        }
    }
    let inner = lambda * (1.0 + eps_tilde_inner).sqrt() + (1.0 - lambda);
    Ok((0.5 * (inner * inner * (1.0 + eps_tilde_outer) - 1.0)).max(0.0))
}

/// Averaging constant and violation of the full cycle.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CycleBudget {
    /// `m / (m + 1)`.
    pub alpha: f64,
    /// `prod (1 + eps_{j,j+1}) - 1`.
    pub eps: f64,
}

/// Composes `m` pair violations (each pair is `1/2`-averaged) into the
/// cycle's averaging constant `m/(m+1)` and product-form violation.
pub fn cycle_budget(pair_violations: &[f64], m: usize) -> Result<CycleBudget> {
    if m < 2 {
        return Err(Error::invalid("m", format!("must be >= 2, got {m}")));
    }
    if pair_violations.len() != m {
        return Err(Error::invalid(
            "pair_violations",
            format!("expected {m} entries, got {}", pair_violations.len()),
        ));
    }
    for v in pair_violations {
        if v.is_nan() || *v < 0.0 {
            return Err(Error::invalid(
                "pair_violations",
                format!("entries must be >= 0, got {v}"),
            ));
        }
    }
    let eps = pair_violations.iter().fold(1.0, |acc, e| acc * (1.0 + e)) - 1.0;
    Ok(CycleBudget {
        alpha: m as f64 / (m as f64 + 1.0),
        eps: eps.max(0.0),
    })
}

/// Linear gauge factor `gamma = sqrt(1 + eps - (1 - alpha)/(alpha kappa^2))`.
///
/// Admissible range: `sqrt((1-alpha)/(alpha(1+eps))) <= kappa` with the
/// upper bound `sqrt((1-alpha)/(alpha eps))` (infinite when `eps = 0`);
/// outside it no contraction factor in `[0, 1)` exists and the violated
/// bound is named in the error.
pub fn linear_gauge(alpha: f64, eps: f64, kappa: f64) -> Result<f64> {
    gauge_factor("linear_gauge", alpha, eps, kappa)
}

/// R-linear convergence factor `c = sqrt(1 + eps - (1 - alpha)/(kappa^2 alpha))`.
///
/// Same formula as [`linear_gauge`]; kept as a separate entry point for the
/// rate-bound context.
pub fn linear_rate_bound(alpha: f64, eps: f64, kappa: f64) -> Result<f64> {
    gauge_factor("linear_rate_bound", alpha, eps, kappa)
}

fn gauge_factor(formula: &'static str, alpha: f64, eps: f64, kappa: f64) -> Result<f64> {
    if alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::invalid(
            "alpha",
            format!("must lie in (0, 1), got {alpha}"),
        ));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::invalid("eps", format!("must be >= 0, got {eps}")));
    }
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(Error::invalid("kappa", format!("must be > 0, got {kappa}")));
    }
    let ratio = (1.0 - alpha) / alpha;
    let lower = (ratio / (1.0 + eps)).sqrt();
    if kappa < lower {
        return Err(Error::OutOfRange {
            formula,
            what: "kappa",
            value: kappa,
            bound: format!("kappa >= sqrt((1-alpha)/(alpha(1+eps))) = {lower}"),
        });
    }
    let gamma_sq = 1.0 + eps - ratio / (kappa * kappa);
    if gamma_sq >= 1.0 {
        let upper = if eps > 0.0 {
            format!(
                "kappa <= sqrt((1-alpha)/(alpha eps)) = {}",
                (ratio / eps).sqrt()
            )
        } else {
            "1 + eps - (1-alpha)/(alpha kappa^2) < 1".to_string()
        };
        return Err(Error::OutOfRange {
            formula,
            what: "kappa",
            value: kappa,
            bound: upper,
        });
    }
    Ok(gamma_sq.max(0.0).sqrt())
}

/// The geometric gauge orbit `[gamma t0, gamma^2 t0, ..., gamma^k t0]`.
/// Summability (partial sums bounded by `gamma t0 / (1 - gamma)`) is what
/// upgrades the per-step estimate to R-linear convergence.
pub fn gauge_iterate(gamma: f64, t0: f64, k: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(
            "gamma",
            format!("summability needs gamma in [0, 1), got {gamma}"),
        ));
    }
    if t0.is_nan() || t0 <= 0.0 {
        return Err(Error::invalid("t0", format!("must be > 0, got {t0}")));
    }
    if k < 1 {
        return Err(Error::invalid("k", "must be >= 1".to_string()));
    }
    let mut out = Vec::with_capacity(k);
    let mut t = t0;
    for _ in 0..k {
        t *= gamma;
        out.push(t);
    }
    Ok(out)
}

/// Full violation/rate chain for a cycle, derived from per-set
/// super-regularity constants, the relaxation parameter and a
/// metric-subregularity modulus.
#[derive(Clone, Debug, Serialize)]
pub struct RegularityBudget {
    pub eps_u: Vec<f64>,
    pub eps_hat: Vec<f64>,
    pub eps_check: Vec<f64>,
    pub eps_tilde: Vec<f64>,
    pub lambda: f64,
    /// `eps_{j,j+1}` for `j = 1..m` (indices wrap).
    pub pair_violations: Vec<f64>,
    pub composite_alpha: f64,
    pub composite_eps: f64,
    pub kappa: f64,
    pub gauge_gamma: f64,
    pub rate_bound: f64,
}

impl RegularityBudget {
    /// Runs the whole chain `eps_u -> (hat, check, tilde) -> pair
    /// violations -> (alpha, eps) -> gamma = rate bound`.
    pub fn derive(eps_u: &[f64], lambda: f64, kappa: f64) -> Result<Self> {
        let m = eps_u.len();
        if m < 2 {
            return Err(Error::invalid(
                "eps_u",
                format!("need at least 2 sets, got {m}"),
            ));
        }
        let mut eps_hat = Vec::with_capacity(m);
        let mut eps_check = Vec::with_capacity(m);
        let mut eps_tilde = Vec::with_capacity(m);
        for e in eps_u {
            let v = projector_violations(*e)?;
            eps_hat.push(v.eps_hat);
            eps_check.push(v.eps_check);
            eps_tilde.push(v.eps_tilde);
        }
        let mut pair_violations = Vec::with_capacity(m);
        for j in 0..m {
            pair_violations.push(pair_violation(
                lambda,
                eps_tilde[j],
                eps_tilde[(j + 1) % m],
            )?);
        }
        let budget = cycle_budget(&pair_violations, m)?;
        let gauge_gamma = linear_gauge(budget.alpha, budget.eps, kappa)?;
        let rate_bound = linear_rate_bound(budget.alpha, budget.eps, kappa)?;
        Ok(RegularityBudget {
            eps_u: eps_u.to_vec(),
            eps_hat,
            eps_check,
            eps_tilde,
            lambda,
            pair_violations,
            composite_alpha: budget.alpha,
            composite_eps: budget.eps,
            kappa,
            gauge_gamma,
            rate_bound,
        })
    }
}

// ---------------------------------------------------------------------------
// Affine approximation budgets
// ---------------------------------------------------------------------------

/// An affine map `x -> L x + c` on `R^n`.
#[derive(Clone, Debug)]
pub struct AffineMap {
    pub linear: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        AffineMap {
            linear: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
        }
    }

    /// The orthogonal projector onto a translated subspace as an affine
    /// map: `L = B B^T` over the orthonormal basis, `c = (I - L) anchor`.
    pub fn projector(sub: &AffineSubspace) -> Self {
        let n = sub.ambient_dim();
        let mut linear = DMatrix::zeros(n, n);
        for b in sub.basis() {
            let v = b.to_dvector();
            linear += &v * v.transpose();
        }
        let anchor = sub.anchor().to_dvector();
        let offset = &anchor - &linear * &anchor;
        AffineMap { linear, offset }
    }

    pub fn apply(&self, x: &Point) -> Point {
        Point::from_dvector(&(&self.linear * x.to_dvector() + &self.offset))
    }

    /// Upper bound for `sup_{|w| <= 1} |L w + c|`, computed as
    /// `|c| + sigma_max(L)`.
    pub fn sup_norm_on_ball(&self) -> f64 {
        self.offset.norm() + self.linear.clone().singular_values().max()
    }
}

/// Result of composing affine approximations: for maps `Phi_1, ..., Phi_m`
/// approximating operators with errors `eps_i`, the partial compositions
/// `Phi_{1..i}` and their accumulated errors
/// `eps_{1..i+1} = eps_{1..i} + eps_{i+1} sup_{|w|<=1} |Phi_{1..i} w|`.
#[derive(Clone, Debug)]
pub struct AffineComposition {
    /// `Phi_{1..i}` for `i = 1..m`.
    pub maps: Vec<AffineMap>,
    /// `eps_{1..i}` for `i = 1..m`.
    pub eps: Vec<f64>,
    /// `sup_{|w|<=1} |Phi_{1..i} w|` for `i = 1..m`.
    pub sup_norms: Vec<f64>,
}

/// Composes affine approximations left to right:
/// `Phi_{1..i+1} = (1 - eps_{i+1}) Phi_{1..i} ( Phi_{i+1} / (1 - eps_{i+1}) )`.
/// On the (linear, offset) representation the scaling cancels on the
/// linear part, leaving `L = L_{1..i} L_{i+1}` and
/// `c = L_{1..i} c_{i+1} + (1 - eps_{i+1}) c_{1..i}`.
pub fn affine_compose(maps: &[AffineMap], eps: &[f64]) -> Result<AffineComposition> {
    if maps.is_empty() {
        return Err(Error::Empty("affine maps"));
    }
    if maps.len() != eps.len() {
        return Err(Error::invalid(
            "eps",
            format!("expected {} entries, got {}", maps.len(), eps.len()),
        ));
    }
    for e in eps {
        if e.is_nan() || *e <= 0.0 || *e >= 1.0 {
            return Err(Error::invalid(
                "eps",
                format!("entries must lie in (0, 1), got {e}"),
            ));
        }
    }
    let mut out_maps = vec![maps[0].clone()];
    let mut out_eps = vec![eps[0]];
    let mut sup_norms = vec![maps[0].sup_norm_on_ball()];
    for i in 1..maps.len() {
        let prev = out_maps.last().expect("nonempty");
        let next = &maps[i];
        let linear = &prev.linear * &next.linear;
        let offset = &prev.linear * &next.offset + &prev.offset * (1.0 - eps[i]);
        let composed = AffineMap { linear, offset };
        let sup_prev = sup_norms.last().expect("nonempty");
        out_eps.push(out_eps.last().expect("nonempty") + eps[i] * sup_prev);
        sup_norms.push(composed.sup_norm_on_ball());
        out_maps.push(composed);
    }
    Ok(AffineComposition {
        maps: out_maps,
        eps: out_eps,
        sup_norms,
    })
}

/// Radius of validity for approximating a projector by the projection onto
/// the translated tangent space:
/// `r = eps_bar / (sqrt(1 + eps_hat) + k + 1)` with
/// `eps_hat = 4 eps_u / (1 - eps_u)^2`.
pub fn approx_radius(eps_u: f64, shapiro_k: f64, eps_bar_target: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eps_u) {
        return Err(Error::invalid(
            "eps_u",
            format!("must lie in [0, 1), got {eps_u}"),
        ));
    }
    if shapiro_k.is_nan() || shapiro_k < 0.0 {
        return Err(Error::invalid(
            "shapiro_k",
            format!("must be >= 0, got {shapiro_k}"),
        ));
    }
    if eps_bar_target.is_nan() || eps_bar_target <= 0.0 {
        return Err(Error::invalid(
            "eps_bar_target",
            format!("must be > 0, got {eps_bar_target}"),
        ));
    }
    let eps_hat = 4.0 * eps_u / ((1.0 - eps_u) * (1.0 - eps_u));
    Ok(eps_bar_target / ((1.0 + eps_hat).sqrt() + shapiro_k + 1.0))
}

/// Total shadow error `4 * sum of the composed epsilons`.
pub fn shadow_error_budget(composed_eps: &[f64]) -> Result<f64> {
    if composed_eps.is_empty() {
        return Err(Error::Empty("composed epsilons"));
    }
    for e in composed_eps {
        if e.is_nan() || *e <= 0.0 {
            return Err(Error::invalid(
                "composed_eps",
                format!("entries must be > 0, got {e}"),
            ));
        }
    }
    Ok(4.0 * composed_eps.iter().sum::<f64>())
}

/// Affine-approximation error budget for a cycle of sets: per-set tangent
/// approximation errors, their composition through the projection chain,
/// validity radii, and the total shadow budget.
#[derive(Clone, Debug, Serialize)]
pub struct AffineApproxBudget {
    pub per_set_eps: Vec<f64>,
    /// `eps_{1..i}` for `i = 1..m`.
    pub composed_eps: Vec<f64>,
    /// `4 * sum(composed_eps)`.
    pub total_eps: f64,
    /// Validity radius per set from [`approx_radius`].
    pub radii: Vec<f64>,
    /// `sup_{|w|<=1} |Phi_{1..i} w|` per prefix.
    pub sup_norms: Vec<f64>,
}

impl AffineApproxBudget {
    /// Derives the budget for `sets` with tangent spaces taken at
    /// `anchors[i]` (a point of `A_i`), per-set approximation targets
    /// `per_set_eps`, and super-regularity constants `eps_u`.
    pub fn for_instance(
        sets: &[SetSpec],
        anchors: &[Point],
        per_set_eps: &[f64],
        eps_u: &[f64],
    ) -> Result<Self> {
        let m = sets.len();
        if anchors.len() != m || per_set_eps.len() != m || eps_u.len() != m {
            return Err(Error::invalid(
                "budget inputs",
                format!(
                    "expected {m} anchors/epsilons, got {}/{}/{}",
                    anchors.len(),
                    per_set_eps.len(),
                    eps_u.len()
                ),
            ));
        }
        let mut maps = Vec::with_capacity(m);
        let mut radii = Vec::with_capacity(m);
        for i in 0..m {
            let tangent = sets[i].tangent_space(&anchors[i])?;
            let k = tangent.shapiro_constant()?;
            radii.push(approx_radius(eps_u[i], k, per_set_eps[i])?);
            maps.push(AffineMap::projector(&tangent));
        }
        let composition = affine_compose(&maps, per_set_eps)?;
        let total_eps = shadow_error_budget(&composition.eps)?;
        Ok(AffineApproxBudget {
            per_set_eps: per_set_eps.to_vec(),
            composed_eps: composition.eps,
            total_eps,
            radii,
            sup_norms: composition.sup_norms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pt(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    fn line_y(c: f64) -> SetSpec {
        SetSpec::hyperplane(pt(&[0.0, 1.0]), c).unwrap()
    }

    fn parallel_lines() -> Vec<SetSpec> {
        vec![line_y(0.0), line_y(1.0)]
    }

    #[test]
    fn coefficient_table_hand_values() {
        let (coeffs, sum) = coefficient_table(0.5, 2).unwrap();
        assert_eq!(coeffs.len(), 4);
        assert_abs_diff_eq!(coeffs[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(coeffs[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(coeffs[2], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(coeffs[3], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-15);

        // lambda = 0 collapses to the first projection term.
        let (coeffs, sum) = coefficient_table(0.0, 3).unwrap();
        assert_eq!(coeffs, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(sum, 1.0);

        // Interior lambda: nonnegative for lambda <= 1/2, sum exactly 1.
        let (coeffs, sum) = coefficient_table(0.4, 3).unwrap();
        assert!(coeffs.iter().all(|c| *c >= 0.0));
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-15);

        assert!(coefficient_table(1.0, 3).is_err());
    }

    #[test]
    fn characterization_at_the_parallel_lines_fixed_point() {
        let report =
            characterize_fixed_point(&parallel_lines(), 0.5, &pt(&[0.0, 1.0 / 3.0]), 1e-10)
                .unwrap();
        assert_eq!(report.branch, CharacterizationBranch::M1);
        assert!(report.is_fixed);
        assert!(report.representation_residual < 1e-12);
        assert!(report.convex_combination);
        assert_abs_diff_eq!(report.coefficient_sum, 1.0, epsilon = 1e-12);
        // Chain: x_2 = (0, 2/3); y_2 = (0, 4/3), y_3 = (0, -1/3).
        assert!(report.chain_x[1].dist(&pt(&[0.0, 2.0 / 3.0])) < 1e-12);
        assert!(report.chain_y[0].dist(&pt(&[0.0, 4.0 / 3.0])) < 1e-12);
        assert!(report.chain_y[1].dist(&pt(&[0.0, -1.0 / 3.0])) < 1e-12);
        assert_eq!(report.coefficients, vec![2.0 / 3.0, 0.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn characterization_rejects_non_fixed_points() {
        let report =
            characterize_fixed_point(&parallel_lines(), 0.5, &pt(&[0.0, 0.0]), 1e-10).unwrap();
        assert!(!report.is_fixed);
        assert!(report.representation_residual > 1e-10);
    }

    #[test]
    fn characterization_of_common_points_any_lambda() {
        let x_axis = SetSpec::affine(pt(&[0.0, 0.0]), vec![pt(&[1.0, 0.0])]).unwrap();
        let sets = vec![x_axis, line_y(0.0)];
        let z = pt(&[3.0, 0.0]);
        for lambda in [0.0, 0.3, 0.7, 0.99] {
            let report = characterize_fixed_point(&sets, lambda, &z, 1e-10).unwrap();
            assert!(report.is_fixed, "lambda {lambda}");
            assert!(
                report.representation_residual < 1e-12,
                "lambda {lambda}: {}",
                report.representation_residual
            );
        }
    }

    #[test]
    fn characterization_m2_branch_at_lambda_one() {
        let x_axis = SetSpec::affine(pt(&[0.0, 0.0]), vec![pt(&[1.0, 0.0])]).unwrap();
        let sets = vec![x_axis, line_y(0.0)];
        let report = characterize_fixed_point(&sets, 1.0, &pt(&[-2.0, 0.0]), 1e-10).unwrap();
        assert_eq!(report.branch, CharacterizationBranch::M2);
        assert!(report.is_fixed);
        assert!(report.representation_residual < 1e-12);
        assert!(report.coefficients.is_empty());
    }

    #[test]
    fn characterization_m2_on_an_inconsistent_instance() {
        // At lambda = 1 the two pair translations cancel on parallel lines,
        // so every point is fixed; the telescoped identity still closes:
        // P_{A_1} x = P_{A_1} y_2 + P_{A_2} y_3 - P_{A_2} x_2.
        let report =
            characterize_fixed_point(&parallel_lines(), 1.0, &pt(&[0.7, 0.3]), 1e-10).unwrap();
        assert_eq!(report.branch, CharacterizationBranch::M2);
        assert!(report.is_fixed);
        assert!(report.representation_residual < 1e-12);
        // Hand chain: x_2 = (0.7, 1.3), y_2 = (0.7, 0.7), y_3 = (0.7, -0.3).
        assert!(report.chain_x[1].dist(&pt(&[0.7, 1.3])) < 1e-12);
        assert!(report.chain_y[0].dist(&pt(&[0.7, 0.7])) < 1e-12);
        assert!(report.chain_y[1].dist(&pt(&[0.7, -0.3])) < 1e-12);
    }

    #[test]
    fn shadow_affine_verification() {
        let report =
            verify_shadow_affine(&parallel_lines(), 0.5, &pt(&[0.0, 1.0 / 3.0]), 1e-9).unwrap();
        assert!(report.shadow.dist(&pt(&[0.0, 0.0])) < 1e-12);
        assert!(report.cp_residual < 1e-10);
        assert!(report.extended_cp_image_fixed);
        assert!(report.cdr0_shadow_fixed);

        // Common point of a consistent affine instance: shadow is the point.
        let x_axis = SetSpec::affine(pt(&[0.0, 0.0]), vec![pt(&[1.0, 0.0])]).unwrap();
        let sets = vec![x_axis, line_y(0.0)];
        let z = pt(&[5.0, 0.0]);
        let report = verify_shadow_affine(&sets, 0.25, &z, 1e-10).unwrap();
        assert!(report.shadow.dist(&z) < 1e-12);
        assert_eq!(report.cp_residual, 0.0);

        // Sphere in the list is rejected.
        let sphere = SetSpec::sphere(pt(&[0.0, 0.0]), 1.0).unwrap();
        let bad = vec![sphere, line_y(0.0)];
        assert!(verify_shadow_affine(&bad, 0.5, &pt(&[1.0, 0.0]), 1e-8).is_err());

        // Non-fixed input is rejected.
        assert!(verify_shadow_affine(&parallel_lines(), 0.5, &pt(&[0.0, 0.0]), 1e-10).is_err());
    }

    #[test]
    fn projector_violations_hand_values() {
        let v = projector_violations(0.0).unwrap();
        assert_eq!((v.eps_hat, v.eps_check, v.eps_tilde), (0.0, 0.0, 0.0));
        assert!(v.projector_regime && v.reflector_regime);

        let v = projector_violations(0.1).unwrap();
        assert_abs_diff_eq!(v.eps_hat, 0.49382716, epsilon = 1e-7);
        assert_abs_diff_eq!(v.eps_check, 0.54320987, epsilon = 1e-7);
        assert_abs_diff_eq!(v.eps_tilde, 1.08641975, epsilon = 1e-7);

        let v = projector_violations(0.9).unwrap();
        assert!(!v.projector_regime && !v.reflector_regime);
        assert!(v.eps_tilde.is_finite());

        assert!(projector_violations(1.0).is_err());
        assert!(projector_violations(-0.1).is_err());
    }

    #[test]
    fn pair_violation_hand_values() {
        assert_eq!(pair_violation(0.7, 0.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            pair_violation(1.0, 0.21, 0.0).unwrap(),
            0.105,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            pair_violation(0.0, 3.7, 0.5).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn cycle_budget_hand_values() {
        let b = cycle_budget(&[0.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(b.alpha, 0.75);
        assert_eq!(b.eps, 0.0);

        let b = cycle_budget(&[0.105, 0.0, 0.0], 3).unwrap();
        assert_abs_diff_eq!(b.eps, 0.105, epsilon = 1e-12);

        let b = cycle_budget(&[0.1, 0.2], 2).unwrap();
        assert_abs_diff_eq!(b.alpha, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.eps, 0.32, epsilon = 1e-12);

        assert!(cycle_budget(&[0.1], 2).is_err());
    }

    #[test]
    fn gauge_and_rate_bound() {
        assert_abs_diff_eq!(linear_gauge(0.5, 0.0, 1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            linear_gauge(0.5, 0.0, 2.0).unwrap(),
            3f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
        // kappa below the admissible lower bound.
        let err = linear_gauge(0.5, 0.5, 0.5).unwrap_err();
        assert!(err.to_string().contains("kappa"), "{err}");

        assert_abs_diff_eq!(
            linear_rate_bound(0.75, 0.0, 2.0).unwrap(),
            (11.0f64 / 12.0).sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            linear_rate_bound(2.0 / 3.0, 0.0, 4.0 / 3.0).unwrap(),
            (23.0f64 / 32.0).sqrt(),
            epsilon = 1e-12
        );
        // Violation too large: no contraction certified.
        assert!(linear_rate_bound(0.5, 0.5, 10.0).is_err());

        // Same formula through both entry points.
        for (a, e, k) in [
            (0.5, 0.0, 2.0),
            (0.75, 0.1, 1.5),
            (2.0 / 3.0, 0.0, 4.0 / 3.0),
        ] {
            assert_eq!(
                linear_gauge(a, e, k).unwrap(),
                linear_rate_bound(a, e, k).unwrap()
            );
        }
    }

    #[test]
    fn gauge_iteration_sums_geometrically() {
        assert_eq!(gauge_iterate(0.5, 1.0, 3).unwrap(), vec![0.5, 0.25, 0.125]);
        assert_eq!(gauge_iterate(0.0, 5.0, 4).unwrap(), vec![0.0; 4]);
        let tail: f64 = gauge_iterate(0.9, 1.0, 200).unwrap().iter().sum();
        assert!(tail <= 9.0 + 1e-6);
        assert!(gauge_iterate(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn affine_composition_hand_values() {
        let id = AffineMap::identity(2);
        let comp = affine_compose(&[id.clone(), id.clone()], &[0.01, 0.01]).unwrap();
        assert_abs_diff_eq!(comp.eps[1], 0.02, epsilon = 1e-15);
        assert!((&comp.maps[1].linear - DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);
        assert!(comp.maps[1].offset.norm() < 1e-15);

        // Single map: base case.
        let comp = affine_compose(std::slice::from_ref(&id), &[0.3]).unwrap();
        assert_eq!(comp.eps, vec![0.3]);

        // Projection onto the x-axis followed by the identity.
        let proj = AffineMap {
            linear: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            offset: DVector::zeros(2),
        };
        let comp = affine_compose(&[proj, id], &[0.1, 0.1]).unwrap();
        assert_abs_diff_eq!(comp.eps[1], 0.2, epsilon = 1e-15);

        assert!(affine_compose(&[AffineMap::identity(2)], &[1.0]).is_err());
    }

    #[test]
    fn approx_radius_hand_values() {
        assert_abs_diff_eq!(
            approx_radius(0.0, 1.0, 0.1).unwrap(),
            0.1 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(approx_radius(0.0, 0.0, 0.2).unwrap(), 0.1, epsilon = 1e-15);
        // Monotone: shrinking the target shrinks the radius.
        let large = approx_radius(0.05, 1.0, 0.1).unwrap();
        let small = approx_radius(0.05, 1.0, 0.01).unwrap();
        assert!(small < large);
        assert!(approx_radius(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn shadow_error_budget_hand_values() {
        assert_abs_diff_eq!(
            shadow_error_budget(&[0.01, 0.02]).unwrap(),
            0.12,
            epsilon = 1e-15
        );
        assert_eq!(shadow_error_budget(&[0.25]).unwrap(), 1.0);
        let full = shadow_error_budget(&[0.02, 0.04]).unwrap();
        let halved = shadow_error_budget(&[0.01, 0.02]).unwrap();
        assert_abs_diff_eq!(halved * 2.0, full, epsilon = 1e-15);
        assert!(shadow_error_budget(&[]).is_err());
    }

    #[test]
    fn regularity_budget_chain() {
        let b = RegularityBudget::derive(&[0.0, 0.0, 0.0], 0.5, 2.0).unwrap();
        assert_eq!(b.composite_alpha, 0.75);
        assert_eq!(b.composite_eps, 0.0);
        assert_abs_diff_eq!(b.rate_bound, (11.0f64 / 12.0).sqrt(), epsilon = 1e-12);
        assert_eq!(b.gauge_gamma, b.rate_bound);

        let b = RegularityBudget::derive(&[0.1, 0.0], 0.5, 0.6).unwrap();
        assert_abs_diff_eq!(b.eps_tilde[0], 1.08641975, epsilon = 1e-7);
        assert!(b.pair_violations[0] > 0.0 && b.pair_violations[1] > 0.0);
        assert!(b.rate_bound < 1.0);

        // kappa below the admissible range propagates the range error.
        assert!(RegularityBudget::derive(&[0.0, 0.0], 0.5, 0.1).is_err());
    }

    #[test]
    fn budget_total_is_monotone_in_each_target() {
        let sets = vec![
            SetSpec::hyperplane(pt(&[0.0, 1.0]), 0.0).unwrap(),
            SetSpec::hyperplane(pt(&[0.0, 1.0]), 1.0).unwrap(),
        ];
        let anchors = vec![pt(&[0.0, 0.0]), pt(&[0.0, 1.0])];
        let eps_u = [0.0, 0.0];
        let base =
            AffineApproxBudget::for_instance(&sets, &anchors, &[0.01, 0.02], &eps_u).unwrap();
        for bumped in [[0.02, 0.02], [0.01, 0.03]] {
            let b = AffineApproxBudget::for_instance(&sets, &anchors, &bumped, &eps_u).unwrap();
            assert!(b.total_eps > base.total_eps);
        }
        let tiny =
            AffineApproxBudget::for_instance(&sets, &anchors, &[1e-9, 1e-9], &eps_u).unwrap();
        assert!(tiny.total_eps < 1e-7);
    }

    #[test]
    fn failed_budget_is_reported_not_raised() {
        // A sphere and two lines that miss it, asymmetrically: curvature
        // keeps the shadow ~3e-2 away from being an extended-CP fixed
        // point, so a vanishing budget fails without raising an error.
        let sets = vec![
            SetSpec::sphere(pt(&[0.0, 0.0]), 1.0).unwrap(),
            SetSpec::hyperplane(pt(&[0.0, 1.0]), 1.3).unwrap(),
            SetSpec::hyperplane(pt(&[1.0, 0.0]), 1.2).unwrap(),
        ];
        let op = CycleOp::new(sets.clone(), 0.3).unwrap();
        let stop = crate::engine::StopCriteria {
            max_iters: 50_000,
            step_tol: 1e-13,
            shadow_tol: 0.0,
            residual_tol: 0.0,
        };
        let trace = crate::engine::iterate(&op, &Point(vec![0.5, 0.9]), &stop).unwrap();
        let fixed = trace.final_iterate().clone();

        let chain = crate::diagnostics::gap_at(&sets, &fixed)
            .unwrap()
            .shadow_chain;
        let anchors = vec![chain[3].clone(), chain[2].clone(), chain[1].clone()];
        let budget = AffineApproxBudget::for_instance(
            &sets,
            &anchors,
            &[1e-6, 1e-6, 1e-6],
            &[0.0, 0.0, 0.0],
        )
        .unwrap();
        let report = verify_shadow_almost_fixed(&sets, 0.3, &fixed, &budget, 1e-8).unwrap();
        assert!(!report.holds, "ecp residual ~3e-2 but budget ~1e-5");
        assert!(report.observed_residual > report.eps_budget);
        assert!(report.observed_residual > 1e-3);
    }

    #[test]
    fn budget_for_affine_instance() {
        let sets = vec![
            SetSpec::hyperplane(pt(&[0.0, 1.0]), 0.0).unwrap(),
            SetSpec::hyperplane(pt(&[0.0, 1.0]), 1.0).unwrap(),
        ];
        let anchors = vec![pt(&[0.0, 0.0]), pt(&[0.0, 1.0])];
        let budget =
            AffineApproxBudget::for_instance(&sets, &anchors, &[0.01, 0.02], &[0.0, 0.0]).unwrap();
        assert_eq!(budget.composed_eps.len(), 2);
        assert_abs_diff_eq!(budget.composed_eps[0], 0.01, epsilon = 1e-15);
        // sup norm of a hyperplane projector through a point on it is >= 1.
        assert!(budget.sup_norms[0] >= 1.0);
        assert!(budget.total_eps > 0.0);
    }
}
