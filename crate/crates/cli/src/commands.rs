//! Subcommand implementations and the exit-code contract:
//! 0 converged / all checks pass, 1 malformed input or range violation,
//! 2 iteration budget exhausted, 3 divergence.

use crate::scenario::{with_lambda_tag, LambdaSpec, Scenario};
use crate::summary::{
    CharacterizationDigest, CheckRecord, LambdaRecord, ShadowDigest, Summary, VerifyReport, SCHEMA,
};
use anyhow::Context;
use feasolve_core::analysis::{
    characterize_fixed_point, verify_shadow_affine, verify_shadow_almost_fixed, AffineApproxBudget,
    RegularityBudget,
};
use feasolve_core::diagnostics::{fit_rate, gap_at};
use feasolve_core::engine::{self, IterationTrace, StopCriteria, StopReason};
use feasolve_core::error::Error as CoreError;
use feasolve_core::geometry::SetSpec;
use feasolve_core::operators::CycleOp;
use feasolve_core::point::Point;
use log::{debug, info, warn};
use serde::Deserialize;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Tolerance used to decide fixed-point-dependent reports.
const FIX_TOL: f64 = 1e-8;
const ORBIT_SHADOW_TOL: f64 = 1e-8;

pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
}

struct RunOutcome {
    trace: IterationTrace,
    diverged: bool,
}

fn run_one(op: &CycleOp, x0: &Point, stop: &StopCriteria) -> anyhow::Result<RunOutcome> {
    match engine::iterate(op, x0, stop) {
        Ok(trace) => Ok(RunOutcome {
            trace,
            diverged: false,
        }),
        Err(CoreError::Diverged { at, trace, .. }) => {
            warn!("iteration diverged at step {at}");
            Ok(RunOutcome {
                trace: *trace,
                diverged: true,
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn effective_stop(scenario: &Scenario, overrides: &Overrides) -> StopCriteria {
    let mut stop = scenario.stop;
    if let Some(max_iters) = overrides.max_iters {
        stop.max_iters = max_iters;
    }
    stop
}

fn build_record(
    op: &CycleOp,
    scenario: &Scenario,
    lambda: f64,
    outcome: &RunOutcome,
) -> anyhow::Result<LambdaRecord> {
    let trace = &outcome.trace;
    let last = trace.final_iterate();
    let final_residual = engine::residual(op, last)?;
    let window = 20.min(trace.len().saturating_sub(1)).max(1);

    let characterization = if outcome.diverged {
        None
    } else {
        characterize_fixed_point(op.sets(), lambda, last, FIX_TOL)
            .ok()
            .map(|r| CharacterizationDigest::from(&r))
    };

    let shadow_check = shadow_digest(scenario, op.sets(), lambda, last, final_residual);

    Ok(LambdaRecord {
        lambda,
        iterations: trace.len() - 1,
        stop_reason: trace.stop_reason,
        final_residual,
        final_gap: trace.final_gap(),
        fitted_rate: fit_rate(&trace.residuals, 0.5).ok(),
        orbit: (trace.len() > window)
            .then(|| engine::detect_orbit(trace, window, ORBIT_SHADOW_TOL).ok())
            .flatten()
            .map(Into::into),
        characterization,
        shadow_check,
    })
}

fn shadow_digest(
    scenario: &Scenario,
    sets: &[SetSpec],
    lambda: f64,
    fixed: &Point,
    final_residual: f64,
) -> Option<ShadowDigest> {
    if final_residual > FIX_TOL {
        return None;
    }
    if sets
        .iter()
        .all(|s| matches!(s, SetSpec::Affine(_) | SetSpec::Hyperplane { .. }))
    {
        return verify_shadow_affine(sets, lambda, fixed, FIX_TOL)
            .ok()
            .map(|r| ShadowDigest::from(&r));
    }
    if let Some(budget_spec) = &scenario.budget {
        let budget = instance_budget(sets, fixed, budget_spec).ok()?;
        return verify_shadow_almost_fixed(sets, lambda, fixed, &budget, FIX_TOL)
            .ok()
            .map(|r| ShadowDigest::from(&r));
    }
    None
}

/// Builds the affine approximation budget for a converged run, anchoring
/// tangent spaces at the gap-chain points of the fixed point.
///
/// Convex sets have super-regularity constant 0; for nonconvex sets the
/// constant must be supplied in the scenario, never defaulted.
fn instance_budget(
    sets: &[SetSpec],
    fixed: &Point,
    spec: &crate::scenario::BudgetSpec,
) -> anyhow::Result<AffineApproxBudget> {
    let m = sets.len();
    let chain = gap_at(sets, fixed)?.shadow_chain;
    // chain[k] = y^{(m+1-k)}; anchor for A_i is y^{(i)}.
    let anchors: Vec<Point> = (1..=m).map(|i| chain[m + 1 - i].clone()).collect();
    let eps_u = match &spec.eps_u {
        Some(values) => values.clone(),
        None => {
            if let Some(i) = sets.iter().position(|s| !s.is_convex()) {
                anyhow::bail!(
                    "field `budget.eps_u`: required because sets[{i}] is nonconvex; \
                     supply a constant or estimate one by sampling"
                );
            }
            vec![0.0; m]
        }
    };
    Ok(AffineApproxBudget::for_instance(
        sets,
        &anchors,
        &spec.per_set_eps,
        &eps_u,
    )?)
}

fn write_summary(path: &Path, summary: &Summary) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, json)
        .with_context(|| format!("cannot write summary {}", path.display()))?;
    info!("wrote summary {}", path.display());
    Ok(())
}

fn write_trace(path: &Path, trace: &IterationTrace) -> anyhow::Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("cannot write trace {}", path.display()))?;
    trace.write_csv(std::io::BufWriter::new(file))?;
    info!("wrote trace {}", path.display());
    Ok(())
}

fn exit_code_for(outcomes: &[&RunOutcome]) -> i32 {
    if outcomes.iter().any(|o| o.diverged) {
        EXIT_DIVERGED
    } else if outcomes
        .iter()
        .any(|o| o.trace.stop_reason == StopReason::MaxIters)
    {
        EXIT_MAX_ITERS
    } else {
        EXIT_OK
    }
}

pub fn cmd_run(scenario_path: &Path, overrides: &Overrides) -> anyhow::Result<i32> {
    let scenario = Scenario::load(scenario_path)?;
    let lambda = match &scenario.lambda {
        LambdaSpec::Single(l) => *l,
        LambdaSpec::Sweep(_) => {
            anyhow::bail!("field `lambda`: `run` needs a single value; use `sweep` for lists")
        }
    };
    let stop = effective_stop(&scenario, overrides);
    let x0 = scenario.starting_point(overrides.seed.unwrap_or(scenario.seed));
    let op = CycleOp::new(scenario.sets.clone(), lambda)?;
    info!(
        "run `{}`: lambda = {lambda}, x0 = {:?}",
        scenario.name,
        x0.as_slice()
    );

    let outcome = run_one(&op, &x0, &stop)?;
    write_trace(
        &scenario.trace_path(overrides.out_dir.as_ref()),
        &outcome.trace,
    )?;
    let record = build_record(&op, &scenario, lambda, &outcome)?;
    debug!(
        "stop reason {:?} after {} iterations",
        record.stop_reason, record.iterations
    );
    let summary = Summary {
        schema: SCHEMA.to_string(),
        name: scenario.name.clone(),
        dimension: scenario.dimension,
        records: vec![record],
    };
    write_summary(&scenario.summary_path(overrides.out_dir.as_ref()), &summary)?;
    Ok(exit_code_for(&[&outcome]))
}

pub fn cmd_sweep(scenario_path: &Path, overrides: &Overrides) -> anyhow::Result<i32> {
    let scenario = Scenario::load(scenario_path)?;
    let raw = match &scenario.lambda {
        LambdaSpec::Sweep(ls) if ls.len() >= 2 => ls.clone(),
        LambdaSpec::Sweep(ls) => {
            anyhow::bail!(
                "field `lambda`: sweep needs at least 2 values, got {}",
                ls.len()
            )
        }
        LambdaSpec::Single(_) => {
            anyhow::bail!("field `lambda`: sweep needs a list of values")
        }
    };
    let mut lambdas: Vec<f64> = Vec::new();
    for l in raw {
        if lambdas.contains(&l) {
            warn!("duplicate lambda {l} dropped from sweep");
        } else {
            lambdas.push(l);
        }
    }

    let stop = effective_stop(&scenario, overrides);
    let x0 = scenario.starting_point(overrides.seed.unwrap_or(scenario.seed));
    let trace_base = scenario.trace_path(overrides.out_dir.as_ref());

    let mut outcomes = Vec::new();
    let mut records = Vec::new();
    for &lambda in &lambdas {
        let op = CycleOp::new(scenario.sets.clone(), lambda)?;
        info!("sweep `{}`: lambda = {lambda}", scenario.name);
        let outcome = run_one(&op, &x0, &stop)?;
        write_trace(&with_lambda_tag(&trace_base, lambda), &outcome.trace)?;
        records.push(build_record(&op, &scenario, lambda, &outcome)?);
        outcomes.push(outcome);
    }
    let summary = Summary {
        schema: SCHEMA.to_string(),
        name: scenario.name.clone(),
        dimension: scenario.dimension,
        records,
    };
    write_summary(&scenario.summary_path(overrides.out_dir.as_ref()), &summary)?;
    Ok(exit_code_for(&outcomes.iter().collect::<Vec<_>>()))
}

pub fn cmd_verify(scenario_path: &Path, overrides: &Overrides) -> anyhow::Result<i32> {
    let scenario = Scenario::load(scenario_path)?;
    let lambda = match &scenario.lambda {
        LambdaSpec::Single(l) => *l,
        LambdaSpec::Sweep(_) => {
            anyhow::bail!("field `lambda`: `verify` needs a single value")
        }
    };
    let stop = effective_stop(&scenario, overrides);
    let x0 = scenario.starting_point(overrides.seed.unwrap_or(scenario.seed));
    let op = CycleOp::new(scenario.sets.clone(), lambda)?;
    let outcome = run_one(&op, &x0, &stop)?;
    let trace = &outcome.trace;
    let fixed = trace.final_iterate().clone();
    let final_residual = engine::residual(&op, &fixed)?;
    let converged = !outcome.diverged && trace.stop_reason != StopReason::MaxIters;

    let mut checks = Vec::new();
    let mut report = |c: CheckRecord| checks.push(c);

    if converged {
        let character = characterize_fixed_point(op.sets(), lambda, &fixed, FIX_TOL)?;
        report(CheckRecord::bound(
            "characterization_representation_residual",
            character.representation_residual,
            FIX_TOL,
        ));
        if lambda < 1.0 {
            report(CheckRecord::bound(
                "characterization_coefficient_sum",
                (character.coefficient_sum - 1.0).abs(),
                1e-12,
            ));
        } else {
            report(CheckRecord::not_applicable(
                "characterization_coefficient_sum",
                "lambda = 1 uses the telescoped identity",
            ));
        }
        if lambda <= 0.5 {
            report(CheckRecord::flag(
                "characterization_convex_combination",
                character.convex_combination,
                "all coefficients >= -1e-12",
            ));
        } else {
            report(CheckRecord::not_applicable(
                "characterization_convex_combination",
                "requires lambda <= 1/2",
            ));
        }
        let m = op.sets().len();
        let mut worst = 0.0f64;
        for j in 1..=m {
            let inner = &op.sets()[j - 1];
            let outer = &op.sets()[j % m];
            worst = worst.max(inner.distance(&character.terms[2 * (j - 1)])?);
            worst = worst.max(outer.distance(&character.terms[2 * (j - 1) + 1])?);
        }
        report(CheckRecord::bound(
            "characterization_terms_membership",
            worst,
            1e-10,
        ));

        let all_affine = op
            .sets()
            .iter()
            .all(|s| matches!(s, SetSpec::Affine(_) | SetSpec::Hyperplane { .. }));
        if all_affine && final_residual <= FIX_TOL {
            let shadow = verify_shadow_affine(op.sets(), lambda, &fixed, FIX_TOL)?;
            report(CheckRecord::bound(
                "affine_shadow_cp_residual",
                shadow.cp_residual,
                10.0 * FIX_TOL,
            ));
            report(CheckRecord::flag(
                "affine_shadow_image_fixed",
                shadow.extended_cp_image_fixed,
                "extended cyclic projections map fixed points into their own fixed set",
            ));
            report(CheckRecord::flag(
                "affine_shadow_cdr0_fixed",
                shadow.cdr0_shadow_fixed,
                "shadow of the lambda=0 image is fixed for the composed shadow map",
            ));
        } else {
            report(CheckRecord::not_applicable(
                "affine_shadow_cp_residual",
                "requires an all-affine instance and a tight fixed point",
            ));
        }

        match &scenario.budget {
            Some(spec) => match instance_budget(op.sets(), &fixed, spec) {
                Ok(budget) => {
                    match verify_shadow_almost_fixed(op.sets(), lambda, &fixed, &budget, FIX_TOL) {
                        Ok(r) => report(CheckRecord::bound(
                            "shadow_budget",
                            r.observed_residual,
                            r.eps_budget,
                        )),
                        Err(e) => report(CheckRecord::flag(
                            "shadow_budget",
                            false,
                            format!("not evaluable: {e}"),
                        )),
                    }
                }
                Err(e) => report(CheckRecord::flag(
                    "shadow_budget",
                    false,
                    format!("budget construction failed: {e}"),
                )),
            },
            None => report(CheckRecord::not_applicable(
                "shadow_budget",
                "no budget parameters in the scenario",
            )),
        }

        let final_gap = trace.final_gap();
        if final_gap <= 1e-8 {
            // The chain collapsed: its endpoint should be a near-common point.
            let chain = gap_at(op.sets(), &fixed)?.shadow_chain;
            let z = chain.last().expect("chain nonempty").clone();
            let mut worst = 0.0f64;
            for s in op.sets() {
                worst = worst.max(s.distance(&z)?);
            }
            report(CheckRecord::bound(
                "intersection_point_distance",
                worst,
                1e-6,
            ));
            report(CheckRecord::bound(
                "intersection_point_residual",
                engine::residual(&op, &z)?,
                1e-5,
            ));
        } else {
            report(CheckRecord::not_applicable(
                "intersection_point_distance",
                format!("gap limit {final_gap:e} indicates an inconsistent instance"),
            ));
        }
    }

    let all_pass = converged && checks.iter().all(|c| !c.applicable || c.pass);
    let verify = VerifyReport {
        schema: SCHEMA.to_string(),
        name: scenario.name.clone(),
        lambda,
        converged,
        stop_reason: trace.stop_reason,
        final_residual,
        final_gap: trace.final_gap(),
        checks,
        all_pass,
    };
    println!("{}", serde_json::to_string_pretty(&verify)?);

    if !converged {
        return Ok(if outcome.diverged {
            EXIT_DIVERGED
        } else {
            EXIT_MAX_ITERS
        });
    }
    Ok(if all_pass { EXIT_OK } else { EXIT_INVALID })
}

#[derive(Deserialize)]
struct BudgetParams {
    eps_u: Vec<f64>,
    lambda: f64,
    kappa: f64,
}

pub fn cmd_budget(params_path: &Path) -> anyhow::Result<i32> {
    let text = std::fs::read_to_string(params_path)
        .with_context(|| format!("cannot read params file {}", params_path.display()))?;
    let params: BudgetParams = serde_json::from_str(&text)
        .with_context(|| format!("malformed params {}", params_path.display()))?;
    let budget = RegularityBudget::derive(&params.eps_u, params.lambda, params.kappa)?;
    println!("{}", serde_json::to_string_pretty(&budget)?);
    Ok(EXIT_OK)
}
