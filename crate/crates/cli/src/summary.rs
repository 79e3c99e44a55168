//! Summary and verification report schemas (`"schema": "feasolve/1"`).

use feasolve_core::analysis::{
    CharacterizationBranch, FixCharacterizationReport, ShadowAffineReport, ShadowBudgetReport,
};
use feasolve_core::diagnostics::RateFit;
use feasolve_core::engine::{OrbitReport, StopReason};
use feasolve_core::point::Point;
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "feasolve/1";

#[derive(Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub name: String,
    pub dimension: usize,
    pub records: Vec<LambdaRecord>,
}

#[derive(Serialize, Deserialize)]
pub struct LambdaRecord {
    pub lambda: f64,
    /// Number of operator applications performed.
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub final_residual: f64,
    pub final_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_rate: Option<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbit: Option<OrbitDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub characterization: Option<CharacterizationDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shadow_check: Option<ShadowDigest>,
}

/// Orbit report plus an explicit marker that its thresholds are heuristic.
#[derive(Serialize, Deserialize)]
pub struct OrbitDigest {
    #[serde(flatten)]
    pub report: OrbitReport,
    pub heuristic: bool,
}

impl From<OrbitReport> for OrbitDigest {
    fn from(report: OrbitReport) -> Self {
        OrbitDigest {
            report,
            heuristic: true,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct CharacterizationDigest {
    pub branch: CharacterizationBranch,
    pub is_fixed: bool,
    pub coefficient_sum: f64,
    pub representation_residual: f64,
    pub convex_combination: bool,
    pub multivalued_hit: bool,
}

impl From<&FixCharacterizationReport> for CharacterizationDigest {
    fn from(r: &FixCharacterizationReport) -> Self {
        CharacterizationDigest {
            branch: r.branch,
            is_fixed: r.is_fixed,
            coefficient_sum: r.coefficient_sum,
            representation_residual: r.representation_residual,
            convex_combination: r.convex_combination,
            multivalued_hit: r.multivalued_hit,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShadowDigest {
    Affine {
        shadow: Point,
        cp_residual: f64,
        extended_cp_image_fixed: bool,
        cdr0_shadow_fixed: bool,
    },
    Budget {
        eps_budget: f64,
        observed_residual: f64,
        holds: bool,
    },
}

impl From<&ShadowAffineReport> for ShadowDigest {
    fn from(r: &ShadowAffineReport) -> Self {
        ShadowDigest::Affine {
            shadow: r.shadow.clone(),
            cp_residual: r.cp_residual,
            extended_cp_image_fixed: r.extended_cp_image_fixed,
            cdr0_shadow_fixed: r.cdr0_shadow_fixed,
        }
    }
}

impl From<&ShadowBudgetReport> for ShadowDigest {
    fn from(r: &ShadowBudgetReport) -> Self {
        ShadowDigest::Budget {
            eps_budget: r.eps_budget,
            observed_residual: r.observed_residual,
            holds: r.holds,
        }
    }
}

/// `verify` report: one record per invariant check.
#[derive(Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: String,
    pub name: String,
    pub lambda: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub final_residual: f64,
    pub final_gap: f64,
    pub checks: Vec<CheckRecord>,
    /// True iff every applicable check passed.
    pub all_pass: bool,
}

#[derive(Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    /// Checks whose hypotheses do not apply to this scenario are recorded
    /// but excluded from the exit-code verdict.
    pub applicable: bool,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn not_applicable(name: &str, note: impl Into<String>) -> Self {
        CheckRecord {
            name: name.to_string(),
            applicable: false,
            pass: true,
            observed: None,
            threshold: None,
            note: Some(note.into()),
        }
    }

    pub fn bound(name: &str, observed: f64, threshold: f64) -> Self {
        CheckRecord {
            name: name.to_string(),
            applicable: true,
            pass: observed <= threshold,
            observed: Some(observed),
            threshold: Some(threshold),
            note: None,
        }
    }

    pub fn flag(name: &str, pass: bool, note: impl Into<String>) -> Self {
        CheckRecord {
            name: name.to_string(),
            applicable: true,
            pass,
            observed: None,
            threshold: None,
            note: Some(note.into()),
        }
    }
}
