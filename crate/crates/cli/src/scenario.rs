//! Scenario files: problem definition, stopping rules, output paths.

use anyhow::{bail, Context};
use feasolve_core::engine::StopCriteria;
use feasolve_core::geometry::SetSpec;
use feasolve_core::point::Point;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// A feasibility scenario: named instance, relaxation parameter(s),
/// starting point, stopping rules and output locations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub dimension: usize,
    pub sets: Vec<SetSpec>,
    pub lambda: LambdaSpec,
    pub x0: StartSpec,
    /// Seed for `"random"` starting points.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stop: StopCriteria,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Outputs>,
    /// Optional per-set approximation targets for the budgeted shadow
    /// check in `verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Single(f64),
    Sweep(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartSpec {
    Named(String),
    Point(Vec<f64>),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_json: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub per_set_eps: Vec<f64>,
    /// Super-regularity constants; zero (convex) when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_u: Option<Vec<f64>>,
}

impl Scenario {
    pub fn load(path: &Path) -> anyhow::Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario file {}", path.display()))?;
        let scenario: Scenario = serde_json::from_str(&text)
            .with_context(|| format!("malformed scenario {}", path.display()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.sets.len() < 2 {
            bail!(
                "field `sets`: need at least 2 sets, got {}",
                self.sets.len()
            );
        }
        for (i, s) in self.sets.iter().enumerate() {
            if s.dim() != self.dimension {
                bail!(
                    "field `sets[{i}]`: ambient dimension {} does not match `dimension` = {}",
                    s.dim(),
                    self.dimension
                );
            }
        }
        for l in self.lambda_values() {
            if !(0.0..=1.0).contains(&l) || !l.is_finite() {
                bail!("field `lambda`: values must lie in [0, 1], got {l}");
            }
        }
        match &self.x0 {
            StartSpec::Named(name) if name == "random" => {}
            StartSpec::Named(name) => {
                bail!("field `x0`: expected a coordinate array or \"random\", got \"{name}\"")
            }
            StartSpec::Point(coords) => {
                if coords.len() != self.dimension {
                    bail!(
                        "field `x0`: has {} coordinates but `dimension` = {}",
                        coords.len(),
                        self.dimension
                    );
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    bail!("field `x0`: coordinates must be finite");
                }
            }
        }
        self.stop
            .validate()
            .map_err(|e| anyhow::anyhow!("field `stop`: {e}"))?;
        if let Some(budget) = &self.budget {
            if budget.per_set_eps.len() != self.sets.len() {
                bail!(
                    "field `budget.per_set_eps`: expected {} entries, got {}",
                    self.sets.len(),
                    budget.per_set_eps.len()
                );
            }
            if let Some(eps_u) = &budget.eps_u {
                if eps_u.len() != self.sets.len() {
                    bail!(
                        "field `budget.eps_u`: expected {} entries, got {}",
                        self.sets.len(),
                        eps_u.len()
                    );
                }
            }
        }
        Ok(())
    }

    pub fn lambda_values(&self) -> Vec<f64> {
        match &self.lambda {
            LambdaSpec::Single(l) => vec![*l],
            LambdaSpec::Sweep(ls) => ls.clone(),
        }
    }

    /// Resolves the starting point, drawing uniformly from `[-1, 1]^n`
    /// with the given seed when the scenario says `"random"`.
    pub fn starting_point(&self, seed: u64) -> Point {
        match &self.x0 {
            StartSpec::Point(coords) => Point(coords.clone()),
            StartSpec::Named(_) => {
                use rand::SeedableRng;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Point(
                    (0..self.dimension)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect(),
                )
            }
        }
    }

    /// Effective output path: explicit scenario path if set (redirected
    /// into `out_dir` when given), otherwise `<name><suffix>` in `out_dir`
    /// or the working directory.
    pub fn output_path(
        &self,
        explicit: Option<&PathBuf>,
        out_dir: Option<&PathBuf>,
        suffix: &str,
    ) -> PathBuf {
        let default_name = format!("{}{suffix}", self.name);
        match (explicit, out_dir) {
            (Some(p), Some(dir)) => dir.join(
                p.file_name()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(&default_name)),
            ),
            (Some(p), None) => p.clone(),
            (None, Some(dir)) => dir.join(default_name),
            (None, None) => PathBuf::from(default_name),
        }
    }

    pub fn trace_path(&self, out_dir: Option<&PathBuf>) -> PathBuf {
        let explicit = self.outputs.as_ref().and_then(|o| o.trace_csv.as_ref());
        self.output_path(explicit, out_dir, "_trace.csv")
    }

    pub fn summary_path(&self, out_dir: Option<&PathBuf>) -> PathBuf {
        let explicit = self.outputs.as_ref().and_then(|o| o.summary_json.as_ref());
        self.output_path(explicit, out_dir, "_summary.json")
    }
}

/// Inserts a `_lambda<value>` tag before the extension, for per-lambda
/// sweep traces.
pub fn with_lambda_tag(path: &Path, lambda: f64) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".to_string());
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_lambda{lambda}{ext}"))
}
