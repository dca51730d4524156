//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::CsvSchema;
use crate::error::{Error, Result};
use crate::nuisance::{FeatureBasis, ModelBases, Term};
use crate::sim::{experiment2_scenarios, DgpSpec, ScenarioSpec};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input CSV for `estimate` and `diagnose`.
    pub input: Option<PathBuf>,
    pub schema: Option<SchemaConfig>,
    pub bases: Option<BasesConfig>,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorChoice>,
    #[serde(default)]
    pub variance: VarianceConfig,
    /// Shrink `τ` directly rather than differencing the shrunk arms.
    #[serde(default)]
    pub shrink_combined: bool,
    /// Previously saved `models.json`; skips all nuisance fitting.
    pub models: Option<PathBuf>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    pub simulation: Option<SimulationConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub source: String,
    pub treatment: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    /// `[a, b]`: use column `a` minus column `b` as the outcome.
    pub outcome_difference: Option<(String, String)>,
}

impl SchemaConfig {
    pub fn to_schema(&self) -> CsvSchema {
        CsvSchema {
            source_column: self.source.clone(),
            treatment_column: self.treatment.clone(),
            outcome_column: self.outcome.clone(),
            covariate_columns: self.covariates.clone(),
            outcome_difference: self.outcome_difference.clone(),
        }
    }
}

/// Basis terms as strings: `intercept`, `outcome`, or `linear|square|exp:<c>`
/// where `<c>` is a covariate name, a 0-based index, or `*` for all
/// covariates.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasesConfig {
    pub k: Vec<String>,
    pub rho: Vec<String>,
    pub mu: Vec<String>,
}

fn resolve_terms(spec: &[String], covariates: &[String]) -> Result<FeatureBasis> {
    let mut terms = Vec::new();
    for raw in spec {
        let s = raw.trim();
        let Some((kind, target)) = s.split_once(':') else {
            terms.push(s.parse::<Term>()?);
            continue;
        };
        let indices: Vec<usize> = match target.trim() {
            "*" => (0..covariates.len()).collect(),
            name => match covariates.iter().position(|c| c == name) {
                Some(j) => vec![j],
                None => vec![name
                    .parse()
                    .map_err(|_| Error::Config(format!("basis term `{s}` names an unknown covariate")))?],
            },
        };
        for j in indices {
            terms.push(format!("{}:{j}", kind.trim()).parse::<Term>()?);
        }
    }
    FeatureBasis::new(terms).map_err(|e| Error::Config(e.to_string()))
}

impl BasesConfig {
    pub fn resolve(&self, covariates: &[String]) -> Result<ModelBases> {
        let b = ModelBases {
            k: resolve_terms(&self.k, covariates)?,
            rho: resolve_terms(&self.rho, covariates)?,
            mu: resolve_terms(&self.mu, covariates)?,
        };
        b.validate(covariates.len())?;
        Ok(b)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValidationConfig {
    #[default]
    None,
    File {
        path: PathBuf,
    },
    /// Stratified half split of the input; `seed` defaults to the run seed.
    Split {
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Gold,
    TrialDr,
    Augmented,
    Shrinkage,
}

fn default_estimators() -> Vec<EstimatorChoice> {
    vec![
        EstimatorChoice::Gold,
        EstimatorChoice::TrialDr,
        EstimatorChoice::Augmented,
        EstimatorChoice::Shrinkage,
    ]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum VarianceConfig {
    /// First-stage-corrected influence values for primary-fitted shift
    /// models, the validation correction for validation-fitted ones.
    #[default]
    Auto,
    /// Treats fitted `k`, `ρ` as known.
    Plugin,
    /// Requires a validation sample; primary-fitted columns use `auto`.
    Validation,
    Bootstrap {
        replicates: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Experiment1,
    Experiment2,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub dgp: DgpSpec,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Experiment 1 validation multipliers; 0 means no validation sample.
    #[serde(default = "default_multipliers")]
    pub multipliers: Vec<f64>,
    /// Experiment 2 scenarios; defaults to the four standard ones.
    pub scenarios: Option<Vec<ScenarioSpec>>,
}

fn default_replications() -> usize {
    2000
}

fn default_multipliers() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0, 4.0]
}

impl SimulationConfig {
    pub fn scenarios(&self) -> Vec<ScenarioSpec> {
        self.scenarios.clone().unwrap_or_else(experiment2_scenarios)
    }
}

/// A parsed configuration with its source location and content hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub dir: PathBuf,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let sha256 = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, dir, sha256 })
    }

    /// Paths in the config are relative to the config file.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn schema(&self) -> Result<CsvSchema> {
        let s = self
            .config
            .schema
            .as_ref()
            .ok_or_else(|| Error::Config("`schema` is required".into()))?
            .to_schema();
        s.validate()?;
        Ok(s)
    }

    pub fn bases(&self, schema: &CsvSchema) -> Result<ModelBases> {
        match &self.config.bases {
            Some(b) => b.resolve(&schema.covariate_columns),
            None => Ok(ModelBases::linear(schema.covariate_columns.len())),
        }
    }

    pub fn input(&self) -> Result<PathBuf> {
        self.config
            .input
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Config("`input` is required".into()))
    }
}
