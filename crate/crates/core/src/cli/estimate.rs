use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{EstimatorChoice, LoadedConfig, ValidationConfig, VarianceConfig};
use super::{Context, Provenance};
use crate::data::{fmt_sig12, load_csv, split_half, CsvSchema, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{
    analyze, bootstrap_se, stratified_resample, tau_gold, Analysis, AnalysisOptions, Estimand, Estimate, Method,
    ShrinkageDiagnostics, VarianceMode,
};
use crate::nuisance::{
    estimate_pi, fit_k, fit_outcome, fit_rho, LogisticModel, ModelBases, OutcomeModel, Population,
};
use crate::shift::eval_weights;
use crate::sim::derive_seed;

/// Which data the shift models `k`, `ρ` were fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOn {
    /// The estimate does not use shift models.
    None,
    Primary,
    Validation,
    /// Read from a saved models file.
    Supplied,
}

impl FitOn {
    fn as_str(self) -> &'static str {
        match self {
            FitOn::None => "none",
            FitOn::Primary => "primary",
            FitOn::Validation => "validation",
            FitOn::Supplied => "supplied",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedShift {
    pub fit_on: FitOn,
    pub k: LogisticModel,
    pub rho: LogisticModel,
}

/// Contents of `models.json`, also accepted back through `models`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModels {
    pub mu1: OutcomeModel,
    pub mu0: OutcomeModel,
    pub shift: Vec<SavedShift>,
}

pub(crate) struct Plan {
    schema: CsvSchema,
    bases: ModelBases,
    estimators: HashSet<EstimatorChoice>,
    input: PathBuf,
    validation: ValidationConfig,
    variance: VarianceConfig,
    shrink_combined: bool,
    models: Option<PathBuf>,
}

pub(crate) fn plan(loaded: &LoadedConfig) -> Result<Plan> {
    let c = &loaded.config;
    let schema = loaded.schema()?;
    let bases = loaded.bases(&schema)?;
    let input = loaded.input()?;
    if c.estimators.is_empty() {
        return Err(Error::Config("`estimators` must not be empty".into()));
    }
    let validation = match &c.validation {
        ValidationConfig::File { path } => ValidationConfig::File {
            path: loaded.resolve(path),
        },
        v => v.clone(),
    };
    match c.variance {
        VarianceConfig::Bootstrap { replicates } if replicates < crate::estimators::bootstrap::MIN_REPLICATES => {
            return Err(Error::Config(format!(
                "bootstrap needs at least {} replicates, got {replicates}",
                crate::estimators::bootstrap::MIN_REPLICATES
            )))
        }
        VarianceConfig::Validation if matches!(validation, ValidationConfig::None) => {
            return Err(Error::Config("validation variance requires a validation sample".into()))
        }
        _ => {}
    }
    let models = c.models.as_deref().map(|p| loaded.resolve(p));
    if models.is_some() && !matches!(c.variance, VarianceConfig::Auto | VarianceConfig::Plugin) {
        return Err(Error::Config(
            "supplied models only support plug-in variance; set variance to `auto` or `plugin`".into(),
        ));
    }
    Ok(Plan {
        schema,
        bases,
        estimators: c.estimators.iter().copied().collect(),
        input,
        validation,
        variance: c.variance,
        shrink_combined: c.shrink_combined,
        models,
    })
}

fn load(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    load_csv(f, schema)
}

#[derive(Serialize)]
struct Counts {
    rows: usize,
    trial: usize,
    trial_treated: usize,
    trial_control: usize,
    external: usize,
    kappa_hat: f64,
}

impl Counts {
    fn of(ds: &Dataset) -> Self {
        let [treated, control, external] = ds.cell_indices().map(|c| c.len());
        Self {
            rows: ds.len(),
            trial: ds.n(),
            trial_treated: treated,
            trial_control: control,
            external,
            kappa_hat: ds.kappa_hat(),
        }
    }
}

#[derive(Serialize)]
struct Sample {
    primary: Counts,
    validation: Option<Counts>,
    pi_hat: Option<f64>,
}

#[derive(Serialize)]
struct Entry {
    method: Method,
    estimand: Estimand,
    fit_on: FitOn,
    value: f64,
    se: f64,
    ci: [f64; 2],
    variance: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<ShrinkageDiagnostics>,
}

impl Entry {
    fn new(e: &Estimate, fit_on: FitOn, variance: &'static str, diagnostics: Option<ShrinkageDiagnostics>) -> Self {
        Self {
            method: e.method,
            estimand: e.estimand,
            fit_on,
            value: e.value,
            se: e.se,
            ci: [e.ci.0, e.ci.1],
            variance,
            diagnostics,
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    provenance: &'a Provenance,
    input: Inputs,
    sample: Sample,
    estimates: Vec<Entry>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct Inputs {
    primary: String,
    validation: Option<String>,
    split_seed: Option<u64>,
}

/// One set of shift models and the analysis that uses them.
struct Fit {
    fit_on: FitOn,
    k: LogisticModel,
    rho: LogisticModel,
    analysis: Analysis,
    variance: &'static str,
}

fn fit_shift(ds: &Dataset, bases: &ModelBases) -> Result<(LogisticModel, LogisticModel)> {
    Ok((fit_k(ds, &bases.k)?, fit_rho(ds, &bases.rho)?))
}

struct Models {
    mu1: OutcomeModel,
    mu0: OutcomeModel,
    shift: Vec<(FitOn, LogisticModel, LogisticModel)>,
}

fn fit_models(primary: &Dataset, validation: Option<&Dataset>, bases: &ModelBases) -> Result<Models> {
    let mut shift = Vec::new();
    let (k, rho) = fit_shift(primary, bases)?;
    shift.push((FitOn::Primary, k, rho));
    if let Some(v) = validation {
        let (k, rho) = fit_shift(v, bases)?;
        shift.push((FitOn::Validation, k, rho));
    }
    Ok(Models {
        mu1: fit_outcome(primary, 1, &bases.mu, Population::TrialOnly)?,
        mu0: fit_outcome(primary, 0, &bases.mu, Population::TrialOnly)?,
        shift,
    })
}

fn analyses(
    primary: &Dataset,
    validation: Option<&Dataset>,
    models: Models,
    plugin: bool,
    shrink_combined: bool,
) -> Result<(Vec<Fit>, f64, OutcomeModel, OutcomeModel)> {
    let pi = estimate_pi(primary)?;
    let mut fits = Vec::new();
    for (fit_on, k, rho) in models.shift {
        let w = eval_weights(primary, &k, &rho)?;
        let (variance, label) = match (fit_on, plugin) {
            (FitOn::Supplied, _) | (_, true) => (VarianceMode::Plugin, "plugin"),
            (FitOn::Primary, false) => (
                VarianceMode::SameSample {
                    k_model: &k,
                    rho_model: &rho,
                },
                "same_sample",
            ),
            (FitOn::Validation, false) => (
                VarianceMode::Validation {
                    data: validation.expect("validation fit implies validation data"),
                    k_model: &k,
                    rho_model: &rho,
                },
                "validation",
            ),
            (FitOn::None, _) => unreachable!("shift models always have a source"),
        };
        let opts = AnalysisOptions {
            variance,
            shrink_combined,
        };
        let analysis = analyze(primary, &models.mu1, &models.mu0, &w, pi, &opts)?;
        fits.push(Fit {
            fit_on,
            k,
            rho,
            analysis,
            variance: label,
        });
    }
    Ok((fits, pi, models.mu1, models.mu0))
}

/// Point estimates in report order: trial-only, then augmented and shrinkage
/// per fit.
fn flatten(fits: &[Fit]) -> Vec<f64> {
    let mut v: Vec<f64> = fits[0].analysis.trial.iter().map(|e| e.value).collect();
    for f in fits {
        v.extend(f.analysis.augmented.iter().map(|e| e.value));
        v.extend(f.analysis.shrinkage.iter().map(|e| e.value));
    }
    v
}

fn with_se(e: &Estimate, se: f64) -> Estimate {
    Estimate::new(e.method, e.estimand, e.value, se)
}

pub(crate) fn run(ctx: &Context, plan: &Plan) -> Result<()> {
    let ds = load(&plan.input, &plan.schema)?;
    let mut split_seed = None;
    let (primary, validation, validation_path) = match &plan.validation {
        ValidationConfig::None => (ds, None, None),
        ValidationConfig::File { path } => {
            let v = load(path, &plan.schema)?;
            (ds, Some(v), Some(path.display().to_string()))
        }
        ValidationConfig::Split { seed } => {
            let s = seed.unwrap_or(ctx.seed);
            split_seed = Some(s);
            let (p, v) = split_half(&ds, s)?;
            (p, Some(v), None)
        }
    };

    let mut estimates = Vec::new();
    let mut warnings = Vec::new();
    let mut pi_hat = None;

    if plan.estimators.contains(&EstimatorChoice::Gold) {
        for e in tau_gold(&primary)? {
            estimates.push(Entry::new(&e, FitOn::None, "plugin", None));
        }
    }

    let wants = |c| plan.estimators.contains(&c);
    if wants(EstimatorChoice::TrialDr) || wants(EstimatorChoice::Augmented) || wants(EstimatorChoice::Shrinkage) {
        let models = match &plan.models {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
                let saved: SavedModels = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let s = saved
                    .shift
                    .into_iter()
                    .max_by_key(|s| s.fit_on == FitOn::Validation)
                    .ok_or_else(|| Error::Config("supplied models contain no shift models".into()))?;
                saved.mu1.basis.check_dimension(primary.p())?;
                Models {
                    mu1: saved.mu1,
                    mu0: saved.mu0,
                    shift: vec![(FitOn::Supplied, s.k, s.rho)],
                }
            }
            None => fit_models(&primary, validation.as_ref(), &plan.bases)?,
        };
        let plugin = plan.variance == VarianceConfig::Plugin;
        let (mut fits, pi, mu1, mu0) =
            analyses(&primary, validation.as_ref(), models, plugin, plan.shrink_combined)?;
        pi_hat = Some(pi);
        let mut trial_variance = "plugin";

        if let VarianceConfig::Bootstrap { replicates } = plan.variance {
            let boot = bootstrap_se(&primary, replicates, derive_seed(ctx.seed, 0xB007), |p, s| {
                let v = validation.as_ref().map(|v| stratified_resample(v, derive_seed(s, 1)));
                let m = fit_models(p, v.as_ref(), &plan.bases)?;
                let (f, ..) = analyses(p, v.as_ref(), m, true, plan.shrink_combined)?;
                Ok(flatten(&f))
            })?;
            if boot.redraws > 0 {
                warnings.push(format!("bootstrap redrew {} failed resamples", boot.redraws));
            }
            let mut se = boot.se.into_iter();
            for e in fits[0].analysis.trial.iter_mut() {
                *e = with_se(e, se.next().expect("bootstrap width"));
            }
            for f in &mut fits {
                for e in f.analysis.augmented.iter_mut().chain(f.analysis.shrinkage.iter_mut()) {
                    *e = with_se(e, se.next().expect("bootstrap width"));
                }
                f.variance = "bootstrap";
            }
            trial_variance = "bootstrap";
        }

        if wants(EstimatorChoice::TrialDr) {
            for e in &fits[0].analysis.trial {
                estimates.push(Entry::new(e, FitOn::None, trial_variance, None));
            }
        }
        for f in &fits {
            if f.analysis.clamped_weights > 0 {
                warnings.push(format!(
                    "{} shift weights fitted on {} data were clamped away from 0 or 1",
                    f.analysis.clamped_weights,
                    f.fit_on.as_str()
                ));
            }
            for (name, m) in [("k", &f.k), ("rho", &f.rho)] {
                if !m.converged {
                    warnings.push(format!("{name} model fitted on {} data did not converge", f.fit_on.as_str()));
                }
            }
            if wants(EstimatorChoice::Augmented) {
                for e in &f.analysis.augmented {
                    estimates.push(Entry::new(e, f.fit_on, f.variance, None));
                }
            }
            if wants(EstimatorChoice::Shrinkage) {
                for (e, d) in f.analysis.shrinkage.iter().zip(f.analysis.diagnostics) {
                    estimates.push(Entry::new(e, f.fit_on, f.variance, d));
                }
            }
        }

        write_influence(ctx, &primary, &fits)?;
        ctx.write_json(
            "models.json",
            &SavedModels {
                mu1,
                mu0,
                shift: fits
                    .iter()
                    .map(|f| SavedShift {
                        fit_on: f.fit_on,
                        k: f.k.clone(),
                        rho: f.rho.clone(),
                    })
                    .collect(),
            },
        )?;
    }

    ctx.write_json(
        "report.json",
        &Report {
            provenance: &ctx.provenance,
            input: Inputs {
                primary: plan.input.display().to_string(),
                validation: validation_path,
                split_seed,
            },
            sample: Sample {
                primary: Counts::of(&primary),
                validation: validation.as_ref().map(Counts::of),
                pi_hat,
            },
            estimates,
            warnings,
        },
    )
}

fn write_influence(ctx: &Context, primary: &Dataset, fits: &[Fit]) -> Result<()> {
    use std::io::Write;
    let mut out = ctx.create("influence.csv")?;
    for h in ctx.header() {
        writeln!(out, "# {h}").map_err(|e| Error::io("influence.csv", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["row".to_string(), "r".into(), "t".into(), "psi1_trial".into(), "psi0_trial".into()];
    for f in fits {
        head.push(format!("psi1_{}", f.fit_on.as_str()));
        head.push(format!("psi0_{}", f.fit_on.as_str()));
    }
    w.write_record(&head)?;
    let iv0 = &fits[0].analysis.influence;
    for (i, r) in primary.records().iter().enumerate() {
        let mut row = vec![
            (i + 1).to_string(),
            r.r.to_string(),
            r.t.to_string(),
            fmt_sig12(iv0.psi1_trial[i]),
            fmt_sig12(iv0.psi0_trial[i]),
        ];
        for f in fits {
            row.push(fmt_sig12(f.analysis.influence.psi1[i]));
            row.push(fmt_sig12(f.analysis.influence.psi0[i]));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("influence.csv", e))
}
