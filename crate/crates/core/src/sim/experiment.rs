use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate, true_tau, DgpSpec};
use super::derive_seed;
use crate::data::{fmt_sig12, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{analyze, AnalysisOptions, Estimand, VarianceMode};
use crate::nuisance::{estimate_pi, fit_k, fit_outcome, fit_rho, FeatureBasis, ModelBases, Population, Term};
use crate::shift::{eval_weights, oracle_weights};
use crate::stats;

pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSourceKind {
    #[default]
    Fitted,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub mu_correct: bool,
    pub k_correct: bool,
    pub rho_correct: bool,
    /// Validation size as a multiple of the primary sizes; 0 fits `k`, `ρ`
    /// on the primary sample.
    #[serde(default)]
    pub validation_multiplier: f64,
    #[serde(default)]
    pub weight_source: WeightSourceKind,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_multiplier >= 0.0 && self.validation_multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "scenario `{}`: validation multiplier must be finite and >= 0",
                self.name
            )));
        }
        Ok(())
    }

    pub fn bases(&self) -> ModelBases {
        let good = correct_bases();
        let bad = misspecified_bases();
        ModelBases {
            k: if self.k_correct { good.k } else { bad.k },
            rho: if self.rho_correct { good.rho } else { bad.rho },
            mu: if self.mu_correct { good.mu } else { bad.mu },
        }
    }
}

fn basis(terms: &[Term]) -> FeatureBasis {
    FeatureBasis::new(terms.to_vec()).expect("static basis is valid")
}

/// Bases containing the true working models of the Gaussian design.
pub fn correct_bases() -> ModelBases {
    use Term::*;
    ModelBases {
        k: basis(&[Intercept, Linear(0), Square(0)]),
        rho: basis(&[Intercept, Linear(0), Square(0), Exp(0), Outcome]),
        mu: basis(&[Intercept, Linear(0), Exp(0)]),
    }
}

/// Misspecified bases. `k` and `ρ` drop their nonlinear terms; `μ` keeps
/// `exp(x)` but drops `x`, since a linear `μ` lies in the span of the
/// misspecified `k` and `ρ` designs and the augmented estimator would then
/// coincide with the trial-only one.
pub fn misspecified_bases() -> ModelBases {
    use Term::*;
    ModelBases {
        k: basis(&[Intercept, Linear(0)]),
        rho: basis(&[Intercept, Linear(0), Outcome]),
        mu: basis(&[Intercept, Exp(0)]),
    }
}

fn fmt_multiplier(m: f64) -> String {
    format!("{m}")
}

/// No-validation, one regime per positive multiplier, then the oracle.
pub fn experiment1_scenarios(multipliers: &[f64]) -> Vec<ScenarioSpec> {
    let mut out = Vec::new();
    for &m in multipliers {
        out.push(ScenarioSpec {
            name: if m == 0.0 {
                "no_validation".into()
            } else {
                format!("validation_x{}", fmt_multiplier(m))
            },
            mu_correct: true,
            k_correct: true,
            rho_correct: true,
            validation_multiplier: m,
            weight_source: WeightSourceKind::Fitted,
        });
    }
    out.push(ScenarioSpec {
        name: "oracle".into(),
        mu_correct: true,
        k_correct: true,
        rho_correct: true,
        validation_multiplier: 0.0,
        weight_source: WeightSourceKind::Oracle,
    });
    out
}

/// (i) all correct, (ii) `μ` wrong, (iii) `k`, `ρ` wrong, (iv) all wrong.
pub fn experiment2_scenarios() -> Vec<ScenarioSpec> {
    [("i", true, true), ("ii", false, true), ("iii", true, false), ("iv", false, false)]
        .into_iter()
        .map(|(name, mu, shift)| ScenarioSpec {
            name: name.into(),
            mu_correct: mu,
            k_correct: shift,
            rho_correct: shift,
            validation_multiplier: 0.0,
            weight_source: WeightSourceKind::Fitted,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    TrialOnly,
    Augmented,
    Shrinkage,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [
        EstimatorKind::TrialOnly,
        EstimatorKind::Augmented,
        EstimatorKind::Shrinkage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::TrialOnly => "trial_only",
            EstimatorKind::Augmented => "augmented",
            EstimatorKind::Shrinkage => "shrinkage",
        }
    }
}

/// Values and standard errors from one replication of one scenario,
/// indexed `[estimator][estimand]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepOutcome {
    pub value: [[f64; 3]; 3],
    pub se: [[f64; 3]; 3],
    /// `δ` of the `τ₁` and `τ₀` shrinkage.
    pub delta: [f64; 2],
    /// `λ_N` of the `τ₁` and `τ₀` shrinkage.
    pub lambda_n: [f64; 2],
}

fn run_scenario(
    dgp: &DgpSpec,
    primary: &Dataset,
    pi_hat: f64,
    spec: &ScenarioSpec,
    validation_seed: u64,
) -> Result<RepOutcome> {
    let bases = spec.bases();
    let mu1 = fit_outcome(primary, 1, &bases.mu, Population::TrialOnly)?;
    let mu0 = fit_outcome(primary, 0, &bases.mu, Population::TrialOnly)?;
    let opts_plugin = AnalysisOptions::default();
    let analysis = match spec.weight_source {
        WeightSourceKind::Oracle => {
            let w = oracle_weights(primary, dgp)?;
            analyze(primary, &mu1, &mu0, &w, pi_hat, &opts_plugin)?
        }
        WeightSourceKind::Fitted if spec.validation_multiplier == 0.0 => {
            let k = fit_k(primary, &bases.k)?;
            let rho = fit_rho(primary, &bases.rho)?;
            let w = eval_weights(primary, &k, &rho)?;
            let opts = AnalysisOptions {
                variance: VarianceMode::SameSample {
                    k_model: &k,
                    rho_model: &rho,
                },
                shrink_combined: false,
            };
            analyze(primary, &mu1, &mu0, &w, pi_hat, &opts)?
        }
        WeightSourceKind::Fitted => {
            let vdgp = dgp.scaled(spec.validation_multiplier);
            let val = generate(&vdgp, validation_seed)?;
            let k = fit_k(&val, &bases.k)?;
            let rho = fit_rho(&val, &bases.rho)?;
            let w = eval_weights(primary, &k, &rho)?;
            let opts = AnalysisOptions {
                variance: VarianceMode::Validation {
                    data: &val,
                    k_model: &k,
                    rho_model: &rho,
                },
                shrink_combined: false,
            };
            analyze(primary, &mu1, &mu0, &w, pi_hat, &opts)?
        }
    };
    let sets = [&analysis.trial, &analysis.augmented, &analysis.shrinkage];
    let mut out = RepOutcome {
        value: [[0.0; 3]; 3],
        se: [[0.0; 3]; 3],
        delta: [0.0; 2],
        lambda_n: [0.0; 2],
    };
    for (a, set) in sets.iter().enumerate() {
        for (b, e) in set.iter().enumerate() {
            out.value[a][b] = e.value;
            out.se[a][b] = e.se;
        }
    }
    for j in 0..2 {
        let d = analysis.diagnostics[j].expect("arm shrinkage has diagnostics");
        out.delta[j] = d.delta;
        out.lambda_n[j] = d.lambda_n;
    }
    Ok(out)
}

/// One replication: a primary draw shared by all scenarios, plus an
/// independent validation stream per scenario.
pub fn run_replication(
    dgp: &DgpSpec,
    scenarios: &[ScenarioSpec],
    seed: u64,
    rep: u64,
) -> Vec<Result<RepOutcome>> {
    let rep_seed = derive_seed(seed, rep);
    let primary = match generate(dgp, derive_seed(rep_seed, 0)) {
        Ok(p) => p,
        Err(e) => {
            let msg = e.to_string();
            return scenarios.iter().map(|_| Err(Error::Config(msg.clone()))).collect();
        }
    };
    let pi_hat = match estimate_pi(&primary) {
        Ok(p) => p,
        Err(e) => {
            let msg = e.to_string();
            return scenarios.iter().map(|_| Err(Error::Size(msg.clone()))).collect();
        }
    };
    scenarios
        .iter()
        .enumerate()
        .map(|(j, s)| run_scenario(dgp, &primary, pi_hat, s, derive_seed(rep_seed, 1 + j as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub regime: String,
    pub estimator: EstimatorKind,
    pub estimand: Estimand,
    pub reps: usize,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub mean_se: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCSummary {
    pub rows: Vec<SummaryRow>,
    /// Failed replications per scenario, in scenario order.
    pub failures: Vec<(String, usize)>,
    pub replications: usize,
    /// `outcomes[s][rep]`; `None` where the replication failed.
    pub outcomes: Vec<Vec<Option<RepOutcome>>>,
    pub truth: (f64, f64, f64),
}

impl MCSummary {
    pub fn row(&self, regime: &str, estimator: EstimatorKind, estimand: Estimand) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.regime == regime && r.estimator == estimator && r.estimand == estimand)
    }
}

/// Runs `replications` replications of every scenario on the current rayon
/// pool. The summary is reduced in replication order, so it is identical for
/// any worker count.
pub fn run_scenarios(
    dgp: &DgpSpec,
    scenarios: &[ScenarioSpec],
    replications: usize,
    seed: u64,
) -> Result<MCSummary> {
    dgp.validate()?;
    if replications < MIN_REPLICATIONS {
        return Err(Error::Config(format!(
            "at least {MIN_REPLICATIONS} replications are required, got {replications}"
        )));
    }
    if scenarios.is_empty() {
        return Err(Error::Config("no scenarios".into()));
    }
    for s in scenarios {
        s.validate()?;
    }
    let per_rep: Vec<Vec<Result<RepOutcome>>> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| run_replication(dgp, scenarios, seed, rep))
        .collect();
    let mut outcomes: Vec<Vec<Option<RepOutcome>>> = vec![Vec::with_capacity(replications); scenarios.len()];
    for rep in per_rep {
        for (s, r) in rep.into_iter().enumerate() {
            outcomes[s].push(r.ok());
        }
    }
    let truth = true_tau(dgp);
    let truths = [truth.0, truth.1, truth.2];
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (spec, outs) in scenarios.iter().zip(&outcomes) {
        let ok: Vec<&RepOutcome> = outs.iter().flatten().collect();
        failures.push((spec.name.clone(), outs.len() - ok.len()));
        for (a, kind) in EstimatorKind::ALL.into_iter().enumerate() {
            for (b, estimand) in Estimand::ALL.into_iter().enumerate() {
                let v: Vec<f64> = ok.iter().map(|o| o.value[a][b]).collect();
                let se: Vec<f64> = ok.iter().map(|o| o.se[a][b]).collect();
                let covered = ok
                    .iter()
                    .filter(|o| (o.value[a][b] - truths[b]).abs() <= crate::estimators::Z_975 * o.se[a][b])
                    .count();
                let mean = stats::mean(&v);
                rows.push(SummaryRow {
                    regime: spec.name.clone(),
                    estimator: kind,
                    estimand,
                    reps: v.len(),
                    mean,
                    bias: mean - truths[b],
                    sd: stats::sd(&v),
                    mean_se: stats::mean(&se),
                    coverage: if v.is_empty() { f64::NAN } else { covered as f64 / v.len() as f64 },
                });
            }
        }
    }
    Ok(MCSummary {
        rows,
        failures,
        replications,
        outcomes,
        truth,
    })
}

/// Validation-information sweep: `multipliers` (0 meaning no validation
/// sample) plus the oracle regime.
pub fn run_experiment1(dgp: &DgpSpec, multipliers: &[f64], replications: usize, seed: u64) -> Result<MCSummary> {
    run_scenarios(dgp, &experiment1_scenarios(multipliers), replications, seed)
}

/// Working-model misspecification scenarios.
pub fn run_experiment2(
    dgp: &DgpSpec,
    scenarios: &[ScenarioSpec],
    replications: usize,
    seed: u64,
) -> Result<MCSummary> {
    run_scenarios(dgp, scenarios, replications, seed)
}

/// Writes the summary table; `header` lines are emitted first, each
/// prefixed with `# `.
pub fn write_summary_csv<W: Write>(out: W, summary: &MCSummary, header: &[String]) -> Result<()> {
    let mut out = out;
    for h in header {
        writeln!(out, "# {h}").map_err(|e| Error::io("<csv output>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["regime", "estimator", "estimand", "reps", "mean", "bias", "sd", "mean_se", "coverage"])?;
    for r in &summary.rows {
        w.write_record([
            r.regime.clone(),
            r.estimator.as_str().to_string(),
            r.estimand.as_str().to_string(),
            r.reps.to_string(),
            fmt_sig12(r.mean),
            fmt_sig12(r.bias),
            fmt_sig12(r.sd),
            fmt_sig12(r.mean_se),
            fmt_sig12(r.coverage),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
