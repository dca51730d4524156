use serde::Serialize;

use super::influence::{influence_values, InfluenceValues, Which};
use super::point::{tau0_aug_value, tau1_aug_value, tau_trial_dr_pred, Predictions};
use super::shrinkage::{shrink_arms, shrink_combined, shrink_with_extra, ShrinkageDiagnostics};
use super::validation::{correct_same_sample, var_validation, ValidationVariance};
use super::{Estimand, Estimate, Method, TauPair};
use crate::data::Dataset;
use crate::error::Result;
use crate::nuisance::{LogisticModel, OutcomeModel};
use crate::shift::ShiftWeights;

/// How standard errors of the augmented estimators are computed.
#[derive(Debug, Clone, Copy)]
pub enum VarianceMode<'a> {
    /// `sqrt(Σψ²)/N`, treating `k` and `ρ` as known.
    Plugin,
    /// Shift models fitted on the estimation rows themselves; the augmented
    /// influence values carry the first-stage term.
    SameSample {
        k_model: &'a LogisticModel,
        rho_model: &'a LogisticModel,
    },
    /// Adds the first-stage term for shift models fitted on the independent
    /// sample `data`.
    Validation {
        data: &'a Dataset,
        k_model: &'a LogisticModel,
        rho_model: &'a LogisticModel,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisOptions<'a> {
    pub variance: VarianceMode<'a>,
    /// Shrink `τ` directly instead of differencing the shrunk arms.
    pub shrink_combined: bool,
}

impl Default for AnalysisOptions<'_> {
    fn default() -> Self {
        Self {
            variance: VarianceMode::Plugin,
            shrink_combined: false,
        }
    }
}

/// Estimates of one method for `τ₁`, `τ₀`, `τ`.
pub type ArmResults = [Estimate; 3];

/// Trial-only, augmented and shrinkage estimates on one dataset.
#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub trial: ArmResults,
    pub augmented: ArmResults,
    pub shrinkage: ArmResults,
    /// `None` for `τ` when it is formed from the shrunk arms.
    pub diagnostics: [Option<ShrinkageDiagnostics>; 3],
    #[serde(skip)]
    pub influence: InfluenceValues,
    #[serde(skip)]
    pub validation: Option<ValidationVariance>,
    pub clamped_weights: usize,
}

impl Analysis {
    pub fn get(&self, method: Method, estimand: Estimand) -> Option<&Estimate> {
        let set = match method {
            Method::TrialDr => &self.trial,
            Method::Augmented => &self.augmented,
            Method::Shrinkage => &self.shrinkage,
            Method::GoldStandard => return None,
        };
        set.iter().find(|e| e.estimand == estimand)
    }
}

/// Runs every estimator given fitted outcome models and evaluated weights.
pub fn analyze(
    ds: &Dataset,
    mu1: &OutcomeModel,
    mu0: &OutcomeModel,
    w: &ShiftWeights,
    pi_hat: f64,
    opts: &AnalysisOptions<'_>,
) -> Result<Analysis> {
    let pred = Predictions::new(ds, mu1, mu0)?;
    let trial = tau_trial_dr_pred(ds, &pred, pi_hat)?;
    let aug_at = TauPair::new(
        tau1_aug_value(ds, w, &pred.mu1, pi_hat)?,
        tau0_aug_value(ds, w, &pred.mu0, pi_hat)?,
    );
    let trial_at = TauPair::new(trial[0].value, trial[1].value);
    let mut iv = influence_values(ds, w, &pred, pi_hat, trial_at, aug_at)?;

    let validation = match opts.variance {
        VarianceMode::Plugin => None,
        VarianceMode::SameSample { k_model, rho_model } => {
            correct_same_sample(ds, &mut iv, &pred, w, k_model, rho_model)?;
            None
        }
        VarianceMode::Validation {
            data,
            k_model,
            rho_model,
        } => Some(var_validation(ds, &iv, &pred, w, data, k_model, rho_model)?),
    };
    let aug_se = |e: Estimand| match &validation {
        Some(v) => v.se(e),
        None => super::influence::var_plugin(&iv, e, Which::Augmented),
    };
    let extra_for = |e: Estimand| validation.as_ref().map_or(0.0, |v| v.extra_var(&v.gamma(e)));

    let augmented = [
        Estimate::new(Method::Augmented, Estimand::Tau1, aug_at.tau1, aug_se(Estimand::Tau1)),
        Estimate::new(Method::Augmented, Estimand::Tau0, aug_at.tau0, aug_se(Estimand::Tau0)),
        Estimate::new(
            Method::Augmented,
            Estimand::Tau,
            aug_at.tau1 - aug_at.tau0,
            aug_se(Estimand::Tau),
        ),
    ];

    let (s1, d1) = shrink_with_extra(&trial[0], &augmented[0], &iv, Estimand::Tau1, extra_for(Estimand::Tau1))?;
    let (s0, d0) = shrink_with_extra(&trial[1], &augmented[1], &iv, Estimand::Tau0, extra_for(Estimand::Tau0))?;
    let (s, d) = if opts.shrink_combined {
        let (s, d) = shrink_combined(&trial[2], &augmented[2], &iv, extra_for(Estimand::Tau))?;
        (s, Some(d))
    } else {
        let extra = validation
            .as_ref()
            .map_or(0.0, |v| v.extra_var(&v.gamma_blend(d1.lambda_n, d0.lambda_n)));
        (shrink_arms(&iv, (&s1, &d1), (&s0, &d0), extra)?, None)
    };

    Ok(Analysis {
        trial,
        augmented,
        shrinkage: [s1, s0, s],
        diagnostics: [Some(d1), Some(d0), d],
        influence: iv,
        validation,
        clamped_weights: w.clamped,
    })
}
