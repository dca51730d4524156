//! Point estimators, influence values and standard errors for the
//! trial-population arm means `τ₁ = E(Y₁ | R=1)`, `τ₀ = E(Y₀ | R=1)` and
//! their difference `τ`.

pub mod bootstrap;
pub mod influence;
pub mod pipeline;
pub mod point;
pub mod shrinkage;
pub mod validation;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_se, stratified_resample, BootstrapResult, MAX_REDRAWS};
pub use influence::{calibration_terms, influence_values, var_plugin, CalibrationRow, InfluenceValues, Which};
pub use pipeline::{analyze, Analysis, AnalysisOptions, ArmResults, VarianceMode};
pub use point::{tau0_aug, tau1_aug, tau_gold, tau_trial_dr, Predictions};
pub use shrinkage::{shrink, shrink_arms, shrink_combined, shrink_with_extra, ShrinkageDiagnostics};
pub use validation::{correct_same_sample, var_validation, ValidationVariance};

/// Two-sided 95% normal quantile.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Tau1,
    Tau0,
    Tau,
}

impl Estimand {
    pub const ALL: [Estimand; 3] = [Estimand::Tau1, Estimand::Tau0, Estimand::Tau];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimand::Tau1 => "tau1",
            Estimand::Tau0 => "tau0",
            Estimand::Tau => "tau",
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GoldStandard,
    TrialDr,
    Augmented,
    Shrinkage,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::GoldStandard => "gold_standard",
            Method::TrialDr => "trial_dr",
            Method::Augmented => "augmented",
            Method::Shrinkage => "shrinkage",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub method: Method,
    pub estimand: Estimand,
    pub value: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

impl Estimate {
    pub fn new(method: Method, estimand: Estimand, value: f64, se: f64) -> Self {
        Self {
            method,
            estimand,
            value,
            se,
            ci: (value - Z_975 * se, value + Z_975 * se),
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci.0 <= truth && truth <= self.ci.1
    }
}

/// A `(τ₁, τ₀)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauPair {
    pub tau1: f64,
    pub tau0: f64,
}

impl TauPair {
    pub fn new(tau1: f64, tau0: f64) -> Self {
        Self { tau1, tau0 }
    }

    pub fn get(&self, arm: u8) -> f64 {
        if arm == 1 {
            self.tau1
        } else {
            self.tau0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_is_symmetric() {
        let e = Estimate::new(Method::TrialDr, Estimand::Tau, 1.0, 0.5);
        assert_eq!(e.ci, (1.0 - 0.979982, 1.0 + 0.979982));
        assert!(e.covers(1.9) && !e.covers(2.0));
    }

    #[test]
    fn names_serialize_snake_case() {
        let s = serde_json::to_string(&(Method::GoldStandard, Estimand::Tau0)).unwrap();
        assert_eq!(s, r#"["gold_standard","tau0"]"#);
    }
}
