use serde::{Deserialize, Serialize};

use super::influence::{InfluenceValues, Which};
use super::{Estimand, Estimate, Method};
use crate::error::{Error, Result};
use crate::stats::Neumaier;

/// Below this, `τ̂ - τ̃` is treated as degenerate and `λ* = 0`.
const DEGENERATE_VAR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageDiagnostics {
    pub lambda_star: f64,
    pub delta: f64,
    pub lambda_n: f64,
    pub var_diff: f64,
    pub cov_term: f64,
    pub sigma2: f64,
}

/// Shrinks `tau_hat` toward `tau_tilde` for one estimand with plug-in
/// moments from `iv`.
pub fn shrink(
    tau_tilde: &Estimate,
    tau_hat: &Estimate,
    iv: &InfluenceValues,
    estimand: Estimand,
) -> Result<(Estimate, ShrinkageDiagnostics)> {
    shrink_with_extra(tau_tilde, tau_hat, iv, estimand, 0.0)
}

/// As [`shrink`], with `extra` added to the variance of `τ̂` (and hence of
/// `τ̂ - τ̃`). This carries the first-stage term from an independent
/// validation sample, which `τ̃` does not depend on.
pub fn shrink_with_extra(
    tau_tilde: &Estimate,
    tau_hat: &Estimate,
    iv: &InfluenceValues,
    estimand: Estimand,
    extra: f64,
) -> Result<(Estimate, ShrinkageDiagnostics)> {
    if tau_tilde.estimand != estimand || tau_hat.estimand != estimand {
        return Err(Error::Usage(format!(
            "shrinkage for {estimand} given {} and {} estimates",
            tau_tilde.estimand, tau_hat.estimand
        )));
    }
    if !(extra >= 0.0 && extra.is_finite()) {
        return Err(Error::Domain(format!("extra variance {extra} must be finite and >= 0")));
    }
    let pt = iv.psi(Which::Trial, estimand);
    let ph = iv.psi(Which::Augmented, estimand);
    let n2 = (iv.len() as f64).powi(2);
    let (mut dd, mut dt, mut tt) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
    for (&a, &b) in pt.iter().zip(ph.iter()) {
        let d = b - a;
        dd.add(d * d);
        dt.add(d * a);
        tt.add(a * a);
    }
    let var_diff = dd.total() / n2 + extra;
    let cov_term = dt.total() / n2;
    let var_trial = tt.total() / n2;

    let diff = tau_hat.value - tau_tilde.value;
    let (lambda_star, delta, sigma2) = if var_diff < DEGENERATE_VAR {
        (0.0, 1.0, var_trial)
    } else {
        // equals {var(τ̃)var(τ̂) - cov(τ̂,τ̃)²} / var(τ̂ - τ̃)
        let s2 = var_trial - cov_term * cov_term / var_diff;
        (-cov_term / var_diff, var_diff / (var_diff + diff.powi(4)), s2)
    };
    let lambda_n = delta * lambda_star;
    let value = tau_tilde.value + lambda_n * diff;
    let se = sigma2.min(var_trial).max(0.0).sqrt();
    Ok((
        Estimate::new(Method::Shrinkage, estimand, value, se),
        ShrinkageDiagnostics {
            lambda_star,
            delta,
            lambda_n,
            var_diff,
            cov_term,
            sigma2,
        },
    ))
}

/// Single shrinkage estimator for `τ` built from the differenced influence
/// values.
pub fn shrink_combined(
    tau_tilde: &Estimate,
    tau_hat: &Estimate,
    iv: &InfluenceValues,
    extra: f64,
) -> Result<(Estimate, ShrinkageDiagnostics)> {
    shrink_with_extra(tau_tilde, tau_hat, iv, Estimand::Tau, extra)
}

/// `τ⁽ˢ⁾ = τ₁⁽ˢ⁾ - τ₀⁽ˢ⁾` from separately shrunk arms. The standard error uses
/// the influence values of the blended arms at their realised `λ`s,
/// capped by the trial-only variance of `τ̃`. `extra` is the first-stage
/// variance of the blend.
pub fn shrink_arms(
    iv: &InfluenceValues,
    arm1: (&Estimate, &ShrinkageDiagnostics),
    arm0: (&Estimate, &ShrinkageDiagnostics),
    extra: f64,
) -> Result<Estimate> {
    if arm1.0.estimand != Estimand::Tau1 || arm0.0.estimand != Estimand::Tau0 {
        return Err(Error::Usage("shrink_arms needs tau1 and tau0 shrinkage estimates".into()));
    }
    let (l1, l0) = (arm1.1.lambda_n, arm0.1.lambda_n);
    let n2 = (iv.len() as f64).powi(2);
    let (mut blend, mut trial) = (Neumaier::default(), Neumaier::default());
    for i in 0..iv.len() {
        let t = iv.psi1_trial[i] - iv.psi0_trial[i];
        let b = t + l1 * (iv.psi1[i] - iv.psi1_trial[i]) - l0 * (iv.psi0[i] - iv.psi0_trial[i]);
        blend.add(b * b);
        trial.add(t * t);
    }
    let var = blend.total() / n2 + extra.max(0.0);
    let se = var.min(trial.total() / n2).sqrt();
    Ok(Estimate::new(
        Method::Shrinkage,
        Estimand::Tau,
        arm1.0.value - arm0.0.value,
        se,
    ))
}
