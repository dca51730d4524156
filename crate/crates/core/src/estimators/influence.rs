use std::borrow::Cow;

use super::point::{check_pi, check_trial, plugin_se, Predictions};
use super::{Estimand, TauPair};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::shift::ShiftWeights;

/// `ψ̃_t`: trial-only efficient influence values at `tau`.
pub(crate) fn trial_psi(ds: &Dataset, pred: &Predictions, pi: f64, arm: u8, tau: f64) -> Vec<f64> {
    let kappa = ds.kappa_hat();
    let mu = pred.arm(arm);
    let p_arm = if arm == 1 { pi } else { 1.0 - pi };
    ds.records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if !r.is_trial() {
                return 0.0;
            }
            let in_arm = f64::from(u8::from(r.t == arm));
            (in_arm * (r.y - mu[i]) / p_arm + mu[i] - tau) / kappa
        })
        .collect()
}

/// `ψ_t`: EC-augmented influence values at `tau`.
pub(crate) fn aug_psi(
    ds: &Dataset,
    w: &ShiftWeights,
    mu: &[f64],
    pi: f64,
    arm: u8,
    tau: f64,
) -> Result<Vec<f64>> {
    let kappa = ds.kappa_hat();
    ds.records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let resid = if arm == 1 {
                r.rf() * r.tf() * (r.y - mu[i]) / pi
            } else if r.is_treated() {
                0.0
            } else {
                w.rho_at(i)? * (r.y - mu[i]) / (1.0 - pi)
            };
            Ok((resid + w.k[i] * (mu[i] - tau)) / kappa)
        })
        .collect()
}

/// Which family of influence values to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    /// `ψ̃`, trial data only.
    Trial,
    /// `ψ`, trial plus external controls.
    Augmented,
}

/// Rowwise influence values of both estimator families.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceValues {
    pub psi1_trial: Vec<f64>,
    pub psi0_trial: Vec<f64>,
    pub psi1: Vec<f64>,
    pub psi0: Vec<f64>,
    pub kappa: f64,
    pub pi: f64,
    /// Arm means the trial-only values are centred at.
    pub trial_at: TauPair,
    /// Arm means the augmented values are centred at.
    pub aug_at: TauPair,
}

impl InfluenceValues {
    pub fn len(&self) -> usize {
        self.psi1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi1.is_empty()
    }

    /// Influence values for an estimand; `τ` uses the arm difference.
    pub fn psi(&self, which: Which, estimand: Estimand) -> Cow<'_, [f64]> {
        let (a, b) = match which {
            Which::Trial => (&self.psi1_trial, &self.psi0_trial),
            Which::Augmented => (&self.psi1, &self.psi0),
        };
        match estimand {
            Estimand::Tau1 => Cow::Borrowed(a),
            Estimand::Tau0 => Cow::Borrowed(b),
            Estimand::Tau => Cow::Owned(a.iter().zip(b).map(|(x, y)| x - y).collect()),
        }
    }
}

/// Evaluates `ψ̃₁, ψ̃₀` at `trial` and `ψ₁, ψ₀` at `aug`.
pub fn influence_values(
    ds: &Dataset,
    w: &ShiftWeights,
    pred: &Predictions,
    pi_hat: f64,
    trial: TauPair,
    aug: TauPair,
) -> Result<InfluenceValues> {
    check_pi(pi_hat)?;
    check_trial(ds)?;
    if w.len() != ds.len() || pred.mu1.len() != ds.len() || pred.mu0.len() != ds.len() {
        return Err(Error::Dimension("weights or predictions do not match dataset".into()));
    }
    Ok(InfluenceValues {
        psi1_trial: trial_psi(ds, pred, pi_hat, 1, trial.tau1),
        psi0_trial: trial_psi(ds, pred, pi_hat, 0, trial.tau0),
        psi1: aug_psi(ds, w, &pred.mu1, pi_hat, 1, aug.tau1)?,
        psi0: aug_psi(ds, w, &pred.mu0, pi_hat, 0, aug.tau0)?,
        kappa: ds.kappa_hat(),
        pi: pi_hat,
        trial_at: trial,
        aug_at: aug,
    })
}

/// Plug-in standard error `sqrt(Σψ²) / N`.
pub fn var_plugin(iv: &InfluenceValues, estimand: Estimand, which: Which) -> f64 {
    plugin_se(&iv.psi(which, estimand))
}

/// One row of the calibration decomposition
/// `ψ₁ - ψ̃₁ = c₁·g_k` and `ψ₀ - ψ̃₀ = c₂·g_k + c₃·g_ρ`, where
/// `g_k = (r/κ)a - (1-r)/(1-κ)` and
/// `g_ρ = r(1-t)ab/(κ(1-π)) - (1-r)/(1-κ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub g_k: f64,
    pub g_rho: f64,
}

/// Coefficients and calibration terms for every row, with all influence
/// values centred at `tau`.
pub fn calibration_terms(
    ds: &Dataset,
    w: &ShiftWeights,
    pred: &Predictions,
    pi_hat: f64,
    tau: TauPair,
) -> Result<Vec<CalibrationRow>> {
    check_pi(pi_hat)?;
    check_trial(ds)?;
    let kappa = ds.kappa_hat();
    if kappa >= 1.0 {
        return Err(Error::Domain("calibration terms need external rows".into()));
    }
    let scale = (1.0 - kappa) / kappa;
    ds.records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let k = w.k[i];
            let a = crate::shift::a_from_k(k, kappa)?;
            let ec = (1.0 - r.rf()) / (1.0 - kappa);
            let (c3, g_rho) = if r.is_treated() {
                (0.0, 0.0)
            } else {
                let rho = w.rho_at(i)?;
                let ab = crate::shift::ab_from_rho(rho, kappa, pi_hat)?;
                (
                    -scale * rho * (r.y - pred.mu0[i]) / (1.0 - pi_hat),
                    r.rf() * ab / (kappa * (1.0 - pi_hat)) - ec,
                )
            };
            Ok(CalibrationRow {
                c1: -scale * k * (pred.mu1[i] - tau.tau1),
                c2: -scale * k * (pred.mu0[i] - tau.tau0),
                c3,
                g_k: r.rf() * a / kappa - ec,
                g_rho,
            })
        })
        .collect()
}
