use super::influence::{aug_psi, trial_psi};
use super::{Estimate, Estimand, Method};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::OutcomeModel;
use crate::shift::ShiftWeights;
use crate::stats::{self, Neumaier};

/// Outcome-model predictions `μ̂₁(xᵢ)`, `μ̂₀(xᵢ)` for every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub mu1: Vec<f64>,
    pub mu0: Vec<f64>,
}

impl Predictions {
    pub fn new(ds: &Dataset, mu1: &OutcomeModel, mu0: &OutcomeModel) -> Result<Self> {
        mu1.basis.check_dimension(ds.p())?;
        mu0.basis.check_dimension(ds.p())?;
        Ok(Self {
            mu1: ds.records().iter().map(|r| mu1.predict(&r.x)).collect(),
            mu0: ds.records().iter().map(|r| mu0.predict(&r.x)).collect(),
        })
    }

    pub fn arm(&self, arm: u8) -> &[f64] {
        if arm == 1 {
            &self.mu1
        } else {
            &self.mu0
        }
    }
}

pub(crate) fn check_pi(pi: f64) -> Result<()> {
    if pi > 0.0 && pi < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("treatment probability {pi} must lie in (0, 1)")))
    }
}

pub(crate) fn check_trial(ds: &Dataset) -> Result<()> {
    if ds.n() == 0 {
        Err(Error::Size("no trial rows".into()))
    } else {
        Ok(())
    }
}

pub(crate) fn plugin_se(psi: &[f64]) -> f64 {
    stats::sum(psi.iter().map(|v| v * v)).sqrt() / psi.len() as f64
}

fn difference_se(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    plugin_se(&d)
}

/// Unadjusted treated and control means over trial rows.
pub fn tau_gold(ds: &Dataset) -> Result<[Estimate; 3]> {
    let arm = |t: u8| -> Result<(f64, f64)> {
        let y: Vec<f64> = ds
            .records()
            .iter()
            .filter(|r| r.is_trial() && r.t == t)
            .map(|r| r.y)
            .collect();
        if y.is_empty() {
            return Err(Error::Size(format!("no trial rows with t={t}")));
        }
        Ok((stats::mean(&y), stats::sd(&y) / (y.len() as f64).sqrt()))
    };
    let (m1, s1) = arm(1)?;
    let (m0, s0) = arm(0)?;
    Ok([
        Estimate::new(Method::GoldStandard, Estimand::Tau1, m1, s1),
        Estimate::new(Method::GoldStandard, Estimand::Tau0, m0, s0),
        Estimate::new(Method::GoldStandard, Estimand::Tau, m1 - m0, s1.hypot(s0)),
    ])
}

fn trial_dr_values(ds: &Dataset, pred: &Predictions, pi: f64) -> (f64, f64) {
    let (mut s1, mut s0) = (Neumaier::default(), Neumaier::default());
    for (i, r) in ds.records().iter().enumerate().filter(|(_, r)| r.is_trial()) {
        s1.add(r.tf() * (r.y - pred.mu1[i]) / pi + pred.mu1[i]);
        s0.add((1.0 - r.tf()) * (r.y - pred.mu0[i]) / (1.0 - pi) + pred.mu0[i]);
    }
    let n = ds.n() as f64;
    (s1.total() / n, s0.total() / n)
}

/// Trial-only doubly robust arm means with plug-in standard errors.
pub fn tau_trial_dr(
    ds: &Dataset,
    mu1: &OutcomeModel,
    mu0: &OutcomeModel,
    pi_hat: f64,
) -> Result<[Estimate; 3]> {
    let pred = Predictions::new(ds, mu1, mu0)?;
    tau_trial_dr_pred(ds, &pred, pi_hat)
}

pub(crate) fn tau_trial_dr_pred(ds: &Dataset, pred: &Predictions, pi: f64) -> Result<[Estimate; 3]> {
    check_pi(pi)?;
    check_trial(ds)?;
    let (t1, t0) = trial_dr_values(ds, pred, pi);
    let p1 = trial_psi(ds, pred, pi, 1, t1);
    let p0 = trial_psi(ds, pred, pi, 0, t0);
    Ok([
        Estimate::new(Method::TrialDr, Estimand::Tau1, t1, plugin_se(&p1)),
        Estimate::new(Method::TrialDr, Estimand::Tau0, t0, plugin_se(&p0)),
        Estimate::new(Method::TrialDr, Estimand::Tau, t1 - t0, difference_se(&p1, &p0)),
    ])
}

fn weight_total(w: &ShiftWeights) -> Result<f64> {
    let total = stats::sum(w.k.iter().copied());
    if total > 0.0 {
        Ok(total)
    } else {
        Err(Error::Domain("sum of k weights is zero".into()))
    }
}

pub(crate) fn tau1_aug_value(ds: &Dataset, w: &ShiftWeights, mu1: &[f64], pi: f64) -> Result<f64> {
    let mut acc = Neumaier::default();
    for (i, r) in ds.records().iter().enumerate() {
        acc.add(r.rf() * r.tf() * (r.y - mu1[i]) / pi + w.k[i] * mu1[i]);
    }
    Ok(acc.total() / weight_total(w)?)
}

pub(crate) fn tau0_aug_value(ds: &Dataset, w: &ShiftWeights, mu0: &[f64], pi: f64) -> Result<f64> {
    let mut acc = Neumaier::default();
    for (i, r) in ds.records().iter().enumerate() {
        if !r.is_treated() {
            acc.add(w.rho_at(i)? * (r.y - mu0[i]) / (1.0 - pi));
        }
        acc.add(w.k[i] * mu0[i]);
    }
    Ok(acc.total() / weight_total(w)?)
}

fn check_weights(ds: &Dataset, w: &ShiftWeights) -> Result<()> {
    if w.len() != ds.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} rows",
            w.len(),
            ds.len()
        )));
    }
    Ok(())
}

/// EC-augmented estimate of `τ₁`, solving the augmented estimating equation
/// for the treated arm. The standard error is the plug-in one.
pub fn tau1_aug(ds: &Dataset, w: &ShiftWeights, mu1: &OutcomeModel, pi_hat: f64) -> Result<Estimate> {
    check_pi(pi_hat)?;
    check_trial(ds)?;
    check_weights(ds, w)?;
    mu1.basis.check_dimension(ds.p())?;
    let m: Vec<f64> = ds.records().iter().map(|r| mu1.predict(&r.x)).collect();
    let v = tau1_aug_value(ds, w, &m, pi_hat)?;
    let psi = aug_psi(ds, w, &m, pi_hat, 1, v)?;
    Ok(Estimate::new(Method::Augmented, Estimand::Tau1, v, plugin_se(&psi)))
}

/// EC-augmented estimate of `τ₀`; untreated residuals from both sources
/// enter with weight `ρ̂`.
pub fn tau0_aug(ds: &Dataset, w: &ShiftWeights, mu0: &OutcomeModel, pi_hat: f64) -> Result<Estimate> {
    check_pi(pi_hat)?;
    check_trial(ds)?;
    check_weights(ds, w)?;
    mu0.basis.check_dimension(ds.p())?;
    let m: Vec<f64> = ds.records().iter().map(|r| mu0.predict(&r.x)).collect();
    let v = tau0_aug_value(ds, w, &m, pi_hat)?;
    let psi = aug_psi(ds, w, &m, pi_hat, 0, v)?;
    Ok(Estimate::new(Method::Augmented, Estimand::Tau0, v, plugin_se(&psi)))
}
