//! Variance of the augmented estimators when `k` and `ρ` were fitted on an
//! independent validation sample of size `m`.
//!
//! With `ξ = m / N`, `N·var(τ̂_t) ≈ E(ψ_t²) + ξ⁻¹·Γ_t var(φ) Γ_tᵀ`, where `Γ_t`
//! is the sensitivity of `E(ψ_t)` to the shift-model coefficients and `φ` is
//! the per-row influence function of their maximum-likelihood estimates.

use nalgebra::{DMatrix, DVector};

use super::influence::{InfluenceValues, Which};
use super::point::Predictions;
use super::Estimand;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::inverse_spd;
use crate::nuisance::LogisticModel;
use crate::shift::ShiftWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationVariance {
    /// `∂E(ψ₁)/∂α`.
    pub gamma1: DVector<f64>,
    /// `∂E(ψ₀)/∂α`.
    pub gamma0: DVector<f64>,
    /// `∂E(ψ₀)/∂β`.
    pub gamma_rho: DVector<f64>,
    /// Joint second moment of `φ = (φ_α, φ_β)`.
    pub phi_var: DMatrix<f64>,
    pub xi_hat: f64,
    pub n_primary: usize,
    pub m: usize,
    /// Plug-in `E(ψ²)` for `τ₁`, `τ₀`, `τ`.
    pub plugin: [f64; 3],
    /// Corrected `N·var` for `τ₁`, `τ₀`, `τ`.
    pub sigma2_val: [f64; 3],
}

fn index(e: Estimand) -> usize {
    match e {
        Estimand::Tau1 => 0,
        Estimand::Tau0 => 1,
        Estimand::Tau => 2,
    }
}

impl ValidationVariance {
    fn dims(&self) -> (usize, usize) {
        (self.gamma1.len(), self.gamma_rho.len())
    }

    /// Sensitivity of an estimand to the stacked `(α, β)`.
    pub fn gamma(&self, estimand: Estimand) -> DVector<f64> {
        let (pk, pr) = self.dims();
        let mut g = DVector::zeros(pk + pr);
        match estimand {
            Estimand::Tau1 => g.rows_mut(0, pk).copy_from(&self.gamma1),
            Estimand::Tau0 => {
                g.rows_mut(0, pk).copy_from(&self.gamma0);
                g.rows_mut(pk, pr).copy_from(&self.gamma_rho);
            }
            Estimand::Tau => {
                g.rows_mut(0, pk).copy_from(&(&self.gamma1 - &self.gamma0));
                g.rows_mut(pk, pr).copy_from(&(-&self.gamma_rho));
            }
        }
        g
    }

    /// Sensitivity of `τ₁⁽ˢ⁾ - τ₀⁽ˢ⁾` when arm `t` carries weight `λ_t` on
    /// the augmented estimator.
    pub fn gamma_blend(&self, lambda1: f64, lambda0: f64) -> DVector<f64> {
        let (pk, pr) = self.dims();
        let mut g = DVector::zeros(pk + pr);
        g.rows_mut(0, pk)
            .copy_from(&(&self.gamma1 * lambda1 - &self.gamma0 * lambda0));
        g.rows_mut(pk, pr).copy_from(&(&self.gamma_rho * -lambda0));
        g
    }

    /// First-stage variance contributed to the estimator, `gᵀ var(φ) g / m`.
    pub fn extra_var(&self, g: &DVector<f64>) -> f64 {
        (g.transpose() * &self.phi_var * g)[(0, 0)].max(0.0) / self.m as f64
    }

    pub fn se(&self, estimand: Estimand) -> f64 {
        (self.sigma2_val[index(estimand)] / self.n_primary as f64).sqrt()
    }
}

/// Assembles the corrected variances. `iv` must be centred at the augmented
/// estimates on `primary`; `w` are the weights of `k_model`, `rho_model` on
/// `primary`; both models were fitted on `validation`.
#[allow(clippy::too_many_arguments)]
pub fn var_validation(
    primary: &Dataset,
    iv: &InfluenceValues,
    pred: &Predictions,
    w: &ShiftWeights,
    validation: &Dataset,
    k_model: &LogisticModel,
    rho_model: &LogisticModel,
) -> Result<ValidationVariance> {
    if validation.is_empty() {
        return Err(Error::Size("validation sample is empty".into()));
    }
    if iv.len() != primary.len() || w.len() != primary.len() {
        return Err(Error::Dimension("influence values do not match primary data".into()));
    }
    let (g1, g0, gr) = sensitivities(primary, iv, pred, w, k_model, rho_model)?;
    let (_, phi_var) = score_influence(validation, k_model, rho_model)?;
    let n = primary.len() as f64;
    let mf = validation.len() as f64;
    let m = validation.len();

    let plugin = Estimand::ALL.map(|e| {
        let psi = iv.psi(Which::Augmented, e);
        crate::stats::sum(psi.iter().map(|v| v * v)) / n
    });
    let mut vv = ValidationVariance {
        gamma1: g1,
        gamma0: g0,
        gamma_rho: gr,
        phi_var,
        xi_hat: mf / n,
        n_primary: primary.len(),
        m,
        plugin,
        sigma2_val: plugin,
    };
    for e in Estimand::ALL {
        let g = vv.gamma(e);
        vv.sigma2_val[index(e)] = plugin[index(e)] + vv.extra_var(&g) * n;
    }
    Ok(vv)
}

/// `Γ₁`, `Γ₀` (w.r.t. `α`) and `Γ_ρ` (w.r.t. `β`) averaged over `primary`.
pub(crate) fn sensitivities(
    primary: &Dataset,
    iv: &InfluenceValues,
    pred: &Predictions,
    w: &ShiftWeights,
    k_model: &LogisticModel,
    rho_model: &LogisticModel,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    k_model.basis.check_dimension(primary.p())?;
    rho_model.basis.check_dimension(primary.p())?;
    let (pk, pr) = (k_model.basis.len(), rho_model.basis.len());
    let (kappa, pi) = (iv.kappa, iv.pi);
    let tau = iv.aug_at;
    let mut g1 = DVector::zeros(pk);
    let mut g0 = DVector::zeros(pk);
    let mut gr = DVector::zeros(pr);
    let mut dk = vec![0.0; pk];
    let mut dr = vec![0.0; pr];
    for (i, r) in primary.records().iter().enumerate() {
        k_model.basis.fill(&r.x, r.y, &mut dk);
        let dkdk = w.k[i] * (1.0 - w.k[i]) / kappa;
        let (a1, a0) = (dkdk * (pred.mu1[i] - tau.tau1), dkdk * (pred.mu0[i] - tau.tau0));
        for j in 0..pk {
            g1[j] += a1 * dk[j];
            g0[j] += a0 * dk[j];
        }
        if !r.is_treated() {
            let rho = w.rho_at(i)?;
            rho_model.basis.fill(&r.x, r.y, &mut dr);
            let c = rho * (1.0 - rho) * (r.y - pred.mu0[i]) / (kappa * (1.0 - pi));
            for j in 0..pr {
                gr[j] += c * dr[j];
            }
        }
    }
    let n = primary.len() as f64;
    Ok((g1 / n, g0 / n, gr / n))
}

/// Per-row influence `φ = (I_α⁻¹ s_α, I_β⁻¹ s_β)` of the two logistic fits
/// on `data`, and its second-moment matrix. `φ_β` is zero on treated rows.
pub(crate) fn score_influence(
    data: &Dataset,
    k_model: &LogisticModel,
    rho_model: &LogisticModel,
) -> Result<(Vec<DVector<f64>>, DMatrix<f64>)> {
    k_model.basis.check_dimension(data.p())?;
    rho_model.basis.check_dimension(data.p())?;
    let (pk, pr) = (k_model.basis.len(), rho_model.basis.len());
    let m = data.len();
    let mut dk = vec![0.0; pk];
    let mut dr = vec![0.0; pr];
    let mut design_k = crate::linalg::DesignMatrix::with_capacity(m, pk);
    let mut design_r = crate::linalg::DesignMatrix::with_capacity(m, pr);
    let mut hk = Vec::with_capacity(m);
    let mut hr = Vec::with_capacity(m);
    let mut rk = Vec::with_capacity(m);
    let mut rr = Vec::with_capacity(m);
    for r in data.records() {
        k_model.basis.fill(&r.x, r.y, &mut dk);
        design_k.push_row(&dk);
        let k = k_model.prob(&r.x, r.y);
        hk.push(k * (1.0 - k));
        rk.push(r.rf() - k);
        if r.is_treated() {
            dr.iter_mut().for_each(|v| *v = 0.0);
            hr.push(0.0);
            rr.push(0.0);
        } else {
            rho_model.basis.fill(&r.x, r.y, &mut dr);
            let rho = rho_model.prob(&r.x, r.y);
            hr.push(rho * (1.0 - rho));
            rr.push(r.rf() - rho);
        }
        design_r.push_row(&dr);
    }
    let mf = m as f64;
    let inv_k = inverse_spd(&(design_k.weighted_gram(&hk) / mf), "k information")?;
    let inv_r = inverse_spd(&(design_r.weighted_gram(&hr) / mf), "rho information")?;
    let mut phis = Vec::with_capacity(m);
    let mut phi_var = DMatrix::zeros(pk + pr, pk + pr);
    for i in 0..m {
        let sk = DVector::from_column_slice(design_k.row(i)) * rk[i];
        let sr = DVector::from_column_slice(design_r.row(i)) * rr[i];
        let mut phi = DVector::zeros(pk + pr);
        phi.rows_mut(0, pk).copy_from(&(&inv_k * sk));
        phi.rows_mut(pk, pr).copy_from(&(&inv_r * sr));
        phi_var.ger(1.0, &phi, &phi, 1.0);
        phis.push(phi);
    }
    phi_var /= mf;
    // exact symmetry for downstream quadratic forms
    phi_var = (&phi_var + phi_var.transpose()) * 0.5;
    Ok((phis, phi_var))
}

/// Adds the first-stage term to the augmented influence values when `k` and
/// `ρ` were fitted on the same rows: `ψ_t ← ψ_t + Γ_t φ`. The corrected
/// values are the influence function of `τ̂_t` with estimated shift models.
pub fn correct_same_sample(
    primary: &Dataset,
    iv: &mut InfluenceValues,
    pred: &Predictions,
    w: &ShiftWeights,
    k_model: &LogisticModel,
    rho_model: &LogisticModel,
) -> Result<()> {
    if iv.len() != primary.len() || w.len() != primary.len() {
        return Err(Error::Dimension("influence values do not match primary data".into()));
    }
    let (g1, g0, gr) = sensitivities(primary, iv, pred, w, k_model, rho_model)?;
    let (phis, _) = score_influence(primary, k_model, rho_model)?;
    let pk = g1.len();
    for (i, phi) in phis.iter().enumerate() {
        let pa = phi.rows(0, pk);
        let pb = phi.rows(pk, gr.len());
        iv.psi1[i] += g1.dot(&pa);
        iv.psi0[i] += g0.dot(&pa) + gr.dot(&pb);
    }
    Ok(())
}
