//! Working models: trial membership `k(x)`, untreated trial membership
//! `ρ(x, y)`, arm-specific outcome regressions `μ_t(x)`, and the trial
//! treatment probability.

pub mod basis;
pub mod logistic;
pub mod outcome;

use serde::{Deserialize, Serialize};

pub use basis::{FeatureBasis, Term};
pub use logistic::{expit, fit_logistic, logit, LogisticFit, LogisticModel};
pub use outcome::{fit_outcome, OutcomeModel, Population};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;

/// Rows used by a logistic working model, with their design and labels.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    pub design: DesignMatrix,
    pub labels: Vec<f64>,
    /// Index into the dataset for each design row.
    pub rows: Vec<usize>,
}

fn problem<'a>(
    ds: &'a Dataset,
    basis: &FeatureBasis,
    keep: impl Fn(&Record) -> bool,
) -> LogisticProblem {
    let mut design = DesignMatrix::with_capacity(ds.len(), basis.len());
    let mut labels = Vec::with_capacity(ds.len());
    let mut rows = Vec::with_capacity(ds.len());
    let mut buf = vec![0.0; basis.len()];
    for (i, r) in ds.records().iter().enumerate().filter(|(_, r)| keep(r)) {
        basis.fill(&r.x, r.y, &mut buf);
        design.push_row(&buf);
        labels.push(r.rf());
        rows.push(i);
    }
    LogisticProblem {
        design,
        labels,
        rows,
    }
}

/// Design for `k`: every row, label `r`.
pub fn k_problem(ds: &Dataset, basis: &FeatureBasis) -> Result<LogisticProblem> {
    if basis.has_outcome() {
        return Err(Error::Usage("the k model cannot use the outcome".into()));
    }
    basis.check_dimension(ds.p())?;
    Ok(problem(ds, basis, |_| true))
}

/// Design for `ρ`: untreated rows only, label `r`. Bases without the outcome
/// term are accepted here (a constant `ρ` is a valid working model); the
/// configuration layer insists on it.
pub fn rho_problem(ds: &Dataset, basis: &FeatureBasis) -> Result<LogisticProblem> {
    basis.check_dimension(ds.p())?;
    Ok(problem(ds, basis, |r| !r.is_treated()))
}

fn fit_problem(p: &LogisticProblem, basis: &FeatureBasis) -> Result<LogisticModel> {
    let weights = vec![1.0; p.labels.len()];
    let fit = fit_logistic(&p.design, &p.labels, &weights)?;
    Ok(LogisticModel::from_fit(basis.clone(), fit))
}

/// Logistic regression of `r` on `design_row(x)` over all rows.
pub fn fit_k(ds: &Dataset, basis: &FeatureBasis) -> Result<LogisticModel> {
    fit_problem(&k_problem(ds, basis)?, basis)
}

/// Logistic regression of `r` on `design_row(x, y)` over untreated rows.
pub fn fit_rho(ds: &Dataset, basis: &FeatureBasis) -> Result<LogisticModel> {
    let p = rho_problem(ds, basis)?;
    if !p.labels.iter().any(|&l| l == 0.0) || !p.labels.iter().any(|&l| l == 1.0) {
        return Err(Error::Size(
            "untreated rows must include both trial and external controls".into(),
        ));
    }
    fit_problem(&p, basis)
}

/// Share of treated rows among trial rows.
pub fn estimate_pi(ds: &Dataset) -> Result<f64> {
    if ds.n() == 0 {
        return Err(Error::Size("no trial rows".into()));
    }
    let treated = ds
        .records()
        .iter()
        .filter(|r| r.is_trial() && r.is_treated())
        .count();
    Ok(treated as f64 / ds.n() as f64)
}

/// Bases for the four working models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBases {
    pub k: FeatureBasis,
    pub rho: FeatureBasis,
    pub mu: FeatureBasis,
}

impl ModelBases {
    /// Linear-in-covariates defaults; `ρ` adds the outcome.
    pub fn linear(p: usize) -> Self {
        let k = FeatureBasis::linear(p);
        let rho = k.with_outcome().expect("linear basis has no outcome term");
        Self {
            k,
            rho,
            mu: FeatureBasis::linear(p),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.k.has_outcome() {
            return Err(Error::Config("k basis must not contain `outcome`".into()));
        }
        if !self.rho.has_outcome() {
            return Err(Error::Config("rho basis must contain `outcome`".into()));
        }
        if self.mu.has_outcome() {
            return Err(Error::Config("mu basis must not contain `outcome`".into()));
        }
        self.k.check_dimension(p)?;
        self.rho.check_dimension(p)?;
        self.mu.check_dimension(p)
    }
}

/// A complete set of fitted working models, serialisable for reuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nuisances {
    pub k: LogisticModel,
    pub rho: LogisticModel,
    pub mu0: OutcomeModel,
    pub mu1: OutcomeModel,
}

impl Nuisances {
    /// `μ_t` on the trial rows of `outcome_data`; `k`, `ρ` on `shift_data`.
    pub fn fit(outcome_data: &Dataset, shift_data: &Dataset, bases: &ModelBases) -> Result<Self> {
        Ok(Self {
            k: fit_k(shift_data, &bases.k)?,
            rho: fit_rho(shift_data, &bases.rho)?,
            mu0: fit_outcome(outcome_data, 0, &bases.mu, Population::TrialOnly)?,
            mu1: fit_outcome(outcome_data, 1, &bases.mu, Population::TrialOnly)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(r: u8, t: u8, x: f64, y: f64) -> Record {
        Record::new(r, t, vec![x], y)
    }

    #[test]
    fn pi_counts_trial_rows() {
        let ds = Dataset::new(
            vec![
                rec(1, 1, 0.0, 0.0),
                rec(1, 0, 0.0, 0.0),
                rec(1, 1, 0.0, 0.0),
                rec(1, 0, 0.0, 0.0),
                rec(0, 0, 0.0, 0.0),
            ],
            1,
        )
        .unwrap();
        assert_eq!(estimate_pi(&ds).unwrap(), 0.5);
    }

    #[test]
    fn pi_all_treated() {
        let ds = Dataset::new(vec![rec(1, 1, 0.0, 0.0), rec(1, 1, 1.0, 0.0)], 1).unwrap();
        assert_eq!(estimate_pi(&ds).unwrap(), 1.0);
        assert!(matches!(estimate_pi(&Dataset::empty(1)), Err(Error::Size(_))));
    }

    #[test]
    fn k_intercept_matches_kappa() {
        let mut recs = Vec::new();
        for i in 0..30 {
            recs.push(rec(1, (i % 2) as u8, i as f64 / 10.0, 0.0));
        }
        for i in 0..70 {
            recs.push(rec(0, 0, i as f64 / 10.0, 0.0));
        }
        let ds = Dataset::new(recs, 1).unwrap();
        let m = fit_k(&ds, &FeatureBasis::linear(0)).unwrap();
        assert!((m.coef[0] - logit(0.3)).abs() < 1e-10);
    }

    #[test]
    fn k_rejects_outcome_term() {
        let ds = Dataset::new(vec![rec(1, 0, 0.0, 0.0), rec(0, 0, 1.0, 0.0)], 1).unwrap();
        let b = FeatureBasis::new(vec![Term::Intercept, Term::Outcome]).unwrap();
        assert!(matches!(fit_k(&ds, &b), Err(Error::Usage(_))));
    }

    #[test]
    fn rho_uses_untreated_rows_only() {
        let ds = Dataset::new(
            vec![
                rec(1, 1, 0.0, 5.0),
                rec(1, 1, 0.0, 6.0),
                rec(1, 0, 0.0, 1.0),
                rec(0, 0, 0.0, 1.0),
                rec(0, 0, 0.0, 2.0),
                rec(0, 0, 0.0, 1.5),
            ],
            1,
        )
        .unwrap();
        let b = FeatureBasis::new(vec![Term::Intercept, Term::Outcome]).unwrap();
        let p = rho_problem(&ds, &b).unwrap();
        assert_eq!(p.rows, vec![2, 3, 4, 5]);
    }

    #[test]
    fn rho_intercept_only_is_logit_of_trial_share() {
        let ds = Dataset::new(
            vec![
                rec(1, 1, 0.0, 9.0),
                rec(1, 0, 0.0, 1.0),
                rec(1, 0, 1.0, 2.0),
                rec(0, 0, 0.0, 1.0),
                rec(0, 0, 1.0, 2.0),
                rec(0, 0, 2.0, 1.5),
            ],
            1,
        )
        .unwrap();
        let m = fit_rho(&ds, &FeatureBasis::linear(0)).unwrap();
        assert!((m.coef[0] - logit(0.4)).abs() < 1e-10);
    }
}
