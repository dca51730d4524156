use serde::{Deserialize, Serialize};

use super::basis::FeatureBasis;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, DesignMatrix};

/// Which rows an outcome regression is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// Trial rows with the given arm (the conditional mean in the trial).
    #[default]
    TrialOnly,
    /// All rows with the given arm, trial and external.
    Pooled,
}

/// Least-squares working model for `E(Y | x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub arm: u8,
    pub basis: FeatureBasis,
    pub coef: Vec<f64>,
}

impl OutcomeModel {
    pub fn from_coef(arm: u8, basis: FeatureBasis, coef: Vec<f64>) -> Result<Self> {
        if basis.has_outcome() {
            return Err(Error::Usage("outcome model basis cannot contain the outcome".into()));
        }
        if coef.len() != basis.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for a basis of {} terms",
                coef.len(),
                basis.len()
            )));
        }
        Ok(Self { arm, basis, coef })
    }

    /// Model that predicts `c` everywhere.
    pub fn constant(arm: u8, c: f64) -> Self {
        Self {
            arm,
            basis: FeatureBasis::linear(0),
            coef: vec![c],
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.basis.dot(&self.coef, x, f64::NAN)
    }
}

/// Ordinary least squares of `y` on `design_row(x)` over the selected rows.
pub fn fit_outcome(
    ds: &Dataset,
    arm: u8,
    basis: &FeatureBasis,
    population: Population,
) -> Result<OutcomeModel> {
    if basis.has_outcome() {
        return Err(Error::Usage("outcome model basis cannot contain the outcome".into()));
    }
    basis.check_dimension(ds.p())?;
    let rows: Vec<_> = ds
        .records()
        .iter()
        .filter(|r| r.t == arm && (population == Population::Pooled || r.is_trial()))
        .collect();
    if rows.is_empty() {
        return Err(Error::Size(format!("no rows with t={arm} to fit the outcome model")));
    }
    if rows.len() < basis.len() {
        return Err(Error::Size(format!(
            "{} rows for {} outcome-model terms",
            rows.len(),
            basis.len()
        )));
    }
    let mut x = DesignMatrix::with_capacity(rows.len(), basis.len());
    let mut buf = vec![0.0; basis.len()];
    let mut y = Vec::with_capacity(rows.len());
    for r in &rows {
        basis.fill(&r.x, f64::NAN, &mut buf);
        x.push_row(&buf);
        y.push(r.y);
    }
    let ones = vec![1.0; rows.len()];
    let gram = x.weighted_gram(&ones);
    let rhs = x.weighted_sum(&ones, &y);
    let coef = solve_spd(&gram, &rhs, "outcome normal equations")?;
    Ok(OutcomeModel {
        arm,
        basis: basis.clone(),
        coef: coef.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use crate::nuisance::basis::Term;

    #[test]
    fn two_points_interpolate() {
        let ds = Dataset::new(
            vec![
                Record::new(1, 0, vec![0.0], 1.0),
                Record::new(1, 0, vec![1.0], 3.0),
            ],
            1,
        )
        .unwrap();
        let m = fit_outcome(&ds, 0, &FeatureBasis::linear(1), Population::TrialOnly).unwrap();
        assert!((m.coef[0] - 1.0).abs() < 1e-12);
        assert!((m.coef[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_outcome_gives_flat_fit() {
        let recs = (0..6)
            .map(|i| Record::new(1, 1, vec![i as f64, (i * i) as f64], 4.5))
            .collect();
        let ds = Dataset::new(recs, 2).unwrap();
        let m = fit_outcome(&ds, 1, &FeatureBasis::linear(2), Population::TrialOnly).unwrap();
        assert!((m.coef[0] - 4.5).abs() < 1e-9);
        assert!(m.coef[1].abs() < 1e-9 && m.coef[2].abs() < 1e-9);
    }

    #[test]
    fn trial_only_ignores_external_rows() {
        let ds = Dataset::new(
            vec![
                Record::new(1, 0, vec![0.0], 1.0),
                Record::new(1, 0, vec![1.0], 3.0),
                Record::new(0, 0, vec![1.0], 100.0),
            ],
            1,
        )
        .unwrap();
        let trial = fit_outcome(&ds, 0, &FeatureBasis::linear(1), Population::TrialOnly).unwrap();
        let pooled = fit_outcome(&ds, 0, &FeatureBasis::linear(1), Population::Pooled).unwrap();
        assert!((trial.predict(&[1.0]) - 3.0).abs() < 1e-12);
        assert!(pooled.predict(&[1.0]) > 3.0);
    }

    #[test]
    fn empty_arm_is_size_error() {
        let ds = Dataset::new(vec![Record::new(1, 0, vec![0.0], 1.0)], 1).unwrap();
        assert!(matches!(
            fit_outcome(&ds, 1, &FeatureBasis::linear(1), Population::TrialOnly),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn rank_deficiency_is_singular() {
        let ds = Dataset::new(
            (0..4).map(|_| Record::new(1, 0, vec![2.0], 1.0)).collect(),
            1,
        )
        .unwrap();
        assert!(matches!(
            fit_outcome(&ds, 0, &FeatureBasis::linear(1), Population::TrialOnly),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn outcome_term_rejected() {
        let ds = Dataset::new(vec![Record::new(1, 0, vec![0.0], 1.0)], 1).unwrap();
        let b = FeatureBasis::new(vec![Term::Intercept, Term::Outcome]).unwrap();
        assert!(matches!(
            fit_outcome(&ds, 0, &b, Population::TrialOnly),
            Err(Error::Usage(_))
        ));
    }
}
