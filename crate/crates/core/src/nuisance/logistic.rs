//! Weighted logistic regression by iteratively reweighted least squares.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::basis::FeatureBasis;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, DesignMatrix};

pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const STEP_TOLERANCE: f64 = 1e-10;
const COEF_NORM_LIMIT: f64 = 1e6;
const MAX_HALVINGS: usize = 60;
/// Mean negative log-likelihood below which the fit is treated as separated.
const PERFECT_FIT: f64 = 1e-6;

#[inline]
pub fn expit(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + e^u)` without overflow.
#[inline]
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Raw output of [`fit_logistic`], before a basis is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after each accepted iterate, starting at zero coefficients.
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub basis: FeatureBasis,
    pub coef: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    /// A model with fixed coefficients (oracle or user-supplied).
    pub fn from_coef(basis: FeatureBasis, coef: Vec<f64>) -> Result<Self> {
        if coef.len() != basis.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for a basis of {} terms",
                coef.len(),
                basis.len()
            )));
        }
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite coefficient".into()));
        }
        Ok(Self {
            basis,
            coef,
            converged: true,
            iterations: 0,
        })
    }

    pub(crate) fn from_fit(basis: FeatureBasis, fit: LogisticFit) -> Self {
        Self {
            basis,
            coef: fit.coef,
            converged: fit.converged,
            iterations: fit.iterations,
        }
    }

    #[inline]
    pub fn linear_predictor(&self, x: &[f64], y: f64) -> f64 {
        self.basis.dot(&self.coef, x, y)
    }

    /// Fitted probability; `y` is ignored unless the basis has an outcome term.
    #[inline]
    pub fn prob(&self, x: &[f64], y: f64) -> f64 {
        expit(self.linear_predictor(x, y))
    }
}

fn loglik(x: &DesignMatrix, labels: &[f64], weights: &[f64], beta: &[f64]) -> f64 {
    x.iter_rows()
        .zip(labels)
        .zip(weights)
        .map(|((row, &l), &w)| {
            if w == 0.0 {
                return 0.0;
            }
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            w * (l * eta - softplus(eta))
        })
        .sum()
}

/// Maximum-likelihood logistic fit with step-halving Newton iterations.
///
/// Converges when the largest score component drops below `1e-8` or the
/// accepted step norm below `1e-10`. Complete separation surfaces as
/// [`Error::Separation`], a rank-deficient weighted design as
/// [`Error::Singular`].
pub fn fit_logistic(x: &DesignMatrix, labels: &[f64], weights: &[f64]) -> Result<LogisticFit> {
    if labels.len() != x.rows || weights.len() != x.rows {
        return Err(Error::Dimension("labels/weights do not match design rows".into()));
    }
    let (mut pos, mut neg, mut total) = (0.0, 0.0, 0.0);
    for (&l, &w) in labels.iter().zip(weights) {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Domain(format!("invalid weight {w}")));
        }
        if l == 1.0 {
            pos += w;
        } else if l == 0.0 {
            neg += w;
        } else {
            return Err(Error::Domain(format!("label {l} is not 0/1")));
        }
        total += w;
    }
    if pos <= 0.0 || neg <= 0.0 {
        return Err(Error::Separation(
            "all positively weighted rows share one label".into(),
        ));
    }

    let mut beta = vec![0.0; x.cols];
    let mut ll = loglik(x, labels, weights, &beta);
    let mut trace = vec![ll];
    let mut probs = vec![0.0; x.rows];
    let mut hess_w = vec![0.0; x.rows];
    let mut resid = vec![0.0; x.rows];

    for iter in 0..MAX_ITERATIONS {
        for (i, row) in x.iter_rows().enumerate() {
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            probs[i] = expit(eta);
            hess_w[i] = weights[i] * probs[i] * (1.0 - probs[i]);
            resid[i] = labels[i] - probs[i];
        }
        let score = x.weighted_sum(weights, &resid);
        if score.amax() < SCORE_TOLERANCE {
            return finish(beta, iter, trace, ll, total);
        }
        let info = x.weighted_gram(&hess_w);
        let step = match solve_spd(&info, &score, "logistic information") {
            Ok(s) => s,
            // at zero coefficients the information is a plain weighted Gram
            // matrix, so later degeneracy comes from fitted probabilities
            // collapsing onto 0/1
            Err(Error::Singular(_)) if iter > 0 => {
                return Err(Error::Separation(
                    "information matrix degenerated as fitted probabilities reached 0/1".into(),
                ))
            }
            Err(e) => return Err(e),
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let cand_ll = loglik(x, labels, weights, &cand);
            if cand_ll >= ll {
                accepted = Some((cand, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_ll)) = accepted else {
            // no ascent direction left at working precision
            return finish(beta, iter + 1, trace, ll, total);
        };
        let step_norm = scale * step.norm();
        beta = cand;
        ll = cand_ll;
        trace.push(ll);
        if DVector::from_column_slice(&beta).norm() > COEF_NORM_LIMIT {
            return Err(Error::Separation("coefficient norm diverged".into()));
        }
        if step_norm < STEP_TOLERANCE {
            return finish(beta, iter + 1, trace, ll, total);
        }
    }
    Err(Error::Separation(format!(
        "no convergence within {MAX_ITERATIONS} iterations"
    )))
}

fn finish(coef: Vec<f64>, iterations: usize, trace: Vec<f64>, ll: f64, total: f64) -> Result<LogisticFit> {
    // a perfect fit means the likelihood has no finite maximiser
    if -ll / total < PERFECT_FIT {
        return Err(Error::Separation("data are perfectly separated".into()));
    }
    Ok(LogisticFit {
        coef,
        converged: true,
        iterations,
        loglik_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only(labels: &[f64]) -> DesignMatrix {
        DesignMatrix::from_rows(&vec![vec![1.0]; labels.len()]).unwrap()
    }

    #[test]
    fn intercept_is_logit_of_mean() {
        let labels = [1.0, 1.0, 1.0, 0.0];
        let fit = fit_logistic(&intercept_only(&labels), &labels, &[1.0; 4]).unwrap();
        assert!((fit.coef[0] - 3f64.ln()).abs() < 1e-10);
        assert!(fit.converged);
    }

    #[test]
    fn all_ones_is_separation() {
        let labels = [1.0; 4];
        let err = fit_logistic(&intercept_only(&labels), &labels, &[1.0; 4]).unwrap_err();
        assert!(matches!(err, Error::Separation(_)));
    }

    #[test]
    fn complete_separation_detected() {
        let x = DesignMatrix::from_rows(&[
            vec![1.0, -2.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
        ])
        .unwrap();
        let labels = [0.0, 0.0, 1.0, 1.0];
        assert!(matches!(
            fit_logistic(&x, &labels, &[1.0; 4]),
            Err(Error::Separation(_))
        ));
    }

    #[test]
    fn collinear_design_is_singular() {
        let x = DesignMatrix::from_rows(&[
            vec![1.0, 2.0],
            vec![1.0, 2.0],
            vec![1.0, 2.0],
        ])
        .unwrap();
        let labels = [0.0, 1.0, 1.0];
        assert!(matches!(
            fit_logistic(&x, &labels, &[1.0; 3]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn weights_act_as_replication() {
        let x = DesignMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]])
            .unwrap();
        let labels = [0.0, 1.0, 0.0, 1.0];
        let weighted = fit_logistic(&x, &labels, &[2.0, 1.0, 1.0, 1.0]).unwrap();
        let x2 = DesignMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
        ])
        .unwrap();
        let rep = fit_logistic(&x2, &[0.0, 0.0, 1.0, 0.0, 1.0], &[1.0; 5]).unwrap();
        for (a, b) in weighted.coef.iter().zip(&rep.coef) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(-800.0) >= 0.0);
        assert_eq!(expit(800.0), 1.0);
        assert!((logit(expit(1.3)) - 1.3).abs() < 1e-12);
    }
}
