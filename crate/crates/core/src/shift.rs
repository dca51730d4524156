//! Shift-induced weights.
//!
//! `k(x) = Pr(R=1 | x)` encodes covariate shift `a(x) = q(x)/p(x)` and
//! `ρ(x, y) = Pr(R=1 | x, y, T=0)` encodes covariate plus concept shift
//! `a(x)·b(x, y)`:
//!
//! ```text
//! k = κ / (κ + (1-κ)·a)          ρ = κ(1-π) / (κ(1-π) + (1-κ)·a·b)
//! ```

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::{logit, FeatureBasis, LogisticModel, Term};
use crate::sim::DgpSpec;

/// Weights are kept inside `[CLAMP, 1 - CLAMP]`.
pub const CLAMP: f64 = 1e-12;

#[inline]
fn clamp_prob(p: f64, clamped: &mut usize) -> f64 {
    if p < CLAMP {
        *clamped += 1;
        CLAMP
    } else if p > 1.0 - CLAMP {
        *clamped += 1;
        1.0 - CLAMP
    } else {
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Fitted { k: LogisticModel, rho: LogisticModel },
    Oracle(DgpSpec),
    Constant { k: f64, rho: f64 },
}

/// Per-row `k` and `ρ` (the latter only on untreated rows).
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftWeights {
    pub k: Vec<f64>,
    pub rho: Vec<Option<f64>>,
    /// How many evaluations hit the clamp.
    pub clamped: usize,
    pub source: WeightSource,
}

impl ShiftWeights {
    /// Same `k` and `ρ` for every row, e.g. `k ≡ ρ ≡ 1` for trial-only data.
    pub fn constant(ds: &Dataset, k: f64, rho: f64) -> Self {
        let mut clamped = 0;
        let kc = clamp_prob(k, &mut clamped);
        let rc = clamp_prob(rho, &mut clamped);
        let clamped = if clamped > 0 { ds.len() } else { 0 };
        Self {
            k: vec![kc; ds.len()],
            rho: ds
                .records()
                .iter()
                .map(|r| (!r.is_treated()).then_some(rc))
                .collect(),
            clamped,
            source: WeightSource::Constant { k, rho },
        }
    }

    pub fn rho_at(&self, i: usize) -> Result<f64> {
        self.rho[i].ok_or_else(|| Error::Domain(format!("rho undefined on treated row {i}")))
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }
}

/// Evaluates fitted (or oracle) working models on every row.
pub fn eval_weights(
    ds: &Dataset,
    k_model: &LogisticModel,
    rho_model: &LogisticModel,
) -> Result<ShiftWeights> {
    if k_model.basis.has_outcome() {
        return Err(Error::Usage("the k model cannot use the outcome".into()));
    }
    k_model.basis.check_dimension(ds.p())?;
    rho_model.basis.check_dimension(ds.p())?;
    let mut clamped = 0;
    let mut k = Vec::with_capacity(ds.len());
    let mut rho = Vec::with_capacity(ds.len());
    for r in ds.records() {
        k.push(clamp_prob(k_model.prob(&r.x, r.y), &mut clamped));
        rho.push(if r.is_treated() {
            None
        } else {
            Some(clamp_prob(rho_model.prob(&r.x, r.y), &mut clamped))
        });
    }
    Ok(ShiftWeights {
        k,
        rho,
        clamped,
        source: WeightSource::Fitted {
            k: k_model.clone(),
            rho: rho_model.clone(),
        },
    })
}

fn open_unit(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} = {v} must lie in (0, 1)")))
    }
}

/// Covariate density ratio `a(x)` implied by `k(x)`.
pub fn a_from_k(k: f64, kappa: f64) -> Result<f64> {
    open_unit(k, "k")?;
    open_unit(kappa, "kappa")?;
    Ok(kappa * (1.0 - k) / ((1.0 - kappa) * k))
}

/// Joint ratio `a(x)·b(x, y)` implied by `ρ(x, y)`.
pub fn ab_from_rho(rho: f64, kappa: f64, pi: f64) -> Result<f64> {
    open_unit(rho, "rho")?;
    open_unit(kappa, "kappa")?;
    open_unit(pi, "pi")?;
    Ok(kappa * (1.0 - pi) * (1.0 - rho) / ((1.0 - kappa) * rho))
}

pub fn k_from_a(a: f64, kappa: f64) -> f64 {
    kappa / (kappa + (1.0 - kappa) * a)
}

pub fn rho_from_ab(ab: f64, kappa: f64, pi: f64) -> f64 {
    let c = kappa * (1.0 - pi);
    c / (c + (1.0 - kappa) * ab)
}

/// `log a(x) = l0 + l1·x + l2·x²` for two Gaussian covariate laws.
fn log_covariate_ratio(dgp: &DgpSpec) -> [f64; 3] {
    let (m1, s1) = (dgp.trial_x.mean, dgp.trial_x.sd);
    let (m0, s0) = (dgp.ec_x.mean, dgp.ec_x.sd);
    let (v1, v0) = (s1 * s1, s0 * s0);
    [
        (s1 / s0).ln() + m1 * m1 / (2.0 * v1) - m0 * m0 / (2.0 * v0),
        m0 / v0 - m1 / v1,
        1.0 / (2.0 * v1) - 1.0 / (2.0 * v0),
    ]
}

/// Exact `k` coefficients on `[intercept, x, x²]` for the Gaussian design.
pub fn true_gaussian_k(dgp: &DgpSpec) -> Result<LogisticModel> {
    dgp.validate()?;
    let kappa = dgp.kappa();
    let la = log_covariate_ratio(dgp);
    let basis = FeatureBasis::new(vec![Term::Intercept, Term::Linear(0), Term::Square(0)])?;
    LogisticModel::from_coef(basis, vec![logit(kappa) - la[0], -la[1], -la[2]])
}

/// Exact `ρ` coefficients on `[intercept, x, x², exp(x), y]`.
///
/// With external outcomes shifted by `δ` and common noise `σ`,
/// `log b(x, y) = {δ·(y - μ₀(x)) - δ²/2} / σ²`.
pub fn true_gaussian_rho(dgp: &DgpSpec) -> Result<LogisticModel> {
    dgp.validate()?;
    if dgp.outcome_sd <= 0.0 {
        return Err(Error::Unsupported(
            "concept-shift ratio needs a positive outcome sd".into(),
        ));
    }
    let kappa = dgp.kappa();
    let la = log_covariate_ratio(dgp);
    let d = dgp.ec_offset / (dgp.outcome_sd * dgp.outcome_sd);
    let [c0, c1, c2] = dgp.mu0_coef;
    let offset = (kappa * (1.0 - dgp.pi) / (1.0 - kappa)).ln();
    let basis = FeatureBasis::new(vec![
        Term::Intercept,
        Term::Linear(0),
        Term::Square(0),
        Term::Exp(0),
        Term::Outcome,
    ])?;
    LogisticModel::from_coef(
        basis,
        vec![
            offset - la[0] + d * c0 + 0.5 * d * dgp.ec_offset,
            -la[1] + d * c1,
            -la[2],
            d * c2,
            -d,
        ],
    )
}

/// Oracle weights for data drawn from `dgp`.
pub fn oracle_weights(ds: &Dataset, dgp: &DgpSpec) -> Result<ShiftWeights> {
    let mut w = eval_weights(ds, &true_gaussian_k(dgp)?, &true_gaussian_rho(dgp)?)?;
    w.source = WeightSource::Oracle(dgp.clone());
    Ok(w)
}

/// Sample analogues of the two balancing identities,
/// `E{(R/κ)a·g₁ - (1-R)/(1-κ)·g₁}` and
/// `E{R(1-T)/(κ(1-π))·ab·g₂ - (1-R)/(1-κ)·g₂}`, with `a`, `ab` recovered from
/// the weights. Both are zero in expectation when the weights are correct.
pub fn calibration_residuals(
    ds: &Dataset,
    w: &ShiftWeights,
    pi: f64,
    g1: impl Fn(&[f64]) -> f64,
    g2: impl Fn(&[f64], f64) -> f64,
) -> Result<(f64, f64)> {
    if w.len() != ds.len() {
        return Err(Error::Dimension("weights do not match dataset".into()));
    }
    let kappa = ds.kappa_hat();
    let (mut m1, mut m2) = (0.0, 0.0);
    for (i, r) in ds.records().iter().enumerate() {
        let a = a_from_k(w.k[i], kappa)?;
        let ec = (1.0 - r.rf()) / (1.0 - kappa);
        m1 += (r.rf() / kappa * a - ec) * g1(&r.x);
        if !r.is_treated() {
            let ab = ab_from_rho(w.rho_at(i)?, kappa, pi)?;
            let trial_ctrl = r.rf() / (kappa * (1.0 - pi));
            m2 += (trial_ctrl * ab - ec) * g2(&r.x, r.y);
        }
    }
    let n = ds.len() as f64;
    Ok((m1 / n, m2 / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use crate::sim::Gaussian;

    #[test]
    fn zero_coefficients_give_half() {
        let ds = Dataset::new(
            vec![Record::new(1, 1, vec![3.0], 1.0), Record::new(0, 0, vec![-1.0], 2.0)],
            1,
        )
        .unwrap();
        let b = FeatureBasis::linear(1);
        let k = LogisticModel::from_coef(b.clone(), vec![0.0, 0.0]).unwrap();
        let rho = LogisticModel::from_coef(b.with_outcome().unwrap(), vec![0.0; 3]).unwrap();
        let w = eval_weights(&ds, &k, &rho).unwrap();
        assert_eq!(w.k, vec![0.5, 0.5]);
        assert_eq!(w.rho, vec![None, Some(0.5)]);
        assert!(w.rho_at(0).is_err());
    }

    #[test]
    fn no_shift_means_unit_ratios() {
        assert!((a_from_k(0.3, 0.3).unwrap() - 1.0).abs() < 1e-15);
        let (kappa, pi) = (0.4, 0.3);
        let rho = kappa * (1.0 - pi) / (kappa * (1.0 - pi) + (1.0 - kappa));
        assert!((ab_from_rho(rho, kappa, pi).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_values_are_domain_errors() {
        assert!(matches!(a_from_k(0.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(a_from_k(0.5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(ab_from_rho(0.5, 0.5, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn paper_design_k_coefficients() {
        let k = true_gaussian_k(&DgpSpec::default()).unwrap();
        // independent expansion: logit(3/7) - log(0.8) - (1.5²/1.28 - 1/2)
        let c0 = (0.75f64).ln() - (0.8f64).ln() - (2.25 / 1.28 - 0.5);
        assert!((k.coef[0] - c0).abs() < 1e-12);
        assert!((k.coef[0] + 1.32235).abs() < 1e-5);
        assert!((k.coef[1] - 1.34375).abs() < 1e-12);
        assert!((k.coef[2] + 0.28125).abs() < 1e-12);
    }

    #[test]
    fn identical_covariate_laws() {
        let dgp = DgpSpec {
            ec_x: Gaussian { mean: 1.5, sd: 0.8 },
            ..DgpSpec::default()
        };
        let k = true_gaussian_k(&dgp).unwrap();
        assert!((k.coef[0] - logit(dgp.kappa())).abs() < 1e-12);
        assert!(k.coef[1].abs() < 1e-12 && k.coef[2].abs() < 1e-12);
    }

    #[test]
    fn paper_design_outcome_coefficient() {
        let rho = true_gaussian_rho(&DgpSpec::default()).unwrap();
        // external outcomes sit higher, so larger y lowers trial odds
        assert!((rho.coef[4] + 0.78125).abs() < 1e-12);
        assert!((rho.coef[3] - 0.5 * 0.78125).abs() < 1e-12);
    }

    /// The closed forms must reproduce the log density ratios computed
    /// directly from the Gaussian densities.
    #[test]
    fn oracle_matches_density_ratio() {
        let dgp = DgpSpec::default();
        let k = true_gaussian_k(&dgp).unwrap();
        let rho = true_gaussian_rho(&dgp).unwrap();
        let norm = |v: f64, m: f64, s: f64| {
            (-(v - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let kappa = dgp.kappa();
        for &x in &[-1.0, 0.0, 0.7, 2.0, 3.0] {
            let a = norm(x, 1.0, 1.0) / norm(x, 1.5, 0.8);
            assert!((k.prob(&[x], 0.0) - k_from_a(a, kappa)).abs() < 1e-12);
            for &y in &[0.0, 3.0, 9.0] {
                let m0 = dgp.mu(0, x);
                let b = norm(y, m0 + 0.5, 0.8) / norm(y, m0, 0.8);
                let want = rho_from_ab(a * b, kappa, 0.5);
                assert!((rho.prob(&[x], y) - want).abs() < 1e-12, "x={x} y={y}");
            }
        }
    }

    #[test]
    fn zero_test_function() {
        let ds = crate::sim::generate(&DgpSpec::default(), 1).unwrap();
        let w = oracle_weights(&ds, &DgpSpec::default()).unwrap();
        let (m1, _) = calibration_residuals(&ds, &w, 0.5, |_| 0.0, |_, _| 1.0).unwrap();
        assert_eq!(m1, 0.0);
    }
}
