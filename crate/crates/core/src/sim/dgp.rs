use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

/// Univariate synthetic design: Gaussian covariates in each population,
/// arm-specific means `c0 + c1·x + c2·exp(x)`, homoscedastic Gaussian noise,
/// and an additive shift of the external untreated outcome mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub trial_x: Gaussian,
    pub ec_x: Gaussian,
    pub mu1_coef: [f64; 3],
    pub mu0_coef: [f64; 3],
    pub outcome_sd: f64,
    pub ec_offset: f64,
    /// Trial rows.
    pub n: usize,
    /// Total rows.
    #[serde(rename = "N")]
    pub total: usize,
    pub pi: f64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            trial_x: Gaussian { mean: 1.5, sd: 0.8 },
            ec_x: Gaussian { mean: 1.0, sd: 1.0 },
            mu1_coef: [2.0, 1.0, 0.6],
            mu0_coef: [1.0, 1.5, 0.5],
            outcome_sd: 0.8,
            ec_offset: 0.5,
            n: 1500,
            total: 3500,
            pi: 0.5,
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.trial_x.sd > 0.0
            && self.ec_x.sd > 0.0
            && self.outcome_sd >= 0.0
            && self.n > 0
            && self.n < self.total
            && self.pi > 0.0
            && self.pi < 1.0
            && [self.trial_x.mean, self.ec_x.mean, self.ec_offset]
                .iter()
                .chain(&self.mu0_coef)
                .chain(&self.mu1_coef)
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "invalid DGP: need sd > 0, 0 < n < N, 0 < pi < 1 and finite coefficients".into(),
            ))
        }
    }

    pub fn kappa(&self) -> f64 {
        self.n as f64 / self.total as f64
    }

    /// Same design scaled to `multiplier` times the sample sizes.
    pub fn scaled(&self, multiplier: f64) -> Self {
        let n = (self.n as f64 * multiplier).round() as usize;
        let total = (self.total as f64 * multiplier).round() as usize;
        Self {
            n,
            total,
            ..self.clone()
        }
    }

    pub fn with_sizes(&self, n: usize, total: usize) -> Self {
        Self {
            n,
            total,
            ..self.clone()
        }
    }

    #[inline]
    pub fn mu(&self, arm: u8, x: f64) -> f64 {
        let c = if arm == 1 { &self.mu1_coef } else { &self.mu0_coef };
        c[0] + c[1] * x + c[2] * x.exp()
    }
}

/// Draws `n` trial rows followed by `N - n` external-control rows.
pub fn generate(dgp: &DgpSpec, seed: u64) -> Result<Dataset> {
    dgp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(dgp.total);
    for _ in 0..dgp.n {
        let x = dgp.trial_x.mean + dgp.trial_x.sd * rng.sample::<f64, _>(StandardNormal);
        let t = u8::from(rng.random::<f64>() < dgp.pi);
        let z: f64 = rng.sample(StandardNormal);
        records.push(Record::new(1, t, vec![x], dgp.mu(t, x) + dgp.outcome_sd * z));
    }
    for _ in dgp.n..dgp.total {
        let x = dgp.ec_x.mean + dgp.ec_x.sd * rng.sample::<f64, _>(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        records.push(Record::new(
            0,
            0,
            vec![x],
            dgp.ec_offset + dgp.mu(0, x) + dgp.outcome_sd * z,
        ));
    }
    Dataset::new(records, 1)
}

/// Trial-population means `(τ₁, τ₀, τ)`, using `E exp(X) = exp(m + s²/2)`.
pub fn true_tau(dgp: &DgpSpec) -> (f64, f64, f64) {
    let Gaussian { mean: m, sd: s } = dgp.trial_x;
    let lognormal = (m + 0.5 * s * s).exp();
    let arm = |c: &[f64; 3]| c[0] + c[1] * m + c[2] * lognormal;
    let t1 = arm(&dgp.mu1_coef);
    let t0 = arm(&dgp.mu0_coef);
    (t1, t0, t1 - t0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_control_row() {
        let dgp = DgpSpec {
            trial_x: Gaussian { mean: 0.0, sd: 1e-300 },
            outcome_sd: 0.0,
            pi: 1e-12,
            n: 1,
            total: 2,
            ..DgpSpec::default()
        };
        let ds = generate(&dgp, 3).unwrap();
        let r = &ds.records()[0];
        assert_eq!(r.t, 0);
        assert!((r.y - 1.5).abs() < 1e-12);
    }

    #[test]
    fn default_truth() {
        let (t1, t0, t) = true_tau(&DgpSpec::default());
        let e = 1.82f64.exp();
        assert!((t1 - (3.5 + 0.6 * e)).abs() < 1e-12);
        assert!((t0 - (3.25 + 0.5 * e)).abs() < 1e-12);
        assert!((t - (t1 - t0)).abs() < 1e-15);
    }

    #[test]
    fn linear_mean_gives_trial_mean() {
        let dgp = DgpSpec {
            mu1_coef: [0.0, 1.0, 0.0],
            ..DgpSpec::default()
        };
        assert!((true_tau(&dgp).0 - 1.5).abs() < 1e-15);
    }

    #[test]
    fn offset_does_not_move_truth() {
        let a = DgpSpec::default();
        let b = DgpSpec {
            ec_offset: -3.0,
            ..a.clone()
        };
        assert_eq!(true_tau(&a), true_tau(&b));
    }

    #[test]
    fn generate_is_seeded() {
        let dgp = DgpSpec::default();
        let a = generate(&dgp, 11).unwrap();
        assert_eq!(a, generate(&dgp, 11).unwrap());
        assert_ne!(a, generate(&dgp, 12).unwrap());
        assert_eq!(a.n(), 1500);
        assert_eq!(a.len(), 3500);
        assert!(a.records()[1500..].iter().all(|r| r.r == 0 && r.t == 0));
    }

    #[test]
    fn invalid_spec_rejected() {
        let bad = DgpSpec {
            n: 10,
            total: 10,
            ..DgpSpec::default()
        };
        assert!(generate(&bad, 0).is_err());
    }
}
