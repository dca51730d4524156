//! Helpers shared by the integration tests: random instances and
//! independent reference implementations.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shiftfuse::data::{Dataset, Record};
use shiftfuse::estimators::{Predictions, TauPair};
use shiftfuse::nuisance::{FeatureBasis, LogisticModel};
use shiftfuse::shift::{eval_weights, ShiftWeights};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Trial rows with both arms plus `ec` external controls, `p` covariates.
pub fn random_dataset(rng: &mut ChaCha8Rng, n_trial: usize, ec: usize, p: usize) -> Dataset {
    let mut recs = Vec::with_capacity(n_trial + ec);
    for i in 0..n_trial {
        // first two rows fix both arms
        let t = if i < 2 { i as u8 } else { u8::from(rng.random::<f64>() < 0.5) };
        let x: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
        let y = x.iter().sum::<f64>() + t as f64 + normal(rng);
        recs.push(Record::new(1, t, x, y));
    }
    for _ in 0..ec {
        let x: Vec<f64> = (0..p).map(|_| 0.5 + normal(rng)).collect();
        let y = 0.3 + x.iter().sum::<f64>() + normal(rng);
        recs.push(Record::new(0, 0, x, y));
    }
    Dataset::new(recs, p).unwrap()
}

fn expit(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic maximum likelihood by cyclic one-dimensional Newton steps on
/// each coefficient, iterated until the full gradient is negligible.
pub fn logistic_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut beta = vec![0.0; p];
    let mut eta: Vec<f64> = vec![0.0; x.len()];
    for _sweep in 0..100_000 {
        for j in 0..p {
            let (mut g, mut h) = (0.0, 0.0);
            for (i, row) in x.iter().enumerate() {
                let m = expit(eta[i]);
                g += (y[i] - m) * row[j];
                h += m * (1.0 - m) * row[j] * row[j];
            }
            let step = (g / h).clamp(-1.0, 1.0);
            beta[j] += step;
            for (i, row) in x.iter().enumerate() {
                eta[i] += step * row[j];
            }
        }
        let grad_norm = (0..p)
            .map(|j| {
                x.iter()
                    .zip(y)
                    .map(|(row, &yi)| (yi - expit(dot(row, &beta))) * row[j])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max);
        if grad_norm < 1e-11 {
            break;
        }
        eta = x.iter().map(|row| dot(row, &beta)).collect();
    }
    beta
}

/// Least squares through the normal equations, solved by Gaussian
/// elimination with partial pivoting.
pub fn ols_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        for r in 0..p {
            for c in 0..p {
                a[r][c] += row[r] * row[c];
            }
            a[r][p] += row[r] * yi;
        }
    }
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..p).map(|r| a[r][p] / a[r][r]).collect()
}

/// Composite trapezoid rule for `E g(Z)` with `Z ~ N(0, 1)`; spectrally
/// accurate for smooth integrands with Gaussian tails.
pub fn normal_expectation(g: impl Fn(f64) -> f64) -> f64 {
    let (lim, steps) = (9.0, 1200);
    let h = 2.0 * lim / steps as f64;
    let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    (0..=steps)
        .map(|i| {
            let z = -lim + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * g(z) * c * (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * h
}

pub fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn random_weights(rng: &mut rand_chacha::ChaCha8Rng, ds: &Dataset) -> ShiftWeights {
    let bk = FeatureBasis::linear(ds.p());
    let br = bk.with_outcome().unwrap();
    let k = LogisticModel::from_coef(bk.clone(), (0..bk.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let rho = LogisticModel::from_coef(br.clone(), (0..br.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    eval_weights(ds, &k, &rho).unwrap()
}

pub fn random_predictions(rng: &mut rand_chacha::ChaCha8Rng, ds: &Dataset) -> Predictions {
    Predictions {
        mu1: ds.records().iter().map(|_| normal(rng)).collect(),
        mu0: ds.records().iter().map(|_| normal(rng)).collect(),
    }
}

/// ψ̃ and ψ written out directly from their definitions.
pub fn reference_psi(ds: &Dataset, w: &ShiftWeights, pred: &Predictions, pi: f64, tau: TauPair) -> [Vec<f64>; 4] {
    let kappa = ds.kappa_hat();
    let mut out = [vec![], vec![], vec![], vec![]];
    for (i, r) in ds.records().iter().enumerate() {
        let (rr, tt) = (r.r as f64, r.t as f64);
        let (m1, m0) = (pred.mu1[i], pred.mu0[i]);
        out[0].push(rr / kappa * (tt * (r.y - m1) / pi + m1 - tau.tau1));
        out[1].push(rr / kappa * ((1.0 - tt) * (r.y - m0) / (1.0 - pi) + m0 - tau.tau0));
        out[2].push((rr * tt * (r.y - m1) / pi + w.k[i] * (m1 - tau.tau1)) / kappa);
        let rho = w.rho[i].unwrap_or(0.0);
        out[3].push(((1.0 - tt) * rho * (r.y - m0) / (1.0 - pi) + w.k[i] * (m0 - tau.tau0)) / kappa);
    }
    out
}
