mod common;

use common::*;
use proptest::prelude::*;
use shiftfuse::data::{load_csv, split_half_indices, write_csv, CsvSchema, Dataset, Record};
use shiftfuse::estimators::{
    analyze, calibration_terms, influence_values, shrink, tau_trial_dr, AnalysisOptions, Estimand,
    TauPair, Which,
};
use shiftfuse::nuisance::{estimate_pi, FeatureBasis, OutcomeModel};
use shiftfuse::shift::ShiftWeights;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 2usize..30, ec in 0usize..30, p in 1usize..4) {
        let ds = random_dataset(&mut rng(seed), n, ec, p);
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let schema = CsvSchema::new("r", "t", "y", &refs);
        let mut buf = Vec::new();
        write_csv(&mut buf, &ds, &schema).unwrap();
        let back = load_csv(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(back.len(), ds.len());
        for (a, b) in ds.records().iter().zip(back.records()) {
            prop_assert_eq!((a.r, a.t), (b.r, b.t));
            prop_assert!((a.y - b.y).abs() <= 1e-11 * (1.0 + a.y.abs()));
            for (u, v) in a.x.iter().zip(&b.x) {
                prop_assert!((u - v).abs() <= 1e-11 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn split_is_a_stratified_partition(seed in any::<u64>(), n in 2usize..60, ec in 0usize..60) {
        let ds = random_dataset(&mut rng(seed), n, ec, 1);
        let (a, b) = split_half_indices(&ds, seed ^ 7).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        for cell in ds.cell_indices() {
            let in_a = cell.iter().filter(|i| a.binary_search(i).is_ok()).count();
            prop_assert!(in_a.abs_diff(cell.len() - in_a) <= 1);
        }
    }

    #[test]
    fn trial_only_data_degenerates(seed in any::<u64>(), n in 8usize..80) {
        let mut g = rng(seed);
        let ds = random_dataset(&mut g, n, 0, 2);
        let b = FeatureBasis::linear(2);
        let mu1 = OutcomeModel::from_coef(1, b.clone(), vec![normal(&mut g), 1.0, 1.0]).unwrap();
        let mu0 = OutcomeModel::from_coef(0, b, vec![normal(&mut g), 1.0, 1.0]).unwrap();
        let pi = estimate_pi(&ds).unwrap();
        let a = analyze(&ds, &mu1, &mu0, &ShiftWeights::constant(&ds, 1.0, 1.0), pi, &AnalysisOptions::default()).unwrap();
        for j in 0..3 {
            prop_assert!((a.augmented[j].value - a.trial[j].value).abs() < 1e-10);
            prop_assert_eq!(a.shrinkage[j].value, a.trial[j].value);
        }
        let direct = tau_trial_dr(&ds, &mu1, &mu0, pi).unwrap();
        prop_assert_eq!(direct[2].value, a.trial[2].value);
    }

    #[test]
    fn calibration_decomposition_holds(seed in any::<u64>(), n in 6usize..60, ec in 1usize..60) {
        let mut g = rng(seed);
        let ds = random_dataset(&mut g, n, ec, 2);
        let w = random_weights(&mut g, &ds);
        let pred = random_predictions(&mut g, &ds);
        let pi = estimate_pi(&ds).unwrap();
        let tau = TauPair::new(normal(&mut g), normal(&mut g));
        let iv = influence_values(&ds, &w, &pred, pi, tau, tau).unwrap();
        let reference = reference_psi(&ds, &w, &pred, pi, tau);
        let got = [&iv.psi1_trial, &iv.psi0_trial, &iv.psi1, &iv.psi0];
        for (r, v) in reference.iter().zip(got) {
            for (a, b) in r.iter().zip(v.iter()) {
                prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
            }
        }
        let cal = calibration_terms(&ds, &w, &pred, pi, tau).unwrap();
        for (i, c) in cal.iter().enumerate() {
            let lhs1 = reference[2][i] - reference[0][i];
            let lhs0 = reference[3][i] - reference[1][i];
            prop_assert!((lhs1 - c.c1 * c.g_k).abs() < 1e-10 * (1.0 + lhs1.abs()));
            prop_assert!((lhs0 - c.c2 * c.g_k - c.c3 * c.g_rho).abs() < 1e-10 * (1.0 + lhs0.abs()));
        }
    }

    #[test]
    fn shrinkage_is_variance_optimal(seed in any::<u64>(), n in 10usize..60, ec in 5usize..60) {
        let mut g = rng(seed);
        let ds = random_dataset(&mut g, n, ec, 1);
        let w = random_weights(&mut g, &ds);
        let pi = estimate_pi(&ds).unwrap();
        let mu = |arm, c: f64| OutcomeModel::from_coef(arm, FeatureBasis::linear(1), vec![c, 0.5]).unwrap();
        let a = analyze(&ds, &mu(1, 1.0), &mu(0, 0.0), &w, pi, &AnalysisOptions::default()).unwrap();
        for (j, e) in [Estimand::Tau1, Estimand::Tau0].into_iter().enumerate() {
            let (s, d) = shrink(&a.trial[j], &a.augmented[j], &a.influence, e).unwrap();
            prop_assert!(s.se <= a.trial[j].se + 1e-12);
            prop_assert!((0.0..=1.0).contains(&d.delta));
            // plug-in variance of τ̃ + λ(τ̂ - τ̃) is minimised at λ*
            let pt = a.influence.psi(Which::Trial, e);
            let ph = a.influence.psi(Which::Augmented, e);
            let var = |l: f64| pt.iter().zip(ph.iter()).map(|(t, h)| (t + l * (h - t)).powi(2)).sum::<f64>();
            let v0 = var(d.lambda_star);
            prop_assert!(var(d.lambda_star + 0.05) >= v0 - 1e-9 * v0.abs());
            prop_assert!(var(d.lambda_star - 0.05) >= v0 - 1e-9 * v0.abs());
            let n2 = (ds.len() as f64).powi(2);
            prop_assert!((d.sigma2 - v0 / n2).abs() < 1e-9 * (1.0 + v0 / n2));
        }
    }
}

#[test]
fn trial_dr_reduces_to_means_with_constant_models() {
    let ds = Dataset::new(
        vec![
            Record::new(1, 1, vec![0.0], 3.0),
            Record::new(1, 1, vec![1.0], 5.0),
            Record::new(1, 0, vec![0.0], 1.0),
            Record::new(1, 0, vec![2.0], 2.0),
            Record::new(0, 0, vec![9.0], 100.0),
        ],
        1,
    )
    .unwrap();
    let e = tau_trial_dr(&ds, &OutcomeModel::constant(1, 0.0), &OutcomeModel::constant(0, 0.0), 0.5).unwrap();
    assert!((e[0].value - 4.0).abs() < 1e-12);
    assert!((e[1].value - 1.5).abs() < 1e-12);
    assert!((e[2].value - 2.5).abs() < 1e-12);
}
