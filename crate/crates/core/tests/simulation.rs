mod common;

use common::*;
use shiftfuse::estimators::Estimand;
use shiftfuse::sim::{
    experiment1_scenarios, experiment2_scenarios, run_replication, run_scenarios, DgpSpec, EstimatorKind,
};

#[test]
fn delta_vanishes_under_misspecified_shift_models() {
    let big = DgpSpec::default().with_sizes(15_000, 35_000);
    let iii: Vec<_> = experiment2_scenarios().into_iter().filter(|s| s.name == "iii").collect();
    let deltas: Vec<[f64; 2]> = (0..40)
        .map(|rep| run_replication(&big, &iii, 5, rep).pop().unwrap().unwrap().delta)
        .collect();
    for arm in 0..2 {
        let d: Vec<f64> = deltas.iter().map(|d| d[arm]).collect();
        assert!(median(&d) < 0.05, "arm {arm}: median delta {}", median(&d));
    }
}

/// With correctly specified models the augmented estimator is efficient, so
/// the variance-optimal weight on it is 1.
#[test]
fn shrinkage_weight_near_optimum_with_correct_models() {
    let lambdas = |dgp: &DgpSpec, spec: &[shiftfuse::sim::ScenarioSpec], reps: u64| -> [Vec<f64>; 2] {
        let outs: Vec<_> = (0..reps)
            .map(|rep| run_replication(dgp, spec, 8, rep).pop().unwrap().unwrap())
            .collect();
        [0, 1].map(|arm| outs.iter().map(|o| o.lambda_n[arm]).collect())
    };
    let oracle: Vec<_> = experiment1_scenarios(&[]);
    for (arm, l) in lambdas(&DgpSpec::default(), &oracle, 300).iter().enumerate() {
        assert!((median(l) - 1.0).abs() < 0.1, "oracle arm {arm}: {}", median(l));
    }
    let fitted = &experiment2_scenarios()[..1];
    // the ratio estimate of the weight drifts below 1 at moderate N, so
    // consistency is checked on large samples
    let big = DgpSpec::default().with_sizes(150_000, 350_000);
    for (arm, l) in lambdas(&big, fitted, 9).iter().enumerate() {
        assert!((median(l) - 1.0).abs() < 0.1, "fitted arm {arm}: {}", median(l));
    }
}

#[test]
fn same_sample_standard_errors_match_spread() {
    let dgp = DgpSpec::default();
    let s = run_scenarios(&dgp, &experiment1_scenarios(&[0.0]), 300, 12).unwrap();
    for t in [Estimand::Tau1, Estimand::Tau0, Estimand::Tau] {
        let r = s.row("no_validation", EstimatorKind::Augmented, t).unwrap();
        assert!((r.mean_se / r.sd - 1.0).abs() < 0.15, "{t:?}: se {} sd {}", r.mean_se, r.sd);
        assert!(r.bias.abs() < 0.03);
    }
    assert!(s.failures.iter().all(|f| f.1 == 0));
}

#[test]
fn summaries_are_reproducible() {
    let dgp = DgpSpec::default().with_sizes(300, 700);
    let sc = experiment2_scenarios();
    let a = run_scenarios(&dgp, &sc, 100, 99).unwrap();
    let b = run_scenarios(&dgp, &sc, 100, 99).unwrap();
    assert_eq!(a.rows, b.rows);
    let c = run_scenarios(&dgp, &sc, 100, 100).unwrap();
    assert_ne!(a.rows, c.rows);
}
