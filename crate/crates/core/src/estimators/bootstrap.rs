use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sim::derive_seed;
use crate::stats;

/// Attempts per replicate before a failing resample becomes an error.
pub const MAX_REDRAWS: usize = 10;
pub const MIN_REPLICATES: usize = 100;

/// Resamples each `(r, t)` cell with replacement, keeping cell sizes.
pub fn stratified_resample(ds: &Dataset, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = Vec::with_capacity(ds.len());
    for cell in ds.cell_indices() {
        for _ in 0..cell.len() {
            idx.push(cell[rng.random_range(0..cell.len())]);
        }
    }
    idx.sort_unstable();
    ds.subset(&idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Standard deviation of each statistic over replicates.
    pub se: Vec<f64>,
    /// `replicates[b]` holds the statistics of replicate `b`.
    pub replicates: Vec<Vec<f64>>,
    /// Resamples discarded because the statistic could not be computed.
    pub redraws: usize,
}

/// Stratified nonparametric bootstrap of the statistics returned by `stat`.
///
/// Replicate `b` draws from a seed derived from `(seed, b)` only, so the
/// first `B` replicates do not depend on the total count or on scheduling.
/// `stat` receives the resample and the replicate's seed, which it may use
/// to resample auxiliary data consistently.
pub fn bootstrap_se<F>(ds: &Dataset, replicates: usize, seed: u64, stat: F) -> Result<BootstrapResult>
where
    F: Fn(&Dataset, u64) -> Result<Vec<f64>> + Sync,
{
    if replicates < MIN_REPLICATES {
        return Err(Error::Usage(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    let draws: Vec<Result<(Vec<f64>, usize)>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let rep_seed = derive_seed(seed, b as u64);
            let mut last = None;
            for attempt in 0..MAX_REDRAWS {
                let s = derive_seed(rep_seed, attempt as u64);
                match stat(&stratified_resample(ds, s), s) {
                    Ok(v) => return Ok((v, attempt)),
                    Err(e) => last = Some(e),
                }
            }
            Err(Error::Size(format!(
                "bootstrap replicate {b} failed {MAX_REDRAWS} times; last error: {}",
                last.map(|e| e.to_string()).unwrap_or_default()
            )))
        })
        .collect();
    let mut reps = Vec::with_capacity(replicates);
    let mut redraws = 0;
    for d in draws {
        let (v, r) = d?;
        redraws += r;
        reps.push(v);
    }
    let width = reps[0].len();
    if reps.iter().any(|r| r.len() != width) {
        return Err(Error::Dimension("bootstrap statistic changed length".into()));
    }
    let se = (0..width)
        .map(|j| stats::sd(&reps.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    Ok(BootstrapResult {
        se,
        replicates: reps,
        redraws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;

    fn ds() -> Dataset {
        let mut recs = Vec::new();
        for i in 0..10 {
            recs.push(Record::new(1, (i % 2) as u8, vec![i as f64], i as f64));
            recs.push(Record::new(0, 0, vec![i as f64], 2.0 * i as f64));
        }
        Dataset::new(recs, 1).unwrap()
    }

    #[test]
    fn resample_keeps_cells() {
        let d = ds();
        let r = stratified_resample(&d, 4);
        let sizes = |x: &Dataset| x.cell_indices().map(|c| c.len());
        assert_eq!(sizes(&d), sizes(&r));
    }

    #[test]
    fn too_few_replicates() {
        assert!(matches!(
            bootstrap_se(&ds(), 99, 0, |_, _| Ok(vec![0.0])),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn persistent_failure_is_error() {
        let r = bootstrap_se(&ds(), 100, 0, |_, _| Err(Error::Singular("x".into())));
        assert!(matches!(r, Err(Error::Size(_))));
    }

    #[test]
    fn prefix_stable() {
        let f = |d: &Dataset, _| Ok(vec![stats::mean(&d.records().iter().map(|r| r.y).collect::<Vec<_>>())]);
        let a = bootstrap_se(&ds(), 100, 9, f).unwrap();
        let b = bootstrap_se(&ds(), 200, 9, f).unwrap();
        assert_eq!(a.replicates[..], b.replicates[..100]);
    }
}
