//! Tabular distribution-shift summaries between trial and external rows:
//! a correlation PCA of pooled covariates, marginal comparisons, and
//! outcome summaries within deciles of a pooled untreated-outcome score.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::data::{fmt_sig12, Dataset};
use crate::error::{Error, Result};
use crate::nuisance::{fit_outcome, FeatureBasis, OutcomeModel, Population};
use crate::stats;

const ZERO_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pca {
    /// Covariate indices entering the PCA.
    pub kept: Vec<usize>,
    /// Zero-variance covariates left out.
    pub dropped: Vec<usize>,
    /// All eigenvalues of the correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Share of total variance of the first two components.
    pub fractions: [f64; 2],
    /// `loadings[j]` for `kept[j]`.
    pub loadings: Vec<[f64; 2]>,
    pub scores: Vec<[f64; 2]>,
}

/// Projects standardized pooled covariates onto the top two eigenvectors of
/// their correlation matrix. Each component is signed so its first nonzero
/// loading is positive.
pub fn pca_project(ds: &Dataset) -> Result<Pca> {
    if ds.p() < 2 {
        return Err(Error::Size(format!("PCA needs at least 2 covariates, got {}", ds.p())));
    }
    if ds.len() < 3 {
        return Err(Error::Size(format!("PCA needs at least 3 rows, got {}", ds.len())));
    }
    let n = ds.len();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut centre = Vec::new();
    let mut scale = Vec::new();
    for j in 0..ds.p() {
        let col: Vec<f64> = ds.records().iter().map(|r| r.x[j]).collect();
        let sd = stats::sd(&col);
        if sd <= ZERO_VARIANCE * (1.0 + stats::mean(&col).abs()) {
            dropped.push(j);
        } else {
            kept.push(j);
            centre.push(stats::mean(&col));
            scale.push(sd);
        }
    }
    if kept.len() < 2 {
        return Err(Error::Size(format!(
            "PCA needs 2 covariates with nonzero variance, got {}",
            kept.len()
        )));
    }
    let q = kept.len();
    let z = DMatrix::from_fn(n, q, |i, j| (ds.records()[i].x[kept[j]] - centre[j]) / scale[j]);
    let corr = (z.transpose() * &z) / (n - 1) as f64;
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let mut loadings = vec![[0.0; 2]; q];
    for c in 0..2 {
        let v = eig.eigenvectors.column(order[c]);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map_or(1.0, |x| x.signum());
        for j in 0..q {
            loadings[j][c] = sign * v[j];
        }
    }
    let scores = (0..n)
        .map(|i| {
            let mut s = [0.0; 2];
            for (j, l) in loadings.iter().enumerate() {
                s[0] += z[(i, j)] * l[0];
                s[1] += z[(i, j)] * l[1];
            }
            s
        })
        .collect();
    Ok(Pca {
        kept,
        dropped,
        fractions: [eigenvalues[0] / total, eigenvalues[1] / total],
        eigenvalues,
        loadings,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proportion {
    pub covariate: usize,
    pub trial: f64,
    pub external: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ecdf {
    pub covariate: usize,
    /// Sorted distinct pooled values.
    pub grid: Vec<f64>,
    pub trial: Vec<f64>,
    pub external: Vec<f64>,
    /// Two-sample Kolmogorov–Smirnov statistic.
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalShift {
    pub proportions: Vec<Proportion>,
    pub ecdf: Vec<Ecdf>,
}

fn ecdf_on(grid: &[f64], sorted: &[f64]) -> Vec<f64> {
    if sorted.is_empty() {
        return vec![f64::NAN; grid.len()];
    }
    let n = sorted.len() as f64;
    grid.iter()
        .map(|&g| sorted.partition_point(|&v| v <= g) as f64 / n)
        .collect()
}

/// Group proportions for 0/1 covariates, ECDFs on the pooled grid for the rest.
pub fn marginal_shift(ds: &Dataset) -> MarginalShift {
    let mut proportions = Vec::new();
    let mut ecdf = Vec::new();
    for j in 0..ds.p() {
        let mut trial: Vec<f64> = Vec::new();
        let mut external: Vec<f64> = Vec::new();
        for r in ds.records() {
            if r.is_trial() {
                trial.push(r.x[j]);
            } else {
                external.push(r.x[j]);
            }
        }
        let binary = ds.records().iter().all(|r| r.x[j] == 0.0 || r.x[j] == 1.0);
        if binary {
            proportions.push(Proportion {
                covariate: j,
                trial: stats::mean(&trial),
                external: stats::mean(&external),
            });
            continue;
        }
        trial.sort_by(f64::total_cmp);
        external.sort_by(f64::total_cmp);
        let mut grid: Vec<f64> = trial.iter().chain(&external).copied().collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let ft = ecdf_on(&grid, &trial);
        let fe = ecdf_on(&grid, &external);
        let max_gap = ft
            .iter()
            .zip(&fe)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ecdf.push(Ecdf {
            covariate: j,
            grid,
            trial: ft,
            external: fe,
            max_gap,
        });
    }
    MarginalShift { proportions, ecdf }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumber {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Fewer than three rows.
    pub sparse: bool,
}

impl FiveNumber {
    fn of(mut y: Vec<f64>) -> Self {
        y.sort_by(f64::total_cmp);
        let q = |p| stats::quantile_sorted(&y, p);
        Self {
            count: y.len(),
            min: q(0.0),
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: q(1.0),
            sparse: y.len() < 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecileBin {
    pub bin: usize,
    pub score_lo: f64,
    pub score_hi: f64,
    pub trial_control: FiveNumber,
    pub external: FiveNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecileSummary {
    pub bins: Vec<DecileBin>,
    /// The score was constant, so all rows share one bin.
    pub constant_score: bool,
}

/// `s(x) = Ê(Y₀ | x)` by least squares on all untreated rows.
pub fn fit_score_model(ds: &Dataset, basis: &FeatureBasis) -> Result<OutcomeModel> {
    fit_outcome(ds, 0, basis, Population::Pooled)
}

/// Untreated rows split into (at most) ten equal-count bins of `s(x)`, ties
/// broken by row order, with outcome summaries for trial controls and
/// external controls in each bin.
pub fn decile_outcome_summary(ds: &Dataset, score: &OutcomeModel) -> Result<DecileSummary> {
    score.basis.check_dimension(ds.p())?;
    let mut rows: Vec<(f64, usize)> = ds
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_treated())
        .map(|(i, r)| (score.predict(&r.x), i))
        .collect();
    if rows.is_empty() {
        return Err(Error::Size("no untreated rows".into()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (lo, hi) = (rows[0].0, rows[rows.len() - 1].0);
    let constant_score = hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    let nbins = if constant_score { 1 } else { rows.len().min(10) };
    let (base, extra) = (rows.len() / nbins, rows.len() % nbins);
    let mut bins = Vec::with_capacity(nbins);
    let mut start = 0;
    for b in 0..nbins {
        let len = base + usize::from(b < extra);
        let chunk = &rows[start..start + len];
        start += len;
        let (mut tc, mut ec) = (Vec::new(), Vec::new());
        for &(_, i) in chunk {
            let r = &ds.records()[i];
            if r.is_trial() {
                tc.push(r.y);
            } else {
                ec.push(r.y);
            }
        }
        bins.push(DecileBin {
            bin: b + 1,
            score_lo: chunk[0].0,
            score_hi: chunk[len - 1].0,
            trial_control: FiveNumber::of(tc),
            external: FiveNumber::of(ec),
        });
    }
    Ok(DecileSummary {
        bins,
        constant_score,
    })
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<csv output>", e)
}

fn csv_writer<W: Write>(mut out: W, header: &[String]) -> Result<csv::Writer<W>> {
    for h in header {
        writeln!(out, "# {h}").map_err(io_err)?;
    }
    Ok(csv::Writer::from_writer(out))
}

fn name(names: &[String], j: usize) -> String {
    names.get(j).cloned().unwrap_or_else(|| format!("x{j}"))
}

/// `record` is `explained_variance`, `loading` or `score`; `skipped` with a
/// note when PCA could not run.
pub fn write_pca_csv<W: Write>(
    out: W,
    ds: &Dataset,
    pca: std::result::Result<&Pca, &str>,
    names: &[String],
    header: &[String],
) -> Result<()> {
    let mut w = csv_writer(out, header)?;
    w.write_record(["record", "label", "r", "pc1", "pc2", "note"])?;
    match pca {
        Err(note) => w.write_record(["skipped", "", "", "", "", note])?,
        Ok(p) => {
            w.write_record([
                "explained_variance",
                "",
                "",
                &fmt_sig12(p.fractions[0]),
                &fmt_sig12(p.fractions[1]),
                "",
            ])?;
            for (j, l) in p.kept.iter().zip(&p.loadings) {
                w.write_record(["loading", &name(names, *j), "", &fmt_sig12(l[0]), &fmt_sig12(l[1]), ""])?;
            }
            for j in &p.dropped {
                w.write_record(["dropped", &name(names, *j), "", "", "", "zero variance"])?;
            }
            for (i, (s, r)) in p.scores.iter().zip(ds.records()).enumerate() {
                w.write_record([
                    "score",
                    &(i + 1).to_string(),
                    &r.r.to_string(),
                    &fmt_sig12(s[0]),
                    &fmt_sig12(s[1]),
                    "",
                ])?;
            }
        }
    }
    w.flush().map_err(io_err)
}

pub fn write_proportions_csv<W: Write>(out: W, m: &MarginalShift, names: &[String], header: &[String]) -> Result<()> {
    let mut w = csv_writer(out, header)?;
    w.write_record(["covariate", "trial", "external"])?;
    for p in &m.proportions {
        w.write_record([name(names, p.covariate), fmt_sig12(p.trial), fmt_sig12(p.external)])?;
    }
    w.flush().map_err(io_err)
}

pub fn write_ecdf_csv<W: Write>(out: W, m: &MarginalShift, names: &[String], header: &[String]) -> Result<()> {
    let mut w = csv_writer(out, header)?;
    w.write_record(["covariate", "value", "trial", "external", "max_gap"])?;
    for e in &m.ecdf {
        let gap = fmt_sig12(e.max_gap);
        for k in 0..e.grid.len() {
            w.write_record([
                name(names, e.covariate),
                fmt_sig12(e.grid[k]),
                fmt_sig12(e.trial[k]),
                fmt_sig12(e.external[k]),
                gap.clone(),
            ])?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn write_deciles_csv<W: Write>(out: W, d: &DecileSummary, header: &[String]) -> Result<()> {
    let mut w = csv_writer(out, header)?;
    w.write_record([
        "bin", "group", "count", "score_lo", "score_hi", "min", "q1", "median", "q3", "max", "sparse",
        "constant_score",
    ])?;
    for b in &d.bins {
        for (group, s) in [("trial_control", &b.trial_control), ("external", &b.external)] {
            w.write_record([
                b.bin.to_string(),
                group.to_string(),
                s.count.to_string(),
                fmt_sig12(b.score_lo),
                fmt_sig12(b.score_hi),
                fmt_sig12(s.min),
                fmt_sig12(s.q1),
                fmt_sig12(s.median),
                fmt_sig12(s.q3),
                fmt_sig12(s.max),
                s.sparse.to_string(),
                d.constant_score.to_string(),
            ])?;
        }
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;

    fn ds(rows: Vec<(u8, u8, Vec<f64>, f64)>) -> Dataset {
        let p = rows[0].2.len();
        Dataset::new(rows.into_iter().map(|(r, t, x, y)| Record::new(r, t, x, y)).collect(), p).unwrap()
    }

    #[test]
    fn perfectly_correlated_pair() {
        let d = ds((0..6).map(|i| (1, 0, vec![i as f64, 2.0 * i as f64 + 1.0], 0.0)).collect());
        let p = pca_project(&d).unwrap();
        assert!((p.fractions[0] - 1.0).abs() < 1e-12);
        assert!(p.fractions[1].abs() < 1e-12);
        assert!(p.loadings[0][0] > 0.0);
    }

    #[test]
    fn zero_variance_column_dropped() {
        let d = ds((0..6)
            .map(|i| (1, 0, vec![i as f64, 3.0, ((i * 7) % 5) as f64], 0.0))
            .collect());
        let p = pca_project(&d).unwrap();
        assert_eq!(p.dropped, vec![1]);
        assert_eq!(p.kept, vec![0, 2]);
    }

    #[test]
    fn pca_needs_two_covariates() {
        let d = ds((0..6).map(|i| (1, 0, vec![i as f64], 0.0)).collect());
        assert!(matches!(pca_project(&d), Err(Error::Size(_))));
    }

    #[test]
    fn identical_groups_have_no_gap() {
        let mut rows = Vec::new();
        for i in 0..5 {
            rows.push((1, 0, vec![i as f64, (i % 2) as f64], 0.0));
            rows.push((0, 0, vec![i as f64, (i % 2) as f64], 0.0));
        }
        let m = marginal_shift(&ds(rows));
        assert_eq!(m.ecdf[0].max_gap, 0.0);
        assert_eq!(m.proportions[0].trial, m.proportions[0].external);
        assert_eq!(*m.ecdf[0].trial.last().unwrap(), 1.0);
    }

    #[test]
    fn opposite_binary_groups() {
        let rows = vec![(1, 0, vec![0.0], 0.0), (1, 1, vec![0.0], 0.0), (0, 0, vec![1.0], 0.0)];
        let m = marginal_shift(&ds(rows));
        assert_eq!((m.proportions[0].trial, m.proportions[0].external), (0.0, 1.0));
    }

    #[test]
    fn ten_rows_ten_singleton_bins() {
        let rows = (0..10).map(|i| (u8::from(i % 2 == 0), 0, vec![i as f64], i as f64)).collect();
        let d = ds(rows);
        let s = decile_outcome_summary(&d, &fit_score_model(&d, &FeatureBasis::linear(1)).unwrap()).unwrap();
        assert_eq!(s.bins.len(), 10);
        assert!(s.bins.iter().all(|b| b.trial_control.sparse && b.external.sparse));
        let total: usize = s.bins.iter().map(|b| b.trial_control.count + b.external.count).sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn constant_score_single_bin() {
        let rows = (0..30).map(|i| (u8::from(i < 15), 0, vec![i as f64], 1.0)).collect();
        let d = ds(rows);
        let s = decile_outcome_summary(&d, &OutcomeModel::constant(0, 2.0)).unwrap();
        assert!(s.constant_score);
        assert_eq!(s.bins.len(), 1);
    }
}
