//! Observations, pooled trial + external-control datasets, and CSV ingestion.
//!
//! A [`Record`] is one `(r, t, x, y)` observation: `r = 1` marks a trial row,
//! `r = 0` an external-control (EC) row. EC rows are always untreated.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Source indicator, 1 = trial.
    pub r: u8,
    /// Treatment indicator.
    pub t: u8,
    pub x: Vec<f64>,
    pub y: f64,
}

impl Record {
    pub fn new(r: u8, t: u8, x: Vec<f64>, y: f64) -> Self {
        Self { r, t, x, y }
    }

    #[inline]
    pub fn is_trial(&self) -> bool {
        self.r == 1
    }

    #[inline]
    pub fn is_treated(&self) -> bool {
        self.t == 1
    }

    #[inline]
    pub fn rf(&self) -> f64 {
        f64::from(self.r)
    }

    #[inline]
    pub fn tf(&self) -> f64 {
        f64::from(self.t)
    }

    fn check(&self, row: usize, p: usize) -> Result<()> {
        if self.r > 1 || self.t > 1 {
            return Err(Error::Integrity {
                row,
                message: format!("indicators must be 0/1, got r={} t={}", self.r, self.t),
            });
        }
        if self.r == 0 && self.t == 1 {
            return Err(Error::Integrity {
                row,
                message: "external-control row marked as treated".into(),
            });
        }
        if self.x.len() != p {
            return Err(Error::Dimension(format!(
                "row {row} has {} covariates, expected {p}",
                self.x.len()
            )));
        }
        if !self.y.is_finite() || self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrity {
                row,
                message: "non-finite covariate or outcome".into(),
            });
        }
        Ok(())
    }
}

/// Pooled trial + EC sample. Immutable once built; counts are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    p: usize,
    n: usize,
}

impl Dataset {
    /// Validates every record and caches the trial count.
    pub fn new(records: Vec<Record>, p: usize) -> Result<Self> {
        for (i, rec) in records.iter().enumerate() {
            rec.check(i + 1, p)?;
        }
        let n = records.iter().filter(|r| r.is_trial()).count();
        Ok(Self { records, p, n })
    }

    pub fn empty(p: usize) -> Self {
        Self {
            records: Vec::new(),
            p,
            n: 0,
        }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of trial rows.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of rows.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn kappa_hat(&self) -> f64 {
        self.n as f64 / self.records.len() as f64
    }

    pub fn ec_count(&self) -> usize {
        self.records.len() - self.n
    }

    /// Rows at the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records: Vec<Record> = indices.iter().map(|&i| self.records[i].clone()).collect();
        let n = records.iter().filter(|r| r.is_trial()).count();
        Dataset {
            records,
            p: self.p,
            n,
        }
    }

    /// Same rows with `shift` added to every outcome.
    pub fn with_outcome_shift(&self, shift: f64) -> Dataset {
        let records = self
            .records
            .iter()
            .map(|r| Record {
                y: r.y + shift,
                ..r.clone()
            })
            .collect();
        Dataset {
            records,
            p: self.p,
            n: self.n,
        }
    }

    /// Indices of each `(r, t)` cell: trial treated, trial control, EC.
    pub fn cell_indices(&self) -> [Vec<usize>; 3] {
        let mut cells: [Vec<usize>; 3] = Default::default();
        for (i, rec) in self.records.iter().enumerate() {
            cells[cell_of(rec)].push(i);
        }
        cells
    }
}

fn cell_of(rec: &Record) -> usize {
    match (rec.r, rec.t) {
        (1, 1) => 0,
        (1, _) => 1,
        _ => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub source_column: String,
    pub treatment_column: String,
    /// Outcome column; when `outcome_difference` is set this is only a label
    /// for the derived outcome.
    pub outcome_column: String,
    pub covariate_columns: Vec<String>,
    #[serde(default)]
    pub outcome_difference: Option<(String, String)>,
}

impl CsvSchema {
    pub fn new(
        source: &str,
        treatment: &str,
        outcome: &str,
        covariates: &[&str],
    ) -> Self {
        Self {
            source_column: source.into(),
            treatment_column: treatment.into(),
            outcome_column: outcome.into(),
            covariate_columns: covariates.iter().map(|s| s.to_string()).collect(),
            outcome_difference: None,
        }
    }

    pub fn with_outcome_difference(mut self, minuend: &str, subtrahend: &str) -> Self {
        self.outcome_difference = Some((minuend.into(), subtrahend.into()));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariate_columns.is_empty() {
            return Err(Error::Schema("at least one covariate column is required".into()));
        }
        let mut names: Vec<&str> = vec![
            &self.source_column,
            &self.treatment_column,
            &self.outcome_column,
        ];
        names.extend(self.covariate_columns.iter().map(String::as_str));
        let mut seen = HashSet::new();
        for name in names {
            if !seen.insert(name) {
                return Err(Error::Schema(format!("column `{name}` listed twice")));
            }
        }
        if let Some((a, b)) = &self.outcome_difference {
            if a == b {
                return Err(Error::Schema("outcome difference uses the same column twice".into()));
            }
        }
        Ok(())
    }
}

/// Reads a header-first CSV. Lines starting with `#` are skipped.
pub fn load_csv<R: Read>(stream: R, schema: &CsvSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(stream);
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
    };
    let r_col = column(&schema.source_column)?;
    let t_col = column(&schema.treatment_column)?;
    let y_cols = match &schema.outcome_difference {
        Some((a, b)) => (column(a)?, Some(column(b)?)),
        None => (column(&schema.outcome_column)?, None),
    };
    let x_cols = schema
        .covariate_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let num = |col: usize| -> Result<f64> {
            let raw = row.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row: line,
                    column: headers.get(col).unwrap_or("").to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        let indicator = |col: usize| -> Result<u8> {
            let v = num(col)?;
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(Error::Integrity {
                    row: line,
                    message: format!("column `{}` must be 0 or 1, got {v}", &headers[col]),
                })
            }
        };
        let r = indicator(r_col)?;
        let t = indicator(t_col)?;
        let y = match y_cols {
            (a, Some(b)) => num(a)? - num(b)?,
            (a, None) => num(a)?,
        };
        let x = x_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        let rec = Record::new(r, t, x, y);
        rec.check(line, x_cols.len())?;
        records.push(rec);
    }
    Dataset::new(records, x_cols.len())
}

/// Formats `v` rounded to 12 significant digits, shortest form.
pub fn fmt_sig12(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    format!("{rounded}")
}

/// Writes the dataset with the schema's column names (outcome as a plain column).
pub fn write_csv<W: Write>(out: W, ds: &Dataset, schema: &CsvSchema) -> Result<()> {
    if schema.covariate_columns.len() != ds.p() {
        return Err(Error::Dimension(format!(
            "schema lists {} covariates, dataset has {}",
            schema.covariate_columns.len(),
            ds.p()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        schema.source_column.clone(),
        schema.treatment_column.clone(),
        schema.outcome_column.clone(),
    ];
    header.extend(schema.covariate_columns.iter().cloned());
    w.write_record(&header)?;
    for rec in ds.records() {
        let mut row = vec![rec.r.to_string(), rec.t.to_string(), fmt_sig12(rec.y)];
        row.extend(rec.x.iter().map(|&v| fmt_sig12(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Row indices of a seeded, `(r, t)`-stratified half split.
pub fn split_half_indices(ds: &Dataset, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if ds.len() < 2 {
        return Err(Error::Size(format!(
            "split requires at least 2 rows, got {}",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut primary = Vec::with_capacity(ds.len() / 2 + 1);
    let mut validation = Vec::with_capacity(ds.len() / 2 + 1);
    // odd cells alternate which half receives the extra row
    let mut extra_to_primary = true;
    for mut cell in ds.cell_indices() {
        cell.shuffle(&mut rng);
        let mut half = cell.len() / 2;
        if cell.len() % 2 == 1 {
            if extra_to_primary {
                half += 1;
            }
            extra_to_primary = !extra_to_primary;
        }
        primary.extend_from_slice(&cell[..half]);
        validation.extend_from_slice(&cell[half..]);
    }
    primary.sort_unstable();
    validation.sort_unstable();
    Ok((primary, validation))
}

pub fn split_half(ds: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_half_indices(ds, seed)?;
    Ok((ds.subset(&a), ds.subset(&b)))
}

pub fn concat(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    if a.p() != b.p() {
        return Err(Error::Dimension(format!(
            "cannot concatenate p={} with p={}",
            a.p(),
            b.p()
        )));
    }
    let mut records = a.records().to_vec();
    records.extend_from_slice(b.records());
    Ok(Dataset {
        records,
        p: a.p(),
        n: a.n() + b.n(),
    })
}
