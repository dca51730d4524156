//! Python bindings: `import shiftfuse`.

use std::fs::File;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use shiftfuse::data::{self, CsvSchema, Record};
use shiftfuse::estimators::{self, AnalysisOptions, VarianceMode};
use shiftfuse::nuisance::{self, FeatureBasis, ModelBases, Term};
use shiftfuse::shift::eval_weights;
use shiftfuse::sim::{self, DgpSpec};

create_exception!(shiftfuse, ShiftfuseError, PyException);

fn err(e: shiftfuse::Error) -> PyErr {
    ShiftfuseError::new_err(format!("[{}] {e}", e.kind()))
}

/// Rows of `(r, t, x, y)` with trial membership `r` and treatment `t`.
#[pyclass(name = "Dataset", module = "shiftfuse", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(r: Vec<u8>, t: Vec<u8>, x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        let n = r.len();
        if t.len() != n || x.len() != n || y.len() != n {
            return Err(err(shiftfuse::Error::Dimension("r, t, x and y must have equal length".into())));
        }
        let p = x.first().map_or(0, Vec::len);
        let recs = (0..n).map(|i| Record::new(r[i], t[i], x[i].clone(), y[i])).collect();
        Ok(Self {
            inner: data::Dataset::new(recs, p).map_err(err)?,
        })
    }

    /// Reads a CSV; `outcome_difference=(a, b)` uses column `a` minus `b`.
    #[staticmethod]
    #[pyo3(signature = (path, source, treatment, outcome, covariates, outcome_difference=None))]
    fn from_csv(
        path: &str,
        source: &str,
        treatment: &str,
        outcome: &str,
        covariates: Vec<String>,
        outcome_difference: Option<(String, String)>,
    ) -> PyResult<Self> {
        let cov: Vec<&str> = covariates.iter().map(String::as_str).collect();
        let mut schema = CsvSchema::new(source, treatment, outcome, &cov);
        if let Some((a, b)) = outcome_difference {
            schema = schema.with_outcome_difference(&a, &b);
        }
        let f = File::open(path).map_err(|e| ShiftfuseError::new_err(format!("[io] {path}: {e}")))?;
        Ok(Self {
            inner: data::load_csv(f, &schema).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    /// Number of trial rows.
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn kappa_hat(&self) -> f64 {
        self.inner.kappa_hat()
    }

    #[getter]
    fn r(&self) -> Vec<u8> {
        self.inner.records().iter().map(|r| r.r).collect()
    }

    #[getter]
    fn t(&self) -> Vec<u8> {
        self.inner.records().iter().map(|r| r.t).collect()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.records().iter().map(|r| r.y).collect()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.records().iter().map(|r| r.x.clone()).collect()
    }

    /// Stratified half split into `(primary, validation)`.
    fn split_half(&self, seed: u64) -> PyResult<(Self, Self)> {
        let (a, b) = data::split_half(&self.inner, seed).map_err(err)?;
        Ok((Self { inner: a }, Self { inner: b }))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(rows={}, trial={}, p={})",
            self.inner.len(),
            self.inner.n(),
            self.inner.p()
        )
    }
}

#[pyclass(name = "Estimate", module = "shiftfuse", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyEstimate {
    method: String,
    estimand: String,
    /// `primary`, `validation` or `none`.
    fit_on: String,
    value: f64,
    se: f64,
    ci: (f64, f64),
}

impl PyEstimate {
    fn from(e: &estimators::Estimate, fit_on: &str) -> Self {
        Self {
            method: e.method.as_str().into(),
            estimand: e.estimand.as_str().into(),
            fit_on: fit_on.into(),
            value: e.value,
            se: e.se,
            ci: e.ci,
        }
    }
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "Estimate({} {} [{}] = {:.4} ± {:.4})",
            self.method, self.estimand, self.fit_on, self.value, self.se
        )
    }
}

fn basis(spec: Option<Vec<String>>, default: FeatureBasis) -> PyResult<FeatureBasis> {
    match spec {
        None => Ok(default),
        Some(terms) => {
            let terms = terms
                .iter()
                .map(|s| s.parse::<Term>())
                .collect::<shiftfuse::Result<Vec<_>>>()
                .map_err(err)?;
            FeatureBasis::new(terms).map_err(err)
        }
    }
}

/// Unadjusted arm means within the trial, for `tau1`, `tau0`, `tau`.
#[pyfunction]
fn gold(ds: &PyDataset) -> PyResult<Vec<PyEstimate>> {
    let e = estimators::tau_gold(&ds.inner).map_err(err)?;
    Ok(e.iter().map(|e| PyEstimate::from(e, "none")).collect())
}

/// Trial-only, augmented and shrinkage estimates.
///
/// Outcome models are fitted on the trial rows of `primary`. Shift models
/// are fitted on `validation` when given, otherwise on `primary`; standard
/// errors account for that first stage. Basis terms are strings such as
/// `"intercept"`, `"linear:0"`, `"square:0"`, `"exp:0"`, `"outcome"`.
#[pyfunction]
#[pyo3(signature = (primary, validation=None, k_basis=None, rho_basis=None, mu_basis=None, shrink_combined=false))]
fn estimate(
    py: Python<'_>,
    primary: &PyDataset,
    validation: Option<&PyDataset>,
    k_basis: Option<Vec<String>>,
    rho_basis: Option<Vec<String>>,
    mu_basis: Option<Vec<String>>,
    shrink_combined: bool,
) -> PyResult<Vec<PyEstimate>> {
    let p = primary.inner.p();
    let lin = ModelBases::linear(p);
    let bases = ModelBases {
        k: basis(k_basis, lin.k)?,
        rho: basis(rho_basis, lin.rho)?,
        mu: basis(mu_basis, lin.mu)?,
    };
    bases.validate(p).map_err(err)?;
    let primary = primary.inner.clone();
    let validation = validation.map(|v| v.inner.clone());
    py.detach(move || {
        let shift_data = validation.as_ref().unwrap_or(&primary);
        let fitted = nuisance::Nuisances::fit(&primary, shift_data, &bases)?;
        let pi = nuisance::estimate_pi(&primary)?;
        let w = eval_weights(&primary, &fitted.k, &fitted.rho)?;
        let variance = match &validation {
            Some(v) => VarianceMode::Validation {
                data: v,
                k_model: &fitted.k,
                rho_model: &fitted.rho,
            },
            None => VarianceMode::SameSample {
                k_model: &fitted.k,
                rho_model: &fitted.rho,
            },
        };
        let opts = AnalysisOptions {
            variance,
            shrink_combined,
        };
        let a = estimators::analyze(&primary, &fitted.mu1, &fitted.mu0, &w, pi, &opts)?;
        let fit_on = if validation.is_some() { "validation" } else { "primary" };
        let mut out: Vec<PyEstimate> = a.trial.iter().map(|e| PyEstimate::from(e, "none")).collect();
        out.extend(a.augmented.iter().chain(&a.shrinkage).map(|e| PyEstimate::from(e, fit_on)));
        Ok(out)
    })
    .map_err(err)
}

/// Draws one dataset from the Gaussian design (default parameters unless
/// `n`, `total` are given).
#[pyfunction]
#[pyo3(signature = (seed, n=None, total=None))]
fn generate(seed: u64, n: Option<usize>, total: Option<usize>) -> PyResult<PyDataset> {
    let base = DgpSpec::default();
    let dgp = base.with_sizes(n.unwrap_or(base.n), total.unwrap_or(base.total));
    Ok(PyDataset {
        inner: sim::generate(&dgp, seed).map_err(err)?,
    })
}

/// `(tau1, tau0, tau)` of the default Gaussian design.
#[pyfunction]
fn true_tau() -> (f64, f64, f64) {
    sim::true_tau(&DgpSpec::default())
}

/// Runs `experiment1` or `experiment2` on the default design and returns
/// one dict per summary row.
#[pyfunction]
#[pyo3(signature = (experiment, replications, seed, multipliers=None))]
fn simulate<'py>(
    py: Python<'py>,
    experiment: &str,
    replications: usize,
    seed: u64,
    multipliers: Option<Vec<f64>>,
) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
    let dgp = DgpSpec::default();
    let summary = match experiment {
        "experiment1" => {
            let m = multipliers.unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0, 4.0]);
            py.detach(|| sim::run_experiment1(&dgp, &m, replications, seed))
        }
        "experiment2" => py.detach(|| {
            sim::run_experiment2(&dgp, &sim::experiment2_scenarios(), replications, seed)
        }),
        other => {
            return Err(ShiftfuseError::new_err(format!(
                "[config] unknown experiment `{other}`"
            )))
        }
    }
    .map_err(err)?;
    summary
        .rows
        .iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("regime", &r.regime)?;
            d.set_item("estimator", r.estimator.as_str())?;
            d.set_item("estimand", r.estimand.as_str())?;
            d.set_item("reps", r.reps)?;
            d.set_item("mean", r.mean)?;
            d.set_item("bias", r.bias)?;
            d.set_item("sd", r.sd)?;
            d.set_item("mean_se", r.mean_se)?;
            d.set_item("coverage", r.coverage)?;
            Ok(d)
        })
        .collect()
}

#[pymodule(name = "shiftfuse")]
fn shiftfuse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ShiftfuseError", m.py().get_type::<ShiftfuseError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(gold, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(true_tau, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
