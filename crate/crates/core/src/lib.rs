//! Treatment-effect estimation for randomized trials augmented with external
//! control data under covariate and outcome shift.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`]: records, datasets, CSV ingestion and seeded splits
//! * [`nuisance`]: logistic and least-squares working models
//! * [`shift`]: shift weights `k`, `ρ` and their density-ratio forms
//! * [`estimators`]: trial-only, augmented and shrinkage estimators
//! * [`sim`]: Gaussian simulation design and Monte Carlo experiments
//! * [`diagnostics`]: tabular distribution-shift summaries
//! * [`cli`]: configuration and the `shiftfuse` command-line workflows

pub mod cli;
pub mod data;
pub mod error;
pub mod diagnostics;
pub mod estimators;
pub mod linalg;
pub mod nuisance;
pub mod shift;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
