use std::fs::File;

use super::config::LoadedConfig;
use super::Context;
use crate::data::{load_csv, CsvSchema};
use crate::diagnostics::{
    decile_outcome_summary, fit_score_model, marginal_shift, pca_project, write_deciles_csv, write_ecdf_csv,
    write_pca_csv, write_proportions_csv,
};
use crate::error::{Error, Result};
use crate::nuisance::ModelBases;

pub(crate) struct Plan {
    schema: CsvSchema,
    bases: ModelBases,
}

pub(crate) fn plan(loaded: &LoadedConfig) -> Result<Plan> {
    let schema = loaded.schema()?;
    let bases = loaded.bases(&schema)?;
    loaded.input()?;
    Ok(Plan { schema, bases })
}

pub(crate) fn run(ctx: &Context, plan: &Plan) -> Result<()> {
    let path = ctx.loaded.input()?;
    let file = File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let ds = load_csv(file, &plan.schema)?;
    let names = &plan.schema.covariate_columns;
    let header = ctx.header();

    let pca = pca_project(&ds);
    let note = pca.as_ref().err().map(|e| e.to_string());
    let pca_arg = match (&pca, &note) {
        (Ok(p), _) => Ok(p),
        (Err(_), Some(n)) => Err(n.as_str()),
        (Err(_), None) => unreachable!(),
    };
    write_pca_csv(ctx.create("pca.csv")?, &ds, pca_arg, names, &header)?;

    let shift = marginal_shift(&ds);
    write_proportions_csv(ctx.create("proportions.csv")?, &shift, names, &header)?;
    write_ecdf_csv(ctx.create("ecdf.csv")?, &shift, names, &header)?;

    let score = fit_score_model(&ds, &plan.bases.mu)?;
    let deciles = decile_outcome_summary(&ds, &score)?;
    write_deciles_csv(ctx.create("deciles.csv")?, &deciles, &header)
}
