use serde::Serialize;

use super::config::{Experiment, LoadedConfig, SimulationConfig};
use super::{Context, Provenance};
use crate::error::{Error, Result};
use crate::sim::{experiment1_scenarios, run_scenarios, write_summary_csv, DgpSpec, ScenarioSpec, MIN_REPLICATIONS};

pub(crate) struct Plan {
    sim: SimulationConfig,
    scenarios: Vec<ScenarioSpec>,
}

pub(crate) fn plan(loaded: &LoadedConfig) -> Result<Plan> {
    let sim = loaded
        .config
        .simulation
        .clone()
        .ok_or_else(|| Error::Config("`simulation` section is required for simulate".into()))?;
    sim.dgp.validate()?;
    if sim.replications < MIN_REPLICATIONS {
        return Err(Error::Config(format!(
            "at least {MIN_REPLICATIONS} replications are required, got {}",
            sim.replications
        )));
    }
    let scenarios = match sim.experiment {
        Experiment::Experiment1 => {
            if sim.multipliers.iter().any(|m| !m.is_finite() || *m < 0.0) {
                return Err(Error::Config("validation multipliers must be finite and >= 0".into()));
            }
            experiment1_scenarios(&sim.multipliers)
        }
        Experiment::Experiment2 => sim.scenarios(),
    };
    for s in &scenarios {
        s.validate()?;
    }
    Ok(Plan { sim, scenarios })
}

#[derive(Serialize)]
struct RunReport<'a> {
    provenance: &'a Provenance,
    experiment: Experiment,
    replications: usize,
    dgp: &'a DgpSpec,
    truth: Truth,
    scenarios: &'a [ScenarioSpec],
    failures: Vec<Failure>,
}

#[derive(Serialize)]
struct Truth {
    tau1: f64,
    tau0: f64,
    tau: f64,
}

#[derive(Serialize)]
struct Failure {
    regime: String,
    failed: usize,
}

pub(crate) fn run(ctx: &Context, plan: &Plan) -> Result<()> {
    let summary = run_scenarios(&plan.sim.dgp, &plan.scenarios, plan.sim.replications, ctx.seed)?;
    write_summary_csv(ctx.create("results.csv")?, &summary, &ctx.header())?;
    let (tau1, tau0, tau) = summary.truth;
    ctx.write_json(
        "run.json",
        &RunReport {
            provenance: &ctx.provenance,
            experiment: plan.sim.experiment,
            replications: plan.sim.replications,
            dgp: &plan.sim.dgp,
            truth: Truth { tau1, tau0, tau },
            scenarios: &plan.scenarios,
            failures: summary
                .failures
                .iter()
                .map(|(r, f)| Failure {
                    regime: r.clone(),
                    failed: *f,
                })
                .collect(),
        },
    )
}
