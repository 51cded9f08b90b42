//! Per-trial CSV logs and JSON estimate records.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{MonteCarloEstimate, Simulator, TrialOutcome};
use crate::error::{Error, Result};
use crate::sensing::Origin;

pub const OUTCOME_COLUMNS: [&str; 6] = ["trial_index", "lambda", "tau", "delay", "false_alarm", "censored"];

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Storage(e.to_string())
}

/// One row per trial; `tau`/`delay` are empty when undefined.
pub fn write_outcomes_csv<W: Write>(outcomes: &[TrialOutcome], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(OUTCOME_COLUMNS).map_err(io_err)?;
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for o in outcomes {
        out.write_record([
            o.trial_index.to_string(),
            o.lambda.to_string(),
            opt(o.tau),
            opt(o.delay),
            u8::from(o.false_alarm).to_string(),
            u8::from(o.censored).to_string(),
        ])
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Every parameter and seed behind a simulated estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub matrix_origin: Origin,
    pub rows: usize,
    pub cols: usize,
    pub signal: Vec<f64>,
    pub rho: f64,
    pub pi0: f64,
    pub sigma2: f64,
    pub threshold_a: f64,
    pub horizon: u64,
    pub master_seed: u64,
    pub observation_model: String,
    pub projection_energy: f64,
    pub estimate: MonteCarloEstimate,
}

impl SimulationRecord {
    pub fn new(sim: &Simulator, estimate: MonteCarloEstimate) -> Self {
        let spec = sim.spec();
        Self {
            matrix_origin: spec.matrix.origin().clone(),
            rows: spec.matrix.rows(),
            cols: spec.matrix.cols(),
            signal: spec.signal.values().to_vec(),
            rho: spec.config.rho,
            pi0: spec.config.pi0,
            sigma2: spec.config.sigma2,
            threshold_a: spec.config.threshold_a,
            horizon: spec.horizon,
            master_seed: spec.master_seed,
            observation_model: sim.model_name().to_string(),
            projection_energy: sim.filter().projection_energy,
            estimate,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(io_err)
    }
}
