//! CSV and JSON writers with embedded run metadata.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::run::{PointOutcome, Simulation};
use crate::verify::Check;
use crate::VERSION;

/// Bumped whenever the sweep columns change.
pub const SWEEP_SCHEMA: u32 = 1;

pub const SWEEP_COLUMNS: [&str; 24] = [
    "index",
    "sigma_t",
    "duration",
    "amplitude",
    "seed_amplitude",
    "area",
    "steps",
    "objective",
    "d_j0",
    "d_j1",
    "leakage_j0",
    "leakage_j1",
    "d_local_z_j0",
    "d_local_z_j1",
    "trials",
    "noisy_d_j0_mean",
    "noisy_d_j0_std",
    "noisy_d_j1_mean",
    "noisy_d_j1_std",
    "noisy_objective_mean",
    "noisy_objective_std",
    "noisy_leakage_j0_mean",
    "noisy_leakage_j1_mean",
    "error",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl Metadata {
    pub fn new(config: &RunConfig) -> Self {
        Metadata { tool: "exo-gate".into(), version: VERSION.into(), seed: config.noise.seed, config: config.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema: u32,
    pub metadata: Metadata,
    pub points: Vec<PointOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub metadata: Metadata,
    pub sigma_t: f64,
    #[serde(flatten)]
    pub simulation: Simulation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub version: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn row(outcome: &PointOutcome, window: f64) -> Vec<String> {
    let f = |x: f64| format!("{x:.12e}");
    match outcome {
        PointOutcome::Done(p) => {
            let c = &p.calibration;
            let n = &p.noise;
            vec![
                p.index.to_string(),
                f(p.sigma_t),
                f(2.0 * window * p.sigma_t),
                f(c.amplitude),
                f(c.seed_amplitude),
                f(c.amplitude * exo_gate::engine::PulseShape::unit_area(p.sigma_t, window)),
                c.steps.to_string(),
                f(c.objective),
                f(c.figures.j0.d),
                f(c.figures.j1.d),
                f(c.figures.j0.leakage),
                f(c.figures.j1.leakage),
                f(c.figures.j0.d_local_z),
                f(c.figures.j1.d_local_z),
                n.trials.to_string(),
                f(n.d_j0.mean),
                f(n.d_j0.std),
                f(n.d_j1.mean),
                f(n.d_j1.std),
                f(n.objective.mean),
                f(n.objective.std),
                f(n.leakage_j0.mean),
                f(n.leakage_j1.mean),
                String::new(),
            ]
        }
        PointOutcome::Failed(e) => {
            let mut r = vec![String::new(); SWEEP_COLUMNS.len()];
            r[0] = e.index.to_string();
            r[1] = f(e.sigma_t);
            r[SWEEP_COLUMNS.len() - 1] = e.error.clone();
            r
        }
    }
}

/// Comment lines (`# ...`) with the schema, version, seed and config, then
/// one CSV row per sweep point in grid order.
pub fn write_sweep_csv<W: Write>(mut out: W, config: &RunConfig, points: &[PointOutcome]) -> std::io::Result<()> {
    writeln!(out, "# exo-gate sweep schema {SWEEP_SCHEMA}")?;
    writeln!(out, "# version {VERSION}")?;
    writeln!(out, "# seed {}", config.noise.seed)?;
    writeln!(out, "# config {}", serde_json::to_string(config)?)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for p in points {
        w.write_record(row(p, config.window))?;
    }
    w.flush()
}

pub fn sweep_summary(config: &RunConfig, points: Vec<PointOutcome>) -> SweepSummary {
    SweepSummary { schema: SWEEP_SCHEMA, metadata: Metadata::new(config), points }
}
