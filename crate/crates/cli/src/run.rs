//! Sweep points and single-gate reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use exo_gate::calibrate::{optimize_amplitude, CalibrationError, CalibrationResult};
use exo_gate::engine::GateContext;
use exo_gate::metrics::{BlockEntries, GateReport, LogicalFrame, NoiseSummary, SubspaceFigures, TrialFigures};
use exo_gate::model::TotalJ;
use exo_gate::noise::{noisy_trial, NoiseError, NoiseParams};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// One calibrated sweep point with its noise statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub sigma_t: f64,
    pub calibration: CalibrationResult,
    pub noise: NoiseSummary,
}

/// A sweep point that could not be completed; the sweep carries on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub index: usize,
    pub sigma_t: f64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointOutcome {
    Done(Box<SweepPoint>),
    Failed(PointFailure),
}

impl PointOutcome {
    pub fn sigma_t(&self) -> f64 {
        match self {
            PointOutcome::Done(p) => p.sigma_t,
            PointOutcome::Failed(f) => f.sigma_t,
        }
    }

    pub fn point(&self) -> Option<&SweepPoint> {
        match self {
            PointOutcome::Done(p) => Some(p.as_ref()),
            PointOutcome::Failed(_) => None,
        }
    }
}

/// Noise trials `0 .. params.trials` in parallel, returned in trial order.
pub fn noise_trials(
    ctx: &GateContext,
    frame: &LogicalFrame,
    calibration: &CalibrationResult,
    params: &NoiseParams,
) -> Result<Vec<TrialFigures>, RunError> {
    let pulse = ctx.pulse(calibration.amplitude, calibration.sigma_t).map_err(CalibrationError::from)?;
    (0..params.trials)
        .into_par_iter()
        .map(|trial| Ok(noisy_trial(ctx, frame, &pulse, calibration.steps, params, trial)?))
        .collect()
}

fn summarize(config: &RunConfig, trials: &[TrialFigures]) -> NoiseSummary {
    let objective = config.objective();
    NoiseSummary::from_trials(trials, |d0, d1| objective.value(d0, d1))
}

pub fn run_point(
    config: &RunConfig,
    ctx: &GateContext,
    frame: &LogicalFrame,
    index: usize,
    sigma_t: f64,
) -> Result<SweepPoint, RunError> {
    let calibration = optimize_amplitude(ctx, frame, sigma_t, &config.objective(), &config.tolerances)?;
    let trials = noise_trials(ctx, frame, &calibration, &config.noise)?;
    Ok(SweepPoint { index, sigma_t, calibration, noise: summarize(config, &trials) })
}

/// Calibrate and noise-test every grid point; output order follows the grid.
pub fn run_sweep(config: &RunConfig) -> Result<Vec<PointOutcome>, RunError> {
    config.validate()?;
    let ctx = config.context()?;
    let frame = config.frame();
    let grid = config.sweep.values();
    Ok(grid
        .par_iter()
        .enumerate()
        .map(|(index, &sigma_t)| match run_point(config, &ctx, &frame, index, sigma_t) {
            Ok(p) => PointOutcome::Done(Box::new(p)),
            Err(e) => PointOutcome::Failed(PointFailure { index, sigma_t, error: e.to_string() }),
        })
        .collect())
}

/// One calibrated gate at `config.sigma_t` with full diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub calibration: CalibrationResult,
    pub report: GateReport,
}

pub fn simulate(config: &RunConfig) -> Result<Simulation, RunError> {
    config.validate()?;
    let ctx = config.context()?;
    let frame = config.frame();
    let calibration = optimize_amplitude(&ctx, &frame, config.sigma_t, &config.objective(), &config.tolerances)?;
    let pulse = calibration.pulse(config.window).map_err(CalibrationError::from)?;
    let u = ctx.composite_with_steps(&pulse, calibration.steps).map_err(CalibrationError::from)?;
    let mut blocks = Vec::new();
    let mut noiseless = Vec::new();
    for j in TotalJ::BOTH {
        let block = frame.gate_block(&u, j).map_err(CalibrationError::from)?;
        blocks.push(BlockEntries::from(&block));
        noiseless.push(SubspaceFigures::of(&block));
    }
    let trials = noise_trials(&ctx, &frame, &calibration, &config.noise)?;
    let noise = (!trials.is_empty()).then(|| summarize(config, &trials));
    let report = GateReport {
        pulse,
        area: pulse.area(),
        steps: calibration.steps,
        noiseless,
        blocks,
        noise,
        trials,
    };
    Ok(Simulation { calibration, report })
}
