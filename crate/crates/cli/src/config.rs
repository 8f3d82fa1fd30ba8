use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use exo_gate::basis::StateSpace;
use exo_gate::calibrate::{Objective, ObjectiveMode, Tolerances};
use exo_gate::engine::{CrossPair, EngineError, GateContext, StepPolicy, DEFAULT_WINDOW};
use exo_gate::metrics::LogicalFrame;
use exo_gate::model::{BiasConfig, LogicalEncoding};
use exo_gate::noise::{NoiseError, NoiseParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Pulse widths to visit, in units of `1 / Omega^A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub min: f64,
    pub max: f64,
    /// Log-spaced points from `min` to `max`, both included.
    pub points: usize,
    /// Explicit widths; overrides `min`, `max` and `points`.
    pub values: Option<Vec<f64>>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid { min: 10.0, max: 2000.0, points: 15, values: None }
    }
}

impl SweepGrid {
    pub fn values(&self) -> Vec<f64> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        match self.points {
            0 => Vec::new(),
            1 => vec![self.min],
            n => {
                let step = (self.max / self.min).ln() / (n - 1) as f64;
                (0..n).map(|k| self.min * (step * k as f64).exp()).collect()
            }
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let values = self.values();
        if values.is_empty() {
            return Err(ConfigError::Invalid("sweep grid is empty".into()));
        }
        if values.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(ConfigError::Invalid("sweep widths must be positive".into()));
        }
        Ok(())
    }
}

/// One JSON document describing a run; every field falls back to the
/// defaults of the linear layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub bias: BiasConfig,
    pub cross: CrossPair,
    /// Pulse truncation half-width in units of `sigma_t`.
    pub window: f64,
    pub space: StateSpace,
    pub step: StepPolicy,
    /// Peak coupling must stay below `gap / guard_ratio`.
    pub guard_ratio: f64,
    pub mode: ObjectiveMode,
    pub j1_weight: f64,
    pub tolerances: Tolerances,
    pub sweep: SweepGrid,
    /// Width used by `simulate`.
    pub sigma_t: f64,
    /// Noise parameters, including the master seed and trial count.
    pub noise: NoiseParams,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bias: BiasConfig::default(),
            cross: CrossPair::default(),
            window: DEFAULT_WINDOW,
            space: StateSpace::Logical,
            step: StepPolicy::with_max_phase(1.0),
            guard_ratio: 1.0,
            mode: ObjectiveMode::Weighted,
            j1_weight: 3.0,
            tolerances: Tolerances::default(),
            sweep: SweepGrid::default(),
            sigma_t: 1000.0,
            noise: NoiseParams::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn objective(&self) -> Objective {
        Objective { mode: self.mode, j1_weight: self.j1_weight }
    }

    pub fn context(&self) -> Result<GateContext, ConfigError> {
        Ok(GateContext::new(self.bias, self.cross, self.space, self.window, self.step, self.guard_ratio)?)
    }

    pub fn frame(&self) -> LogicalFrame {
        LogicalFrame::new(&self.bias, LogicalEncoding::dfs())
    }

    /// Check everything that can be checked before simulating.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.context()?;
        self.noise.validate()?;
        self.sweep.validate()?;
        if !(self.sigma_t.is_finite() && self.sigma_t > 0.0) {
            return Err(ConfigError::Invalid(format!("sigma_t {} must be > 0", self.sigma_t)));
        }
        if !(self.guard_ratio.is_finite() && self.guard_ratio > 0.0) {
            return Err(ConfigError::Invalid(format!("guard_ratio {} must be > 0", self.guard_ratio)));
        }
        if !(self.j1_weight.is_finite() && self.j1_weight >= 0.0) {
            return Err(ConfigError::Invalid(format!("j1_weight {} must be >= 0", self.j1_weight)));
        }
        if !(self.step.max_phase > 0.0 && self.step.halving_tolerance > 0.0) {
            return Err(ConfigError::Invalid("step policy needs a positive phase and tolerance".into()));
        }
        if !(self.tolerances.x_rel > 0.0 && self.tolerances.max_iterations > 0) {
            return Err(ConfigError::Invalid("calibration tolerances must be positive".into()));
        }
        Ok(())
    }
}
