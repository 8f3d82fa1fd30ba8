//! 1/f charge noise and its effect on exchange amplitudes.
//!
//! Voltage noise with one-sided spectral density `N^2 / f` is synthesized
//! spectrally and mapped onto each junction as `Omega -> Omega (1 + dV / I)`.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BlockUnitary, EngineError, GateContext, PulseShape, Schedule};
use crate::metrics::{LogicalFrame, MetricsError, SubspaceFigures, TrialFigures};
use crate::model::{Junction, TotalJ};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("noise band is empty: f_min {f_min:.3e} >= f_max {f_max:.3e}")]
    EmptyBand { f_min: f64, f_max: f64 },
    #[error("invalid noise parameters: {0}")]
    InvalidParams(String),
    #[error("noise trace has {trace} samples, schedule has {schedule} steps")]
    GridMismatch { trace: usize, schedule: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// `N` in `S(f) = N^2 / f`, volts.
    pub amplitude_n: f64,
    /// `I = Omega / |dOmega/dV|`, volts.
    pub insensitivity_i: f64,
    /// `f_min = f_min_factor / duration`.
    pub f_min_factor: f64,
    /// `f_max = f_max_factor / dt`; 0.5 is Nyquist.
    pub f_max_factor: f64,
    /// Log-spaced harmonics covering `[f_min, 1 / (2 duration)]`, below the FFT grid.
    pub low_harmonics: usize,
    /// One shared trace for every junction instead of independent ones.
    pub correlated: bool,
    pub seed: u64,
    pub trials: usize,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            amplitude_n: 1e-4,
            insensitivity_i: 1.0,
            f_min_factor: 0.1,
            f_max_factor: 0.5,
            low_harmonics: 4,
            correlated: false,
            seed: 0,
            trials: 20,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.amplitude_n.is_finite() && self.amplitude_n >= 0.0) {
            return Err(NoiseError::InvalidParams(format!("N = {} must be >= 0", self.amplitude_n)));
        }
        if !(self.insensitivity_i.is_finite() && self.insensitivity_i > 0.0) {
            return Err(NoiseError::InvalidParams(format!("I = {} must be > 0", self.insensitivity_i)));
        }
        if !(self.f_min_factor > 0.0 && self.f_max_factor > 0.0 && self.f_max_factor <= 0.5) {
            return Err(NoiseError::InvalidParams("band factors must satisfy 0 < f_min, 0 < f_max <= 0.5".into()));
        }
        Ok(())
    }

    pub fn ratio(&self) -> f64 {
        self.amplitude_n / self.insensitivity_i
    }

    /// `(f_min, f_max)` for a run of `duration` sampled every `dt`.
    pub fn band(&self, duration: f64, dt: f64) -> (f64, f64) {
        (self.f_min_factor / duration, self.f_max_factor / dt)
    }

    /// Random stream of one junction in one trial.
    pub fn rng(&self, trial: usize, junction: Junction) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let slot = if self.correlated { 0 } else { junction.index() as u64 + 1 };
        rng.set_stream(trial as u64 * 8 + slot);
        rng
    }
}

/// One junction's voltage noise `dV(t)` on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTrace {
    pub dt: f64,
    pub samples: Vec<f64>,
}

/// Variance `N^2 ln(hi / lo)` of the band `[lo, hi]`.
fn band_variance(n: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        n * n * (hi / lo).ln()
    } else {
        0.0
    }
}

/// Gaussian 1/f noise over `[f_min, f_max]` on `round(duration / dt)` samples.
///
/// Each FFT bin `k` stands for the frequency cell `[(k - 1/2), (k + 1/2)] / duration`
/// and each low harmonic for one log-spaced cell below the first bin; a cell
/// `[lo, hi]` gets independent Gaussian cosine and sine coefficients of
/// variance `N^2 ln(hi / lo)`, so the trace variance is `N^2 ln(f_max / f_min)`.
pub fn sample_one_over_f<R: Rng>(
    params: &NoiseParams,
    duration: f64,
    dt: f64,
    rng: &mut R,
) -> Result<NoiseTrace, NoiseError> {
    let m = (duration / dt).round() as usize;
    let (f_min, f_max) = params.band(duration, dt);
    if m < 2 || f_min >= f_max {
        return Err(NoiseError::EmptyBand { f_min, f_max });
    }
    if params.amplitude_n == 0.0 {
        return Ok(NoiseTrace { dt, samples: vec![0.0; m] });
    }
    let n = params.amplitude_n;
    let df = 1.0 / (m as f64 * dt);
    let mut spectrum = vec![Complex::new(0.0, 0.0); m];
    for (k, bin) in spectrum.iter_mut().enumerate().take(m / 2 + 1).skip(1) {
        let lo = ((k as f64 - 0.5) * df).max(f_min);
        let hi = ((k as f64 + 0.5) * df).min(f_max).min(0.5 / dt);
        let sd = band_variance(n, lo, hi).sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        *bin = Complex::new(a * sd, -b * sd);
    }
    FftPlanner::<f64>::new().plan_fft_inverse(m).process(&mut spectrum);
    let mut samples: Vec<f64> = spectrum.iter().map(|z| z.re).collect();

    let top = (0.5 * df).min(f_max);
    if params.low_harmonics > 0 && top > f_min {
        let ratio = (top / f_min).powf(1.0 / params.low_harmonics as f64);
        for h in 0..params.low_harmonics {
            let lo = f_min * ratio.powi(h as i32);
            let hi = lo * ratio;
            let sd = band_variance(n, lo, hi).sqrt();
            let omega = std::f64::consts::TAU * (lo * hi).sqrt();
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            for (j, x) in samples.iter_mut().enumerate() {
                let (s, c) = (omega * j as f64 * dt).sin_cos();
                *x += sd * (a * c + b * s);
            }
        }
    }
    Ok(NoiseTrace { dt, samples })
}

/// Voltage noise for every junction of a schedule; junctions without noise hold zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct JunctionNoise {
    pub dt: f64,
    traces: [Vec<f64>; 7],
}

impl JunctionNoise {
    pub fn zeros(dt: f64, len: usize) -> Self {
        JunctionNoise { dt, traces: std::array::from_fn(|_| vec![0.0; len]) }
    }

    pub fn len(&self) -> usize {
        self.traces[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trace(&self, junction: Junction) -> &[f64] {
        &self.traces[junction.index()]
    }

    pub fn set(&mut self, junction: Junction, trace: NoiseTrace) -> Result<(), NoiseError> {
        if trace.samples.len() != self.len() {
            return Err(NoiseError::GridMismatch { trace: trace.samples.len(), schedule: self.len() });
        }
        self.traces[junction.index()] = trace.samples;
        Ok(())
    }

    /// Draw trial `trial` for the given junctions.
    pub fn sample(
        params: &NoiseParams,
        junctions: &[Junction],
        duration: f64,
        dt: f64,
        trial: usize,
    ) -> Result<Self, NoiseError> {
        params.validate()?;
        let len = (duration / dt).round() as usize;
        let mut out = JunctionNoise::zeros(dt, len);
        for &j in junctions {
            let trace = sample_one_over_f(params, duration, dt, &mut params.rng(trial, j))?;
            out.set(j, trace)?;
        }
        Ok(out)
    }

    pub fn slice(&self, range: Range<usize>) -> JunctionNoise {
        JunctionNoise { dt: self.dt, traces: std::array::from_fn(|k| self.traces[k][range.clone()].to_vec()) }
    }

    /// CSV dump: `t` then one column per junction.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let names: Vec<&str> = Junction::ALL.iter().map(|j| j.label()).collect();
        writeln!(out, "t,{}", names.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = self.traces.iter().map(|t| format!("{:.9e}", t[k])).collect();
            writeln!(out, "{},{}", k as f64 * self.dt, row.join(","))?;
        }
        Ok(())
    }
}

/// `Omega_j(t) -> Omega_j(t) (1 + dV_j(t) / I)` pointwise on every junction.
pub fn perturb_schedule(schedule: &Schedule, noise: &JunctionNoise, params: &NoiseParams) -> Result<Schedule, NoiseError> {
    if noise.len() != schedule.steps() {
        return Err(NoiseError::GridMismatch { trace: noise.len(), schedule: schedule.steps() });
    }
    let mut out = schedule.clone();
    let inv = 1.0 / params.insensitivity_i;
    for j in Junction::ALL {
        let dv = noise.trace(j);
        for (amp, v) in out.trace_mut(j).iter_mut().zip(dv) {
            *amp *= 1.0 + v * inv;
        }
    }
    Ok(out)
}

/// Junctions that carry exchange in this context, and therefore feel noise.
pub fn active_junctions(ctx: &GateContext, pulse: &PulseShape) -> Vec<Junction> {
    Junction::ALL
        .into_iter()
        .filter(|&j| if j == Junction::Cross { pulse.amplitude > 0.0 } else { ctx.bias.amplitude(j) != 0.0 })
        .collect()
}

/// Composite gate whose two halves see consecutive slices of one noise record.
pub fn noisy_composite(
    ctx: &GateContext,
    pulse: &PulseShape,
    steps: usize,
    noise: &JunctionNoise,
    params: &NoiseParams,
) -> Result<BlockUnitary, NoiseError> {
    if noise.len() != 2 * steps {
        return Err(NoiseError::GridMismatch { trace: noise.len(), schedule: 2 * steps });
    }
    let nominal = ctx.schedule(pulse, steps);
    let first = ctx.evolve(&perturb_schedule(&nominal, &noise.slice(0..steps), params)?)?;
    let second = ctx.evolve(&perturb_schedule(&nominal, &noise.slice(steps..2 * steps), params)?)?;
    Ok(ctx.compose_halves(&first, &second)?)
}

/// Draw trial `trial` for a composite gate on `steps` steps per half.
pub fn composite_noise(
    ctx: &GateContext,
    pulse: &PulseShape,
    steps: usize,
    params: &NoiseParams,
    trial: usize,
) -> Result<JunctionNoise, NoiseError> {
    let dt = pulse.duration() / steps as f64;
    JunctionNoise::sample(params, &active_junctions(ctx, pulse), 2.0 * pulse.duration(), dt, trial)
}

/// Draw trial `trial`, build the noisy composite and score both gauge blocks.
pub fn noisy_trial(
    ctx: &GateContext,
    frame: &LogicalFrame,
    pulse: &PulseShape,
    steps: usize,
    params: &NoiseParams,
    trial: usize,
) -> Result<TrialFigures, NoiseError> {
    let noise = composite_noise(ctx, pulse, steps, params, trial)?;
    let u = noisy_composite(ctx, pulse, steps, &noise, params)?;
    Ok(TrialFigures {
        trial,
        j0: SubspaceFigures::of(&frame.gate_block(&u, TotalJ::Zero)?),
        j1: SubspaceFigures::of(&frame.gate_block(&u, TotalJ::One)?),
    })
}

/// One-sided periodogram `(f_k, 2 |X_k|^2 dt / M)` for `k = 1 .. M/2`.
pub fn periodogram(samples: &[f64], dt: f64) -> Vec<(f64, f64)> {
    let m = samples.len();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
    (1..m / 2)
        .map(|k| (k as f64 / (m as f64 * dt), 2.0 * buf[k].norm_sqr() * dt / m as f64))
        .collect()
}
