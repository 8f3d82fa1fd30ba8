//! Amplitude calibration of the composite gate for a given pulse width.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angular::ReducedElements;
use crate::basis::Qubit;
use crate::engine::{EngineError, GateContext, PulseShape};
use crate::metrics::{LogicalFrame, MetricsError, SubspaceFigures};
use crate::model::{entangling_area, structure_factors, ModelError, TotalJ};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no interior minimum in [{lo:.6e}, {hi:.6e}]: objective {f_lo:.3e} / {f_hi:.3e} at the ends, best at {best:.6e}")]
    NoInteriorMinimum { lo: f64, hi: f64, f_lo: f64, f_hi: f64, best: f64 },
}

/// Which gauge subspaces the amplitude is optimized for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveMode {
    /// Minimize `D` of the `J = 1` block only.
    #[serde(rename = "j1_only", alias = "j1")]
    J1Only,
    /// Minimize `(w D_1 + D_0) / (w + 1)`.
    #[default]
    #[serde(rename = "weighted_3to1", alias = "weighted")]
    Weighted,
}

impl FromStr for ObjectiveMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "j1" | "j1_only" => Ok(ObjectiveMode::J1Only),
            "weighted" | "weighted_3to1" => Ok(ObjectiveMode::Weighted),
            other => Err(format!("unknown mode {other:?}; expected j1 or weighted")),
        }
    }
}

impl fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveMode::J1Only => "j1_only",
            ObjectiveMode::Weighted => "weighted_3to1",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub mode: ObjectiveMode,
    /// Weight of `J = 1` relative to `J = 0` in weighted mode.
    pub j1_weight: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Objective { mode: ObjectiveMode::Weighted, j1_weight: 3.0 }
    }
}

impl Objective {
    pub fn new(mode: ObjectiveMode) -> Self {
        Objective { mode, ..Objective::default() }
    }

    pub fn value(&self, d_j0: f64, d_j1: f64) -> f64 {
        match self.mode {
            ObjectiveMode::J1Only => d_j1,
            ObjectiveMode::Weighted => (self.j1_weight * d_j1 + d_j0) / (self.j1_weight + 1.0),
        }
    }
}

/// Pulse area `Phi` giving a `pi/4` entangling phase at first order, for
/// the composite gate or for one echo-free pulse.
pub fn first_order_area(ctx: &GateContext, composite: bool) -> Result<f64, ModelError> {
    let reduced = ReducedElements::exact();
    let a = ctx.bias.eigensystem(Qubit::A);
    let b = ctx.bias.eigensystem(Qubit::B);
    let la = structure_factors(&a.v, ctx.cross.a().role, &reduced);
    let lb = structure_factors(&b.v, ctx.cross.b().role, &reduced);
    entangling_area(&la, &lb, composite)
}

/// First-order amplitude `Phi / (sigma_t sqrt(2 pi) erf(W / sqrt 2))`.
pub fn first_order_seed(ctx: &GateContext, sigma_t: f64) -> Result<f64, CalibrationError> {
    Ok(first_order_area(ctx, true)? / PulseShape::unit_area(sigma_t, ctx.window))
}

/// Noiseless figures of both gauge subspaces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateFigures {
    pub j0: SubspaceFigures,
    pub j1: SubspaceFigures,
}

impl GateFigures {
    pub fn get(&self, j: TotalJ) -> &SubspaceFigures {
        match j {
            TotalJ::Zero => &self.j0,
            TotalJ::One => &self.j1,
        }
    }
}

/// Build and score the noiseless composite gate on a fixed grid.
pub fn evaluate(ctx: &GateContext, frame: &LogicalFrame, pulse: &PulseShape, steps: usize) -> Result<GateFigures, CalibrationError> {
    let u = ctx.composite_with_steps(pulse, steps)?;
    Ok(GateFigures {
        j0: SubspaceFigures::of(&frame.gate_block(&u, TotalJ::Zero)?),
        j1: SubspaceFigures::of(&frame.gate_block(&u, TotalJ::One)?),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub sigma_t: f64,
    pub amplitude: f64,
    pub seed_amplitude: f64,
    pub mode: ObjectiveMode,
    pub objective: f64,
    pub figures: GateFigures,
    pub steps: usize,
    pub step_drift: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

impl CalibrationResult {
    pub fn pulse(&self, window: f64) -> Result<PulseShape, EngineError> {
        PulseShape::new(self.amplitude, self.sigma_t, window)
    }
}

/// Stopping rules for [`minimize_bounded`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Bracket width relative to the midpoint.
    pub x_rel: f64,
    /// Smallest improvement of the best objective that keeps the search going.
    pub f_abs: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { x_rel: 1e-6, f_abs: 1e-12, max_iterations: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Brent's bounded scalar minimization: golden-section steps with parabolic
/// interpolation when it is well behaved.
pub fn minimize_bounded<E, F>(mut f: F, lo: f64, hi: f64, tol: &Tolerances) -> Result<Minimum, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let mut evaluations = 1;
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let mut iterations = 0;
    while iterations < tol.max_iterations {
        iterations += 1;
        let m = 0.5 * (a + b);
        let tol1 = f64::EPSILON.sqrt() * x.abs() + tol.x_rel * m.abs() / 3.0 + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        evaluations += 1;
        if fu <= fx {
            let gain = fx - fu;
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
            if gain < tol.f_abs {
                break;
            }
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Ok(Minimum { x, fx, iterations, evaluations })
}

/// Search `[0.5, 2] x seed` for the amplitude minimizing the objective.
///
/// The step count is fixed by a halving check at the seed amplitude and
/// the degeneracy guard is applied there too.
pub fn optimize_amplitude(
    ctx: &GateContext,
    frame: &LogicalFrame,
    sigma_t: f64,
    objective: &Objective,
    tol: &Tolerances,
) -> Result<CalibrationResult, CalibrationError> {
    let seed = first_order_seed(ctx, sigma_t)?;
    let seed_pulse = ctx.pulse(seed, sigma_t)?;
    ctx.check_guard(seed)?;
    let check = ctx.check_steps(&seed_pulse)?;
    let score = |amp: f64| -> Result<f64, CalibrationError> {
        let g = evaluate(ctx, frame, &seed_pulse.with_amplitude(amp)?, check.steps)?;
        Ok(objective.value(g.j0.d, g.j1.d))
    };
    let (lo, hi) = (0.5 * seed, 2.0 * seed);
    let min = minimize_bounded(score, lo, hi, tol)?;
    let edge = 10.0 * tol.x_rel * seed;
    if min.x - lo < edge || hi - min.x < edge {
        return Err(CalibrationError::NoInteriorMinimum {
            lo,
            hi,
            f_lo: score(lo)?,
            f_hi: score(hi)?,
            best: min.x,
        });
    }
    let figures = evaluate(ctx, frame, &seed_pulse.with_amplitude(min.x)?, check.steps)?;
    Ok(CalibrationResult {
        sigma_t,
        amplitude: min.x,
        seed_amplitude: seed,
        mode: objective.mode,
        objective: min.fx,
        figures,
        steps: check.steps,
        step_drift: check.drift,
        iterations: min.iterations,
        evaluations: min.evaluations + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::SpinRole;
    use crate::basis::StateSpace;
    use crate::engine::{CrossPair, StepPolicy, DEFAULT_WINDOW};
    use crate::model::{BiasConfig, LogicalEncoding};

    fn ctx_with(cross: CrossPair) -> GateContext {
        GateContext::new(
            BiasConfig::default(),
            cross,
            StateSpace::Logical,
            DEFAULT_WINDOW,
            StepPolicy::with_max_phase(1.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn brent_finds_parabola_minimum() {
        let mut calls = 0;
        let m = minimize_bounded::<(), _>(
            |x| {
                calls += 1;
                Ok((x - 1.3).powi(2) + 0.25)
            },
            0.5,
            2.0,
            &Tolerances { x_rel: 1e-10, f_abs: 0.0, max_iterations: 200 },
        )
        .unwrap();
        assert!((m.x - 1.3).abs() < 1e-8, "{m:?}");
        assert!((m.fx - 0.25).abs() < 1e-15);
        assert_eq!(m.evaluations, calls);
        assert!(calls < 30);
    }

    proptest::proptest! {
        #[test]
        fn brent_locates_random_quadratics(c in 0.55f64..1.95, k in 0.1f64..50.0, f0 in -1.0f64..1.0) {
            let tol = Tolerances { x_rel: 1e-9, f_abs: 0.0, max_iterations: 200 };
            let m = minimize_bounded::<(), _>(|x| Ok(k * (x - c).powi(2) + f0), 0.5, 2.0, &tol).unwrap();
            proptest::prop_assert!((m.x - c).abs() < 1e-6);
        }
    }

    #[test]
    fn brent_handles_non_smooth_and_edge_minima() {
        let tol = Tolerances { x_rel: 1e-9, f_abs: 0.0, max_iterations: 500 };
        let m = minimize_bounded::<(), _>(|x| Ok((x - 0.77).abs()), 0.0, 1.0, &tol).unwrap();
        assert!((m.x - 0.77).abs() < 1e-7);
        let m = minimize_bounded::<(), _>(Ok, 1.0, 2.0, &tol).unwrap();
        assert!(m.x - 1.0 < 1e-6);
        let err = minimize_bounded::<&str, _>(|_| Err("boom"), 0.0, 1.0, &tol).unwrap_err();
        assert_eq!(err, "boom");
    }

    #[test]
    fn seed_values() {
        let ctx = ctx_with(CrossPair::default());
        let area = first_order_area(&ctx, true).unwrap();
        assert!(area > 0.0);
        let seed = first_order_seed(&ctx, 40.0).unwrap();
        assert!((seed * PulseShape::unit_area(40.0, DEFAULT_WINDOW) / area - 1.0).abs() < 1e-12);
        assert!((seed / first_order_seed(&ctx, 80.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((area - 4.5 * std::f64::consts::PI).abs() < 1e-12);
        let wide = GateContext::new(
            BiasConfig::default(),
            CrossPair::default(),
            StateSpace::Logical,
            40.0,
            StepPolicy::default(),
            1.0,
        )
        .unwrap();
        assert!((first_order_seed(&wide, 1.0).unwrap() - 5.639).abs() < 1e-3);
        let tt = ctx_with(CrossPair::roles(SpinRole::T, SpinRole::T));
        assert!((first_order_area(&tt, true).unwrap() - 1.125 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn objective_modes() {
        let w = Objective::default();
        assert!((w.value(0.4, 0.0) - 0.1).abs() < 1e-15);
        assert_eq!(Objective::new(ObjectiveMode::J1Only).value(0.4, 0.2), 0.2);
        assert_eq!("j1".parse::<ObjectiveMode>().unwrap(), ObjectiveMode::J1Only);
        assert_eq!("weighted_3to1".parse::<ObjectiveMode>().unwrap(), ObjectiveMode::Weighted);
        assert!("both".parse::<ObjectiveMode>().is_err());
        assert_eq!(serde_json::to_string(&ObjectiveMode::J1Only).unwrap(), "\"j1_only\"");
        assert_eq!(serde_json::from_str::<ObjectiveMode>("\"weighted\"").unwrap(), ObjectiveMode::Weighted);
    }

    #[test]
    fn calibration_is_deterministic_and_inside_bracket() {
        let ctx = ctx_with(CrossPair::default());
        let frame = LogicalFrame::new(&ctx.bias, LogicalEncoding::dfs());
        let obj = Objective::new(ObjectiveMode::J1Only);
        let tol = Tolerances::default();
        let a = optimize_amplitude(&ctx, &frame, 40.0, &obj, &tol).unwrap();
        let b = optimize_amplitude(&ctx, &frame, 40.0, &obj, &tol).unwrap();
        assert_eq!(a, b);
        let ratio = a.amplitude / a.seed_amplitude;
        assert!(ratio > 0.5 && ratio < 2.0, "{a:?}");
        assert!(a.figures.j1.d < 1e-4, "{a:?}");
        assert!(a.figures.j0.d > a.figures.j1.d);
    }

    #[test]
    fn guard_is_checked_at_the_seed() {
        let strict = GateContext::new(
            BiasConfig::default(),
            CrossPair::default(),
            StateSpace::Logical,
            DEFAULT_WINDOW,
            StepPolicy::with_max_phase(1.0),
            10.0,
        )
        .unwrap();
        let frame = LogicalFrame::new(&strict.bias, LogicalEncoding::dfs());
        let err = optimize_amplitude(&strict, &frame, 10.0, &Objective::default(), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, CalibrationError::Engine(EngineError::Model(ModelError::DegenerateLevels { .. }))));
    }
}
