//! Piecewise-constant propagation of exchange schedules, the echo pulse and
//! the composite gate `U . Pi^A Pi^B . U`.
//!
//! Propagators are kept per `(J, m)` sector ([`BlockUnitary`]); every
//! exchange-only Hamiltonian is block diagonal there, so nothing is lost.

use nalgebra::{DMatrix, Matrix2, SMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angular::{HalfInt, SpinRole};
use crate::basis::{single_qubit_block, ExchangeTable, Qubit, Sector, SpinIndex, StateSpace, DIM};
use crate::linalg::{expm_i_symmetric, unitarity_residual, CMatrix};
use crate::model::{bias_hamiltonian, check_degeneracy, swap_rotation_r, BiasConfig, Junction, ModelError};

pub const DEFAULT_WINDOW: f64 = 5.0;
pub const UNITARITY_TOLERANCE: f64 = 1e-12;
const BLOCK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("cross junction must join a spin of A to a spin of B, got {0} and {1}")]
    InvalidCross(SpinIndex, SpinIndex),
    #[error("schedule traces do not share one grid")]
    GridMismatch,
    #[error("invalid time step {0}")]
    InvalidStep(f64),
    #[error("propagator lost unitarity: residual {0:.3e}")]
    NonUnitary(f64),
    #[error("time step not converged: halving drift {drift:.3e} with {steps} steps")]
    StepNotConverged { drift: f64, steps: usize },
    #[error("operator leaks between (J, m) sectors: {0:.3e}")]
    NotBlockDiagonal(f64),
    #[error("block unitaries live on different state spaces")]
    SpaceMismatch,
    #[error("echo self-check failed: residual {0:.3e}")]
    EchoCheck(f64),
}

/// Truncated Gaussian coupling pulse `amplitude * exp(-t^2 / 2 sigma_t^2)` on `|t| <= window * sigma_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub amplitude: f64,
    pub sigma_t: f64,
    pub window: f64,
}

impl PulseShape {
    pub fn new(amplitude: f64, sigma_t: f64, window: f64) -> Result<Self, EngineError> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(EngineError::InvalidPulse(format!("amplitude {amplitude} must be >= 0")));
        }
        if !(sigma_t.is_finite() && sigma_t > 0.0) {
            return Err(EngineError::InvalidPulse(format!("sigma_t {sigma_t} must be > 0")));
        }
        if !(window.is_finite() && window >= 3.0) {
            return Err(EngineError::InvalidPulse(format!("window {window} must be >= 3")));
        }
        Ok(PulseShape { amplitude, sigma_t, window })
    }

    /// Area per unit peak amplitude, `sigma_t sqrt(2 pi) erf(W / sqrt 2)`.
    pub fn unit_area(sigma_t: f64, window: f64) -> f64 {
        sigma_t * (2.0 * std::f64::consts::PI).sqrt() * libm::erf(window / std::f64::consts::SQRT_2)
    }

    pub fn from_area(area: f64, sigma_t: f64, window: f64) -> Result<Self, EngineError> {
        PulseShape::new(area / PulseShape::unit_area(sigma_t, window), sigma_t, window)
    }

    pub fn area(&self) -> f64 {
        self.amplitude * PulseShape::unit_area(self.sigma_t, self.window)
    }

    pub fn half_width(&self) -> f64 {
        self.window * self.sigma_t
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.half_width()
    }

    pub fn value(&self, t: f64) -> f64 {
        if t.abs() > self.half_width() {
            0.0
        } else {
            self.amplitude * (-0.5 * (t / self.sigma_t).powi(2)).exp()
        }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self, EngineError> {
        PulseShape::new(amplitude, self.sigma_t, self.window)
    }
}

/// The inter-qubit exchange `S_a . S_b`, `a` on qubit A and `b` on qubit B.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCross", into = "RawCross")]
pub struct CrossPair {
    a: SpinIndex,
    b: SpinIndex,
}

#[derive(Serialize, Deserialize)]
struct RawCross {
    a: SpinIndex,
    b: SpinIndex,
}

impl TryFrom<RawCross> for CrossPair {
    type Error = EngineError;
    fn try_from(raw: RawCross) -> Result<Self, Self::Error> {
        CrossPair::new(raw.a, raw.b)
    }
}

impl From<CrossPair> for RawCross {
    fn from(c: CrossPair) -> Self {
        RawCross { a: c.a, b: c.b }
    }
}

impl CrossPair {
    pub fn new(a: SpinIndex, b: SpinIndex) -> Result<Self, EngineError> {
        if a.qubit != Qubit::A || b.qubit != Qubit::B {
            return Err(EngineError::InvalidCross(a, b));
        }
        Ok(CrossPair { a, b })
    }

    pub fn roles(role_a: SpinRole, role_b: SpinRole) -> Self {
        CrossPair { a: SpinIndex::new(Qubit::A, role_a), b: SpinIndex::new(Qubit::B, role_b) }
    }

    pub fn a(&self) -> SpinIndex {
        self.a
    }

    pub fn b(&self) -> SpinIndex {
        self.b
    }
}

impl Default for CrossPair {
    fn default() -> Self {
        CrossPair::roles(SpinRole::Z, SpinRole::Z)
    }
}

/// How the time step is chosen and checked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepPolicy {
    /// Largest `||H|| dt` per step, in radians.
    pub max_phase: f64,
    /// Largest entrywise change of the propagator when the step is halved.
    pub halving_tolerance: f64,
    /// How many refinements the halving check may take before giving up.
    pub max_refinements: u32,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy { max_phase: 0.02, halving_tolerance: 1e-9, max_refinements: 12 }
    }
}

impl StepPolicy {
    pub fn with_max_phase(max_phase: f64) -> Self {
        StepPolicy { max_phase, ..StepPolicy::default() }
    }

    /// Steps needed to cover `duration` with `norm * dt <= max_phase`.
    pub fn steps(&self, duration: f64, norm: f64) -> usize {
        ((duration * norm / self.max_phase).ceil() as usize).max(1)
    }
}

/// A uniform time grid with one amplitude per junction per step, sampled
/// at step midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub t_start: f64,
    pub dt: f64,
    pub cross: CrossPair,
    traces: [Vec<f64>; 7],
}

impl Schedule {
    pub fn new(t_start: f64, dt: f64, cross: CrossPair, traces: [Vec<f64>; 7]) -> Result<Self, EngineError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(EngineError::InvalidStep(dt));
        }
        let n = traces[0].len();
        if traces.iter().any(|t| t.len() != n) {
            return Err(EngineError::GridMismatch);
        }
        Ok(Schedule { t_start, dt, cross, traces })
    }

    /// Constant biases and a constant cross amplitude.
    pub fn constant(bias: &BiasConfig, cross: CrossPair, cross_amplitude: f64, duration: f64, steps: usize) -> Self {
        let traces = Junction::ALL.map(|j| {
            let v = if j == Junction::Cross { cross_amplitude } else { bias.amplitude(j) };
            vec![v; steps]
        });
        Schedule { t_start: 0.0, dt: duration / steps as f64, cross, traces }
    }

    /// Gaussian cross pulse over `[-W sigma_t, W sigma_t]` on top of constant biases.
    pub fn gaussian(pulse: &PulseShape, bias: &BiasConfig, cross: CrossPair, steps: usize) -> Self {
        let dt = pulse.duration() / steps as f64;
        let t_start = -pulse.half_width();
        let traces = Junction::ALL.map(|j| {
            if j == Junction::Cross {
                (0..steps).map(|k| pulse.value(t_start + (k as f64 + 0.5) * dt)).collect()
            } else {
                vec![bias.amplitude(j); steps]
            }
        });
        Schedule { t_start, dt, cross, traces }
    }

    pub fn steps(&self) -> usize {
        self.traces[0].len()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    /// Midpoint of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + (k as f64 + 0.5) * self.dt
    }

    pub fn trace(&self, junction: Junction) -> &[f64] {
        &self.traces[junction.index()]
    }

    pub fn trace_mut(&mut self, junction: Junction) -> &mut [f64] {
        &mut self.traces[junction.index()]
    }

    /// Upper bound on `||H(t)||` over the grid: `sum_j max_t |amp_j| * ||S_i . S_j||`.
    pub fn norm_bound(&self) -> f64 {
        0.75 * self.traces.iter().map(|t| t.iter().fold(0.0f64, |m, x| m.max(x.abs()))).sum::<f64>()
    }
}

/// A propagator stored as one dense block per `(J, m)` sector.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockUnitary {
    space: StateSpace,
    sectors: Vec<Sector>,
    blocks: Vec<CMatrix>,
}

impl BlockUnitary {
    pub fn identity(space: StateSpace) -> Self {
        let sectors = space.sectors();
        let blocks = sectors.iter().map(|s| CMatrix::identity(s.len, s.len)).collect();
        BlockUnitary { space, sectors, blocks }
    }

    /// Restrict a 64x64 coupled-basis operator to the sectors of `space`.
    pub fn from_dense(u: &CMatrix, space: StateSpace) -> Result<Self, EngineError> {
        let all = crate::basis::sectors();
        let mut label = vec![0usize; DIM];
        for (k, s) in all.iter().enumerate() {
            for i in s.range() {
                label[i] = k;
            }
        }
        let mut leak = 0.0f64;
        for r in 0..DIM {
            for c in 0..DIM {
                if label[r] != label[c] {
                    leak = leak.max(u[(r, c)].norm());
                }
            }
        }
        if leak > BLOCK_TOLERANCE {
            return Err(EngineError::NotBlockDiagonal(leak));
        }
        let sectors = space.sectors();
        let blocks = sectors
            .iter()
            .map(|s| u.view((s.start, s.start), (s.len, s.len)).into_owned())
            .collect();
        Ok(BlockUnitary { space, sectors, blocks })
    }

    /// Embed into 64x64, with zeros outside the carried sectors.
    pub fn to_dense(&self) -> CMatrix {
        let mut out = CMatrix::zeros(DIM, DIM);
        for (s, b) in self.sectors.iter().zip(&self.blocks) {
            out.view_mut((s.start, s.start), (s.len, s.len)).copy_from(b);
        }
        out
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, j: HalfInt, m: HalfInt) -> Option<(&Sector, &CMatrix)> {
        self.sectors.iter().zip(&self.blocks).find(|(s, _)| s.j == j && s.m == m)
    }

    /// Operator product `self . rhs` (`rhs` acts first).
    pub fn compose(&self, rhs: &BlockUnitary) -> Result<BlockUnitary, EngineError> {
        if self.space != rhs.space {
            return Err(EngineError::SpaceMismatch);
        }
        let blocks = self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a * b).collect();
        Ok(BlockUnitary { space: self.space, sectors: self.sectors.clone(), blocks })
    }

    pub fn adjoint(&self) -> BlockUnitary {
        BlockUnitary {
            space: self.space,
            sectors: self.sectors.clone(),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.blocks.iter().map(unitarity_residual).fold(0.0, f64::max)
    }

    /// Largest entrywise difference.
    pub fn max_diff(&self, other: &BlockUnitary) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }
}

/// Junction operators restricted to each sector, ready for stepping.
#[derive(Clone, Debug)]
pub struct Propagator {
    space: StateSpace,
    cross: CrossPair,
    sectors: Vec<Sector>,
    /// `ops[sector][junction]`.
    ops: Vec<Vec<DMatrix<f64>>>,
}

impl Propagator {
    pub fn new(space: StateSpace, cross: CrossPair) -> Self {
        let table = ExchangeTable::shared();
        let sectors = space.sectors();
        let full: Vec<&DMatrix<f64>> = Junction::ALL
            .iter()
            .map(|j| {
                let (a, b) = j.bias_spins().unwrap_or((cross.a, cross.b));
                table.get(a, b).expect("distinct spins")
            })
            .collect();
        let ops = sectors
            .iter()
            .map(|s| full.iter().map(|op| op.view((s.start, s.start), (s.len, s.len)).into_owned()).collect())
            .collect();
        Propagator { space, cross, sectors, ops }
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    /// Ordered product of `exp(-i H_k dt)` over the schedule.
    pub fn evolve(&self, schedule: &Schedule) -> Result<BlockUnitary, EngineError> {
        if schedule.cross != self.cross {
            return Propagator::new(self.space, schedule.cross).evolve(schedule);
        }
        let mut drift = 0.0f64;
        let blocks: Vec<CMatrix> = self
            .sectors
            .iter()
            .zip(&self.ops)
            .map(|(_, ops)| {
                let (u, d) = evolve_block(ops, schedule);
                drift = drift.max(d);
                u
            })
            .collect();
        let out = BlockUnitary { space: self.space, sectors: self.sectors.clone(), blocks };
        let residual = drift.max(out.unitarity_residual());
        if residual.is_nan() || residual > UNITARITY_TOLERANCE {
            return Err(EngineError::NonUnitary(residual));
        }
        Ok(out)
    }
}

/// Steps between re-projections of the running product onto the unitaries.
const REPROJECT_EVERY: usize = 256;

/// Running product of step exponentials for one sector, written once per
/// matrix type so the 1-, 5- and 9-dimensional sectors use stack matrices.
///
/// Each step is `U <- V diag(exp(-i lambda dt)) V^T U`, with `U` held as
/// separate real and imaginary parts so every product is a real GEMM.
/// Every [`REPROJECT_EVERY`] steps the unitarity drift is recorded and
/// removed with one Newton-Schulz pass `U <- U (3 - U^dagger U) / 2`.
macro_rules! block_evolver {
    ($name:ident, $mat:ty, $zeros:expr, $eye:expr) => {
        fn $name(ops: &[DMatrix<f64>], schedule: &Schedule) -> (CMatrix, f64) {
            let n = ops[0].nrows();
            let to_mat = |m: &DMatrix<f64>| -> $mat {
                let mut out: $mat = $zeros(n);
                out.copy_from(m);
                out
            };
            let active: Vec<(usize, $mat)> = ops
                .iter()
                .enumerate()
                .filter(|(_, op)| op.iter().any(|&x| x != 0.0))
                .map(|(j, op)| (j, to_mat(op)))
                .collect();
            let traces: Vec<&[f64]> = Junction::ALL.iter().map(|&j| schedule.trace(j)).collect();
            let (mut u_re, mut u_im): ($mat, $mat) = ($eye(n), $zeros(n));
            let mut drift = 0.0f64;
            let steps = schedule.steps();
            for k in 0..steps {
                let mut h: $mat = $zeros(n);
                for (j, op) in &active {
                    let amp = traces[*j][k];
                    if amp != 0.0 {
                        h += op * amp;
                    }
                }
                let eig = SymmetricEigen::new(h);
                let v = &eig.eigenvectors;
                let mut w_re = v.tr_mul(&u_re);
                let mut w_im = v.tr_mul(&u_im);
                for (row, &lam) in eig.eigenvalues.iter().enumerate() {
                    let (s, c) = (lam * schedule.dt).sin_cos();
                    for col in 0..n {
                        let (x, y) = (w_re[(row, col)], w_im[(row, col)]);
                        w_re[(row, col)] = c * x + s * y;
                        w_im[(row, col)] = c * y - s * x;
                    }
                }
                u_re = v * w_re;
                u_im = v * w_im;
                if (k + 1) % REPROJECT_EVERY == 0 || k + 1 == steps {
                    let g_re: $mat = u_re.tr_mul(&u_re) + u_im.tr_mul(&u_im);
                    let g_im: $mat = u_re.tr_mul(&u_im) - u_im.tr_mul(&u_re);
                    let mut c_re: $mat = &g_re * -0.5;
                    let c_im: $mat = &g_im * -0.5;
                    for i in 0..n {
                        for j in 0..n {
                            let d = if i == j { 1.0 } else { 0.0 };
                            drift = drift.max((g_re[(i, j)] - d).hypot(g_im[(i, j)]));
                        }
                        c_re[(i, i)] += 1.5;
                    }
                    let new_re = &u_re * &c_re - &u_im * &c_im;
                    let new_im = &u_re * &c_im + &u_im * &c_re;
                    u_re = new_re;
                    u_im = new_im;
                }
            }
            let u = CMatrix::from_fn(n, n, |r, c| Complex64::new(u_re[(r, c)], u_im[(r, c)]));
            (u, drift)
        }
    };
}

block_evolver!(evolve_block_1, SMatrix<f64, 1, 1>, |_| SMatrix::<f64, 1, 1>::zeros(), |_| SMatrix::<f64, 1, 1>::identity());
block_evolver!(evolve_block_5, SMatrix<f64, 5, 5>, |_| SMatrix::<f64, 5, 5>::zeros(), |_| SMatrix::<f64, 5, 5>::identity());
block_evolver!(evolve_block_9, SMatrix<f64, 9, 9>, |_| SMatrix::<f64, 9, 9>::zeros(), |_| SMatrix::<f64, 9, 9>::identity());
block_evolver!(evolve_block_dyn, DMatrix<f64>, |n| DMatrix::<f64>::zeros(n, n), |n| DMatrix::<f64>::identity(n, n));

/// Step one sector through the schedule; returns the propagator and the
/// largest unitarity drift accumulated between re-projections.
fn evolve_block(ops: &[DMatrix<f64>], schedule: &Schedule) -> (CMatrix, f64) {
    match ops[0].nrows() {
        1 => evolve_block_1(ops, schedule),
        5 => evolve_block_5(ops, schedule),
        9 => evolve_block_9(ops, schedule),
        _ => evolve_block_dyn(ops, schedule),
    }
}

/// [`Propagator::evolve`] for a one-off schedule.
pub fn evolve(schedule: &Schedule, space: StateSpace) -> Result<BlockUnitary, EngineError> {
    Propagator::new(space, schedule.cross).evolve(schedule)
}

/// Full 64-dimensional product of step exponentials, for cross-checks.
pub fn evolve_dense(schedule: &Schedule) -> Result<CMatrix, EngineError> {
    let table = ExchangeTable::shared();
    let ops: Vec<&DMatrix<f64>> = Junction::ALL
        .iter()
        .map(|j| {
            let (a, b) = j.bias_spins().unwrap_or((schedule.cross.a, schedule.cross.b));
            table.get(a, b).expect("distinct spins")
        })
        .collect();
    let mut u = CMatrix::identity(DIM, DIM);
    for k in 0..schedule.steps() {
        let mut h = DMatrix::<f64>::zeros(DIM, DIM);
        for (j, op) in Junction::ALL.iter().zip(&ops) {
            let amp = schedule.trace(*j)[k];
            h.zip_apply(*op, |x, y| *x += amp * y);
        }
        u = expm_i_symmetric(&h, schedule.dt) * u;
    }
    let residual = unitarity_residual(&u);
    if residual > UNITARITY_TOLERANCE {
        return Err(EngineError::NonUnitary(residual));
    }
    Ok(u)
}

/// One exchange pulse `exp(-i angle S_a . S_b)` of the echo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoPulse {
    pub first: SpinRole,
    pub second: SpinRole,
    pub angle: f64,
}

/// The four-pulse encoded Y rotation and the phases it realizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoSpec {
    /// Factors in written (left-to-right) order; the last one acts first.
    pub pulses: [EchoPulse; 4],
    pub eta: f64,
}

impl EchoSpec {
    /// `exp(-i pi S_z.S_t) exp(-i (pi - a) S_t.S_n) exp(-i a S_z.S_t) exp(-i (pi - a) S_t.S_n)`, `a = atan sqrt 8`.
    pub fn y_rotation() -> Self {
        use std::f64::consts::PI;
        use SpinRole::*;
        let a = 8f64.sqrt().atan();
        let p = |first, second, angle| EchoPulse { first, second, angle };
        EchoSpec {
            pulses: [p(Z, T, PI), p(T, N, PI - a), p(Z, T, a), p(T, N, PI - a)],
            eta: (3.0 * PI - a) / 4.0,
        }
    }

    /// `eta'` in the eigenbasis `v` (rows are `|xi_+>, |xi_->`): the rotation
    /// is `+Y` or `-Y` depending on whether `v` preserves orientation.
    pub fn eta_prime(v: &Matrix2<f64>) -> f64 {
        -v.determinant().signum() * std::f64::consts::FRAC_PI_2
    }

    pub fn unitary(&self, qubit: Qubit) -> CMatrix {
        let table = ExchangeTable::shared();
        self.pulses.iter().fold(CMatrix::identity(DIM, DIM), |acc, p| {
            let op = table
                .get(SpinIndex::new(qubit, p.first), SpinIndex::new(qubit, p.second))
                .expect("distinct spins");
            acc * expm_i_symmetric(op, p.angle)
        })
    }

    /// Largest deviation of the encoded action from the echo form in the
    /// eigenbasis `v`: `<xi_+|Pi|xi_-> = -i e^{i(eta - eta')}`,
    /// `<xi_-|Pi|xi_+> = -i e^{i(eta + eta')}`, zero diagonal, unimodular on `|Q>`.
    pub fn form_residual(&self, qubit: Qubit, v: &Matrix2<f64>) -> f64 {
        let block = single_qubit_block(&self.unitary(qubit), qubit);
        let enc = |s: usize, r: usize| {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    acc += v[(s, a)] * block[(a, b)] * v[(r, b)];
                }
            }
            acc
        };
        let eta_p = EchoSpec::eta_prime(v);
        let minus_i = Complex64::new(0.0, -1.0);
        let up = minus_i * Complex64::from_polar(1.0, self.eta - eta_p);
        let down = minus_i * Complex64::from_polar(1.0, self.eta + eta_p);
        [
            (enc(0, 1) - up).norm(),
            (enc(1, 0) - down).norm(),
            enc(0, 0).norm(),
            enc(1, 1).norm(),
            (block[(2, 2)].norm() - 1.0).abs(),
            block[(0, 2)].norm(),
            block[(1, 2)].norm(),
            block[(2, 0)].norm(),
            block[(2, 1)].norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// The ideal echo `Pi` on one qubit, in the coupled basis.
pub fn echo_pulse_pi(qubit: Qubit) -> CMatrix {
    EchoSpec::y_rotation().unitary(qubit)
}

/// `(R^A R^B, (R^A R^B)^dagger)` in the coupled basis.
pub fn ideal_frame() -> (CMatrix, CMatrix) {
    let r = swap_rotation_r(Qubit::A) * swap_rotation_r(Qubit::B);
    let inv = r.adjoint();
    (r, inv)
}

/// Everything needed to build gates for one bias layout and cross pair.
#[derive(Clone, Debug)]
pub struct GateContext {
    pub bias: BiasConfig,
    pub cross: CrossPair,
    pub window: f64,
    pub policy: StepPolicy,
    /// Peak coupling must stay below `gap / guard_ratio`.
    pub guard_ratio: f64,
    propagator: Propagator,
    echo: BlockUnitary,
    bias_norm: f64,
}

/// Outcome of a step-halving check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub steps: usize,
    pub drift: f64,
}

impl GateContext {
    pub fn new(
        bias: BiasConfig,
        cross: CrossPair,
        space: StateSpace,
        window: f64,
        policy: StepPolicy,
        guard_ratio: f64,
    ) -> Result<Self, EngineError> {
        bias.validate()?;
        PulseShape::new(0.0, 1.0, window)?;
        let echo_dense = echo_pulse_pi(Qubit::A) * echo_pulse_pi(Qubit::B);
        let echo = BlockUnitary::from_dense(&echo_dense, space)?;
        let bias_norm = SymmetricEigen::new(bias_hamiltonian(&bias)).eigenvalues.amax();
        Ok(GateContext {
            bias,
            cross,
            window,
            policy,
            guard_ratio,
            propagator: Propagator::new(space, cross),
            echo,
            bias_norm,
        })
    }

    /// Defaults: linear bias, z-z coupling, `m = 0` sectors, `W = 5`, guard ratio 10.
    pub fn standard() -> Self {
        GateContext::new(
            BiasConfig::default(),
            CrossPair::default(),
            StateSpace::default(),
            DEFAULT_WINDOW,
            StepPolicy::default(),
            10.0,
        )
        .expect("default configuration is valid")
    }

    pub fn space(&self) -> StateSpace {
        self.propagator.space
    }

    pub fn echo(&self) -> &BlockUnitary {
        &self.echo
    }

    pub fn pulse(&self, amplitude: f64, sigma_t: f64) -> Result<PulseShape, EngineError> {
        PulseShape::new(amplitude, sigma_t, self.window)
    }

    pub fn check_guard(&self, peak: f64) -> Result<(), EngineError> {
        let a = self.bias.eigensystem(Qubit::A);
        let b = self.bias.eigensystem(Qubit::B);
        check_degeneracy(&a, &b, peak, self.guard_ratio)?;
        Ok(())
    }

    /// Steps from the phase rule, using `||H_bias|| + 3/4 * peak` as the norm.
    pub fn steps_for(&self, pulse: &PulseShape) -> usize {
        self.policy.steps(pulse.duration(), self.bias_norm + 0.75 * pulse.amplitude)
    }

    pub fn schedule(&self, pulse: &PulseShape, steps: usize) -> Schedule {
        Schedule::gaussian(pulse, &self.bias, self.cross, steps)
    }

    pub fn evolve(&self, schedule: &Schedule) -> Result<BlockUnitary, EngineError> {
        self.propagator.evolve(schedule)
    }

    /// One Gaussian half on a given grid, without guard or step checks.
    pub fn entangler_with_steps(&self, pulse: &PulseShape, steps: usize) -> Result<BlockUnitary, EngineError> {
        self.evolve(&self.schedule(pulse, steps))
    }

    /// Double the step count from the phase rule until halving `dt` moves
    /// the propagator by no more than the policy tolerance.
    pub fn check_steps(&self, pulse: &PulseShape) -> Result<StepCheck, EngineError> {
        let mut steps = self.steps_for(pulse);
        let mut coarse = self.entangler_with_steps(pulse, steps)?;
        for _ in 0..=self.policy.max_refinements {
            let fine = self.entangler_with_steps(pulse, 2 * steps)?;
            let drift = coarse.max_diff(&fine);
            if drift <= self.policy.halving_tolerance {
                return Ok(StepCheck { steps, drift });
            }
            steps *= 2;
            coarse = fine;
        }
        let fine = self.entangler_with_steps(pulse, 2 * steps)?;
        Err(EngineError::StepNotConverged { drift: coarse.max_diff(&fine), steps })
    }

    /// Guarded, step-checked Gaussian half.
    pub fn gaussian_entangler(&self, pulse: &PulseShape) -> Result<BlockUnitary, EngineError> {
        self.check_guard(pulse.amplitude)?;
        let check = self.check_steps(pulse)?;
        self.entangler_with_steps(pulse, check.steps)
    }

    /// `second . Pi^A Pi^B . first`.
    pub fn compose_halves(&self, first: &BlockUnitary, second: &BlockUnitary) -> Result<BlockUnitary, EngineError> {
        second.compose(&self.echo)?.compose(first)
    }

    /// `U . Pi^A Pi^B . U` on a given grid, without guard or step checks.
    pub fn composite_with_steps(&self, pulse: &PulseShape, steps: usize) -> Result<BlockUnitary, EngineError> {
        let half = self.entangler_with_steps(pulse, steps)?;
        self.compose_halves(&half, &half)
    }

    /// Guarded, step-checked composite gate.
    pub fn composite_gate(&self, pulse: &PulseShape) -> Result<BlockUnitary, EngineError> {
        let half = self.gaussian_entangler(pulse)?;
        self.compose_halves(&half, &half)
    }
}

/// Guarded, step-checked Gaussian half with the default policy and space.
pub fn gaussian_entangler(pulse: &PulseShape, bias: &BiasConfig, cross: CrossPair) -> Result<BlockUnitary, EngineError> {
    let ctx = GateContext::new(*bias, cross, StateSpace::default(), pulse.window, StepPolicy::default(), 10.0)?;
    ctx.gaussian_entangler(pulse)
}

/// Guarded, step-checked composite gate with the default policy and space.
pub fn composite_gate(pulse: &PulseShape, bias: &BiasConfig, cross: CrossPair) -> Result<BlockUnitary, EngineError> {
    let ctx = GateContext::new(*bias, cross, StateSpace::default(), pulse.window, StepPolicy::default(), 10.0)?;
    ctx.composite_gate(pulse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{logical_block, LogicalFrame, SubspaceFigures};
    use crate::model::{first_order_phases, structure_factors, LogicalEncoding, TotalJ};
    use crate::angular::ReducedElements;
    use crate::metrics::measured_c11;
    use nalgebra::Matrix3;
    use std::f64::consts::PI;

    fn coarse_ctx(space: StateSpace) -> GateContext {
        GateContext::new(BiasConfig::default(), CrossPair::default(), space, DEFAULT_WINDOW, StepPolicy::with_max_phase(1.0), 1.0)
            .unwrap()
    }

    #[test]
    fn pulse_validation_and_area() {
        assert!(PulseShape::new(-1.0, 1.0, 5.0).is_err());
        assert!(PulseShape::new(1.0, 0.0, 5.0).is_err());
        assert!(PulseShape::new(1.0, 1.0, 2.5).is_err());
        let p = PulseShape::new(0.3, 7.0, 5.0).unwrap();
        let n = 200_000;
        let dt = p.duration() / n as f64;
        let riemann: f64 = (0..n).map(|k| p.value(-p.half_width() + (k as f64 + 0.5) * dt) * dt).sum();
        assert!((riemann / p.area() - 1.0).abs() < 1e-9);
        let q = PulseShape::from_area(p.area(), 7.0, 5.0).unwrap();
        assert!((q.amplitude - 0.3).abs() < 1e-15);
        assert_eq!(p.value(p.half_width() * 1.01), 0.0);
    }

    #[test]
    fn cross_pair_must_join_the_qubits() {
        let az = SpinIndex::new(Qubit::A, SpinRole::Z);
        let at = SpinIndex::new(Qubit::A, SpinRole::T);
        let bn = SpinIndex::new(Qubit::B, SpinRole::N);
        assert!(CrossPair::new(az, at).is_err());
        assert!(CrossPair::new(bn, az).is_err());
        let c = CrossPair::new(at, bn).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<CrossPair>(&json).unwrap(), c);
        assert_eq!(json, r#"{"a":"A.t","b":"B.n"}"#);
        let bad = json.replace("B.n", "A.n");
        assert!(serde_json::from_str::<CrossPair>(&bad).is_err());
    }

    #[test]
    fn schedule_grid_checks() {
        let ok: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; 4]);
        assert!(Schedule::new(0.0, 0.1, CrossPair::default(), ok.clone()).is_ok());
        assert_eq!(Schedule::new(0.0, 0.0, CrossPair::default(), ok).unwrap_err(), EngineError::InvalidStep(0.0));
        let mut bad: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; 4]);
        bad[3].pop();
        assert_eq!(Schedule::new(0.0, 0.1, CrossPair::default(), bad).unwrap_err(), EngineError::GridMismatch);
    }

    #[test]
    fn zero_schedule_is_identity() {
        let s = Schedule::constant(&BiasConfig::zero(), CrossPair::default(), 0.0, 37.0, 300);
        for space in [StateSpace::Full, StateSpace::MZero, StateSpace::Logical] {
            let u = evolve(&s, space).unwrap();
            assert!(u.max_diff(&BlockUnitary::identity(space)) < 1e-14);
        }
    }

    #[test]
    fn constant_zt_exchange_gives_quarter_phases() {
        let mut bias = BiasConfig::zero();
        bias.set(Junction::ZtA, 2.0);
        let s = Schedule::constant(&bias, CrossPair::default(), 0.0, PI / 2.0, 7);
        let block = single_qubit_block(&evolve_dense(&s).unwrap(), Qubit::A);
        let e = |x: f64| Complex64::from_polar(1.0, -PI * x);
        let want = Matrix3::from_diagonal(&nalgebra::Vector3::new(e(-0.75), e(0.25), e(0.25)));
        assert!((block - want).camax() < 1e-13, "{block}");
    }

    #[test]
    fn dense_and_block_propagation_agree() {
        let pulse = PulseShape::new(0.2, 3.0, 3.0).unwrap();
        let s = Schedule::gaussian(&pulse, &BiasConfig::default(), CrossPair::roles(SpinRole::T, SpinRole::N), 400);
        let dense = evolve_dense(&s).unwrap();
        let blocks = evolve(&s, StateSpace::Full).unwrap();
        assert!(blocks.unitarity_residual() < UNITARITY_TOLERANCE);
        let from_dense = BlockUnitary::from_dense(&dense, StateSpace::Full).unwrap();
        assert!(from_dense.max_diff(&blocks) < 1e-11);
        let round = BlockUnitary::from_dense(&blocks.to_dense(), StateSpace::Full).unwrap();
        assert_eq!(round.max_diff(&blocks), 0.0);
        let m0 = evolve(&s, StateSpace::MZero).unwrap();
        assert!(BlockUnitary::from_dense(&dense, StateSpace::MZero).unwrap().max_diff(&m0) < 1e-11);
    }

    #[test]
    fn logical_blocks_do_not_depend_on_m() {
        let pulse = PulseShape::new(0.15, 4.0, 3.0).unwrap();
        let s = Schedule::gaussian(&pulse, &BiasConfig::default(), CrossPair::default(), 300);
        let u = evolve(&s, StateSpace::Full).unwrap();
        let enc = LogicalEncoding::dfs();
        let b0 = logical_block(&u, TotalJ::One, HalfInt::ZERO, &enc).unwrap();
        for m in [HalfInt::from_twice(-2), HalfInt::from_twice(2)] {
            let bm = logical_block(&u, TotalJ::One, m, &enc).unwrap();
            assert!((bm.block - b0.block).camax() < 1e-12);
        }
    }

    #[test]
    fn block_unitary_rejects_mixing_and_mismatched_spaces() {
        let mut m = CMatrix::identity(DIM, DIM);
        m[(0, 63)] = Complex64::new(1e-6, 0.0);
        assert!(matches!(BlockUnitary::from_dense(&m, StateSpace::Full), Err(EngineError::NotBlockDiagonal(_))));
        let a = BlockUnitary::identity(StateSpace::Full);
        let b = BlockUnitary::identity(StateSpace::MZero);
        assert_eq!(a.compose(&b).unwrap_err(), EngineError::SpaceMismatch);
    }

    #[test]
    fn echo_has_the_required_form() {
        let spec = EchoSpec::y_rotation();
        let bias = BiasConfig::default();
        for q in [Qubit::A, Qubit::B] {
            assert!(spec.form_residual(q, &bias.eigensystem(q).v) < 1e-10);
            assert!(spec.form_residual(q, &Matrix2::identity()) < 1e-10);
        }
        let flipped = -bias.eigensystem(Qubit::A).v;
        assert!(spec.form_residual(Qubit::A, &flipped) < 1e-10);
        assert!((EchoSpec::eta_prime(&bias.eigensystem(Qubit::A).v) - PI / 2.0).abs() < 1e-15);
        assert!((EchoSpec::eta_prime(&Matrix2::identity()) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn echo_squares_to_a_phase_and_swaps_encoded_phases() {
        let pi = echo_pulse_pi(Qubit::A);
        let sq = single_qubit_block(&(&pi * &pi), Qubit::A);
        let enc = |m: &Matrix3<Complex64>| Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let sq2 = enc(&sq);
        let phase = sq2[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!((sq2 - Matrix2::identity() * phase).camax() < 1e-12);
        let p = enc(&single_qubit_block(&pi, Qubit::A));
        let (alpha, beta) = (0.37, -1.21);
        let d = Matrix2::from_diagonal(&nalgebra::Vector2::new(Complex64::from_polar(1.0, alpha), Complex64::from_polar(1.0, beta)));
        let conj = p.adjoint() * d * p;
        let want = Matrix2::from_diagonal(&nalgebra::Vector2::new(Complex64::from_polar(1.0, beta), Complex64::from_polar(1.0, alpha)));
        assert!((conj - want).camax() < 1e-12);
    }

    #[test]
    fn echo_acts_alike_in_every_sector() {
        let echo = BlockUnitary::from_dense(&(echo_pulse_pi(Qubit::A) * echo_pulse_pi(Qubit::B)), StateSpace::Full).unwrap();
        let frame = LogicalFrame::new(&BiasConfig::default(), LogicalEncoding::dfs());
        let want = nalgebra::Matrix4::from_fn(|i, k| frame.p_a[(i / 2, k / 2)] * frame.p_b[(i % 2, k % 2)]);
        let mut seen = 0;
        for s in StateSpace::Full.sectors().iter().filter(|s| s.encoded.len() == 4) {
            let j = if s.j == HalfInt::ZERO { TotalJ::Zero } else { TotalJ::One };
            let b = logical_block(&echo, j, s.m, &frame.encoding).unwrap();
            assert!((b.block - want).camax() < 1e-12, "J={} m={}", s.j, s.m);
            seen += 1;
        }
        assert_eq!(seen, 4);
    }

    #[test]
    fn ideal_frame_is_unitary() {
        let (r, inv) = ideal_frame();
        assert!((inv * &r - CMatrix::identity(DIM, DIM)).camax() < 1e-13);
        assert!(unitarity_residual(&r) < 1e-13);
    }

    #[test]
    fn halving_check_accepts_a_converged_grid() {
        let ctx = coarse_ctx(StateSpace::Logical);
        let pulse = ctx.pulse(0.1, 20.0).unwrap();
        let check = ctx.check_steps(&pulse).unwrap();
        assert!(check.drift <= 1e-9);
        let a = ctx.entangler_with_steps(&pulse, check.steps).unwrap();
        let b = ctx.entangler_with_steps(&pulse, 2 * check.steps).unwrap();
        assert_eq!(a.max_diff(&b), check.drift);
        let tight = GateContext { policy: StepPolicy { max_refinements: 0, ..StepPolicy::with_max_phase(4.0) }, ..ctx.clone() };
        assert!(matches!(tight.check_steps(&pulse), Err(EngineError::StepNotConverged { .. })));
    }

    #[test]
    fn small_area_phase_matches_first_order() {
        let ctx = coarse_ctx(StateSpace::Logical);
        let frame = LogicalFrame::new(&ctx.bias, LogicalEncoding::dfs());
        let pulse = PulseShape::from_area(0.1, 200.0, DEFAULT_WINDOW).unwrap();
        let steps = ctx.check_steps(&pulse).unwrap().steps;
        let u = ctx.entangler_with_steps(&pulse, steps).unwrap();
        let (a, b) = (ctx.bias.eigensystem(Qubit::A), ctx.bias.eigensystem(Qubit::B));
        let reduced = ReducedElements::exact();
        let la = structure_factors(&a.v, SpinRole::Z, &reduced);
        let lb = structure_factors(&b.v, SpinRole::Z, &reduced);
        for j in TotalJ::BOTH {
            let block = frame.to_eigenbasis(&logical_block(&u, j, HalfInt::ZERO, &frame.encoding).unwrap());
            let predicted = first_order_phases(&a, &b, &la, &lb, pulse.area(), pulse.duration(), j).c11;
            let measured = measured_c11(&block);
            assert!((measured / predicted - 1.0).abs() < 0.01, "{j:?}: {measured} vs {predicted}");
        }
    }

    #[test]
    fn first_order_composite_is_the_target() {
        let ctx = coarse_ctx(StateSpace::Logical);
        let frame = LogicalFrame::new(&ctx.bias, LogicalEncoding::dfs());
        let pulse = PulseShape::from_area(4.5 * PI, 300.0, DEFAULT_WINDOW).unwrap();
        let u = ctx.composite_gate(&pulse).unwrap();
        assert!(u.unitarity_residual() < UNITARITY_TOLERANCE);
        for j in TotalJ::BOTH {
            let f = SubspaceFigures::of(&frame.gate_block(&u, j).unwrap());
            assert!(f.d < 5e-3 && f.leakage < 1e-9, "{f:?}");
        }
        let zero = ctx.composite_gate(&pulse.with_amplitude(0.0).unwrap()).unwrap();
        for j in TotalJ::BOTH {
            let s = frame.gate_block(&zero, j).unwrap().block;
            let phase = s[(0, 0)];
            assert!((s - nalgebra::Matrix4::identity() * phase).camax() < 1e-9);
        }
    }

    #[test]
    fn guard_rejects_strong_pulses() {
        let ctx = GateContext::standard();
        let pulse = ctx.pulse(0.2, 10.0).unwrap();
        assert!(matches!(ctx.gaussian_entangler(&pulse), Err(EngineError::Model(ModelError::DegenerateLevels { .. }))));
        assert!(ctx.check_guard(0.05).is_ok());
    }
}
