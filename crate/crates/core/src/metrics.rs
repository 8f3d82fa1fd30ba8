//! Encoded 4x4 logical blocks and the leakage / trace-distance figures.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angular::HalfInt;
use crate::basis::{single_qubit_block, Qubit};
use crate::engine::{echo_pulse_pi, BlockUnitary, PulseShape};
use crate::model::{BiasConfig, LogicalEncoding, TotalJ};

pub type Block4 = Matrix4<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no (J = {j}, m = {m}) sector in the propagator's state space")]
    MissingSector { j: HalfInt, m: HalfInt },
}

/// Encoded 4x4 block of one total-`J` sector, ordered `|00>, |01>, |10>, |11>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogicalBlock {
    pub j: TotalJ,
    pub block: Block4,
}

impl LogicalBlock {
    /// Largest singular value; at most 1 for a block of a unitary.
    pub fn max_singular_value(&self) -> f64 {
        self.block.singular_values().max()
    }
}

fn kron2<T: nalgebra::RealField + Copy>(a: &Matrix2<T>, b: &Matrix2<T>) -> Matrix4<T> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

fn complexify(m: &Matrix4<f64>) -> Block4 {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Raw encoded block of `u` in sector `(j, m)`, expressed in the logical
/// basis of `encoding`.
pub fn logical_block(
    u: &BlockUnitary,
    j: TotalJ,
    m: HalfInt,
    encoding: &LogicalEncoding,
) -> Result<LogicalBlock, MetricsError> {
    let (sector, block) = u
        .block(j.half_int(), m)
        .ok_or(MetricsError::MissingSector { j: j.half_int(), m })?;
    let e = &sector.encoded;
    let raw = Block4::from_fn(|r, c| block[(e[r], e[c])]);
    let w = complexify(&kron2(&encoding.matrix(), &encoding.matrix()));
    Ok(LogicalBlock { j, block: w * raw * w.transpose() })
}

/// The ideal single-qubit frame of the composite gate: bias eigenbases and
/// the echo pulse, both in the logical basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogicalFrame {
    /// Columns are `|xi_+>, |xi_->` of each qubit in logical coordinates.
    pub r_a: Matrix2<f64>,
    pub r_b: Matrix2<f64>,
    /// Encoded action of the ideal echo on each qubit.
    pub p_a: Matrix2<Complex64>,
    pub p_b: Matrix2<Complex64>,
    pub encoding: LogicalEncoding,
}

impl LogicalFrame {
    pub fn new(bias: &BiasConfig, encoding: LogicalEncoding) -> Self {
        let w = encoding.matrix();
        let r = |q| w * bias.eigensystem(q).v.transpose();
        let p = |q| {
            let full = single_qubit_block(&echo_pulse_pi(q), q);
            let enc = Matrix2::new(full[(0, 0)], full[(0, 1)], full[(1, 0)], full[(1, 1)]);
            let wc = w.map(|x| Complex64::new(x, 0.0));
            wc * enc * wc.transpose()
        };
        LogicalFrame { r_a: r(Qubit::A), r_b: r(Qubit::B), p_a: p(Qubit::A), p_b: p(Qubit::B), encoding }
    }

    /// `(r_A x r_B)^dagger U (p_A x p_B)^dagger (r_A x r_B)`: the composite's
    /// entangling part, which ideally equals `exp(-i pi ZZ / 4)` up to phase.
    pub fn strip(&self, block: &LogicalBlock) -> LogicalBlock {
        let r = complexify(&kron2(&self.r_a, &self.r_b));
        let p = Block4::from_fn(|i, k| self.p_a[(i / 2, k / 2)] * self.p_b[(i % 2, k % 2)]);
        LogicalBlock { j: block.j, block: r.adjoint() * block.block * p.adjoint() * r }
    }

    /// The block in the bias eigenbasis, `(r_A x r_B)^dagger U (r_A x r_B)`.
    pub fn to_eigenbasis(&self, block: &LogicalBlock) -> LogicalBlock {
        let r = complexify(&kron2(&self.r_a, &self.r_b));
        LogicalBlock { j: block.j, block: r.adjoint() * block.block * r }
    }

    /// Frame-stripped gate block of the `m = 0` sector.
    pub fn gate_block(&self, u: &BlockUnitary, j: TotalJ) -> Result<LogicalBlock, MetricsError> {
        Ok(self.strip(&logical_block(u, j, HalfInt::ZERO, &self.encoding)?))
    }
}

/// `exp(-i pi Z^A Z^B / 4)`.
pub fn cz_target() -> Block4 {
    let d = |zz: f64| Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_4 * zz);
    Block4::from_diagonal(&nalgebra::Vector4::new(d(1.0), d(-1.0), d(-1.0), d(1.0)))
}

fn gram_trace(u: &Block4) -> f64 {
    u.iter().map(|z| z.norm_sqr()).sum()
}

/// `1 - |Tr(U^dagger U)|^2 / 16`.
pub fn leakage(block: &LogicalBlock) -> f64 {
    let t = gram_trace(&block.block);
    1.0 - t * t / 16.0
}

/// `1/2 + |Tr(U^dagger U)|^2 / 32 - |Tr(T^dagger U)|^2 / 16`.
pub fn trace_distance_d(block: &LogicalBlock, target: &Block4) -> f64 {
    let g = gram_trace(&block.block);
    let overlap = (target.adjoint() * block.block).trace().norm_sqr();
    0.5 + g * g / 32.0 - overlap / 16.0
}

/// Local `Z` phases `(a, b)` applied as `diag(e^{-i(a z_A + b z_B)})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalZ {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

/// Diagnostic: `D` minimized over local `Z` rotations applied before comparison.
pub fn local_z_minimized_d(block: &LogicalBlock, target: &Block4) -> LocalZ {
    let m = target.adjoint() * block.block;
    let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(3, 3)]];
    let g = gram_trace(&block.block);
    // only the diagonal of T^dagger U survives a diagonal rotation's trace
    let overlap = |a: f64, b: f64| {
        let z = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
        diag.iter()
            .zip(z)
            .map(|(d, (za, zb))| d * Complex64::from_polar(1.0, -(a * za + b * zb)))
            .sum::<Complex64>()
            .norm_sqr()
    };
    let d_of = |a: f64, b: f64| 0.5 + g * g / 32.0 - overlap(a, b) / 16.0;
    let grid = 96;
    let step = std::f64::consts::TAU / grid as f64;
    let (mut best_a, mut best_b, mut best) = (0.0, 0.0, d_of(0.0, 0.0));
    for i in 0..grid {
        for k in 0..grid {
            let (a, b) = (i as f64 * step, k as f64 * step);
            let v = d_of(a, b);
            if v < best {
                (best_a, best_b, best) = (a, b, v);
            }
        }
    }
    // coordinate refinement by shrinking pattern search
    let mut h = step;
    while h > 1e-10 {
        let mut moved = false;
        for (da, db) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let v = d_of(best_a + da, best_b + db);
            if v < best {
                (best_a, best_b, best) = (best_a + da, best_b + db, v);
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    let wrap = |x: f64| (x + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    LocalZ { a: wrap(best_a), b: wrap(best_b), d: best }
}

/// Nonlinear phase `c11` of a block that is diagonal in the bias
/// eigenbasis: `-arg(U_{++} U_{--} U_{+-}^* U_{-+}^*) / 4`, in `(-pi/4, pi/4]`.
pub fn measured_c11(eigenbasis_block: &LogicalBlock) -> f64 {
    let u = &eigenbasis_block.block;
    let z = u[(0, 0)] * u[(3, 3)] * u[(1, 1)].conj() * u[(2, 2)].conj();
    -z.arg() / 4.0
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len();
        if count == 0 {
            return Stats::default();
        }
        let mean = samples.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stats { mean, std, count }
    }
}

/// Figures of merit of one total-`J` sector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceFigures {
    pub j: TotalJ,
    pub leakage: f64,
    /// Against the fixed `exp(-i pi ZZ / 4)` target.
    pub d: f64,
    /// Diagnostic: minimized over local `Z` phases.
    pub d_local_z: f64,
}

impl SubspaceFigures {
    pub fn of(block: &LogicalBlock) -> Self {
        let target = cz_target();
        SubspaceFigures {
            j: block.j,
            leakage: leakage(block),
            d: trace_distance_d(block, &target),
            d_local_z: local_z_minimized_d(block, &target).d,
        }
    }
}

/// Figures of one noise trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFigures {
    pub trial: usize,
    pub j0: SubspaceFigures,
    pub j1: SubspaceFigures,
}

/// Per-`J` noise statistics over trials, plus the calibration objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub trials: usize,
    pub d_j0: Stats,
    pub d_j1: Stats,
    pub leakage_j0: Stats,
    pub leakage_j1: Stats,
    pub objective: Stats,
}

impl NoiseSummary {
    /// `objective` maps `(D_0, D_1)` of one trial to the calibration objective.
    pub fn from_trials(trials: &[TrialFigures], objective: impl Fn(f64, f64) -> f64) -> Self {
        let col = |f: &dyn Fn(&TrialFigures) -> f64| Stats::from_samples(&trials.iter().map(f).collect::<Vec<_>>());
        NoiseSummary {
            trials: trials.len(),
            d_j0: col(&|t| t.j0.d),
            d_j1: col(&|t| t.j1.d),
            leakage_j0: col(&|t| t.j0.leakage),
            leakage_j1: col(&|t| t.j1.leakage),
            objective: col(&|t| objective(t.j0.d, t.j1.d)),
        }
    }
}

/// Complex entries `[re, im]` of a logical block, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEntries {
    pub j: TotalJ,
    pub entries: [[[f64; 2]; 4]; 4],
}

impl From<&LogicalBlock> for BlockEntries {
    fn from(b: &LogicalBlock) -> Self {
        BlockEntries {
            j: b.j,
            entries: std::array::from_fn(|r| std::array::from_fn(|c| [b.block[(r, c)].re, b.block[(r, c)].im])),
        }
    }
}

/// Everything reported about one calibrated gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub pulse: PulseShape,
    pub area: f64,
    pub steps: usize,
    pub noiseless: Vec<SubspaceFigures>,
    /// Frame-stripped logical blocks of the noiseless gate.
    pub blocks: Vec<BlockEntries>,
    pub noise: Option<NoiseSummary>,
    pub trials: Vec<TrialFigures>,
}

impl GateReport {
    pub fn figures(&self, j: TotalJ) -> Option<&SubspaceFigures> {
        self.noiseless.iter().find(|f| f.j == j)
    }
}
