//! Static model: bias Hamiltonians, their encoded eigensystems, structure
//! factors and the first-order phase predictions of the adiabatic gate.
//!
//! Frequencies are in units of the qubit-A bias scale, so times are
//! reported as `Omega^A t`.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angular::{wigner_6j, HalfInt, ReducedElements, SixJ, SpinRole};
use crate::basis::{single_qubit_block, ExchangeTable, Qubit, SpinIndex, DIM};
use crate::linalg::{expm_i_symmetric, CMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bias amplitude for {0:?} is negative or not finite")]
    NegativeBias(Junction),
    #[error("qubit {0:?} needs at least two positive bias couplings")]
    UnderBiased(Qubit),
    #[error("coupling is degenerate: (L+ - L-)_A (L+ - L-)_B = {0:.3e}")]
    DegenerateCoupling(f64),
    #[error("encoded levels {gap:.4} apart; need at least {ratio} x peak coupling {peak:.4}")]
    DegenerateLevels { gap: f64, peak: f64, ratio: f64 },
    #[error("encoding matrix W is not orthogonal")]
    NonOrthogonalEncoding,
}

/// An exchange control: one of the six intra-qubit bias couplings or the
/// inter-qubit coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Junction {
    ZtA,
    TnA,
    ZnA,
    ZtB,
    TnB,
    ZnB,
    Cross,
}

impl Junction {
    pub const ALL: [Junction; 7] = [
        Junction::ZtA,
        Junction::TnA,
        Junction::ZnA,
        Junction::ZtB,
        Junction::TnB,
        Junction::ZnB,
        Junction::Cross,
    ];
    pub const BIAS: [Junction; 6] = [
        Junction::ZtA,
        Junction::TnA,
        Junction::ZnA,
        Junction::ZtB,
        Junction::TnB,
        Junction::ZnB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Junction::ZtA => "zt_a",
            Junction::TnA => "tn_a",
            Junction::ZnA => "zn_a",
            Junction::ZtB => "zt_b",
            Junction::TnB => "tn_b",
            Junction::ZnB => "zn_b",
            Junction::Cross => "cross",
        }
    }

    /// Spin pair of a bias junction; `None` for the cross junction.
    pub fn bias_spins(self) -> Option<(SpinIndex, SpinIndex)> {
        use SpinRole::*;
        let (q, a, b) = match self {
            Junction::ZtA => (Qubit::A, Z, T),
            Junction::TnA => (Qubit::A, T, N),
            Junction::ZnA => (Qubit::A, Z, N),
            Junction::ZtB => (Qubit::B, Z, T),
            Junction::TnB => (Qubit::B, T, N),
            Junction::ZnB => (Qubit::B, Z, N),
            Junction::Cross => return None,
        };
        Some((SpinIndex::new(q, a), SpinIndex::new(q, b)))
    }
}

/// Always-on intra-qubit exchange amplitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasConfig {
    pub omega_zt_a: f64,
    pub omega_tn_a: f64,
    pub omega_zn_a: f64,
    pub omega_zt_b: f64,
    pub omega_tn_b: f64,
    pub omega_zn_b: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig::linear(1.0, 1.7)
    }
}

impl BiasConfig {
    /// `Omega_zt = Omega_tn`, `Omega_zn = 0` on both qubits.
    pub fn linear(omega_a: f64, omega_b: f64) -> Self {
        BiasConfig {
            omega_zt_a: omega_a,
            omega_tn_a: omega_a,
            omega_zn_a: 0.0,
            omega_zt_b: omega_b,
            omega_tn_b: omega_b,
            omega_zn_b: 0.0,
        }
    }

    pub fn zero() -> Self {
        BiasConfig::linear(0.0, 0.0)
    }

    pub fn amplitude(&self, junction: Junction) -> f64 {
        match junction {
            Junction::ZtA => self.omega_zt_a,
            Junction::TnA => self.omega_tn_a,
            Junction::ZnA => self.omega_zn_a,
            Junction::ZtB => self.omega_zt_b,
            Junction::TnB => self.omega_tn_b,
            Junction::ZnB => self.omega_zn_b,
            Junction::Cross => 0.0,
        }
    }

    /// `(Omega_zt, Omega_tn, Omega_zn)` of one qubit.
    pub fn qubit(&self, q: Qubit) -> [f64; 3] {
        match q {
            Qubit::A => [self.omega_zt_a, self.omega_tn_a, self.omega_zn_a],
            Qubit::B => [self.omega_zt_b, self.omega_tn_b, self.omega_zn_b],
        }
    }

    /// Copy with the other qubit's biases switched off.
    pub fn only(&self, q: Qubit) -> BiasConfig {
        let mut out = *self;
        let zeroed = match q {
            Qubit::A => [Junction::ZtB, Junction::TnB, Junction::ZnB],
            Qubit::B => [Junction::ZtA, Junction::TnA, Junction::ZnA],
        };
        for j in zeroed {
            out.set(j, 0.0);
        }
        out
    }

    pub fn set(&mut self, junction: Junction, value: f64) {
        match junction {
            Junction::ZtA => self.omega_zt_a = value,
            Junction::TnA => self.omega_tn_a = value,
            Junction::ZnA => self.omega_zn_a = value,
            Junction::ZtB => self.omega_zt_b = value,
            Junction::TnB => self.omega_tn_b = value,
            Junction::ZnB => self.omega_zn_b = value,
            Junction::Cross => {}
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for j in Junction::BIAS {
            let v = self.amplitude(j);
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::NegativeBias(j));
            }
        }
        for q in [Qubit::A, Qubit::B] {
            if self.qubit(q).iter().filter(|&&x| x > 0.0).count() < 2 {
                return Err(ModelError::UnderBiased(q));
            }
        }
        Ok(())
    }

    pub fn eigensystem(&self, q: Qubit) -> BiasEigensystem {
        let [zt, tn, zn] = self.qubit(q);
        bias_eigensystem(zt, tn, zn)
    }
}

/// Closed-form encoded energies `(xi_+, xi_-)` relative to the leaked quartet.
pub fn xi_energies(omega_zt: f64, omega_tn: f64, omega_zn: f64) -> (f64, f64) {
    let w = [omega_zt, omega_tn, omega_zn];
    let sum: f64 = w.iter().sum();
    let squares: f64 = w.iter().map(|x| x * x).sum();
    let cross = w[0] * w[1] + w[0] * w[2] + w[1] * w[2];
    let root = (squares - cross).max(0.0).sqrt();
    (0.5 * (-sum + root), 0.5 * (-sum - root))
}

/// Logical basis of a qubit in terms of `|J_zt, 1/2, m>`: `|k> = sum_J W[k][J] |J>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicalEncoding {
    pub w: [[f64; 2]; 2],
}

impl LogicalEncoding {
    /// The DFS encoding, `W = 1`.
    pub fn dfs() -> Self {
        LogicalEncoding { w: [[1.0, 0.0], [0.0, 1.0]] }
    }

    /// RX / AEON encoding (a t-n swap of the DFS basis).
    pub fn rx_aeon() -> Self {
        let s = 3f64.sqrt() / 2.0;
        LogicalEncoding { w: [[-0.5, -s], [-s, 0.5]] }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.w[0][0], self.w[0][1], self.w[1][0], self.w[1][1])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let w = self.matrix();
        if (w * w.transpose() - Matrix2::identity()).amax() > 1e-12 {
            return Err(ModelError::NonOrthogonalEncoding);
        }
        Ok(())
    }
}

impl Default for LogicalEncoding {
    fn default() -> Self {
        LogicalEncoding::dfs()
    }
}

/// Encoded eigenstates of one qubit's bias Hamiltonian.
///
/// Row `s` of `v` holds `|xi_s>` in the `(J_zt = 0, J_zt = 1)` basis, with
/// `s = 0` for `xi_+`. Each row is signed so its first nonzero entry is
/// positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasEigensystem {
    pub xi_plus: f64,
    pub xi_minus: f64,
    pub v: Matrix2<f64>,
}

impl BiasEigensystem {
    pub fn xi(&self, s: usize) -> f64 {
        if s == 0 {
            self.xi_plus
        } else {
            self.xi_minus
        }
    }
}

/// Diagonalize the encoded block of `Omega_zt S_z.S_t + Omega_tn S_t.S_n + Omega_zn S_z.S_n`.
pub fn bias_eigensystem(omega_zt: f64, omega_tn: f64, omega_zn: f64) -> BiasEigensystem {
    let table = ExchangeTable::shared();
    let mut cfg = BiasConfig::zero();
    cfg.omega_zt_a = omega_zt;
    cfg.omega_tn_a = omega_tn;
    cfg.omega_zn_a = omega_zn;
    let block = single_qubit_block(&bias_hamiltonian_with(table, &cfg), Qubit::A);
    let leaked = block[(2, 2)];
    let enc = Matrix2::new(block[(0, 0)], block[(0, 1)], block[(1, 0)], block[(1, 1)]);
    let eig = SymmetricEigen::new(enc);
    let (hi, lo) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let canon = |k: usize| {
        let col = eig.eigenvectors.column(k).into_owned();
        let lead = if col[0].abs() > 1e-12 { col[0] } else { col[1] };
        if lead < 0.0 {
            -col
        } else {
            col
        }
    };
    let (vp, vm) = (canon(hi), canon(lo));
    BiasEigensystem {
        xi_plus: eig.eigenvalues[hi] - leaked,
        xi_minus: eig.eigenvalues[lo] - leaked,
        v: Matrix2::new(vp[0], vp[1], vm[0], vm[1]),
    }
}

pub(crate) fn bias_hamiltonian_with(table: &ExchangeTable, config: &BiasConfig) -> DMatrix<f64> {
    let mut h = DMatrix::<f64>::zeros(DIM, DIM);
    for j in Junction::BIAS {
        let amp = config.amplitude(j);
        if amp != 0.0 {
            let (a, b) = j.bias_spins().expect("bias junction");
            h += table.get(a, b).expect("distinct spins") * amp;
        }
    }
    h
}

/// `H_1^A + H_1^B` in the coupled basis.
pub fn bias_hamiltonian(config: &BiasConfig) -> DMatrix<f64> {
    bias_hamiltonian_with(ExchangeTable::shared(), config)
}

/// `R = exp(-i pi S_t . S_n)` on one qubit, in the coupled basis.
pub fn swap_rotation_r(qubit: Qubit) -> CMatrix {
    let op = ExchangeTable::shared()
        .get(SpinIndex::new(qubit, SpinRole::T), SpinIndex::new(qubit, SpinRole::N))
        .expect("distinct spins");
    expm_i_symmetric(op, std::f64::consts::PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureFactors {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

impl StructureFactors {
    pub fn get(&self, s: usize) -> f64 {
        if s == 0 {
            self.lambda_plus
        } else {
            self.lambda_minus
        }
    }

    pub fn difference(&self) -> f64 {
        self.lambda_plus - self.lambda_minus
    }
}

/// `Lambda_s = sum_{J, J'} V_{s,J} V_{s,J'} <J || S_role || J'>`.
pub fn structure_factors(v: &Matrix2<f64>, role: SpinRole, reduced: &ReducedElements) -> StructureFactors {
    let lambda = |s: usize| {
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                acc += v[(s, a)] * v[(s, b)] * reduced.get(role, a, b);
            }
        }
        acc
    };
    StructureFactors { lambda_plus: lambda(0), lambda_minus: lambda(1) }
}

/// Largest deviation of the encoded inter-qubit exchange elements from the
/// factorized form `k_J <A||S_a||A'> <B||S_b||B'>`, over every cross pair and
/// both code-space `J` at `m = 0`.
pub fn factorization_residual(reduced: &ReducedElements) -> f64 {
    let table = ExchangeTable::shared();
    let states = table.states();
    let pair = |h: HalfInt| (h.twice() / 2) as usize;
    let mut worst = 0.0f64;
    for ra in SpinRole::ALL {
        for rb in SpinRole::ALL {
            let op = table
                .get(SpinIndex::new(Qubit::A, ra), SpinIndex::new(Qubit::B, rb))
                .expect("distinct spins");
            for j in TotalJ::BOTH {
                let code: Vec<usize> = (0..states.len())
                    .filter(|&k| states[k].is_encoded() && states[k].j == j.half_int() && states[k].m == HalfInt::ZERO)
                    .collect();
                for &r in &code {
                    for &c in &code {
                        let (sr, sc) = (&states[r], &states[c]);
                        let predicted = j.coupling_factor()
                            * reduced.get(ra, pair(sr.jzt_a), pair(sc.jzt_a))
                            * reduced.get(rb, pair(sr.jzt_b), pair(sc.jzt_b));
                        worst = worst.max((op[(r, c)] - predicted).abs());
                    }
                }
            }
        }
    }
    worst
}

/// Total angular momentum of the two-qubit code space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TotalJ {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
}

impl TotalJ {
    pub const BOTH: [TotalJ; 2] = [TotalJ::Zero, TotalJ::One];

    pub fn half_int(self) -> HalfInt {
        match self {
            TotalJ::Zero => HalfInt::ZERO,
            TotalJ::One => HalfInt::ONE,
        }
    }

    pub fn value(self) -> u8 {
        match self {
            TotalJ::Zero => 0,
            TotalJ::One => 1,
        }
    }

    /// `(-1)^(J+1) {1/2 1 1/2; 1/2 J 1/2}`, which equals `(-1)^(J+1) / (2+J)!`.
    pub fn coupling_factor(self) -> f64 {
        let sign = if self == TotalJ::One { 1.0 } else { -1.0 };
        let h = HalfInt::HALF;
        sign * wigner_6j(&SixJ::new([h, HalfInt::ONE, h], [h, self.half_int(), h]))
    }
}

/// Coefficients of `exp[-i (c00 + c10 Z^A + c01 Z^B + c11 Z^A Z^B)]`, built
/// from the four eigenstate phases by the usual four-term combinations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePrediction {
    pub c00: f64,
    pub c01: f64,
    pub c10: f64,
    pub c11: f64,
}

impl PhasePrediction {
    /// From `phi[s][r]`, index 0 meaning `+`.
    pub fn from_phases(phi: [[f64; 2]; 2]) -> Self {
        let (pp, pm, mp, mm) = (phi[0][0], phi[0][1], phi[1][0], phi[1][1]);
        PhasePrediction {
            c00: (pp + mm + pm + mp) / 4.0,
            c01: (pp - mm + pm - mp) / 4.0,
            c10: (pp - mm - pm + mp) / 4.0,
            c11: (pp + mm - pm - mp) / 4.0,
        }
    }

    /// Inverse of [`from_phases`](Self::from_phases); `c01` pairs with the first index.
    pub fn phase(&self, s: usize, r: usize) -> f64 {
        let zs = if s == 0 { 1.0 } else { -1.0 };
        let zr = if r == 0 { 1.0 } else { -1.0 };
        self.c00 + self.c01 * zs + self.c10 * zr + self.c11 * zs * zr
    }
}

/// First-order phases of a pulse of area `phi` and duration `duration` in
/// the total-`J` sector `j`.
pub fn first_order_phases(
    bias_a: &BiasEigensystem,
    bias_b: &BiasEigensystem,
    lam_a: &StructureFactors,
    lam_b: &StructureFactors,
    phi: f64,
    duration: f64,
    j: TotalJ,
) -> PhasePrediction {
    let k = j.coupling_factor();
    let mut phases = [[0.0; 2]; 2];
    for (s, row) in phases.iter_mut().enumerate() {
        for (r, p) in row.iter_mut().enumerate() {
            *p = (bias_a.xi(s) + bias_b.xi(r)) * duration + k * phi * lam_a.get(s) * lam_b.get(r);
        }
    }
    PhasePrediction::from_phases(phases)
}

/// Pulse area giving a maximally entangling phase: `3 pi` (composite) or
/// `6 pi` (single pulse) over `(L+ - L-)_A (L+ - L-)_B`.
pub fn entangling_area(lam_a: &StructureFactors, lam_b: &StructureFactors, composite: bool) -> Result<f64, ModelError> {
    let denom = lam_a.difference() * lam_b.difference();
    if denom.abs() < 1e-12 {
        return Err(ModelError::DegenerateCoupling(denom));
    }
    let target = if composite { 3.0 } else { 6.0 } * std::f64::consts::PI;
    Ok(target / denom)
}

/// Smallest spacing between the four two-qubit encoded levels `xi_s^A + xi_r^B`.
pub fn min_encoded_gap(bias_a: &BiasEigensystem, bias_b: &BiasEigensystem) -> f64 {
    let levels: Vec<f64> = (0..4).map(|k| bias_a.xi(k / 2) + bias_b.xi(k % 2)).collect();
    let mut gap = f64::INFINITY;
    for a in 0..4 {
        for b in a + 1..4 {
            gap = gap.min((levels[a] - levels[b]).abs());
        }
    }
    gap
}

/// Reject biases whose encoded levels are closer than `ratio * peak`.
///
/// Any exact degeneracy is rejected regardless of `ratio`.
pub fn check_degeneracy(
    bias_a: &BiasEigensystem,
    bias_b: &BiasEigensystem,
    peak: f64,
    ratio: f64,
) -> Result<(), ModelError> {
    let gap = min_encoded_gap(bias_a, bias_b);
    if gap < 1e-9 || gap < ratio * peak {
        return Err(ModelError::DegenerateLevels { gap, peak, ratio });
    }
    Ok(())
}
