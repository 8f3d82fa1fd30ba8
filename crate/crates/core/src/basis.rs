//! Product and coupled bases of two three-spin qubits.
//!
//! Spins occupy tensor slots in the order `A.z, A.t, A.n, B.z, B.t, B.n`;
//! slot 0 is the most significant bit of a product-state index and a zero
//! bit means spin up. The coupled basis follows the tree
//! `(z t) -> J_zt`, `(J_zt n) -> J_ztn` for each qubit, then
//! `(J_ztn^A J_ztn^B) -> J`, all with Condon-Shortley phases.
//!
//! Canonical coupled ordering: ascending `J`, then ascending `m`, then
//! `(J_zt^A, J_ztn^A, J_zt^B, J_ztn^B)` lexicographically. Every `(J, m)`
//! sector is therefore a contiguous range of indices, and inside the
//! `J = 0, 1` sectors the four encoded states appear as `|00>, |01>, |10>,
//! |11>` by `(J_zt^A, J_zt^B)`.

use std::fmt;
use std::io::Write;
use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angular::{clebsch_gordan, HalfInt, SpinRole};

pub const NUM_SPINS: usize = 6;
pub const DIM: usize = 1 << NUM_SPINS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("exchange needs two distinct spins, got {0} twice")]
    SameSpin(SpinIndex),
    #[error("operator is not block diagonal in (J, m): off-block magnitude {0:.3e}")]
    NotBlockDiagonal(f64),
    #[error("no ({j}, {m}) sector in this state space")]
    MissingSector { j: HalfInt, m: HalfInt },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Qubit {
    A,
    B,
}

impl Qubit {
    pub fn other(self) -> Qubit {
        match self {
            Qubit::A => Qubit::B,
            Qubit::B => Qubit::A,
        }
    }
}

/// One of the six physical spins.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinIndex {
    pub qubit: Qubit,
    pub role: SpinRole,
}

impl SpinIndex {
    pub const fn new(qubit: Qubit, role: SpinRole) -> Self {
        SpinIndex { qubit, role }
    }

    pub const ALL: [SpinIndex; NUM_SPINS] = [
        SpinIndex::new(Qubit::A, SpinRole::Z),
        SpinIndex::new(Qubit::A, SpinRole::T),
        SpinIndex::new(Qubit::A, SpinRole::N),
        SpinIndex::new(Qubit::B, SpinRole::Z),
        SpinIndex::new(Qubit::B, SpinRole::T),
        SpinIndex::new(Qubit::B, SpinRole::N),
    ];

    /// Tensor-product slot.
    pub fn slot(self) -> usize {
        let base = match self.qubit {
            Qubit::A => 0,
            Qubit::B => 3,
        };
        base + self.role.index()
    }

    pub fn from_slot(slot: usize) -> SpinIndex {
        SpinIndex::ALL[slot]
    }
}

impl fmt::Display for SpinIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}.{}", self.qubit, self.role.label())
    }
}

impl fmt::Debug for SpinIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl std::str::FromStr for SpinIndex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (q, r) = s
            .split_once('.')
            .ok_or_else(|| format!("expected QUBIT.ROLE such as A.z, got {s:?}"))?;
        let qubit = match q {
            "A" | "a" => Qubit::A,
            "B" | "b" => Qubit::B,
            _ => return Err(format!("unknown qubit {q:?}")),
        };
        let role = match r {
            "z" | "Z" => SpinRole::Z,
            "t" | "T" => SpinRole::T,
            "n" | "N" => SpinRole::N,
            _ => return Err(format!("unknown spin role {r:?}")),
        };
        Ok(SpinIndex { qubit, role })
    }
}

impl Serialize for SpinIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpinIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A coupled-basis ket `|J_zt^A, J_ztn^A, J_zt^B, J_ztn^B, J, m>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoupledState {
    pub jzt_a: HalfInt,
    pub jztn_a: HalfInt,
    pub jzt_b: HalfInt,
    pub jztn_b: HalfInt,
    pub j: HalfInt,
    pub m: HalfInt,
}

impl CoupledState {
    /// Both qubits inside their `J_ztn = 1/2` code space.
    pub fn is_encoded(&self) -> bool {
        self.jztn_a == HalfInt::HALF && self.jztn_b == HalfInt::HALF
    }

    pub fn pair_spin(&self, qubit: Qubit) -> HalfInt {
        match qubit {
            Qubit::A => self.jzt_a,
            Qubit::B => self.jzt_b,
        }
    }

    pub fn triple_spin(&self, qubit: Qubit) -> HalfInt {
        match qubit {
            Qubit::A => self.jztn_a,
            Qubit::B => self.jztn_b,
        }
    }

    fn sort_key(&self) -> (HalfInt, HalfInt, HalfInt, HalfInt, HalfInt, HalfInt) {
        (self.j, self.m, self.jzt_a, self.jztn_a, self.jzt_b, self.jztn_b)
    }
}

/// Per-qubit multiplets `(J_zt, J_ztn)`: the two code states and the leaked quartet.
const QUBIT_LABELS: [(HalfInt, HalfInt); 3] = [
    (HalfInt::ZERO, HalfInt::HALF),
    (HalfInt::ONE, HalfInt::HALF),
    (HalfInt::ONE, HalfInt::THREE_HALVES),
];

/// All 64 coupled states in canonical order.
pub fn enumerate_coupled_basis() -> Vec<CoupledState> {
    let mut states = Vec::with_capacity(DIM);
    for (jzt_a, jztn_a) in QUBIT_LABELS {
        for (jzt_b, jztn_b) in QUBIT_LABELS {
            let lo = (jztn_a.twice() - jztn_b.twice()).abs();
            let hi = jztn_a.twice() + jztn_b.twice();
            for tj in (lo..=hi).step_by(2) {
                let j = HalfInt::from_twice(tj);
                for m in j.projections() {
                    states.push(CoupledState { jzt_a, jztn_a, jzt_b, jztn_b, j, m });
                }
            }
        }
    }
    states.sort_by_key(CoupledState::sort_key);
    states
}

/// Projection `m_k` of slot `slot` in product state `index`.
fn slot_projection(index: usize, slot: usize) -> HalfInt {
    if (index >> (NUM_SPINS - 1 - slot)) & 1 == 0 {
        HalfInt::HALF
    } else {
        -HalfInt::HALF
    }
}

/// Amplitude of three spins `(m_z, m_t, m_n)` in the qubit ket `|J_zt, J_ztn, M>`.
fn qubit_amplitude(jzt: HalfInt, jztn: HalfInt, mz: HalfInt, mt: HalfInt, mn: HalfInt) -> f64 {
    let h = HalfInt::HALF;
    let mzt = mz + mt;
    clebsch_gordan(h, mz, h, mt, jzt, mzt) * clebsch_gordan(jzt, mzt, h, mn, jztn, mzt + mn)
}

/// Orthogonal change of basis; `matrix[(c, p)] = <coupled c | product p>`.
#[derive(Clone, Debug)]
pub struct BasisTransform {
    pub matrix: DMatrix<f64>,
    pub states: Vec<CoupledState>,
}

impl BasisTransform {
    /// `T O T^T`: product-basis operator to the coupled basis.
    pub fn to_coupled(&self, product_op: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * product_op * self.matrix.transpose()
    }

    /// `max |T T^T - 1|`.
    pub fn orthogonality_residual(&self) -> f64 {
        let gram = &self.matrix * self.matrix.transpose();
        (gram - DMatrix::<f64>::identity(DIM, DIM)).amax()
    }
}

pub fn build_transform() -> BasisTransform {
    let states = enumerate_coupled_basis();
    let mut matrix = DMatrix::<f64>::zeros(DIM, DIM);
    for (c, s) in states.iter().enumerate() {
        for p in 0..DIM {
            let m: Vec<HalfInt> = (0..NUM_SPINS).map(|k| slot_projection(p, k)).collect();
            let (ma, mb) = (m[0] + m[1] + m[2], m[3] + m[4] + m[5]);
            if ma + mb != s.m {
                continue;
            }
            let amp = clebsch_gordan(s.jztn_a, ma, s.jztn_b, mb, s.j, s.m)
                * qubit_amplitude(s.jzt_a, s.jztn_a, m[0], m[1], m[2])
                * qubit_amplitude(s.jzt_b, s.jztn_b, m[3], m[4], m[5]);
            matrix[(c, p)] = amp;
        }
    }
    BasisTransform { matrix, states }
}

fn pauli(alpha: usize) -> DMatrix<Complex64> {
    let (o, l, i) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0));
    match alpha {
        0 => DMatrix::from_row_slice(2, 2, &[o, l, l, o]),
        1 => DMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
        _ => DMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
    }
}

/// Pauli matrix `alpha` (0 = x, 1 = y, 2 = z) acting on one slot of the
/// 64-dimensional product space.
pub fn product_pauli(alpha: usize, slot: usize) -> DMatrix<Complex64> {
    let eye = DMatrix::<Complex64>::identity(2, 2);
    let mut out = DMatrix::<Complex64>::identity(1, 1);
    for k in 0..NUM_SPINS {
        let factor = if k == slot { pauli(alpha) } else { eye.clone() };
        out = out.kronecker(&factor);
    }
    out
}

/// Total spin component `S_alpha = sum_k sigma_alpha^k / 2` in the product basis.
pub fn product_total_spin(alpha: usize) -> DMatrix<Complex64> {
    (0..NUM_SPINS)
        .map(|k| product_pauli(alpha, k))
        .fold(DMatrix::zeros(DIM, DIM), |acc, p| acc + p)
        * Complex64::new(0.5, 0.0)
}

/// `S_i . S_j = (1/4) sum_alpha sigma_alpha^i sigma_alpha^j` in the product basis.
pub fn product_exchange(i: SpinIndex, j: SpinIndex) -> Result<DMatrix<f64>, BasisError> {
    if i == j {
        return Err(BasisError::SameSpin(i));
    }
    let mut sum = DMatrix::<Complex64>::zeros(DIM, DIM);
    for alpha in 0..3 {
        sum += product_pauli(alpha, i.slot()) * product_pauli(alpha, j.slot());
    }
    debug_assert!(sum.iter().all(|z| z.im.abs() < 1e-15));
    Ok(sum.map(|z| z.re * 0.25))
}

/// Contiguous `(J, m)` sector of the coupled basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Sector {
    pub j: HalfInt,
    pub m: HalfInt,
    pub start: usize,
    pub len: usize,
    /// Offsets (within the sector) of encoded states, in `|00>, |01>, |10>, |11>` order.
    pub encoded: Vec<usize>,
}

impl Sector {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// All `(J, m)` sectors in canonical order.
pub fn sectors() -> Vec<Sector> {
    let states = enumerate_coupled_basis();
    let mut out: Vec<Sector> = Vec::new();
    for (idx, s) in states.iter().enumerate() {
        match out.last_mut() {
            Some(sec) if sec.j == s.j && sec.m == s.m => sec.len += 1,
            _ => out.push(Sector { j: s.j, m: s.m, start: idx, len: 1, encoded: Vec::new() }),
        }
        let sec = out.last_mut().unwrap();
        if s.is_encoded() {
            sec.encoded.push(idx - sec.start);
        }
    }
    out
}

/// Which sectors a simulation carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpace {
    /// All 64 states.
    Full,
    /// The 20 states with `m = 0`.
    #[default]
    MZero,
    /// `J = 0` and `J = 1` at `m = 0`: the 14 states reachable from the code space.
    Logical,
}

impl StateSpace {
    pub fn sectors(self) -> Vec<Sector> {
        sectors()
            .into_iter()
            .filter(|s| match self {
                StateSpace::Full => true,
                StateSpace::MZero => s.m == HalfInt::ZERO,
                StateSpace::Logical => s.m == HalfInt::ZERO && s.j.twice() <= 2,
            })
            .collect()
    }

    pub fn dim(self) -> usize {
        self.sectors().iter().map(|s| s.len).sum()
    }
}

/// Largest magnitude of `op` outside the `(J, m)` sectors.
pub fn off_block_magnitude(op: &DMatrix<f64>) -> f64 {
    let secs = sectors();
    let mut label = vec![0usize; DIM];
    for (k, s) in secs.iter().enumerate() {
        for i in s.range() {
            label[i] = k;
        }
    }
    let mut worst = 0.0f64;
    for r in 0..DIM {
        for c in 0..DIM {
            if label[r] != label[c] {
                worst = worst.max(op[(r, c)].abs());
            }
        }
    }
    worst
}

/// The 15 coupled-basis exchange operators, computed once.
#[derive(Debug)]
pub struct ExchangeTable {
    pub transform: BasisTransform,
    ops: Vec<DMatrix<f64>>,
}

fn pair_index(i: SpinIndex, j: SpinIndex) -> usize {
    let (a, b) = if i.slot() < j.slot() { (i.slot(), j.slot()) } else { (j.slot(), i.slot()) };
    // row-major upper triangle of a 6x6 grid
    a * NUM_SPINS - a * (a + 1) / 2 + (b - a - 1)
}

impl ExchangeTable {
    pub fn build() -> Self {
        let transform = build_transform();
        let mut ops = vec![DMatrix::zeros(0, 0); 15];
        for a in 0..NUM_SPINS {
            for b in a + 1..NUM_SPINS {
                let (i, j) = (SpinIndex::from_slot(a), SpinIndex::from_slot(b));
                let prod = product_exchange(i, j).expect("distinct spins");
                let mut op = transform.to_coupled(&prod);
                // exact zeros off the (J, m) blocks; symmetrize the rest
                op = (&op + op.transpose()) * 0.5;
                op.iter_mut().filter(|x| x.abs() < 1e-14).for_each(|x| *x = 0.0);
                ops[pair_index(i, j)] = op;
            }
        }
        ExchangeTable { transform, ops }
    }

    /// Process-wide shared table.
    pub fn shared() -> &'static ExchangeTable {
        static TABLE: OnceLock<ExchangeTable> = OnceLock::new();
        TABLE.get_or_init(ExchangeTable::build)
    }

    pub fn get(&self, i: SpinIndex, j: SpinIndex) -> Result<&DMatrix<f64>, BasisError> {
        if i == j {
            return Err(BasisError::SameSpin(i));
        }
        Ok(&self.ops[pair_index(i, j)])
    }

    pub fn states(&self) -> &[CoupledState] {
        &self.transform.states
    }
}

/// `S_i . S_j` in the coupled basis.
pub fn coupled_exchange(i: SpinIndex, j: SpinIndex) -> Result<DMatrix<f64>, BasisError> {
    ExchangeTable::shared().get(i, j).cloned()
}

/// Action of a single-qubit operator on `(|0>, |1>, |Q>)` of `qubit`,
/// i.e. `(J_zt, J_ztn) = (0, 1/2), (1, 1/2), (1, 3/2)`.
///
/// Read off the `J = 1, m = 0` sector with the other qubit in its `|0>`
/// state; any operator built from one qubit's spins acts the same way in
/// every sector.
pub fn single_qubit_block<T: nalgebra::Scalar + Copy>(
    op: &DMatrix<T>,
    qubit: Qubit,
) -> Matrix3<T> {
    let states = enumerate_coupled_basis();
    let find = |jzt: HalfInt, jztn: HalfInt| {
        states
            .iter()
            .position(|s| {
                s.j == HalfInt::ONE
                    && s.m == HalfInt::ZERO
                    && s.pair_spin(qubit) == jzt
                    && s.triple_spin(qubit) == jztn
                    && s.pair_spin(qubit.other()) == HalfInt::ZERO
                    && s.triple_spin(qubit.other()) == HalfInt::HALF
            })
            .expect("state exists")
    };
    let idx: Vec<usize> = QUBIT_LABELS.iter().map(|&(a, b)| find(a, b)).collect();
    Matrix3::from_fn(|r, c| op[(idx[r], idx[c])])
}

/// Write the coupled basis as CSV (`index,jzt_a,jztn_a,jzt_b,jztn_b,J,m,encoded`).
pub fn write_basis_table<W: Write>(mut out: W) -> std::io::Result<()> {
    writeln!(out, "index,jzt_a,jztn_a,jzt_b,jztn_b,J,m,encoded")?;
    for (i, s) in enumerate_coupled_basis().iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{}",
            s.jzt_a,
            s.jztn_a,
            s.jzt_b,
            s.jztn_b,
            s.j,
            s.m,
            s.is_encoded() as u8
        )?;
    }
    Ok(())
}
