//! Exact angular-momentum algebra for spin-1/2 clusters.
//!
//! Quantum numbers are carried as [`HalfInt`] (twice the value, so `j = 3/2`
//! is stored as `3`). The Racah sums for Clebsch-Gordan coefficients and
//! Wigner 6j symbols are evaluated with exact rationals; the only rounding
//! happens in the final square root.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type Rational = Ratio<i128>;

/// Reduced matrix element `<1/2||S||1/2>` of a single spin.
pub const SPIN_HALF_REDUCED: f64 = 1.224_744_871_391_589; // sqrt(3/2)

/// Largest factorial argument that fits in an `i128`.
const MAX_FACTORIAL: i64 = 33;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AngularError {
    #[error("J_zt must be 0 or 1, got {0}")]
    InvalidPairSpin(HalfInt),
    #[error("arguments too large for exact evaluation")]
    Overflow,
}

/// A half-integer quantum number stored as twice its value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);
    pub const ONE: HalfInt = HalfInt(2);
    pub const THREE_HALVES: HalfInt = HalfInt(3);

    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub const fn from_int(value: i32) -> Self {
        HalfInt(2 * value)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// Multiplicity `2j + 1`.
    pub const fn multiplicity(self) -> i32 {
        self.0 + 1
    }

    /// The projections `-j, -j+1, ..., j` in ascending order.
    pub fn projections(self) -> impl Iterator<Item = HalfInt> {
        (-self.0..=self.0).step_by(2).map(HalfInt)
    }

    /// True when `m` is a valid projection of `self`.
    pub fn admits(self, m: HalfInt) -> bool {
        self.0 >= 0 && m.0.abs() <= self.0 && (self.0 - m.0) % 2 == 0
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl fmt::Debug for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `|j1 - j2| <= j3 <= j1 + j2` with integer perimeter.
pub fn triangle_ok(j1: HalfInt, j2: HalfInt, j3: HalfInt) -> bool {
    let (a, b, c) = (j1.0, j2.0, j3.0);
    a >= 0 && b >= 0 && c >= 0 && (a + b + c) % 2 == 0 && c <= a + b && c >= (a - b).abs()
}

/// The 6j symbol `{j1 j2 j3; j4 j5 j6}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SixJ {
    pub top: [HalfInt; 3],
    pub bottom: [HalfInt; 3],
}

impl SixJ {
    pub fn new(top: [HalfInt; 3], bottom: [HalfInt; 3]) -> Self {
        SixJ { top, bottom }
    }

    /// Build from twice-values, `[2j1, 2j2, 2j3, 2j4, 2j5, 2j6]`.
    pub fn from_twice(tw: [i32; 6]) -> Self {
        let h = HalfInt::from_twice;
        SixJ::new([h(tw[0]), h(tw[1]), h(tw[2])], [h(tw[3]), h(tw[4]), h(tw[5])])
    }

    fn triads(&self) -> [(HalfInt, HalfInt, HalfInt); 4] {
        let [j1, j2, j3] = self.top;
        let [j4, j5, j6] = self.bottom;
        [(j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3)]
    }

    pub fn value(&self) -> f64 {
        wigner_6j(self)
    }
}

fn factorial(n: i64) -> Result<i128, AngularError> {
    if !(0..=MAX_FACTORIAL).contains(&n) {
        return Err(AngularError::Overflow);
    }
    Ok((1..=n as i128).product())
}

/// Squared triangle coefficient `Delta(abc)^2`, arguments as twice-values.
fn delta_squared(a: i32, b: i32, c: i32) -> Result<Rational, AngularError> {
    let num = factorial(((a + b - c) / 2) as i64)?
        * factorial(((a - b + c) / 2) as i64)?
        * factorial(((-a + b + c) / 2) as i64)?;
    let den = factorial(((a + b + c) / 2 + 1) as i64)?;
    Ok(Rational::new(num, den))
}

/// `sum * sqrt(radicand)` from exact parts.
fn collapse(sum: Rational, radicand: Rational) -> f64 {
    if *sum.numer() == 0 || *radicand.numer() == 0 {
        return 0.0;
    }
    let sq = sum * sum * radicand;
    let magnitude = (*sq.numer() as f64 / *sq.denom() as f64).sqrt();
    if *sum.numer() < 0 {
        -magnitude
    } else {
        magnitude
    }
}

fn racah_6j(symbol: &SixJ) -> Result<f64, AngularError> {
    if !symbol.triads().iter().all(|&(a, b, c)| triangle_ok(a, b, c)) {
        return Ok(0.0);
    }
    let mut radicand = Rational::from_integer(1);
    for (a, b, c) in symbol.triads() {
        radicand *= delta_squared(a.0, b.0, c.0)?;
    }
    let [j1, j2, j3] = symbol.top.map(|j| j.0);
    let [j4, j5, j6] = symbol.bottom.map(|j| j.0);
    // Integer triad and quadrilateral sums.
    let alphas = [
        (j1 + j2 + j3) / 2,
        (j1 + j5 + j6) / 2,
        (j4 + j2 + j6) / 2,
        (j4 + j5 + j3) / 2,
    ];
    let betas = [
        (j1 + j2 + j4 + j5) / 2,
        (j2 + j3 + j5 + j6) / 2,
        (j3 + j1 + j6 + j4) / 2,
    ];
    let lo = *alphas.iter().max().unwrap();
    let hi = *betas.iter().min().unwrap();
    let mut sum = Rational::from_integer(0);
    for t in lo..=hi {
        let mut den: i128 = 1;
        for a in alphas {
            den *= factorial((t - a) as i64)?;
        }
        for b in betas {
            den *= factorial((b - t) as i64)?;
        }
        let sign = if t % 2 == 0 { 1 } else { -1 };
        sum += Rational::new(sign * factorial((t + 1) as i64)?, den);
    }
    Ok(collapse(sum, radicand))
}

/// Wigner 6j symbol by the Racah single-sum formula.
///
/// Returns zero when any of the four triads is not a valid triangle.
pub fn wigner_6j(symbol: &SixJ) -> f64 {
    racah_6j(symbol).expect("6j arguments beyond exact range")
}

fn racah_cg(
    j1: HalfInt,
    m1: HalfInt,
    j2: HalfInt,
    m2: HalfInt,
    j: HalfInt,
    m: HalfInt,
) -> Result<f64, AngularError> {
    if m1 + m2 != m
        || !triangle_ok(j1, j2, j)
        || !j1.admits(m1)
        || !j2.admits(m2)
        || !j.admits(m)
    {
        return Ok(0.0);
    }
    let h = |x: i32| -> i64 { (x / 2) as i64 };
    let (j1, m1, j2, m2, j, m) = (j1.0, m1.0, j2.0, m2.0, j.0, m.0);

    let mut radicand = delta_squared(j1, j2, j)? * Rational::from_integer((j + 1) as i128);
    radicand *= Rational::from_integer(
        factorial(h(j1 + m1))?
            * factorial(h(j1 - m1))?
            * factorial(h(j2 + m2))?
            * factorial(h(j2 - m2))?
            * factorial(h(j + m))?
            * factorial(h(j - m))?,
    );

    let args = |k: i64| {
        [
            k,
            h(j1 + j2 - j) - k,
            h(j1 - m1) - k,
            h(j2 + m2) - k,
            h(j - j2 + m1) + k,
            h(j - j1 - m2) + k,
        ]
    };
    let mut sum = Rational::from_integer(0);
    for k in 0..=h(j1 + j2 - j) {
        let a = args(k);
        if a.iter().any(|&x| x < 0) {
            continue;
        }
        let mut den: i128 = 1;
        for x in a {
            den *= factorial(x)?;
        }
        let sign = if k % 2 == 0 { 1 } else { -1 };
        sum += Rational::new(sign, den);
    }
    Ok(collapse(sum, radicand))
}

/// Clebsch-Gordan coefficient `<j1 m1; j2 m2 | J M>` in the Condon-Shortley
/// phase convention.
pub fn clebsch_gordan(
    j1: HalfInt,
    m1: HalfInt,
    j2: HalfInt,
    m2: HalfInt,
    j: HalfInt,
    m: HalfInt,
) -> f64 {
    racah_cg(j1, m1, j2, m2, j, m).expect("CG arguments beyond exact range")
}

/// Which spin of a three-spin qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinRole {
    Z,
    T,
    N,
}

impl SpinRole {
    pub const ALL: [SpinRole; 3] = [SpinRole::Z, SpinRole::T, SpinRole::N];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> char {
        match self {
            SpinRole::Z => 'z',
            SpinRole::T => 't',
            SpinRole::N => 'n',
        }
    }
}

fn pair_spin_index(jzt: HalfInt) -> Result<usize, AngularError> {
    match jzt.twice() {
        0 => Ok(0),
        2 => Ok(1),
        _ => Err(AngularError::InvalidPairSpin(jzt)),
    }
}

/// Reduced element `<J_zt, 1/2 || S_role || J_zt', 1/2>` of one spin of a
/// three-spin qubit held at `J_ztn = 1/2`.
pub fn reduced_spin_element(
    role: SpinRole,
    jzt: HalfInt,
    jzt_prime: HalfInt,
) -> Result<f64, AngularError> {
    let (a, b) = (pair_spin_index(jzt)?, pair_spin_index(jzt_prime)?);
    let off_diagonal = std::f64::consts::FRAC_1_SQRT_2;
    let value = match role {
        SpinRole::Z | SpinRole::T => {
            let sign = if role == SpinRole::Z { -1.0 } else { 1.0 };
            match (a, b) {
                (0, 0) => 0.0,
                (1, 1) => (2.0f64 / 3.0).sqrt(),
                _ => sign * off_diagonal,
            }
        }
        SpinRole::N => {
            if a != b {
                0.0
            } else {
                // (-1)^J_zt sqrt(6) / (2 + J_zt)!
                let fact = if a == 0 { 2.0 } else { 6.0 };
                let sign = if a == 0 { 1.0 } else { -1.0 };
                sign * 6.0f64.sqrt() / fact
            }
        }
    };
    Ok(value)
}

/// Table of qubit-level reduced elements, indexed `[role][J_zt][J_zt']`.
///
/// Kept as data so consumers (and fault-injection checks) can swap entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedElements {
    pub table: [[[f64; 2]; 2]; 3],
}

impl ReducedElements {
    pub fn exact() -> Self {
        let mut table = [[[0.0; 2]; 2]; 3];
        for role in SpinRole::ALL {
            for (a, row) in table[role.index()].iter_mut().enumerate() {
                for (b, x) in row.iter_mut().enumerate() {
                    *x = reduced_spin_element(
                        role,
                        HalfInt::from_int(a as i32),
                        HalfInt::from_int(b as i32),
                    )
                    .expect("valid pair spin");
                }
            }
        }
        ReducedElements { table }
    }

    /// Entry for pair spins given as 0 or 1.
    pub fn get(&self, role: SpinRole, jzt: usize, jzt_prime: usize) -> f64 {
        self.table[role.index()][jzt][jzt_prime]
    }

    pub fn matrix(&self, role: SpinRole) -> [[f64; 2]; 2] {
        self.table[role.index()]
    }
}

impl Default for ReducedElements {
    fn default() -> Self {
        ReducedElements::exact()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    
    const H: HalfInt = HalfInt::HALF;

    fn six(tw: [i32; 6]) -> f64 {
        wigner_6j(&SixJ::from_twice(tw))
    }

    #[test]
    fn triangles() {
        assert!(triangle_ok(H, H, HalfInt::ZERO));
        assert!(!triangle_ok(H, H, HalfInt::THREE_HALVES));
        assert!(triangle_ok(HalfInt::ONE, H, H));
        assert!(!triangle_ok(H, H, H));
    }

    #[test]
    fn six_j_values() {
        assert!((six([1, 2, 1, 1, 0, 1]) - 0.5).abs() < 1e-15);
        assert!((six([1, 2, 1, 1, 2, 1]) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(six([0, 2, 0, 0, 0, 0]), 0.0);
        assert_eq!(six([1, 2, 1, 1, 4, 1]), 0.0);
        // {1 1 1; 1 1 1} = 1/6
        assert!((six([2, 2, 2, 2, 2, 2]) - 1.0 / 6.0).abs() < 1e-15);
        // {1/2 1/2 1; 1/2 1/2 0} = 1/2
        assert!((six([1, 1, 2, 1, 1, 0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pair_exchange_is_a_phase() {
        // (-1)^(Jzt+1) {1/2 1 1/2; 1/2 Jzt 1/2} (3/2) = 1/4 - delta(Jzt, 0)
        for jzt in 0..2 {
            let sign = if jzt % 2 == 0 { -1.0 } else { 1.0 };
            let lhs = sign * six([1, 2, 1, 1, 2 * jzt, 1]) * SPIN_HALF_REDUCED.powi(2);
            let rhs = 0.25 - if jzt == 0 { 1.0 } else { 0.0 };
            assert!((lhs - rhs).abs() < 1e-14, "Jzt={jzt}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn j_dependent_six_j_law() {
        // {1/2 1 1/2; 1/2 J 1/2} = 1/(2+J)!
        assert!((six([1, 2, 1, 1, 0, 1]) - 1.0 / 2.0).abs() < 1e-15);
        assert!((six([1, 2, 1, 1, 2, 1]) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn cg_values() {
        let (h, mh) = (H, -H);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((clebsch_gordan(h, h, h, mh, HalfInt::ZERO, HalfInt::ZERO) - s).abs() < 1e-15);
        assert!((clebsch_gordan(h, mh, h, h, HalfInt::ZERO, HalfInt::ZERO) + s).abs() < 1e-15);
        assert!((clebsch_gordan(h, h, h, h, HalfInt::ONE, HalfInt::ONE) - 1.0).abs() < 1e-15);
        assert_eq!(clebsch_gordan(h, h, h, h, HalfInt::ONE, HalfInt::ZERO), 0.0);
        // <1 0; 1/2 1/2 | 1/2 1/2> = -1/sqrt(3)
        let v = clebsch_gordan(HalfInt::ONE, HalfInt::ZERO, h, h, h, h);
        assert!((v + 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cg_unitarity() {
        for tj1 in 0..=6 {
            for tj2 in 0..=6 {
                let (j1, j2) = (HalfInt::from_twice(tj1), HalfInt::from_twice(tj2));
                let rows: Vec<(HalfInt, HalfInt)> = (((tj1 - tj2).abs())..=(tj1 + tj2))
                    .step_by(2)
                    .flat_map(|tj| {
                        let j = HalfInt::from_twice(tj);
                        j.projections().map(move |m| (j, m))
                    })
                    .collect();
                let cols: Vec<(HalfInt, HalfInt)> = j1
                    .projections()
                    .flat_map(|m1| j2.projections().map(move |m2| (m1, m2)))
                    .collect();
                assert_eq!(rows.len(), cols.len());
                for (a, &(ja, ma)) in rows.iter().enumerate() {
                    for (b, &(jb, mb)) in rows.iter().enumerate() {
                        let dot: f64 = cols
                            .iter()
                            .map(|&(m1, m2)| {
                                clebsch_gordan(j1, m1, j2, m2, ja, ma)
                                    * clebsch_gordan(j1, m1, j2, m2, jb, mb)
                            })
                            .sum();
                        let expect = if a == b { 1.0 } else { 0.0 };
                        assert!((dot - expect).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn six_j_symmetries_exhaustive() {
        let range = 0..=4;
        for a in range.clone() {
            for b in range.clone() {
                for c in range.clone() {
                    for d in range.clone() {
                        for e in range.clone() {
                            for f in range.clone() {
                                let base = six([a, b, c, d, e, f]);
                                // column permutations
                                for p in [
                                    [b, a, c, e, d, f],
                                    [a, c, b, d, f, e],
                                    [c, b, a, f, e, d],
                                    [b, c, a, e, f, d],
                                ] {
                                    assert!((six(p) - base).abs() < 1e-14);
                                }
                                // swap upper/lower in two columns
                                for p in [[d, e, c, a, b, f], [a, e, f, d, b, c], [d, b, f, a, e, c]] {
                                    assert!((six(p) - base).abs() < 1e-14);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reduced_elements() {
        let r = |role, a, b| reduced_spin_element(role, HalfInt::from_int(a), HalfInt::from_int(b)).unwrap();
        assert!((r(SpinRole::Z, 0, 1) + 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r(SpinRole::T, 0, 1) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r(SpinRole::T, 1, 1) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((r(SpinRole::N, 0, 0) - 6f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((r(SpinRole::N, 1, 1) + 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(r(SpinRole::N, 0, 1), 0.0);
        assert!((r(SpinRole::N, 0, 0) - SPIN_HALF_REDUCED).abs() < 1e-15);
        assert_eq!(
            reduced_spin_element(SpinRole::Z, HalfInt::HALF, HalfInt::ZERO),
            Err(AngularError::InvalidPairSpin(HalfInt::HALF))
        );
        assert_eq!(ReducedElements::exact().get(SpinRole::Z, 1, 0), r(SpinRole::Z, 1, 0));
    }

    #[test]
    fn six_j_orthogonality() {
        // sum_J (2J+1) {j1 j2 J; j3 j4 J'} {j1 j2 J; j3 j4 J''} = delta / (2J'+1)
        let mut checked = 0;
        for code in 0..5i32.pow(6) {
            let d: Vec<i32> = (0..6).map(|k| (code / 5i32.pow(k)) % 5).collect();
            let (j1, j2, j3, j4, jp, jpp) = (d[0], d[1], d[2], d[3], d[4], d[5]);
            let valid = |x: i32| {
                triangle_ok(HalfInt::from_twice(j1), HalfInt::from_twice(j4), HalfInt::from_twice(x))
                    && triangle_ok(HalfInt::from_twice(j3), HalfInt::from_twice(j2), HalfInt::from_twice(x))
            };
            if !(valid(jp) && valid(jpp)) {
                continue;
            }
            let sum: f64 = (0..=8)
                .map(|tj| (tj + 1) as f64 * six([j1, j2, tj, j3, j4, jp]) * six([j1, j2, tj, j3, j4, jpp]))
                .sum();
            let expect = if jp == jpp { 1.0 / (jp + 1) as f64 } else { 0.0 };
            assert!((sum - expect).abs() < 1e-13, "{d:?}");
            checked += 1;
        }
        assert!(checked > 100);
    }
}
