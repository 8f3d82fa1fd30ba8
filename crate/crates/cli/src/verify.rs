//! The invariant suite behind `exo-gate verify`.

use std::fmt;

use serde::{Deserialize, Serialize};

use exo_gate::angular::{wigner_6j, ReducedElements, SixJ, SpinRole};
use exo_gate::basis::{build_transform, off_block_magnitude, sectors, ExchangeTable, Qubit, SpinIndex, DIM};
use exo_gate::engine::{echo_pulse_pi, EchoSpec};
use exo_gate::model::{
    factorization_residual, first_order_phases, structure_factors, BiasConfig, StructureFactors, TotalJ,
};

/// One named check with its measured residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        Check { name: name.to_string(), residual, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict}  {:<40} residual {:.3e}  (tol {:.0e})", self.name, self.residual, self.tolerance)
    }
}

/// Test hook: shift one reduced element before the checks that use it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub role: SpinRole,
    pub jzt: usize,
    pub jzt_prime: usize,
    pub delta: f64,
}

impl Perturbation {
    pub fn small(delta: f64) -> Self {
        Perturbation { role: SpinRole::T, jzt: 1, jzt_prime: 0, delta }
    }
}

fn max_dev(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn run_checks(perturbation: Option<Perturbation>) -> Vec<Check> {
    let mut reduced = ReducedElements::exact();
    if let Some(p) = perturbation {
        reduced.table[p.role.index()][p.jzt][p.jzt_prime] += p.delta;
    }
    let mut out = Vec::new();

    let six = |tw: [i32; 6]| wigner_6j(&SixJ::from_twice(tw));
    out.push(Check::new(
        "6j special values",
        max_dev(&[(six([0, 2, 0, 0, 0, 0]), 0.0), (six([1, 2, 1, 1, 0, 1]), 0.5), (six([1, 1, 0, 1, 1, 0]), -0.5)]),
        1e-15,
    ));

    let all = sectors();
    let count = |pred: &dyn Fn(&exo_gate::basis::Sector) -> bool| all.iter().filter(|s| pred(s)).map(|s| s.len).sum::<usize>();
    let dims = [
        (count(&|_| true) as f64, DIM as f64),
        (count(&|s| s.j.twice() == 0) as f64, 5.0),
        (count(&|s| s.j.twice() == 2 && s.m.twice() == 0) as f64, 9.0),
        (count(&|s| s.m.twice() == 0) as f64, 20.0),
    ];
    out.push(Check::new("state counts 64 / 5 / 9 / 20", max_dev(&dims), 0.0));

    out.push(Check::new("coupled basis orthonormal", build_transform().orthogonality_residual(), 1e-12));

    let table = ExchangeTable::shared();
    let mut off_block = 0.0f64;
    for a in 0..6 {
        for b in a + 1..6 {
            let op = table.get(SpinIndex::from_slot(a), SpinIndex::from_slot(b)).expect("distinct");
            off_block = off_block.max(off_block_magnitude(op));
        }
    }
    out.push(Check::new("exchange operators (J, m) block diagonal", off_block, 1e-12));

    let zt = table
        .get(SpinIndex::new(Qubit::A, SpinRole::Z), SpinIndex::new(Qubit::A, SpinRole::T))
        .expect("distinct");
    let pair_dev = table
        .states()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let j = s.jzt_a.value();
            (zt[(k, k)] - (j * (j + 1.0) / 2.0 - 0.75)).abs()
        })
        .fold(0.0, f64::max);
    out.push(Check::new("S_z.S_t diagonal in pair spin", pair_dev, 1e-12));

    out.push(Check::new("encoded elements factorize (Wigner-Eckart)", factorization_residual(&reduced), 1e-12));
    out.push(Check::new(
        "coupling factor (-1)^(J+1)/(2+J)!",
        max_dev(&[(TotalJ::Zero.coupling_factor(), -0.5), (TotalJ::One.coupling_factor(), 1.0 / 6.0)]),
        1e-12,
    ));

    let bias = BiasConfig::default();
    let a = bias.eigensystem(Qubit::A);
    let b = bias.eigensystem(Qubit::B);
    out.push(Check::new(
        "linear bias xi = -Omega +- Omega/2",
        max_dev(&[(a.xi_plus, -0.5), (a.xi_minus, -1.5), (b.xi_plus, -0.85), (b.xi_minus, -2.55)]),
        1e-12,
    ));

    let lam = |role| structure_factors(&a.v, role, &reduced);
    let (z, t, n) = (lam(SpinRole::Z), lam(SpinRole::T), lam(SpinRole::N));
    let r23 = (2.0f64 / 3.0).sqrt();
    out.push(Check::new(
        "structure factors Lambda",
        max_dev(&[
            (z.lambda_plus, 0.0),
            (z.lambda_minus, r23),
            (n.lambda_plus, 0.0),
            (n.lambda_minus, r23),
            (t.lambda_plus, 1.5f64.sqrt()),
            (t.lambda_minus, -1.0 / 6f64.sqrt()),
        ]),
        1e-12,
    ));

    let c11 = |lam: &StructureFactors, j| first_order_phases(&a, &a, lam, lam, 1.0, 0.0, j).c11;
    let (c1, c0) = (c11(&z, TotalJ::One), c11(&z, TotalJ::Zero));
    out.push(Check::new("c11 per unit area 1/36 and -1/12", max_dev(&[(c1, 1.0 / 36.0), (c0, -1.0 / 12.0)]), 1e-12));
    out.push(Check::new("c11 ratio J=0 / J=1 = -3", (c0 / c1 + 3.0).abs(), 1e-12));

    let spec = EchoSpec::y_rotation();
    let echo_form = [Qubit::A, Qubit::B]
        .into_iter()
        .map(|q| spec.form_residual(q, &bias.eigensystem(q).v))
        .fold(0.0, f64::max);
    out.push(Check::new("echo matches the encoded Y form", echo_form, 1e-10));

    let pi = echo_pulse_pi(Qubit::A);
    let sq = &pi * &pi;
    let phase = sq[(0, 0)];
    let mut sq_dev = 0.0f64;
    for s in table.states().iter().enumerate().filter(|(_, s)| s.is_encoded()) {
        sq_dev = sq_dev.max((sq[(s.0, s.0)] - phase).norm());
    }
    out.push(Check::new("echo squared is a phase on encoded states", sq_dev, 1e-10));
    out
}
