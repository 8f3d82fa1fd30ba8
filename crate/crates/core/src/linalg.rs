//! Small dense helpers shared by the model and the propagator.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// `exp(-i t H)` for real symmetric `H`, by eigendecomposition.
pub fn expm_i_symmetric(h: &DMatrix<f64>, t: f64) -> CMatrix {
    let n = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let phases: Vec<Complex64> = eig
        .eigenvalues
        .iter()
        .map(|&lam| Complex64::from_polar(1.0, -lam * t))
        .collect();
    CMatrix::from_fn(n, n, |r, c| {
        (0..n)
            .map(|k| phases[k] * (v[(r, k)] * v[(c, k)]))
            .sum::<Complex64>()
    })
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// `max |U^dagger U - 1|`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    let n = u.nrows();
    let gram = u.adjoint() * u;
    (gram - CMatrix::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |a - b|` entrywise.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Remove the global phase of `b` relative to `a` (via `tr(a^dagger b)`) and
/// return `max |a - e^{-i theta} b|`.
pub fn max_abs_diff_up_to_phase(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
    if overlap.norm() == 0.0 {
        return max_abs_diff(a, b);
    }
    let phase = overlap / overlap.norm();
    let rotated = b.map(|z| z / phase);
    max_abs_diff(a, &rotated)
}
