//! Dense helpers shared by the solver and the synthesis layers.
//!
//! Everything operates on `nalgebra` dynamic matrices; problems in this crate
//! are desk-scale (dimensions in the tens), so clarity wins over blocking or
//! sparsity tricks.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.sqrt()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::sqrt(x)
    }
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.ceil()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::ceil(x)
    }
}

#[inline]
pub(crate) fn powf(x: f64, e: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.powf(e)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::pow(x, e)
    }
}

/// Largest absolute entry, zero for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, &v| a.max(v.abs()))
}

/// Largest absolute deviation from symmetry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut eigs: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

/// Smallest eigenvalue of a symmetric matrix (no symmetry check).
pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Spectral norm `‖M‖₂` via the Gram matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let lmax = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    sqrt(lmax.max(0.0))
}

/// Spectral radius `ρ(M)`: largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|c| sqrt(c.norm_sqr()))
        .fold(0.0, f64::max)
}

/// Symmetric inverse of a positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        min_eig: sym_min_eigenvalue(m),
    })?;
    Ok(symmetrize(&chol.inverse()))
}

/// Condition number (eigenvalue ratio) of a symmetric positive definite matrix.
pub fn spd_condition(m: &DMatrix<f64>) -> Result<f64> {
    let eigs = sym_eigenvalues(m);
    let min = *eigs.first().expect("non-empty matrix");
    let max = *eigs.last().expect("non-empty matrix");
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    Ok(max / min)
}

/// `(P^{1/2}, P^{-1/2})` of a symmetric positive definite matrix.
pub fn spd_sqrt_pair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let se = m.clone().symmetric_eigen();
    let min = se.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    let q = &se.eigenvectors;
    let root = DMatrix::from_diagonal(&se.eigenvalues.map(sqrt));
    let inv_root = DMatrix::from_diagonal(&se.eigenvalues.map(|l| 1.0 / sqrt(l)));
    Ok((
        symmetrize(&(q * root * q.transpose())),
        symmetrize(&(q * inv_root * q.transpose())),
    ))
}

/// Zero-order-hold discretization of `ẋ = A_c x + B_c u` with step `t`.
///
/// Returns `(e^{tA_c}, ∫₀ᵗ e^{sA_c} ds · B_c)`. The integral is evaluated by a
/// scaled Taylor series on a step `h = t/2^s` with `‖A_c‖∞·h ≤ 1/2`, followed
/// by the doubling rules `F(2h) = (I + E(h))·F(h)` and `E(2h) = E(h)²`, where
/// `E = I + A_c·F` recovers the exponential from the integral term. `tol` is
/// the relative series truncation threshold.
pub fn zoh_discretize(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    t: f64,
    tol: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_c.nrows();
    if a_c.ncols() != n {
        return Err(Error::Dimension {
            context: "zoh_discretize: square A",
            expected: n,
            got: a_c.ncols(),
        });
    }
    if b_c.nrows() != n {
        return Err(Error::Dimension {
            context: "zoh_discretize: B rows",
            expected: n,
            got: b_c.nrows(),
        });
    }
    let norm = a_c.iter().map(|v| v.abs()).fold(0.0f64, f64::max) * n as f64;
    let mut squarings = 0u32;
    let mut h = t;
    while norm * h.abs() > 0.5 && squarings < 60 {
        h *= 0.5;
        squarings += 1;
    }

    // F(h) = h·Σ_k (hA)^k/(k+1)!
    let ha = a_c * h;
    let mut term = DMatrix::<f64>::identity(n, n) * h;
    let mut f = term.clone();
    for k in 1..=60 {
        term = (&term * &ha) / (k as f64 + 1.0);
        f += &term;
        if max_abs(&term) <= tol * max_abs(&f) {
            break;
        }
    }
    let mut e = DMatrix::<f64>::identity(n, n) + a_c * &f;
    for _ in 0..squarings {
        f = (DMatrix::<f64>::identity(n, n) + &e) * &f;
        e = &e * &e;
    }
    Ok((e, f * b_c))
}

/// Dot product under the trace inner product `⟨A, B⟩ = tr(AᵀB)`.
pub(crate) fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Euclidean distance between two vectors.
pub(crate) fn dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    sqrt((a - b).iter().map(|v| v * v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_radius_matches_known_eigenvalues() {
        // Rotation-and-scale: eigenvalues 0.9·e^{±iθ}.
        let m = DMatrix::from_row_slice(2, 2, &[0.9 * 0.6, -0.9 * 0.8, 0.9 * 0.8, 0.9 * 0.6]);
        assert_relative_eq!(spectral_radius(&m), 0.9, epsilon = 1e-12);
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_relative_eq!(spectral_radius(&z), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn spd_helpers_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let inv = spd_inverse(&m).unwrap();
        assert_relative_eq!((&m * &inv), DMatrix::identity(2, 2), epsilon = 1e-12);
        let (root, inv_root) = spd_sqrt_pair(&m).unwrap();
        assert_relative_eq!((&root * &root), m, epsilon = 1e-12);
        assert_relative_eq!(
            (&root * &inv_root),
            DMatrix::identity(2, 2),
            epsilon = 1e-12
        );
        assert!(spd_condition(&m).unwrap() > 1.0);
    }

    #[test]
    fn spd_inverse_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            spd_inverse(&m),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn discretization_matches_scalar_closed_form() {
        // ẋ = a x + b u: A_d = e^{aT}, B_d = (e^{aT} − 1)/a · b.
        let a = DMatrix::from_row_slice(1, 1, &[-0.7]);
        let b = DMatrix::from_row_slice(1, 1, &[2.0]);
        let t = 0.3;
        let (ad, bd) = zoh_discretize(&a, &b, t, 1e-12).unwrap();
        let exact_a = (-0.7f64 * t).exp();
        let exact_b = (exact_a - 1.0) / -0.7 * 2.0;
        assert_relative_eq!(ad[(0, 0)], exact_a, epsilon = 1e-13);
        assert_relative_eq!(bd[(0, 0)], exact_b, epsilon = 1e-13);
    }

    #[test]
    fn discretization_nilpotent_is_polynomial() {
        // Double integrator: e^{tA} = [[1, t], [0, 1]], ∫ B picks up t²/2.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (ad, bd) = zoh_discretize(&a, &b, 2.0, 1e-12).unwrap();
        assert_relative_eq!(
            ad,
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            bd,
            DMatrix::from_row_slice(2, 1, &[2.0, 2.0]),
            epsilon = 1e-12
        );
    }
}
