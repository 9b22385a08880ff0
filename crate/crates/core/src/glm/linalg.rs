//! Small dense-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, UssError};

/// Denominators at or below this value make the rank-one inverse update
/// unreliable.
pub const SHERMAN_MORRISON_GUARD: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(v: &DMatrix<f64>) -> Result<f64> {
    if !v.is_square() {
        return Err(UssError::Precondition(format!(
            "min_eig needs a square matrix, got {}x{}",
            v.nrows(),
            v.ncols()
        )));
    }
    if v.nrows() == 0 {
        return Err(UssError::Precondition("min_eig of an empty matrix".into()));
    }
    for i in 0..v.nrows() {
        for j in (i + 1)..v.ncols() {
            if (v[(i, j)] - v[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(UssError::Precondition(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    v[(i, j)],
                    v[(j, i)]
                )));
            }
        }
    }
    let eig = SymmetricEigen::new(v.clone());
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// `v += phi phiᵀ`.
pub fn add_outer(v: &mut DMatrix<f64>, phi: &[f64]) {
    let d = phi.len();
    for c in 0..d {
        let pc = phi[c];
        if pc == 0.0 {
            continue;
        }
        for r in 0..d {
            v[(r, c)] += phi[r] * pc;
        }
    }
}

/// Rank-one update of an inverse: replaces `inv = A⁻¹` with `(A + phi phiᵀ)⁻¹`.
///
/// Returns `false`, leaving `inv` untouched, when the denominator
/// `1 + phiᵀ A⁻¹ phi` is at or below [`SHERMAN_MORRISON_GUARD`] or not finite.
pub fn sherman_morrison_update(inv: &mut DMatrix<f64>, phi: &[f64]) -> bool {
    let d = phi.len();
    let mut u = vec![0.0; d];
    for c in 0..d {
        let pc = phi[c];
        if pc == 0.0 {
            continue;
        }
        for (r, ur) in u.iter_mut().enumerate() {
            *ur += inv[(r, c)] * pc;
        }
    }
    let quad: f64 = u.iter().zip(phi).map(|(a, b)| a * b).sum();
    let denom = 1.0 + quad;
    if !denom.is_finite() || denom <= SHERMAN_MORRISON_GUARD {
        return false;
    }
    for c in 0..d {
        let uc = u[c] / denom;
        for r in 0..d {
            inv[(r, c)] -= u[r] * uc;
        }
    }
    // Re-symmetrize to stop round-off from accumulating skew.
    for c in 0..d {
        for r in (c + 1)..d {
            let m = 0.5 * (inv[(r, c)] + inv[(c, r)]);
            inv[(r, c)] = m;
            inv[(c, r)] = m;
        }
    }
    true
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(v: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    v.clone().cholesky().map(|c| c.inverse())
}

/// `phiᵀ A phi`.
pub fn quadratic_form(a: &DMatrix<f64>, phi: &[f64]) -> f64 {
    let d = phi.len();
    let mut acc = 0.0;
    for c in 0..d {
        let mut col = 0.0;
        for r in 0..d {
            col += a[(r, c)] * phi[r];
        }
        acc += col * phi[c];
    }
    acc
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
