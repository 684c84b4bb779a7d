//! Small dense routines for diagnostics.

use nalgebra::DMatrix;

use crate::error::{LdgError, Result};

/// `min_μ max_v μᵀBv / (‖v‖_{G_v} ‖μ‖_{G_μ})` for dense `B` (m × n).
pub fn smallest_generalized_singular_value(b: &DMatrix<f64>, gram_v: &DMatrix<f64>, gram_mu: &DMatrix<f64>) -> Result<f64> {
    let (m, n) = b.shape();
    if gram_v.shape() != (n, n) || gram_mu.shape() != (m, m) {
        return Err(LdgError::Parameter("Gram matrix dimensions do not match B".into()));
    }
    if m == 0 {
        return Ok(f64::INFINITY);
    }
    let lv = gram_v.clone().cholesky().ok_or_else(|| LdgError::Parameter("Gram_v is not SPD".into()))?;
    let lm = gram_mu.clone().cholesky().ok_or_else(|| LdgError::Parameter("Gram_mu is not SPD".into()))?;
    if m > n {
        return Ok(0.0);
    }
    // C = L_μ⁻¹ B L_v⁻ᵀ
    let y = lm.l().solve_lower_triangular(b).expect("triangular solve");
    let c = lv.l().solve_lower_triangular(&y.transpose()).expect("triangular solve").transpose();
    let sv = c.singular_values();
    Ok(sv.iter().copied().fold(f64::INFINITY, f64::min).max(0.0))
}

/// Extreme eigenvalues of a dense symmetric matrix.
pub fn symmetric_extreme_eigenvalues(a: &DMatrix<f64>) -> (f64, f64) {
    let e = a.clone().symmetric_eigenvalues();
    let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_one() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert!((smallest_generalized_singular_value(&i, &i, &i).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_row_gives_zero() {
        let mut b = DMatrix::<f64>::identity(3, 5);
        b.row_mut(1).fill(0.0);
        let v = smallest_generalized_singular_value(&b, &DMatrix::identity(5, 5), &DMatrix::identity(3, 3)).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn non_spd_gram_rejected() {
        let b = DMatrix::<f64>::identity(2, 2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(smallest_generalized_singular_value(&b, &bad, &b).is_err());
    }
}
