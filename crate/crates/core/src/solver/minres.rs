//! Unpreconditioned MINRES for symmetric (possibly indefinite) systems.

use crate::error::{LdgError, Result};

#[derive(Clone, Debug)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Residual norm estimate after each iteration; nonincreasing by construction.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for the symmetric operator `apply`, stopping at `‖r‖ ≤ rtol·‖b‖`.
pub fn minres<F: Fn(&[f64]) -> Vec<f64>>(apply: F, b: &[f64], rtol: f64, max_iter: usize) -> Result<MinresOutcome> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(MinresOutcome { x, iterations: 0, history: vec![0.0] });
    }
    let mut v_old = vec![0.0; n];
    let mut v: Vec<f64> = b.iter().map(|t| t / bnorm).collect();
    let (mut c_old, mut s_old, mut c, mut s) = (1.0, 0.0, 1.0, 0.0);
    let mut w_old = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut eta = bnorm;
    let mut history = Vec::new();
    let mut beta_prev = 0.0;
    for it in 1..=max_iter {
        let av = apply(&v);
        let alpha = dot(&v, &av);
        let mut v_new: Vec<f64> = (0..n).map(|i| av[i] - alpha * v[i] - beta_prev * v_old[i]).collect();
        let beta_new = dot(&v_new, &v_new).sqrt();
        // apply previous rotations to the new column of the tridiagonal matrix
        let delta = c * alpha - c_old * s * beta_prev;
        let rho2 = s * alpha + c_old * c * beta_prev;
        let rho3 = s_old * beta_prev;
        let rho1 = (delta * delta + beta_new * beta_new).sqrt();
        let (c_new, s_new) = if rho1 == 0.0 { (1.0, 0.0) } else { (delta / rho1, beta_new / rho1) };
        let w_new: Vec<f64> = (0..n).map(|i| (v[i] - rho3 * w_old[i] - rho2 * w[i]) / rho1).collect();
        for i in 0..n {
            x[i] += c_new * eta * w_new[i];
        }
        eta = -s_new * eta;
        history.push(eta.abs());
        if eta.abs() <= rtol * bnorm {
            return Ok(MinresOutcome { x, iterations: it, history });
        }
        if beta_new == 0.0 {
            break;
        }
        v_new.iter_mut().for_each(|t| *t /= beta_new);
        v_old = std::mem::replace(&mut v, v_new);
        w_old = std::mem::replace(&mut w, w_new);
        c_old = c;
        s_old = s;
        c = c_new;
        s = s_new;
        beta_prev = beta_new;
    }
    Err(LdgError::NotConverged { iterations: history.len(), history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn solves_small_indefinite_system() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 3.0, 1.0, 1.0, 1.0, 0.0]);
        let b = [1.0, 2.0, 3.0];
        let out = minres(|x| (&a * DVector::from_column_slice(x)).as_slice().to_vec(), &b, 1e-12, 50).unwrap();
        let r = &a * DVector::from_column_slice(&out.x) - DVector::from_column_slice(&b);
        assert!(r.norm() < 1e-10);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}
