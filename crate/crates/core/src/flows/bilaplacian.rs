//! Nitsche bi-Laplacian solve used as the initial deformation under Dirichlet data.

use crate::dg::space::DgField;
use crate::energy::{assemble_form, BendingForm, Problem};
use crate::error::{LdgError, Result};
use crate::metric::Point;
use crate::solver::{Definiteness, SparseSymmetric, SpdFactor};

/// Solves `c_h(ŷ, v) = (f̂, v)` for all `v` with the data of `problem` entering through the liftings and the boundary jumps.
pub fn bilaplacian_init(problem: &Problem, gamma0_hat: f64, gamma1_hat: f64, fhat: Option<&(dyn Fn(Point) -> [f64; 3] + Sync)>) -> Result<DgField> {
    if !problem.is_dirichlet() {
        return Err(LdgError::Unsupported("the bi-Laplacian initializer needs Dirichlet data".into()));
    }
    if !(gamma0_hat > 0.0 && gamma1_hat > 0.0) {
        return Err(LdgError::Parameter("bi-Laplacian stabilization parameters must be positive".into()));
    }
    let sp = problem.space();
    let nd = sp.ndofs();
    let form = assemble_form(problem, &BendingForm::bilaplacian(gamma0_hat, gamma1_hat));
    let groups = sp.element_groups(1);
    let fac = SpdFactor::new(&SparseSymmetric::from_full(&form.k, Definiteness::Spd), Some(&groups))?;
    let mut load = vec![0.0; 3 * nd];
    if let Some(f) = fhat {
        for (k, t) in sp.elements.iter().enumerate() {
            for (p, (&x, &w)) in t.points.iter().zip(&t.weights).enumerate() {
                let v = f(x);
                for i in 0..sp.nloc() {
                    for m in 0..3 {
                        load[m * nd + sp.dof(k, i)] += w * t.val[(p, i)] * v[m];
                    }
                }
            }
        }
    }
    let mut coeffs = Vec::with_capacity(3 * nd);
    for m in 0..3 {
        let rhs: Vec<f64> = (0..nd).map(|i| load[m * nd + i] - form.lin[m][i]).collect();
        coeffs.extend(fac.solve(&rhs));
    }
    DgField::from_coeffs(sp, 3, coeffs)
}
