//! Random test fields and the discrete functional-inequality diagnostics.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forms::{broken_gradient_sq, h2_inner, jump_sq, H2Mode};
use super::space::{dmat_vec, interpolate, DgField, DgSpace, Skeleton};

/// Field with independent uniform `[-1, 1]` coefficients.
pub fn random_rough_field(space: &Arc<DgSpace>, ncomp: usize, rng: &mut impl Rng) -> DgField {
    let coeffs = (0..ncomp * space.ndofs()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    DgField { space: space.clone(), ncomp, coeffs }
}

/// Interpolant of a random low-frequency trigonometric sum plus element noise scaled by `h_K²`.
pub fn random_smooth_field(space: &Arc<DgSpace>, ncomp: usize, rng: &mut impl Rng) -> DgField {
    let modes: Vec<Vec<(f64, [f64; 2], f64)>> = (0..ncomp)
        .map(|_| {
            (0..4)
                .map(|_| {
                    let a = rng.gen_range(-1.0..=1.0);
                    let w = [rng.gen_range(-3.0..=3.0), rng.gen_range(-3.0..=3.0)];
                    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                    (a, w, phase)
                })
                .collect()
        })
        .collect();
    let f = |x: [f64; 2]| -> Vec<f64> {
        modes.iter().map(|m| m.iter().map(|(a, w, p)| a * (w[0] * x[0] + w[1] * x[1] + p).sin()).sum()).collect()
    };
    let mut v = interpolate(space, ncomp, &f);
    let nd = space.ndofs();
    for c in 0..ncomp {
        for k in 0..space.mesh.n_elements() {
            let h2 = space.mesh.diameters[k].powi(2);
            for d in space.element_dofs(k) {
                v.coeffs[c * nd + d] += h2 * rng.gen_range(-1.0..=1.0);
            }
        }
    }
    v
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub poincare_ratio_max: f64,
    pub sobolev_ratio_max: f64,
    pub grad_bound_ratio_max: f64,
}

fn lp_norms(v: &DgField, mean: &[f64]) -> (f64, f64, f64) {
    let sp = &v.space;
    let (mut l2, mut l2c, mut l4) = (0.0, 0.0, 0.0);
    for c in 0..v.ncomp {
        for k in 0..sp.mesh.n_elements() {
            let t = &sp.elements[k];
            let vals = dmat_vec(&t.val, v.element_coeffs(c, k));
            for (x, w) in vals.iter().zip(&t.weights) {
                l2 += w * x * x;
                l2c += w * (x - mean[c]).powi(2);
                l4 += w * x.powi(4);
            }
        }
    }
    (l2.sqrt(), l2c.sqrt(), l4.powf(0.25))
}

/// Poincaré, Sobolev and gradient-bound ratios of a single field.
pub fn inequality_ratios(v: &DgField) -> InequalityReport {
    let area: f64 = v.space.mesh.areas.iter().sum();
    let mean: Vec<f64> = v.integral().iter().map(|s| s / area).collect();
    let (l2, l2c, l4) = lp_norms(v, &mean);
    let grad = broken_gradient_sq(v).sqrt();
    let jump = jump_sq(v, 1, Skeleton::Interior).sqrt();
    let semi = h2_inner(v, v, H2Mode::Semi).unwrap_or(0.0).max(0.0).sqrt();
    // numerators at roundoff level relative to the field size count as zero
    let ratio = |a: f64, b: f64| if a <= 1e-12 * l2 { 0.0 } else { a / b };
    InequalityReport {
        poincare_ratio_max: ratio(l2c, grad + jump),
        sobolev_ratio_max: ratio(l4, grad + jump + l2),
        grad_bound_ratio_max: ratio(grad, l2 + semi),
    }
}

/// Maxima of the three ratios over `samples` smooth random scalar fields.
pub fn functional_inequality_check(space: &Arc<DgSpace>, samples: usize, seed: u64) -> InequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = InequalityReport::default();
    for _ in 0..samples.max(1) {
        let r = inequality_ratios(&random_smooth_field(space, 1, &mut rng));
        out.poincare_ratio_max = out.poincare_ratio_max.max(r.poincare_ratio_max);
        out.sobolev_ratio_max = out.sobolev_ratio_max.max(r.sobolev_ratio_max);
        out.grad_bound_ratio_max = out.grad_bound_ratio_max.max(r.grad_bound_ratio_max);
    }
    out
}
