//! Constrained gradient flows, the preprocessing flow, the bi-Laplacian initializer and run certificates.

pub mod bilaplacian;
pub mod certificates;
pub mod main_flow;
pub mod preprocess;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dg::forms::{gradient_gram, h2_matrix, H2Mode};
use crate::dg::space::{dmat_vec, DgField, DgSpace};
use crate::energy::Problem;
use crate::error::{LdgError, Result};
use crate::solver::{smallest_generalized_singular_value, ConstraintBlock, CsrMatrix, Definiteness, SparseSymmetric, SpdFactor};

pub use bilaplacian::bilaplacian_init;
pub use certificates::{flow_certificates, CertStatus, Certificate, CertificateReport};
pub use main_flow::{
    estimate_infsup, main_flow_step, run_main_flow, FlowConfig, FlowLog, MainFlow, StationarityRecord, StepOutput, StepRecord,
};
pub use preprocess::{
    estimate_preprocess_constants, flat_start, preprocess_step, run_preprocess, step_rule, PreStepRecord, PreprocessConfig,
    PreprocessConstants, PreprocessFlow, PreprocessLog,
};

/// Scalar Gram matrix of the flow metric: the full product without boundary data,
/// the semi-product over the active skeleton with Dirichlet data.
pub fn flow_metric(pr: &Problem) -> CsrMatrix {
    let mode = if pr.is_dirichlet() { H2Mode::Semi } else { H2Mode::Full };
    h2_matrix(pr.space(), mode, pr.skeleton())
}

/// `Σ_m x_mᵀ G x_m` for a component-major vector.
pub fn metric_norm_sq(g: &CsrMatrix, x: &[f64]) -> f64 {
    let nd = g.nrows;
    (0..x.len() / nd).map(|m| g.bilinear(&x[m * nd..(m + 1) * nd], &x[m * nd..(m + 1) * nd])).sum()
}

/// `I₃ ⊗ G` as a symmetric matrix.
pub(crate) fn vector_metric(g: &CsrMatrix) -> SparseSymmetric {
    SparseSymmetric::from_full(&g.kron_identity(3), Definiteness::Spd)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-element rows of the linearized metric constraint at `anchor`.
///
/// Rows are `(L₁₁, L₂₂, 2L₁₂)` so that `b_h(anchor; v, μ) = (μ₁₁, μ₂₂, μ₁₂)·rows·v`.
pub fn constraint_blocks(anchor: &DgField) -> Vec<ConstraintBlock> {
    let sp = &anchor.space;
    let nd = sp.ndofs();
    let n = sp.nloc();
    (0..sp.mesh.n_elements())
        .map(|k| {
            let t = &sp.elements[k];
            let cols: Vec<usize> = (0..3).flat_map(|m| sp.element_dofs(k).map(move |d| m * nd + d)).collect();
            let mut rows = DMatrix::zeros(3, 3 * n);
            for m in 0..3 {
                let g = [dmat_vec(&t.grad[0], anchor.element_coeffs(m, k)), dmat_vec(&t.grad[1], anchor.element_coeffs(m, k))];
                for i in 0..n {
                    let (mut r11, mut r22, mut r12) = (0.0, 0.0, 0.0);
                    for (p, &w) in t.weights.iter().enumerate() {
                        let (d1, d2) = (t.grad[0][(p, i)], t.grad[1][(p, i)]);
                        r11 += 2.0 * w * d1 * g[0][p];
                        r22 += 2.0 * w * d2 * g[1][p];
                        r12 += 2.0 * w * (d1 * g[1][p] + d2 * g[0][p]);
                    }
                    rows[(0, m * n + i)] = r11;
                    rows[(1, m * n + i)] = r22;
                    rows[(2, m * n + i)] = r12;
                }
            }
            ConstraintBlock { cols, rows }
        })
        .collect()
}

/// Per-element multipliers as symmetric matrices from the stacked `(μ₁₁, μ₂₂, μ₁₂)` vector.
pub fn multipliers_as_tensors(lambda: &[f64]) -> Vec<[[f64; 2]; 2]> {
    lambda.chunks(3).map(|c| [[c[0], c[2]], [c[2], c[1]]]).collect()
}

/// Largest `‖∇_h v‖²_{L²} / ‖v‖²_G` over the space: the constant that turns increments in
/// the flow metric into gradient increments.
pub fn poincare_constant(space: &DgSpace, gram: &CsrMatrix) -> Result<f64> {
    let kg = gradient_gram(space);
    let nd = space.ndofs();
    if nd <= 2500 {
        let g = gram.to_dense();
        let chol = g.cholesky().ok_or_else(|| LdgError::Parameter("flow metric is not positive definite".into()))?;
        let l = chol.l();
        let y = l.solve_lower_triangular(&kg.to_dense()).expect("triangular solve");
        let c = l.solve_lower_triangular(&y.transpose()).expect("triangular solve");
        let c = 0.5 * (&c + c.transpose());
        return Ok(c.symmetric_eigenvalues().max());
    }
    let fac = SpdFactor::new(&SparseSymmetric::from_full(gram, Definiteness::Spd), None)?;
    Ok(1.01 * pencil_spectral_radius(&kg, gram, &fac, 500, 17))
}

/// `max |λ|` of `A x = λ G x` by power iteration in the `G` inner product.
///
/// The growth ratio approaches the radius from below; callers add their own margin.
pub(crate) fn pencil_spectral_radius(a: &CsrMatrix, gram: &CsrMatrix, gfac: &SpdFactor, iters: usize, seed: u64) -> f64 {
    let nd = gram.nrows;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..nd).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
    let n = gram.bilinear(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= n);
    let mut rho = 0.0;
    for _ in 0..iters {
        let y = gfac.solve(&a.matvec(&x));
        let next = gram.bilinear(&y, &y).sqrt();
        if next == 0.0 {
            return 0.0;
        }
        x = y.iter().map(|v| v / next).collect();
        if (next - rho).abs() <= 1e-10 * next {
            return next;
        }
        rho = next;
    }
    rho
}

/// Inf-sup constant of the constraint form at `anchor` with respect to the flow metric and the `L²` norm of multipliers.
///
/// Dense computation; returns `None` above 8000 primal unknowns.
pub fn infsup_constant(anchor: &DgField, gram: &CsrMatrix) -> Result<Option<f64>> {
    let sp = &anchor.space;
    let n = 3 * sp.ndofs();
    if n > 8000 {
        return Ok(None);
    }
    let blocks = constraint_blocks(anchor);
    let ne = blocks.len();
    let mut b = DMatrix::zeros(3 * ne, n);
    let mut gm = DMatrix::zeros(3 * ne, 3 * ne);
    for (k, blk) in blocks.iter().enumerate() {
        for r in 0..3 {
            for (j, &c) in blk.cols.iter().enumerate() {
                b[(3 * k + r, c)] = blk.rows[(r, j)];
            }
        }
        let a = sp.mesh.areas[k];
        gm[(3 * k, 3 * k)] = a;
        gm[(3 * k + 1, 3 * k + 1)] = a;
        gm[(3 * k + 2, 3 * k + 2)] = 2.0 * a;
    }
    let gv = gram.kron_identity(3).to_dense();
    smallest_generalized_singular_value(&b, &gv, &gm).map(Some)
}
