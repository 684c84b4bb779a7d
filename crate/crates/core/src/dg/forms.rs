//! Mesh-dependent inner products on broken spaces, as matrices and as direct quadrature.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::space::{dmat_vec, DgField, DgSpace, Skeleton};
use crate::error::Result;
use crate::solver::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum H2Mode {
    /// `(D²u, D²v) + (𝗁⁻¹[∇u],[∇v]) + (𝗁⁻³[u],[v])`.
    Semi,
    /// Semi plus the L² product.
    Full,
}

/// Scatters dense local blocks into global triplets.
pub(crate) fn scatter(t: &mut Vec<(usize, usize, f64)>, rows: &[usize], cols: &[usize], m: &DMatrix<f64>) {
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let v = m[(i, j)];
            if v != 0.0 {
                t.push((r, c, v));
            }
        }
    }
}

/// `Σ_p w_p a_pᵀ b_p` over rows of `a`, `b`.
pub(crate) fn weighted_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.ncols(), b.ncols());
    for (p, &wp) in w.iter().enumerate() {
        for i in 0..a.ncols() {
            let ai = wp * a[(p, i)];
            if ai == 0.0 {
                continue;
            }
            for j in 0..b.ncols() {
                m[(i, j)] += ai * b[(p, j)];
            }
        }
    }
    m
}

fn element_matrix<F>(space: &DgSpace, local: F) -> CsrMatrix
where
    F: Fn(usize) -> DMatrix<f64> + Sync,
{
    let blocks: Vec<DMatrix<f64>> = (0..space.mesh.n_elements()).into_par_iter().map(&local).collect();
    let mut t = Vec::new();
    for (k, b) in blocks.iter().enumerate() {
        let d: Vec<usize> = space.element_dofs(k).collect();
        scatter(&mut t, &d, &d, b);
    }
    CsrMatrix::from_triplets(space.ndofs(), space.ndofs(), t)
}

pub fn mass_matrix(space: &DgSpace) -> CsrMatrix {
    element_matrix(space, |k| space.local_mass(k))
}

/// `∫ D²_h u : D²_h v`.
pub fn hessian_gram(space: &DgSpace) -> CsrMatrix {
    element_matrix(space, |k| {
        let t = &space.elements[k];
        let w2: Vec<f64> = t.weights.iter().map(|w| 2.0 * w).collect();
        weighted_gram(&t.hess[0], &t.hess[0], &t.weights)
            + weighted_gram(&t.hess[1], &t.hess[1], &w2)
            + weighted_gram(&t.hess[2], &t.hess[2], &t.weights)
    })
}

/// `∫ ∇_h u · ∇_h v`.
pub fn gradient_gram(space: &DgSpace) -> CsrMatrix {
    element_matrix(space, |k| {
        let t = &space.elements[k];
        weighted_gram(&t.grad[0], &t.grad[0], &t.weights) + weighted_gram(&t.grad[1], &t.grad[1], &t.weights)
    })
}

/// Jump rows at the edge quadrature points: `(dofs, value jump, [gradient jump x, y])`.
pub(crate) fn edge_jump_rows(space: &DgSpace, e: usize) -> (Vec<usize>, DMatrix<f64>, [DMatrix<f64>; 2]) {
    let et = &space.edges[e];
    let nloc = space.nloc();
    let nq = et.points.len();
    let mut dofs: Vec<usize> = space.element_dofs(et.minus.element).collect();
    let width = if et.plus.is_some() { 2 * nloc } else { nloc };
    let mut j0 = DMatrix::zeros(nq, width);
    let mut j1 = [DMatrix::zeros(nq, width), DMatrix::zeros(nq, width)];
    for p in 0..nq {
        for i in 0..nloc {
            j0[(p, i)] = et.minus.val[(p, i)];
            j1[0][(p, i)] = et.minus.grad[0][(p, i)];
            j1[1][(p, i)] = et.minus.grad[1][(p, i)];
        }
    }
    if let Some(pl) = &et.plus {
        dofs.extend(space.element_dofs(pl.element));
        for p in 0..nq {
            for i in 0..nloc {
                j0[(p, nloc + i)] = -pl.val[(p, i)];
                j1[0][(p, nloc + i)] = -pl.grad[0][(p, i)];
                j1[1][(p, nloc + i)] = -pl.grad[1][(p, i)];
            }
        }
    }
    (dofs, j0, j1)
}

/// `(𝗁⁻¹[∇u],[∇v])_Γ` and `(𝗁⁻³[u],[v])_Γ` over the chosen skeleton, with homogeneous boundary data.
pub fn jump_grams(space: &DgSpace, skeleton: Skeleton) -> (CsrMatrix, CsrMatrix) {
    let mesh = &space.mesh;
    let blocks: Vec<Option<(Vec<usize>, DMatrix<f64>, DMatrix<f64>)>> = (0..mesh.edges.len())
        .into_par_iter()
        .map(|e| {
            let edge = &mesh.edges[e];
            if !skeleton.includes(edge) {
                return None;
            }
            let (dofs, j0, j1) = edge_jump_rows(space, e);
            let w = &space.edges[e].weights;
            let h = edge.length;
            let w1: Vec<f64> = w.iter().map(|x| x / h).collect();
            let w0: Vec<f64> = w.iter().map(|x| x / (h * h * h)).collect();
            let g1 = weighted_gram(&j1[0], &j1[0], &w1) + weighted_gram(&j1[1], &j1[1], &w1);
            let g0 = weighted_gram(&j0, &j0, &w0);
            Some((dofs, g1, g0))
        })
        .collect();
    let (mut t1, mut t0) = (Vec::new(), Vec::new());
    for (dofs, g1, g0) in blocks.into_iter().flatten() {
        scatter(&mut t1, &dofs, &dofs, &g1);
        scatter(&mut t0, &dofs, &dofs, &g0);
    }
    let n = space.ndofs();
    (CsrMatrix::from_triplets(n, n, t1), CsrMatrix::from_triplets(n, n, t0))
}

/// Scalar Gram matrix of the H²_h product.
pub fn h2_matrix(space: &DgSpace, mode: H2Mode, skeleton: Skeleton) -> CsrMatrix {
    let (j1, j0) = jump_grams(space, skeleton);
    let mut m = hessian_gram(space).combine(1.0, &j1, 1.0).combine(1.0, &j0, 1.0);
    if mode == H2Mode::Full {
        m = m.combine(1.0, &mass_matrix(space), 1.0);
    }
    m
}

/// `(u, v)_{H²_h}` over interior edges, evaluated directly by quadrature.
pub fn h2_inner(u: &DgField, v: &DgField, mode: H2Mode) -> Result<f64> {
    h2_inner_on(u, v, mode, Skeleton::Interior)
}

pub fn h2_inner_on(u: &DgField, v: &DgField, mode: H2Mode, skeleton: Skeleton) -> Result<f64> {
    u.check_compatible(v)?;
    let sp = &u.space;
    let mesh = &sp.mesh;
    let mut s = 0.0;
    for c in 0..u.ncomp {
        let (uc, vc) = (u.component(c), v.component(c));
        for k in 0..mesh.n_elements() {
            let t = &sp.elements[k];
            let (ue, ve) = (&uc[sp.element_dofs(k)], &vc[sp.element_dofs(k)]);
            let hu: Vec<Vec<f64>> = t.hess.iter().map(|h| dmat_vec(h, ue)).collect();
            let hv: Vec<Vec<f64>> = t.hess.iter().map(|h| dmat_vec(h, ve)).collect();
            for p in 0..t.weights.len() {
                s += t.weights[p] * (hu[0][p] * hv[0][p] + 2.0 * hu[1][p] * hv[1][p] + hu[2][p] * hv[2][p]);
            }
            if mode == H2Mode::Full {
                let a = dmat_vec(&t.val, ue);
                let b = dmat_vec(&t.val, ve);
                s += (0..a.len()).map(|p| t.weights[p] * a[p] * b[p]).sum::<f64>();
            }
        }
        for (e, edge) in mesh.edges.iter().enumerate() {
            if !skeleton.includes(edge) {
                continue;
            }
            let (tu, tv) = (sp.edge_traces(e, uc), sp.edge_traces(e, vc));
            let (ju, jv) = (tu.jump(), tv.jump());
            let (gu, gv) = (tu.grad_jump(), tv.grad_jump());
            let h = edge.length;
            for (p, &w) in sp.edges[e].weights.iter().enumerate() {
                s += w / h * (gu[p][0] * gv[p][0] + gu[p][1] * gv[p][1]);
                s += w / (h * h * h) * ju[p] * jv[p];
            }
        }
    }
    Ok(s)
}

/// ‖∇_h v‖²_{L²}, summed over components.
pub fn broken_gradient_sq(v: &DgField) -> f64 {
    let sp = &v.space;
    let mut s = 0.0;
    for c in 0..v.ncomp {
        for k in 0..sp.mesh.n_elements() {
            let t = &sp.elements[k];
            let co = v.element_coeffs(c, k);
            let g0 = dmat_vec(&t.grad[0], co);
            let g1 = dmat_vec(&t.grad[1], co);
            s += (0..g0.len()).map(|p| t.weights[p] * (g0[p] * g0[p] + g1[p] * g1[p])).sum::<f64>();
        }
    }
    s
}

/// `Σ_e 𝗁_e^{-power} ‖[v]‖²_{L²(e)}` over the skeleton, summed over components.
pub fn jump_sq(v: &DgField, power: i32, skeleton: Skeleton) -> f64 {
    let sp = &v.space;
    let mut s = 0.0;
    for c in 0..v.ncomp {
        for (e, edge) in sp.mesh.edges.iter().enumerate() {
            if skeleton.includes(edge) {
                let j = sp.edge_traces(e, v.component(c)).jump();
                let hw = edge.length.powi(-power);
                s += sp.edges[e].weights.iter().zip(&j).map(|(w, x)| hw * w * x * x).sum::<f64>();
            }
        }
    }
    s
}

/// `Σ_e 𝗁_e^{-power} ‖[∇v]‖²_{L²(e)}` over the skeleton.
pub fn grad_jump_sq(v: &DgField, power: i32, skeleton: Skeleton) -> f64 {
    let sp = &v.space;
    let mut s = 0.0;
    for c in 0..v.ncomp {
        for (e, edge) in sp.mesh.edges.iter().enumerate() {
            if skeleton.includes(edge) {
                let j = sp.edge_traces(e, v.component(c)).grad_jump();
                let hw = edge.length.powi(-power);
                s += sp.edges[e].weights.iter().zip(&j).map(|(w, x)| hw * w * (x[0] * x[0] + x[1] * x[1])).sum::<f64>();
            }
        }
    }
    s
}
