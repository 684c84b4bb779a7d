//! Lifting operators of jump data and the reconstructed discrete Hessian.
//!
//! For every element `K` the assembly stores dense operators mapping the dofs of
//! the patch (K and its skeleton neighbours) to the lifting coefficients on `K`
//! and to the values of `H_h` at the quadrature points of `K`. Tensor entries are
//! ordered `11, 12, 21, 22`; the gradient-jump lifting is not symmetric in general.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dg::diagnostics::random_rough_field;
use crate::dg::forms::{edge_jump_rows, grad_jump_sq, h2_inner_on, jump_sq, H2Mode};
use crate::dg::space::{dmat_vec, DgField, DgSpace, Skeleton};
use crate::error::{LdgError, Result};
use crate::metric::{Immersion, Point};

/// Dirichlet data `φ` and `Φ` (nominally `∇φ`).
#[derive(Clone)]
pub struct BoundaryData {
    pub phi: Arc<dyn Fn(Point) -> [f64; 3] + Send + Sync>,
    /// `grad_phi(x)[m][i]` approximates `∂_i φ_m`.
    pub grad_phi: Arc<dyn Fn(Point) -> [[f64; 2]; 3] + Send + Sync>,
}

impl BoundaryData {
    pub fn from_immersion(y: &Immersion) -> Self {
        BoundaryData { phi: y.value.clone(), grad_phi: y.jacobian.clone() }
    }

    pub fn zero() -> Self {
        BoundaryData { phi: Arc::new(|_| [0.0; 3]), grad_phi: Arc::new(|_| [[0.0; 2]; 3]) }
    }
}

#[derive(Clone)]
pub enum BoundaryMode {
    Free,
    Dirichlet(BoundaryData),
}

impl fmt::Debug for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryMode::Free => write!(f, "Free"),
            BoundaryMode::Dirichlet(_) => write!(f, "Dirichlet"),
        }
    }
}

impl BoundaryMode {
    pub fn is_dirichlet(&self) -> bool {
        matches!(self, BoundaryMode::Dirichlet(_))
    }

    pub fn skeleton(&self) -> Skeleton {
        match self {
            BoundaryMode::Free => Skeleton::Interior,
            BoundaryMode::Dirichlet(_) => Skeleton::Active,
        }
    }
}

/// Dirichlet data sampled at the quadrature points of one boundary edge.
#[derive(Clone, Debug)]
pub struct EdgeData {
    pub phi: Vec<[f64; 3]>,
    pub grad_phi: Vec<[[f64; 2]; 3]>,
}

/// Per-element operators of the assembly.
#[derive(Clone, Debug)]
pub struct ElementOps {
    /// Patch elements, `K` first; column block `j` belongs to `patch[j]`.
    pub patch: Vec<usize>,
    /// `4·nloc₁ × |patch|·nloc`: coefficients of `Σ_e r_e` on `K`.
    pub r: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// `4·nq × |patch|·nloc`: values of `H_h` at the quadrature points of `K`.
    pub h: DMatrix<f64>,
    /// Data parts per deformation component (zero without Dirichlet edges).
    pub r0: [Vec<f64>; 3],
    pub b0: [Vec<f64>; 3],
    pub h0: [Vec<f64>; 3],
}

impl ElementOps {
    pub fn patch_coeffs(&self, space: &DgSpace, comp: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.patch.len() * space.nloc());
        for &j in &self.patch {
            out.extend_from_slice(&comp[space.element_dofs(j)]);
        }
        out
    }

    pub fn patch_dofs(&self, space: &DgSpace) -> Vec<usize> {
        self.patch.iter().flat_map(|&j| space.element_dofs(j)).collect()
    }
}

pub struct LiftingAssembly {
    pub space: Arc<DgSpace>,
    pub lift_r_space: Arc<DgSpace>,
    pub lift_b_space: Arc<DgSpace>,
    pub mode: BoundaryMode,
    pub skeleton: Skeleton,
    pub elements: Vec<ElementOps>,
    /// Sampled data on Dirichlet edges.
    pub edge_data: Vec<Option<EdgeData>>,
}

impl fmt::Debug for LiftingAssembly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiftingAssembly")
            .field("degree", &self.space.degree)
            .field("l1", &self.lift_r_space.degree)
            .field("l2", &self.lift_b_space.degree)
            .field("mode", &self.mode)
            .finish()
    }
}

const AB: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

impl LiftingAssembly {
    /// Lifting degrees equal to the host degree.
    pub fn new(space: &Arc<DgSpace>, mode: BoundaryMode) -> Result<Self> {
        Self::with_degrees(space, space.degree, space.degree, mode)
    }

    pub fn with_degrees(space: &Arc<DgSpace>, l1: usize, l2: usize, mode: BoundaryMode) -> Result<Self> {
        let mesh = space.mesh.clone();
        let l1s = DgSpace::auxiliary(mesh.clone(), l1, space.quadrature)?;
        let l2s = DgSpace::auxiliary(mesh.clone(), l2, space.quadrature)?;
        let skeleton = mode.skeleton();
        if mode.is_dirichlet() && !mesh.has_dirichlet() {
            return Err(LdgError::Parameter("Dirichlet mode requires Dirichlet-labeled boundary edges".into()));
        }
        let edge_data: Vec<Option<EdgeData>> = mesh
            .edges
            .iter()
            .enumerate()
            .map(|(e, edge)| match &mode {
                BoundaryMode::Dirichlet(d) if edge.is_boundary() && skeleton.includes(edge) => {
                    let pts = &space.edges[e].points;
                    Some(EdgeData {
                        phi: pts.iter().map(|&x| (d.phi)(x)).collect(),
                        grad_phi: pts.iter().map(|&x| (d.grad_phi)(x)).collect(),
                    })
                }
                _ => None,
            })
            .collect();
        let elements: Vec<ElementOps> = (0..mesh.n_elements())
            .into_par_iter()
            .map(|k| build_element(space, &l1s, &l2s, skeleton, &edge_data, k))
            .collect::<Result<_>>()?;
        Ok(LiftingAssembly { space: space.clone(), lift_r_space: l1s, lift_b_space: l2s, mode, skeleton, elements, edge_data })
    }

    fn check(&self, v: &DgField) -> Result<()> {
        if !DgSpace::same(&v.space, &self.space) {
            return Err(LdgError::SpaceMismatch("field is not in the host space of the lifting assembly".into()));
        }
        Ok(())
    }

    fn lift(&self, v: &DgField, which: char, with_data: bool) -> Result<DgField> {
        self.check(v)?;
        let ls = if which == 'r' { &self.lift_r_space } else { &self.lift_b_space };
        let mut out = DgField::zeros(ls, 4 * v.ncomp);
        let nl = ls.nloc();
        let nd = ls.ndofs();
        for (k, ops) in self.elements.iter().enumerate() {
            let (op, off) = if which == 'r' { (&ops.r, &ops.r0) } else { (&ops.b, &ops.b0) };
            for m in 0..v.ncomp {
                let pc = ops.patch_coeffs(&self.space, v.component(m));
                let mut c = dmat_vec(op, &pc);
                if with_data && m < 3 {
                    for (ci, o) in c.iter_mut().zip(&off[m]) {
                        *ci += o;
                    }
                }
                for ab in 0..4 {
                    for i in 0..nl {
                        out.coeffs[(4 * m + ab) * nd + k * nl + i] = c[ab * nl + i];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `R_h([∇_h v]) = Σ_e r_e([∇_h v])`, component `4m + ab` holding entry `ab` of component `m`.
    pub fn lift_r(&self, v: &DgField) -> Result<DgField> {
        self.lift(v, 'r', self.mode.is_dirichlet())
    }

    /// `B_h([v]) = Σ_e b_e([v])`.
    pub fn lift_b(&self, v: &DgField) -> Result<DgField> {
        self.lift(v, 'b', self.mode.is_dirichlet())
    }

    /// Liftings of homogeneous jumps only.
    pub fn lift_r_homogeneous(&self, v: &DgField) -> Result<DgField> {
        self.lift(v, 'r', false)
    }

    pub fn lift_b_homogeneous(&self, v: &DgField) -> Result<DgField> {
        self.lift(v, 'b', false)
    }

    /// `H_h(v)` at element quadrature points, including Dirichlet data when present.
    pub fn discrete_hessian(&self, v: &DgField) -> Result<DiscreteHessianField> {
        self.hessian_impl(v, self.mode.is_dirichlet())
    }

    /// The linear part of `H_h` (boundary data set to zero).
    pub fn discrete_hessian_homogeneous(&self, v: &DgField) -> Result<DiscreteHessianField> {
        self.hessian_impl(v, false)
    }

    fn hessian_impl(&self, v: &DgField, with_data: bool) -> Result<DiscreteHessianField> {
        self.check(v)?;
        let values = self
            .elements
            .par_iter()
            .map(|ops| {
                (0..v.ncomp)
                    .map(|m| {
                        let mut hv = dmat_vec(&ops.h, &ops.patch_coeffs(&self.space, v.component(m)));
                        if with_data && m < 3 {
                            for (a, b) in hv.iter_mut().zip(&ops.h0[m]) {
                                *a += b;
                            }
                        }
                        hv.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect()
                    })
                    .collect()
            })
            .collect();
        Ok(DiscreteHessianField { ncomp: v.ncomp, values })
    }
}

fn build_element(
    space: &DgSpace,
    l1s: &DgSpace,
    l2s: &DgSpace,
    skeleton: Skeleton,
    edge_data: &[Option<EdgeData>],
    k: usize,
) -> Result<ElementOps> {
    let mesh = &space.mesh;
    let nloc = space.nloc();
    let (n1, n2) = (l1s.nloc(), l2s.nloc());
    let mut patch = vec![k];
    let active: Vec<usize> = mesh.element_edges[k].iter().copied().filter(|&e| skeleton.includes(&mesh.edges[e])).collect();
    for &e in &active {
        if let Some((p, _)) = mesh.edges[e].plus {
            let other = if mesh.edges[e].minus == k { p } else { mesh.edges[e].minus };
            if !patch.contains(&other) {
                patch.push(other);
            }
        }
    }
    let width = patch.len() * nloc;
    let pos = |el: usize| patch.iter().position(|&p| p == el).unwrap() * nloc;
    let mut rr = DMatrix::zeros(4 * n1, width);
    let mut br = DMatrix::zeros(4 * n2, width);
    let mut r0: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; 4 * n1]);
    let mut b0: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; 4 * n2]);
    for &e in &active {
        let edge = &mesh.edges[e];
        let is_minus = edge.minus == k;
        let avg = if edge.is_boundary() { 1.0 } else { 0.5 };
        let n = edge.normal;
        let (_, j0, j1) = edge_jump_rows(space, e);
        let mut cols: Vec<usize> = (0..nloc).map(|i| pos(edge.minus) + i).collect();
        if let Some((p, _)) = edge.plus {
            cols.extend((0..nloc).map(|i| pos(p) + i));
        }
        let side1 = if is_minus { &l1s.edges[e].minus } else { l1s.edges[e].plus.as_ref().unwrap() };
        let side2 = if is_minus { &l2s.edges[e].minus } else { l2s.edges[e].plus.as_ref().unwrap() };
        let w = &space.edges[e].weights;
        let data = edge_data[e].as_ref();
        for q in 0..w.len() {
            let wq = w[q] * avg;
            for (ab, &(a, b)) in AB.iter().enumerate() {
                for i in 0..n1 {
                    let s = wq * side1.val[(q, i)] * n[b];
                    if s == 0.0 {
                        continue;
                    }
                    for (c, &col) in cols.iter().enumerate() {
                        rr[(ab * n1 + i, col)] += s * j1[a][(q, c)];
                    }
                    if let Some(d) = data {
                        for m in 0..3 {
                            r0[m][ab * n1 + i] -= s * d.grad_phi[q][m][a];
                        }
                    }
                }
                for i in 0..n2 {
                    let s = wq * n[a] * side2.grad[b][(q, i)];
                    if s == 0.0 {
                        continue;
                    }
                    for (c, &col) in cols.iter().enumerate() {
                        br[(ab * n2 + i, col)] += s * j0[(q, c)];
                    }
                    if let Some(d) = data {
                        for m in 0..3 {
                            b0[m][ab * n2 + i] -= s * d.phi[q][m];
                        }
                    }
                }
            }
        }
    }
    let solve_blocks = |ls: &DgSpace, nl: usize, rhs: &mut DMatrix<f64>, off: &mut [Vec<f64>; 3]| -> Result<()> {
        let chol = ls
            .local_mass(k)
            .cholesky()
            .ok_or_else(|| LdgError::Mesh(format!("singular local mass matrix on element {k}")))?;
        for ab in 0..4 {
            let blk = rhs.rows(ab * nl, nl).into_owned();
            rhs.rows_mut(ab * nl, nl).copy_from(&chol.solve(&blk));
            for o in off.iter_mut() {
                let v = nalgebra::DVector::from_column_slice(&o[ab * nl..(ab + 1) * nl]);
                o[ab * nl..(ab + 1) * nl].copy_from_slice(chol.solve(&v).as_slice());
            }
        }
        Ok(())
    };
    solve_blocks(l1s, n1, &mut rr, &mut r0)?;
    solve_blocks(l2s, n2, &mut br, &mut b0)?;
    let et = &space.elements[k];
    let (v1, v2) = (&l1s.elements[k].val, &l2s.elements[k].val);
    let nq = et.weights.len();
    let mut h = DMatrix::zeros(4 * nq, width);
    let mut h0: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; 4 * nq]);
    const HESS_OF: [usize; 4] = [0, 1, 1, 2];
    for p in 0..nq {
        for ab in 0..4 {
            let row = 4 * p + ab;
            for i in 0..nloc {
                h[(row, i)] = et.hess[HESS_OF[ab]][(p, i)];
            }
            for i in 0..n1 {
                let s = v1[(p, i)];
                if s != 0.0 {
                    for c in 0..width {
                        h[(row, c)] -= s * rr[(ab * n1 + i, c)];
                    }
                    for m in 0..3 {
                        h0[m][row] -= s * r0[m][ab * n1 + i];
                    }
                }
            }
            for i in 0..n2 {
                let s = v2[(p, i)];
                if s != 0.0 {
                    for c in 0..width {
                        h[(row, c)] += s * br[(ab * n2 + i, c)];
                    }
                    for m in 0..3 {
                        h0[m][row] += s * b0[m][ab * n2 + i];
                    }
                }
            }
        }
    }
    Ok(ElementOps { patch, r: rr, b: br, h, r0, b0, h0 })
}

/// Values of `H_h(v)` at element quadrature points: `values[element][component][point]`.
#[derive(Clone, Debug)]
pub struct DiscreteHessianField {
    pub ncomp: usize,
    pub values: Vec<Vec<Vec<[f64; 4]>>>,
}

impl DiscreteHessianField {
    pub fn at(&self, element: usize, comp: usize, point: usize) -> [[f64; 2]; 2] {
        let v = self.values[element][comp][point];
        [[v[0], v[1]], [v[2], v[3]]]
    }

    /// `Σ_m ∫ |H_h(v_m)|²`.
    pub fn l2_norm_sq(&self, space: &DgSpace) -> f64 {
        let mut s = 0.0;
        for (k, per) in self.values.iter().enumerate() {
            let w = &space.elements[k].weights;
            for comp in per {
                for (p, h) in comp.iter().enumerate() {
                    s += w[p] * h.iter().map(|x| x * x).sum::<f64>();
                }
            }
        }
        s
    }

    /// `‖H_h(v) − exact‖_{L²}` with `exact(x)[m]` the reference Hessian of component `m`.
    pub fn l2_error(&self, space: &DgSpace, exact: &dyn Fn(Point) -> Vec<[[f64; 2]; 2]>) -> f64 {
        let mut s = 0.0;
        for (k, per) in self.values.iter().enumerate() {
            let t = &space.elements[k];
            for (p, &x) in t.points.iter().enumerate() {
                let ex = exact(x);
                for (m, comp) in per.iter().enumerate() {
                    let h = comp[p];
                    let d = [h[0] - ex[m][0][0], h[1] - ex[m][0][1], h[2] - ex[m][1][0], h[3] - ex[m][1][1]];
                    s += t.weights[p] * d.iter().map(|x| x * x).sum::<f64>();
                }
            }
        }
        s.sqrt()
    }

    /// `∫ H_h(v_comp) : φ`.
    pub fn pairing(&self, space: &DgSpace, comp: usize, phi: &dyn Fn(Point) -> [[f64; 2]; 2]) -> f64 {
        let mut s = 0.0;
        for (k, per) in self.values.iter().enumerate() {
            let t = &space.elements[k];
            for (p, &x) in t.points.iter().enumerate() {
                let f = phi(x);
                let h = per[comp][p];
                s += t.weights[p] * (h[0] * f[0][0] + h[1] * f[0][1] + h[2] * f[1][0] + h[3] * f[1][1]);
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormBounds {
    pub c_lower_observed: f64,
    pub c_upper_observed: f64,
}

/// `(‖H_h v‖² + γ₁‖𝗁^{-1/2}[∇v]‖² + γ₀‖𝗁^{-3/2}[v]‖²) / |v|²_{H²_h}` for one field (homogeneous jumps).
pub fn seminorm_ratio(assembly: &LiftingAssembly, v: &DgField, gamma0: f64, gamma1: f64) -> Result<f64> {
    let sk = assembly.skeleton;
    let hn = assembly.discrete_hessian_homogeneous(v)?.l2_norm_sq(&assembly.space);
    let num = hn + gamma1 * grad_jump_sq(v, 1, sk) + gamma0 * jump_sq(v, 3, sk);
    let den = h2_inner_on(v, v, H2Mode::Semi, sk)?;
    Ok(num / den)
}

/// Extreme observed ratios over `samples` rough random scalar fields.
pub fn seminorm_equivalence_check(
    assembly: &LiftingAssembly,
    gamma0: f64,
    gamma1: f64,
    samples: usize,
    seed: u64,
) -> Result<SeminormBounds> {
    if !(gamma0 > 0.0 && gamma1 > 0.0) {
        return Err(LdgError::Parameter("stabilization parameters must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..samples.max(1) {
        let v = random_rough_field(&assembly.space, 1, &mut rng);
        let r = seminorm_ratio(assembly, &v, gamma0, gamma1)?;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok(SeminormBounds { c_lower_observed: lo, c_upper_observed: hi })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftingStability {
    /// max ‖R_h([∇v])‖ / ‖𝗁^{-1/2}[∇v]‖.
    pub r_ratio_max: f64,
    /// max ‖B_h([v])‖ / ‖𝗁^{-3/2}[v]‖.
    pub b_ratio_max: f64,
}

pub fn lifting_stability_check(assembly: &LiftingAssembly, samples: usize, seed: u64) -> Result<LiftingStability> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sk = assembly.skeleton;
    let mut out = LiftingStability { r_ratio_max: 0.0, b_ratio_max: 0.0 };
    for _ in 0..samples.max(1) {
        let v = random_rough_field(&assembly.space, 1, &mut rng);
        let r = assembly.lift_r_homogeneous(&v)?.l2_norm();
        let b = assembly.lift_b_homogeneous(&v)?.l2_norm();
        let gj = grad_jump_sq(&v, 1, sk).sqrt();
        let j = jump_sq(&v, 3, sk).sqrt();
        if gj > 0.0 {
            out.r_ratio_max = out.r_ratio_max.max(r / gj);
        }
        if j > 0.0 {
            out.b_ratio_max = out.b_ratio_max.max(b / j);
        }
    }
    Ok(out)
}
