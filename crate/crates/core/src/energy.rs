//! Bending, stretching and defect functionals with their bilinear forms.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dg::diagnostics::random_rough_field;
use crate::dg::forms::{edge_jump_rows, h2_inner_on, jump_grams, scatter, H2Mode};
use crate::dg::space::{dmat_vec, DgField, DgSpace, Skeleton};
use crate::error::{LdgError, Result};
use crate::lifting::LiftingAssembly;
use crate::metric::{Immersion, MetricField, Point, Sym2};
use crate::solver::CsrMatrix;

pub type Forcing = Arc<dyn Fn(Point) -> [f64; 3] + Send + Sync>;

#[derive(Clone)]
pub struct EnergyParams {
    pub mu: f64,
    pub lambda: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub forcing: Option<Forcing>,
}

impl fmt::Debug for EnergyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnergyParams")
            .field("mu", &self.mu)
            .field("lambda", &self.lambda)
            .field("gamma0", &self.gamma0)
            .field("gamma1", &self.gamma1)
            .field("forcing", &self.forcing.is_some())
            .finish()
    }
}

impl EnergyParams {
    pub fn new(mu: f64, lambda: f64, gamma0: f64, gamma1: f64) -> Result<Self> {
        let p = EnergyParams { mu, lambda, gamma0, gamma1, forcing: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_forcing(mut self, f: impl Fn(Point) -> [f64; 3] + Send + Sync + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(LdgError::Parameter(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.lambda >= 0.0) {
            return Err(LdgError::Parameter(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.gamma0 > 0.0 && self.gamma1 > 0.0) {
            return Err(LdgError::Parameter("gamma0 and gamma1 must be positive".into()));
        }
        Ok(())
    }

    /// Weight of `∫|g^{-1/2} H g^{-1/2}|²` inside the quadratic form `2E_h`.
    pub fn frobenius_weight(&self) -> f64 {
        self.mu / 6.0
    }

    pub fn trace_weight(&self) -> f64 {
        self.mu * self.lambda / (6.0 * (2.0 * self.mu + self.lambda))
    }
}

/// A quadratic bending-type form
/// `frob∫|SHS|² + trace∫tr(SHS)² + γ₁‖𝗁^{-1/2}[∇y]‖² + γ₀‖𝗁^{-3/2}[y]‖²`, `S = g^{-1/2}` or `I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BendingForm {
    pub frob: f64,
    pub trace: f64,
    pub gamma1: f64,
    pub gamma0: f64,
    pub use_metric: bool,
}

impl BendingForm {
    /// `2E_h` without forcing.
    pub fn main(p: &EnergyParams) -> Self {
        BendingForm { frob: p.frobenius_weight(), trace: p.trace_weight(), gamma1: p.gamma1, gamma0: p.gamma0, use_metric: true }
    }

    /// `2E_h^b`.
    pub fn preprocess() -> Self {
        BendingForm { frob: 1.0, trace: 0.0, gamma1: 1.0, gamma0: 1.0, use_metric: true }
    }

    /// The Nitsche bi-Laplacian form `c_h`.
    pub fn bilaplacian(gamma0_hat: f64, gamma1_hat: f64) -> Self {
        BendingForm { frob: 1.0, trace: 0.0, gamma1: gamma1_hat, gamma0: gamma0_hat, use_metric: false }
    }
}

/// Metric, its inverse square root and inverse at every element quadrature point.
#[derive(Clone, Debug)]
pub struct MetricData {
    pub g: Vec<Vec<Sym2>>,
    pub s: Vec<Vec<Sym2>>,
    pub ginv: Vec<Vec<Sym2>>,
    /// `∫|g|` (Frobenius).
    pub l1_norm: f64,
    /// `|Ω|⁻¹∫g`.
    pub mean: Sym2,
}

impl MetricData {
    pub fn new(space: &DgSpace, metric: &MetricField) -> Result<Self> {
        let per: Vec<Vec<Sym2>> = space
            .elements
            .par_iter()
            .map(|t| t.points.iter().map(|&x| metric.eval_checked(x)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let s: Vec<Vec<Sym2>> = per.iter().map(|v| v.iter().map(|g| g.inv_sqrt()).collect()).collect();
        let ginv: Vec<Vec<Sym2>> = per.iter().map(|v| v.iter().map(|g| g.inverse()).collect()).collect();
        let (mut l1, mut m) = (0.0, Sym2::default());
        for (k, t) in space.elements.iter().enumerate() {
            for (p, &w) in t.weights.iter().enumerate() {
                let g = per[k][p];
                l1 += w * g.frobenius();
                m.a11 += w * g.a11;
                m.a12 += w * g.a12;
                m.a22 += w * g.a22;
            }
        }
        let area = space.mesh.area();
        let mean = Sym2::new(m.a11 / area, m.a12 / area, m.a22 / area);
        Ok(MetricData { g: per, s, ginv, l1_norm: l1, mean })
    }
}

/// Discretization bundle: lifting assembly, metric samples and material parameters.
pub struct Problem {
    pub assembly: LiftingAssembly,
    pub metric: MetricField,
    pub metric_data: MetricData,
    pub params: EnergyParams,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem").field("assembly", &self.assembly).field("metric", &self.metric).field("params", &self.params).finish()
    }
}

impl Problem {
    pub fn new(assembly: LiftingAssembly, metric: MetricField, params: EnergyParams) -> Result<Self> {
        params.validate()?;
        let metric_data = MetricData::new(&assembly.space, &metric)?;
        let p = Problem { assembly, metric, metric_data, params };
        if !p.assembly.mode.is_dirichlet() {
            if let Some(f) = &p.params.forcing {
                let sp = p.space();
                let (mut int, mut fmax) = ([0.0; 3], 0.0f64);
                for t in &sp.elements {
                    for (&x, &w) in t.points.iter().zip(&t.weights) {
                        let v = f(x);
                        for m in 0..3 {
                            int[m] += w * v[m];
                            fmax = fmax.max(v[m].abs());
                        }
                    }
                }
                let tol = 1e-10 * sp.mesh.area() * fmax;
                if int.iter().any(|s| s.abs() > tol) {
                    return Err(LdgError::Parameter(format!("free boundary requires zero-mean forcing, got {int:?}")));
                }
            }
        }
        Ok(p)
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.assembly.space
    }

    pub fn skeleton(&self) -> Skeleton {
        self.assembly.skeleton
    }

    pub fn is_dirichlet(&self) -> bool {
        self.assembly.mode.is_dirichlet()
    }

    /// `(f, v)` for each scalar test function, component-major.
    pub fn load_vector(&self) -> Vec<f64> {
        let sp = self.space();
        let nd = sp.ndofs();
        let mut out = vec![0.0; 3 * nd];
        if let Some(f) = &self.params.forcing {
            for (k, t) in sp.elements.iter().enumerate() {
                for (p, (&x, &w)) in t.points.iter().zip(&t.weights).enumerate() {
                    let v = f(x);
                    for i in 0..sp.nloc() {
                        let b = w * t.val[(p, i)];
                        for m in 0..3 {
                            out[m * nd + sp.dof(k, i)] += b * v[m];
                        }
                    }
                }
            }
        }
        out
    }

    fn check(&self, y: &DgField) -> Result<()> {
        if !DgSpace::same(&y.space, self.space()) || y.ncomp != 3 {
            return Err(LdgError::SpaceMismatch("expected a 3-component field in the problem space".into()));
        }
        Ok(())
    }
}

fn weight_matrix(form: &BendingForm, s: &Sym2, ginv: &Sym2) -> [[f64; 4]; 4] {
    let (s, gi) = if form.use_metric { (s.to_array(), ginv.to_array()) } else { (Sym2::IDENTITY.to_array(), Sym2::IDENTITY.to_array()) };
    let mut m = [[0.0; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[2 * i + j][2 * k + l] = s[i][k] * s[l][j];
                }
            }
        }
    }
    let v = [gi[0][0], gi[0][1], gi[1][0], gi[1][1]];
    let mut w = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mtm: f64 = (0..4).map(|r| m[r][a] * m[r][b]).sum();
            w[a][b] = form.frob * mtm + form.trace * v[a] * v[b];
        }
    }
    w
}

/// `(Σ∫|SHS|², Σ∫tr(SHS)²)` of a Hessian pair, or the mixed products when `h` and `k` differ.
fn hessian_products(h: &[f64; 4], k: &[f64; 4], s: &Sym2, use_metric: bool) -> (f64, f64) {
    let s = if use_metric { s.to_array() } else { Sym2::IDENTITY.to_array() };
    let apply = |x: &[f64; 4]| {
        let x = [[x[0], x[1]], [x[2], x[3]]];
        let mut o = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        o[i][j] += s[i][a] * x[a][b] * s[b][j];
                    }
                }
            }
        }
        o
    };
    let (a, b) = (apply(h), apply(k));
    let frob = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| a[i][j] * b[i][j]).sum();
    (frob, (a[0][0] + a[1][1]) * (b[0][0] + b[1][1]))
}

/// Raw integrals `(Σ∫|SHS|², Σ∫tr(SHS)², Σ‖𝗁^{-1/2}[∇y]‖², Σ‖𝗁^{-3/2}[y]‖²)` with boundary data.
fn bending_integrals(pr: &Problem, use_metric: bool, y: &DgField) -> Result<[f64; 4]> {
    pr.check(y)?;
    let sp = pr.space();
    let hy = pr.assembly.discrete_hessian(y)?;
    let (mut fr, mut tr) = (0.0, 0.0);
    for (k, t) in sp.elements.iter().enumerate() {
        for m in 0..3 {
            for (p, &w) in t.weights.iter().enumerate() {
                let h = &hy.values[k][m][p];
                let (a, b) = hessian_products(h, h, &pr.metric_data.s[k][p], use_metric);
                fr += w * a;
                tr += w * b;
            }
        }
    }
    let (gj, j) = data_jumps(pr, y, y, true);
    Ok([fr, tr, gj, j])
}

/// Skeleton pairings `(Σ(𝗁⁻¹[∇u],[∇v]), Σ(𝗁⁻³[u],[v]))`; data enters `u` only, and `v` too when `both`.
fn data_jumps(pr: &Problem, u: &DgField, v: &DgField, both: bool) -> (f64, f64) {
    let sp = pr.space();
    let a = &pr.assembly;
    let (mut gj, mut j) = (0.0, 0.0);
    for (e, edge) in sp.mesh.edges.iter().enumerate() {
        if !a.skeleton.includes(edge) {
            continue;
        }
        let h = edge.length;
        let w = &sp.edges[e].weights;
        let data = a.edge_data[e].as_ref();
        for m in 0..3 {
            let (tu, tv) = (sp.edge_traces(e, u.component(m)), sp.edge_traces(e, v.component(m)));
            let (mut ju, mut jv, mut gu, mut gv) = (tu.jump(), tv.jump(), tu.grad_jump(), tv.grad_jump());
            if let Some(d) = data {
                for q in 0..w.len() {
                    ju[q] -= d.phi[q][m];
                    gu[q][0] -= d.grad_phi[q][m][0];
                    gu[q][1] -= d.grad_phi[q][m][1];
                    if both {
                        jv[q] -= d.phi[q][m];
                        gv[q][0] -= d.grad_phi[q][m][0];
                        gv[q][1] -= d.grad_phi[q][m][1];
                    }
                }
            }
            for q in 0..w.len() {
                gj += w[q] / h * (gu[q][0] * gv[q][0] + gu[q][1] * gv[q][1]);
                j += w[q] / (h * h * h) * ju[q] * jv[q];
            }
        }
    }
    (gj, j)
}

/// Unweighted misfit of `y` against the Dirichlet data on the Dirichlet edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMismatch {
    /// `Σ_e ‖y − φ‖²_{L²(e)}`.
    pub value_sq: f64,
    /// `Σ_e ‖∇y − Φ‖²_{L²(e)}`.
    pub grad_sq: f64,
}

pub fn boundary_mismatch(pr: &Problem, y: &DgField) -> Result<BoundaryMismatch> {
    pr.check(y)?;
    let sp = pr.space();
    let mut out = BoundaryMismatch::default();
    for (e, data) in pr.assembly.edge_data.iter().enumerate() {
        let Some(d) = data else { continue };
        let w = &sp.edges[e].weights;
        for m in 0..3 {
            let t = sp.edge_traces(e, y.component(m));
            let (j, g) = (t.jump(), t.grad_jump());
            for q in 0..w.len() {
                out.value_sq += w[q] * (j[q] - d.phi[q][m]).powi(2);
                out.grad_sq += w[q] * ((g[q][0] - d.grad_phi[q][m][0]).powi(2) + (g[q][1] - d.grad_phi[q][m][1]).powi(2));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub frobenius: f64,
    pub trace: f64,
    pub grad_jump: f64,
    pub jump: f64,
    pub forcing: f64,
    pub total: f64,
}

/// `E_h(y)` evaluated by quadrature of the discrete Hessian and the skeleton jumps.
pub fn energy_eh(pr: &Problem, y: &DgField) -> Result<EnergyBreakdown> {
    let [fr, tr, gj, j] = bending_integrals(pr, true, y)?;
    let p = &pr.params;
    let forcing = -pr.load_vector().iter().zip(&y.coeffs).map(|(a, b)| a * b).sum::<f64>();
    let mut b = EnergyBreakdown {
        frobenius: 0.5 * p.frobenius_weight() * fr,
        trace: 0.5 * p.trace_weight() * tr,
        grad_jump: 0.5 * p.gamma1 * gj,
        jump: 0.5 * p.gamma0 * j,
        forcing,
        total: 0.0,
    };
    b.total = b.frobenius + b.trace + b.grad_jump + b.jump + b.forcing;
    Ok(b)
}

/// Per-element density of the volume part of `E_h` (Hessian terms only), divided by the element area.
pub fn bending_density(pr: &Problem, y: &DgField) -> Result<Vec<f64>> {
    pr.check(y)?;
    let sp = pr.space();
    let hy = pr.assembly.discrete_hessian(y)?;
    let (wf, wt) = (pr.params.frobenius_weight(), pr.params.trace_weight());
    Ok(sp
        .elements
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mut s = 0.0;
            for m in 0..3 {
                for (p, &w) in t.weights.iter().enumerate() {
                    let h = &hy.values[k][m][p];
                    let (a, b) = hessian_products(h, h, &pr.metric_data.s[k][p], true);
                    s += w * (wf * a + wt * b);
                }
            }
            0.5 * s / sp.mesh.areas[k]
        })
        .collect())
}

/// `½·form(y)` for an arbitrary bending form (quadrature route, boundary data included).
pub fn half_form_value(pr: &Problem, form: &BendingForm, y: &DgField) -> Result<f64> {
    let [fr, tr, gj, j] = bending_integrals(pr, form.use_metric, y)?;
    Ok(0.5 * (form.frob * fr + form.trace * tr + form.gamma1 * gj + form.gamma0 * j))
}

/// Directional derivative of `½·form` at `y` in direction `v`: data enters only `y`.
pub fn form_derivative(pr: &Problem, form: &BendingForm, y: &DgField, v: &DgField) -> Result<f64> {
    pr.check(y)?;
    pr.check(v)?;
    let sp = pr.space();
    let hy = pr.assembly.discrete_hessian(y)?;
    let hv = pr.assembly.discrete_hessian_homogeneous(v)?;
    let mut s = 0.0;
    for (k, t) in sp.elements.iter().enumerate() {
        for m in 0..3 {
            for (p, &w) in t.weights.iter().enumerate() {
                let (a, b) = hessian_products(&hy.values[k][m][p], &hv.values[k][m][p], &pr.metric_data.s[k][p], form.use_metric);
                s += w * (form.frob * a + form.trace * b);
            }
        }
    }
    let (gj, j) = data_jumps(pr, y, v, false);
    Ok(s + form.gamma1 * gj + form.gamma0 * j)
}

/// `a_h(y, v) = δE_h(y)(v) + (f, v)`.
pub fn form_ah(pr: &Problem, y: &DgField, v: &DgField) -> Result<f64> {
    form_derivative(pr, &BendingForm::main(&pr.params), y, v)
}

/// Matrix representation `form(y) = Σ_m (y_mᵀ K y_m + 2 lin_m·y_m) + constant`.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub k: CsrMatrix,
    pub lin: [Vec<f64>; 3],
    pub constant: f64,
}

impl QuadraticForm {
    pub fn value(&self, y: &[f64]) -> f64 {
        let nd = self.k.nrows;
        let mut s = self.constant;
        for m in 0..3 {
            let ym = &y[m * nd..(m + 1) * nd];
            s += self.k.bilinear(ym, ym) + 2.0 * ym.iter().zip(&self.lin[m]).map(|(a, b)| a * b).sum::<f64>();
        }
        s
    }

    /// Gradient of `½·form`: `K y_m + lin_m`, component-major.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let nd = self.k.nrows;
        let mut out = Vec::with_capacity(3 * nd);
        for m in 0..3 {
            let g = self.k.matvec(&y[m * nd..(m + 1) * nd]);
            out.extend(g.iter().zip(&self.lin[m]).map(|(a, b)| a + b));
        }
        out
    }

    /// Offsets `lin_m` concatenated component-major.
    pub fn offset(&self) -> Vec<f64> {
        self.lin.concat()
    }
}

/// Assembles a bending form as a sparse scalar matrix plus affine data terms.
pub fn assemble_form(pr: &Problem, form: &BendingForm) -> QuadraticForm {
    let sp = pr.space();
    let a = &pr.assembly;
    let nd = sp.ndofs();
    type Local = (Vec<usize>, DMatrix<f64>, [Vec<f64>; 3], f64);
    let locals: Vec<Local> = (0..sp.mesh.n_elements())
        .into_par_iter()
        .map(|k| {
            let ops = &a.elements[k];
            let t = &sp.elements[k];
            let nq = t.weights.len();
            let mut wh = DMatrix::zeros(4 * nq, ops.h.ncols());
            let mut wh0: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; 4 * nq]);
            for p in 0..nq {
                let w = weight_matrix(form, &pr.metric_data.s[k][p], &pr.metric_data.ginv[k][p]);
                for r in 0..4 {
                    for c in 0..4 {
                        let wrc = t.weights[p] * w[r][c];
                        if wrc == 0.0 {
                            continue;
                        }
                        for col in 0..ops.h.ncols() {
                            wh[(4 * p + r, col)] += wrc * ops.h[(4 * p + c, col)];
                        }
                        for m in 0..3 {
                            wh0[m][4 * p + r] += wrc * ops.h0[m][4 * p + c];
                        }
                    }
                }
            }
            let local = ops.h.transpose() * &wh;
            let lin: [Vec<f64>; 3] =
                std::array::from_fn(|m| (ops.h.transpose() * nalgebra::DVector::from_column_slice(&wh0[m])).as_slice().to_vec());
            let c: f64 = (0..3).map(|m| ops.h0[m].iter().zip(&wh0[m]).map(|(a, b)| a * b).sum::<f64>()).sum();
            (ops.patch_dofs(sp), local, lin, c)
        })
        .collect();
    let mut t = Vec::new();
    let mut lin: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; nd]);
    let mut constant = 0.0;
    for (dofs, local, l, c) in &locals {
        scatter(&mut t, dofs, dofs, local);
        for m in 0..3 {
            for (i, &d) in dofs.iter().enumerate() {
                lin[m][d] += l[m][i];
            }
        }
        constant += c;
    }
    let bend = CsrMatrix::from_triplets(nd, nd, t);
    let (j1, j0) = jump_grams(sp, a.skeleton);
    let k = bend.combine(1.0, &j1, form.gamma1).combine(1.0, &j0, form.gamma0);
    for (e, edge) in sp.mesh.edges.iter().enumerate() {
        let Some(d) = a.edge_data[e].as_ref() else { continue };
        let (dofs, r0, r1) = edge_jump_rows(sp, e);
        let h = edge.length;
        for (q, &w) in sp.edges[e].weights.iter().enumerate() {
            let (w1, w0) = (form.gamma1 * w / h, form.gamma0 * w / (h * h * h));
            for m in 0..3 {
                let (phi, gphi) = (d.phi[q][m], d.grad_phi[q][m]);
                for (i, &dof) in dofs.iter().enumerate() {
                    lin[m][dof] -= w1 * (gphi[0] * r1[0][(q, i)] + gphi[1] * r1[1][(q, i)]) + w0 * phi * r0[(q, i)];
                }
                constant += w1 * (gphi[0] * gphi[0] + gphi[1] * gphi[1]) + w0 * phi * phi;
            }
        }
    }
    QuadraticForm { k, lin, constant }
}

/// `∇yᵀ∇y − g` at the quadrature points of every element.
pub fn stretching_residual(pr: &Problem, y: &DgField) -> Vec<Vec<Sym2>> {
    let sp = pr.space();
    (0..sp.mesh.n_elements())
        .into_par_iter()
        .map(|k| {
            let t = &sp.elements[k];
            let grads: Vec<[Vec<f64>; 2]> =
                (0..3).map(|m| [dmat_vec(&t.grad[0], y.element_coeffs(m, k)), dmat_vec(&t.grad[1], y.element_coeffs(m, k))]).collect();
            (0..t.weights.len())
                .map(|p| {
                    let dot = |a: usize, b: usize| (0..3).map(|m| grads[m][a][p] * grads[m][b][p]).sum::<f64>();
                    let g = pr.metric_data.g[k][p];
                    Sym2::new(dot(0, 0) - g.a11, dot(0, 1) - g.a12, dot(1, 1) - g.a22)
                })
                .collect()
        })
        .collect()
}

/// `D_h(y) = Σ_T |∫_T ∇yᵀ∇y − g|` (Frobenius norm of the integrated matrix).
pub fn metric_defect(pr: &Problem, y: &DgField) -> Result<f64> {
    pr.check(y)?;
    let r = stretching_residual(pr, y);
    Ok(pr
        .space()
        .elements
        .iter()
        .zip(&r)
        .map(|(t, rk)| {
            let mut s = Sym2::default();
            for (w, x) in t.weights.iter().zip(rk) {
                s.a11 += w * x.a11;
                s.a12 += w * x.a12;
                s.a22 += w * x.a22;
            }
            s.frobenius()
        })
        .sum())
}

/// Elementwise defect contributions `|∫_T ∇yᵀ∇y − g| / |T|`.
pub fn defect_density(pr: &Problem, y: &DgField) -> Vec<f64> {
    let r = stretching_residual(pr, y);
    pr.space()
        .elements
        .iter()
        .zip(&r)
        .enumerate()
        .map(|(k, (t, rk))| {
            let mut s = Sym2::default();
            for (w, x) in t.weights.iter().zip(rk) {
                s.a11 += w * x.a11;
                s.a12 += w * x.a12;
                s.a22 += w * x.a22;
            }
            s.frobenius() / pr.space().mesh.areas[k]
        })
        .collect()
}

/// `‖∇yᵀ∇y − g‖_{L¹}` (pointwise Frobenius norm).
pub fn stretching_l1(pr: &Problem, y: &DgField) -> f64 {
    let r = stretching_residual(pr, y);
    pr.space().elements.iter().zip(&r).map(|(t, rk)| t.weights.iter().zip(rk).map(|(w, x)| w * x.frobenius()).sum::<f64>()).sum()
}

/// `E_h^s(y) = ½∫|∇yᵀ∇y − g|²`.
pub fn energy_stretching(pr: &Problem, y: &DgField) -> Result<f64> {
    pr.check(y)?;
    let r = stretching_residual(pr, y);
    Ok(0.5
        * pr.space().elements.iter().zip(&r).map(|(t, rk)| t.weights.iter().zip(rk).map(|(w, x)| w * x.frobenius().powi(2)).sum::<f64>()).sum::<f64>())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessEnergies {
    pub e_s: f64,
    pub e_b: f64,
    pub e_p: f64,
}

pub fn energy_preprocess(pr: &Problem, sigma: f64, y: &DgField) -> Result<PreprocessEnergies> {
    let e_s = energy_stretching(pr, y)?;
    let e_b = half_form_value(pr, &BendingForm::preprocess(), y)?;
    Ok(PreprocessEnergies { e_s, e_b, e_p: e_s + sigma * e_b })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessForms {
    pub a_s: f64,
    pub a_b: f64,
}

/// `a_s(anchor; u, v) = ∫(∇vᵀ∇u + ∇uᵀ∇v) : (∇anchorᵀ∇anchor − g)` by quadrature.
pub fn form_as(pr: &Problem, anchor: &DgField, u: &DgField, v: &DgField) -> Result<f64> {
    pr.check(anchor)?;
    pr.check(u)?;
    pr.check(v)?;
    let sp = pr.space();
    let r = stretching_residual(pr, anchor);
    let mut s = 0.0;
    for (k, t) in sp.elements.iter().enumerate() {
        for m in 0..3 {
            let gu = [dmat_vec(&t.grad[0], u.element_coeffs(m, k)), dmat_vec(&t.grad[1], u.element_coeffs(m, k))];
            let gv = [dmat_vec(&t.grad[0], v.element_coeffs(m, k)), dmat_vec(&t.grad[1], v.element_coeffs(m, k))];
            for (p, &w) in t.weights.iter().enumerate() {
                let rr = r[k][p].to_array();
                for i in 0..2 {
                    for j in 0..2 {
                        s += w * rr[i][j] * (gv[i][p] * gu[j][p] + gu[i][p] * gv[j][p]);
                    }
                }
            }
        }
    }
    Ok(s)
}

/// `a_s` of the first argument and `a_b` (derivative of `E_h^b` at `u` in direction `v`).
pub fn forms_preprocess(pr: &Problem, anchor: &DgField, u: &DgField, v: &DgField) -> Result<PreprocessForms> {
    Ok(PreprocessForms { a_s: form_as(pr, anchor, u, v)?, a_b: form_derivative(pr, &BendingForm::preprocess(), u, v)? })
}

/// Scalar matrix of `a_s(anchor; ·, ·)` for one component: `2∫ R_ij ∂_iψ_a ∂_jψ_b`.
pub fn stretching_matrix(pr: &Problem, anchor: &DgField) -> CsrMatrix {
    let sp = pr.space();
    let r = stretching_residual(pr, anchor);
    let locals: Vec<DMatrix<f64>> = (0..sp.mesh.n_elements())
        .into_par_iter()
        .map(|k| {
            let t = &sp.elements[k];
            let n = sp.nloc();
            let mut m = DMatrix::zeros(n, n);
            for (p, &w) in t.weights.iter().enumerate() {
                let rr = r[k][p].to_array();
                for a in 0..n {
                    let ga = [t.grad[0][(p, a)], t.grad[1][(p, a)]];
                    let ra = [rr[0][0] * ga[0] + rr[1][0] * ga[1], rr[0][1] * ga[0] + rr[1][1] * ga[1]];
                    for b in 0..n {
                        m[(a, b)] += 2.0 * w * (ra[0] * t.grad[0][(p, b)] + ra[1] * t.grad[1][(p, b)]);
                    }
                }
            }
            m
        })
        .collect();
    let mut t = Vec::new();
    for (k, m) in locals.iter().enumerate() {
        let d: Vec<usize> = sp.element_dofs(k).collect();
        scatter(&mut t, &d, &d, m);
    }
    CsrMatrix::from_triplets(sp.ndofs(), sp.ndofs(), t)
}

/// Gradient of `E_h^s` at `y`: `a_s(y; y, ψ)` for every scalar test function, component-major.
pub fn stretching_gradient(pr: &Problem, y: &DgField) -> Vec<f64> {
    let s = stretching_matrix(pr, y);
    let nd = pr.space().ndofs();
    (0..3).flat_map(|m| s.matvec(&y.coeffs[m * nd..(m + 1) * nd])).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub ratio_min: f64,
    pub ratio_max: f64,
}

/// `E_h(y)/|y|²_{H²_h}` over rough random fields (no forcing, homogeneous jumps).
pub fn coercivity_check(pr: &Problem, samples: usize, seed: u64) -> Result<CoercivityReport> {
    let form = BendingForm::main(&pr.params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..samples.max(1) {
        let y = random_rough_field(pr.space(), 3, &mut rng);
        let e = 0.5 * form_derivative_homogeneous(pr, &form, &y)?;
        let n = h2_inner_on(&y, &y, H2Mode::Semi, pr.skeleton())?;
        lo = lo.min(e / n);
        hi = hi.max(e / n);
    }
    Ok(CoercivityReport { ratio_min: lo, ratio_max: hi })
}

fn form_derivative_homogeneous(pr: &Problem, form: &BendingForm, y: &DgField) -> Result<f64> {
    let sp = pr.space();
    let hy = pr.assembly.discrete_hessian_homogeneous(y)?;
    let mut s = 0.0;
    for (k, t) in sp.elements.iter().enumerate() {
        for m in 0..3 {
            for (p, &w) in t.weights.iter().enumerate() {
                let h = &hy.values[k][m][p];
                let (a, b) = hessian_products(h, h, &pr.metric_data.s[k][p], form.use_metric);
                s += w * (form.frob * a + form.trace * b);
            }
        }
    }
    let sk = pr.skeleton();
    s += form.gamma1 * crate::dg::forms::grad_jump_sq(y, 1, sk) + form.gamma0 * crate::dg::forms::jump_sq(y, 3, sk);
    Ok(s)
}

/// `(‖∇_h y‖², √2(D_h(y) + ‖g‖_{L¹}))`; the first never exceeds the second.
pub fn gradient_estimate_check(pr: &Problem, y: &DgField) -> Result<(f64, f64)> {
    let lhs = crate::dg::forms::broken_gradient_sq(y);
    let rhs = 2f64.sqrt() * (metric_defect(pr, y)? + pr.metric_data.l1_norm);
    Ok((lhs, rhs))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousEnergyReport {
    pub e_via_ii: f64,
    pub e_via_hessian: f64,
    /// Pointwise `Σ_m|g^{-1/2}D²y_m g^{-1/2}|² − |g^{-1/2}II g^{-1/2}|²`: minimum and max magnitude.
    pub f1_min: f64,
    pub f1_max_abs: f64,
    pub admissibility_violation: f64,
}

/// Evaluates the continuous bending energy of an immersion via its second fundamental form and via its Hessian.
pub fn continuous_energy_check(space: &DgSpace, y: &Immersion, g: &MetricField, mu: f64, lambda: f64) -> Result<ContinuousEnergyReport> {
    let (wf, wt) = (mu / 12.0, mu * lambda / (12.0 * (2.0 * mu + lambda)));
    let mut rep = ContinuousEnergyReport { e_via_ii: 0.0, e_via_hessian: 0.0, f1_min: f64::INFINITY, f1_max_abs: 0.0, admissibility_violation: 0.0 };
    for t in &space.elements {
        for (&x, &w) in t.points.iter().zip(&t.weights) {
            let gx = g.eval_checked(x)?;
            let a = y.first_form(x);
            let viol = Sym2::new(a.a11 - gx.a11, a.a12 - gx.a12, a.a22 - gx.a22).frobenius();
            rep.admissibility_violation = rep.admissibility_violation.max(viol);
            let s = gx.inv_sqrt();
            let ii = y.second_form(x);
            let iiv = [ii.a11, ii.a12, ii.a12, ii.a22];
            let (fi, ti) = hessian_products(&iiv, &iiv, &s, true);
            let hs = (y.hessian)(x);
            let (mut fh, mut th) = (0.0, 0.0);
            for h in hs.iter() {
                let hv = [h[0], h[1], h[1], h[2]];
                let (a, b) = hessian_products(&hv, &hv, &s, true);
                fh += a;
                th += b;
            }
            rep.e_via_ii += w * (wf * fi + wt * ti);
            rep.e_via_hessian += w * (wf * fh + wt * th);
            let f1 = fh - fi;
            rep.f1_min = rep.f1_min.min(f1);
            rep.f1_max_abs = rep.f1_max_abs.max(f1.abs());
        }
    }
    if rep.admissibility_violation > 1e-8 {
        return Err(LdgError::NotAdmissible { violation: rep.admissibility_violation });
    }
    Ok(rep)
}

/// `b_h(anchor; v, μ) = Σ_T ∫_T μ_T : (∇vᵀ∇anchor + ∇anchorᵀ∇v)` with one constant symmetric `μ_T` per element.
pub fn form_bh(anchor: &DgField, v: &DgField, mult: &[[[f64; 2]; 2]]) -> Result<f64> {
    anchor.check_compatible(v)?;
    let sp = &anchor.space;
    if mult.len() != sp.mesh.n_elements() {
        return Err(LdgError::SpaceMismatch(format!("expected {} multipliers, got {}", sp.mesh.n_elements(), mult.len())));
    }
    if let Some(k) = mult.iter().position(|m| (m[0][1] - m[1][0]).abs() > 1e-14 * (1.0 + m[0][1].abs())) {
        return Err(LdgError::Parameter(format!("multiplier on element {k} is not symmetric")));
    }
    let mut s = 0.0;
    for (k, t) in sp.elements.iter().enumerate() {
        let mu = mult[k];
        for m in 0..anchor.ncomp {
            let gy = [dmat_vec(&t.grad[0], anchor.element_coeffs(m, k)), dmat_vec(&t.grad[1], anchor.element_coeffs(m, k))];
            let gv = [dmat_vec(&t.grad[0], v.element_coeffs(m, k)), dmat_vec(&t.grad[1], v.element_coeffs(m, k))];
            for (p, &w) in t.weights.iter().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        s += w * mu[i][j] * (gv[i][p] * gy[j][p] + gy[i][p] * gv[j][p]);
                    }
                }
            }
        }
    }
    Ok(s)
}
