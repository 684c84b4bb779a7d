//! Broken polynomial spaces, fields, and their tabulation on quadrature points.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::basis::{local_dim, ReferenceBasis};
use super::quadrature::{edge_rule, element_rule, Rule2d};
use crate::error::{LdgError, Result};
use crate::mesh::{reference_edge_point, BoundaryLabel, Edge, Mesh};

/// Basis data of one element at its quadrature points.
#[derive(Clone, Debug)]
pub struct ElementTab {
    pub points: Vec<[f64; 2]>,
    /// Quadrature weights times |det DF_K|.
    pub weights: Vec<f64>,
    /// `nq × nloc`.
    pub val: DMatrix<f64>,
    pub grad: [DMatrix<f64>; 2],
    /// Components 11, 12, 22 of the physical Hessian.
    pub hess: [DMatrix<f64>; 3],
}

/// Traces of one adjacent element's basis at the edge quadrature points.
#[derive(Clone, Debug)]
pub struct SideTab {
    pub element: usize,
    pub val: DMatrix<f64>,
    pub grad: [DMatrix<f64>; 2],
}

#[derive(Clone, Debug)]
pub struct EdgeTab {
    pub points: Vec<[f64; 2]>,
    /// Quadrature weights times the edge length.
    pub weights: Vec<f64>,
    pub minus: SideTab,
    pub plus: Option<SideTab>,
}

/// Edges entering the skeleton sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Skeleton {
    /// Interior edges only.
    Interior,
    /// Interior edges plus Dirichlet-labeled boundary edges.
    Active,
}

impl Skeleton {
    pub fn includes(self, e: &Edge) -> bool {
        match self {
            Skeleton::Interior => !e.is_boundary(),
            Skeleton::Active => !e.is_boundary() || e.label == Some(BoundaryLabel::Dirichlet),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureOptions {
    pub element_degree: usize,
    pub edge_degree: usize,
}

impl QuadratureOptions {
    pub fn for_degree(k: usize) -> Self {
        QuadratureOptions { element_degree: 2 * k + 2, edge_degree: 2 * k + 1 }
    }
}

#[derive(Debug)]
pub struct DgSpace {
    pub mesh: Arc<Mesh>,
    pub degree: usize,
    pub basis: ReferenceBasis,
    pub quadrature: QuadratureOptions,
    pub rule: Rule2d,
    pub edge_nodes: Vec<f64>,
    pub edge_weights: Vec<f64>,
    pub elements: Vec<ElementTab>,
    pub edges: Vec<EdgeTab>,
}

pub fn dmat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.ncols(), x.len());
    let (r, c) = m.shape();
    let mut y = vec![0.0; r];
    for j in 0..c {
        let xj = x[j];
        if xj != 0.0 {
            for i in 0..r {
                y[i] += m[(i, j)] * xj;
            }
        }
    }
    y
}

impl DgSpace {
    /// Host space of degree `k ∈ [2, 4]` with the default quadrature.
    pub fn new(mesh: Arc<Mesh>, k: usize) -> Result<Arc<DgSpace>> {
        Self::with_quadrature(mesh, k, QuadratureOptions::for_degree(k))
    }

    pub fn with_quadrature(mesh: Arc<Mesh>, k: usize, q: QuadratureOptions) -> Result<Arc<DgSpace>> {
        if !(2..=4).contains(&k) {
            return Err(LdgError::Unsupported(format!("degree {k}; supported degrees are 2, 3, 4")));
        }
        if q.element_degree < 2 * k || q.edge_degree < 2 * k + 1 {
            return Err(LdgError::Parameter("quadrature must be exact to degree 2k on elements and 2k+1 on edges".into()));
        }
        Ok(Arc::new(Self::build(mesh, k, q)))
    }

    /// Auxiliary space of any degree in `[0, 4]` sharing a host quadrature (used for liftings).
    pub fn auxiliary(mesh: Arc<Mesh>, l: usize, q: QuadratureOptions) -> Result<Arc<DgSpace>> {
        if l > 4 {
            return Err(LdgError::Unsupported(format!("auxiliary degree {l} exceeds 4")));
        }
        Ok(Arc::new(Self::build(mesh, l, q)))
    }

    fn build(mesh: Arc<Mesh>, k: usize, q: QuadratureOptions) -> DgSpace {
        let basis = ReferenceBasis::new(mesh.kind, k);
        let rule = element_rule(mesh.kind, q.element_degree);
        let (edge_nodes, edge_weights) = edge_rule(q.edge_degree);
        let nloc = basis.dim();
        let elements: Vec<ElementTab> = (0..mesh.n_elements())
            .into_par_iter()
            .map(|k| {
                let map = mesh.element_map(k);
                let nq = rule.len();
                let mut t = ElementTab {
                    points: Vec::with_capacity(nq),
                    weights: Vec::with_capacity(nq),
                    val: DMatrix::zeros(nq, nloc),
                    grad: [DMatrix::zeros(nq, nloc), DMatrix::zeros(nq, nloc)],
                    hess: [DMatrix::zeros(nq, nloc), DMatrix::zeros(nq, nloc), DMatrix::zeros(nq, nloc)],
                };
                for (p, (&xi, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                    t.points.push(map.map(xi));
                    t.weights.push(w * map.det(xi).abs());
                    let ph = basis.tabulate_physical(&map, xi);
                    for i in 0..nloc {
                        t.val[(p, i)] = ph.val[i];
                        t.grad[0][(p, i)] = ph.grad[i][0];
                        t.grad[1][(p, i)] = ph.grad[i][1];
                        for c in 0..3 {
                            t.hess[c][(p, i)] = ph.hess[i][c];
                        }
                    }
                }
                t
            })
            .collect();
        let side = |element: usize, local: usize, reversed: bool| {
            let map = mesh.element_map(element);
            let nq = edge_nodes.len();
            let mut s = SideTab {
                element,
                val: DMatrix::zeros(nq, nloc),
                grad: [DMatrix::zeros(nq, nloc), DMatrix::zeros(nq, nloc)],
            };
            for (p, &sp) in edge_nodes.iter().enumerate() {
                let t = if reversed { 1.0 - sp } else { sp };
                let xi = reference_edge_point(mesh.kind, local, t);
                let ph = basis.tabulate_physical(&map, xi);
                for i in 0..nloc {
                    s.val[(p, i)] = ph.val[i];
                    s.grad[0][(p, i)] = ph.grad[i][0];
                    s.grad[1][(p, i)] = ph.grad[i][1];
                }
            }
            s
        };
        let edges: Vec<EdgeTab> = mesh
            .edges
            .par_iter()
            .map(|e| EdgeTab {
                points: edge_nodes.iter().map(|&s| e.point(&mesh, s)).collect(),
                weights: edge_weights.iter().map(|w| w * e.length).collect(),
                minus: side(e.minus, e.minus_local, false),
                plus: e.plus.map(|(p, lp)| side(p, lp, true)),
            })
            .collect();
        DgSpace { mesh, degree: k, basis, quadrature: q, rule, edge_nodes, edge_weights, elements, edges }
    }

    pub fn nloc(&self) -> usize {
        self.basis.dim()
    }

    pub fn ndofs(&self) -> usize {
        self.mesh.n_elements() * self.nloc()
    }

    pub fn dof(&self, element: usize, i: usize) -> usize {
        element * self.nloc() + i
    }

    pub fn element_dofs(&self, element: usize) -> std::ops::Range<usize> {
        let n = self.nloc();
        element * n..(element + 1) * n
    }

    pub fn local_dim(&self) -> usize {
        local_dim(self.mesh.kind, self.degree)
    }

    /// Dofs of each element, the natural ordering groups for scalar systems.
    pub fn element_groups(&self, ncomp: usize) -> Vec<Vec<usize>> {
        let nd = self.ndofs();
        (0..self.mesh.n_elements())
            .map(|k| (0..ncomp).flat_map(|c| self.element_dofs(k).map(move |d| c * nd + d)).collect())
            .collect()
    }

    /// Element-wise local mass matrix.
    pub fn local_mass(&self, k: usize) -> DMatrix<f64> {
        let t = &self.elements[k];
        let mut m = DMatrix::zeros(self.nloc(), self.nloc());
        for (p, &w) in t.weights.iter().enumerate() {
            for i in 0..self.nloc() {
                let wi = w * t.val[(p, i)];
                for j in 0..self.nloc() {
                    m[(i, j)] += wi * t.val[(p, j)];
                }
            }
        }
        m
    }

    pub fn same(a: &Arc<DgSpace>, b: &Arc<DgSpace>) -> bool {
        Arc::ptr_eq(a, b)
    }
}

/// Point evaluation of a field inside one element (physical derivatives).
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// `[point][component]`.
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<[f64; 2]>>,
    pub hessians: Vec<Vec<[[f64; 2]; 2]>>,
}

/// Piecewise polynomial with `ncomp` components; coefficients are stored component-major.
#[derive(Clone, Debug)]
pub struct DgField {
    pub space: Arc<DgSpace>,
    pub ncomp: usize,
    pub coeffs: Vec<f64>,
}

impl DgField {
    pub fn zeros(space: &Arc<DgSpace>, ncomp: usize) -> DgField {
        DgField { space: space.clone(), ncomp, coeffs: vec![0.0; ncomp * space.ndofs()] }
    }

    pub fn from_coeffs(space: &Arc<DgSpace>, ncomp: usize, coeffs: Vec<f64>) -> Result<DgField> {
        if coeffs.len() != ncomp * space.ndofs() {
            return Err(LdgError::SpaceMismatch(format!(
                "coefficient length {} != {} x {}",
                coeffs.len(),
                ncomp,
                space.ndofs()
            )));
        }
        Ok(DgField { space: space.clone(), ncomp, coeffs })
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.space.ndofs();
        &self.coeffs[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.space.ndofs();
        &mut self.coeffs[c * n..(c + 1) * n]
    }

    pub fn element_coeffs(&self, c: usize, k: usize) -> &[f64] {
        &self.component(c)[self.space.element_dofs(k)]
    }

    pub fn check_compatible(&self, other: &DgField) -> Result<()> {
        if !DgSpace::same(&self.space, &other.space) {
            return Err(LdgError::SpaceMismatch("fields live on different spaces".into()));
        }
        if self.ncomp != other.ncomp {
            return Err(LdgError::SpaceMismatch(format!("component counts {} and {}", self.ncomp, other.ncomp)));
        }
        Ok(())
    }

    /// `self + alpha·other`.
    pub fn axpy(&self, alpha: f64, other: &DgField) -> Result<DgField> {
        self.check_compatible(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + alpha * b).collect();
        Ok(DgField { space: self.space.clone(), ncomp: self.ncomp, coeffs })
    }

    pub fn scaled(&self, alpha: f64) -> DgField {
        DgField { space: self.space.clone(), ncomp: self.ncomp, coeffs: self.coeffs.iter().map(|v| alpha * v).collect() }
    }

    pub fn evaluate(&self, element: usize, ref_points: &[[f64; 2]]) -> Result<Evaluation> {
        let mesh = &self.space.mesh;
        if element >= mesh.n_elements() {
            return Err(LdgError::OutOfRange { index: element, len: mesh.n_elements() });
        }
        let map = mesh.element_map(element);
        let mut ev = Evaluation { values: vec![], gradients: vec![], hessians: vec![] };
        for &xi in ref_points {
            let t = self.space.basis.tabulate_physical(&map, xi);
            let mut v = vec![0.0; self.ncomp];
            let mut g = vec![[0.0; 2]; self.ncomp];
            let mut h = vec![[[0.0; 2]; 2]; self.ncomp];
            for c in 0..self.ncomp {
                let co = self.element_coeffs(c, element);
                for i in 0..co.len() {
                    v[c] += co[i] * t.val[i];
                    g[c][0] += co[i] * t.grad[i][0];
                    g[c][1] += co[i] * t.grad[i][1];
                    h[c][0][0] += co[i] * t.hess[i][0];
                    h[c][0][1] += co[i] * t.hess[i][1];
                    h[c][1][1] += co[i] * t.hess[i][2];
                }
                h[c][1][0] = h[c][0][1];
            }
            ev.values.push(v);
            ev.gradients.push(g);
            ev.hessians.push(h);
        }
        Ok(ev)
    }

    /// `∫_Ω y_c` for each component.
    pub fn integral(&self) -> Vec<f64> {
        let sp = &self.space;
        (0..self.ncomp)
            .map(|c| {
                (0..sp.mesh.n_elements())
                    .map(|k| {
                        let t = &sp.elements[k];
                        let v = dmat_vec(&t.val, self.element_coeffs(c, k));
                        v.iter().zip(&t.weights).map(|(a, w)| a * w).sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    /// `‖y − f‖_{L²}` over all components.
    pub fn l2_error(&self, f: &dyn Fn([f64; 2]) -> Vec<f64>) -> f64 {
        let sp = &self.space;
        let mut s = 0.0;
        for k in 0..sp.mesh.n_elements() {
            let t = &sp.elements[k];
            let vals: Vec<Vec<f64>> = (0..self.ncomp).map(|c| dmat_vec(&t.val, self.element_coeffs(c, k))).collect();
            for (p, &x) in t.points.iter().enumerate() {
                let fx = f(x);
                for c in 0..self.ncomp {
                    s += t.weights[p] * (vals[c][p] - fx[c]).powi(2);
                }
            }
        }
        s.sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_error(&|_| vec![0.0; self.ncomp])
    }
}

/// Nodal interpolant `ℐ_h` of a closure with `ncomp` outputs.
pub fn interpolate(space: &Arc<DgSpace>, ncomp: usize, f: &(dyn Fn([f64; 2]) -> Vec<f64> + Sync)) -> DgField {
    let nd = space.ndofs();
    let nloc = space.nloc();
    let per: Vec<Vec<Vec<f64>>> = (0..space.mesh.n_elements())
        .into_par_iter()
        .map(|k| {
            let map = space.mesh.element_map(k);
            space.basis.nodes.iter().map(|&xi| f(map.map(xi))).collect()
        })
        .collect();
    let mut coeffs = vec![0.0; ncomp * nd];
    for (k, nodes) in per.into_iter().enumerate() {
        for (i, v) in nodes.into_iter().enumerate() {
            for c in 0..ncomp {
                coeffs[c * nd + k * nloc + i] = v[c];
            }
        }
    }
    DgField { space: space.clone(), ncomp, coeffs }
}

pub fn interpolate_scalar(space: &Arc<DgSpace>, f: impl Fn([f64; 2]) -> f64 + Sync) -> DgField {
    interpolate(space, 1, &|x| vec![f(x)])
}

pub fn interpolate_vec3(space: &Arc<DgSpace>, f: impl Fn([f64; 2]) -> [f64; 3] + Sync) -> DgField {
    interpolate(space, 3, &|x| f(x).to_vec())
}

/// Values and gradients of one scalar coefficient vector on both sides of an edge.
#[derive(Clone, Debug)]
pub struct EdgeTraceData {
    pub v_minus: Vec<f64>,
    pub v_plus: Option<Vec<f64>>,
    pub grad_minus: Vec<[f64; 2]>,
    pub grad_plus: Option<Vec<[f64; 2]>>,
}

impl EdgeTraceData {
    /// `v⁻ − v⁺` (interior) or `v⁻` (boundary, homogeneous data).
    pub fn jump(&self) -> Vec<f64> {
        match &self.v_plus {
            Some(p) => self.v_minus.iter().zip(p).map(|(a, b)| a - b).collect(),
            None => self.v_minus.clone(),
        }
    }

    pub fn grad_jump(&self) -> Vec<[f64; 2]> {
        match &self.grad_plus {
            Some(p) => self.grad_minus.iter().zip(p).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect(),
            None => self.grad_minus.clone(),
        }
    }

    /// `(v⁻ + v⁺)/2` (interior) or `v⁻` (boundary).
    pub fn average(&self) -> Vec<f64> {
        match &self.v_plus {
            Some(p) => self.v_minus.iter().zip(p).map(|(a, b)| 0.5 * (a + b)).collect(),
            None => self.v_minus.clone(),
        }
    }
}

impl DgSpace {
    pub fn edge_traces(&self, e: usize, coeffs: &[f64]) -> EdgeTraceData {
        let t = &self.edges[e];
        let side = |s: &SideTab| {
            let c = &coeffs[self.element_dofs(s.element)];
            let v = dmat_vec(&s.val, c);
            let g0 = dmat_vec(&s.grad[0], c);
            let g1 = dmat_vec(&s.grad[1], c);
            (v, g0.into_iter().zip(g1).map(|(a, b)| [a, b]).collect::<Vec<_>>())
        };
        let (vm, gm) = side(&t.minus);
        let (vp, gp) = match &t.plus {
            Some(p) => {
                let (v, g) = side(p);
                (Some(v), Some(g))
            }
            None => (None, None),
        };
        EdgeTraceData { v_minus: vm, v_plus: vp, grad_minus: gm, grad_plus: gp }
    }
}
