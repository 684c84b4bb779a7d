//! Nodal Lagrange bases with equispaced nodes on the reference elements.

use nalgebra::DMatrix;

use crate::mesh::{ElementKind, ElementMap};

#[derive(Clone, Debug)]
pub struct ReferenceBasis {
    pub kind: ElementKind,
    pub degree: usize,
    pub nodes: Vec<[f64; 2]>,
    exps: Vec<(i32, i32)>,
    /// Column `i` holds the monomial coefficients of basis function `i`.
    coef: DMatrix<f64>,
}

/// Values and reference derivatives of all basis functions at one point.
#[derive(Clone, Debug)]
pub struct RefTab {
    pub val: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    /// `[∂ξξ, ∂ξη, ∂ηη]`.
    pub hess: Vec<[f64; 3]>,
}

/// Values and physical derivatives at one point.
#[derive(Clone, Debug)]
pub struct PhysTab {
    pub val: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    /// `[∂11, ∂12, ∂22]`.
    pub hess: Vec<[f64; 3]>,
}

fn pw(x: f64, e: i32) -> f64 {
    if e < 0 {
        0.0
    } else {
        x.powi(e)
    }
}

pub fn local_dim(kind: ElementKind, k: usize) -> usize {
    match kind {
        ElementKind::Triangle => (k + 1) * (k + 2) / 2,
        ElementKind::Quad => (k + 1) * (k + 1),
    }
}

impl ReferenceBasis {
    pub fn new(kind: ElementKind, degree: usize) -> Self {
        let k = degree as i32;
        let mut nodes = Vec::new();
        let mut exps = Vec::new();
        match kind {
            ElementKind::Triangle => {
                for j in 0..=k {
                    for i in 0..=(k - j) {
                        exps.push((i, j));
                        nodes.push(if k == 0 { [1.0 / 3.0, 1.0 / 3.0] } else { [i as f64 / k as f64, j as f64 / k as f64] });
                    }
                }
            }
            ElementKind::Quad => {
                for j in 0..=k {
                    for i in 0..=k {
                        exps.push((i, j));
                        nodes.push(if k == 0 { [0.5, 0.5] } else { [i as f64 / k as f64, j as f64 / k as f64] });
                    }
                }
            }
        }
        let n = nodes.len();
        let v = DMatrix::from_fn(n, n, |r, c| pw(nodes[r][0], exps[c].0) * pw(nodes[r][1], exps[c].1));
        let coef = v.try_inverse().expect("Vandermonde matrix of equispaced nodes is invertible");
        ReferenceBasis { kind, degree, nodes, exps, coef }
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn tabulate(&self, xi: [f64; 2]) -> RefTab {
        let n = self.dim();
        let (s, t) = (xi[0], xi[1]);
        let mut m = vec![0.0; n];
        let mut ms = vec![0.0; n];
        let mut mt = vec![0.0; n];
        let mut mss = vec![0.0; n];
        let mut mst = vec![0.0; n];
        let mut mtt = vec![0.0; n];
        for (j, &(a, b)) in self.exps.iter().enumerate() {
            let (af, bf) = (a as f64, b as f64);
            m[j] = pw(s, a) * pw(t, b);
            ms[j] = af * pw(s, a - 1) * pw(t, b);
            mt[j] = bf * pw(s, a) * pw(t, b - 1);
            mss[j] = af * (af - 1.0) * pw(s, a - 2) * pw(t, b);
            mst[j] = af * bf * pw(s, a - 1) * pw(t, b - 1);
            mtt[j] = bf * (bf - 1.0) * pw(s, a) * pw(t, b - 2);
        }
        let mut tab = RefTab { val: vec![0.0; n], grad: vec![[0.0; 2]; n], hess: vec![[0.0; 3]; n] };
        for i in 0..n {
            let c = self.coef.column(i);
            let d = |v: &[f64]| v.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
            tab.val[i] = d(&m);
            tab.grad[i] = [d(&ms), d(&mt)];
            tab.hess[i] = [d(&mss), d(&mst), d(&mtt)];
        }
        tab
    }

    /// Physical values, gradients, and Hessians through the element map, including the
    /// second-derivative correction of bi-affine maps.
    pub fn tabulate_physical(&self, map: &ElementMap, xi: [f64; 2]) -> PhysTab {
        let r = self.tabulate(xi);
        let j = map.jacobian(xi);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // K = DF⁻¹, so ∇_x v = Kᵀ ∇_ξ v̂
        let kinv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        let dd = map.mixed_second_derivative();
        let n = self.dim();
        let mut out = PhysTab { val: r.val.clone(), grad: vec![[0.0; 2]; n], hess: vec![[0.0; 3]; n] };
        for i in 0..n {
            let g = r.grad[i];
            let gx = [kinv[0][0] * g[0] + kinv[1][0] * g[1], kinv[0][1] * g[0] + kinv[1][1] * g[1]];
            out.grad[i] = gx;
            // D²_ξ v̂ − Σ_a ∂_{x_a} v · D²_ξ F_a, where D²_ξ F_a = [[0, d_a], [d_a, 0]]
            let corr = gx[0] * dd[0] + gx[1] * dd[1];
            let h = [[r.hess[i][0], r.hess[i][1] - corr], [r.hess[i][1] - corr, r.hess[i][2]]];
            // D²_x v = Kᵀ h K
            let mut hx = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    let mut s = 0.0;
                    for p in 0..2 {
                        for q in 0..2 {
                            s += kinv[p][a] * h[p][q] * kinv[q][b];
                        }
                    }
                    hx[a][b] = s;
                }
            }
            out.hess[i] = [hx[0][0], 0.5 * (hx[0][1] + hx[1][0]), hx[1][1]];
        }
        out
    }
}
