//! Conforming triangulations and quadrangulations with edge structure.
//!
//! Elements are stored counterclockwise. Every edge carries a fixed unit normal
//! pointing from its minus element (smaller index) into its plus element; on the
//! boundary the normal is outward and there is no plus element.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LdgError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementKind {
    Triangle,
    Quad,
}

impl ElementKind {
    pub fn n_vertices(self) -> usize {
        match self {
            ElementKind::Triangle => 3,
            ElementKind::Quad => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Triangle => "tri",
            ElementKind::Quad => "quad",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryLabel {
    Free,
    Dirichlet,
}

/// Sides of an axis-aligned rectangle, used for labeling structured meshes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoints, oriented as the minus element traverses them.
    pub vertices: [usize; 2],
    pub minus: usize,
    /// Local edge index inside the minus element.
    pub minus_local: usize,
    /// Plus element and its local edge index; `None` on the boundary.
    pub plus: Option<(usize, usize)>,
    pub normal: [f64; 2],
    pub length: f64,
    /// Boundary label; `None` for interior edges.
    pub label: Option<BoundaryLabel>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.plus.is_none()
    }

    pub fn midpoint(&self, mesh: &Mesh) -> [f64; 2] {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Physical point at parameter `s` in [0, 1] along the stored orientation.
    pub fn point(&self, mesh: &Mesh, s: f64) -> [f64; 2] {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub kind: ElementKind,
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<Vec<usize>>,
    pub edges: Vec<Edge>,
    /// Global edge index of each local edge, per element.
    pub element_edges: Vec<Vec<usize>>,
    /// Element diameters h_K.
    pub diameters: Vec<f64>,
    pub areas: Vec<f64>,
}

/// Affine (triangle) or bi-affine (quad) map from the reference element.
///
/// The reference triangle has vertices (0,0), (1,0), (0,1); the reference square is [0,1]².
#[derive(Clone, Copy, Debug)]
pub struct ElementMap {
    pub kind: ElementKind,
    pub x: [[f64; 2]; 4],
}

impl ElementMap {
    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        let [s, t] = xi;
        let x = &self.x;
        match self.kind {
            ElementKind::Triangle => [
                x[0][0] + (x[1][0] - x[0][0]) * s + (x[2][0] - x[0][0]) * t,
                x[0][1] + (x[1][1] - x[0][1]) * s + (x[2][1] - x[0][1]) * t,
            ],
            ElementKind::Quad => {
                let n = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
                let mut p = [0.0; 2];
                for (i, ni) in n.iter().enumerate() {
                    p[0] += ni * x[i][0];
                    p[1] += ni * x[i][1];
                }
                p
            }
        }
    }

    /// DF_K with `j[a][b] = ∂x_a/∂ξ_b`.
    pub fn jacobian(&self, xi: [f64; 2]) -> [[f64; 2]; 2] {
        let [s, t] = xi;
        let x = &self.x;
        match self.kind {
            ElementKind::Triangle => [
                [x[1][0] - x[0][0], x[2][0] - x[0][0]],
                [x[1][1] - x[0][1], x[2][1] - x[0][1]],
            ],
            ElementKind::Quad => {
                let mut j = [[0.0; 2]; 2];
                for a in 0..2 {
                    j[a][0] = (x[1][a] - x[0][a]) * (1.0 - t) + (x[2][a] - x[3][a]) * t;
                    j[a][1] = (x[3][a] - x[0][a]) * (1.0 - s) + (x[2][a] - x[1][a]) * s;
                }
                j
            }
        }
    }

    /// The mixed derivative ∂²F/∂ξ∂η; the pure second derivatives vanish for both kinds.
    pub fn mixed_second_derivative(&self) -> [f64; 2] {
        match self.kind {
            ElementKind::Triangle => [0.0, 0.0],
            ElementKind::Quad => {
                let x = &self.x;
                [
                    x[0][0] - x[1][0] + x[2][0] - x[3][0],
                    x[0][1] - x[1][1] + x[2][1] - x[3][1],
                ]
            }
        }
    }

    pub fn det(&self, xi: [f64; 2]) -> f64 {
        let j = self.jacobian(xi);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    /// Reference coordinates of a physical point (Newton iteration for quads).
    pub fn inverse(&self, p: [f64; 2]) -> [f64; 2] {
        let mut xi = match self.kind {
            ElementKind::Triangle => [1.0 / 3.0, 1.0 / 3.0],
            ElementKind::Quad => [0.5, 0.5],
        };
        let iters = match self.kind {
            ElementKind::Triangle => 1,
            ElementKind::Quad => 30,
        };
        for _ in 0..iters {
            let f = self.map(xi);
            let r = [p[0] - f[0], p[1] - f[1]];
            let j = self.jacobian(xi);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let d0 = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            let d1 = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
            xi = [xi[0] + d0, xi[1] + d1];
            if d0.abs() + d1.abs() < 1e-15 {
                break;
            }
        }
        xi
    }
}

/// Reference coordinates of local edge `local` at parameter `t` (from local vertex `local` to `local+1`).
pub fn reference_edge_point(kind: ElementKind, local: usize, t: f64) -> [f64; 2] {
    match (kind, local) {
        (ElementKind::Triangle, 0) => [t, 0.0],
        (ElementKind::Triangle, 1) => [1.0 - t, t],
        (ElementKind::Triangle, 2) => [0.0, 1.0 - t],
        (ElementKind::Quad, 0) => [t, 0.0],
        (ElementKind::Quad, 1) => [1.0, t],
        (ElementKind::Quad, 2) => [1.0 - t, 1.0],
        (ElementKind::Quad, 3) => [0.0, 1.0 - t],
        _ => panic!("local edge {local} out of range for {kind:?}"),
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShapeReport {
    pub max_ratio: f64,
    pub min_det: f64,
    pub h_max: f64,
    pub h_min: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Diameter and incircle diameter of a triangle.
fn triangle_h_rho(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> (f64, f64) {
    let (ab, bc, ca) = (dist(a, b), dist(b, c), dist(c, a));
    let area = 0.5 * cross(a, b, c).abs();
    (ab.max(bc).max(ca), 4.0 * area / (ab + bc + ca))
}

impl Mesh {
    /// Builds a mesh from raw connectivity, validating orientation, convexity, and conformity.
    pub fn new(kind: ElementKind, vertices: Vec<[f64; 2]>, elements: Vec<Vec<usize>>) -> Result<Mesh> {
        Self::build(kind, vertices, elements).map_err(|(_, e)| e)
    }

    /// As [`Mesh::new`] but reports the offending element index alongside the error.
    fn build(
        kind: ElementKind,
        vertices: Vec<[f64; 2]>,
        elements: Vec<Vec<usize>>,
    ) -> std::result::Result<Mesh, (Option<usize>, LdgError)> {
        let nv = kind.n_vertices();
        if elements.is_empty() {
            return Err((None, LdgError::Mesh("no elements".into())));
        }
        for (k, el) in elements.iter().enumerate() {
            if el.len() != nv {
                return Err((Some(k), LdgError::Mesh(format!("element {k} has {} vertices, expected {nv}", el.len()))));
            }
            for &v in el {
                if v >= vertices.len() {
                    return Err((Some(k), LdgError::Mesh(format!("element {k}: vertex index {v} out of range"))));
                }
            }
            for i in 0..nv {
                let o = vertices[el[i]];
                let a = vertices[el[(i + 1) % nv]];
                let b = vertices[el[(i + 2) % nv]];
                let c = cross(o, a, b);
                let scale = dist(o, a) * dist(a, b);
                if !(c > 1e-14 * scale) {
                    return Err((
                        Some(k),
                        LdgError::Mesh(format!("element {k} is degenerate, clockwise, or non-convex")),
                    ));
                }
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut element_edges = vec![Vec::with_capacity(nv); elements.len()];
        for (k, el) in elements.iter().enumerate() {
            for i in 0..nv {
                let (a, b) = (el[i], el[(i + 1) % nv]);
                if a == b {
                    return Err((Some(k), LdgError::Mesh(format!("element {k} repeats a vertex"))));
                }
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    None => {
                        let pa = vertices[a];
                        let pb = vertices[b];
                        let len = dist(pa, pb);
                        let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
                        lookup.insert(key, edges.len());
                        element_edges[k].push(edges.len());
                        edges.push(Edge {
                            vertices: [a, b],
                            minus: k,
                            minus_local: i,
                            plus: None,
                            normal,
                            length: len,
                            label: Some(BoundaryLabel::Free),
                        });
                    }
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.plus.is_some() {
                            return Err((Some(k), LdgError::Mesh(format!("edge ({a},{b}) shared by more than two elements"))));
                        }
                        if edge.vertices != [b, a] {
                            return Err((Some(k), LdgError::Mesh(format!("edge ({a},{b}) traversed twice in the same direction (overlap)"))));
                        }
                        edge.plus = Some((k, i));
                        edge.label = None;
                        element_edges[k].push(e);
                    }
                }
            }
        }

        let mut diameters = Vec::with_capacity(elements.len());
        let mut areas = Vec::with_capacity(elements.len());
        for el in &elements {
            let mut h: f64 = 0.0;
            for i in 0..nv {
                for j in i + 1..nv {
                    h = h.max(dist(vertices[el[i]], vertices[el[j]]));
                }
            }
            diameters.push(h);
            let mut a = 0.0;
            for i in 0..nv {
                let p = vertices[el[i]];
                let q = vertices[el[(i + 1) % nv]];
                a += p[0] * q[1] - p[1] * q[0];
            }
            areas.push(0.5 * a);
        }

        Ok(Mesh { kind, vertices, elements, edges, element_edges, diameters, areas })
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_interior_edges(&self) -> usize {
        self.edges.iter().filter(|e| !e.is_boundary()).count()
    }

    pub fn n_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary()).count()
    }

    pub fn element_map(&self, k: usize) -> ElementMap {
        let el = &self.elements[k];
        let mut x = [[0.0; 2]; 4];
        for (i, &v) in el.iter().enumerate() {
            x[i] = self.vertices[v];
        }
        ElementMap { kind: self.kind, x }
    }

    pub fn area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn h_max(&self) -> f64 {
        self.diameters.iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.diameters.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for a in 0..2 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }

    pub fn has_dirichlet(&self) -> bool {
        self.edges.iter().any(|e| e.label == Some(BoundaryLabel::Dirichlet))
    }

    /// Relabels every boundary edge through `f(midpoint, outward normal)`.
    pub fn label_boundary<F: Fn([f64; 2], [f64; 2]) -> BoundaryLabel>(&mut self, f: F) {
        let mids: Vec<_> = self.edges.iter().map(|e| e.midpoint(self)).collect();
        for (e, m) in self.edges.iter_mut().zip(mids) {
            if e.is_boundary() {
                e.label = Some(f(m, e.normal));
            }
        }
    }

    /// Marks the listed sides of the bounding box as Dirichlet and all other boundary edges free.
    pub fn label_sides(&mut self, sides: &[Side]) {
        let (lo, hi) = self.bounding_box();
        let tol = 1e-10 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let sides = sides.to_vec();
        self.label_boundary(move |m, _| {
            let on = |s: &Side| match s {
                Side::Left => (m[0] - lo[0]).abs() < tol,
                Side::Right => (m[0] - hi[0]).abs() < tol,
                Side::Bottom => (m[1] - lo[1]).abs() < tol,
                Side::Top => (m[1] - hi[1]).abs() < tol,
            };
            if sides.iter().any(on) {
                BoundaryLabel::Dirichlet
            } else {
                BoundaryLabel::Free
            }
        });
    }

    pub fn shape_regularity_report(&self) -> ShapeReport {
        let mut max_ratio: f64 = 0.0;
        let mut min_det = f64::INFINITY;
        let g = [0.5 - 0.5 * (0.6f64).sqrt(), 0.5, 0.5 + 0.5 * (0.6f64).sqrt()];
        for k in 0..self.n_elements() {
            let map = self.element_map(k);
            let x = &map.x;
            let ratio = match self.kind {
                ElementKind::Triangle => {
                    let (h, rho) = triangle_h_rho(x[0], x[1], x[2]);
                    h / rho
                }
                ElementKind::Quad => {
                    let subs = [(0, 1, 2), (0, 2, 3), (0, 1, 3), (1, 2, 3)];
                    let rho = subs
                        .iter()
                        .map(|&(a, b, c)| triangle_h_rho(x[a], x[b], x[c]).1)
                        .fold(f64::INFINITY, f64::min);
                    self.diameters[k] / rho
                }
            };
            max_ratio = max_ratio.max(ratio);
            for &s in &g {
                for &t in &g {
                    let xi = match self.kind {
                        ElementKind::Triangle => [s * (1.0 - t), t],
                        ElementKind::Quad => [s, t],
                    };
                    min_det = min_det.min(map.det(xi).abs());
                }
            }
        }
        ShapeReport { max_ratio, min_det, h_max: self.h_max(), h_min: self.h_min() }
    }

    /// Splits every element into four by edge midpoints (and the centroid for quads).
    pub fn refine_uniform(&self) -> Mesh {
        let mut vertices = self.vertices.clone();
        let mut mid = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            mid.push(vertices.len());
            vertices.push(e.midpoint(self));
        }
        let mut elements = Vec::with_capacity(4 * self.n_elements());
        let mut labels: HashMap<(usize, usize), BoundaryLabel> = HashMap::new();
        for (k, el) in self.elements.iter().enumerate() {
            let m: Vec<usize> = self.element_edges[k].iter().map(|&e| mid[e]).collect();
            match self.kind {
                ElementKind::Triangle => {
                    elements.push(vec![el[0], m[0], m[2]]);
                    elements.push(vec![m[0], el[1], m[1]]);
                    elements.push(vec![m[2], m[1], el[2]]);
                    elements.push(vec![m[0], m[1], m[2]]);
                }
                ElementKind::Quad => {
                    let c = vertices.len();
                    let map = self.element_map(k);
                    vertices.push(map.map([0.5, 0.5]));
                    elements.push(vec![el[0], m[0], c, m[3]]);
                    elements.push(vec![m[0], el[1], m[1], c]);
                    elements.push(vec![c, m[1], el[2], m[2]]);
                    elements.push(vec![m[3], c, m[2], el[3]]);
                }
            }
        }
        for (e, edge) in self.edges.iter().enumerate() {
            if let Some(l) = edge.label {
                let [a, b] = edge.vertices;
                labels.insert((a.min(mid[e]), a.max(mid[e])), l);
                labels.insert((b.min(mid[e]), b.max(mid[e])), l);
            }
        }
        let mut out = Mesh::new(self.kind, vertices, elements).expect("refinement preserves validity");
        for e in out.edges.iter_mut() {
            if e.is_boundary() {
                let [a, b] = e.vertices;
                e.label = Some(*labels.get(&(a.min(b), a.max(b))).unwrap_or(&BoundaryLabel::Free));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ldgmesh v1 {}", self.kind.name());
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {}", v[0], v[1]);
        }
        let _ = writeln!(s, "elements {}", self.elements.len());
        for el in &self.elements {
            let idx: Vec<String> = el.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", idx.join(" "));
        }
        let bnd: Vec<&Edge> = self.edges.iter().filter(|e| e.is_boundary()).collect();
        let _ = writeln!(s, "boundary {}", bnd.len());
        for e in bnd {
            let l = match e.label {
                Some(BoundaryLabel::Dirichlet) => "dirichlet",
                _ => "free",
            };
            let _ = writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], l);
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|source| LdgError::Io { path: path.display().to_string(), source })
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut it = lines.into_iter();
        let err = |line: usize, msg: &str| LdgError::MeshParse { line, msg: msg.to_string() };
        let eof = || LdgError::MeshParse { line: text.lines().count(), msg: "unexpected end of file".into() };

        let (ln, header) = it.next().ok_or_else(eof)?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 || h[0] != "ldgmesh" || h[1] != "v1" {
            return Err(err(ln, "expected header `ldgmesh v1 <tri|quad>`"));
        }
        let kind = match h[2] {
            "tri" => ElementKind::Triangle,
            "quad" => ElementKind::Quad,
            _ => return Err(err(ln, "element kind must be `tri` or `quad`")),
        };

        let count = |name: &str, it: &mut dyn Iterator<Item = (usize, &str)>| -> Result<usize> {
            let (ln, l) = it.next().ok_or_else(eof)?;
            let p: Vec<&str> = l.split_whitespace().collect();
            if p.len() != 2 || p[0] != name {
                return Err(err(ln, &format!("expected `{name} <count>`")));
            }
            p[1].parse::<usize>().map_err(|_| err(ln, "invalid count"))
        };

        let nv = count("vertices", &mut it)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = it.next().ok_or_else(eof)?;
            let p: Vec<&str> = l.split_whitespace().collect();
            if p.len() != 2 {
                return Err(err(ln, "expected `x y`"));
            }
            let x: f64 = p[0].parse().map_err(|_| err(ln, "invalid coordinate"))?;
            let y: f64 = p[1].parse().map_err(|_| err(ln, "invalid coordinate"))?;
            if !x.is_finite() || !y.is_finite() {
                return Err(err(ln, "non-finite coordinate"));
            }
            vertices.push([x, y]);
        }

        let ne = count("elements", &mut it)?;
        let mut elements = Vec::with_capacity(ne);
        let mut element_lines = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, l) = it.next().ok_or_else(eof)?;
            let idx: std::result::Result<Vec<usize>, _> = l.split_whitespace().map(|s| s.parse::<usize>()).collect();
            let idx = idx.map_err(|_| err(ln, "invalid vertex index"))?;
            if idx.len() != kind.n_vertices() {
                return Err(err(ln, &format!("expected {} vertex indices", kind.n_vertices())));
            }
            if let Some(&bad) = idx.iter().find(|&&v| v >= nv) {
                return Err(err(ln, &format!("vertex index {bad} out of range (have {nv} vertices)")));
            }
            elements.push(idx);
            element_lines.push(ln);
        }

        let nb = count("boundary", &mut it)?;
        let mut labels = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (ln, l) = it.next().ok_or_else(eof)?;
            let p: Vec<&str> = l.split_whitespace().collect();
            if p.len() != 3 {
                return Err(err(ln, "expected `v0 v1 <free|dirichlet>`"));
            }
            let a: usize = p[0].parse().map_err(|_| err(ln, "invalid vertex index"))?;
            let b: usize = p[1].parse().map_err(|_| err(ln, "invalid vertex index"))?;
            let lab = match p[2] {
                "free" => BoundaryLabel::Free,
                "dirichlet" => BoundaryLabel::Dirichlet,
                _ => return Err(err(ln, "label must be `free` or `dirichlet`")),
            };
            labels.push((ln, a, b, lab));
        }
        if let Some((ln, _)) = it.next() {
            return Err(err(ln, "trailing content"));
        }

        let mut mesh = Mesh::build(kind, vertices, elements).map_err(|(k, e)| match k {
            Some(k) => LdgError::MeshParse { line: element_lines[k], msg: e.to_string() },
            None => e,
        })?;
        let mut lookup = HashMap::new();
        for (i, e) in mesh.edges.iter().enumerate() {
            let [a, b] = e.vertices;
            lookup.insert((a.min(b), a.max(b)), i);
        }
        for (ln, a, b, lab) in labels {
            match lookup.get(&(a.min(b), a.max(b))) {
                Some(&e) if mesh.edges[e].is_boundary() => mesh.edges[e].label = Some(lab),
                _ => return Err(err(ln, &format!("({a},{b}) is not a boundary edge"))),
            }
        }
        Ok(mesh)
    }

    pub fn load(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LdgError::Io { path: path.display().to_string(), source })?;
        Mesh::from_text(&text)
    }
}

/// Structured mesh of the rectangle with corners `lo`, `hi`; triangles split each
/// cell along the lower-left to upper-right diagonal.
pub fn build_structured_mesh(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize, kind: ElementKind) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(LdgError::Mesh("nx and ny must be at least 1".into()));
    }
    if !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(LdgError::Mesh("degenerate rectangle".into()));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64;
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64;
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            match kind {
                ElementKind::Triangle => {
                    elements.push(vec![a, b, c]);
                    elements.push(vec![a, c, d]);
                }
                ElementKind::Quad => elements.push(vec![a, b, c, d]),
            }
        }
    }
    Mesh::new(kind, vertices, elements)
}

/// Unit square `[0,1]²` with `n × n` cells.
pub fn unit_square(n: usize, kind: ElementKind) -> Mesh {
    build_structured_mesh([0.0, 0.0], [1.0, 1.0], n, n, kind).expect("valid unit square mesh")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_quad_counts() {
        let m = unit_square(1, ElementKind::Quad);
        assert_eq!(m.n_elements(), 1);
        assert_eq!(m.n_boundary_edges(), 4);
        assert_eq!(m.n_interior_edges(), 0);
    }

    #[test]
    fn single_cell_tri_counts() {
        let m = unit_square(1, ElementKind::Triangle);
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.n_interior_edges(), 1);
        assert_eq!(m.n_boundary_edges(), 4);
    }

    #[test]
    fn two_by_two_tri_interior_edges_by_enumeration() {
        let m = unit_square(2, ElementKind::Triangle);
        assert_eq!(m.n_elements(), 8);
        // brute force: count unordered vertex pairs shared by two elements
        let mut shared = 0;
        for a in 0..m.n_elements() {
            for b in a + 1..m.n_elements() {
                let common = m.elements[a].iter().filter(|v| m.elements[b].contains(v)).count();
                if common == 2 {
                    shared += 1;
                }
            }
        }
        assert_eq!(shared, 8);
        assert_eq!(m.n_interior_edges(), 8);
    }

    #[test]
    fn normals_point_from_minus_to_plus() {
        for kind in [ElementKind::Triangle, ElementKind::Quad] {
            let m = build_structured_mesh([0.0, 0.0], [2.0, 1.0], 3, 2, kind).unwrap();
            for e in &m.edges {
                if let Some((p, _)) = e.plus {
                    assert!(e.minus < p);
                    let cm = m.element_map(e.minus).map(if kind == ElementKind::Quad { [0.5, 0.5] } else { [1.0 / 3.0, 1.0 / 3.0] });
                    let mid = e.midpoint(&m);
                    let d = (mid[0] - cm[0]) * e.normal[0] + (mid[1] - cm[1]) * e.normal[1];
                    assert!(d > 0.0);
                }
            }
        }
    }

    #[test]
    fn right_triangle_ratio_matches_incircle() {
        let m = unit_square(4, ElementKind::Triangle);
        let r = m.shape_regularity_report();
        let a = 0.25;
        let h = a * 2f64.sqrt();
        let rho = 4.0 * (0.5 * a * a) / (2.0 * a + h);
        assert!((r.max_ratio - h / rho).abs() < 1e-12);
        assert!((r.max_ratio - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!((r.min_det - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn square_ratio_closed_form() {
        let m = unit_square(3, ElementKind::Quad);
        let r = m.shape_regularity_report();
        let rho = 2.0 - 2f64.sqrt();
        assert!((r.max_ratio - 2f64.sqrt() / rho).abs() < 1e-12);
    }

    #[test]
    fn refinement_halves_h_and_keeps_ratio() {
        for kind in [ElementKind::Triangle, ElementKind::Quad] {
            let m = unit_square(2, kind);
            let f = m.refine_uniform();
            assert_eq!(f.n_elements(), 4 * m.n_elements());
            let (r0, r1) = (m.shape_regularity_report(), f.shape_regularity_report());
            assert!((r1.h_max - 0.5 * r0.h_max).abs() < 1e-15);
            assert!((r1.max_ratio - r0.max_ratio).abs() < 1e-12);
            assert!((f.area() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_inherits_labels() {
        let mut m = unit_square(2, ElementKind::Triangle);
        m.label_sides(&[Side::Left]);
        let f = m.refine_uniform();
        let n = f.edges.iter().filter(|e| e.label == Some(BoundaryLabel::Dirichlet)).count();
        assert_eq!(n, 4);
        for e in f.edges.iter().filter(|e| e.label == Some(BoundaryLabel::Dirichlet)) {
            assert!(e.midpoint(&f)[0].abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_rectangle_rejected() {
        assert!(build_structured_mesh([0.0, 0.0], [0.0, 1.0], 2, 2, ElementKind::Quad).is_err());
        assert!(build_structured_mesh([0.0, 0.0], [1.0, 1.0], 0, 2, ElementKind::Quad).is_err());
    }

    #[test]
    fn bi_affine_inverse_roundtrip() {
        let m = Mesh::new(
            ElementKind::Quad,
            vec![[0.0, 0.0], [2.0, 0.1], [2.3, 1.7], [-0.2, 1.0]],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap();
        let map = m.element_map(0);
        let xi = [0.3, 0.8];
        let back = map.inverse(map.map(xi));
        assert!((back[0] - xi[0]).abs() < 1e-13 && (back[1] - xi[1]).abs() < 1e-13);
    }
}
