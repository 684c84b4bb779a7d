//! Compressed sparse row matrices and symmetric storage.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{LdgError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix { nrows, ncols, indptr: vec![0; nrows + 1], indices: vec![], values: vec![] }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Sums duplicates in a fixed order: entries are stably sorted by (row, col).
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows, ncols, indptr, indices, values }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                if a[(r, c)] != 0.0 {
                    t.push((r, c, a[(r, c)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |p| (self.indices[p], self.values[p]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let s = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match s.binary_search(&c) {
            Ok(i) => self.values[self.indptr[r] + i],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                y[c] += v * x[r];
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((r, c, v));
            }
        }
        t
    }

    pub fn transpose(&self) -> Self {
        let t = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, t)
    }

    /// `alpha·self + beta·other`.
    pub fn combine(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (r, c, alpha * v)).collect();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, beta * v)));
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// Block-diagonal `I_copies ⊗ self`.
    pub fn kron_identity(&self, copies: usize) -> Self {
        let mut t = Vec::with_capacity(copies * self.nnz());
        for b in 0..copies {
            for (r, c, v) in self.triplets() {
                t.push((b * self.nrows + r, b * self.ncols + c, v));
            }
        }
        Self::from_triplets(copies * self.nrows, copies * self.ncols, t)
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                if (v - self.get(c, r)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                a[(r, c)] += v;
            }
        }
        a
    }

    /// Coordinate dump, one `row col value` triplet per line with 17 significant digits.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {}", r, c, format_g17(v));
        }
        s
    }

    pub fn write_coordinate(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_coordinate_text())
            .map_err(|source| LdgError::Io { path: path.display().to_string(), source })
    }
}

/// C-style `%.17g` formatting.
pub fn format_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let e = format!("{:.16e}", v);
    let (mant, exp) = e.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= 17 {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Definiteness {
    Spd,
    Indefinite,
}

/// Symmetric matrix stored as its lower triangle (diagonal included).
#[derive(Clone, Debug)]
pub struct SparseSymmetric {
    lower: CsrMatrix,
    pub definiteness: Definiteness,
}

impl SparseSymmetric {
    /// Keeps the lower triangle of a full symmetric matrix.
    pub fn from_full(a: &CsrMatrix, definiteness: Definiteness) -> Self {
        assert_eq!(a.nrows, a.ncols);
        let t = a.triplets().into_iter().filter(|&(r, c, _)| r >= c).collect();
        SparseSymmetric { lower: CsrMatrix::from_triplets(a.nrows, a.ncols, t), definiteness }
    }

    /// Triplets may be given for either triangle; mirrored entries are summed into the lower one.
    pub fn from_lower_triplets(n: usize, t: Vec<(usize, usize, f64)>, definiteness: Definiteness) -> Self {
        let t = t.into_iter().map(|(r, c, v)| if r >= c { (r, c, v) } else { (c, r, v) }).collect();
        SparseSymmetric { lower: CsrMatrix::from_triplets(n, n, t), definiteness }
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows
    }

    pub fn lower(&self) -> &CsrMatrix {
        &self.lower
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        let mut y = vec![0.0; n];
        for r in 0..n {
            for (c, v) in self.lower.row(r) {
                y[r] += v * x[c];
                if c != r {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    pub fn to_full(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(2 * self.lower.nnz());
        for (r, c, v) in self.lower.triplets() {
            t.push((r, c, v));
            if r != c {
                t.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.dim(), self.dim(), t)
    }

    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        let mut s = vec![0.0; n];
        for (r, c, v) in self.lower.triplets() {
            s[r] += v.abs();
            if r != c {
                s[c] += v.abs();
            }
        }
        s.into_iter().fold(0.0, f64::max)
    }

    /// Adjacency lists of the off-diagonal pattern.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.dim();
        let mut adj = vec![Vec::new(); n];
        for (r, c, _) in self.lower.triplets() {
            if r != c {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}
