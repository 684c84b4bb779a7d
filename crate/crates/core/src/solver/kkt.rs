//! Symmetric positive definite and saddle-point direct solves.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ldl::LdlFactor;
use super::ordering::{group_order, minimum_degree};
use super::sparse::{Definiteness, SparseSymmetric};
use crate::error::{LdgError, Result};

/// Reusable factorization of an SPD matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    factor: LdlFactor,
    matrix: SparseSymmetric,
}

impl SpdFactor {
    /// `groups` optionally lists unknowns that should be eliminated together (for example
    /// the dofs of one element); the ordering then runs on the much smaller group graph.
    pub fn new(m: &SparseSymmetric, groups: Option<&[Vec<usize>]>) -> Result<SpdFactor> {
        if m.definiteness != Definiteness::Spd {
            return Err(LdgError::Parameter("solve_spd requires an SPD-flagged matrix".into()));
        }
        let adj = m.adjacency();
        let perm = match groups {
            Some(g) => group_order(m.dim(), &adj, g),
            None => minimum_degree(&adj, &vec![1; m.dim()]),
        };
        let factor = LdlFactor::factor(m, &perm, |_, d| d > 0.0 && d.is_finite())
            .map_err(|f| LdgError::NonPositivePivot { index: f.index, value: f.value })?;
        Ok(SpdFactor { factor, matrix: m.clone() })
    }

    /// Solves with one step of iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.factor.solve(rhs);
        let ax = self.matrix.matvec(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = self.factor.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        x
    }

    pub fn matrix(&self) -> &SparseSymmetric {
        &self.matrix
    }

    pub fn nnz_l(&self) -> usize {
        self.factor.nnz_l()
    }

    pub fn min_pivot(&self) -> f64 {
        self.factor.pivots().map(|(_, d)| d).fold(f64::INFINITY, f64::min)
    }
}

pub fn solve_spd(m: &SparseSymmetric, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.dim() {
        return Err(LdgError::Parameter(format!("rhs length {} does not match dimension {}", rhs.len(), m.dim())));
    }
    Ok(SpdFactor::new(m, None)?.solve(rhs))
}

/// Dense rows of the constraint matrix restricted to the columns they touch.
#[derive(Clone, Debug)]
pub struct ConstraintBlock {
    pub cols: Vec<usize>,
    /// `rows.nrows()` constraints over `cols.len()` unknowns.
    pub rows: DMatrix<f64>,
}

/// `[A Bᵀ; B 0]` with `B` given as blocks of rows.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub a: SparseSymmetric,
    pub constraints: Vec<ConstraintBlock>,
    /// Optional groups of primal unknowns for the ordering (typically one per element).
    pub groups: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KktReport {
    /// Number of constraint rows dropped as linearly dependent.
    pub deficiency: usize,
    pub positive_pivots: usize,
    pub negative_pivots: usize,
    pub min_abs_pivot: f64,
    /// ‖A x + Bᵀλ − f‖ / (‖A‖‖x‖ + ‖Bᵀλ‖ + ‖f‖).
    pub primal_residual: f64,
    /// ‖B x − g‖ / (‖B‖‖x‖ + ‖g‖).
    pub constraint_residual: f64,
}

#[derive(Clone, Debug)]
pub struct KktSolution {
    pub primal: Vec<f64>,
    /// One entry per original constraint row, block by block.
    pub multiplier: Vec<f64>,
    pub report: KktReport,
}

struct ReducedBlock {
    /// Orthonormal rows spanning the row space (rank × cols).
    c: DMatrix<f64>,
    /// Maps reduced multipliers back: λ = `back` · λ' (rows × rank).
    back: DMatrix<f64>,
    /// Maps the original right-hand side to the reduced one (rank × rows).
    fwd: DMatrix<f64>,
}

fn reduce_blocks(blocks: &[ConstraintBlock]) -> (Vec<ReducedBlock>, usize) {
    let svds: Vec<_> = blocks.iter().map(|b| b.rows.clone().svd(true, true)).collect();
    let smax = svds
        .iter()
        .flat_map(|s| s.singular_values.iter().copied())
        .fold(0.0f64, f64::max);
    let tol = 1e-10 * smax;
    let mut deficiency = 0;
    let reduced = blocks
        .iter()
        .zip(svds)
        .map(|(b, svd)| {
            let r = b.rows.nrows();
            let u = svd.u.unwrap();
            let vt = svd.v_t.unwrap();
            let keep: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&i| smax > 0.0 && svd.singular_values[i] > tol)
                .collect();
            deficiency += r - keep.len();
            let rank = keep.len();
            let mut c = DMatrix::zeros(rank, b.cols.len());
            let mut back = DMatrix::zeros(r, rank);
            let mut fwd = DMatrix::zeros(rank, r);
            for (q, &i) in keep.iter().enumerate() {
                let s = svd.singular_values[i];
                c.row_mut(q).copy_from(&vt.row(i));
                for p in 0..r {
                    back[(p, q)] = u[(p, i)] / s;
                    fwd[(q, p)] = u[(p, i)] / s;
                }
            }
            ReducedBlock { c, back, fwd }
        })
        .collect();
    (reduced, deficiency)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl SaddleSystem {
    pub fn n_primal(&self) -> usize {
        self.a.dim()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.iter().map(|b| b.rows.nrows()).sum()
    }

    /// `B x`, one entry per constraint row.
    pub fn apply_b(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_constraints());
        for b in &self.constraints {
            for r in 0..b.rows.nrows() {
                out.push(b.cols.iter().enumerate().map(|(j, &c)| b.rows[(r, j)] * x[c]).sum());
            }
        }
        out
    }

    /// `Bᵀ λ`.
    pub fn apply_bt(&self, lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_primal()];
        let mut off = 0;
        for b in &self.constraints {
            for r in 0..b.rows.nrows() {
                for (j, &c) in b.cols.iter().enumerate() {
                    out[c] += b.rows[(r, j)] * lambda[off + r];
                }
            }
            off += b.rows.nrows();
        }
        out
    }

    fn b_norm(&self) -> f64 {
        self.constraints
            .iter()
            .map(|b| (0..b.rows.nrows()).map(|r| b.rows.row(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Residual norms of a candidate solution in the original (unreduced) system.
    pub fn residuals(&self, x: &[f64], lambda: &[f64], f: &[f64], g: &[f64]) -> (f64, f64) {
        let ax = self.a.matvec(x);
        let btl = self.apply_bt(lambda);
        let r1: Vec<f64> = (0..x.len()).map(|i| ax[i] + btl[i] - f[i]).collect();
        let bx = self.apply_b(x);
        let r2: Vec<f64> = bx.iter().zip(g).map(|(a, b)| a - b).collect();
        let d1 = self.a.norm_inf() * norm(x) + norm(&btl) + norm(f);
        let d2 = self.b_norm() * norm(x) + norm(g);
        (
            if d1 > 0.0 { norm(&r1) / d1 } else { norm(&r1) },
            if d2 > 0.0 { norm(&r2) / d2 } else { norm(&r2) },
        )
    }
}

/// Solves `A x + Bᵀλ = f`, `B x = g` by a sparse LDLᵀ factorization.
///
/// Each constraint block is first replaced by an orthonormal basis of its row space,
/// which drops dependent rows and yields the minimum-norm multiplier. The
/// multipliers of a block are eliminated right after the last primal unknown they
/// touch, so no pivoting is required.
pub fn solve_kkt(s: &SaddleSystem, f: &[f64], g: &[f64]) -> Result<KktSolution> {
    let n = s.n_primal();
    let m = s.n_constraints();
    if f.len() != n || g.len() != m {
        return Err(LdgError::Parameter("saddle right-hand side has wrong length".into()));
    }
    if m == 0 {
        let fac = SpdFactor::new(&s.a, s.groups.as_deref()).or_else(|e| match (s.a.definiteness, e) {
            (_, LdgError::NonPositivePivot { index, value }) => Err(LdgError::SingularKkt { index, value }),
            (_, e) => Err(e),
        })?;
        let x = fac.solve(f);
        let (r1, r2) = s.residuals(&x, &[], f, g);
        return Ok(KktSolution {
            primal: x,
            multiplier: vec![],
            report: KktReport {
                deficiency: 0,
                positive_pivots: n,
                negative_pivots: 0,
                min_abs_pivot: fac.min_pivot(),
                primal_residual: r1,
                constraint_residual: r2,
            },
        });
    }

    let (reduced, deficiency) = reduce_blocks(&s.constraints);
    let mut offsets = Vec::with_capacity(reduced.len());
    let mut mr = 0;
    for r in &reduced {
        offsets.push(n + mr);
        mr += r.c.nrows();
    }
    let dim = n + mr;

    let mut t: Vec<(usize, usize, f64)> = s.a.lower().triplets();
    for (blk, (red, &off)) in s.constraints.iter().zip(reduced.iter().zip(&offsets)) {
        for q in 0..red.c.nrows() {
            for (j, &c) in blk.cols.iter().enumerate() {
                let v = red.c[(q, j)];
                if v != 0.0 {
                    t.push((off + q, c, v));
                }
            }
        }
    }
    let k = SparseSymmetric::from_lower_triplets(dim, t, Definiteness::Indefinite);

    // primal order, then each multiplier block after its last column
    let mut adj_a = s.a.adjacency();
    for blk in &s.constraints {
        for &i in &blk.cols {
            for &j in &blk.cols {
                if i != j {
                    adj_a[i].push(j);
                }
            }
        }
    }
    for a in adj_a.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let primal_order = match &s.groups {
        Some(gr) => group_order(n, &adj_a, gr),
        None => minimum_degree(&adj_a, &vec![1; n]),
    };
    let mut pos = vec![0usize; n];
    for (p, &i) in primal_order.iter().enumerate() {
        pos[i] = p;
    }
    let mut after: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut leading = Vec::new();
    for (b, (blk, red)) in s.constraints.iter().zip(&reduced).enumerate() {
        if red.c.nrows() == 0 {
            continue;
        }
        match blk.cols.iter().map(|&c| pos[c]).max() {
            Some(p) => after[primal_order[p]].push(b),
            None => leading.push(b),
        }
    }
    let mut perm = Vec::with_capacity(dim);
    for b in leading {
        perm.extend(offsets[b]..offsets[b] + reduced[b].c.nrows());
    }
    for &i in &primal_order {
        perm.push(i);
        for &b in &after[i] {
            perm.extend(offsets[b]..offsets[b] + reduced[b].c.nrows());
        }
    }

    let spd = s.a.definiteness == Definiteness::Spd;
    let scale = s.a.norm_inf().max(1e-300);
    let fac = LdlFactor::factor(&k, &perm, |i, d| {
        if !d.is_finite() {
            false
        } else if i < n {
            if spd {
                d > 0.0
            } else {
                d.abs() > 1e-14 * scale
            }
        } else {
            // multiplier pivots scale like 1/‖A‖ because the rows are orthonormal
            d < 0.0 && d.abs() > 1e-13 / scale
        }
    })
    .map_err(|p| {
        if p.index < n && spd && p.value <= 0.0 {
            LdgError::NonPositivePivot { index: p.index, value: p.value }
        } else {
            LdgError::SingularKkt { index: p.index, value: p.value }
        }
    })?;

    let mut rhs = f.to_vec();
    rhs.resize(dim, 0.0);
    let mut goff = 0;
    for (blk, (red, &off)) in s.constraints.iter().zip(reduced.iter().zip(&offsets)) {
        let r = blk.rows.nrows();
        for q in 0..red.c.nrows() {
            rhs[off + q] = (0..r).map(|p| red.fwd[(q, p)] * g[goff + p]).sum();
        }
        goff += r;
    }
    let mut z = fac.solve(&rhs);
    for _ in 0..2 {
        let kz = k.matvec(&z);
        let res: Vec<f64> = rhs.iter().zip(&kz).map(|(a, b)| a - b).collect();
        let dz = fac.solve(&res);
        z.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
    }

    let primal = z[..n].to_vec();
    let mut multiplier = Vec::with_capacity(m);
    for (red, &off) in reduced.iter().zip(&offsets) {
        let lr = &z[off..off + red.c.nrows()];
        for p in 0..red.back.nrows() {
            multiplier.push((0..red.c.nrows()).map(|q| red.back[(p, q)] * lr[q]).sum());
        }
    }
    let (pp, nn, _) = fac.inertia();
    let min_abs_pivot = fac.pivots().map(|(_, d)| d.abs()).fold(f64::INFINITY, f64::min);
    let (r1, r2) = s.residuals(&primal, &multiplier, f, g);
    Ok(KktSolution {
        primal,
        multiplier,
        report: KktReport {
            deficiency,
            positive_pivots: pp,
            negative_pivots: nn,
            min_abs_pivot,
            primal_residual: r1,
            constraint_residual: r2,
        },
    })
}
