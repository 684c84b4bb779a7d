//! Up-looking sparse LDLᵀ factorization without pivoting.
//!
//! The caller supplies the elimination order. Symmetric-indefinite saddle systems
//! factor stably enough here because every multiplier block is ordered after the
//! primal unknowns it touches (see [`crate::solver::kkt`]).

use super::sparse::SparseSymmetric;

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct LdlFactor {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

/// Pivot that stopped the factorization (position in elimination order, original index, value).
#[derive(Clone, Copy, Debug)]
pub struct PivotFailure {
    pub position: usize,
    pub index: usize,
    pub value: f64,
}

impl LdlFactor {
    /// Factors `P A Pᵀ = L D Lᵀ`. `accept(original_index, pivot)` decides whether a pivot is usable.
    pub fn factor<F: Fn(usize, f64) -> bool>(
        a: &SparseSymmetric,
        perm: &[usize],
        accept: F,
    ) -> Result<LdlFactor, PivotFailure> {
        let n = a.dim();
        assert_eq!(perm.len(), n);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // upper triangle of the permuted matrix, by column
        let mut colptr = vec![0usize; n + 1];
        let lower = a.lower();
        for (r, c, _) in lower.triplets() {
            let (pr, pc) = (iperm[r], iperm[c]);
            colptr[pr.max(pc) + 1] += 1;
        }
        for k in 0..n {
            colptr[k + 1] += colptr[k];
        }
        let mut fill = colptr.clone();
        let mut rows = vec![0usize; colptr[n]];
        let mut vals = vec![0.0; colptr[n]];
        for (r, c, v) in lower.triplets() {
            let (pr, pc) = (iperm[r], iperm[c]);
            let col = pr.max(pc);
            rows[fill[col]] = pr.min(pc);
            vals[fill[col]] = v;
            fill[col] += 1;
        }

        // symbolic: elimination tree and column counts
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in colptr[k]..colptr[k + 1] {
                let mut i = rows[p];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }

        // numeric
        let mut li = vec![0usize; lp[n]];
        let mut lx = vec![0.0; lp[n]];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut count = vec![0usize; n];
        for k in 0..n {
            y[k] = 0.0;
            let mut top = n;
            flag[k] = k;
            for p in colptr[k]..colptr[k + 1] {
                let mut i = rows[p];
                y[i] += vals[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let start = lp[i];
                let end = start + count[i];
                for p in start..end {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[end] = k;
                lx[end] = l_ki;
                count[i] += 1;
            }
            if !accept(perm[k], d[k]) {
                return Err(PivotFailure { position: k, index: perm[k], value: d[k] });
            }
        }
        Ok(LdlFactor { n, perm: perm.to_vec(), lp, li, lx, d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    /// Pivots in elimination order paired with the original index.
    pub fn pivots(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.perm.iter().copied().zip(self.d.iter().copied())
    }

    /// (positive, negative, zero) pivot counts.
    pub fn inertia(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for &v in &self.d {
            if v > 0.0 {
                c.0 += 1
            } else if v < 0.0 {
                c.1 += 1
            } else {
                c.2 += 1
            }
        }
        c
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[j] = s;
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}
