//! Left-looking sparse LU (Gilbert–Peierls) with threshold partial
//! pivoting.
//!
//! Columns are processed in a fill-reducing order fixed by [`Symbolic`].
//! For each column the sparse triangular solve `L x = A(:, q[k])` visits only
//! the reach of the column's nonzeros, so the work is proportional to the
//! flop count. The diagonal candidate is kept as pivot when it is within
//! `PIVOT_THRESHOLD` of the column maximum, which preserves the ordering in
//! the common case.

use super::csc::CscMatrix;
use super::ordering::minimum_degree;
use crate::error::{Error, Result};

const PIVOT_THRESHOLD: f64 = 0.1;

/// Column ordering computed once per sparsity pattern.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    col_perm: Vec<usize>,
}

impl Symbolic {
    pub fn analyze(a: &CscMatrix) -> Self {
        Symbolic {
            n: a.ncols,
            col_perm: minimum_degree(a),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Numeric factors `P A Q = L U` with unit-diagonal `L`.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    // L columns: unit diagonal stored first; row indices in pivot order
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    // U columns: diagonal stored last
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    /// pinv[original row] = pivot position
    pinv: Vec<usize>,
    col_perm: Vec<usize>,
}

impl SparseLu {
    pub fn factor(sym: &Symbolic, a: &CscMatrix) -> Result<Self> {
        let n = sym.n;
        assert_eq!(a.nrows, n);
        assert_eq!(a.ncols, n);
        let q = &sym.col_perm;
        let scale = a.max_abs();
        const UNSET: usize = usize::MAX;

        let guess = 4 * a.nnz() + n;
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_idx = Vec::with_capacity(guess);
        let mut l_val = Vec::with_capacity(guess);
        let mut u_ptr = Vec::with_capacity(n + 1);
        let mut u_idx = Vec::with_capacity(guess);
        let mut u_val = Vec::with_capacity(guess);
        let mut pinv = vec![UNSET; n];

        let mut x = vec![0.0; n];
        let mut reach = Reach::new(n);

        for k in 0..n {
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
            let col = q[k];
            let (b_rows, b_vals) = a.col(col);

            // x = L \ A(:, col) restricted to the reach
            let top = reach.compute(b_rows, &l_ptr, &l_idx, &pinv, UNSET);
            for &i in &reach.stack[top..] {
                x[i] = 0.0;
            }
            for (&i, &v) in b_rows.iter().zip(b_vals) {
                x[i] = v;
            }
            for &j in &reach.stack[top..] {
                let jj = pinv[j];
                if jj == UNSET {
                    continue;
                }
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                let end = if jj + 1 < l_ptr.len() { l_ptr[jj + 1] } else { l_idx.len() };
                for p in l_ptr[jj] + 1..end {
                    x[l_idx[p]] -= l_val[p] * xj;
                }
            }

            // pivot search over rows not yet pivotal; others go to U
            let mut ipiv = UNSET;
            let mut best = -1.0;
            for &i in &reach.stack[top..] {
                if pinv[i] == UNSET {
                    let t = x[i].abs();
                    if t > best {
                        best = t;
                        ipiv = i;
                    }
                } else {
                    u_idx.push(pinv[i]);
                    u_val.push(x[i]);
                }
            }
            if ipiv == UNSET || !(best > super::PIVOT_RTOL * scale) || !best.is_finite() {
                return Err(Error::SingularSystem { pivot: k });
            }
            if pinv[col] == UNSET && x[col].abs() >= PIVOT_THRESHOLD * best {
                ipiv = col;
            }
            let pivot = x[ipiv];
            u_idx.push(k);
            u_val.push(pivot);
            pinv[ipiv] = k;
            l_idx.push(ipiv);
            l_val.push(1.0);
            for &i in &reach.stack[top..] {
                if pinv[i] == UNSET {
                    l_idx.push(i);
                    l_val.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
        for r in &mut l_idx {
            *r = pinv[*r];
        }
        Ok(SparseLu {
            n,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            pinv,
            col_perm: q.clone(),
        })
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x = vec![0.0; n];
        for (i, &bi) in b.iter().enumerate() {
            x[self.pinv[i]] = bi;
        }
        for j in 0..n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in (0..n).rev() {
            let last = self.u_ptr[j + 1] - 1;
            x[j] /= self.u_val[last];
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.u_ptr[j]..last {
                x[self.u_idx[p]] -= self.u_val[p] * xj;
            }
        }
        let mut out = vec![0.0; n];
        for (k, &c) in self.col_perm.iter().enumerate() {
            out[c] = x[k];
        }
        out
    }
}

/// Depth-first reach of a column's nonzeros in the graph of L, producing a
/// topological order in `stack[top..]`.
struct Reach {
    stack: Vec<usize>,
    mark: Vec<u32>,
    stamp: u32,
    dfs: Vec<(usize, usize)>,
}

impl Reach {
    fn new(n: usize) -> Self {
        Reach {
            stack: vec![0; n],
            mark: vec![0; n],
            stamp: 0,
            dfs: Vec::new(),
        }
    }

    fn compute(
        &mut self,
        roots: &[usize],
        l_ptr: &[usize],
        l_idx: &[usize],
        pinv: &[usize],
        unset: usize,
    ) -> usize {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.mark.fill(0);
            self.stamp = 1;
        }
        let n = self.stack.len();
        let mut top = n;
        let col_range = |j: usize| -> (usize, usize) {
            let jj = pinv[j];
            if jj == unset {
                (0, 0)
            } else {
                let end = if jj + 1 < l_ptr.len() { l_ptr[jj + 1] } else { l_idx.len() };
                (l_ptr[jj] + 1, end)
            }
        };
        for &r in roots {
            if self.mark[r] == self.stamp {
                continue;
            }
            self.mark[r] = self.stamp;
            let (s, _) = col_range(r);
            self.dfs.push((r, s));
            while let Some(&(j, mut p)) = self.dfs.last() {
                let (_, end) = col_range(j);
                let mut next = None;
                while p < end {
                    let i = l_idx[p];
                    p += 1;
                    if self.mark[i] != self.stamp {
                        self.mark[i] = self.stamp;
                        next = Some(i);
                        break;
                    }
                }
                let last = self.dfs.len() - 1;
                self.dfs[last].1 = p;
                if let Some(i) = next {
                    let (si, _) = col_range(i);
                    self.dfs.push((i, si));
                } else {
                    self.dfs.pop();
                    top -= 1;
                    self.stack[top] = j;
                }
            }
        }
        top
    }
}
