//! Direct linear solvers shared by the power flow and both estimators.

mod csc;
mod dense;
mod lu;
mod ordering;

pub use csc::{max_abs, CscMatrix, Triplets};
pub use dense::DenseLu;
pub use lu::{SparseLu, Symbolic};
pub use ordering::minimum_degree;

use crate::error::Result;

/// Pivots smaller than this fraction of the largest matrix entry are
/// treated as zero.
pub(crate) const PIVOT_RTOL: f64 = 1e-14;

/// Systems up to this dimension are factored densely.
pub const DENSE_MAX_DIM: usize = 64;

/// Residual acceptance: `‖A x − b‖∞ ≤ RESIDUAL_RTOL · max(1, ‖b‖∞)`.
pub const RESIDUAL_RTOL: f64 = 1e-9;

#[derive(Debug, Clone)]
enum Factors {
    Dense(DenseLu),
    Sparse(SparseLu),
}

/// A reusable direct solver: the fill-reducing analysis is done once per
/// pattern and each [`LinearSolver::solve`] call refactors numerically.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    symbolic: Option<Symbolic>,
    dim: usize,
}

/// Solution of `A x = b` together with its measured residual.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    /// ‖A x − b‖∞ after refinement.
    pub residual: f64,
    pub refined: bool,
    /// Whether the residual meets [`RESIDUAL_RTOL`].
    pub accurate: bool,
}

impl LinearSolver {
    pub fn analyze(a: &CscMatrix) -> Self {
        assert_eq!(a.nrows, a.ncols, "square matrix required");
        let dim = a.ncols;
        let symbolic = (dim > DENSE_MAX_DIM).then(|| Symbolic::analyze(a));
        LinearSolver { symbolic, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn factor(&self, a: &CscMatrix) -> Result<Factors> {
        match &self.symbolic {
            Some(sym) => SparseLu::factor(sym, a).map(Factors::Sparse),
            None => {
                let n = a.ncols;
                let mut dense = vec![0.0; n * n];
                for j in 0..n {
                    let (rows, vals) = a.col(j);
                    for (&i, &v) in rows.iter().zip(vals) {
                        dense[i * n + j] = v;
                    }
                }
                DenseLu::factor(n, dense).map(Factors::Dense)
            }
        }
    }

    /// Factors `a` (which must share the analyzed pattern's dimension) and
    /// solves, applying one step of iterative refinement when the residual
    /// check fails.
    pub fn solve(&self, a: &CscMatrix, b: &[f64]) -> Result<Solution> {
        assert_eq!(a.ncols, self.dim);
        assert_eq!(b.len(), self.dim);
        let f = self.factor(a)?;
        let apply = |rhs: &[f64]| match &f {
            Factors::Dense(d) => d.solve(rhs),
            Factors::Sparse(s) => s.solve(rhs),
        };
        let tol = RESIDUAL_RTOL * max_abs(b).max(1.0);
        let mut x = apply(b);
        let r = residual(a, &x, b);
        let mut res = max_abs(&r);
        let mut refined = false;
        if !(res <= tol) {
            let dx = apply(&r);
            let candidate: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
            let r2 = residual(a, &candidate, b);
            let res2 = max_abs(&r2);
            if res2 < res || res.is_nan() {
                x = candidate;
                res = res2;
            }
            refined = true;
        }
        Ok(Solution {
            x,
            residual: res,
            refined,
            accurate: res <= tol,
        })
    }
}

/// r = b − A x
fn residual(a: &CscMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

/// One-shot direct solve of a square sparse system.
pub fn solve_sparse_linear(a: &CscMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(LinearSolver::analyze(a).solve(a, b)?.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n: usize, density: f64, seed: u64) -> CscMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(i, i, 4.0 + rng.random::<f64>());
            for j in 0..n {
                if i != j && rng.random::<f64>() < density {
                    t.push(i, j, rng.random::<f64>() * 2.0 - 1.0);
                }
            }
        }
        t.to_csc()
    }

    #[test]
    fn identity_returns_rhs() {
        for n in [3, 100] {
            let b: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
            let x = solve_sparse_linear(&CscMatrix::identity(n), &b).unwrap();
            assert_eq!(x, b);
        }
    }

    #[test]
    fn zero_row_is_singular() {
        for n in [5, 80] {
            let a = random_sparse(n, 0.05, 3);
            let mut t = Triplets::new(n, n);
            for j in 0..n {
                let (rows, vals) = a.col(j);
                for (&i, &v) in rows.iter().zip(vals) {
                    if i != 2 {
                        t.push(i, j, v);
                    }
                }
            }
            let r = solve_sparse_linear(&t.to_csc(), &vec![1.0; n]);
            assert!(matches!(r, Err(Error::SingularSystem { .. })), "{r:?}");
        }
    }

    #[test]
    fn zero_diagonal_needs_pivoting() {
        // [[0, 1], [1, 0]] embedded in a larger sparse system
        let n = 70;
        let mut t = Triplets::new(n, n);
        for i in 0..n / 2 {
            t.push(2 * i, 2 * i + 1, 1.0);
            t.push(2 * i + 1, 2 * i, 2.0);
            if i > 0 {
                t.push(2 * i, 2 * i - 1, 0.5);
            }
        }
        let a = t.to_csc();
        let b: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
        let s = LinearSolver::analyze(&a).solve(&a, &b).unwrap();
        assert!(s.accurate);
        let ax = a.mul_vec(&s.x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn symbolic_reuse_with_new_values() {
        let a = random_sparse(120, 0.02, 11);
        let solver = LinearSolver::analyze(&a);
        let mut b2 = a.clone();
        for v in &mut b2.values {
            *v *= 1.5;
        }
        let rhs = vec![1.0; 120];
        let x1 = solver.solve(&a, &rhs).unwrap().x;
        let x2 = solver.solve(&b2, &rhs).unwrap().x;
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u / 1.5 - v).abs() < 1e-12);
        }
    }
}
