//! Minimal CSR storage plus a sparse Cholesky factorization backed by faer.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};

use crate::error::{Error, Result};

/// Square sparse matrix in compressed row storage.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` entries; duplicates are summed.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        // bucket by row, then sort the few entries of each row by column
        let mut start = vec![0usize; n + 1];
        for &(r, c, _) in entries {
            assert!(r < n && c < n, "entry ({r}, {c}) outside {n}x{n}");
            start[r + 1] += 1;
        }
        for r in 0..n {
            start[r + 1] += start[r];
        }
        let mut fill = start.clone();
        let mut bucket = vec![(0usize, 0.0f64); entries.len()];
        for &(r, c, v) in entries {
            bucket[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        row_ptr.push(0);
        for r in 0..n {
            let row = &mut bucket[start[r]..start[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let first = cols.len();
            for &(c, v) in row.iter() {
                if cols.len() > first && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[idx] * x[self.cols[idx]];
            }
            *yr = acc;
        }
    }

    fn lower_triplets(&self) -> Vec<Triplet<usize, usize, f64>> {
        let mut t = Vec::with_capacity(self.nnz() / 2 + self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                if c <= r {
                    // faer stores column-major: (row, col) with row >= col
                    t.push(Triplet::new(r, c, v));
                }
            }
        }
        t
    }
}

/// Cholesky factor of a symmetric positive definite [`CsrMatrix`].
pub struct SpdFactor {
    n: usize,
    symbolic: SymbolicLlt<usize>,
    llt: Llt<usize, f64>,
}

impl SpdFactor {
    /// Factorizes using the lower triangle of `a` only.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mat = lower_csc(a)?;
        let symbolic = SymbolicLlt::try_new(mat.symbolic(), Side::Lower)
            .map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
        Self::numeric(a.n, symbolic, &mat)
    }

    /// Factorizes `a`, reusing the ordering and elimination tree of `self`.
    /// `a` must have the sparsity pattern of the matrix `self` was built from.
    pub fn refactor(&self, a: &CsrMatrix) -> Result<Self> {
        if a.n != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: a.n,
            });
        }
        Self::numeric(a.n, self.symbolic.clone(), &lower_csc(a)?)
    }

    fn numeric(n: usize, symbolic: SymbolicLlt<usize>, mat: &SparseColMat<usize, f64>) -> Result<Self> {
        let llt = Llt::try_new_with_symbolic(symbolic.clone(), mat.as_ref(), Side::Lower)
            .map_err(|e| Error::LinearSolver(format!("matrix not positive definite: {e:?}")))?;
        Ok(SpdFactor { n, symbolic, llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(rhs.len(), self.n);
        let view = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        self.llt.solve_in_place(view);
    }

    /// Solves for `k` right-hand sides stored column-major in `rhs`.
    pub fn solve_many_in_place(&self, rhs: &mut [f64], k: usize) {
        assert_eq!(rhs.len(), self.n * k);
        let view = MatMut::from_column_major_slice_mut(rhs, self.n, k);
        self.llt.solve_in_place(view);
    }
}

fn lower_csc(a: &CsrMatrix) -> Result<SparseColMat<usize, f64>> {
    SparseColMat::<usize, f64>::try_new_from_triplets(a.n, a.n, &a.lower_triplets())
        .map_err(|e| Error::LinearSolver(format!("{e:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0), (1, 1, 4.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.row_sum(1), 3.0);
    }

    #[test]
    fn cholesky_solves_to_residual_contract() {
        let n = 200;
        let a = laplacian_1d(n, 0.01);
        let f = SpdFactor::new(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut x = b.clone();
        f.solve_in_place(&mut x);
        let mut ax = vec![0.0; n];
        a.mul_vec(&x, &mut ax);
        let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * nb, "relative residual {}", res / nb);
    }

    #[test]
    fn refactor_matches_fresh_factorization() {
        let n = 50;
        let f = SpdFactor::new(&laplacian_1d(n, 0.1)).unwrap();
        let a = laplacian_1d(n, 0.7);
        let g = f.refactor(&a).unwrap();
        let h = SpdFactor::new(&a).unwrap();
        let mut x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut y = x.clone();
        g.solve_in_place(&mut x);
        h.solve_in_place(&mut y);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() <= 1e-13 * q.abs().max(1.0));
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = laplacian_1d(5, -3.0);
        assert!(SpdFactor::new(&a).is_err());
    }
}
