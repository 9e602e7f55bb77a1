//! Sparse LLᵀ factorization of symmetric positive definite matrices, backed
//! by faer's supernodal/simplicial Cholesky with approximate minimum degree
//! ordering. Runs sequentially so repeated factorizations are bitwise
//! reproducible.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Mat, Par, Side};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

pub struct SpdFactor {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    n: usize,
}

impl std::fmt::Debug for SpdFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdFactor")
            .field("n", &self.n)
            .field("factor_nnz", &self.values.len())
            .finish()
    }
}

impl SpdFactor {
    /// Factorizes a symmetric matrix; only one triangle is read.
    pub fn new(matrix: &SparseOperator) -> Result<Self> {
        let n = matrix.rows();
        if n != matrix.cols() {
            return Err(Error::Dimension(format!(
                "cholesky needs a square matrix, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        // Row j of a symmetric CSR matrix, restricted to columns >= j, is
        // column j of its lower triangle in CSC form.
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(matrix.nnz() / 2 + n);
        let mut vals = Vec::with_capacity(matrix.nnz() / 2 + n);
        col_ptr.push(0usize);
        for j in 0..n {
            for (c, v) in matrix.row(j) {
                if c >= j {
                    row_idx.push(c);
                    vals.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        let csc = SparseColMat::<usize, f64>::new(SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx), vals);

        let symbolic = factorize_symbolic_cholesky(
            csc.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(|e| Error::Backend(format!("{e:?}")))?;

        let mut values = vec![0.0; symbolic.len_val()];
        let par = Par::Seq;
        let mut buf = MemBuffer::new(symbolic.factorize_numeric_llt_scratch::<f64>(par, Default::default()));
        symbolic
            .factorize_numeric_llt(
                &mut values,
                csc.as_ref(),
                Side::Lower,
                LltRegularization::default(),
                par,
                MemStack::new(&mut buf),
                Default::default(),
            )
            .map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;

        Ok(SpdFactor { symbolic, values, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries of the triangular factor.
    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// Solves `A X = B` for a column-major right-hand side block with
    /// `ncols` columns, overwriting it with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64], ncols: usize) {
        assert_eq!(rhs.len(), self.n * ncols, "rhs size mismatch");
        if self.n == 0 {
            return;
        }
        let mut block = Mat::<f64>::from_fn(self.n, ncols, |i, j| rhs[j * self.n + i]);
        let par = Par::Seq;
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(ncols, par));
        LltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            block.as_mut(),
            par,
            MemStack::new(&mut buf),
        );
        for j in 0..ncols {
            for i in 0..self.n {
                rhs[j * self.n + i] = block[(i, j)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        // Tridiagonal [2 -1; -1 2 -1; -1 2]
        let a = SparseOperator::from_triplets(
            3,
            3,
            [(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)],
        );
        let f = SpdFactor::new(&a).unwrap();
        let mut rhs = vec![1.0, 0.0, 1.0, 0.0, 0.0, 4.0];
        f.solve_in_place(&mut rhs, 2);
        let expected = [1.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        for (g, e) in rhs.iter().zip(expected) {
            assert!((g - e).abs() < 1e-14, "{rhs:?}");
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = SparseOperator::from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(SpdFactor::new(&a), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn rejects_singular() {
        let a = SparseOperator::from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(SpdFactor::new(&a).is_err());
    }
}
