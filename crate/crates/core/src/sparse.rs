//! Compressed sparse row matrices used for every assembled operator.

use std::io::{self, Write};

/// Entries with magnitude below this are dropped on construction.
pub const PRUNE_TOLERANCE: f64 = 1e-14;

/// Immutable CSR matrix. Column indices are sorted within each row and
/// duplicates are summed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseOperator {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            symmetric: rows == cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self::from_triplets(diag.len(), diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
            .with_symmetry(true)
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates and
    /// pruning near-zero sums.
    pub fn from_triplets(rows: usize, cols: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
        }
        entries.sort_unstable_by_key(|e| (e.0, e.1));

        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut iter = entries.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                v += v2;
                iter.next();
            }
            if v.abs() >= PRUNE_TOLERANCE {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }

    /// Sets the symmetry flag. Debug builds verify it.
    pub fn with_symmetry(mut self, symmetric: bool) -> Self {
        debug_assert!(!symmetric || self.is_symmetric(1e-12 * self.max_abs().max(1.0)));
        self.symmetric = symmetric;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols && self.triplets().all(|(r, c, v)| (self.get(c, r) - v).abs() <= tol)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                col_idx[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        SparseOperator {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
            symmetric: self.symmetric,
        }
    }

    /// Sparse product `self * rhs` (row-wise Gustavson accumulation).
    pub fn matmul(&self, rhs: &SparseOperator) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut acc = vec![0.0; rhs.cols];
        let mut mark = vec![usize::MAX; rhs.cols];
        let mut touched = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..self.rows {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c].abs() >= PRUNE_TOLERANCE {
                    col_idx.push(c);
                    values.push(acc[c]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            rows: self.rows,
            cols: rhs.cols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }

    /// `selfᵀ · diag(weights) · self`, symmetric by construction.
    pub fn gram(&self, weights: &SparseOperator) -> Self {
        let t = self.transpose();
        let out = t.matmul(&weights.matmul(self));
        out.symmetrized()
    }

    /// Averages the matrix with its transpose, removing round-off asymmetry.
    pub fn symmetrized(&self) -> Self {
        assert_eq!(self.rows, self.cols);
        let t = self.transpose();
        self.add_scaled(0.5, &t, 0.5).with_symmetry(true)
    }

    /// `alpha * self + beta * other`.
    pub fn add_scaled(&self, alpha: f64, other: &SparseOperator, beta: f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add dimension mismatch");
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(col_idx.capacity());
        row_ptr.push(0);
        fn push(col_idx: &mut Vec<usize>, values: &mut Vec<f64>, c: usize, v: f64) {
            if v.abs() >= PRUNE_TOLERANCE {
                col_idx.push(c);
                values.push(v);
            }
        }
        for r in 0..self.rows {
            let (mut a, mut b) = (self.row(r).peekable(), other.row(r).peekable());
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (Some((ca, va)), Some((cb, vb))) if ca == cb => {
                        push(&mut col_idx, &mut values, ca, alpha * va + beta * vb);
                        a.next();
                        b.next();
                    }
                    (Some((ca, va)), Some((cb, _))) if ca < cb => {
                        push(&mut col_idx, &mut values, ca, alpha * va);
                        a.next();
                    }
                    (_, Some((cb, vb))) => {
                        push(&mut col_idx, &mut values, cb, beta * vb);
                        b.next();
                    }
                    (Some((ca, va)), None) => {
                        push(&mut col_idx, &mut values, ca, alpha * va);
                        a.next();
                    }
                    (None, None) => break,
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
            symmetric: self.symmetric && other.symmetric,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Kronecker product `self ⊗ I_n`.
    pub fn kron_identity(&self, n: usize) -> Self {
        let out = Self::from_triplets(
            self.rows * n,
            self.cols * n,
            self.triplets()
                .flat_map(|(r, c, v)| (0..n).map(move |k| (n * r + k, n * c + k, v))),
        );
        SparseOperator {
            symmetric: self.symmetric,
            ..out
        }
    }

    /// Submatrix with the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.cols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        row_ptr.push(0);
        for &r in rows {
            scratch.clear();
            scratch.extend(self.row(r).filter(|(c, _)| col_map[*c] != usize::MAX).map(|(c, v)| (col_map[c], v)));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            rows: rows.len(),
            cols: cols.len(),
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Product with a dense matrix stored as rows of three components.
    pub fn mul_rows3(&self, x: &[[f64; 3]]) -> Vec<[f64; 3]> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let mut acc = [0.0; 3];
                for (c, v) in self.row(r) {
                    for k in 0..3 {
                        acc[k] += v * x[c][k];
                    }
                }
                acc
            })
            .collect()
    }

    /// Dense copy, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            out[r][c] = v;
        }
        out
    }

    /// Writes MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{} {} {:?}", r + 1, c + 1, v)?;
        }
        out.flush()
    }
}
