//! Sparse linear algebra used by the power flow and OPF solvers.
//!
//! Matrices are assembled in triplet form and compressed to CSC before
//! factorization. The LU factorization is left-looking with threshold
//! partial pivoting and a minimum-degree column preorder, which keeps fill-in
//! manageable when Jacobians and KKT systems are refactored every iteration.

mod lu;

pub use lu::{lu_factorize, solve_linear, LuFactorization};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix entry ({row}, {col}) out of bounds for {rows}x{cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is structurally singular at pivot column {col}")]
    StructurallySingular { col: usize },
    #[error("matrix is numerically singular at pivot column {col}")]
    NumericallySingular { col: usize },
    #[error("expected square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: matrix is {expected}, vector has length {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Triplet-form sparse matrix. Duplicate entries are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SparseMatrix::new(n, n);
        for i in 0..n {
            m.push(i, i, 1.0);
        }
        m
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        SparseMatrix {
            rows,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Append one entry. Entries on the same (row, col) accumulate.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.entries.push((row, col, value));
    }

    /// Compress to CSC, summing duplicates. Deterministic for a given
    /// entry multiset: entries are sorted by (col, row) before merging.
    pub fn to_csc(&self) -> Result<CscMatrix, NumericsError> {
        for &(r, c, _) in &self.entries {
            if r >= self.rows || c >= self.cols {
                return Err(NumericsError::IndexOutOfBounds {
                    row: r,
                    col: c,
                    rows: self.rows,
                    cols: self.cols,
                });
            }
        }
        let mut sorted = self.entries.clone();
        sorted.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }

        let mut col_ptr = vec![0usize; self.cols + 1];
        for &(_, c, _) in &merged {
            col_ptr[c + 1] += 1;
        }
        for c in 0..self.cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(CscMatrix {
            rows: self.rows,
            cols: self.cols,
            col_ptr,
            row_idx: merged.iter().map(|e| e.0).collect(),
            values: merged.iter().map(|e| e.2).collect(),
        })
    }

    /// y = A x on the uncompressed triplets.
    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if x.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        Ok(y)
    }

    /// y = A^T x on the uncompressed triplets.
    pub fn transpose_mat_vec(&self, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if x.len() != self.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.cols];
        for &(r, c, v) in &self.entries {
            y[c] += v * x[r];
        }
        Ok(y)
    }
}

/// Compressed sparse column matrix.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.col_ptr[c];
        let hi = self.col_ptr[c + 1];
        self.row_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if x.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.rows];
        for c in 0..self.cols {
            let xc = x[c];
            if xc != 0.0 {
                for (r, v) in self.col(c) {
                    y[r] += v * xc;
                }
            }
        }
        Ok(y)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.col(col)
            .find(|&(r, _)| r == row)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }
}
