//! Compressed sparse column matrices and the small set of operations the
//! assembly, solver, and diagnostics layers need: triplet accumulation,
//! matvec, submatrix restriction, symmetric Dirichlet elimination, and a
//! dense bridge for the eigenvalue paths.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("entry ({0}, {1}) outside {2} x {3} matrix")]
    IndexOutOfBounds(usize, usize, usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Unordered coordinate accumulator; duplicates sum on conversion.
#[derive(Debug, Clone)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) -> Result<(), SparseError> {
        if row >= self.nrows || col >= self.ncols {
            return Err(SparseError::IndexOutOfBounds(
                row, col, self.nrows, self.ncols,
            ));
        }
        if val != 0.0 {
            self.entries.push((row, col, val));
        }
        Ok(())
    }

    /// Merge another accumulator at a block offset.
    pub fn push_block(
        &mut self,
        row_offset: usize,
        col_offset: usize,
        other: &Triplets,
    ) -> Result<(), SparseError> {
        for &(i, j, v) in &other.entries {
            self.push(row_offset + i, col_offset + j, v)?;
        }
        Ok(())
    }

    /// Transposed merge at a block offset.
    pub fn push_block_transposed(
        &mut self,
        row_offset: usize,
        col_offset: usize,
        other: &Triplets,
    ) -> Result<(), SparseError> {
        for &(i, j, v) in &other.entries {
            self.push(row_offset + j, col_offset + i, v)?;
        }
        Ok(())
    }

    /// Scale every accumulated entry.
    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.2 *= factor;
        }
    }

    pub fn to_csc(&self) -> CscMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &(_, j, _) in &self.entries {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut rowidx = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        let mut cursor = counts.clone();
        for &(i, j, v) in &self.entries {
            let slot = cursor[j];
            rowidx[slot] = i;
            vals[slot] = v;
            cursor[j] += 1;
        }
        // Sort each column by row and merge duplicates.
        let mut colptr = vec![0usize; self.ncols + 1];
        let mut out_rows = Vec::with_capacity(self.entries.len());
        let mut out_vals = Vec::with_capacity(self.entries.len());
        for j in 0..self.ncols {
            let lo = counts[j];
            let hi = counts[j + 1];
            let mut col: Vec<(usize, f64)> = (lo..hi).map(|k| (rowidx[k], vals[k])).collect();
            col.sort_unstable_by_key(|&(i, _)| i);
            for (i, v) in col {
                if out_rows.len() > colptr[j] && *out_rows.last().unwrap() == i {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_rows.push(i);
                    out_vals.push(v);
                }
            }
            colptr[j + 1] = out_rows.len();
        }
        CscMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            colptr,
            rowidx: out_rows,
            vals: out_vals,
        }
    }
}

/// Compressed sparse column storage with sorted, duplicate-free columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CscMatrix {
    pub fn nnz(&self) -> usize {
        self.rowidx.len()
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowidx: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Column range accessor: (rows, values) slices for column j.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let lo = self.colptr[j];
        let hi = self.colptr[j + 1];
        (&self.rowidx[lo..hi], &self.vals[lo..hi])
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.ncols {
            return Err(SparseError::DimensionMismatch(format!(
                "matvec: {} columns, {} vector entries",
                self.ncols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
        Ok(y)
    }

    /// y = A^T x without forming the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.nrows {
            return Err(SparseError::DimensionMismatch(format!(
                "matvec_transpose: {} rows, {} vector entries",
                self.nrows,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.ncols];
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            let mut acc = 0.0;
            for (&i, &v) in rows.iter().zip(vals) {
                acc += v * x[i];
            }
            y[j] = acc;
        }
        Ok(y)
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut t = Triplets::new(self.ncols, self.nrows);
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                t.push(j, i, v).expect("transpose within bounds");
            }
        }
        t.to_csc()
    }

    /// Keep the listed rows and columns (indices strictly increasing).
    pub fn restrict(&self, keep_rows: &[usize], keep_cols: &[usize]) -> CscMatrix {
        let mut row_map = vec![usize::MAX; self.nrows];
        for (new, &old) in keep_rows.iter().enumerate() {
            row_map[old] = new;
        }
        let mut t = Triplets::new(keep_rows.len(), keep_cols.len());
        for (new_j, &old_j) in keep_cols.iter().enumerate() {
            let (rows, vals) = self.col(old_j);
            for (&i, &v) in rows.iter().zip(vals) {
                if row_map[i] != usize::MAX {
                    t.push(row_map[i], new_j, v).expect("restricted in bounds");
                }
            }
        }
        t.to_csc()
    }

    /// Symmetric Dirichlet elimination: rows and columns in `constrained`
    /// are replaced by identity, the right-hand side absorbs the column
    /// contribution of the prescribed values, and constrained rhs entries
    /// are set to those values. The matrix must be square.
    pub fn eliminate_dirichlet(
        &self,
        rhs: &mut [f64],
        constrained: &[(usize, f64)],
    ) -> Result<CscMatrix, SparseError> {
        if self.nrows != self.ncols || rhs.len() != self.nrows {
            return Err(SparseError::DimensionMismatch(
                "eliminate_dirichlet needs square matrix and matching rhs".into(),
            ));
        }
        let mut is_constrained = vec![false; self.nrows];
        let mut value = vec![0.0; self.nrows];
        for &(i, g) in constrained {
            if i >= self.nrows {
                return Err(SparseError::IndexOutOfBounds(i, i, self.nrows, self.ncols));
            }
            is_constrained[i] = true;
            value[i] = g;
        }
        let mut t = Triplets::new(self.nrows, self.ncols);
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            if is_constrained[j] {
                // Column of a constrained dof: move K[:, j] * g_j to the rhs.
                for (&i, &v) in rows.iter().zip(vals) {
                    if !is_constrained[i] {
                        rhs[i] -= v * value[j];
                    }
                }
            } else {
                for (&i, &v) in rows.iter().zip(vals) {
                    if !is_constrained[i] {
                        t.push(i, j, v)?;
                    }
                }
            }
        }
        for i in 0..self.nrows {
            if is_constrained[i] {
                t.push(i, i, 1.0)?;
                rhs[i] = value[i];
            }
        }
        Ok(t.to_csc())
    }

    /// Entries on and below the diagonal (square matrices).
    pub fn lower_triangle(&self) -> CscMatrix {
        let mut t = Triplets::new(self.nrows, self.ncols);
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                if i >= j {
                    t.push(i, j, v).expect("in bounds");
                }
            }
        }
        t.to_csc()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.nrows.min(self.ncols);
        let mut d = vec![0.0; n];
        for j in 0..n {
            let (rows, vals) = self.col(j);
            if let Ok(k) = rows.binary_search(&j) {
                d[j] = vals[k];
            }
        }
        d
    }

    /// Symmetric scaling S A S with S = diag(s).
    pub fn scale_symmetric(&self, s: &[f64]) -> Result<CscMatrix, SparseError> {
        if s.len() != self.nrows || self.nrows != self.ncols {
            return Err(SparseError::DimensionMismatch(
                "scale_symmetric needs square matrix and matching scale vector".into(),
            ));
        }
        let mut out = self.clone();
        for j in 0..self.ncols {
            let lo = out.colptr[j];
            let hi = out.colptr[j + 1];
            for k in lo..hi {
                out.vals[k] *= s[out.rowidx[k]] * s[j];
            }
        }
        Ok(out)
    }

    /// Back to an accumulator, e.g. for block composition.
    pub fn to_triplets(&self) -> Triplets {
        let mut t = Triplets::new(self.nrows, self.ncols);
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                t.push(i, j, v).expect("indices within bounds");
            }
        }
        t
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Largest absolute asymmetry max |A - A^T| (square matrices).
    pub fn symmetry_gap(&self) -> f64 {
        let t = self.transpose();
        let mut gap: f64 = 0.0;
        for j in 0..self.ncols {
            let (ra, va) = self.col(j);
            let (rb, vb) = t.col(j);
            let (mut ka, mut kb) = (0, 0);
            while ka < ra.len() || kb < rb.len() {
                let ia = ra.get(ka).copied().unwrap_or(usize::MAX);
                let ib = rb.get(kb).copied().unwrap_or(usize::MAX);
                if ia == ib {
                    gap = gap.max((va[ka] - vb[kb]).abs());
                    ka += 1;
                    kb += 1;
                } else if ia < ib {
                    gap = gap.max(va[ka].abs());
                    ka += 1;
                } else {
                    gap = gap.max(vb[kb].abs());
                    kb += 1;
                }
            }
        }
        gap
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
