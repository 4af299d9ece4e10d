use crate::error::{Error, Result};

use super::DenseMatrix;

/// Square or rectangular CSR matrix with `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates and wraps a CSR triple. Column indices must be strictly
    /// increasing within each row and every value finite.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::Invalid(format!("CSR: {msg}")));
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return bad(format!("row_offsets has length {}", row_offsets.len()));
        }
        if row_offsets[rows] != col_indices.len() || col_indices.len() != values.len() {
            return bad("row_offsets[N] does not match the number of entries".into());
        }
        for i in 0..rows {
            let (s, e) = (row_offsets[i], row_offsets[i + 1]);
            if s > e {
                return bad(format!("row_offsets decreases at row {i}"));
            }
            let row = &col_indices[s..e];
            if row.iter().any(|&c| c >= cols) {
                return bad(format!("column index out of range in row {i}"));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("columns not strictly increasing in row {i}"));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value".into());
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
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

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `i` in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.col_indices[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    /// Entry lookup by binary search; zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        match self.col_indices[s..e].binary_search(&j) {
            Ok(pos) => self.values[s + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                d.set(i, j, v);
            }
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// `alpha·I + self` for a square matrix.
    pub fn add_scaled_identity(&self, alpha: f64) -> Result<SparseMatrix> {
        if self.rows != self.cols {
            return Err(Error::shape(
                "add_scaled_identity",
                format!("{}x{} is not square", self.rows, self.cols),
            ));
        }
        let mut offsets = Vec::with_capacity(self.rows + 1);
        let mut cols = Vec::with_capacity(self.nnz() + self.rows);
        let mut vals = Vec::with_capacity(self.nnz() + self.rows);
        offsets.push(0);
        for i in 0..self.rows {
            let mut diag_done = false;
            for (j, v) in self.row(i) {
                if !diag_done && j >= i {
                    if j == i {
                        cols.push(i);
                        vals.push(v + alpha);
                        diag_done = true;
                        continue;
                    }
                    cols.push(i);
                    vals.push(alpha);
                    diag_done = true;
                }
                cols.push(j);
                vals.push(v);
            }
            if !diag_done {
                cols.push(i);
                vals.push(alpha);
            }
            offsets.push(cols.len());
        }
        SparseMatrix::from_csr(self.rows, self.cols, offsets, cols, vals)
    }

    /// Sparse · dense. Each output row accumulates its terms in ascending
    /// column order, so results are bit-reproducible.
    pub fn spmm(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != d.rows() {
            return Err(Error::shape(
                "spmm",
                format!("{}x{} · {:?}", self.rows, self.cols, d.shape()),
            ));
        }
        let n = d.cols();
        let mut out = DenseMatrix::zeros(self.rows, n);
        for i in 0..self.rows {
            let o_row = out.row_mut(i);
            for (j, v) in self.row(i) {
                for (o, &x) in o_row.iter_mut().zip(d.row(j)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · d`, used for the backward pass of [`SparseMatrix::spmm`].
    pub fn spmm_transpose(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != d.rows() {
            return Err(Error::shape(
                "spmm_transpose",
                format!("({}x{})ᵀ · {:?}", self.rows, self.cols, d.shape()),
            ));
        }
        let n = d.cols();
        let mut out = DenseMatrix::zeros(self.cols, n);
        for i in 0..self.rows {
            let g_row = d.row(i);
            for (j, v) in self.row(i) {
                for (o, &g) in out.row_mut(j).iter_mut().zip(g_row) {
                    *o += v * g;
                }
            }
        }
        Ok(out)
    }

    /// Symmetric permutation `P·S·Pᵀ` where new node `a` is old node `perm[a]`.
    pub fn permute(&self, perm: &[usize]) -> SparseMatrix {
        assert_eq!(self.rows, self.cols);
        assert_eq!(perm.len(), self.rows);
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut offsets = vec![0];
        let mut cols = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        for &old in perm {
            let mut entries: Vec<(usize, f64)> =
                self.row(old).map(|(j, v)| (inverse[j], v)).collect();
            entries.sort_by_key(|e| e.0);
            for (j, v) in entries {
                cols.push(j);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            row_offsets: offsets,
            col_indices: cols,
            values: vals,
        }
    }
}
