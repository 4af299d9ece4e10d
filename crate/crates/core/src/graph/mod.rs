//! Sparse graph storage and the propagation operators consumed by the models.
//!
//! Graphs are unweighted and undirected. Self-loops are never stored; the
//! operators that need a self-connection (`A + I`) add it analytically.

mod dense;
mod sparse;

use std::fs;
use std::path::Path;

pub use dense::{row_normalize, DenseMatrix};
pub use sparse::SparseMatrix;

use crate::error::{Error, Result};

/// Undirected graph in CSR form. Each edge is stored in both directions,
/// rows are sorted and free of duplicates and self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
}

impl Graph {
    /// Symmetrizes and deduplicates `edges`, dropping self-loops.
    pub fn from_edges(edges: &[(usize, usize)], num_nodes: usize) -> Result<Self> {
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for (pos, &(s, d)) in edges.iter().enumerate() {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::Invalid(format!(
                    "edge {} ({s}, {d}) references a node outside [0, {num_nodes})",
                    pos + 1
                )));
            }
            if s != d {
                buckets[s].push(d);
                buckets[d].push(s);
            }
        }
        Ok(Self::from_buckets(buckets))
    }

    fn from_buckets(mut buckets: Vec<Vec<usize>>) -> Self {
        let mut row_offsets = Vec::with_capacity(buckets.len() + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for b in &mut buckets {
            b.sort_unstable();
            b.dedup();
            col_indices.extend_from_slice(b);
            row_offsets.push(col_indices.len());
        }
        Self {
            num_nodes: buckets.len(),
            row_offsets,
            col_indices,
        }
    }

    /// Parses `src<TAB>dst` lines (0-based, `#` comments and blank lines
    /// ignored). Any run of whitespace is accepted as the separator.
    pub fn parse_edge_list(text: &str, num_nodes: usize, path: &Path) -> Result<Self> {
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            };
            let mut fields = trimmed.split_whitespace();
            let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(format!("expected `src<TAB>dst`, got {trimmed:?}")));
            };
            let s: usize = a
                .parse()
                .map_err(|_| parse_err(format!("invalid node index {a:?}")))?;
            let d: usize = b
                .parse()
                .map_err(|_| parse_err(format!("invalid node index {b:?}")))?;
            if s >= num_nodes || d >= num_nodes {
                return Err(parse_err(format!(
                    "edge ({s}, {d}) references a node outside [0, {num_nodes})"
                )));
            }
            if s != d {
                buckets[s].push(d);
                buckets[d].push(s);
            }
        }
        Ok(Self::from_buckets(buckets))
    }

    pub fn read_edge_file(path: &Path, num_nodes: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile {
                path: path.to_path_buf(),
            },
            _ => Error::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        Self::parse_edge_list(&text, num_nodes, path)
    }

    /// Edge list with `src < dst`, one line per undirected edge.
    pub fn to_edge_list_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.num_nodes {
            for &j in self.neighbors(i) {
                if i < j {
                    out.push_str(&format!("{i}\t{j}\n"));
                }
            }
        }
        out
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    /// `D_ii = Σ_j A_ij`.
    pub fn degree_vector(&self) -> Vec<f64> {
        (0..self.num_nodes).map(|i| self.degree(i) as f64).collect()
    }

    /// Relabels nodes so that new node `a` is old node `perm[a]`.
    pub fn permute(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.num_nodes);
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let buckets = perm
            .iter()
            .map(|&old| self.neighbors(old).iter().map(|&j| inverse[j]).collect())
            .collect();
        Self::from_buckets(buckets)
    }

    /// Builds a CSR matrix on the graph's sparsity pattern, optionally with
    /// the diagonal added. `value(i, j)` is evaluated for each stored entry.
    fn operator(&self, with_diagonal: bool, value: impl Fn(usize, usize) -> f64) -> SparseMatrix {
        let n = self.num_nodes;
        let extra = if with_diagonal { n } else { 0 };
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(self.col_indices.len() + extra);
        let mut vals = Vec::with_capacity(self.col_indices.len() + extra);
        offsets.push(0);
        for i in 0..n {
            let mut diag_pending = with_diagonal;
            for &j in self.neighbors(i) {
                if diag_pending && j > i {
                    cols.push(i);
                    vals.push(value(i, i));
                    diag_pending = false;
                }
                cols.push(j);
                vals.push(value(i, j));
            }
            if diag_pending {
                cols.push(i);
                vals.push(value(i, i));
            }
            offsets.push(cols.len());
        }
        SparseMatrix::from_csr(n, n, offsets, cols, vals)
            .expect("graph operators are structurally valid by construction")
    }

    /// Binary adjacency matrix `A`.
    pub fn adjacency(&self) -> SparseMatrix {
        self.operator(false, |_, _| 1.0)
    }

    /// `L̂ = (D+I)^{-1/2} (A+I) (D+I)^{-1/2}`.
    pub fn renormalized_propagation(&self) -> SparseMatrix {
        let d_hat: Vec<f64> = (0..self.num_nodes).map(|i| self.degree(i) as f64 + 1.0).collect();
        self.operator(true, |i, j| 1.0 / (d_hat[i] * d_hat[j]).sqrt())
    }

    /// Splits `L̂` into its node term and neighbor term:
    /// `L̂ = diag(node_scale) + neighbor`, with `node_scale_i = 1/(d_i+1)` and
    /// `neighbor = (D+I)^{-1/2} A (D+I)^{-1/2}`.
    pub fn renormalized_split(&self) -> (Vec<f64>, SparseMatrix) {
        let d_hat: Vec<f64> = (0..self.num_nodes).map(|i| self.degree(i) as f64 + 1.0).collect();
        let node_scale = d_hat.iter().map(|d| 1.0 / d).collect();
        let neighbor = self.operator(false, |i, j| 1.0 / (d_hat[i] * d_hat[j]).sqrt());
        (node_scale, neighbor)
    }

    /// `L = I - D^{-1/2} A D^{-1/2}` with `d^{-1/2} := 0` for isolated nodes.
    pub fn normalized_laplacian(&self) -> SparseMatrix {
        // Off-diagonal entries only exist between nodes of positive degree.
        self.operator(true, |i, j| {
            if i == j {
                1.0
            } else {
                -1.0 / ((self.degree(i) * self.degree(j)) as f64).sqrt()
            }
        })
    }

    /// `D^{-1} A`; rows of isolated nodes are empty (all zero).
    pub fn mean_propagation(&self) -> SparseMatrix {
        self.operator(false, |i, _| 1.0 / self.degree(i) as f64)
    }
}
