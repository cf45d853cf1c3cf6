//! Compressed sparse row adjacency used by every propagation step.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-compressed weighted adjacency.
///
/// Column indices within a row are strictly increasing and every weight is
/// finite. Instances are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseAdjacency {
    /// An `n_rows x n_cols` matrix with no stored entries.
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        SparseAdjacency {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds the canonical representation from an unordered edge list.
    pub fn build_csr(edges: &[(usize, usize, f64)], n_rows: usize, n_cols: usize) -> Result<Self> {
        let mut sorted = Vec::with_capacity(edges.len());
        for &(row, col, w) in edges {
            if row >= n_rows || col >= n_cols {
                return Err(Error::IndexOutOfBounds {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
            if !w.is_finite() {
                return Err(Error::NonFiniteWeight { row, col });
            }
            sorted.push((row, col, w));
        }
        sorted.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for pair in sorted.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::DuplicateEdge {
                    row: pair[0].0,
                    col: pair[0].1,
                });
            }
        }

        let mut row_offsets = vec![0usize; n_rows + 1];
        for &(r, _, _) in &sorted {
            row_offsets[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        let col_indices = sorted.iter().map(|e| e.1).collect();
        let values = sorted.iter().map(|e| e.2).collect();
        Ok(SparseAdjacency {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Stores every nonzero entry of a dense matrix.
    pub fn from_dense(dense: ArrayView2<f64>) -> Result<Self> {
        let mut edges = Vec::new();
        for ((r, c), &w) in dense.indexed_iter() {
            if w != 0.0 {
                edges.push((r, c, w));
            }
        }
        Self::build_csr(&edges, dense.nrows(), dense.ncols())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for r in 0..self.n_rows {
            for (c, w) in self.row(r) {
                out[[r, c]] = w;
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
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

    /// `(col, weight)` pairs of one row in increasing column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    /// Iterates all stored entries as `(row, col, weight)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, w)| (r, c, w)))
    }

    pub fn transpose(&self) -> SparseAdjacency {
        let edges: Vec<_> = self.triplets().map(|(r, c, w)| (c, r, w)).collect();
        // Entries are unique and in bounds by construction.
        Self::build_csr(&edges, self.n_cols, self.n_rows).expect("transpose of a valid adjacency")
    }

    /// Replaces each weight `a_ij` with `a_ij / sqrt(d_i d_j)` where `d_i` is
    /// the row sum of the input. Entries touching a zero-degree node become 0.
    pub fn sym_degree_normalize(&self) -> Result<SparseAdjacency> {
        let mut degree = vec![0.0f64; self.n_rows.max(self.n_cols)];
        for (r, c, w) in self.triplets() {
            if w < 0.0 {
                return Err(Error::NegativeWeight { row: r, col: c, weight: w });
            }
            degree[r] += w;
        }
        let inv_sqrt: Vec<f64> = degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut out = self.clone();
        for r in 0..self.n_rows {
            for idx in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[idx];
                out.values[idx] = self.values[idx] * (inv_sqrt[r] * inv_sqrt[c]);
            }
        }
        Ok(out)
    }

    /// Dense product `self * x`, one output row per adjacency row.
    pub fn propagate(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n_cols, "propagate: row count mismatch");
        let mut out = Array2::zeros((self.n_rows, x.ncols()));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(r, mut out_row)| {
                for (c, w) in self.row(r) {
                    out_row.scaled_add(w, &x.row(c));
                }
            });
        out
    }

    /// True when `a_ij == a_ji` for every stored entry.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && *self == self.transpose()
    }
}
