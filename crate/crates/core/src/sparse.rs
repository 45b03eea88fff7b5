use crate::dense::DenseMatrix;
use crate::error::{EcvError, Result};

/// Compressed sparse row matrix of finite reals with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// What to do when a triplet list names the same position twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Duplicates {
    Sum,
    Reject,
}

impl CsrMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets in any order. Explicit zeros
    /// (after summing) are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        duplicates: Duplicates,
    ) -> Result<Self> {
        for &(i, j, v) in &triplets {
            if i >= rows || j >= cols {
                return Err(EcvError::DimensionMismatch(format!(
                    "entry ({i}, {j}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(EcvError::NonFinite);
            }
        }
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut row_of = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                match duplicates {
                    Duplicates::Sum => *values.last_mut().unwrap() += v,
                    Duplicates::Reject => {
                        return Err(EcvError::InvalidParameter(format!(
                            "duplicate entry ({i}, {j})"
                        )))
                    }
                }
                continue;
            }
            last = Some((i, j));
            indices.push(j);
            values.push(v);
            row_of.push(i);
        }
        let mut keep_indices = Vec::with_capacity(indices.len());
        let mut keep_values = Vec::with_capacity(values.len());
        for ((j, v), i) in indices.into_iter().zip(values).zip(row_of) {
            if v != 0.0 {
                indptr[i + 1] += 1;
                keep_indices.push(j);
                keep_values.push(v);
            }
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices: keep_indices,
            values: keep_values,
        })
    }

    /// Builds from per-row entry lists that are already sorted by column, with
    /// no duplicates and no zeros.
    pub(crate) fn from_sorted_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in &rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for &(j, v) in row {
                debug_assert!(j < cols && v != 0.0 && v.is_finite());
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
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

    /// Entries of row `i` as `(col, value)` in increasing column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// All stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Keeps the entries for which `keep(i, j, value)` holds.
    pub fn filter(&self, mut keep: impl FnMut(usize, usize, f64) -> bool) -> Self {
        let rows = (0..self.rows)
            .map(|i| self.row(i).filter(|&(j, v)| keep(i, j, v)).collect())
            .collect();
        Self::from_sorted_rows(self.cols, rows)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.iter() {
            out.set(i, j, v);
        }
        out
    }
}
