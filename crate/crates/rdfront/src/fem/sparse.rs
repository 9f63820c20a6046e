//! Compressed-row sparse matrices for assembled operators.

use crate::error::{Error, Result};
use std::path::Path;

/// CSR matrix. Column indices are sorted and unique within each row.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build the sparsity structure from (row, col) pairs; values start at 0.
    /// Duplicate pairs collapse to one entry.
    pub fn from_pairs(n_rows: usize, n_cols: usize, mut pairs: Vec<(u32, u32)>) -> SparseMatrix {
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_offsets = vec![0usize; n_rows + 1];
        for &(i, _) in &pairs {
            row_offsets[i as usize + 1] += 1;
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices: Vec<u32> = pairs.iter().map(|&(_, j)| j).collect();
        let values = vec![0.0; col_indices.len()];
        SparseMatrix { n_rows, n_cols, row_offsets, col_indices, values }
    }

    /// Square matrix from (row, col, value) triplets; duplicates accumulate.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> SparseMatrix {
        let pairs: Vec<(u32, u32)> = triplets.iter().map(|&(i, j, _)| (i as u32, j as u32)).collect();
        let mut m = SparseMatrix::from_pairs(n, n, pairs);
        for &(i, j, v) in triplets {
            m.add_at(i, j, v);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    fn entry_index(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[r.clone()]
            .binary_search(&(j as u32))
            .ok()
            .map(|k| r.start + k)
    }

    /// Add into an existing structural entry. Panics if (i, j) is not in the
    /// sparsity pattern; assembly always pre-builds the pattern.
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .entry_index(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entry_index(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn zero_values(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[k] * x[self.col_indices[k] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        assert_eq!(self.n_rows, self.n_cols);
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    /// Row sums; the lumped form of a mass matrix.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| {
                let (_, vals) = self.row(i);
                vals.iter().sum()
            })
            .collect()
    }

    /// Frobenius norm.
    pub fn norm_frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Dense copy, for small oracles and local factorizations.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[i][*c as usize] = *v;
            }
        }
        d
    }

    /// In-place scaling `A[i][j] *= row_scale[i] * col_scale[j]`.
    pub fn scale_rows_cols(&mut self, row_scale: &[f64], col_scale: &[f64]) {
        assert_eq!(row_scale.len(), self.n_rows);
        assert_eq!(col_scale.len(), self.n_cols);
        for i in 0..self.n_rows {
            let r = self.row_offsets[i]..self.row_offsets[i + 1];
            let s = row_scale[i];
            for k in r {
                self.values[k] *= s * col_scale[self.col_indices[k] as usize];
            }
        }
    }

    /// Pattern symmetry check: (i, j) present implies (j, i) present.
    pub fn pattern_is_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            for &j in cols {
                if self.entry_index(j as usize, i).is_none() {
                    return false;
                }
            }
        }
        true
    }

    /// Write in Matrix Market coordinate format (1-based, general real).
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        use std::io::Write;
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {}", i + 1, *c as usize + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Row-sum mass lumping. Fails on non-positive lumped entries, which indicate
/// a degenerate mesh.
pub fn lump_mass(mass: &SparseMatrix) -> Result<Vec<f64>> {
    let lumped = mass.row_sums();
    for (i, &v) in lumped.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::Validation(format!(
                "lumped mass entry {i} is non-positive ({v}); mesh is degenerate"
            )));
        }
    }
    Ok(lumped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_accumulate_and_sort() {
        let m = SparseMatrix::from_triplets(
            3,
            &[(0, 0, 1.0), (0, 2, 2.0), (0, 0, 3.0), (2, 1, -1.0)],
        );
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(0, 2), 2.0);
        assert_eq!(m.get(2, 1), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        let (cols, _) = m.row(0);
        assert_eq!(cols, &[0, 2]);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]);
        let mut y = vec![0.0; 2];
        m.matvec(&[1.0, 2.0], &mut y);
        assert_eq!(y, vec![6.0, 7.0]);
    }

    #[test]
    fn lumping_a_diagonal_matrix_returns_its_diagonal() {
        let m = SparseMatrix::from_triplets(3, &[(0, 0, 2.0), (1, 1, 5.0), (2, 2, 0.5)]);
        assert_eq!(lump_mass(&m).unwrap(), vec![2.0, 5.0, 0.5]);
    }

    #[test]
    fn nonpositive_lumped_entry_is_an_error() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(lump_mass(&m).is_err());
    }

    #[test]
    fn matrix_market_export_round_trips_through_naive_parse() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.5), (1, 0, -2.0), (1, 1, 3.0)]);
        let dir = std::env::temp_dir().join("rdfront_mm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.mtx");
        m.write_matrix_market(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("%%MatrixMarket"));
        assert_eq!(lines.next().unwrap(), "2 2 3");
        let entries: Vec<&str> = lines.collect();
        assert_eq!(entries, vec!["1 1 1.5", "2 1 -2", "2 2 3"]);
    }
}
