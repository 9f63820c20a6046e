//! Zero fill-in incomplete LU factorization on the CSR pattern.

use super::SolveError;
use crate::fem::SparseMatrix;

#[derive(Debug, Clone)]
pub struct Ilu0 {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
    diag_ptr: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &SparseMatrix) -> Result<Ilu0, SolveError> {
        let n = a.n_rows();
        assert_eq!(n, a.n_cols());
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(a.nnz());
        let mut values = Vec::with_capacity(a.nnz());
        row_offsets.push(0);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            col_indices.extend_from_slice(cols);
            values.extend_from_slice(vals);
            row_offsets.push(col_indices.len());
        }

        let mut diag_ptr = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_offsets[i]..row_offsets[i + 1] {
                if col_indices[k] as usize == i {
                    diag_ptr[i] = k;
                }
            }
            if diag_ptr[i] == usize::MAX {
                return Err(SolveError::SingularMatrix { pivot: i });
            }
        }

        // IKJ variant restricted to the existing pattern.
        let mut col_pos = vec![usize::MAX; n];
        for i in 0..n {
            let row_range = row_offsets[i]..row_offsets[i + 1];
            for k in row_range.clone() {
                col_pos[col_indices[k] as usize] = k;
            }
            for kk in row_range.clone() {
                let k = col_indices[kk] as usize;
                if k >= i {
                    break;
                }
                let dkk = values[diag_ptr[k]];
                if dkk == 0.0 || !dkk.is_finite() {
                    return Err(SolveError::SingularMatrix { pivot: k });
                }
                let f = values[kk] / dkk;
                values[kk] = f;
                for jj in diag_ptr[k] + 1..row_offsets[k + 1] {
                    let j = col_indices[jj] as usize;
                    let pos = col_pos[j];
                    if pos != usize::MAX && pos >= row_range.start && pos < row_range.end {
                        values[pos] -= f * values[jj];
                    }
                }
            }
            if values[diag_ptr[i]] == 0.0 || !values[diag_ptr[i]].is_finite() {
                return Err(SolveError::SingularMatrix { pivot: i });
            }
            for k in row_range {
                col_pos[col_indices[k] as usize] = usize::MAX;
            }
        }
        Ok(Ilu0 { n, row_offsets, col_indices, values, diag_ptr })
    }

    /// x = U^-1 L^-1 r with unit-diagonal L.
    pub fn apply(&self, r: &[f64], x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = r[i];
            for k in self.row_offsets[i]..self.diag_ptr[i] {
                s -= self.values[k] * x[self.col_indices[k] as usize];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in self.diag_ptr[i] + 1..self.row_offsets[i + 1] {
                s -= self.values[k] * x[self.col_indices[k] as usize];
            }
            x[i] = s / self.values[self.diag_ptr[i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ilu0_is_exact_on_triangular_patterns() {
        // A tridiagonal SPD matrix has no fill-in, so ILU(0) equals full LU
        // and the apply is a direct solve.
        let n = 8;
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 2.0));
            if i > 0 {
                triplets.push((i, i - 1, -1.0));
                triplets.push((i - 1, i, -1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, &triplets);
        let ilu = Ilu0::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.5).collect();
        let mut x = vec![0.0; n];
        ilu.apply(&b, &mut x);
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        for (l, r) in ax.iter().zip(&b) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_diagonal_is_singular() {
        let a = SparseMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]);
        assert!(Ilu0::factor(&a).is_err());
    }

    #[test]
    fn ilu_apply_is_a_contraction_on_diagonally_dominant_systems() {
        let mut rng = crate::util::SplitMix64::new(4);
        let n = 30;
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 5.0 + rng.next_f64()));
            let j = (i + 7) % n;
            if j != i {
                triplets.push((i, j, rng.range(-1.0, 1.0)));
                triplets.push((j, i, rng.range(-1.0, 1.0)));
            }
        }
        let a = SparseMatrix::from_triplets(n, &triplets);
        let ilu = Ilu0::factor(&a).unwrap();
        let xstar: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
        let mut b = vec![0.0; n];
        a.matvec(&xstar, &mut b);
        let mut x = vec![0.0; n];
        ilu.apply(&b, &mut x);
        // One sweep of an approximate inverse should land close.
        let err0 = crate::util::norm2(&xstar);
        let err: f64 = x.iter().zip(&xstar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(err < 0.5 * err0, "ILU(0) apply did not contract: {err} vs {err0}");
    }
}
