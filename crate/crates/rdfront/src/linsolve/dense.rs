//! Dense LU with partial pivoting, for subdomain-local solves and test
//! oracles.

use super::SolveError;
use crate::fem::SparseMatrix;

#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    /// Row-major packed LU factors.
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor_dense(n: usize, rows: Vec<f64>) -> Result<DenseLu, SolveError> {
        assert_eq!(rows.len(), n * n);
        let mut lu = rows;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(SolveError::SingularMatrix { pivot: k });
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Ok(DenseLu { n, lu, perm })
    }

    pub fn factor_sparse(a: &SparseMatrix) -> Result<DenseLu, SolveError> {
        let n = a.n_rows();
        assert_eq!(n, a.n_cols());
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                rows[i * n + *c as usize] = *v;
            }
        }
        DenseLu::factor_dense(n, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_small_system_exactly() {
        // 4x + y = 1, x + 3y = 2 has the solution (1/11, 7/11).
        let lu = DenseLu::factor_dense(2, vec![4.0, 1.0, 1.0, 3.0]).unwrap();
        let x = lu.solve(&[1.0, 2.0]);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-15);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let lu = DenseLu::factor_dense(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let x = lu.solve(&[3.0, 4.0]);
        assert_eq!(x, vec![4.0, 3.0]);
    }

    #[test]
    fn singular_matrix_is_reported_with_pivot() {
        let err = DenseLu::factor_dense(2, vec![1.0, 2.0, 2.0, 4.0]).unwrap_err();
        assert!(matches!(err, SolveError::SingularMatrix { pivot: 1 }));
    }

    #[test]
    fn random_residuals_are_tiny() {
        let mut rng = crate::util::SplitMix64::new(17);
        for _ in 0..10 {
            let n = 12;
            let rows: Vec<f64> = (0..n * n).map(|_| rng.range(-1.0, 1.0)).collect();
            let mut diag_boosted = rows.clone();
            for i in 0..n {
                diag_boosted[i * n + i] += 4.0;
            }
            let b: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let lu = DenseLu::factor_dense(n, diag_boosted.clone()).unwrap();
            let x = lu.solve(&b);
            for i in 0..n {
                let mut r = b[i];
                for j in 0..n {
                    r -= diag_boosted[i * n + j] * x[j];
                }
                assert!(r.abs() < 1e-12);
            }
        }
    }
}
