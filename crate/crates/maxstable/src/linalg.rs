//! Dense lower-triangular Cholesky factorization with diagonal jitter
//! escalation, and the matrix-vector product used for correlated Gaussian
//! sampling. Matrices are row-major flat slices; problem sizes here are a few
//! thousand at most, so a plain O(n^3) factorization is fine.

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `L L^T = A` (row-major, n x n).
#[derive(Debug)]
pub(crate) struct CholeskyFactor {
    pub n: usize,
    /// Row-major lower triangle; entries above the diagonal are zero.
    pub l: Vec<f64>,
}

impl CholeskyFactor {
    /// Factor a symmetric positive semi-definite matrix. If the plain
    /// factorization hits a non-positive pivot, a diagonal jitter of
    /// `1e-10 * trace/n` is added and escalated by a factor of 100 at most
    /// three times before giving up.
    pub fn new(matrix: &[f64], n: usize) -> Result<Self> {
        assert_eq!(matrix.len(), n * n, "matrix shape mismatch");
        let trace: f64 = (0..n).map(|i| matrix[i * n + i]).sum();
        let base_jitter = 1e-10 * trace / n as f64;
        let mut jitter = 0.0;
        for attempt in 0..4 {
            if let Some(l) = try_factor(matrix, n, jitter) {
                return Ok(CholeskyFactor { n, l });
            }
            jitter = if attempt == 0 { base_jitter } else { jitter * 100.0 };
        }
        Err(Error::Cholesky { attempts: 3 })
    }

    /// `L z` for a standard normal vector `z`: one correlated Gaussian draw.
    pub fn correlate(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n);
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.l[i * self.n..i * self.n + i + 1];
            let mut acc = 0.0;
            for (lij, zj) in row.iter().zip(z.iter()) {
                acc += lij * zj;
            }
            out[i] = acc;
        }
        out
    }
}

fn try_factor(matrix: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[i * n + j];
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_a_known_spd_matrix() {
        // A = [[4,2],[2,3]] => L = [[2,0],[1,sqrt(2)]]
        let a = [4.0, 2.0, 2.0, 3.0];
        let f = CholeskyFactor::new(&a, 2).unwrap();
        assert!((f.l[0] - 2.0).abs() < 1e-14);
        assert!((f.l[2] - 1.0).abs() < 1e-14);
        assert!((f.l[3] - 2.0f64.sqrt()).abs() < 1e-14);
        let y = f.correlate(&[1.0, 1.0]);
        assert!((y[0] - 2.0).abs() < 1e-14);
        assert!((y[1] - (1.0 + 2.0f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_input_matrix() {
        // OU-type correlation on five integer sites.
        let n = 5;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (-((i as f64 - j as f64).abs()) / 2.0).exp();
            }
        }
        let f = CholeskyFactor::new(&a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += f.l[i * n + k] * f.l[j * n + k];
                }
                assert!((v - a[i * n + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        // Rank-1 PSD matrix: plain Cholesky hits a zero pivot; jitter fixes it.
        let a = [1.0, 1.0, 1.0, 1.0];
        let f = CholeskyFactor::new(&a, 2).unwrap();
        assert!(f.l.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn indefinite_matrix_fails_after_escalation() {
        let a = [1.0, 2.0, 2.0, 1.0]; // eigenvalues 3 and -1
        let err = CholeskyFactor::new(&a, 2).unwrap_err();
        assert!(matches!(err, Error::Cholesky { attempts: 3 }));
    }
}
