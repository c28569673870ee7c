//! Small dense linear algebra: row-major symmetric matrices and a Cholesky
//! solver for the normal equations.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Relative pivot threshold below which a system is reported as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite
/// `n x n` matrix stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(matrix: &[f64], n: usize) -> Result<Self> {
        debug_assert_eq!(matrix.len(), n * n);
        let scale = (0..n).fold(0.0f64, |m, i| m.max(matrix[i * n + i].abs()));
        let mut lower = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = matrix[j * n + j];
            for k in 0..j {
                diag -= lower[j * n + k] * lower[j * n + k];
            }
            if !(diag > PIVOT_TOLERANCE * scale) || scale == 0.0 {
                return Err(Error::Singular { column: j, pivot: diag });
            }
            let root = libm::sqrt(diag);
            lower[j * n + j] = root;
            for i in (j + 1)..n {
                let mut v = matrix[i * n + j];
                for k in 0..j {
                    v -= lower[i * n + k] * lower[j * n + k];
                }
                lower[i * n + j] = v / root;
            }
        }
        Ok(Self { n, lower })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.lower;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut v = y[i];
            for k in 0..i {
                v -= l[i * n + k] * y[k];
            }
            y[i] = v / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v -= l[k * n + i] * y[k];
            }
            y[i] = v / l[i * n + i];
        }
        y
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration from the
/// all-ones vector. Used only to bound step sizes, so a loose estimate is
/// fine as long as it does not underestimate by much; the caller pads it.
pub fn power_iteration(matrix: &[f64], n: usize, iterations: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / libm::sqrt(n as f64); n];
    let mut eig = 0.0;
    for _ in 0..iterations {
        let w: Vec<f64> = (0..n).map(|i| dot(&matrix[i * n..(i + 1) * n], &v)).collect();
        let norm = norm2(&w);
        if norm == 0.0 {
            return 0.0;
        }
        eig = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    eig
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        // [[4,2],[2,3]] x = [2,1] -> x = [0.5, 0]
        let c = Cholesky::factor(&[4.0, 2.0, 2.0, 3.0], 2).unwrap();
        let x = c.solve(&[2.0, 1.0]);
        assert!((x[0] - 0.5).abs() < 1e-15);
        assert!(x[1].abs() < 1e-15);
    }

    #[test]
    fn rejects_singular() {
        let err = Cholesky::factor(&[1.0, 1.0, 1.0, 1.0], 2).unwrap_err();
        assert!(matches!(err, Error::Singular { column: 1, .. }));
        assert!(Cholesky::factor(&[0.0], 1).is_err());
    }

    #[test]
    fn power_iteration_diag() {
        let e = power_iteration(&[3.0, 0.0, 0.0, 1.0], 2, 200);
        assert!((e - 3.0).abs() < 1e-9);
    }
}
