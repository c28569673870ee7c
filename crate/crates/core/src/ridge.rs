//! Closed-form ridge regression on prompt embeddings.
//!
//! The design matrix is augmented with a constant-1 column so the bias is
//! fit jointly; it is regularized with the same `beta` as the weights. The
//! fit solves `(X^T X + beta I) w = X^T y` with a Cholesky factorization.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::ERDataset;
use crate::linalg::{dot, Cholesky};
use crate::{Error, Result};

/// A fitted per-model expected-reward predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub model_id: String,
    pub beta: f64,
    pub dim: usize,
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl LinearPredictor {
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: self.weights.len() });
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("predictor {}", self.model_id)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn predict(&self, embedding: &[f64]) -> Result<f64> {
        if embedding.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: embedding.len() });
        }
        Ok(self.predict_unchecked(embedding))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, embedding: &[f64]) -> f64 {
        dot(&self.weights, embedding) + self.bias
    }
}

/// Normal-equation pieces for the bias-augmented design: the packed
/// `(D+1)^2` Gram matrix and `X^T y`.
pub(crate) fn gram(dataset: &ERDataset, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = dim + 1;
    let mut xtx = vec![0.0; n * n];
    let mut xty = vec![0.0; n];
    let mut row = vec![1.0; n];
    for r in &dataset.rows {
        row[..dim].copy_from_slice(&r.embedding);
        for i in 0..n {
            let ri = row[i];
            xty[i] += ri * r.target;
            for j in 0..=i {
                xtx[i * n + j] += ri * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            xtx[j * n + i] = xtx[i * n + j];
        }
    }
    (xtx, xty)
}

pub fn fit_ridge(dataset: &ERDataset, beta: f64) -> Result<LinearPredictor> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("beta must be finite and >= 0, got {beta}")));
    }
    let dim = dataset.dim().ok_or(Error::EmptyDataset)?;
    for r in &dataset.rows {
        if r.embedding.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: r.embedding.len() });
        }
        if !r.target.is_finite() {
            return Err(Error::NonFinite(alloc::format!("target of {}", r.prompt_id)));
        }
    }
    let n = dim + 1;
    let (mut a, b) = gram(dataset, dim);
    for i in 0..n {
        a[i * n + i] += beta;
    }
    let mut solution = Cholesky::factor(&a, n)?.solve(&b);
    let bias = solution.pop().unwrap_or(0.0);
    Ok(LinearPredictor { model_id: dataset.model_id.clone(), beta, dim, bias, weights: solution })
}

/// Coefficient of determination against the mean of `targets`. Can be
/// negative when predictions are worse than the mean.
pub fn r_squared(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: targets.len() });
    }
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mean = crate::dataset::mean(targets);
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedRSquared);
    }
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ERRow;
    use alloc::format;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn dataset(xs: &[Vec<f64>], ys: &[f64]) -> ERDataset {
        ERDataset {
            model_id: "m".into(),
            rows: xs
                .iter()
                .zip(ys)
                .enumerate()
                .map(|(i, (x, &y))| ERRow { prompt_id: format!("p{i}"), embedding: x.clone(), target: y })
                .collect(),
        }
    }

    /// Independent route: LU solve of the augmented normal equations.
    fn oracle(xs: &[Vec<f64>], ys: &[f64], beta: f64) -> Vec<f64> {
        let n = xs.len();
        let d = xs[0].len();
        let x = DMatrix::from_fn(n, d + 1, |i, j| if j < d { xs[i][j] } else { 1.0 });
        let y = DVector::from_column_slice(ys);
        let a = x.transpose() * &x + DMatrix::identity(d + 1, d + 1) * beta;
        let b = x.transpose() * y;
        a.lu().solve(&b).unwrap().as_slice().to_vec()
    }

    fn random_instance(rng: &mut impl Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        (xs, ys)
    }

    #[test]
    fn exact_interpolation_through_origin() {
        // Hand-solved: X~ = [[1,1],[2,1]], y = [2,4]; X~^T X~ = [[5,3],[3,2]],
        // X~^T y = [10,6] -> (w, b) = (2, 0).
        let p = fit_ridge(&dataset(&[vec![1.0], vec![2.0]], &[2.0, 4.0]), 0.0).unwrap();
        assert!((p.weights[0] - 2.0).abs() < 1e-12);
        assert!(p.bias.abs() < 1e-12);
    }

    #[test]
    fn huge_beta_shrinks_to_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (xs, ys) = random_instance(&mut rng, 20, 4);
        let p = fit_ridge(&dataset(&xs, &ys), 1e12).unwrap();
        assert!(p.weights.iter().all(|w| w.abs() < 1e-9));
        assert!(p.bias.abs() < 1e-9);
        assert!(p.predict(&xs[0]).unwrap().abs() < 1e-8);
    }

    #[test]
    fn random_20x5_matches_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
        let (xs, ys) = random_instance(&mut rng, 20, 5);
        let p = fit_ridge(&dataset(&xs, &ys), 1.0).unwrap();
        let expected = oracle(&xs, &ys, 1.0);
        for (w, e) in p.weights.iter().chain(core::iter::once(&p.bias)).zip(&expected) {
            assert!((w - e).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_without_regularization() {
        // two identical columns
        let xs = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let err = fit_ridge(&dataset(&xs, &[1.0, 2.0, 3.0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
        assert!(fit_ridge(&dataset(&xs, &[1.0, 2.0, 3.0]), 0.1).is_ok());
        assert_eq!(fit_ridge(&dataset(&[], &[]), 1.0), Err(Error::EmptyDataset));
        assert!(matches!(
            fit_ridge(&dataset(&[vec![1.0]], &[f64::NAN]), 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn predict_examples() {
        let p = |w: Vec<f64>, b: f64| LinearPredictor { model_id: "m".into(), beta: 1.0, dim: w.len(), bias: b, weights: w };
        assert_eq!(p(vec![2.0], 0.0).predict(&[3.0]).unwrap(), 6.0);
        assert_eq!(p(vec![0.0, 0.0], 0.4).predict(&[9.0, -3.0]).unwrap(), 0.4);
        assert!((p(vec![1.0, -1.0], 0.5).predict(&[0.3, 0.1]).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(
            p(vec![1.0], 0.0).predict(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        );
    }

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        // SS_res = 2, SS_tot = 0.5
        assert_eq!(r_squared(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), -3.0);
        assert_eq!(r_squared(&[1.0, 0.0], &[1.0, 1.0]), Err(Error::UndefinedRSquared));
        assert!(matches!(r_squared(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_oracle_and_is_stationary(
            seed in any::<u64>(), n in 5usize..50, d in 1usize..20,
            beta in prop_oneof![Just(0.1), Just(1.0), Just(10.0)],
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (xs, ys) = random_instance(&mut rng, n, d);
            let ds = dataset(&xs, &ys);
            let p = fit_ridge(&ds, beta).unwrap();
            let expected = oracle(&xs, &ys, beta);
            let mut coef = p.weights.clone();
            coef.push(p.bias);
            for (w, e) in coef.iter().zip(&expected) {
                prop_assert!((w - e).abs() < 1e-8, "{} vs {}", w, e);
            }
            // gradient of the ridge objective: 2 (X~^T (X~ w - y) + beta w)
            let (_, xty) = gram(&ds, d);
            let mut grad = vec![0.0; d + 1];
            for r in &ds.rows {
                let resid = p.predict_unchecked(&r.embedding) - r.target;
                for j in 0..d { grad[j] += 2.0 * resid * r.embedding[j]; }
                grad[d] += 2.0 * resid;
            }
            for j in 0..=d { grad[j] += 2.0 * beta * coef[j]; }
            let scale = 1.0 + crate::linalg::norm_inf(&xty);
            prop_assert!(crate::linalg::norm_inf(&grad) <= 1e-6 * scale);
        }

        #[test]
        fn shrinkage_is_monotone(seed in any::<u64>(), b1 in 0.01f64..10.0, factor in 1.0f64..100.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (xs, ys) = random_instance(&mut rng, 15, 4);
            let ds = dataset(&xs, &ys);
            // the bias is an ordinary regularized coordinate, so the norm covers it
            let coef_norm = |p: LinearPredictor| libm::hypot(crate::linalg::norm2(&p.weights), p.bias);
            let w1 = coef_norm(fit_ridge(&ds, b1).unwrap());
            let w2 = coef_norm(fit_ridge(&ds, b1 * factor).unwrap());
            prop_assert!(w2 <= w1 * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn predict_is_affine(
            w in proptest::collection::vec(-5.0f64..5.0, 3),
            b in -5.0f64..5.0,
            x1 in proptest::collection::vec(-5.0f64..5.0, 3),
            x2 in proptest::collection::vec(-5.0f64..5.0, 3),
            a in 0.0f64..1.0,
        ) {
            let p = LinearPredictor { model_id: "m".into(), beta: 1.0, dim: 3, bias: b, weights: w };
            let mix: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + (1.0 - a) * v).collect();
            let lhs = p.predict(&mix).unwrap();
            let rhs = a * p.predict(&x1).unwrap() + (1.0 - a) * p.predict(&x2).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
