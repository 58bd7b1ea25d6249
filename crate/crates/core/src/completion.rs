//! Nuclear-norm matrix completion (SoftImpute) and rank-k factorization into
//! dataset and configuration embeddings.

use serde::{Deserialize, Serialize};

use crate::linalg::sorted_svd;
use crate::matrices::PartialMatrix;
use crate::{Error, Matrix, Real, Result};

/// SoftImpute settings.
///
/// Regularization follows a geometric warm-start path that ends at
/// `lambda`: stage `s` of `stages` uses `lambda / decay^(stages - 1 - s)`.
/// Within a stage, iterations stop once the relative Frobenius change of the
/// estimate drops below `tol`, or after `max_iters` iterations.
///
/// `max_rank` optionally keeps only the leading singular values at each
/// shrinkage step (a rank-constrained SoftImpute); unset, the iteration is the
/// plain nuclear-norm proximal method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeConfig {
    pub lambda: f64,
    pub decay: f64,
    pub stages: usize,
    pub max_iters: usize,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rank: Option<usize>,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig {
            lambda: 0.1,
            decay: 0.7,
            stages: 10,
            max_iters: 500,
            tol: 1e-5,
            max_rank: None,
        }
    }
}

impl ImputeConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        ImputeConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidArgument(format!("decay must be in (0, 1), got {}", self.decay)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_rank == Some(0) {
            return Err(Error::InvalidArgument("max_rank must be >= 1".into()));
        }
        if self.stages == 0 || self.max_iters == 0 {
            return Err(Error::InvalidArgument("stages and max_iters must be >= 1".into()));
        }
        Ok(())
    }

    /// Decreasing regularization path, last entry equal to `lambda`.
    pub fn schedule(&self) -> Vec<f64> {
        (0..self.stages)
            .map(|s| self.lambda / self.decay.powi((self.stages - 1 - s) as i32))
            .collect()
    }
}

/// `U · diag((σ_i − λ)_+) · Vᵀ`.
pub fn soft_threshold_svd<T: Real>(a: &Matrix<T>, lambda: T) -> Matrix<T> {
    shrink(a, lambda, usize::MAX).0
}

/// Thresholded matrix and its nuclear norm.
fn shrink<T: Real>(a: &Matrix<T>, lambda: T, max_rank: usize) -> (Matrix<T>, T) {
    let svd = sorted_svd(a);
    let kept: Vec<T> = svd
        .sigma
        .iter()
        .map(|&s| (s - lambda).max(T::zero()))
        .take_while(|&s| s > T::zero())
        .take(max_rank)
        .collect();
    let r = kept.len();
    let mut out = Matrix::zeros(a.nrows(), a.ncols());
    if r > 0 {
        let mut us = svd.u.columns(0, r).into_owned();
        for (c, &s) in kept.iter().enumerate() {
            us.column_mut(c).scale_mut(s);
        }
        out.gemm(T::one(), &us, &svd.v_t.rows(0, r), T::zero());
    }
    let nuclear = kept.iter().fold(T::zero(), |acc, &s| acc + s);
    (out, nuclear)
}

/// Observed values and per-cell step weights (zero off Ω) for one completion
/// problem.
struct Problem<T: Real> {
    values: Matrix<T>,
    weights: Matrix<T>,
}

impl<T: Real> Problem<T> {
    /// `Ẽ = Ê + a ⊙ P_Ω(E − Ê)`; unit-weight cells take `E` directly.
    fn fill(&self, current: &Matrix<T>) -> Matrix<T> {
        let mut filled = current.clone();
        for ((f, &w), &v) in filled.iter_mut().zip(self.weights.iter()).zip(self.values.iter()) {
            if w == T::one() {
                *f = v;
            } else if w > T::zero() {
                *f += w * (v - *f);
            }
        }
        filled
    }

    fn objective(&self, est: &Matrix<T>, lambda: T) -> T {
        let mut fit = T::zero();
        for ((&e, &w), &v) in est.iter().zip(self.weights.iter()).zip(self.values.iter()) {
            if w > T::zero() {
                fit += w * (v - e) * (v - e);
            }
        }
        let nuclear = crate::linalg::singular_values(est)
            .iter()
            .fold(T::zero(), |acc, &s| acc + s);
        fit / T::lit(2.0) + lambda * nuclear
    }

    fn run(&self, cfg: &ImputeConfig) -> Matrix<T> {
        let mut est = Matrix::zeros(self.values.nrows(), self.values.ncols());
        let max_rank = cfg.max_rank.unwrap_or(usize::MAX);
        for lambda in cfg.schedule() {
            let lambda = T::lit(lambda);
            for _ in 0..cfg.max_iters {
                let next = shrink(&self.fill(&est), lambda, max_rank).0;
                let change = relative_change(&next, &est);
                est = next;
                if change < T::lit(cfg.tol) {
                    break;
                }
            }
        }
        est
    }
}

fn relative_change<T: Real>(next: &Matrix<T>, prev: &Matrix<T>) -> T {
    let diff = (next - prev).norm();
    if diff == T::zero() {
        return T::zero();
    }
    let base = prev.norm();
    if base == T::zero() {
        T::max_value().unwrap_or(T::one() / T::default_epsilon())
    } else {
        diff / base
    }
}

fn unweighted<T: Real>(observed: &PartialMatrix<T>) -> Result<Problem<T>> {
    if observed.observed_count() == 0 {
        return Err(Error::Empty("observation mask has no observed cells".into()));
    }
    let (values, mask) = observed.zero_filled();
    let weights = mask.map(|b| if b { T::one() } else { T::zero() });
    Ok(Problem { values, weights })
}

fn weighted<T: Real>(observed: &PartialMatrix<T>, probs: &Matrix<T>) -> Result<Problem<T>> {
    if probs.shape() != observed.shape() {
        return Err(Error::shape(
            format!("{:?}", observed.shape()),
            format!("{:?}", probs.shape()),
        ));
    }
    if observed.observed_count() == 0 {
        return Err(Error::Empty("observation mask has no observed cells".into()));
    }
    let mut inv = Matrix::zeros(probs.nrows(), probs.ncols());
    for (i, j, _) in observed.observed() {
        let p = probs[(i, j)];
        if !(p > T::zero() && p <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "sampling probability at observed cell ({i}, {j}) is {p}, must be in (0, 1]"
            )));
        }
        inv[(i, j)] = T::one() / p;
    }
    let w_max = inv.iter().fold(T::zero(), |m, &w| m.max(w));
    let weights = inv.map(|w| if w > T::zero() { w / w_max } else { T::zero() });
    let (values, _) = observed.zero_filled();
    Ok(Problem { values, weights })
}

/// SoftImpute over the configured regularization path.
pub fn softimpute<T: Real>(observed: &PartialMatrix<T>, cfg: &ImputeConfig) -> Result<Matrix<T>> {
    cfg.validate()?;
    Ok(unweighted(observed)?.run(cfg))
}

/// Inverse-propensity weighted SoftImpute.
///
/// Minimizes `½ Σ_Ω (w_ij / w_max)(E_ij − Ê_ij)² + λ‖Ê‖_*` with
/// `w_ij = 1 / P_ij` by proximal gradient with unit step. Normalizing by
/// `w_max` keeps every per-cell step in `(0, 1]`; with constant
/// probabilities all weights are 1 and the iteration is exactly
/// [`softimpute`].
pub fn weighted_softimpute<T: Real>(
    observed: &PartialMatrix<T>,
    probs: &Matrix<T>,
    cfg: &ImputeConfig,
) -> Result<Matrix<T>> {
    cfg.validate()?;
    Ok(weighted(observed, probs)?.run(cfg))
}

/// Single SoftImpute update at fixed `lambda` starting from `current`.
pub fn softimpute_step<T: Real>(
    observed: &PartialMatrix<T>,
    current: &Matrix<T>,
    lambda: T,
) -> Result<Matrix<T>> {
    let problem = unweighted(observed)?;
    if current.shape() != observed.shape() {
        return Err(Error::shape(format!("{:?}", observed.shape()), format!("{:?}", current.shape())));
    }
    Ok(shrink(&problem.fill(current), lambda, usize::MAX).0)
}

/// `½‖P_Ω(E − Ê)‖_F² + λ‖Ê‖_*`.
pub fn softimpute_objective<T: Real>(
    observed: &PartialMatrix<T>,
    estimate: &Matrix<T>,
    lambda: T,
) -> Result<T> {
    Ok(unweighted(observed)?.objective(estimate, lambda))
}

/// Rank-k embeddings with `E ≈ XᵀY`; `X` is `k × n`, `Y` is `k × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel<T: Real> {
    x: Matrix<T>,
    y: Matrix<T>,
    singular_values: Vec<T>,
}

impl<T: Real> EmbeddingModel<T> {
    pub fn rank(&self) -> usize {
        self.x.nrows()
    }

    /// Dataset embeddings, one column per row of the factorized matrix.
    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    /// Configuration embeddings `y_j` as columns.
    pub fn y(&self) -> &Matrix<T> {
        &self.y
    }

    /// All singular values of the factorized matrix, non-increasing.
    pub fn singular_values(&self) -> &[T] {
        &self.singular_values
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.x.transpose() * &self.y
    }
}

/// Best rank-`k` factorization: `X = Σ^{1/2}Uᵀ`, `Y = Σ^{1/2}Vᵀ` from the top
/// `k` singular triplets.
pub fn truncated_factorize<T: Real>(e: &Matrix<T>, k: usize) -> Result<EmbeddingModel<T>> {
    let (n, d) = e.shape();
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "rank {k} must be in 1..={}",
            n.min(d)
        )));
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("cannot factorize a matrix with non-finite entries".into()));
    }
    let svd = sorted_svd(e);
    let mut x = svd.u.columns(0, k).transpose();
    let mut y = svd.v_t.rows(0, k).into_owned();
    for r in 0..k {
        let root = svd.sigma[r].sqrt();
        x.row_mut(r).scale_mut(root);
        y.row_mut(r).scale_mut(root);
    }
    Ok(EmbeddingModel {
        x,
        y,
        singular_values: svd.sigma,
    })
}

/// Completed matrix truncated to rank `k`.
pub fn low_rank_approximation<T: Real>(e: &Matrix<T>, k: usize) -> Result<Matrix<T>> {
    Ok(truncated_factorize(e, k)?.reconstruct())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::{apply_mask_values, uniform_mask};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    fn sorted_sv(m: &Matrix<f64>) -> Vec<f64> {
        let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }

    #[test]
    fn threshold_zero_is_identity() {
        let a = random_matrix(6, 4, 1);
        let out = soft_threshold_svd(&a, 0.0);
        assert!((out - &a).norm() < 1e-12);
    }

    #[test]
    fn threshold_diagonal_example() {
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 0.5]));
        let out = soft_threshold_svd(&a, 1.0);
        let expected = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.0, 0.0]));
        assert!((out - expected).norm() < 1e-12);
    }

    #[test]
    fn threshold_singular_values_random() {
        let a = random_matrix(10, 8, 7);
        let lambda = 0.4;
        let before = sorted_sv(&a);
        let after = sorted_sv(&soft_threshold_svd(&a, lambda));
        for (s, t) in before.iter().zip(&after) {
            assert_abs_diff_eq!((s - lambda).max(0.0), *t, epsilon = 1e-10);
            assert!(*t <= *s + 1e-12);
        }
        let rank = after.iter().filter(|&&t| t > 1e-9).count();
        assert_eq!(rank, before.iter().filter(|&&s| s > lambda).count());
    }

    #[test]
    fn threshold_generic_f32() {
        let a = Matrix::<f32>::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let out = soft_threshold_svd(&a, 1.0f32);
        assert!((out[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(out[(1, 1)].abs() < 1e-6);
    }

    #[test]
    fn schedule_is_decreasing_and_ends_at_lambda() {
        let cfg = ImputeConfig::default();
        let s = cfg.schedule();
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] > w[1]));
        assert_abs_diff_eq!(*s.last().unwrap(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn config_validation_and_json() {
        assert!(ImputeConfig { decay: 1.0, ..Default::default() }.validate().is_err());
        assert!(ImputeConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(ImputeConfig { tol: 0.0, ..Default::default() }.validate().is_err());
        let cfg: ImputeConfig = serde_json::from_str(
            r#"{"lambda": 0.1, "decay": 0.7, "stages": 10, "max_iters": 500, "tol": 1e-5}"#,
        )
        .unwrap();
        assert_eq!(cfg, ImputeConfig::default());
        let partial: ImputeConfig = serde_json::from_str(r#"{"lambda": 0.5}"#).unwrap();
        assert_eq!(partial.stages, 10);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let p = PartialMatrix::<f64>::missing(3, 3);
        assert!(matches!(softimpute(&p, &ImputeConfig::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn unconstrained_completion_is_min_nuclear_norm() {
        // [[1,2],[2,x]] has nuclear norm sqrt((x-1)^2 + 16) for x < 4, so the
        // nuclear-norm solution fills x = 1 rather than the rank-1 value 4
        let mut p = PartialMatrix::from_full(&Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        p.set(1, 1, None);
        let cfg = ImputeConfig { lambda: 1e-3, max_iters: 5000, tol: 1e-9, ..Default::default() };
        let out = softimpute(&p, &cfg).unwrap();
        assert_abs_diff_eq!(out[(1, 1)], 1.0, epsilon = 1e-2);
    }

    #[test]
    fn fully_observed_vanishing_lambda() {
        let e = random_matrix(5, 4, 3).map(|v| v.abs());
        let cfg = ImputeConfig { lambda: 1e-9, ..Default::default() };
        let out = softimpute(&PartialMatrix::from_full(&e), &cfg).unwrap();
        assert!((out - e).amax() < 1e-6);
    }

    #[test]
    fn rank_one_completion() {
        let mut p = PartialMatrix::from_full(&Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        p.set(1, 1, None);
        // rank-constrained shrinkage biases the filled cell by roughly 20λ
        let cfg = ImputeConfig { lambda: 1e-4, max_iters: 5000, tol: 1e-9, max_rank: Some(1), ..Default::default() };
        let out = softimpute(&p, &cfg).unwrap();
        assert_abs_diff_eq!(out[(1, 1)], 4.0, epsilon = 1e-2);
        let biased = softimpute(&p, &ImputeConfig { lambda: 1e-3, ..cfg }).unwrap();
        assert_abs_diff_eq!(biased[(1, 1)], 3.98, epsilon = 1e-3);
        let w = weighted_softimpute(&p, &Matrix::from_element(2, 2, 1.0), &cfg).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn weighted_with_constant_probs_is_bitwise_plain() {
        let e = random_matrix(8, 7, 11).map(|v| v.abs());
        let mask = uniform_mask(8, 7, 0.5, 2).unwrap();
        let partial = apply_mask_values(&e, &mask).unwrap();
        let cfg = ImputeConfig { stages: 3, max_iters: 50, ..Default::default() };
        let plain = softimpute(&partial, &cfg).unwrap();
        let weighted = weighted_softimpute(&partial, &Matrix::from_element(8, 7, 0.35), &cfg).unwrap();
        assert_eq!(plain, weighted);
    }

    #[test]
    fn weighted_rejects_zero_probability() {
        let mut p = PartialMatrix::<f64>::missing(2, 2);
        p.set(0, 0, Some(0.3));
        let probs = Matrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.5]);
        assert!(weighted_softimpute(&p, &probs, &ImputeConfig::default()).is_err());
    }

    #[test]
    fn objective_non_increasing_at_fixed_lambda() {
        let e = random_matrix(9, 7, 5);
        let mask = uniform_mask(9, 7, 0.4, 9).unwrap();
        let partial = apply_mask_values(&e, &mask).unwrap();
        let lambda = 0.3;
        let mut est = Matrix::zeros(9, 7);
        let mut prev = softimpute_objective(&partial, &est, lambda).unwrap();
        for _ in 0..40 {
            est = softimpute_step(&partial, &est, lambda).unwrap();
            let obj = softimpute_objective(&partial, &est, lambda).unwrap();
            assert!(obj <= prev + 1e-9, "{obj} > {prev}");
            prev = obj;
        }
    }

    #[test]
    fn factorize_exact_when_rank_sufficient() {
        let a = random_matrix(6, 2, 1);
        let b = random_matrix(2, 5, 2);
        let e = &a * &b;
        let model = truncated_factorize(&e, 2).unwrap();
        assert!((model.reconstruct() - &e).norm() <= 1e-8);
        assert_eq!(model.x().shape(), (2, 6));
        assert_eq!(model.y().shape(), (2, 5));
    }

    #[test]
    fn factorize_eckart_young_and_orthogonality() {
        let e = random_matrix(7, 5, 3);
        let sv = sorted_sv(&e);
        for k in 1..=5 {
            let approx = truncated_factorize(&e, k).unwrap().reconstruct();
            let resid = &e - &approx;
            let tail: f64 = sv[k..].iter().map(|s| s * s).sum();
            assert_abs_diff_eq!(resid.norm_squared(), tail, epsilon = 1e-8);
            assert_abs_diff_eq!(approx.dot(&resid), 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn factorize_identity_rank_two() {
        let e = Matrix::<f64>::identity(3, 3);
        let approx = truncated_factorize(&e, 2).unwrap().reconstruct();
        assert_abs_diff_eq!((e - approx).norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn factorize_rank_out_of_range() {
        let e = Matrix::<f64>::identity(3, 4);
        assert!(truncated_factorize(&e, 0).is_err());
        assert!(truncated_factorize(&e, 4).is_err());
    }
}
