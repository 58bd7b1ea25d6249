//! Gaussian-process surrogate and expected-improvement acquisition for the
//! Bayesian-optimization baselines.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{select_random_feasible, SelectionProblem};
use crate::{Error, Matrix, Real, Result, Vector};

/// Diagonal jitter used when the noise variance is zero.
pub const GP_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpParams {
    pub length_scale: f64,
    pub noise_var: f64,
    pub xi: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        GpParams {
            length_scale: 20.0,
            noise_var: 1.0,
            xi: 0.01,
        }
    }
}

fn rbf<T: Real>(a: &Vector<T>, b: &Vector<T>, length_scale: T) -> T {
    let sq = a
        .iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    (-sq / (T::lit(2.0) * length_scale * length_scale)).exp()
}

/// Zero-mean GP regression with an RBF kernel and white noise.
#[derive(Debug, Clone)]
pub struct GaussianProcess<T: Real> {
    points: Vec<Vector<T>>,
    chol: Cholesky<T, nalgebra::Dyn>,
    alpha: Vector<T>,
    length_scale: T,
}

impl<T: Real> GaussianProcess<T> {
    pub fn fit(points: &[Vector<T>], values: &[T], length_scale: T, noise_var: T) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("GP needs at least one training point".into()));
        }
        if points.len() != values.len() {
            return Err(Error::shape(points.len(), values.len()));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument("training points differ in dimension".into()));
        }
        if !(length_scale > T::zero()) || !(noise_var >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "length_scale must be > 0 and noise_var >= 0, got {length_scale} and {noise_var}"
            )));
        }
        let diag = if noise_var == T::zero() {
            T::lit(GP_JITTER)
        } else {
            noise_var
        };
        let n = points.len();
        let kernel = Matrix::from_fn(n, n, |i, j| {
            let k = rbf(&points[i], &points[j], length_scale);
            if i == j {
                k + diag
            } else {
                k
            }
        });
        let chol = Cholesky::new(kernel).ok_or(Error::NotPositiveDefinite)?;
        let alpha = chol.solve(&Vector::from_column_slice(values));
        Ok(GaussianProcess {
            points: points.to_vec(),
            chol,
            alpha,
            length_scale,
        })
    }

    /// Posterior mean and latent-function variance at `query`.
    pub fn predict(&self, query: &Vector<T>) -> (T, T) {
        let k_star = Vector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| rbf(p, query, self.length_scale)),
        );
        let mean = k_star.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .expect("cholesky factor has a positive diagonal");
        let var = (T::one() - v.dot(&v)).max(T::zero());
        (mean, var)
    }
}

pub fn gp_posterior<T: Real>(
    train_points: &[Vector<T>],
    train_values: &[T],
    query: &Vector<T>,
    length_scale: T,
    noise_var: T,
) -> Result<(T, T)> {
    Ok(GaussianProcess::fit(train_points, train_values, length_scale, noise_var)?.predict(query))
}

pub fn normal_pdf(z: f64) -> f64 {
    Normal::standard().pdf(z)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Expected improvement for minimization: with `I = best − mean − xi`,
/// `EI = I·Φ(I/std) + std·φ(I/std)`, and `max(I, 0)` when `std = 0`.
pub fn expected_improvement<T: Real>(mean: T, std: T, best_observed: T, xi: T) -> T {
    let improvement = best_observed - mean - xi;
    if std <= T::zero() {
        return improvement.max(T::zero());
    }
    let z = (improvement / std).as_f64();
    let ei = improvement.as_f64() * normal_cdf(z) + std.as_f64() * normal_pdf(z);
    T::lit(ei.max(0.0))
}

/// Bayesian-optimization selection over the feasible configurations.
///
/// Starts from `k` random feasible configurations whose embeddings have
/// rank `k`, then repeatedly fits a GP on `features` of the measured
/// configurations and measures the unmeasured feasible configuration with
/// the largest expected improvement (ties to the lowest index) until the
/// budget is spent. Returns the selection order and the measured values.
pub fn bo_select<T: Real>(
    problem: &SelectionProblem<T>,
    features: &[Vector<T>],
    oracle: &mut dyn FnMut(usize) -> T,
    params: &GpParams,
    seed: u64,
) -> Result<(Vec<usize>, Vec<T>)> {
    let y = problem.y();
    if features.len() != y.ncols() {
        return Err(Error::shape(y.ncols(), features.len()));
    }
    let l = problem.budget();
    let k = problem.rank();
    if l < k {
        return Err(Error::InvalidArgument(format!(
            "budget {l} is below the initial design size {k}"
        )));
    }
    let mut selected = select_random_feasible(y, problem.feasible(), k, seed)?;
    let mut values: Vec<T> = selected.iter().map(|&j| oracle(j)).collect();
    let mut measured = vec![false; y.ncols()];
    for &j in &selected {
        measured[j] = true;
    }

    let length_scale = T::lit(params.length_scale);
    let noise_var = T::lit(params.noise_var);
    let xi = T::lit(params.xi);
    while selected.len() < l {
        let train: Vec<Vector<T>> = selected.iter().map(|&j| features[j].clone()).collect();
        let gp = GaussianProcess::fit(&train, &values, length_scale, noise_var)?;
        let best = values.iter().copied().fold(T::max_value().expect("bounded"), T::min);
        let mut choice: Option<(usize, T)> = None;
        for &j in problem.feasible() {
            if measured[j] {
                continue;
            }
            let (mean, var) = gp.predict(&features[j]);
            let ei = expected_improvement(mean, var.sqrt(), best, xi);
            if choice.is_none_or(|(_, b)| ei > b) {
                choice = Some((j, ei));
            }
        }
        let (j, _) = choice.expect("budget <= |T|");
        measured[j] = true;
        selected.push(j);
        values.push(oracle(j));
    }
    Ok((selected, values))
}
