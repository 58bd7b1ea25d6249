//! Error–memory Pareto frontier estimation for low-precision training
//! configurations.
//!
//! The crate is organised bottom-up:
//!
//! * [`formats`]: custom floating-point layouts and the analytic memory model.
//! * [`matrices`]: error/memory matrices, observation masks, sampling and
//!   rank/correlation diagnostics.
//! * [`completion`]: singular-value soft-thresholding, SoftImpute (plain and
//!   inverse-propensity weighted) and rank-k factorization.
//! * [`selection`]: greedy D-optimal experiment design and the baseline
//!   selectors (random, pivoted QR, Bayesian optimization).
//! * [`pareto`]: frontier extraction, convergence/HyperDiff metrics and the
//!   final configuration-selection rule.
//! * [`harness`]: meta-training, meta-test and leave-one-dataset-out drivers.
//!
//! The numerical core is generic over [`Real`] (implemented for `f32` and
//! `f64`); the harness and the CLI work in `f64`.

pub mod completion;
pub mod error;
pub mod formats;
pub mod harness;
pub mod io;
pub mod matrices;
pub mod pareto;
pub mod selection;

mod linalg;

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub use error::{Error, Result};

/// Scalar type accepted by the numerical core.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal fits in scalar type")
    }

    /// Lossy conversion to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Matrix<T> = nalgebra::DMatrix<T>;
pub type Vector<T> = nalgebra::DVector<T>;

pub type Matrix64 = Matrix<f64>;
pub type Vector64 = Vector<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Vector32 = Vector<f32>;

pub type MeasurementMatrix64 = matrices::MeasurementMatrix<f64>;
pub type PartialMatrix64 = matrices::PartialMatrix<f64>;
pub type ObservationMask64 = matrices::ObservationMask<f64>;
pub type EmbeddingModel64 = completion::EmbeddingModel<f64>;
pub type ParetoPoint64 = pareto::ParetoPoint<f64>;
pub type ParetoFront64 = pareto::ParetoFront<f64>;

pub type MeasurementMatrix32 = matrices::MeasurementMatrix<f32>;
pub type EmbeddingModel32 = completion::EmbeddingModel<f32>;
pub type ParetoFront32 = pareto::ParetoFront<f32>;
