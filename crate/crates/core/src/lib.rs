//! Regime-wise causal structure learning with cover-based aggregation.
//!
//! Structure learners run independently on each regime of a dataset; their
//! adjacencies are glued by support-count thresholds and compared with a
//! pooled fit. The numeric kernels are generic over [`Real`] (`f32`/`f64`);
//! the aliases below fix the scalar for everyday use.

pub mod agg;
pub mod ci;
pub mod data;
pub mod error;
pub mod ges;
pub mod graph;
pub mod interference;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod sem;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Data64 = data::MultiRegimeData<f64>;
pub type Data32 = data::MultiRegimeData<f32>;
pub type Sem64 = sem::LinearSem<f64>;
pub type Sem32 = sem::LinearSem<f32>;
