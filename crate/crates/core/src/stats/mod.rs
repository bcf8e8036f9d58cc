//! Statistical kernels: regression scores, CI tests, p-value combiners and
//! two-sample discrepancies.

pub mod citest;
pub mod divergence;
pub mod pvalue;
pub mod regression;

pub use citest::{fisher_z_pvalue, fisher_z_test, CiTest, DSepOracle, FisherZ};
pub use divergence::{energy_distance, gaussian_sym_kl, median_heuristic, mmd};
pub use pvalue::{aggregate_pvalues, Aggregated, AggregatorKind};
pub use regression::{bic_local, ols_fit, ols_fit_robust, FitResult, LocalScorer};
