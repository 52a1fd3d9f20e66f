//! Design-based estimation of population domain means under monotonicity
//! constraints.
//!
//! The crate provides the building blocks for choosing adaptively between
//! unconstrained (Horvitz-Thompson / Hajek) and constrained (weighted
//! isotonic) domain mean estimators:
//!
//! * [`survey`] — finite populations, samples with first- and second-order
//!   inclusion probabilities, and design validation;
//! * [`estimators`] — unconstrained domain and pooled-block means;
//! * [`isotonic`] — weighted PAVA, the max-min closed form, projection
//!   matrices, and greatest-convex-minorant diagnostics;
//! * [`designcov`] — the unbiased Horvitz-Thompson covariance estimator and
//!   linearization-based approximate covariances for pooled Hajek means;
//! * [`selection`] — the cone information criterion, the adaptive estimator,
//!   Wald and conditional order-restriction tests, and predictive squared
//!   error oracles;
//! * [`pipeline`] — the full per-sample analysis chain shared by the
//!   simulation engine and the command-line tool.

pub mod designcov;
pub mod estimators;
pub mod isotonic;
pub mod pipeline;
pub mod selection;
pub mod survey;
pub(crate) mod util;

pub use designcov::{ac_hat, ac_hat_pairwise, ac_population, cov_hat_pooled, sigma_hat};
pub use designcov::{CovBasis, CovMatrix, PooledCovariances};
pub use estimators::{
    hajek_domain_means, ht_domain_means, pooled_block_mean, DomainEstimate, EstimatorFlavor,
};
pub use isotonic::{
    gcm_classify, max_min_solution, projection_matrix, weighted_pava, GcmDiagnostics,
    GcmPointClass, PoolingPartition,
};
pub use selection::{
    adaptive_estimate, chi_sq_sf, cic, conditional_test, pse_exact, sse, wald_test, ChosenEstimator,
    CicReport, PseReport, TestResult,
};
pub use survey::{
    domain_counts, validate_design, DesignSample, DomainCounts, JointSpec, Population, SampledUnit,
    StratumAllocation, ValidationReport, WeightMatrixSpec,
};
