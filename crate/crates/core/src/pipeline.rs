//! The per-sample analysis chain shared by the simulation engine and the
//! command-line tool: domain means, isotonic fit, pooled design covariances,
//! criterion decision, and the order-restriction tests.

use crate::designcov::{cov_hat_pooled, sigma_hat, CovBasis, CovError, CovMatrix};
use crate::estimators::{
    hajek_domain_means, ht_domain_means, DomainEstimate, EstimatorError, EstimatorFlavor,
};
use crate::isotonic::{projection_matrix, weighted_pava, IsotonicError, PoolingPartition};
use crate::selection::{
    adaptive_estimate, cic, conditional_test, wald_test, CicReport, SelectionError, TestResult,
};
use crate::survey::{DesignSample, WeightMatrixSpec};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Isotonic(#[from] IsotonicError),
    #[error(transparent)]
    Covariance(#[from] CovError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("population domain sizes required for the Horvitz-Thompson flavor")]
    MissingPopulationSizes,
    #[error(transparent)]
    Design(#[from] crate::survey::DesignError),
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub flavor: EstimatorFlavor,
    /// Penalty constant multiplying the trace term; 2 is the proposed value.
    pub penalty_constant: f64,
    /// Monte Carlo draws for the conditional test's point mass; 0 skips the
    /// conditional test entirely.
    pub conditional_draws: usize,
    pub seed: u64,
    /// Known N_d, required for the Horvitz-Thompson flavor.
    pub pop_domain_sizes: Option<Vec<usize>>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            flavor: EstimatorFlavor::Hajek,
            penalty_constant: 2.0,
            conditional_draws: 10_000,
            seed: 0,
            pop_domain_sizes: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleAnalysis {
    pub estimate: DomainEstimate,
    pub theta: Vec<f64>,
    pub partition: PoolingPartition,
    pub weight_spec: WeightMatrixSpec,
    pub cov_y_y: CovMatrix,
    pub cov_theta_y: CovMatrix,
    pub cic: CicReport,
    pub adaptive: Vec<f64>,
    pub wald: TestResult,
    pub conditional: Option<TestResult>,
    /// Domains sampled with exactly one unit: their estimated variance is
    /// identically zero and reports flag them.
    pub single_unit_domains: Vec<usize>,
}

/// Run the full chain on one sample: unconstrained means, weighted PAVA,
/// pooled covariances under the observed pooling, criterion decision, and
/// both tests.
pub fn analyze_sample(
    sample: &DesignSample,
    options: &AnalysisOptions,
) -> Result<SampleAnalysis, PipelineError> {
    let (estimate, weight_spec, cov_y_y, cov_theta_y, partition, theta, single_unit_domains) =
        match options.flavor {
            EstimatorFlavor::Hajek => {
                let estimate = hajek_domain_means(sample)?;
                let (theta, partition) = weighted_pava(&estimate.means, &estimate.weights)?;
                let pooled = cov_hat_pooled(sample, &partition)?;
                let weight_spec = WeightMatrixSpec::from_estimated_sizes(&estimate.weights)?;
                (
                    estimate,
                    weight_spec,
                    pooled.cov_y_y,
                    pooled.cov_theta_y,
                    partition,
                    theta,
                    pooled.single_unit_domains,
                )
            }
            EstimatorFlavor::HorvitzThompson => {
                let sizes = options
                    .pop_domain_sizes
                    .as_ref()
                    .ok_or(PipelineError::MissingPopulationSizes)?;
                let estimate = ht_domain_means(sample, sizes)?;
                let (theta, partition) = weighted_pava(&estimate.means, &estimate.weights)?;
                let sigma = sigma_hat(sample, sizes)?;
                let p = projection_matrix(&partition, &estimate.weights);
                let cov_theta_y = CovMatrix {
                    entries: &p * &sigma.entries,
                    basis: CovBasis::BlocksByObservedPooling,
                };
                let weight_spec = WeightMatrixSpec::from_population_sizes(sizes)?;
                let singles = crate::survey::domain_counts(sample)
                    .sampled
                    .iter()
                    .enumerate()
                    .filter_map(|(d, &n)| (n == 1).then_some(d))
                    .collect();
                (
                    estimate, weight_spec, sigma, cov_theta_y, partition, theta, singles,
                )
            }
        };

    let cic_report = cic(
        &estimate,
        &theta,
        &weight_spec,
        &cov_theta_y,
        &cov_y_y,
        options.penalty_constant,
    )?;
    let adaptive = adaptive_estimate(&cic_report, &estimate.means, &theta);
    let wald = wald_test(&estimate.means, &theta, &partition, &cov_y_y);
    let conditional = (options.conditional_draws > 0).then(|| {
        conditional_test(
            &estimate.means,
            &theta,
            &partition,
            &cov_y_y,
            &estimate.weights,
            options.conditional_draws,
            options.seed,
        )
    });

    Ok(SampleAnalysis {
        estimate,
        theta,
        partition,
        weight_spec,
        cov_y_y,
        cov_theta_y,
        cic: cic_report,
        adaptive,
        wald,
        conditional,
        single_unit_domains,
    })
}
