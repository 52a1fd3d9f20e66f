//! Unconstrained domain-mean estimation: Horvitz-Thompson, Hajek, and pooled
//! block means.
//!
//! All pooled quantities are computed from per-domain sufficient statistics
//! (sum of y/pi and sum of 1/pi), so downstream pooling runs on O(D) state.

use crate::survey::DesignSample;
use crate::util::KahanSum;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("domain {0} has no sampled units")]
    EmptyDomain(usize),
    #[error("block {0}..={1} has no sampled units")]
    EmptyBlock(usize, usize),
    #[error("population domain sizes required for the Horvitz-Thompson flavor")]
    MissingPopulationSizes,
    #[error("expected {expected} domain sizes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid block {0}..={1}")]
    InvalidBlock(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorFlavor {
    HorvitzThompson,
    Hajek,
}

/// Per-domain mean estimates with the weight sequence that accompanies them
/// (N_d for Horvitz-Thompson, N_hat_d for Hajek).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainEstimate {
    pub means: Vec<f64>,
    pub weights: Vec<f64>,
    pub flavor: EstimatorFlavor,
}

/// Per-domain inverse-probability-weighted totals: sum of y/pi and 1/pi.
#[derive(Debug, Clone)]
pub(crate) struct DomainTotals {
    pub weighted_sums: Vec<f64>,
    pub estimated_sizes: Vec<f64>,
    pub counts: Vec<usize>,
}

impl DomainTotals {
    pub fn from_sample(sample: &DesignSample) -> Self {
        let d = sample.num_domains();
        let mut sums = vec![KahanSum::new(); d];
        let mut sizes = vec![KahanSum::new(); d];
        let mut counts = vec![0usize; d];
        for u in sample.units() {
            let w = 1.0 / u.inclusion_prob;
            sums[u.domain].add(w * u.value);
            sizes[u.domain].add(w);
            counts[u.domain] += 1;
        }
        Self {
            weighted_sums: sums.iter().map(|s| s.value()).collect(),
            estimated_sizes: sizes.iter().map(|s| s.value()).collect(),
            counts,
        }
    }
}

/// Horvitz-Thompson domain means: (sum of y/pi over the sampled domain) / N_d.
pub fn ht_domain_means(
    sample: &DesignSample,
    pop_domain_sizes: &[usize],
) -> Result<DomainEstimate, EstimatorError> {
    if pop_domain_sizes.len() != sample.num_domains() {
        return Err(EstimatorError::DimensionMismatch {
            expected: sample.num_domains(),
            got: pop_domain_sizes.len(),
        });
    }
    let totals = DomainTotals::from_sample(sample);
    if let Some(d) = totals.counts.iter().position(|&n| n == 0) {
        return Err(EstimatorError::EmptyDomain(d));
    }
    Ok(ht_from_totals(&totals, pop_domain_sizes))
}

/// Horvitz-Thompson means where an empty sampled domain contributes a zero
/// total (hence a zero mean). The enumeration oracles need the estimator
/// defined on every realizable sample; user-facing estimation should prefer
/// [`ht_domain_means`], which rejects empty domains.
pub fn ht_domain_means_allowing_empty(
    sample: &DesignSample,
    pop_domain_sizes: &[usize],
) -> Result<DomainEstimate, EstimatorError> {
    if pop_domain_sizes.len() != sample.num_domains() {
        return Err(EstimatorError::DimensionMismatch {
            expected: sample.num_domains(),
            got: pop_domain_sizes.len(),
        });
    }
    let totals = DomainTotals::from_sample(sample);
    Ok(ht_from_totals(&totals, pop_domain_sizes))
}

fn ht_from_totals(totals: &DomainTotals, pop_domain_sizes: &[usize]) -> DomainEstimate {
    let means = totals
        .weighted_sums
        .iter()
        .zip(pop_domain_sizes)
        .map(|(&s, &n)| s / n as f64)
        .collect();
    DomainEstimate {
        means,
        weights: pop_domain_sizes.iter().map(|&n| n as f64).collect(),
        flavor: EstimatorFlavor::HorvitzThompson,
    }
}

/// Hajek domain means: (sum of y/pi) / N_hat_d with N_hat_d = sum of 1/pi.
pub fn hajek_domain_means(sample: &DesignSample) -> Result<DomainEstimate, EstimatorError> {
    let totals = DomainTotals::from_sample(sample);
    if let Some(d) = totals.counts.iter().position(|&n| n == 0) {
        return Err(EstimatorError::EmptyDomain(d));
    }
    let means = totals
        .weighted_sums
        .iter()
        .zip(&totals.estimated_sizes)
        .map(|(&s, &nh)| s / nh)
        .collect();
    Ok(DomainEstimate {
        means,
        weights: totals.estimated_sizes.clone(),
        flavor: EstimatorFlavor::Hajek,
    })
}

/// Weighted mean of the pooled domains `block.0..=block.1`. Equals the
/// weights-weighted average of the per-domain means.
pub fn pooled_block_mean(
    sample: &DesignSample,
    block: (usize, usize),
    flavor: EstimatorFlavor,
    pop_domain_sizes: Option<&[usize]>,
) -> Result<f64, EstimatorError> {
    let (i, j) = block;
    if i > j || j >= sample.num_domains() {
        return Err(EstimatorError::InvalidBlock(i, j));
    }
    let totals = DomainTotals::from_sample(sample);
    if totals.counts[i..=j].iter().all(|&n| n == 0) {
        return Err(EstimatorError::EmptyBlock(i, j));
    }
    let mut numer = KahanSum::new();
    for &s in &totals.weighted_sums[i..=j] {
        numer.add(s);
    }
    let mut denom = KahanSum::new();
    match flavor {
        EstimatorFlavor::Hajek => {
            for &nh in &totals.estimated_sizes[i..=j] {
                denom.add(nh);
            }
        }
        EstimatorFlavor::HorvitzThompson => {
            let sizes = pop_domain_sizes.ok_or(EstimatorError::MissingPopulationSizes)?;
            if sizes.len() != sample.num_domains() {
                return Err(EstimatorError::DimensionMismatch {
                    expected: sample.num_domains(),
                    got: sizes.len(),
                });
            }
            for &n in &sizes[i..=j] {
                denom.add(n as f64);
            }
        }
    }
    Ok(numer.value() / denom.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::{enumerate_stsi, JointSpec, Population, SampledUnit};

    fn sample_from(units: Vec<(f64, f64, usize)>, d: usize) -> DesignSample {
        DesignSample::new(
            units
                .into_iter()
                .map(|(value, pi, domain)| SampledUnit {
                    value,
                    inclusion_prob: pi,
                    domain,
                    group: 0,
                })
                .collect(),
            d,
            JointSpec::IndependentApprox,
        )
        .unwrap()
    }

    #[test]
    fn ht_direct_arithmetic() {
        // y = (2, 4), pi = (0.5, 0.5), N_d = 4 -> (4 + 8)/4 = 3
        let s = sample_from(vec![(2.0, 0.5, 0), (4.0, 0.5, 0)], 1);
        let est = ht_domain_means(&s, &[4]).unwrap();
        assert!((est.means[0] - 3.0).abs() < 1e-15);
        assert_eq!(est.weights, vec![4.0]);
    }

    #[test]
    fn ht_census_recovers_population_means() {
        let pop = Population::new(
            vec![1.0, 2.0, 3.0, 7.0],
            vec![0, 0, 1, 1],
            vec![0, 0, 0, 0],
            2,
        )
        .unwrap();
        let (census, _) = enumerate_stsi(&pop, &[4]).unwrap().pop().unwrap();
        let est = ht_domain_means(&census, pop.domain_sizes()).unwrap();
        assert_eq!(est.means, pop.domain_means());
    }

    #[test]
    fn ht_unbiased_over_enumeration() {
        // SRSWOR N = 4, n = 2, one domain: E[y_hat] = 2.5
        let pop = Population::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0, 0, 0, 0],
            vec![0, 0, 0, 0],
            1,
        )
        .unwrap();
        let mut acc = 0.0;
        for (s, p) in enumerate_stsi(&pop, &[2]).unwrap() {
            acc += p * ht_domain_means(&s, pop.domain_sizes()).unwrap().means[0];
        }
        assert!((acc - 2.5).abs() < 1e-12);
    }

    #[test]
    fn ht_empty_domain_rejected() {
        let s = sample_from(vec![(2.0, 0.5, 0)], 2);
        assert_eq!(
            ht_domain_means(&s, &[2, 2]).unwrap_err(),
            EstimatorError::EmptyDomain(1)
        );
    }

    #[test]
    fn hajek_weights_cancel_when_equal() {
        let s = sample_from(vec![(2.0, 0.2, 0), (4.0, 0.2, 0), (9.0, 0.2, 0)], 1);
        let est = hajek_domain_means(&s).unwrap();
        assert!((est.means[0] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn hajek_direct_arithmetic() {
        // y = (2, 4), pi = (0.5, 0.25) -> (4 + 16)/(2 + 4) = 10/3
        let s = sample_from(vec![(2.0, 0.5, 0), (4.0, 0.25, 0)], 1);
        let est = hajek_domain_means(&s).unwrap();
        assert!((est.means[0] - 10.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hajek_census_recovers_population_means() {
        let pop = Population::new(
            vec![1.0, 2.0, 3.0, 7.0],
            vec![0, 0, 1, 1],
            vec![0, 0, 0, 0],
            2,
        )
        .unwrap();
        let (census, _) = enumerate_stsi(&pop, &[4]).unwrap().pop().unwrap();
        let est = hajek_domain_means(&census).unwrap();
        for (m, e) in est.means.iter().zip(pop.domain_means()) {
            assert!((m - e).abs() < 1e-15);
        }
    }

    #[test]
    fn pooled_single_block_is_domain_mean() {
        let s = sample_from(vec![(2.0, 0.5, 0), (4.0, 0.25, 0), (1.0, 0.5, 1)], 2);
        let est = hajek_domain_means(&s).unwrap();
        let pooled = pooled_block_mean(&s, (0, 0), EstimatorFlavor::Hajek, None).unwrap();
        assert!((pooled - est.means[0]).abs() < 1e-15);
    }

    #[test]
    fn pooled_mean_is_weighted_average_of_domain_means() {
        // Hajek means (1, 3) with N_hat = (1, 2) -> pooled 7/3
        let s = sample_from(vec![(1.0, 1.0, 0), (3.0, 0.5, 1)], 2);
        let pooled = pooled_block_mean(&s, (0, 1), EstimatorFlavor::Hajek, None).unwrap();
        assert!((pooled - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pooled_full_block_on_census_is_population_mean() {
        let pop = Population::new(
            vec![1.0, 2.0, 3.0, 7.0],
            vec![0, 0, 1, 1],
            vec![0, 0, 0, 0],
            2,
        )
        .unwrap();
        let (census, _) = enumerate_stsi(&pop, &[4]).unwrap().pop().unwrap();
        let pooled = pooled_block_mean(&census, (0, 1), EstimatorFlavor::Hajek, None).unwrap();
        assert!((pooled - 3.25).abs() < 1e-15);
        let pooled_ht = pooled_block_mean(
            &census,
            (0, 1),
            EstimatorFlavor::HorvitzThompson,
            Some(pop.domain_sizes()),
        )
        .unwrap();
        assert!((pooled_ht - 3.25).abs() < 1e-15);
    }

    #[test]
    fn pooled_block_requires_population_sizes_for_ht() {
        let s = sample_from(vec![(1.0, 1.0, 0), (3.0, 0.5, 1)], 2);
        assert_eq!(
            pooled_block_mean(&s, (0, 1), EstimatorFlavor::HorvitzThompson, None).unwrap_err(),
            EstimatorError::MissingPopulationSizes
        );
    }

    #[test]
    fn empty_block_rejected() {
        let s = sample_from(vec![(1.0, 1.0, 0)], 2);
        assert_eq!(
            pooled_block_mean(&s, (1, 1), EstimatorFlavor::Hajek, None).unwrap_err(),
            EstimatorError::EmptyBlock(1, 1)
        );
    }
}
