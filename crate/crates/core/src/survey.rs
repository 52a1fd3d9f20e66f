//! Finite populations, probability samples, and sampling-design metadata.
//!
//! Domain indices are dense `0..D` throughout the crate; external category
//! labels are mapped at ingestion boundaries. Joint inclusion probabilities
//! are computed lazily per pair from the design's closed form, so tiny
//! enumeration oracles and large simulated samples share one interface.

use crate::util::{kahan_sum, KahanSum};
use itertools::Itertools;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("population must contain at least one unit and one domain")]
    EmptyPopulation,
    #[error("unit {unit}: domain index {domain} out of range (D = {num_domains})")]
    DomainOutOfRange {
        unit: usize,
        domain: usize,
        num_domains: usize,
    },
    #[error("domain {0} has no population units")]
    EmptyPopulationDomain(usize),
    #[error("mismatched field lengths in population construction")]
    LengthMismatch,
    #[error("unit {unit}: non-finite value")]
    NonFiniteValue { unit: usize },
    #[error("stratified design references group {group} with no allocation entry")]
    MissingStratum { group: usize },
    #[error("weights must be strictly positive and sum to one")]
    InvalidWeights,
}

/// A finite population: one study value, one domain, and one group label
/// (stratum or cluster) per unit. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Population {
    values: Vec<f64>,
    domains: Vec<usize>,
    groups: Vec<usize>,
    num_domains: usize,
    domain_sizes: Vec<usize>,
}

impl Population {
    pub fn new(
        values: Vec<f64>,
        domains: Vec<usize>,
        groups: Vec<usize>,
        num_domains: usize,
    ) -> Result<Self, DesignError> {
        if values.is_empty() || num_domains == 0 {
            return Err(DesignError::EmptyPopulation);
        }
        if values.len() != domains.len() || values.len() != groups.len() {
            return Err(DesignError::LengthMismatch);
        }
        for (unit, (&v, &d)) in values.iter().zip(&domains).enumerate() {
            if !v.is_finite() {
                return Err(DesignError::NonFiniteValue { unit });
            }
            if d >= num_domains {
                return Err(DesignError::DomainOutOfRange {
                    unit,
                    domain: d,
                    num_domains,
                });
            }
        }
        let mut domain_sizes = vec![0usize; num_domains];
        for &d in &domains {
            domain_sizes[d] += 1;
        }
        if let Some(d) = domain_sizes.iter().position(|&n| n == 0) {
            return Err(DesignError::EmptyPopulationDomain(d));
        }
        Ok(Self {
            values,
            domains,
            groups,
            num_domains,
            domain_sizes,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.iter().copied().max().map_or(0, |g| g + 1)
    }

    /// Per-domain population sizes N_d.
    pub fn domain_sizes(&self) -> &[usize] {
        &self.domain_sizes
    }

    /// Population domain means, one per domain.
    pub fn domain_means(&self) -> Vec<f64> {
        let mut sums = vec![KahanSum::new(); self.num_domains];
        for (&y, &d) in self.values.iter().zip(&self.domains) {
            sums[d].add(y);
        }
        sums.iter()
            .zip(&self.domain_sizes)
            .map(|(s, &n)| s.value() / n as f64)
            .collect()
    }

    /// Pooled population mean over domains `block.0..=block.1`.
    pub fn pooled_mean(&self, block: (usize, usize)) -> f64 {
        let mut sum = KahanSum::new();
        let mut count = 0usize;
        for (&y, &d) in self.values.iter().zip(&self.domains) {
            if d >= block.0 && d <= block.1 {
                sum.add(y);
                count += 1;
            }
        }
        sum.value() / count as f64
    }
}

/// One sampled unit: study value, first-order inclusion probability, domain,
/// and group (stratum or cluster) label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledUnit {
    pub value: f64,
    pub inclusion_prob: f64,
    pub domain: usize,
    pub group: usize,
}

/// Per-stratum population and sample sizes for stratified SRSWOR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StratumAllocation {
    pub population: usize,
    pub sample: usize,
}

/// Closed-form second-order inclusion probabilities, keyed by the units'
/// group labels.
#[derive(Debug, Clone, PartialEq)]
pub enum JointSpec {
    /// SRSWOR within each stratum, independent across strata. `strata` is
    /// indexed by group label.
    StratifiedSrswor { strata: Vec<StratumAllocation> },
    /// Equal-probability SRSWOR of `sampled` clusters out of `total`; every
    /// unit of a sampled cluster is observed.
    SingleStageCluster { sampled: usize, total: usize },
    /// Pairs treated as independent: pi_kl = pi_k * pi_l for k != l. The
    /// standard approximation when only per-unit weights are known.
    IndependentApprox,
}

/// A realized probability sample together with its design metadata.
/// Storage permits empty sampled domains; estimator operations reject them.
#[derive(Debug, Clone)]
pub struct DesignSample {
    units: Vec<SampledUnit>,
    num_domains: usize,
    joint: JointSpec,
}

impl DesignSample {
    pub fn new(
        units: Vec<SampledUnit>,
        num_domains: usize,
        joint: JointSpec,
    ) -> Result<Self, DesignError> {
        if num_domains == 0 {
            return Err(DesignError::EmptyPopulation);
        }
        for (unit, u) in units.iter().enumerate() {
            if !u.value.is_finite() || !u.inclusion_prob.is_finite() {
                return Err(DesignError::NonFiniteValue { unit });
            }
            if u.domain >= num_domains {
                return Err(DesignError::DomainOutOfRange {
                    unit,
                    domain: u.domain,
                    num_domains,
                });
            }
            if let JointSpec::StratifiedSrswor { strata } = &joint {
                if u.group >= strata.len() {
                    return Err(DesignError::MissingStratum { group: u.group });
                }
            }
        }
        Ok(Self {
            units,
            num_domains,
            joint,
        })
    }

    pub fn units(&self) -> &[SampledUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    pub fn joint_spec(&self) -> &JointSpec {
        &self.joint
    }

    /// Second-order inclusion probability pi_kl for sampled units `a`, `b`
    /// (indices into `units`). The diagonal returns pi_k.
    pub fn joint_probability(&self, a: usize, b: usize) -> f64 {
        let ua = &self.units[a];
        let ub = &self.units[b];
        if a == b {
            return ua.inclusion_prob;
        }
        match &self.joint {
            JointSpec::StratifiedSrswor { strata } => {
                if ua.group == ub.group {
                    let s = strata[ua.group];
                    let (n, nn) = (s.sample as f64, s.population as f64);
                    n * (n - 1.0) / (nn * (nn - 1.0))
                } else {
                    ua.inclusion_prob * ub.inclusion_prob
                }
            }
            JointSpec::SingleStageCluster { sampled, total } => {
                let (r, t) = (*sampled as f64, *total as f64);
                if ua.group == ub.group {
                    r / t
                } else {
                    r * (r - 1.0) / (t * (t - 1.0))
                }
            }
            JointSpec::IndependentApprox => ua.inclusion_prob * ub.inclusion_prob,
        }
    }
}

/// One weight vector W = diag(w_1..w_D), either N_d/N (population) or
/// N_hat_d/N_hat (estimated). Weights are strictly positive and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrixSpec {
    kind: WeightKind,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Population,
    Estimated,
}

impl WeightMatrixSpec {
    pub fn from_population_sizes(sizes: &[usize]) -> Result<Self, DesignError> {
        Self::build(
            sizes.iter().map(|&n| n as f64).collect(),
            WeightKind::Population,
        )
    }

    pub fn from_estimated_sizes(sizes: &[f64]) -> Result<Self, DesignError> {
        Self::build(sizes.to_vec(), WeightKind::Estimated)
    }

    fn build(raw: Vec<f64>, kind: WeightKind) -> Result<Self, DesignError> {
        let total = kahan_sum(raw.iter().copied());
        if raw.is_empty() || !(total > 0.0) || raw.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(DesignError::InvalidWeights);
        }
        let weights: Vec<f64> = raw.iter().map(|&w| w / total).collect();
        debug_assert!((kahan_sum(weights.iter().copied()) - 1.0).abs() < 1e-12);
        Ok(Self { kind, weights })
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DesignViolation {
    NonpositiveInclusion { unit: usize, pi: f64 },
    InclusionAboveOne { unit: usize, pi: f64 },
    NonmeasurablePair { a: usize, b: usize },
    AsymmetricJoint { a: usize, b: usize },
    JointDiagonalMismatch { unit: usize },
    EmptyDomain { domain: usize },
}

/// Outcome of [`validate_design`]; valid iff no violations were found.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<DesignViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scan a sample for measurability violations: first-order probabilities
/// outside (0, 1], nonpositive or asymmetric joint probabilities on sampled
/// pairs, and empty sampled domains. Always returns a report.
pub fn validate_design(sample: &DesignSample) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (unit, u) in sample.units().iter().enumerate() {
        if u.inclusion_prob <= 0.0 {
            report.violations.push(DesignViolation::NonpositiveInclusion {
                unit,
                pi: u.inclusion_prob,
            });
        } else if u.inclusion_prob > 1.0 {
            report.violations.push(DesignViolation::InclusionAboveOne {
                unit,
                pi: u.inclusion_prob,
            });
        }
    }
    let n = sample.len();
    for a in 0..n {
        if (sample.joint_probability(a, a) - sample.units()[a].inclusion_prob).abs() > 0.0 {
            report
                .violations
                .push(DesignViolation::JointDiagonalMismatch { unit: a });
        }
        for b in (a + 1)..n {
            let pab = sample.joint_probability(a, b);
            let pba = sample.joint_probability(b, a);
            if pab <= 0.0 {
                report
                    .violations
                    .push(DesignViolation::NonmeasurablePair { a, b });
            }
            if pab != pba {
                report
                    .violations
                    .push(DesignViolation::AsymmetricJoint { a, b });
            }
        }
    }
    let counts = domain_counts(sample);
    for (d, &nd) in counts.sampled.iter().enumerate() {
        if nd == 0 {
            report
                .violations
                .push(DesignViolation::EmptyDomain { domain: d });
        }
    }
    report
}

/// Sampled counts n_d and estimated sizes N_hat_d = sum of 1/pi over each
/// sampled domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainCounts {
    pub sampled: Vec<usize>,
    pub estimated_sizes: Vec<f64>,
}

pub fn domain_counts(sample: &DesignSample) -> DomainCounts {
    let d = sample.num_domains();
    let mut sampled = vec![0usize; d];
    let mut sums = vec![KahanSum::new(); d];
    for u in sample.units() {
        sampled[u.domain] += 1;
        sums[u.domain].add(1.0 / u.inclusion_prob);
    }
    DomainCounts {
        sampled,
        estimated_sizes: sums.iter().map(|s| s.value()).collect(),
    }
}

/// Exhaustively enumerate every stratified-SRSWOR sample of `pop` under the
/// per-group allocation, with its design probability. Intended for small
/// oracle populations; the caller is responsible for keeping the sample
/// space enumerable.
pub fn enumerate_stsi(
    pop: &Population,
    allocation: &[usize],
) -> Result<Vec<(DesignSample, f64)>, DesignError> {
    let num_groups = pop.num_groups().max(allocation.len());
    let mut group_units: Vec<Vec<usize>> = vec![Vec::new(); num_groups];
    for (k, &g) in pop.groups().iter().enumerate() {
        group_units[g].push(k);
    }
    let mut strata = Vec::with_capacity(num_groups);
    for (g, units) in group_units.iter().enumerate() {
        let n_h = *allocation.get(g).unwrap_or(&0);
        if n_h > units.len() {
            return Err(DesignError::MissingStratum { group: g });
        }
        strata.push(StratumAllocation {
            population: units.len(),
            sample: n_h,
        });
    }

    let per_stratum: Vec<Vec<Vec<usize>>> = group_units
        .iter()
        .enumerate()
        .map(|(g, units)| {
            units
                .iter()
                .copied()
                .combinations(strata[g].sample)
                .collect()
        })
        .collect();
    let total: usize = per_stratum.iter().map(|c| c.len()).product();
    let prob = 1.0 / total as f64;

    let mut out = Vec::with_capacity(total);
    let mut stack: Vec<usize> = vec![0; per_stratum.len()];
    loop {
        let mut chosen: Vec<usize> = Vec::new();
        for (g, combos) in per_stratum.iter().enumerate() {
            chosen.extend_from_slice(&combos[stack[g]]);
        }
        chosen.sort_unstable();
        let units = chosen
            .iter()
            .map(|&k| SampledUnit {
                value: pop.values()[k],
                inclusion_prob: {
                    let s = strata[pop.groups()[k]];
                    s.sample as f64 / s.population as f64
                },
                domain: pop.domains()[k],
                group: pop.groups()[k],
            })
            .collect();
        out.push((
            DesignSample::new(
                units,
                pop.num_domains(),
                JointSpec::StratifiedSrswor {
                    strata: strata.clone(),
                },
            )?,
            prob,
        ));

        // odometer over per-stratum combination indices
        let mut g = 0;
        loop {
            if g == per_stratum.len() {
                return Ok(out);
            }
            stack[g] += 1;
            if stack[g] < per_stratum[g].len() {
                break;
            }
            stack[g] = 0;
            g += 1;
        }
    }
}

/// Exhaustively enumerate every single-stage cluster sample (all subsets of
/// `sampled` clusters), with its design probability.
pub fn enumerate_cluster(
    pop: &Population,
    sampled: usize,
) -> Result<Vec<(DesignSample, f64)>, DesignError> {
    let total = pop.num_groups();
    let mut cluster_units: Vec<Vec<usize>> = vec![Vec::new(); total];
    for (k, &g) in pop.groups().iter().enumerate() {
        cluster_units[g].push(k);
    }
    let pi = sampled as f64 / total as f64;
    let combos: Vec<Vec<usize>> = (0..total).combinations(sampled).collect();
    let prob = 1.0 / combos.len() as f64;
    let mut out = Vec::with_capacity(combos.len());
    for clusters in combos {
        let mut units = Vec::new();
        for &c in &clusters {
            for &k in &cluster_units[c] {
                units.push(SampledUnit {
                    value: pop.values()[k],
                    inclusion_prob: pi,
                    domain: pop.domains()[k],
                    group: pop.groups()[k],
                });
            }
        }
        out.push((
            DesignSample::new(
                units,
                pop.num_domains(),
                JointSpec::SingleStageCluster { sampled, total },
            )?,
            prob,
        ));
    }
    Ok(out)
}
