//! Scenario configuration and finite-population synthesis.
//!
//! Limiting domain means come from one of three sigmoids; monotonicity
//! departures are created by pulling the last mean down. Population values
//! are drawn per domain from a normal or chi-square distribution, and an
//! auxiliary variable z = sigma*(d/D) + N(0,1) assigns group membership by
//! ranking, which makes the unequal-allocation designs informative.

use crate::SimError;
use isocrit_core::survey::Population;
use isocrit_core::EstimatorFlavor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// ChaCha stream reserved for population generation; replicate draws use
/// streams 0, 1, 2, ...
pub(crate) const POPULATION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sigmoid {
    S1,
    S2,
    S3,
}

impl Sigmoid {
    /// Sigmoid value at domain `d` (1-based) out of `num_domains`.
    pub fn value(&self, d: usize, num_domains: usize) -> f64 {
        let x = d as f64 / num_domains as f64;
        match self {
            Sigmoid::S1 => {
                let e = (5.0 * x - 2.0).exp();
                2.0 * e / (1.0 + e)
            }
            Sigmoid::S2 => {
                let e = (5.0 * x - 2.0).exp();
                4.0 * e / (1.0 + e)
            }
            Sigmoid::S3 => {
                let e = (20.0 * x - 10.0).exp();
                e / (1.0 + e)
            }
        }
    }
}

/// How the last limiting mean departs from the sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// mu_d = S(d) for all d: strictly increasing.
    Monotone,
    /// mu_D pulled down by Delta = S(D) - S(D-1), so mu_D = mu_{D-1}.
    Flat,
    /// mu_D pulled down by 2 Delta: below mu_{D-1}.
    NonMonotone,
    /// mu_D = S(D) - t * Delta for a configurable violation multiple.
    PullDown { multiple: f64 },
    /// mu_d = S(d) for d < D and mu_D = S(D-1) - delta (the S3 studies);
    /// delta < 0 is monotone, 0 flat, > 0 non-monotone.
    DeltaShift { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PopulationDist {
    /// y ~ Normal(mu_d, sigma^2)
    Normal { sigma: f64 },
    /// y ~ chi-square with mu_d degrees of freedom (skewed case)
    ChiSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DesignChoice {
    /// SRSWOR within each of the z-ranked strata; one sample size per stratum.
    StratifiedSrswor { allocation: Vec<usize> },
    /// Equal-probability sample of `sampled` of the z-ranked clusters.
    Cluster { clusters: usize, sampled: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_domains: usize,
    pub sigmoid: Sigmoid,
    pub shape: Shape,
    pub dist: PopulationDist,
    pub population_size: usize,
    /// Strata count for the z-ranking when the design is stratified.
    pub strata: usize,
    pub design: DesignChoice,
    pub replications: usize,
    pub seed: u64,
    pub flavor: EstimatorFlavorConfig,
    pub penalty_constant: f64,
    /// Monte Carlo draws for the conditional test's point mass; 0 disables
    /// the conditional test.
    pub conditional_draws: usize,
}

/// Serializable mirror of the estimator flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorFlavorConfig {
    HorvitzThompson,
    Hajek,
}

impl From<EstimatorFlavorConfig> for EstimatorFlavor {
    fn from(f: EstimatorFlavorConfig) -> Self {
        match f {
            EstimatorFlavorConfig::HorvitzThompson => EstimatorFlavor::HorvitzThompson,
            EstimatorFlavorConfig::Hajek => EstimatorFlavor::Hajek,
        }
    }
}

impl ScenarioConfig {
    pub fn total_sample_size(&self) -> usize {
        match &self.design {
            DesignChoice::StratifiedSrswor { allocation } => allocation.iter().sum(),
            DesignChoice::Cluster { clusters, sampled } => {
                self.population_size / clusters * sampled
            }
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_domains == 0 || self.replications == 0 {
            return Err(SimError::InvalidScenario(
                "need at least one domain and one replication".into(),
            ));
        }
        if !self.population_size.is_multiple_of(self.num_domains) {
            return Err(SimError::IndivisibleSizes {
                n: self.population_size,
                divisor: self.num_domains,
                what: "domains",
            });
        }
        match &self.design {
            DesignChoice::StratifiedSrswor { allocation } => {
                if allocation.len() != self.strata {
                    return Err(SimError::AllocationLength {
                        expected: self.strata,
                        got: allocation.len(),
                    });
                }
                if !self.population_size.is_multiple_of(self.strata) {
                    return Err(SimError::IndivisibleSizes {
                        n: self.population_size,
                        divisor: self.strata,
                        what: "strata",
                    });
                }
                let per = self.population_size / self.strata;
                for (h, &n_h) in allocation.iter().enumerate() {
                    if n_h > per {
                        return Err(SimError::InfeasibleAllocation {
                            stratum: h,
                            requested: n_h,
                            available: per,
                        });
                    }
                }
            }
            DesignChoice::Cluster { clusters, sampled } => {
                if !self.population_size.is_multiple_of(*clusters) {
                    return Err(SimError::IndivisibleSizes {
                        n: self.population_size,
                        divisor: *clusters,
                        what: "clusters",
                    });
                }
                if sampled > clusters || *sampled == 0 {
                    return Err(SimError::TooManyClusters {
                        requested: *sampled,
                        available: *clusters,
                    });
                }
            }
        }
        if matches!(self.dist, PopulationDist::ChiSquared)
            && make_scenario_means(self).iter().any(|&m| m <= 0.0)
        {
            return Err(SimError::InvalidScenario(
                "chi-square degrees of freedom must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The z-ranked group count: strata for stratified designs, cluster
    /// count for cluster designs.
    pub fn num_groups(&self) -> usize {
        match &self.design {
            DesignChoice::StratifiedSrswor { .. } => self.strata,
            DesignChoice::Cluster { clusters, .. } => *clusters,
        }
    }

    /// The sigma driving the auxiliary z variable (the population sigma for
    /// normal populations; the conventional 3.0 otherwise).
    fn z_scale(&self) -> f64 {
        match self.dist {
            PopulationDist::Normal { sigma } => sigma,
            PopulationDist::ChiSquared => 3.0,
        }
    }
}

/// Limiting domain means per the configured sigmoid and shape.
pub fn make_scenario_means(config: &ScenarioConfig) -> Vec<f64> {
    let d = config.num_domains;
    let s = |i: usize| config.sigmoid.value(i, d);
    let mut mu: Vec<f64> = (1..=d).map(s).collect();
    if d < 2 {
        return mu;
    }
    let delta = s(d) - s(d - 1);
    match config.shape {
        Shape::Monotone => {}
        Shape::Flat => mu[d - 1] = s(d) - delta,
        Shape::NonMonotone => mu[d - 1] = s(d) - 2.0 * delta,
        Shape::PullDown { multiple } => mu[d - 1] = s(d) - multiple * delta,
        Shape::DeltaShift { delta: shift } => mu[d - 1] = s(d - 1) - shift,
    }
    mu
}

/// Generate a finite population for the scenario: domain-major values drawn
/// from the configured distribution, then group labels assigned by ranking
/// z = sigma*(d/D) + N(0,1) into equal blocks (ties broken by unit index).
pub fn generate_population(config: &ScenarioConfig, seed: u64) -> Result<Population, SimError> {
    config.validate()?;
    let n = config.population_size;
    let d = config.num_domains;
    let per_domain = n / d;
    let groups = config.num_groups();
    let mu = make_scenario_means(config);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(POPULATION_STREAM);

    let domains: Vec<usize> = (0..n).map(|k| k / per_domain).collect();
    let mut values = Vec::with_capacity(n);
    match config.dist {
        PopulationDist::Normal { sigma } => {
            for k in 0..n {
                let eps: f64 = rng.sample(StandardNormal);
                values.push(mu[domains[k]] + sigma * eps);
            }
        }
        PopulationDist::ChiSquared => {
            let dists: Vec<ChiSquared<f64>> = mu
                .iter()
                .map(|&m| ChiSquared::new(m).expect("validated positive dof"))
                .collect();
            for k in 0..n {
                values.push(dists[domains[k]].sample(&mut rng));
            }
        }
    }

    let z_scale = config.z_scale();
    let z: Vec<f64> = (0..n)
        .map(|k| {
            let eps: f64 = rng.sample(StandardNormal);
            z_scale * (domains[k] as f64 + 1.0) / d as f64 + eps
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].partial_cmp(&z[b]).unwrap().then(a.cmp(&b)));
    let block = n / groups;
    let mut group_of = vec![0usize; n];
    for (rank, &unit) in order.iter().enumerate() {
        group_of[unit] = (rank / block).min(groups - 1);
    }

    Ok(Population::new(values, domains, group_of, d)?)
}
