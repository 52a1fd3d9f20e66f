//! Sample drawing for the two closed-form designs: stratified SRSWOR and
//! single-stage cluster sampling. Frames precompute the per-group unit lists
//! so the replication loop pays O(n) per draw.

use crate::SimError;
use isocrit_core::survey::{DesignSample, JointSpec, Population, SampledUnit, StratumAllocation};
use rand::Rng;

/// Precomputed stratified-SRSWOR sampling frame.
#[derive(Debug, Clone)]
pub struct StratifiedFrame {
    group_units: Vec<Vec<usize>>,
    strata: Vec<StratumAllocation>,
    inclusion: Vec<f64>,
}

impl StratifiedFrame {
    pub fn new(pop: &Population, allocation: &[usize]) -> Result<Self, SimError> {
        let groups = pop.num_groups();
        if allocation.len() != groups {
            return Err(SimError::AllocationLength {
                expected: groups,
                got: allocation.len(),
            });
        }
        let mut group_units: Vec<Vec<usize>> = vec![Vec::new(); groups];
        for (k, &g) in pop.groups().iter().enumerate() {
            group_units[g].push(k);
        }
        let mut strata = Vec::with_capacity(groups);
        let mut inclusion = Vec::with_capacity(groups);
        for (h, units) in group_units.iter().enumerate() {
            let n_h = allocation[h];
            if n_h > units.len() {
                return Err(SimError::InfeasibleAllocation {
                    stratum: h,
                    requested: n_h,
                    available: units.len(),
                });
            }
            strata.push(StratumAllocation {
                population: units.len(),
                sample: n_h,
            });
            inclusion.push(n_h as f64 / units.len() as f64);
        }
        Ok(Self {
            group_units,
            strata,
            inclusion,
        })
    }

    /// Draw one stratified SRSWOR sample; realized stratum sample sizes equal
    /// the allocation exactly.
    pub fn draw<R: Rng>(&self, pop: &Population, rng: &mut R) -> DesignSample {
        let total: usize = self.strata.iter().map(|s| s.sample).sum();
        let mut units = Vec::with_capacity(total);
        for (h, members) in self.group_units.iter().enumerate() {
            let n_h = self.strata[h].sample;
            if n_h == 0 {
                continue;
            }
            let mut picks = rand::seq::index::sample(rng, members.len(), n_h).into_vec();
            picks.sort_unstable();
            for p in picks {
                let k = members[p];
                units.push(SampledUnit {
                    value: pop.values()[k],
                    inclusion_prob: self.inclusion[h],
                    domain: pop.domains()[k],
                    group: h,
                });
            }
        }
        DesignSample::new(
            units,
            pop.num_domains(),
            JointSpec::StratifiedSrswor {
                strata: self.strata.clone(),
            },
        )
        .expect("frame-constructed sample is structurally valid")
    }
}

/// Precomputed single-stage cluster sampling frame.
#[derive(Debug, Clone)]
pub struct ClusterFrame {
    cluster_units: Vec<Vec<usize>>,
    sampled: usize,
}

impl ClusterFrame {
    pub fn new(pop: &Population, sampled: usize) -> Result<Self, SimError> {
        let clusters = pop.num_groups();
        if sampled == 0 || sampled > clusters {
            return Err(SimError::TooManyClusters {
                requested: sampled,
                available: clusters,
            });
        }
        let mut cluster_units: Vec<Vec<usize>> = vec![Vec::new(); clusters];
        for (k, &g) in pop.groups().iter().enumerate() {
            cluster_units[g].push(k);
        }
        Ok(Self {
            cluster_units,
            sampled,
        })
    }

    /// Draw `sampled` clusters with equal probability and observe every unit
    /// of each.
    pub fn draw<R: Rng>(&self, pop: &Population, rng: &mut R) -> DesignSample {
        let total = self.cluster_units.len();
        let pi = self.sampled as f64 / total as f64;
        let mut picks = rand::seq::index::sample(rng, total, self.sampled).into_vec();
        picks.sort_unstable();
        let mut units = Vec::new();
        for c in picks {
            for &k in &self.cluster_units[c] {
                units.push(SampledUnit {
                    value: pop.values()[k],
                    inclusion_prob: pi,
                    domain: pop.domains()[k],
                    group: c,
                });
            }
        }
        DesignSample::new(
            units,
            pop.num_domains(),
            JointSpec::SingleStageCluster {
                sampled: self.sampled,
                total,
            },
        )
        .expect("frame-constructed sample is structurally valid")
    }
}

/// One-shot stratified SRSWOR draw.
pub fn draw_stsi_sample<R: Rng>(
    pop: &Population,
    allocation: &[usize],
    rng: &mut R,
) -> Result<DesignSample, SimError> {
    Ok(StratifiedFrame::new(pop, allocation)?.draw(pop, rng))
}

/// One-shot cluster-sample draw.
pub fn draw_cluster_sample<R: Rng>(
    pop: &Population,
    sampled: usize,
    rng: &mut R,
) -> Result<DesignSample, SimError> {
    Ok(ClusterFrame::new(pop, sampled)?.draw(pop, rng))
}
