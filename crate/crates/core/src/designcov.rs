//! Design-based covariance machinery: the unbiased Horvitz-Thompson
//! covariance estimator, linearization-based approximate covariances of
//! pooled Hajek means, their design-consistent estimators, and the pooled
//! covariance matrices used by the cone information criterion.
//!
//! The double sums are evaluated by grouping over the design's group labels.
//! For the stratified and cluster closed forms the pair coefficient
//! Delta_kl / pi_kl is constant within and across groups, so a full D x D
//! matrix costs O(n + G D^2) instead of O(n^2); [`ac_hat_pairwise`] keeps the
//! literal double sum as the reference route. Estimated covariance matrices
//! are never forced positive semidefinite — singularity is detected by the
//! tests that consume them.

use crate::estimators::{DomainTotals, EstimatorError};
use crate::isotonic::{projection_matrix, PoolingPartition};
use crate::survey::{DesignSample, JointSpec, Population};
use crate::util::KahanSum;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CovError {
    #[error("domain {0} has no sampled units")]
    EmptyDomain(usize),
    #[error("block {0}..={1} has no sampled units")]
    EmptyBlock(usize, usize),
    #[error("invalid block {0}..={1}")]
    InvalidBlock(usize, usize),
    #[error("expected {expected} population domain sizes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no closed-form joint inclusion probabilities for this design")]
    UnknownDesignClosedForm,
    #[error("design metadata inconsistent with the population: {0}")]
    InconsistentDesign(String),
}

impl From<EstimatorError> for CovError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::EmptyDomain(d) => CovError::EmptyDomain(d),
            EstimatorError::EmptyBlock(i, j) => CovError::EmptyBlock(i, j),
            EstimatorError::InvalidBlock(i, j) => CovError::InvalidBlock(i, j),
            EstimatorError::DimensionMismatch { expected, got } => {
                CovError::DimensionMismatch { expected, got }
            }
            EstimatorError::MissingPopulationSizes => CovError::DimensionMismatch {
                expected: 0,
                got: 0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovBasis {
    Domains,
    BlocksByObservedPooling,
}

/// A D x D covariance matrix tagged with the basis its rows refer to.
/// Domain-basis matrices are symmetric; the pooled theta-by-y matrix is not
/// symmetric in general.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub entries: DMatrix<f64>,
    pub basis: CovBasis,
}

impl CovMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let m = &self.entries;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Per-(group, domain) sufficient statistics for the grouped double sums:
/// powers of 1/pi and y weighted by 1/pi, 1/pi^2, and (1-pi)/pi^2.
struct GroupDomainStats {
    num_groups: usize,
    num_domains: usize,
    s0: Vec<f64>,
    s1: Vec<f64>,
    t0: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    counts: Vec<usize>,
}

impl GroupDomainStats {
    fn from_sample(sample: &DesignSample) -> Self {
        let d = sample.num_domains();
        let g = sample
            .units()
            .iter()
            .map(|u| u.group)
            .max()
            .map_or(1, |m| m + 1);
        let mut stats = Self {
            num_groups: g,
            num_domains: d,
            s0: vec![0.0; g * d],
            s1: vec![0.0; g * d],
            t0: vec![0.0; g * d],
            t1: vec![0.0; g * d],
            t2: vec![0.0; g * d],
            u0: vec![0.0; g * d],
            u1: vec![0.0; g * d],
            u2: vec![0.0; g * d],
            counts: vec![0; d],
        };
        for u in sample.units() {
            let idx = u.group * d + u.domain;
            let w = 1.0 / u.inclusion_prob;
            let w2 = w * w;
            let v = (1.0 - u.inclusion_prob) * w2;
            stats.s0[idx] += w;
            stats.s1[idx] += w * u.value;
            stats.t0[idx] += w2;
            stats.t1[idx] += w2 * u.value;
            stats.t2[idx] += w2 * u.value * u.value;
            stats.u0[idx] += v;
            stats.u1[idx] += v * u.value;
            stats.u2[idx] += v * u.value * u.value;
            stats.counts[u.domain] += 1;
        }
        stats
    }

    fn at(&self, v: &[f64], group: usize, domain: usize) -> f64 {
        v[group * self.num_domains + domain]
    }

    /// Residual total over group `g` within domains `block`:
    /// sum of (y_k - m)/pi_k.
    fn residual_total(&self, g: usize, block: (usize, usize), m: f64) -> f64 {
        let mut acc = 0.0;
        for d in block.0..=block.1 {
            acc += self.at(&self.s1, g, d) - m * self.at(&self.s0, g, d);
        }
        acc
    }

    /// sum over group g, domains in `block`, of (y-m1)(y-m2)/pi^2.
    fn cross_product(&self, g: usize, block: (usize, usize), m1: f64, m2: f64) -> f64 {
        let mut acc = 0.0;
        for d in block.0..=block.1 {
            acc += self.at(&self.t2, g, d) - (m1 + m2) * self.at(&self.t1, g, d)
                + m1 * m2 * self.at(&self.t0, g, d);
        }
        acc
    }

    /// sum over group g, domains in `block`, of (1-pi)(y-m1)(y-m2)/pi^2.
    fn diag_product(&self, g: usize, block: (usize, usize), m1: f64, m2: f64) -> f64 {
        let mut acc = 0.0;
        for d in block.0..=block.1 {
            acc += self.at(&self.u2, g, d) - (m1 + m2) * self.at(&self.u1, g, d)
                + m1 * m2 * self.at(&self.u0, g, d);
        }
        acc
    }
}

fn block_intersection(b1: (usize, usize), b2: (usize, usize)) -> Option<(usize, usize)> {
    let lo = b1.0.max(b2.0);
    let hi = b1.1.min(b2.1);
    (lo <= hi).then_some((lo, hi))
}

/// Grouped evaluation of the Eq.-5-style double sum
/// sum_{k in B1} sum_{l in B2} (Delta_kl / pi_kl) (y_k - m1)/pi_k (y_l - m2)/pi_l
/// (unnormalized). The diagonal contribution is exact for unit-varying pi.
fn grouped_double_sum(
    stats: &GroupDomainStats,
    joint: &JointSpec,
    b1: (usize, usize),
    b2: (usize, usize),
    m1: f64,
    m2: f64,
) -> f64 {
    let overlap = block_intersection(b1, b2);
    let mut total = KahanSum::new();
    // diagonal k = l: Delta_kk / pi_kk = 1 - pi_k, any design
    if let Some(ov) = overlap {
        let mut diag = KahanSum::new();
        for g in 0..stats.num_groups {
            diag.add(stats.diag_product(g, ov, m1, m2));
        }
        total.add(diag.value());
    }
    match joint {
        JointSpec::StratifiedSrswor { strata } => {
            for (g, s) in strata.iter().enumerate() {
                if g >= stats.num_groups {
                    break;
                }
                if s.sample < 2 {
                    continue; // no same-stratum pairs realized
                }
                let (n, nn) = (s.sample as f64, s.population as f64);
                let pi = n / nn;
                let pi_same = n * (n - 1.0) / (nn * (nn - 1.0));
                let c_same = (pi_same - pi * pi) / pi_same;
                let a = stats.residual_total(g, b1, m1);
                let b = stats.residual_total(g, b2, m2);
                let x = overlap.map_or(0.0, |ov| stats.cross_product(g, ov, m1, m2));
                total.add(c_same * (a * b - x));
            }
        }
        JointSpec::SingleStageCluster { sampled, total: r_total } => {
            let (r, t) = (*sampled as f64, *r_total as f64);
            let pi = r / t;
            let pi_cross = r * (r - 1.0) / (t * (t - 1.0));
            let c_same = 1.0 - pi; // Delta/pi for same-cluster pairs
            let c_cross = if pi_cross > 0.0 {
                (pi_cross - pi * pi) / pi_cross
            } else {
                0.0
            };
            let mut a_tot = KahanSum::new();
            let mut b_tot = KahanSum::new();
            let mut gram = KahanSum::new();
            let mut x_tot = KahanSum::new();
            for g in 0..stats.num_groups {
                let a = stats.residual_total(g, b1, m1);
                let b = stats.residual_total(g, b2, m2);
                a_tot.add(a);
                b_tot.add(b);
                gram.add(a * b);
                if let Some(ov) = overlap {
                    x_tot.add(stats.cross_product(g, ov, m1, m2));
                }
            }
            total.add(c_cross * (a_tot.value() * b_tot.value() - gram.value()));
            total.add(c_same * (gram.value() - x_tot.value()));
        }
        JointSpec::IndependentApprox => {
            // off-diagonal Delta = 0: diagonal term already added
        }
    }
    total.value()
}

/// The unbiased covariance estimator of the Horvitz-Thompson domain means:
/// Sigma_hat[i][j] = 1/(N_i N_j) sum over sampled pairs of
/// Delta_kl / pi_kl * (y_k / pi_k)(y_l / pi_l).
pub fn sigma_hat(
    sample: &DesignSample,
    pop_domain_sizes: &[usize],
) -> Result<CovMatrix, CovError> {
    let totals = DomainTotals::from_sample(sample);
    if let Some(d) = totals.counts.iter().position(|&n| n == 0) {
        return Err(CovError::EmptyDomain(d));
    }
    sigma_hat_allowing_empty(sample, pop_domain_sizes)
}

/// [`sigma_hat`] without the empty-domain guard: an unsampled domain simply
/// contributes zero rows, which is the convention the enumeration oracles
/// rely on.
pub fn sigma_hat_allowing_empty(
    sample: &DesignSample,
    pop_domain_sizes: &[usize],
) -> Result<CovMatrix, CovError> {
    let d = sample.num_domains();
    if pop_domain_sizes.len() != d {
        return Err(CovError::DimensionMismatch {
            expected: d,
            got: pop_domain_sizes.len(),
        });
    }
    let stats = GroupDomainStats::from_sample(sample);
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let raw = grouped_double_sum(&stats, sample.joint_spec(), (i, i), (j, j), 0.0, 0.0);
            let val = raw / (pop_domain_sizes[i] as f64 * pop_domain_sizes[j] as f64);
            m[(i, j)] = val;
            m[(j, i)] = val;
        }
    }
    Ok(CovMatrix {
        entries: m,
        basis: CovBasis::Domains,
    })
}

fn hajek_block_stats(
    stats: &GroupDomainStats,
    block: (usize, usize),
) -> Result<(f64, f64), CovError> {
    let (i, j) = block;
    if i > j || j >= stats.num_domains {
        return Err(CovError::InvalidBlock(i, j));
    }
    if stats.counts[i..=j].iter().all(|&c| c == 0) {
        return Err(CovError::EmptyBlock(i, j));
    }
    let mut size = 0.0;
    let mut total = 0.0;
    for g in 0..stats.num_groups {
        for d in i..=j {
            size += stats.at(&stats.s0, g, d);
            total += stats.at(&stats.s1, g, d);
        }
    }
    Ok((total / size, size))
}

/// Design-consistent estimator of the approximate covariance of the pooled
/// Hajek means over `block1` and `block2` (Eq.-5 form, grouped evaluation).
pub fn ac_hat(
    sample: &DesignSample,
    block1: (usize, usize),
    block2: (usize, usize),
) -> Result<f64, CovError> {
    // canonical argument order keeps ac_hat(b1, b2) == ac_hat(b2, b1) exact
    let (b1, b2) = if block1 <= block2 {
        (block1, block2)
    } else {
        (block2, block1)
    };
    let stats = GroupDomainStats::from_sample(sample);
    let (m1, n1) = hajek_block_stats(&stats, b1)?;
    let (m2, n2) = hajek_block_stats(&stats, b2)?;
    Ok(grouped_double_sum(&stats, sample.joint_spec(), b1, b2, m1, m2) / (n1 * n2))
}

/// Literal pairwise evaluation of Eq. 5 through the sample's joint-probability
/// provider. O(n^2); the reference route for [`ac_hat`].
pub fn ac_hat_pairwise(
    sample: &DesignSample,
    block1: (usize, usize),
    block2: (usize, usize),
) -> Result<f64, CovError> {
    let (b1, b2) = if block1 <= block2 {
        (block1, block2)
    } else {
        (block2, block1)
    };
    let stats = GroupDomainStats::from_sample(sample);
    let (m1, n1) = hajek_block_stats(&stats, b1)?;
    let (m2, n2) = hajek_block_stats(&stats, b2)?;
    let in_block = |d: usize, b: (usize, usize)| d >= b.0 && d <= b.1;
    let mut acc = KahanSum::new();
    for (k, uk) in sample.units().iter().enumerate() {
        if !in_block(uk.domain, b1) {
            continue;
        }
        let ak = (uk.value - m1) / uk.inclusion_prob;
        for (l, ul) in sample.units().iter().enumerate() {
            if !in_block(ul.domain, b2) {
                continue;
            }
            let pi_kl = sample.joint_probability(k, l);
            let delta = pi_kl - uk.inclusion_prob * ul.inclusion_prob;
            if delta == 0.0 {
                continue;
            }
            let bl = (ul.value - m2) / ul.inclusion_prob;
            acc.add(delta / pi_kl * ak * bl);
        }
    }
    Ok(acc.value() / (n1 * n2))
}

/// Both covariance matrices needed by the selection criterion under the
/// observed pooling: `cov_y_y[i][j]` estimates cov of the Hajek domain means,
/// and `cov_theta_y = P_hat * cov_y_y` estimates cov(theta_tilde, y_tilde)
/// through the observed pooling's weighted projection.
#[derive(Debug, Clone)]
pub struct PooledCovariances {
    pub cov_theta_y: CovMatrix,
    pub cov_y_y: CovMatrix,
    /// Domains sampled with a single unit: their Eq.-5 variance contribution
    /// is identically zero and downstream reports flag them.
    pub single_unit_domains: Vec<usize>,
}

pub fn cov_hat_pooled(
    sample: &DesignSample,
    partition: &PoolingPartition,
) -> Result<PooledCovariances, CovError> {
    let d = sample.num_domains();
    let stats = GroupDomainStats::from_sample(sample);
    if let Some(dom) = stats.counts.iter().position(|&c| c == 0) {
        return Err(CovError::EmptyDomain(dom));
    }
    let mut means = vec![0.0; d];
    let mut sizes = vec![0.0; d];
    for dom in 0..d {
        let (m, n) = hajek_block_stats(&stats, (dom, dom))?;
        means[dom] = m;
        sizes[dom] = n;
    }
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let raw = grouped_double_sum(
                &stats,
                sample.joint_spec(),
                (i, i),
                (j, j),
                means[i],
                means[j],
            );
            let val = raw / (sizes[i] * sizes[j]);
            cov[(i, j)] = val;
            cov[(j, i)] = val;
        }
    }
    let p = projection_matrix(partition, &sizes);
    let cov_theta_y = &p * &cov;
    Ok(PooledCovariances {
        cov_theta_y: CovMatrix {
            entries: cov_theta_y,
            basis: CovBasis::BlocksByObservedPooling,
        },
        cov_y_y: CovMatrix {
            entries: cov,
            basis: CovBasis::Domains,
        },
        single_unit_domains: stats
            .counts
            .iter()
            .enumerate()
            .filter_map(|(dom, &c)| (c == 1).then_some(dom))
            .collect(),
    })
}

/// The linearization-based approximate covariance (Eq.-4 form) of the pooled
/// Hajek means over `block1` and `block2`, computed from the full population
/// under a design with closed-form inclusion probabilities. Oracle and
/// simulation use only.
pub fn ac_population(
    pop: &Population,
    design: &JointSpec,
    block1: (usize, usize),
    block2: (usize, usize),
) -> Result<f64, CovError> {
    let d = pop.num_domains();
    for &(i, j) in &[block1, block2] {
        if i > j || j >= d {
            return Err(CovError::InvalidBlock(i, j));
        }
    }
    let first_order: Box<dyn Fn(usize) -> f64> = match design {
        JointSpec::StratifiedSrswor { strata } => {
            let num_groups = pop.num_groups();
            if strata.len() < num_groups {
                return Err(CovError::InconsistentDesign(format!(
                    "{} strata specified for {} population groups",
                    strata.len(),
                    num_groups
                )));
            }
            let strata = strata.clone();
            let groups = pop.groups().to_vec();
            Box::new(move |k| {
                let s = strata[groups[k]];
                s.sample as f64 / s.population as f64
            })
        }
        JointSpec::SingleStageCluster { sampled, total } => {
            if *total != pop.num_groups() {
                return Err(CovError::InconsistentDesign(format!(
                    "design declares {} clusters, population has {}",
                    total,
                    pop.num_groups()
                )));
            }
            let pi = *sampled as f64 / *total as f64;
            Box::new(move |_| pi)
        }
        JointSpec::IndependentApprox => return Err(CovError::UnknownDesignClosedForm),
    };

    let m1 = pop.pooled_mean(block1);
    let m2 = pop.pooled_mean(block2);
    let n1: usize = pop.domain_sizes()[block1.0..=block1.1].iter().sum();
    let n2: usize = pop.domain_sizes()[block2.0..=block2.1].iter().sum();
    let num_groups = pop.num_groups();
    let in_block = |dm: usize, b: (usize, usize)| dm >= b.0 && dm <= b.1;

    // per-group residual totals and the diagonal/overlap products
    let mut a = vec![0.0; num_groups];
    let mut b = vec![0.0; num_groups];
    let mut x = vec![0.0; num_groups]; // sum of resid1*resid2/(pi^2) over overlap
    let mut diag = KahanSum::new(); // sum of (1-pi)/pi * resid1*resid2 over overlap
    for (k, (&y, &dm)) in pop.values().iter().zip(pop.domains()).enumerate() {
        let g = pop.groups()[k];
        let pi = first_order(k);
        let r1 = (y - m1) / pi;
        let r2 = (y - m2) / pi;
        if in_block(dm, block1) {
            a[g] += r1;
        }
        if in_block(dm, block2) {
            b[g] += r2;
        }
        if in_block(dm, block1) && in_block(dm, block2) {
            x[g] += r1 * r2;
            diag.add(pi * (1.0 - pi) * r1 * r2);
        }
    }

    let mut total = KahanSum::new();
    total.add(diag.value());
    match design {
        JointSpec::StratifiedSrswor { strata } => {
            for g in 0..num_groups {
                let s = strata[g];
                let (n, nn) = (s.sample as f64, s.population as f64);
                let pi = n / nn;
                let delta_same = if nn > 1.0 {
                    n * (n - 1.0) / (nn * (nn - 1.0)) - pi * pi
                } else {
                    0.0
                };
                total.add(delta_same * (a[g] * b[g] - x[g]));
            }
        }
        JointSpec::SingleStageCluster { sampled, total: r_total } => {
            let (r, t) = (*sampled as f64, *r_total as f64);
            let pi = r / t;
            let delta_same = pi * (1.0 - pi);
            let delta_cross = r * (r - 1.0) / (t * (t - 1.0)) - pi * pi;
            let a_tot: f64 = a.iter().sum();
            let b_tot: f64 = b.iter().sum();
            let gram: f64 = a.iter().zip(&b).map(|(&ag, &bg)| ag * bg).sum();
            let x_tot: f64 = x.iter().sum();
            total.add(delta_cross * (a_tot * b_tot - gram));
            total.add(delta_same * (gram - x_tot));
        }
        JointSpec::IndependentApprox => unreachable!(),
    }
    Ok(total.value() / (n1 as f64 * n2 as f64))
}
