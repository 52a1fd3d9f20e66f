//! Estimator selection: the cone information criterion for survey data, the
//! adaptive estimator, order-restriction tests (Wald and conditional), and
//! predictive squared error oracles.

use crate::designcov::CovMatrix;
use crate::estimators::{ht_domain_means_allowing_empty, DomainEstimate};
use crate::isotonic::{weighted_pava, PoolingPartition};
use crate::survey::{enumerate_cluster, enumerate_stsi, JointSpec, Population, WeightMatrixSpec};
use crate::util::{kahan_sum, KahanSum};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Condition-number estimate above which an estimated covariance matrix is
/// treated as singular and the tests report Unavailable.
const SINGULARITY_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("penalty constant must be strictly positive")]
    NonpositivePenalty,
    #[error("exact enumeration needs {required} samples, over the budget of {budget}")]
    BudgetRequired { required: u128, budget: u128 },
    #[error("design has no enumerable closed form")]
    UnsupportedDesign,
    #[error(transparent)]
    Design(#[from] crate::survey::DesignError),
    #[error(transparent)]
    Isotonic(#[from] crate::isotonic::IsotonicError),
    #[error(transparent)]
    Estimator(#[from] crate::estimators::EstimatorError),
}

/// Weighted sum of squared errors between the unconstrained and constrained
/// fits: sum_d W_d (y_d - theta_d)^2.
pub fn sse(y: &[f64], theta: &[f64], w: &WeightMatrixSpec) -> f64 {
    debug_assert_eq!(y.len(), theta.len());
    debug_assert_eq!(y.len(), w.weights().len());
    kahan_sum(
        y.iter()
            .zip(theta)
            .zip(w.weights())
            .map(|((&yd, &td), &wd)| wd * (yd - td) * (yd - td)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChosenEstimator {
    Constrained,
    Unconstrained,
}

/// Both criterion values and the decision. The constrained criterion is
/// SSE + C * tr(W cov(theta, y)); the unconstrained one is
/// C * tr(W cov(y, y)). Ties go to the constrained estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CicReport {
    pub sse_term: f64,
    pub trace_term: f64,
    pub trace_unconstrained: f64,
    pub cic_constrained: f64,
    pub cic_unconstrained: f64,
    pub chosen: ChosenEstimator,
    pub penalty_constant: f64,
}

pub fn cic(
    estimate: &DomainEstimate,
    theta: &[f64],
    w: &WeightMatrixSpec,
    cov_theta_y: &CovMatrix,
    cov_y_y: &CovMatrix,
    penalty_constant: f64,
) -> Result<CicReport, SelectionError> {
    let d = estimate.means.len();
    if theta.len() != d || w.weights().len() != d {
        return Err(SelectionError::DimensionMismatch(format!(
            "y has {d} domains, theta {}, weights {}",
            theta.len(),
            w.weights().len()
        )));
    }
    if cov_theta_y.dim() != d || cov_y_y.dim() != d {
        return Err(SelectionError::DimensionMismatch(format!(
            "covariance dimensions {} and {} for {d} domains",
            cov_theta_y.dim(),
            cov_y_y.dim()
        )));
    }
    if !(penalty_constant > 0.0) {
        return Err(SelectionError::NonpositivePenalty);
    }
    let sse_term = sse(&estimate.means, theta, w);
    let trace_term = kahan_sum(
        w.weights()
            .iter()
            .enumerate()
            .map(|(i, &wd)| wd * cov_theta_y.entries[(i, i)]),
    );
    let trace_unconstrained = kahan_sum(
        w.weights()
            .iter()
            .enumerate()
            .map(|(i, &wd)| wd * cov_y_y.entries[(i, i)]),
    );
    let cic_constrained = sse_term + penalty_constant * trace_term;
    let cic_unconstrained = penalty_constant * trace_unconstrained;
    let chosen = if cic_unconstrained < cic_constrained {
        ChosenEstimator::Unconstrained
    } else {
        ChosenEstimator::Constrained
    };
    Ok(CicReport {
        sse_term,
        trace_term,
        trace_unconstrained,
        cic_constrained,
        cic_unconstrained,
        chosen,
        penalty_constant,
    })
}

/// The adaptive estimator: the unconstrained vector when the criterion picks
/// it, else the constrained one.
pub fn adaptive_estimate(report: &CicReport, y: &[f64], theta: &[f64]) -> Vec<f64> {
    match report.chosen {
        ChosenEstimator::Unconstrained => y.to_vec(),
        ChosenEstimator::Constrained => theta.to_vec(),
    }
}

/// Order-restriction test outcome. `p_value == None` means the test is
/// Unavailable because the estimated covariance matrix is singular.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub q: f64,
    pub df: usize,
    pub blocks: usize,
    pub p_value: Option<f64>,
    pub p0: Option<f64>,
}

/// Cholesky factorization with the singularity rule: factorization failure
/// or a diagonal condition estimate above 1e12 means Unavailable.
fn spd_factor(cov: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(cov.clone())?;
    let diag = chol.l_dirty();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..cov.nrows() {
        let v = diag[(i, i)];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo > 0.0) || (hi / lo) * (hi / lo) > SINGULARITY_CONDITION_LIMIT {
        return None;
    }
    Some(chol)
}

fn quadratic_form(chol: &Cholesky<f64, Dyn>, resid: &DVector<f64>) -> f64 {
    let x = chol.solve(resid);
    resid.dot(&x).max(0.0)
}

/// Naive Wald test of the monotone null against the unrestricted alternative,
/// using the sample-observed pooling: Q = (y - theta)' cov^{-1} (y - theta)
/// compared to chi-square(D - k).
pub fn wald_test(
    y: &[f64],
    theta: &[f64],
    partition: &PoolingPartition,
    cov_y_y: &CovMatrix,
) -> TestResult {
    let d = y.len();
    let k = partition.num_blocks();
    if k == d {
        // the unconstrained fit already satisfies the constraint
        return TestResult {
            q: 0.0,
            df: 0,
            blocks: k,
            p_value: Some(1.0),
            p0: None,
        };
    }
    let Some(chol) = spd_factor(&cov_y_y.entries) else {
        return TestResult {
            q: f64::NAN,
            df: d - k,
            blocks: k,
            p_value: None,
            p0: None,
        };
    };
    let resid = DVector::from_iterator(d, y.iter().zip(theta).map(|(&a, &b)| a - b));
    let q = quadratic_form(&chol, &resid);
    let df = d - k;
    TestResult {
        q,
        df,
        blocks: k,
        p_value: Some(if q == 0.0 { 1.0 } else { chi_sq_sf(q, df) }),
        p0: None,
    }
}

/// The conditional order-restriction test: Q as in the Wald test, compared
/// to a chi-square(D - k) carrying a point mass p0 at zero, where p0 is the
/// probability of an all-distinct pooling under the equal-means hypothesis.
/// p0 is estimated by seeded Monte Carlo from mean-zero normal draws with
/// the estimated design covariance; the p-value is the mixture tail
/// (1 - p0) * SF(Q) for Q > 0 and 1 at Q = 0.
pub fn conditional_test(
    y: &[f64],
    theta: &[f64],
    partition: &PoolingPartition,
    cov_y_y: &CovMatrix,
    weights: &[f64],
    mc_draws: usize,
    seed: u64,
) -> TestResult {
    let d = y.len();
    let k = partition.num_blocks();
    if k == d {
        return TestResult {
            q: 0.0,
            df: 0,
            blocks: k,
            p_value: Some(1.0),
            p0: None,
        };
    }
    let Some(chol) = spd_factor(&cov_y_y.entries) else {
        return TestResult {
            q: f64::NAN,
            df: d - k,
            blocks: k,
            p_value: None,
            p0: None,
        };
    };
    let resid = DVector::from_iterator(d, y.iter().zip(theta).map(|(&a, &b)| a - b));
    let q = quadratic_form(&chol, &resid);
    let df = d - k;

    let draws = mc_draws.max(1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let l = chol.l();
    let mut distinct = 0usize;
    let mut z = vec![0.0f64; d];
    for _ in 0..draws {
        let u = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let v = &l * u;
        z.copy_from_slice(v.as_slice());
        let (_, part) = weighted_pava(&z, weights).expect("positive weights");
        if part.num_blocks() == d {
            distinct += 1;
        }
    }
    let p0 = distinct as f64 / draws as f64;
    let p_value = if q == 0.0 {
        1.0
    } else {
        (1.0 - p0) * chi_sq_sf(q, df)
    };
    TestResult {
        q,
        df,
        blocks: k,
        p_value: Some(p_value),
        p0: Some(p0),
    }
}

/// Exact predictive squared error of the constrained (or unconstrained)
/// Horvitz-Thompson estimator under full enumeration of the design, together
/// with the pieces of the decomposition
/// PSE = E[SSE] + 2 tr(W_U cov(theta_hat, y_hat)).
///
/// Independence of the two samples lets the pair expectation factorize, so a
/// single pass over the sample space is exact; domains a sample misses
/// contribute a zero Horvitz-Thompson total.
#[derive(Debug, Clone, PartialEq)]
pub struct PseReport {
    pub pse: f64,
    pub expected_sse: f64,
    pub trace_term: f64,
    pub samples: usize,
}

pub fn pse_exact(
    pop: &Population,
    design: &JointSpec,
    constrained: bool,
    budget: u128,
) -> Result<PseReport, SelectionError> {
    let required = enumeration_size(pop, design)?;
    if required > budget {
        return Err(SelectionError::BudgetRequired { required, budget });
    }
    let samples = match design {
        JointSpec::StratifiedSrswor { strata } => {
            let mut alloc = vec![0usize; strata.len()];
            for (g, s) in strata.iter().enumerate() {
                alloc[g] = s.sample;
            }
            enumerate_stsi(pop, &alloc)?
        }
        JointSpec::SingleStageCluster { sampled, .. } => enumerate_cluster(pop, *sampled)?,
        JointSpec::IndependentApprox => return Err(SelectionError::UnsupportedDesign),
    };

    let d = pop.num_domains();
    let sizes = pop.domain_sizes();
    let w = WeightMatrixSpec::from_population_sizes(sizes)?;
    let wd = w.weights();

    let mut e_y = vec![KahanSum::new(); d];
    let mut e_theta = vec![KahanSum::new(); d];
    let mut e_y_quad = KahanSum::new(); // E[y' W y]
    let mut e_theta_quad = KahanSum::new(); // E[theta' W theta]
    let mut e_cross_diag = vec![KahanSum::new(); d]; // E[theta_d * y_d]
    let mut e_sse = KahanSum::new();
    for (s, p) in &samples {
        let ht = ht_domain_means_allowing_empty(s, sizes)?;
        let theta = if constrained {
            let weights: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
            weighted_pava(&ht.means, &weights)?.0
        } else {
            ht.means.clone()
        };
        let mut yq = 0.0;
        let mut tq = 0.0;
        for i in 0..d {
            e_y[i].add(p * ht.means[i]);
            e_theta[i].add(p * theta[i]);
            e_cross_diag[i].add(p * theta[i] * ht.means[i]);
            yq += wd[i] * ht.means[i] * ht.means[i];
            tq += wd[i] * theta[i] * theta[i];
        }
        e_y_quad.add(p * yq);
        e_theta_quad.add(p * tq);
        e_sse.add(p * sse(&ht.means, &theta, &w));
    }

    // PSE = E[y*' W y*] - 2 E[theta]' W E[y*] + E[theta' W theta]
    let mut cross = KahanSum::new();
    let mut trace = KahanSum::new();
    for i in 0..d {
        cross.add(wd[i] * e_theta[i].value() * e_y[i].value());
        trace.add(wd[i] * (e_cross_diag[i].value() - e_theta[i].value() * e_y[i].value()));
    }
    let pse = e_y_quad.value() - 2.0 * cross.value() + e_theta_quad.value();
    Ok(PseReport {
        pse,
        expected_sse: e_sse.value(),
        trace_term: 2.0 * trace.value(),
        samples: samples.len(),
    })
}

fn enumeration_size(pop: &Population, design: &JointSpec) -> Result<u128, SelectionError> {
    fn binom(n: usize, k: usize) -> u128 {
        if k > n {
            return 0;
        }
        let k = k.min(n - k);
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        }
        acc
    }
    match design {
        JointSpec::StratifiedSrswor { strata } => {
            let mut group_sizes = vec![0usize; strata.len()];
            for &g in pop.groups() {
                if g >= group_sizes.len() {
                    return Err(SelectionError::UnsupportedDesign);
                }
                group_sizes[g] += 1;
            }
            let mut total: u128 = 1;
            for (g, s) in strata.iter().enumerate() {
                total = total.saturating_mul(binom(group_sizes[g], s.sample));
            }
            Ok(total)
        }
        JointSpec::SingleStageCluster { sampled, total } => Ok(binom(*total, *sampled)),
        JointSpec::IndependentApprox => Err(SelectionError::UnsupportedDesign),
    }
}

/// Upper-tail probability of the chi-square distribution with `df` degrees
/// of freedom, via the regularized incomplete gamma function (series for
/// small arguments, Lentz continued fraction otherwise).
pub fn chi_sq_sf(x: f64, df: usize) -> f64 {
    debug_assert!(df >= 1);
    debug_assert!(x >= 0.0);
    if x <= 0.0 {
        return 1.0;
    }
    let a = df as f64 / 2.0;
    let z = x / 2.0;
    if z < a + 1.0 {
        1.0 - lower_gamma_series(a, z)
    } else {
        upper_gamma_cf(a, z)
    }
}

/// ln Gamma via the g = 7, n = 9 Lanczos approximation; valid for z > 0 and
/// accurate to ~1e-14 relative, which the half-integer arguments here stay
/// well inside.
fn ln_gamma(z: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(z >= 0.5);
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z - 1.0 + i as f64);
    }
    let t = z + 6.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z - 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x) by series; converges fast for
/// x < a + 1.
fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by modified Lentz continued
/// fraction; converges fast for x >= a + 1.
fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designcov::CovBasis;
    use crate::survey::StratumAllocation;

    fn diag_cov(v: &[f64]) -> CovMatrix {
        let d = v.len();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = v[i];
        }
        CovMatrix {
            entries: m,
            basis: CovBasis::Domains,
        }
    }

    #[test]
    fn sse_examples() {
        let w = WeightMatrixSpec::from_estimated_sizes(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(sse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &w), 0.0);
        let got = sse(&[3.0, 1.0, 2.0], &[2.0, 2.0, 2.0], &w);
        assert!((got - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cic_tie_goes_to_constrained() {
        // monotone sample: theta = y, both criteria coincide
        let est = DomainEstimate {
            means: vec![1.0, 2.0],
            weights: vec![1.0, 1.0],
            flavor: crate::estimators::EstimatorFlavor::Hajek,
        };
        let (theta, _) = weighted_pava(&est.means, &est.weights).unwrap();
        let w = WeightMatrixSpec::from_estimated_sizes(&est.weights).unwrap();
        let cov = diag_cov(&[0.3, 0.4]);
        let report = cic(&est, &theta, &w, &cov, &cov, 2.0).unwrap();
        assert_eq!(report.cic_constrained, report.cic_unconstrained);
        assert_eq!(report.chosen, ChosenEstimator::Constrained);
        assert_eq!(report.sse_term, 0.0);
    }

    #[test]
    fn cic_two_domain_decision_flips_at_quarter() {
        // y = (2, 1), theta = (1.5, 1.5), W = (1/2, 1/2),
        // cov(y, y) = diag(v, v), cov(theta, y) all-entries v/2:
        // constrained = 0.25 + v, unconstrained = 2v; flip at v = 0.25.
        let est = DomainEstimate {
            means: vec![2.0, 1.0],
            weights: vec![1.0, 1.0],
            flavor: crate::estimators::EstimatorFlavor::Hajek,
        };
        let (theta, _) = weighted_pava(&est.means, &est.weights).unwrap();
        let w = WeightMatrixSpec::from_estimated_sizes(&est.weights).unwrap();
        for &(v, expect_unconstrained) in
            &[(0.1, true), (0.2499, true), (0.25, false), (0.4, false)]
        {
            let covyy = diag_cov(&[v, v]);
            let covty = CovMatrix {
                entries: DMatrix::from_element(2, 2, v / 2.0),
                basis: CovBasis::BlocksByObservedPooling,
            };
            let report = cic(&est, &theta, &w, &covty, &covyy, 2.0).unwrap();
            assert!((report.cic_constrained - (0.25 + v)).abs() < 1e-12);
            assert!((report.cic_unconstrained - 2.0 * v).abs() < 1e-12);
            assert_eq!(
                report.chosen == ChosenEstimator::Unconstrained,
                expect_unconstrained,
                "v = {v}"
            );
        }
    }

    #[test]
    fn adaptive_estimate_follows_decision() {
        let est = DomainEstimate {
            means: vec![2.0, 1.0],
            weights: vec![1.0, 1.0],
            flavor: crate::estimators::EstimatorFlavor::Hajek,
        };
        let (theta, _) = weighted_pava(&est.means, &est.weights).unwrap();
        let w = WeightMatrixSpec::from_estimated_sizes(&est.weights).unwrap();
        let covty = CovMatrix {
            entries: DMatrix::from_element(2, 2, 0.05),
            basis: CovBasis::BlocksByObservedPooling,
        };
        let small = cic(&est, &theta, &w, &covty, &diag_cov(&[0.1, 0.1]), 2.0).unwrap();
        assert_eq!(adaptive_estimate(&small, &est.means, &theta), est.means);
        let covty = CovMatrix {
            entries: DMatrix::from_element(2, 2, 5.0),
            basis: CovBasis::BlocksByObservedPooling,
        };
        let large = cic(&est, &theta, &w, &covty, &diag_cov(&[10.0, 10.0]), 2.0).unwrap();
        assert_eq!(adaptive_estimate(&large, &est.means, &theta), theta);
    }

    #[test]
    fn wald_no_pooling_never_rejects() {
        let (theta, partition) = weighted_pava(&[1.0, 2.0], &[1.0, 1.0]).unwrap();
        let r = wald_test(&[1.0, 2.0], &theta, &partition, &diag_cov(&[0.1, 0.1]));
        assert_eq!(r.q, 0.0);
        assert_eq!(r.p_value, Some(1.0));
        assert_eq!(r.df, 0);
    }

    #[test]
    fn wald_two_domain_example() {
        // y - theta = (0.5, -0.5), cov = diag(0.25), Q = 2, df = 1
        let (theta, partition) = weighted_pava(&[2.0, 1.0], &[1.0, 1.0]).unwrap();
        let r = wald_test(&[2.0, 1.0], &theta, &partition, &diag_cov(&[0.25, 0.25]));
        assert!((r.q - 2.0).abs() < 1e-12);
        assert_eq!(r.df, 1);
        let p = r.p_value.unwrap();
        assert!((p - 0.15729920705028513).abs() < 1e-10);
    }

    #[test]
    fn wald_singular_covariance_unavailable() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 1.0;
        m[(0, 1)] = 1.0;
        m[(1, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        let cov = CovMatrix {
            entries: m,
            basis: CovBasis::Domains,
        };
        let (theta, partition) = weighted_pava(&[2.0, 1.0], &[1.0, 1.0]).unwrap();
        let r = wald_test(&[2.0, 1.0], &theta, &partition, &cov);
        assert_eq!(r.p_value, None);
    }

    #[test]
    fn conditional_p0_half_for_two_domains() {
        let (theta, partition) = weighted_pava(&[2.0, 1.0], &[1.0, 1.0]).unwrap();
        let r = conditional_test(
            &[2.0, 1.0],
            &theta,
            &partition,
            &diag_cov(&[0.25, 0.25]),
            &[1.0, 1.0],
            20_000,
            7,
        );
        let p0 = r.p0.unwrap();
        assert!((p0 - 0.5).abs() < 0.02, "p0 = {p0}");
        let p = r.p_value.unwrap();
        let wald_p = chi_sq_sf(r.q, 1);
        assert!((p - (1.0 - p0) * wald_p).abs() < 1e-12);
    }

    #[test]
    fn conditional_monotone_sample_p_is_one() {
        let (theta, partition) = weighted_pava(&[1.0, 2.0], &[1.0, 1.0]).unwrap();
        let r = conditional_test(
            &[1.0, 2.0],
            &theta,
            &partition,
            &diag_cov(&[0.25, 0.25]),
            &[1.0, 1.0],
            1000,
            7,
        );
        assert_eq!(r.p_value, Some(1.0));
    }

    #[test]
    fn conditional_approaches_wald_for_many_domains() {
        // p0 -> 0 as D grows, so the conditional p-value approaches Wald's
        let d = 8;
        let means: Vec<f64> = (0..d).map(|i| if i == 7 { 0.0 } else { i as f64 }).collect();
        let weights = vec![1.0; d];
        let (theta, partition) = weighted_pava(&means, &weights).unwrap();
        let cov = diag_cov(&vec![0.5; d]);
        let wald = wald_test(&means, &theta, &partition, &cov);
        let cond = conditional_test(&means, &theta, &partition, &cov, &weights, 20_000, 11);
        let (pw, pc) = (wald.p_value.unwrap(), cond.p_value.unwrap());
        assert!(cond.p0.unwrap() < 0.001);
        assert!((pw - pc).abs() < 1e-3, "wald {pw} vs conditional {pc}");
    }

    #[test]
    fn pse_exact_single_domain_is_twice_variance() {
        let pop = Population::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0; 4],
            vec![0; 4],
            1,
        )
        .unwrap();
        let design = JointSpec::StratifiedSrswor {
            strata: vec![StratumAllocation {
                population: 4,
                sample: 2,
            }],
        };
        let report = pse_exact(&pop, &design, true, 1_000).unwrap();
        // enumerate variance of the HT mean directly
        let samples = enumerate_stsi(&pop, &[2]).unwrap();
        let mut m = 0.0;
        let mut m2 = 0.0;
        for (s, p) in &samples {
            let ht = ht_domain_means_allowing_empty(s, pop.domain_sizes()).unwrap();
            m += p * ht.means[0];
            m2 += p * ht.means[0] * ht.means[0];
        }
        let var = m2 - m * m;
        assert!((report.pse - 2.0 * var).abs() < 1e-12);
        assert_eq!(report.samples, 6);
    }

    #[test]
    fn pse_exact_budget_guard() {
        let pop = Population::new(
            (0..30).map(|i| i as f64).collect(),
            vec![0; 30],
            vec![0; 30],
            1,
        )
        .unwrap();
        let design = JointSpec::StratifiedSrswor {
            strata: vec![StratumAllocation {
                population: 30,
                sample: 15,
            }],
        };
        match pse_exact(&pop, &design, true, 1_000) {
            Err(SelectionError::BudgetRequired { required, .. }) => {
                assert_eq!(required, 155_117_520);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn chi_sq_sf_reference_values() {
        // references computed with mpmath at 40 digits
        let cases: &[(f64, usize, f64)] = &[
            (3.841459, 1, 0.049_999_994_653_195_77),
            (2.0, 2, (-1.0f64).exp()),
            (0.5, 1, 0.479_500_122_186_953_5),
            (1.0, 3, 0.801_251_956_901_200_8),
            (2.5, 4, 0.644_635_792_935_427_7),
            (5.0, 5, 0.41588018699550792),
            (10.0, 7, 0.18857346751345007),
            (0.1, 2, 0.951_229_424_500_714),
            (25.0, 10, 0.005_345_505_487_134_064),
            (3.0, 19, 0.999_989_209_465_657_4),
            (50.0, 19, 0.00013106116479316294),
            (1e-8, 1, 0.999_920_211_544_052_6),
        ];
        for &(x, df, expected) in cases {
            let got = chi_sq_sf(x, df);
            assert!(
                (got - expected).abs() < 1e-10,
                "sf({x}, {df}) = {got}, want {expected}"
            );
        }
        assert_eq!(chi_sq_sf(0.0, 3), 1.0);
        // far tail: relative accuracy
        let tail = chi_sq_sf(200.0, 4);
        assert!((tail / 3.757_276_735_781_044e-42 - 1.0).abs() < 1e-10);
        // the standard 0.05 quantile identity holds to quantile rounding
        assert!((chi_sq_sf(3.841459, 1) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn chi_sq_sf_matches_statrs_on_grid() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        for df in 1..=30usize {
            let dist = ChiSquared::new(df as f64).unwrap();
            for i in 1..=60 {
                let x = i as f64 * 0.9;
                let want = dist.sf(x);
                let got = chi_sq_sf(x, df);
                assert!(
                    (got - want).abs() < 1e-10,
                    "df {df}, x {x}: {got} vs {want}"
                );
            }
        }
    }
}
