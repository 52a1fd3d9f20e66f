//! The replication engine: draw samples, run the per-sample analysis chain,
//! and accumulate decisions and squared errors into one summary row.
//!
//! Replicates are independent and run in parallel under whatever rayon pool
//! is installed; determinism comes from per-replicate ChaCha streams and a
//! sequential merge in replicate order.

use crate::design::{ClusterFrame, StratifiedFrame};
use crate::scenario::{generate_population, DesignChoice, ScenarioConfig};
use crate::SimError;
use isocrit_core::estimators::ht_domain_means_allowing_empty;
use isocrit_core::pipeline::{analyze_sample, AnalysisOptions};
use isocrit_core::survey::Population;
use isocrit_core::{weighted_pava, ChosenEstimator, DesignSample, EstimatorFlavor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

/// One simulation row: selection proportions per method, design MSEs and
/// ratios, and the availability bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub reps_requested: usize,
    /// Replicates that produced estimates (no empty sampled domain).
    pub reps_used: usize,
    /// Replicates dropped because a domain went unsampled; excluded from
    /// every denominator below.
    pub failed_replicates: usize,
    /// Replicates whose estimated covariance matrix was singular, making the
    /// Wald and conditional tests Unavailable.
    pub unavailable_count: usize,
    pub prop_unconstrained_cic: f64,
    pub se_prop_cic: f64,
    pub prop_unconstrained_wald: Option<f64>,
    pub se_prop_wald: Option<f64>,
    pub prop_unconstrained_conditional: Option<f64>,
    pub se_prop_conditional: Option<f64>,
    pub mse_unconstrained: f64,
    pub mse_constrained: f64,
    pub mse_adaptive: f64,
    pub ratio_constrained: f64,
    pub ratio_adaptive: f64,
    pub se_ratio_constrained: f64,
    pub se_ratio_adaptive: f64,
}

struct ReplicateRecord {
    failed: bool,
    cic_unconstrained: bool,
    wald_reject: Option<bool>,
    conditional_reject: Option<bool>,
    sq_err_unconstrained: f64,
    sq_err_constrained: f64,
    sq_err_adaptive: f64,
}

enum Frame {
    Stratified(StratifiedFrame),
    Cluster(ClusterFrame),
}

impl Frame {
    fn draw(&self, pop: &Population, rng: &mut ChaCha12Rng) -> DesignSample {
        match self {
            Frame::Stratified(f) => f.draw(pop, rng),
            Frame::Cluster(f) => f.draw(pop, rng),
        }
    }
}

const TEST_LEVEL: f64 = 0.05;

/// Mean weighted squared deviation of per-replicate estimates from the fixed
/// population domain means.
pub fn mse_accumulate(estimates: &[Vec<f64>], truth: &[f64], weights: &[f64]) -> f64 {
    let mut acc = 0.0;
    for est in estimates {
        acc += weighted_sq_err(est, truth, weights);
    }
    acc / estimates.len() as f64
}

fn weighted_sq_err(est: &[f64], truth: &[f64], weights: &[f64]) -> f64 {
    est.iter()
        .zip(truth)
        .zip(weights)
        .map(|((&e, &t), &w)| w * (e - t) * (e - t))
        .sum()
}

/// Run the configured number of replicates and summarize. Deterministic for
/// a fixed `(config, seed)` regardless of thread count.
pub fn run_replications(config: &ScenarioConfig) -> Result<SimulationSummary, SimError> {
    config.validate()?;
    let pop = generate_population(config, config.seed)?;
    let frame = match &config.design {
        DesignChoice::StratifiedSrswor { allocation } => {
            Frame::Stratified(StratifiedFrame::new(&pop, allocation)?)
        }
        DesignChoice::Cluster { sampled, .. } => Frame::Cluster(ClusterFrame::new(&pop, *sampled)?),
    };
    let truth = pop.domain_means();
    let n = pop.len() as f64;
    let w_u: Vec<f64> = pop
        .domain_sizes()
        .iter()
        .map(|&nd| nd as f64 / n)
        .collect();
    let flavor: EstimatorFlavor = config.flavor.into();
    let base_options = AnalysisOptions {
        flavor,
        penalty_constant: config.penalty_constant,
        conditional_draws: config.conditional_draws,
        seed: 0,
        pop_domain_sizes: matches!(flavor, EstimatorFlavor::HorvitzThompson)
            .then(|| pop.domain_sizes().to_vec()),
    };

    let records: Vec<ReplicateRecord> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
            rng.set_stream(rep as u64);
            let sample = frame.draw(&pop, &mut rng);
            let options = AnalysisOptions {
                seed: rng.gen::<u64>(),
                ..base_options.clone()
            };
            match analyze_sample(&sample, &options) {
                Ok(analysis) => {
                    let unc = analysis.cic.chosen == ChosenEstimator::Unconstrained;
                    ReplicateRecord {
                        failed: false,
                        cic_unconstrained: unc,
                        wald_reject: analysis.wald.p_value.map(|p| p < TEST_LEVEL),
                        conditional_reject: analysis
                            .conditional
                            .as_ref()
                            .and_then(|t| t.p_value.map(|p| p < TEST_LEVEL)),
                        sq_err_unconstrained: weighted_sq_err(
                            &analysis.estimate.means,
                            &truth,
                            &w_u,
                        ),
                        sq_err_constrained: weighted_sq_err(&analysis.theta, &truth, &w_u),
                        sq_err_adaptive: weighted_sq_err(&analysis.adaptive, &truth, &w_u),
                    }
                }
                Err(_) => ReplicateRecord {
                    failed: true,
                    cic_unconstrained: false,
                    wald_reject: None,
                    conditional_reject: None,
                    sq_err_unconstrained: 0.0,
                    sq_err_constrained: 0.0,
                    sq_err_adaptive: 0.0,
                },
            }
        })
        .collect();

    summarize(config, &records)
}

fn summarize(
    config: &ScenarioConfig,
    records: &[ReplicateRecord],
) -> Result<SimulationSummary, SimError> {
    let mut failed = 0usize;
    let mut n_cic = 0usize;
    let mut wald_avail = 0usize;
    let mut wald_reject = 0usize;
    let mut cond_avail = 0usize;
    let mut cond_reject = 0usize;
    let mut unavailable = 0usize;
    let mut sums = [0.0f64; 3]; // unconstrained, constrained, adaptive
    let mut sq = [0.0f64; 3];
    let mut cross_cu = 0.0f64; // constrained * unconstrained
    let mut cross_au = 0.0f64; // adaptive * unconstrained

    for r in records {
        if r.failed {
            failed += 1;
            continue;
        }
        n_cic += r.cic_unconstrained as usize;
        match r.wald_reject {
            Some(reject) => {
                wald_avail += 1;
                wald_reject += reject as usize;
            }
            None => unavailable += 1,
        }
        if let Some(reject) = r.conditional_reject {
            cond_avail += 1;
            cond_reject += reject as usize;
        }
        let (u, c, a) = (
            r.sq_err_unconstrained,
            r.sq_err_constrained,
            r.sq_err_adaptive,
        );
        sums[0] += u;
        sums[1] += c;
        sums[2] += a;
        sq[0] += u * u;
        sq[1] += c * c;
        sq[2] += a * a;
        cross_cu += c * u;
        cross_au += a * u;
    }
    let used = records.len() - failed;
    if used == 0 {
        return Err(SimError::InvalidScenario(
            "every replicate failed estimation".into(),
        ));
    }
    let usedf = used as f64;
    let mse = [sums[0] / usedf, sums[1] / usedf, sums[2] / usedf];

    // delta-method standard error for a ratio of replicate means
    let ratio_se = |num_idx: usize, cross: f64| -> f64 {
        let (a, b) = (mse[num_idx], mse[0]);
        let var_a = sq[num_idx] / usedf - a * a;
        let var_b = sq[0] / usedf - b * b;
        let cov = cross / usedf - a * b;
        let var_ratio =
            (var_a / (b * b) + a * a * var_b / (b * b * b * b) - 2.0 * a * cov / (b * b * b))
                / usedf;
        var_ratio.max(0.0).sqrt()
    };

    let prop_se = |count: usize, denom: usize| {
        let p = count as f64 / denom as f64;
        (p * (1.0 - p) / denom as f64).sqrt()
    };

    let prop_cic = n_cic as f64 / usedf;
    Ok(SimulationSummary {
        reps_requested: config.replications,
        reps_used: used,
        failed_replicates: failed,
        unavailable_count: unavailable,
        prop_unconstrained_cic: prop_cic,
        se_prop_cic: prop_se(n_cic, used),
        prop_unconstrained_wald: (wald_avail > 0).then(|| wald_reject as f64 / wald_avail as f64),
        se_prop_wald: (wald_avail > 0).then(|| prop_se(wald_reject, wald_avail)),
        prop_unconstrained_conditional: (cond_avail > 0)
            .then(|| cond_reject as f64 / cond_avail as f64),
        se_prop_conditional: (cond_avail > 0).then(|| prop_se(cond_reject, cond_avail)),
        mse_unconstrained: mse[0],
        mse_constrained: mse[1],
        mse_adaptive: mse[2],
        ratio_constrained: mse[1] / mse[0],
        ratio_adaptive: mse[2] / mse[0],
        se_ratio_constrained: ratio_se(1, cross_cu),
        se_ratio_adaptive: ratio_se(2, cross_au),
    })
}

/// Monte Carlo predictive squared error of the constrained (or
/// unconstrained) Horvitz-Thompson estimator: each replicate draws an
/// independent sample pair. Returns the estimate and its MC standard error.
pub fn pse_monte_carlo(
    pop: &Population,
    design: &DesignChoice,
    constrained: bool,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64), SimError> {
    let frame = match design {
        DesignChoice::StratifiedSrswor { allocation } => {
            Frame::Stratified(StratifiedFrame::new(pop, allocation)?)
        }
        DesignChoice::Cluster { sampled, .. } => Frame::Cluster(ClusterFrame::new(pop, *sampled)?),
    };
    let sizes = pop.domain_sizes();
    let weights: Vec<f64> = sizes.iter().map(|&v| v as f64).collect();
    let n = pop.len() as f64;
    let w_u: Vec<f64> = sizes.iter().map(|&nd| nd as f64 / n).collect();

    let terms: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let s = frame.draw(pop, &mut rng);
            let s_star = frame.draw(pop, &mut rng);
            let ht = ht_domain_means_allowing_empty(&s, sizes).expect("sizes match");
            let theta = if constrained {
                weighted_pava(&ht.means, &weights).expect("positive weights").0
            } else {
                ht.means
            };
            let ht_star = ht_domain_means_allowing_empty(&s_star, sizes).expect("sizes match");
            weighted_sq_err(&ht_star.means, &theta, &w_u)
        })
        .collect();

    let mean = terms.iter().sum::<f64>() / reps as f64;
    let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (reps as f64 - 1.0);
    Ok((mean, (var / reps as f64).sqrt()))
}
