//! Weighted isotonic (nondecreasing) projection of domain means.
//!
//! [`weighted_pava`] is the production solver; [`max_min_solution`] is the
//! O(D^3) closed-form oracle it is checked against. Pooling happens only on
//! strict violations, so exactly-equal adjacent values stay in separate
//! blocks and the effective-parameter count k is well defined for the Wald
//! degrees of freedom and the trace penalty. Comparisons use exact
//! floating-point ordering; nonincreasing fits are obtained by negating
//! inputs at the call site.

use crate::util::KahanSum;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IsotonicError {
    #[error("weight {index} is not strictly positive")]
    NonpositiveWeight { index: usize },
    #[error("means and weights have different lengths ({means} vs {weights})")]
    DimensionMismatch { means: usize, weights: usize },
    #[error("input is empty")]
    EmptyInput,
}

/// Ordered, contiguous blocks covering `0..D`, with one fitted value per
/// block. `num_blocks` is the effective-parameter count k.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingPartition {
    blocks: Vec<(usize, usize)>,
    block_values: Vec<f64>,
}

impl PoolingPartition {
    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn block_values(&self) -> &[f64] {
        &self.block_values
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_domains(&self) -> usize {
        self.blocks.last().map_or(0, |&(_, j)| j + 1)
    }

    /// Index of the block containing domain `d`.
    pub fn block_of(&self, d: usize) -> usize {
        self.blocks
            .partition_point(|&(_, end)| end < d)
    }

    /// Expand block values back to one fitted value per domain.
    pub fn expand(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.num_domains());
        for (&(i, j), &v) in self.blocks.iter().zip(&self.block_values) {
            theta.extend(std::iter::repeat_n(v, j - i + 1));
        }
        theta
    }
}

fn check_inputs(means: &[f64], weights: &[f64]) -> Result<(), IsotonicError> {
    if means.is_empty() {
        return Err(IsotonicError::EmptyInput);
    }
    if means.len() != weights.len() {
        return Err(IsotonicError::DimensionMismatch {
            means: means.len(),
            weights: weights.len(),
        });
    }
    if let Some(index) = weights.iter().position(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(IsotonicError::NonpositiveWeight { index });
    }
    Ok(())
}

/// Pool-adjacent-violators solver for
/// min sum_d w_d (y_d - theta_d)^2  subject to  theta_1 <= ... <= theta_D.
pub fn weighted_pava(
    means: &[f64],
    weights: &[f64],
) -> Result<(Vec<f64>, PoolingPartition), IsotonicError> {
    check_inputs(means, weights)?;
    let d = means.len();
    let mut values: Vec<f64> = Vec::with_capacity(d);
    let mut wsum: Vec<f64> = Vec::with_capacity(d);
    let mut starts: Vec<usize> = Vec::with_capacity(d);
    for i in 0..d {
        values.push(means[i]);
        wsum.push(weights[i]);
        starts.push(i);
        // merge only strict violations; ties stay as separate blocks
        while values.len() > 1 && values[values.len() - 2] > values[values.len() - 1] {
            let v2 = values.pop().unwrap();
            let w2 = wsum.pop().unwrap();
            starts.pop();
            let last = values.len() - 1;
            values[last] = (values[last] * wsum[last] + v2 * w2) / (wsum[last] + w2);
            wsum[last] += w2;
        }
    }
    let mut blocks = Vec::with_capacity(values.len());
    for (b, &s) in starts.iter().enumerate() {
        let end = if b + 1 < starts.len() {
            starts[b + 1] - 1
        } else {
            d - 1
        };
        blocks.push((s, end));
    }
    let partition = PoolingPartition {
        blocks,
        block_values: values,
    };
    Ok((partition.expand(), partition))
}

/// Closed-form solution theta_d = max over i <= d of min over j >= d of the
/// pooled weighted mean of domains i..=j. O(D^3); the brute-force oracle for
/// [`weighted_pava`].
pub fn max_min_solution(means: &[f64], weights: &[f64]) -> Result<Vec<f64>, IsotonicError> {
    check_inputs(means, weights)?;
    let d = means.len();
    // prefix sums of w and w*y; pooled mean over i..=j by differencing
    let mut pw = vec![0.0; d + 1];
    let mut pwy = vec![0.0; d + 1];
    for i in 0..d {
        pw[i + 1] = pw[i] + weights[i];
        pwy[i + 1] = pwy[i] + weights[i] * means[i];
    }
    let pooled = |i: usize, j: usize| (pwy[j + 1] - pwy[i]) / (pw[j + 1] - pw[i]);
    let mut theta = Vec::with_capacity(d);
    for t in 0..d {
        let mut best = f64::NEG_INFINITY;
        for i in 0..=t {
            let mut inner = f64::INFINITY;
            for j in t..d {
                inner = inner.min(pooled(i, j));
            }
            best = best.max(inner);
        }
        theta.push(best);
    }
    Ok(theta)
}

/// The random weighted projection matrix of the observed pooling:
/// P[a][b] = w_b / (sum of w over a's block) when b shares a's block, else 0.
/// Satisfies theta = P y, P^2 = P, and diag(w) P symmetric.
pub fn projection_matrix(partition: &PoolingPartition, weights: &[f64]) -> DMatrix<f64> {
    let d = partition.num_domains();
    debug_assert_eq!(weights.len(), d);
    let mut p = DMatrix::zeros(d, d);
    for &(i, j) in partition.blocks() {
        let total: f64 = weights[i..=j].iter().sum();
        for a in i..=j {
            for b in i..=j {
                p[(a, b)] = weights[b] / total;
            }
        }
    }
    p
}

/// Classification of an interior index of the cumulative sum diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcmPointClass {
    /// The greatest convex minorant changes slope here.
    Corner,
    /// On the minorant with unchanged slope (tied pooled means).
    Flat,
    /// Strictly above the minorant.
    Above,
}

/// Cumulative sum diagram of the weighted means together with the
/// greatest-convex-minorant classification of its interior points.
///
/// `cum_weight[d]` = r(d) and `cum_value[d]` = t(d) for d = 0..=D with
/// r(0) = t(0) = 0; `classes[d-1]` classifies interior index d.
#[derive(Debug, Clone, PartialEq)]
pub struct GcmDiagnostics {
    pub cum_weight: Vec<f64>,
    pub cum_value: Vec<f64>,
    pub classes: Vec<GcmPointClass>,
}

/// Build the cumulative sum diagram and classify each interior index as a
/// corner point, a flat spot, or a point above the greatest convex minorant.
/// The minorant's left-hand slopes are exactly the weighted PAVA fit.
pub fn gcm_classify(means: &[f64], weights: &[f64]) -> Result<GcmDiagnostics, IsotonicError> {
    check_inputs(means, weights)?;
    let d = means.len();
    let mut cum_weight = Vec::with_capacity(d + 1);
    let mut cum_value = Vec::with_capacity(d + 1);
    cum_weight.push(0.0);
    cum_value.push(0.0);
    let mut rw = KahanSum::new();
    let mut tv = KahanSum::new();
    for i in 0..d {
        rw.add(weights[i]);
        tv.add(weights[i] * means[i]);
        cum_weight.push(rw.value());
        cum_value.push(tv.value());
    }

    let (_, partition) = weighted_pava(means, weights)?;
    let mut classes = Vec::with_capacity(d.saturating_sub(1));
    for idx in 1..d {
        let b = partition.block_of(idx - 1);
        let (start, end) = partition.blocks()[b];
        let class = if idx - 1 == end {
            // block boundary: on the minorant by construction
            if partition.block_values()[b] < partition.block_values()[b + 1] {
                GcmPointClass::Corner
            } else {
                GcmPointClass::Flat
            }
        } else {
            // interior to a pooled block: compare the diagram to the chord
            let v = partition.block_values()[b];
            let minorant = cum_value[start] + v * (cum_weight[idx] - cum_weight[start]);
            debug_assert!(end >= idx);
            if cum_value[idx] > minorant {
                GcmPointClass::Above
            } else {
                GcmPointClass::Flat
            }
        };
        classes.push(class);
    }
    Ok(GcmDiagnostics {
        cum_weight,
        cum_value,
        classes,
    })
}
