//! Bias-variance decomposition of an expected Bregman divergence, its
//! conditional form, and closed-form KL estimators over sampled predictions.
//!
//! For independent label and prediction laws `Y`, `X`:
//!
//! ```text
//! E D[Y‖X] = E D[Y‖E Y] + D[E Y‖𝓔X] + E D[𝓔X‖X]
//!            Bayes error   bias         variance
//! ```

use crate::bregman::{divergence_prepared, ConvexGenerator, SimplexPoint};
use crate::error::{BvError, Result};
use crate::moments::{dual_mean_prepared, expected_divergence_from, PredictionSet};
use crate::numerics::{logsumexp, pairwise_sum};
use crate::scalar::Scalar;
use crate::seed::rng_for;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition<T> {
    pub bayes_error: T,
    pub bias: T,
    pub variance: T,
    /// `E D[Y‖X]`, computed directly by the double sum.
    pub total: T,
}

impl<T: Scalar> Decomposition<T> {
    /// `|total − (bayes_error + bias + variance)|`.
    pub fn residual(&self) -> T {
        (self.total - (self.bayes_error + self.bias + self.variance)).abs()
    }
}

/// Decomposition conditioned on a grouping variable `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDecomposition<T> {
    /// `E_Z D[y‖𝓔(X|Z)]`.
    pub conditional_bias: T,
    /// `E_Z E_{X|Z} D[𝓔(X|Z)‖X]`.
    pub conditional_variance: T,
    /// `E_Z D[𝓔X‖𝓔(X|Z)]`, the amount by which the conditional bias
    /// overestimates the total bias (and the conditional variance
    /// underestimates the total variance).
    pub gap: T,
    pub total_bias: T,
    pub total_variance: T,
}

impl<T: Scalar> ConditionalDecomposition<T> {
    /// Largest violation among the three identities linking conditional and total terms.
    pub fn residual(&self) -> T {
        let a = (self.conditional_bias - self.total_bias - self.gap).abs();
        let b = (self.conditional_variance - self.total_variance + self.gap).abs();
        let c = (self.conditional_bias + self.conditional_variance - self.total_bias - self.total_variance).abs();
        a.max(b).max(c)
    }
}

/// Bias and variance of a KL predictor; `nll = bias + variance` for a one-hot label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVariance<T> {
    pub bias: T,
    pub variance: T,
}

impl<T: Scalar> BiasVariance<T> {
    pub fn nll(&self) -> T {
        self.bias + self.variance
    }
}

fn check_dims<T: Scalar>(a: &PredictionSet<T>, b: &PredictionSet<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(BvError::Dimension {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Full decomposition for independent label and prediction laws.
pub fn decompose<T: Scalar, G: ConvexGenerator<T> + ?Sized>(
    gen: &G,
    labels: &PredictionSet<T>,
    preds: &PredictionSet<T>,
) -> Result<Decomposition<T>> {
    check_dims(labels, preds)?;
    let ys = labels.prepared(gen)?;
    let xs = preds.prepared(gen)?;
    let (wy, wx) = (labels.weights(), preds.weights());

    let deterministic = ys.iter().all(|y| *y == ys[0]);
    let (central_label, bayes_error) = if deterministic {
        (ys[0].clone(), T::zero())
    } else {
        let mean = crate::numerics::weighted_vector_mean(&ys, wy);
        let mean = gen.canonicalize(&mean)?;
        let terms = ys
            .iter()
            .zip(wy)
            .map(|(y, &w)| Ok(w * divergence_prepared(gen, y, &mean)?))
            .collect::<Result<Vec<T>>>()?;
        (mean, pairwise_sum(&terms))
    };

    let center = dual_mean_prepared(gen, &xs, wx)?;
    let bias = divergence_prepared(gen, &central_label, &center)?;
    let variance = expected_divergence_from(gen, &center, &xs, wx)?;

    let mut cells = Vec::with_capacity(ys.len() * xs.len());
    for (y, &a) in ys.iter().zip(wy) {
        for (x, &b) in xs.iter().zip(wx) {
            cells.push(a * b * divergence_prepared(gen, y, x)?);
        }
    }
    Ok(Decomposition {
        bayes_error,
        bias,
        variance,
        total: pairwise_sum(&cells),
    })
}

/// Decomposition of `E D[y‖X]` conditioned on the group tags of `preds`.
pub fn conditional_decompose<T: Scalar, G: ConvexGenerator<T> + ?Sized>(
    gen: &G,
    label: &[T],
    preds: &PredictionSet<T>,
) -> Result<ConditionalDecomposition<T>> {
    let y = gen.canonicalize(label)?;
    let xs = preds.prepared(gen)?;
    let groups = preds.split_by_group()?;
    let center = dual_mean_prepared(gen, &xs, preds.weights())?;

    let mut cb = Vec::with_capacity(groups.len());
    let mut cv = Vec::with_capacity(groups.len());
    let mut gap = Vec::with_capacity(groups.len());
    for (_, w, sub) in &groups {
        let pts = sub.prepared(gen)?;
        let c = dual_mean_prepared(gen, &pts, sub.weights())?;
        cb.push(*w * divergence_prepared(gen, &y, &c)?);
        cv.push(*w * expected_divergence_from(gen, &c, &pts, sub.weights())?);
        gap.push(*w * divergence_prepared(gen, &center, &c)?);
    }
    Ok(ConditionalDecomposition {
        conditional_bias: pairwise_sum(&cb),
        conditional_variance: pairwise_sum(&cv),
        gap: pairwise_sum(&gap),
        total_bias: divergence_prepared(gen, &y, &center)?,
        total_variance: expected_divergence_from(gen, &center, &xs, preds.weights())?,
    })
}

/// Closed-form KL bias and variance for a one-hot label.
///
/// With `Vⱼ` the mean log-probability of class `j` over the `N` predictions,
/// `variance = −log Σⱼ exp(Vⱼ)` and `bias = mean cross-entropy − variance`.
pub fn kl_bias_variance_closed_form<T: Scalar>(log_preds: &[Vec<T>], y: usize) -> Result<BiasVariance<T>> {
    let first = log_preds
        .first()
        .ok_or_else(|| BvError::validation("log_preds", "at least one prediction required"))?;
    let c = first.len();
    if y >= c {
        return Err(BvError::Domain {
            index: y,
            reason: format!("class index out of range for {c} classes"),
        });
    }
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
    for (i, lp) in log_preds.iter().enumerate() {
        if lp.len() != c {
            return Err(BvError::Dimension {
                expected: c,
                got: lp.len(),
            });
        }
        let lse = logsumexp(lp);
        if !(lse.abs() <= tol) {
            return Err(BvError::validation(
                format!("log_preds[{i}]"),
                format!("not normalised: logsumexp = {lse}"),
            ));
        }
    }
    Ok(closed_form_unchecked(log_preds, y))
}

/// The closed-form tail without validation; inputs must be normalised.
pub(crate) fn closed_form_unchecked<T: Scalar, V: AsRef<[T]>>(log_preds: &[V], y: usize) -> BiasVariance<T> {
    let n = T::from_count(log_preds.len());
    let c = log_preds[0].as_ref().len();
    let ce: T = pairwise_sum(&log_preds.iter().map(|lp| -lp.as_ref()[y]).collect::<Vec<_>>());
    let mean_log: Vec<T> = (0..c)
        .map(|j| pairwise_sum(&log_preds.iter().map(|lp| lp.as_ref()[j]).collect::<Vec<_>>()) / n)
        .collect();
    // Non-negative by Jensen; only rounding can push it below zero.
    let variance = (-logsumexp(&mean_log)).max(T::zero());
    BiasVariance {
        bias: ce / n - variance,
        variance,
    }
}

/// Log of the arithmetic (probability-space) mean of members given as log-probabilities.
pub(crate) fn log_primal_average<T: Scalar, V: AsRef<[T]>>(members: &[V]) -> Vec<T> {
    let c = members[0].as_ref().len();
    let log_k = T::from_count(members.len()).ln();
    (0..c)
        .map(|j| {
            let col: Vec<T> = members.iter().map(|m| m.as_ref()[j]).collect();
            logsumexp(&col) - log_k
        })
        .collect()
}

/// Monte-Carlo bias/variance of size-`k` primal ensembles drawn from a pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawEstimate<T> {
    pub bias: T,
    pub variance: T,
    /// Mean cross-entropy of the drawn ensembles.
    pub nll: T,
    /// Unbiased sample variance of the per-draw cross-entropy.
    pub nll_sample_variance: T,
    pub n_draws: usize,
}

impl<T: Scalar> DrawEstimate<T> {
    /// Standard error of `nll`.
    pub fn nll_std_error(&self) -> T {
        (self.nll_sample_variance / T::from_count(self.n_draws)).sqrt()
    }
}

/// Conditional bias-variance estimate for ensembles of size `k`.
///
/// Each draw samples `k` members uniformly with replacement, averages them in
/// probability space and accumulates the cross-entropy and the log of the
/// ensemble prediction. Draw `d` uses the stream derived from `(seed, d)`.
pub fn ensemble_draw_estimate<T: Scalar>(
    pool: &[SimplexPoint<T>],
    k: usize,
    n_draws: usize,
    y: usize,
    seed: u64,
) -> Result<DrawEstimate<T>> {
    if pool.is_empty() {
        return Err(BvError::validation("pool", "empty prediction pool"));
    }
    if k == 0 || n_draws == 0 {
        return Err(BvError::validation("k/n_draws", "must be at least 1"));
    }
    let c = pool[0].dim();
    if let Some(p) = pool.iter().find(|p| p.dim() != c) {
        return Err(BvError::Dimension {
            expected: c,
            got: p.dim(),
        });
    }
    if y >= c {
        return Err(BvError::Domain {
            index: y,
            reason: format!("class index out of range for {c} classes"),
        });
    }
    let draws: Vec<Vec<T>> = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng_for(seed, &[d as u64]);
            let members: Vec<&[T]> = (0..k)
                .map(|_| pool[rng.random_range(0..pool.len())].log_probs())
                .collect();
            log_primal_average(&members)
        })
        .collect();
    let bv = closed_form_unchecked(&draws, y);
    let ce: Vec<T> = draws.iter().map(|lp| -lp[y]).collect();
    let nll = pairwise_sum(&ce) / T::from_count(n_draws);
    let nll_sample_variance = if n_draws > 1 {
        pairwise_sum(&ce.iter().map(|&v| (v - nll) * (v - nll)).collect::<Vec<_>>()) / T::from_count(n_draws - 1)
    } else {
        T::zero()
    };
    Ok(DrawEstimate {
        bias: bv.bias,
        variance: bv.variance,
        nll,
        nll_sample_variance,
        n_draws,
    })
}
