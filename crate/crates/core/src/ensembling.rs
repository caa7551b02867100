//! Primal (probability-space) and dual (log-space) ensembling, ensemble-size
//! sweeps, the bias counterexample for primal ensembles, and greedy
//! ensemble selection.

use crate::bregman::{divergence_prepared, ConvexGenerator, NegativeEntropy, SimplexPoint};
use crate::decomposition::{closed_form_unchecked, log_primal_average};
use crate::error::{BvError, Result};
use crate::moments::{dual_mean, PredictionSet};
use crate::numerics::{log_softmax, pairwise_sum, weighted_vector_mean};
use crate::scalar::Scalar;
use crate::seed::rng_for;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Arithmetic mean of member predictions.
    Primal,
    /// Primal image of the mean of member duals (geometric mean for KL).
    Dual,
}

impl std::fmt::Display for EnsembleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnsembleMode::Primal => "primal",
            EnsembleMode::Dual => "dual",
        })
    }
}

/// How ensemble members are drawn from a finite pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    WithReplacement,
    WithoutReplacement,
}

/// `X̂ = (1/n) Σ Xᵢ`.
pub fn primal_ensemble<T: Scalar>(members: &[Vec<T>]) -> Result<Vec<T>> {
    let first = members
        .first()
        .ok_or_else(|| BvError::validation("members", "empty ensemble"))?;
    if let Some(m) = members.iter().find(|m| m.len() != first.len()) {
        return Err(BvError::Dimension {
            expected: first.len(),
            got: m.len(),
        });
    }
    let w = vec![T::one() / T::from_count(members.len()); members.len()];
    Ok(weighted_vector_mean(members, &w))
}

/// `X̂ = ((1/n) Σ Xᵢ*)*`.
pub fn dual_ensemble<T: Scalar, G: ConvexGenerator<T> + ?Sized>(gen: &G, members: &[Vec<T>]) -> Result<Vec<T>> {
    dual_mean(gen, &PredictionSet::uniform(members.to_vec())?)
}

/// Per-model, per-example KL predictions: `preds[model][example]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPool<T> {
    preds: Vec<Vec<SimplexPoint<T>>>,
    n_classes: usize,
}

impl<T: Scalar> ModelPool<T> {
    pub fn new(preds: Vec<Vec<SimplexPoint<T>>>) -> Result<Self> {
        let first = preds.first().ok_or_else(|| BvError::validation("pool", "no models"))?;
        let n_examples = first.len();
        if n_examples == 0 {
            return Err(BvError::validation("pool", "no examples"));
        }
        let n_classes = first[0].dim();
        for (m, row) in preds.iter().enumerate() {
            if row.len() != n_examples {
                return Err(BvError::validation(
                    format!("pool[{m}]"),
                    format!("{} examples, expected {n_examples}", row.len()),
                ));
            }
            if let Some(p) = row.iter().find(|p| p.dim() != n_classes) {
                return Err(BvError::Dimension {
                    expected: n_classes,
                    got: p.dim(),
                });
            }
        }
        Ok(Self { preds, n_classes })
    }

    pub fn n_models(&self) -> usize {
        self.preds.len()
    }

    pub fn n_examples(&self) -> usize {
        self.preds[0].len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn model(&self, m: usize) -> &[SimplexPoint<T>] {
        &self.preds[m]
    }

    pub fn models(&self) -> &[Vec<SimplexPoint<T>>] {
        &self.preds
    }

    /// Sub-pool restricted to the given model indices (repeats allowed).
    pub fn select(&self, models: &[usize]) -> Result<Self> {
        let preds = models
            .iter()
            .map(|&m| {
                self.preds
                    .get(m)
                    .cloned()
                    .ok_or_else(|| BvError::validation("models", format!("index {m} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(preds)
    }

    /// Concatenation of two pools over the same examples.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut preds = self.preds.clone();
        preds.extend(other.preds.iter().cloned());
        Self::new(preds)
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        if labels.len() != self.n_examples() {
            return Err(BvError::validation(
                "labels",
                format!("{} labels for {} examples", labels.len(), self.n_examples()),
            ));
        }
        if let Some(i) = labels.iter().position(|&y| y >= self.n_classes) {
            return Err(BvError::Domain {
                index: i,
                reason: format!("label {} out of range", labels[i]),
            });
        }
        Ok(())
    }

    /// Per-example ensemble log-probabilities of the given members.
    pub fn combine(&self, members: &[usize], mode: EnsembleMode) -> Vec<Vec<T>> {
        (0..self.n_examples())
            .map(|e| {
                let lps: Vec<&[T]> = members.iter().map(|&m| self.preds[m][e].log_probs()).collect();
                combine_log_probs(&lps, mode)
            })
            .collect()
    }
}

fn combine_log_probs<T: Scalar>(members: &[&[T]], mode: EnsembleMode) -> Vec<T> {
    match mode {
        EnsembleMode::Primal => log_primal_average(members),
        EnsembleMode::Dual => {
            let c = members[0].len();
            let n = T::from_count(members.len());
            let mean: Vec<T> = (0..c)
                .map(|j| pairwise_sum(&members.iter().map(|m| m[j]).collect::<Vec<_>>()) / n)
                .collect();
            log_softmax(&mean)
        }
    }
}

/// Number of equally likely index draws of size `k` from `m` models, or
/// `None` if it exceeds `cap`.
fn enumeration_size(m: usize, k: usize, sampling: Sampling, cap: usize) -> Option<usize> {
    let mut count: usize = 1;
    match sampling {
        Sampling::WithReplacement => {
            for _ in 0..k {
                count = count.checked_mul(m)?;
                if count > cap {
                    return None;
                }
            }
        }
        Sampling::WithoutReplacement => {
            if k > m {
                return Some(0);
            }
            // C(m, i+1) = C(m, i)·(m − i)/(i + 1) is exact at every step.
            for i in 0..k {
                count = count.checked_mul(m - i)? / (i + 1);
            }
            if count > cap {
                return None;
            }
        }
    }
    Some(count)
}

/// All equally likely index draws of size `k` from `m` models: ordered
/// sequences for i.i.d. draws, k-subsets otherwise.
pub fn enumerate_index_draws(m: usize, k: usize, sampling: Sampling) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(m: usize, k: usize, start: usize, sampling: Sampling, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        let lo = match sampling {
            Sampling::WithReplacement => 0,
            Sampling::WithoutReplacement => start,
        };
        for i in lo..m {
            cur.push(i);
            rec(m, k, i + 1, sampling, cur, out);
            cur.pop();
        }
    }
    rec(m, k, 0, sampling, &mut cur, &mut out);
    out
}

/// Exact law of the size-`k` i.i.d. ensemble of a uniform member law, as a
/// uniform list of `mᵏ` ensemble predictions.
pub fn exhaustive_ensemble_law<T: Scalar, G: ConvexGenerator<T> + ?Sized>(
    gen: &G,
    members: &[Vec<T>],
    k: usize,
    mode: EnsembleMode,
) -> Result<Vec<Vec<T>>> {
    enumerate_index_draws(members.len(), k, Sampling::WithReplacement)
        .into_iter()
        .map(|idx| {
            let chosen: Vec<Vec<T>> = idx.iter().map(|&i| members[i].clone()).collect();
            match mode {
                EnsembleMode::Primal => gen.canonicalize(&primal_ensemble(&chosen)?),
                EnsembleMode::Dual => dual_ensemble(gen, &chosen),
            }
        })
        .collect()
}

/// Per-k bias, variance and NLL of ensembles drawn from a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCurve<T> {
    pub mode: EnsembleMode,
    pub sampling: Sampling,
    pub ks: Vec<usize>,
    pub bias: Vec<T>,
    pub variance: Vec<T>,
    pub nll: Vec<T>,
    /// Jackknife standard errors over draws (zero when the law was enumerated).
    pub bias_se: Vec<T>,
    pub variance_se: Vec<T>,
    pub nll_se: Vec<T>,
    /// Whether the k-th row enumerates every equally likely draw instead of sampling.
    pub enumerated: Vec<bool>,
    pub n_draws: usize,
    pub seed: u64,
}

impl<T: Scalar> EnsembleCurve<T> {
    /// `max_k |bias[k] − bias[0]| / sqrt(se[k]² + se[0]²)`; zero when all rows are exact.
    pub fn max_bias_drift_sigmas(&self) -> T {
        let mut worst = T::zero();
        for i in 1..self.ks.len() {
            let diff = (self.bias[i] - self.bias[0]).abs();
            let se = (self.bias_se[i].powi(2) + self.bias_se[0].powi(2)).sqrt();
            let z = if se > T::zero() {
                diff / se
            } else if diff > T::lit(1e-9) {
                T::infinity()
            } else {
                T::zero()
            };
            worst = worst.max(z);
        }
        worst
    }
}

struct RowStats<T> {
    bias: T,
    variance: T,
    nll: T,
}

/// Bias/variance/NLL averaged over examples; `draws[d][e]` are log-probabilities.
fn row_stats<T: Scalar>(draws: &[Vec<Vec<T>>], labels: &[usize]) -> RowStats<T> {
    let n_ex = labels.len();
    let per_example: Vec<(T, T)> = (0..n_ex)
        .map(|e| {
            let lps: Vec<&[T]> = draws.iter().map(|d| d[e].as_slice()).collect();
            let bv = closed_form_unchecked(&lps, labels[e]);
            (bv.bias, bv.variance)
        })
        .collect();
    let n = T::from_count(n_ex);
    let bias = pairwise_sum(&per_example.iter().map(|p| p.0).collect::<Vec<_>>()) / n;
    let variance = pairwise_sum(&per_example.iter().map(|p| p.1).collect::<Vec<_>>()) / n;
    RowStats {
        bias,
        variance,
        nll: bias + variance,
    }
}

/// Jackknife standard errors of (bias, variance, nll) over draws.
fn jackknife<T: Scalar>(draws: &[Vec<Vec<T>>], labels: &[usize]) -> (T, T, T) {
    let n = draws.len();
    if n < 2 {
        return (T::zero(), T::zero(), T::zero());
    }
    let reps: Vec<RowStats<T>> = (0..n)
        .into_par_iter()
        .map(|skip| {
            let rest: Vec<Vec<Vec<T>>> = draws
                .iter()
                .enumerate()
                .filter(|(d, _)| *d != skip)
                .map(|(_, v)| v.clone())
                .collect();
            row_stats(&rest, labels)
        })
        .collect();
    let se = |f: &dyn Fn(&RowStats<T>) -> T| {
        let vals: Vec<T> = reps.iter().map(f).collect();
        let mean = pairwise_sum(&vals) / T::from_count(n);
        let ss = pairwise_sum(&vals.iter().map(|&v| (v - mean) * (v - mean)).collect::<Vec<_>>());
        (ss * T::from_count(n - 1) / T::from_count(n)).sqrt()
    };
    (se(&|r| r.bias), se(&|r| r.variance), se(&|r| r.nll))
}

/// Ensemble-size sweep over a KL prediction pool.
///
/// For each `k`, `n_draws` ensembles of `k` models are drawn (stream
/// `(seed, k, d)`), combined per example according to `mode`, and the
/// closed-form estimator is applied per example over draws and averaged over
/// examples. When the number of equally likely draws does not exceed
/// `n_draws`, the law is enumerated exactly instead of sampled.
pub fn ensemble_curve<T: Scalar>(
    pool: &ModelPool<T>,
    labels: &[usize],
    mode: EnsembleMode,
    ks: &[usize],
    n_draws: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<EnsembleCurve<T>> {
    pool.check_labels(labels)?;
    if n_draws == 0 {
        return Err(BvError::validation("n_draws", "must be at least 1"));
    }
    if ks.is_empty() {
        return Err(BvError::validation("ks", "no ensemble sizes"));
    }
    let m = pool.n_models();
    for &k in ks {
        if k == 0 || (sampling == Sampling::WithoutReplacement && k > m) {
            return Err(BvError::validation(
                "ks",
                format!("ensemble size {k} out of range for a pool of {m} models"),
            ));
        }
    }

    let mut curve = EnsembleCurve {
        mode,
        sampling,
        ks: ks.to_vec(),
        bias: Vec::new(),
        variance: Vec::new(),
        nll: Vec::new(),
        bias_se: Vec::new(),
        variance_se: Vec::new(),
        nll_se: Vec::new(),
        enumerated: Vec::new(),
        n_draws,
        seed,
    };
    for &k in ks {
        let exact = enumeration_size(m, k, sampling, n_draws).is_some();
        let index_draws: Vec<Vec<usize>> = if exact {
            enumerate_index_draws(m, k, sampling)
        } else {
            (0..n_draws)
                .map(|d| {
                    let mut rng = rng_for(seed, &[k as u64, d as u64]);
                    match sampling {
                        Sampling::WithReplacement => (0..k).map(|_| rng.random_range(0..m)).collect(),
                        Sampling::WithoutReplacement => index::sample(&mut rng, m, k).into_vec(),
                    }
                })
                .collect()
        };
        let draws: Vec<Vec<Vec<T>>> = index_draws.par_iter().map(|idx| pool.combine(idx, mode)).collect();
        let stats = row_stats(&draws, labels);
        let (bse, vse, nse) = if exact {
            (T::zero(), T::zero(), T::zero())
        } else {
            jackknife(&draws, labels)
        };
        curve.bias.push(stats.bias);
        curve.variance.push(stats.variance);
        curve.nll.push(stats.nll);
        curve.bias_se.push(bse);
        curve.variance_se.push(vse);
        curve.nll_se.push(nse);
        curve.enumerated.push(exact);
    }
    Ok(curve)
}

/// Outcome of the two-point construction showing that primal ensembling can
/// move the KL bias in either direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub dual_mean_single: Vec<f64>,
    pub dual_mean_ensemble: Vec<f64>,
    pub bias_class0_single: f64,
    pub bias_class0_ensemble: f64,
    pub bias_class1_single: f64,
    pub bias_class1_ensemble: f64,
}

impl CounterexampleReport {
    pub fn dual_means_differ(&self) -> bool {
        self.dual_mean_single
            .iter()
            .zip(&self.dual_mean_ensemble)
            .any(|(a, b)| (a - b).abs() > 1e-9)
    }

    /// One class's bias strictly increases while the other's strictly decreases.
    pub fn opposite_directions(&self) -> bool {
        let d0 = self.bias_class0_ensemble - self.bias_class0_single;
        let d1 = self.bias_class1_ensemble - self.bias_class1_single;
        (d0 > 0.0 && d1 < 0.0) || (d0 < 0.0 && d1 > 0.0)
    }

    pub fn passes(&self) -> bool {
        self.dual_means_differ() && self.opposite_directions()
    }
}

/// Builds the uniform law on `(0.8, 0.2)` and `(0.6, 0.4)`, its two-member
/// primal-ensemble law, and compares their dual means and per-class biases.
pub fn counterexample_report() -> Result<CounterexampleReport> {
    let kl = NegativeEntropy::new(2);
    let members = vec![vec![0.8, 0.2], vec![0.6, 0.4]];
    let single = PredictionSet::uniform(members.clone())?;
    let ensemble = PredictionSet::uniform(exhaustive_ensemble_law(&kl, &members, 2, EnsembleMode::Primal)?)?;
    let q = dual_mean(&kl, &single)?;
    let q_hat = dual_mean(&kl, &ensemble)?;
    let bias = |class: usize, center: &[f64]| -> Result<f64> {
        let y = SimplexPoint::<f64>::one_hot(class, 2)?;
        divergence_prepared(&kl, y.probs(), center)
    };
    Ok(CounterexampleReport {
        bias_class0_single: bias(0, &q)?,
        bias_class0_ensemble: bias(0, &q_hat)?,
        bias_class1_single: bias(1, &q)?,
        bias_class1_ensemble: bias(1, &q_hat)?,
        dual_mean_single: q,
        dual_mean_ensemble: q_hat,
    })
}

fn ensemble_nll<T: Scalar>(prob_sums: &[Vec<T>], size: usize, labels: &[usize]) -> T {
    let n = T::from_count(size);
    let terms: Vec<T> = prob_sums.iter().zip(labels).map(|(s, &y)| -(s[y] / n).ln()).collect();
    pairwise_sum(&terms) / T::from_count(labels.len())
}

/// Greedy forward selection (with repeats) of a primal ensemble minimising
/// validation NLL.
///
/// Each round appends the model whose inclusion gives the lowest validation
/// NLL, ties going to the lowest index. Selection stops early once every
/// candidate would increase the NLL, so `budget` is an upper bound on the
/// ensemble size. Returns the indices and the NLL after each pick.
pub fn greedy_select_with_trace<T: Scalar>(
    pool: &ModelPool<T>,
    val_labels: &[usize],
    budget: usize,
) -> Result<(Vec<usize>, Vec<T>)> {
    if budget == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    pool.check_labels(val_labels)?;
    let c = pool.n_classes();
    let mut sums: Vec<Vec<T>> = vec![vec![T::zero(); c]; pool.n_examples()];
    let mut chosen = Vec::new();
    let mut trace: Vec<T> = Vec::new();
    for round in 0..budget {
        let scores: Vec<T> = (0..pool.n_models())
            .into_par_iter()
            .map(|m| {
                let trial: Vec<Vec<T>> = sums
                    .iter()
                    .zip(pool.model(m))
                    .map(|(s, p)| s.iter().zip(p.probs()).map(|(&a, &b)| a + b).collect())
                    .collect();
                ensemble_nll(&trial, round + 1, val_labels)
            })
            .collect();
        let (best, best_nll) =
            scores.iter().enumerate().fold(
                (0, T::infinity()),
                |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
            );
        if let Some(&prev) = trace.last() {
            if best_nll > prev {
                break;
            }
        }
        for (s, p) in sums.iter_mut().zip(pool.model(best)) {
            for (a, &b) in s.iter_mut().zip(p.probs()) {
                *a = *a + b;
            }
        }
        chosen.push(best);
        trace.push(best_nll);
    }
    Ok((chosen, trace))
}

pub fn greedy_select<T: Scalar>(pool: &ModelPool<T>, val_labels: &[usize], budget: usize) -> Result<Vec<usize>> {
    greedy_select_with_trace(pool, val_labels, budget).map(|(idx, _)| idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bregman::SquaredEuclidean;

    const A: [f64; 2] = [0.8, 0.2];
    const B: [f64; 2] = [0.6, 0.4];

    fn sp(p: &[f64]) -> SimplexPoint<f64> {
        SimplexPoint::new(p.to_vec()).unwrap()
    }

    #[test]
    fn primal_ensemble_examples() {
        let e = primal_ensemble(&[A.to_vec(), B.to_vec()]).unwrap();
        assert!((e[0] - 0.7).abs() < 1e-15 && (e[1] - 0.3).abs() < 1e-15);
        assert_eq!(primal_ensemble(&[A.to_vec()]).unwrap(), A.to_vec());
        let e = primal_ensemble(&vec![B.to_vec(); 5]).unwrap();
        assert!((e[0] - 0.6).abs() < 1e-15);
        assert!(primal_ensemble::<f64>(&[]).is_err());
        assert!(primal_ensemble(&[A.to_vec(), vec![1.0]]).is_err());
    }

    #[test]
    fn dual_ensemble_examples() {
        let kl = NegativeEntropy::new(2);
        let e = dual_ensemble(&kl, &[A.to_vec(), B.to_vec()]).unwrap();
        assert!((e[0] - 0.710_102_051_443_364_4).abs() < 1e-12);
        let se = SquaredEuclidean::new(3);
        let ms = vec![vec![1.0, -2.0, 0.5], vec![3.0, 0.0, 0.25]];
        let a = dual_ensemble(&se, &ms).unwrap();
        let b = primal_ensemble(&ms).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y): (&f64, &f64)| (x - y).abs() < 1e-15));
        let one = dual_ensemble(&kl, &[A.to_vec()]).unwrap();
        assert!((one[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_index_draws(3, 2, Sampling::WithReplacement).len(), 9);
        assert_eq!(enumerate_index_draws(4, 2, Sampling::WithoutReplacement).len(), 6);
        assert_eq!(enumeration_size(3, 2, Sampling::WithReplacement, 9), Some(9));
        assert_eq!(enumeration_size(3, 2, Sampling::WithReplacement, 8), None);
        assert_eq!(enumeration_size(64, 8, Sampling::WithoutReplacement, 20), None);
        assert_eq!(enumeration_size(5, 1, Sampling::WithoutReplacement, 20), Some(5));
    }

    fn two_model_pool() -> ModelPool<f64> {
        ModelPool::new(vec![vec![sp(&A)], vec![sp(&B)]]).unwrap()
    }

    #[test]
    fn curve_with_exhaustive_draws_matches_enumeration_oracle() {
        let pool = two_model_pool();
        let c = ensemble_curve(
            &pool,
            &[0],
            EnsembleMode::Primal,
            &[1, 2],
            4,
            0,
            Sampling::WithReplacement,
        )
        .unwrap();
        assert_eq!(c.enumerated, vec![true, true]);
        assert!((c.variance[0] - 0.024_638_002_691_794_98).abs() < 1e-12);
        assert!((c.variance[1] - 0.012_380_349_167_073_67).abs() < 1e-12);
        assert!((c.bias[1] - 0.349_449_416_572_342_6).abs() < 1e-12);
        assert!(c.variance[1] < c.variance[0]);
        for i in 0..2 {
            assert!((c.nll[i] - c.bias[i] - c.variance[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_rejects_bad_arguments() {
        let pool = two_model_pool();
        let r = ensemble_curve(
            &pool,
            &[0],
            EnsembleMode::Dual,
            &[3],
            5,
            0,
            Sampling::WithoutReplacement,
        );
        assert!(r.is_err());
        let r = ensemble_curve(
            &pool,
            &[0, 1],
            EnsembleMode::Dual,
            &[1],
            5,
            0,
            Sampling::WithReplacement,
        );
        assert!(r.is_err());
        let r = ensemble_curve(&pool, &[0], EnsembleMode::Dual, &[0], 5, 0, Sampling::WithReplacement);
        assert!(r.is_err());
    }

    #[test]
    fn counterexample_values() {
        let r = counterexample_report().unwrap();
        assert!(r.passes());
        assert!((r.dual_mean_single[0] - 0.710_102_051_443_364_4).abs() < 1e-12);
        assert!((r.dual_mean_ensemble[0] - 0.705_076_186_132_502_9).abs() < 1e-12);
        assert!((r.bias_class0_single - 0.342_346_584_848_305_2).abs() < 1e-9);
        assert!((r.bias_class0_ensemble - 0.349_449_416_572_342_6).abs() < 1e-9);
        assert!((r.bias_class1_single - 1.238_226_319_462_332_7).abs() < 1e-9);
        assert!((r.bias_class1_ensemble - 1.221_038_214_072_958_2).abs() < 1e-9);
        assert!(r.bias_class0_ensemble > r.bias_class0_single);
        assert!(r.bias_class1_ensemble < r.bias_class1_single);
    }

    #[test]
    fn greedy_examples() {
        let pool = ModelPool::new(vec![
            vec![sp(&[0.5, 0.5]), sp(&[0.5, 0.5])],
            vec![sp(&[0.6, 0.4]), sp(&[0.3, 0.7])],
            vec![sp(&[0.9, 0.1]), sp(&[0.1, 0.9])],
        ])
        .unwrap();
        let labels = [0, 1];
        assert!(greedy_select(&pool, &labels, 0).unwrap().is_empty());
        assert_eq!(greedy_select(&pool, &labels, 1).unwrap(), vec![2]);

        let tied = ModelPool::new(vec![vec![sp(&[0.6, 0.4])], vec![sp(&[0.6, 0.4])]]).unwrap();
        assert_eq!(greedy_select(&tied, &[0], 3).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn greedy_trace_is_monotone() {
        let pool = ModelPool::new(vec![
            vec![sp(&[0.7, 0.3]), sp(&[0.4, 0.6]), sp(&[0.5, 0.5])],
            vec![sp(&[0.4, 0.6]), sp(&[0.2, 0.8]), sp(&[0.9, 0.1])],
            vec![sp(&[0.55, 0.45]), sp(&[0.6, 0.4]), sp(&[0.3, 0.7])],
        ])
        .unwrap();
        let (idx, trace) = greedy_select_with_trace(&pool, &[0, 1, 0], 10).unwrap();
        assert_eq!(idx.len(), trace.len());
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}
