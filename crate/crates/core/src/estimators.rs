//! Estimators of bias and variance for a training procedure treated as a
//! black box: conditional (seed-only), partitioned, and double bootstrap.

use crate::bregman::{NegativeEntropy, SimplexPoint};
use crate::decomposition::{
    closed_form_unchecked, conditional_decompose, log_primal_average, BiasVariance, ConditionalDecomposition,
};
use crate::error::{BvError, Result};
use crate::moments::{PredictionSet, Tag};
use crate::numerics::pairwise_sum;
use crate::seed::{derive_seed, rng_for};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};

// Seed-path tags, one per kind of random stream.
const BOOT_DATA: u64 = 0x10;
const BOOT_MODEL: u64 = 0x20;
const PARTITION_SHUFFLE: u64 = 0x30;
const PARTITION_MODEL: u64 = 0x31;
const CONDITIONAL_MODEL: u64 = 0x40;
const FRESH_DATA: u64 = 0x50;
const FRESH_MODEL: u64 = 0x51;

/// A labelled training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
    pub id: String,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<usize>, id: impl Into<String>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(BvError::validation("inputs", "dataset is empty"));
        }
        if inputs.len() != targets.len() {
            return Err(BvError::validation(
                "targets",
                format!("{} targets for {} inputs", targets.len(), inputs.len()),
            ));
        }
        Ok(Self {
            inputs,
            targets,
            id: id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn subset(&self, indices: &[usize], id: impl Into<String>) -> Self {
        Self {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            id: id.into(),
        }
    }
}

/// A training procedure: `(dataset, seed) ↦` per-example class probabilities
/// on a fixed evaluation set. Must be deterministic in `(dataset, seed)`.
pub trait Trainer: Sync {
    fn train(&self, data: &Dataset, seed: u64) -> Result<Vec<SimplexPoint<f64>>>;

    /// Trainers that cannot be invoked concurrently return `false`; their
    /// invocations are then serialised.
    fn thread_safe(&self) -> bool {
        true
    }
}

impl<F> Trainer for F
where
    F: Fn(&Dataset, u64) -> Result<Vec<SimplexPoint<f64>>> + Sync,
{
    fn train(&self, data: &Dataset, seed: u64) -> Result<Vec<SimplexPoint<f64>>> {
        self(data, seed)
    }
}

/// Wraps a trainer and counts invocations.
pub struct CountingTrainer<'a> {
    inner: &'a dyn Trainer,
    calls: AtomicUsize,
}

impl<'a> CountingTrainer<'a> {
    pub fn new(inner: &'a dyn Trainer) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Trainer for CountingTrainer<'_> {
    fn train(&self, data: &Dataset, seed: u64) -> Result<Vec<SimplexPoint<f64>>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.train(data, seed)
    }
    fn thread_safe(&self) -> bool {
        self.inner.thread_safe()
    }
}

/// Runs `job(i)` for `i in 0..n`, concurrently when the trainer allows it;
/// results come back in index order.
fn run_indexed<R: Send>(
    trainer: &dyn Trainer,
    n: usize,
    job: impl Fn(usize) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    if trainer.thread_safe() {
        (0..n).into_par_iter().map(job).collect()
    } else {
        (0..n).map(job).collect()
    }
}

/// Resamples `d` with replacement to the same size. The new id is `"{parent}+{seed}"`.
pub fn bootstrap_sample(d: &Dataset, seed: u64) -> Result<Dataset> {
    if d.is_empty() {
        return Err(BvError::validation("dataset", "cannot resample an empty dataset"));
    }
    let mut rng = rng_for(seed, &[]);
    let n = d.len();
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    Ok(d.subset(&idx, format!("{}+{}", d.id, seed)))
}

/// Trains `k` models with seeds `derive_seed(seed, path ++ [ℓ])` and averages
/// them in probability space. Returns per-example log-probabilities.
fn train_ensemble(trainer: &dyn Trainer, data: &Dataset, k: usize, seed: u64, path: &[u64]) -> Result<Vec<Vec<f64>>> {
    let members = (0..k)
        .map(|l| {
            let mut p = path.to_vec();
            p.push(l as u64);
            trainer.train(data, derive_seed(seed, &p))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_ex = members[0].len();
    if let Some(m) = members.iter().find(|m| m.len() != n_ex) {
        return Err(BvError::validation(
            "trainer",
            format!("returned {} predictions, expected {n_ex}", m.len()),
        ));
    }
    Ok((0..n_ex)
        .map(|e| {
            let lps: Vec<&[f64]> = members.iter().map(|m| m[e].log_probs()).collect();
            log_primal_average(&lps)
        })
        .collect())
}

/// Closed-form KL bias/variance over replicate predictions
/// `sets[replicate][example]`, averaged over examples.
pub fn replicate_bias_variance(sets: &[Vec<Vec<f64>>], labels: &[usize]) -> Result<BiasVariance<f64>> {
    let first = sets
        .first()
        .ok_or_else(|| BvError::validation("sets", "no replicates"))?;
    if first.len() != labels.len() {
        return Err(BvError::validation(
            "eval_labels",
            format!("{} labels for {} evaluation examples", labels.len(), first.len()),
        ));
    }
    if sets.iter().any(|s| s.len() != labels.len()) {
        return Err(BvError::validation("sets", "replicates disagree on example count"));
    }
    let c = first[0].len();
    if let Some(i) = labels.iter().position(|&y| y >= c) {
        return Err(BvError::Domain {
            index: i,
            reason: format!("label {} out of range for {c} classes", labels[i]),
        });
    }
    let per: Vec<BiasVariance<f64>> = (0..labels.len())
        .map(|e| {
            let lps: Vec<&[f64]> = sets.iter().map(|s| s[e].as_slice()).collect();
            closed_form_unchecked(&lps, labels[e])
        })
        .collect();
    let n = labels.len() as f64;
    Ok(BiasVariance {
        bias: pairwise_sum(&per.iter().map(|b| b.bias).collect::<Vec<_>>()) / n,
        variance: pairwise_sum(&per.iter().map(|b| b.variance).collect::<Vec<_>>()) / n,
    })
}

/// Level-1 estimate, mean level-2 estimate and the multiplicative correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub b1: f64,
    pub b2: f64,
    /// Corrective term `b1 / b2`.
    pub t: f64,
    /// Corrected estimate `t · b1`.
    pub b0: f64,
    /// Set when `b2` is zero up to rounding: no correction is applied and
    /// `b0 = b1`.
    pub degenerate: bool,
}

/// Level-2 estimates at or below this are treated as zero. The closed-form
/// estimator leaves rounding residue of order 1e-16 on identical replicates,
/// which would otherwise turn an exact zero into an arbitrary ratio.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

impl BootstrapEstimate {
    pub fn from_levels(b1: f64, b2: f64) -> Self {
        if b2 > DEGENERATE_FLOOR {
            let t = b1 / b2;
            Self {
                b1,
                b2,
                t,
                b0: t * b1,
                degenerate: false,
            }
        } else {
            Self {
                b1,
                b2,
                t: 1.0,
                b0: b1,
                degenerate: true,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleBootstrap {
    pub bias: BootstrapEstimate,
    pub variance: BootstrapEstimate,
    pub models_trained: usize,
}

/// Double-bootstrap bias and variance of `k`-member primal ensembles.
///
/// Level 1 resamples `T` into `T₁ … T_B`; level 2 resamples each `Tᵢ` into
/// `Tᵢ₁ … T_iB`. Estimates at both levels use the closed-form KL estimator;
/// the corrected value is `b1² / b2`, applied separately to bias and variance.
/// Trains exactly `B·k + B²·k` models.
pub fn double_bootstrap_estimate(
    trainer: &dyn Trainer,
    data: &Dataset,
    b: usize,
    k: usize,
    eval_labels: &[usize],
    seed: u64,
) -> Result<DoubleBootstrap> {
    if b < 2 {
        return Err(BvError::validation("B", "at least 2 bootstrap samples required"));
    }
    if k == 0 {
        return Err(BvError::validation("k", "ensemble size must be positive"));
    }
    let level1: Vec<(Dataset, Vec<Vec<f64>>, BiasVariance<f64>)> = run_indexed(trainer, b, |i| {
        let ti = bootstrap_sample(data, derive_seed(seed, &[BOOT_DATA, 1, i as u64]))?;
        let pred = train_ensemble(trainer, &ti, k, seed, &[BOOT_MODEL, 1, i as u64])?;
        let children = (0..b)
            .map(|j| {
                let tij = bootstrap_sample(&ti, derive_seed(seed, &[BOOT_DATA, 2, i as u64, j as u64]))?;
                train_ensemble(trainer, &tij, k, seed, &[BOOT_MODEL, 2, i as u64, j as u64])
            })
            .collect::<Result<Vec<_>>>()?;
        let level2 = replicate_bias_variance(&children, eval_labels)?;
        Ok((ti, pred, level2))
    })?;
    let preds: Vec<Vec<Vec<f64>>> = level1.iter().map(|l| l.1.clone()).collect();
    let first = replicate_bias_variance(&preds, eval_labels)?;
    let nb = b as f64;
    let b2_bias = pairwise_sum(&level1.iter().map(|l| l.2.bias).collect::<Vec<_>>()) / nb;
    let b2_var = pairwise_sum(&level1.iter().map(|l| l.2.variance).collect::<Vec<_>>()) / nb;
    Ok(DoubleBootstrap {
        bias: BootstrapEstimate::from_levels(first.bias, b2_bias),
        variance: BootstrapEstimate::from_levels(first.variance, b2_var),
        models_trained: b * k + b * b * k,
    })
}

/// Splits a deterministic shuffle of `T` into `P` equal disjoint subsets
/// (remainder dropped), trains a `k`-ensemble on each and estimates bias and
/// variance across the `P` prediction sets.
pub fn partition_estimate(
    trainer: &dyn Trainer,
    data: &Dataset,
    p: usize,
    k: usize,
    eval_labels: &[usize],
    seed: u64,
) -> Result<BiasVariance<f64>> {
    if p < 2 {
        return Err(BvError::validation("P", "at least 2 partitions required"));
    }
    if p > data.len() {
        return Err(BvError::validation(
            "P",
            format!("{p} partitions exceed {} training points", data.len()),
        ));
    }
    if k == 0 {
        return Err(BvError::validation("k", "ensemble size must be positive"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng_for(seed, &[PARTITION_SHUFFLE]));
    let size = data.len() / p;
    let sets = run_indexed(trainer, p, |i| {
        let part = data.subset(&order[i * size..(i + 1) * size], format!("{}#part{i}", data.id));
        train_ensemble(trainer, &part, k, seed, &[PARTITION_MODEL, i as u64])
    })?;
    replicate_bias_variance(&sets, eval_labels)
}

/// Seed-only estimate: `n_seeds` ensembles trained on the full `T`.
pub fn conditional_estimate(
    trainer: &dyn Trainer,
    data: &Dataset,
    n_seeds: usize,
    k: usize,
    eval_labels: &[usize],
    seed: u64,
) -> Result<BiasVariance<f64>> {
    if n_seeds < 2 {
        return Err(BvError::validation("n_seeds", "at least 2 seeds required"));
    }
    if k == 0 {
        return Err(BvError::validation("k", "ensemble size must be positive"));
    }
    let sets = run_indexed(trainer, n_seeds, |s| {
        train_ensemble(trainer, data, k, seed, &[CONDITIONAL_MODEL, s as u64])
    })?;
    replicate_bias_variance(&sets, eval_labels)
}

/// Reference bias/variance from `n_sets` fresh training sets, each produced by
/// `draw_set(derived seed)` and fitted with a `k`-ensemble.
pub fn fresh_set_estimate(
    trainer: &dyn Trainer,
    draw_set: &(dyn Fn(u64) -> Result<Dataset> + Sync),
    n_sets: usize,
    k: usize,
    eval_labels: &[usize],
    seed: u64,
) -> Result<BiasVariance<f64>> {
    if n_sets < 2 {
        return Err(BvError::validation("n_sets", "at least 2 training sets required"));
    }
    let sets = run_indexed(trainer, n_sets, |i| {
        let d = draw_set(derive_seed(seed, &[FRESH_DATA, i as u64]))?;
        train_ensemble(trainer, &d, k, seed, &[FRESH_MODEL, i as u64])
    })?;
    replicate_bias_variance(&sets, eval_labels)
}

/// Exact conditional decomposition on an enumerable world: every training set
/// in `training_sets` is equally likely, every seed in `seeds` is equally
/// likely, and `Z` is the training set. Per-example decompositions are
/// averaged over evaluation examples.
pub fn exact_conditional_gap(
    trainer: &dyn Trainer,
    training_sets: &[Dataset],
    seeds: &[u64],
    eval_labels: &[usize],
) -> Result<ConditionalDecomposition<f64>> {
    if training_sets.is_empty() || seeds.is_empty() {
        return Err(BvError::validation("training_sets/seeds", "must be non-empty"));
    }
    let jobs: Vec<(usize, u64)> = (0..training_sets.len())
        .flat_map(|t| seeds.iter().map(move |&s| (t, s)))
        .collect();
    let preds = run_indexed(trainer, jobs.len(), |j| {
        let (t, s) = jobs[j];
        trainer.train(&training_sets[t], s)
    })?;
    let n_ex = eval_labels.len();
    if preds.iter().any(|p| p.len() != n_ex) {
        return Err(BvError::validation("eval_labels", "length differs from trainer output"));
    }
    let c = preds[0][0].dim();
    let kl = NegativeEntropy::new(c);
    let per = (0..n_ex)
        .map(|e| {
            let points = preds.iter().map(|p| p[e].probs().to_vec()).collect();
            let tags = jobs
                .iter()
                .map(|&(t, s)| Tag {
                    seed: s,
                    train_id: training_sets[t].id.clone(),
                    group: Some(format!("{t:08}")),
                })
                .collect();
            let set = PredictionSet::with_tags(points, None, tags)?;
            let y = SimplexPoint::<f64>::one_hot(eval_labels[e], c)?;
            conditional_decompose(&kl, y.probs(), &set)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: fn(&ConditionalDecomposition<f64>) -> f64| {
        pairwise_sum(&per.iter().map(f).collect::<Vec<_>>()) / n_ex as f64
    };
    Ok(ConditionalDecomposition {
        conditional_bias: mean(|c| c.conditional_bias),
        conditional_variance: mean(|c| c.conditional_variance),
        gap: mean(|c| c.gap),
        total_bias: mean(|c| c.total_bias),
        total_variance: mean(|c| c.total_variance),
    })
}
