//! End-to-end sweeps: train model pools on a toy world, log their
//! predictions, and run one analysis over the logs.
//!
//! An experiment spec is a single JSON document:
//!
//! ```json
//! {
//!   "world": { "train_size": 256, "eval_size": 512 },
//!   "pools": [
//!     { "name": "fixed", "members": [ { "model": { "depth": 2 }, "seeds": 24 } ] },
//!     { "name": "mixed", "members": [
//!         { "model": { "depth": 1 }, "seeds": 8, "label": "d1" },
//!         { "model": { "depth": 2 }, "seeds": 8, "label": "d2" },
//!         { "model": { "depth": 3 }, "seeds": 8, "label": "d3" } ] }
//!   ],
//!   "analysis": { "kind": "decompose", "group_by": "group" },
//!   "repetitions": 3,
//!   "seed": 7
//! }
//! ```
//!
//! Repetition `r` uses world seed `world.master_seed + r` and model seeds
//! `derive_seed(seed, [r, pool, member, train_set, s])`.

use crate::bregman::{generator_by_name, SimplexPoint};
use crate::decomposition::{conditional_decompose, decompose, BiasVariance, ConditionalDecomposition, Decomposition};
use crate::ensembling::{ensemble_curve, greedy_select_with_trace, EnsembleCurve, EnsembleMode, ModelPool, Sampling};
use crate::error::{BvError, Result};
use crate::estimators::{
    conditional_estimate, double_bootstrap_estimate, fresh_set_estimate, Dataset, DoubleBootstrap,
};
use crate::io::{fmt_sig, render_labels, sha256_hex, PredictionLog, Report, Table};
use crate::moments::{GroupBy, PredictionSet, Tag};
use crate::numerics::pairwise_sum;
use crate::seed::derive_seed;
use crate::toylab::model::{fit, ToyModelConfig, ToyTrainer};
use crate::toylab::world::{ToyWorld, WorldSample};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

const FRESH_SETS: u64 = 0xF0;
const CURVE_DRAWS: u64 = 0xC0;
const BOOTSTRAP: u64 = 0xB0;

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    #[serde(default)]
    pub model: ToyModelConfig,
    /// Models trained per training set.
    #[serde(default = "one")]
    pub seeds: usize,
    /// 1 uses the world's fixed training set; more draws that many fresh
    /// training sets, shared by every member and pool of a repetition.
    #[serde(default = "one")]
    pub train_sets: usize,
    /// Group tag written to the log; defaults to `m{index}`.
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub name: String,
    pub members: Vec<MemberSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    /// Only train and write logs.
    None,
    /// Per-pool decomposition averaged over evaluation examples, optionally
    /// conditioned on a tag.
    Decompose {
        #[serde(default)]
        group_by: Option<GroupBy>,
    },
    /// Ensemble-size sweep per pool and mode.
    Curve {
        modes: Vec<EnsembleMode>,
        ks: Vec<usize>,
        draws: usize,
        #[serde(default)]
        with_replacement: bool,
    },
    /// Double bootstrap against the conditional estimate and a fresh-set
    /// reference. Uses the first member's model config; pools are not trained.
    Bootstrap {
        b: usize,
        k: usize,
        n_seeds: usize,
        truth_sets: usize,
    },
    /// Greedy selection on even evaluation examples, scored on odd ones.
    Greedy { budget: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub world: ToyWorld,
    pub pools: Vec<PoolSpec>,
    pub analysis: Analysis,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentSpec {
    /// One pool of 64 single-hidden-layer networks on the default world.
    fn default() -> Self {
        Self {
            world: ToyWorld::default(),
            pools: vec![PoolSpec {
                name: "default".into(),
                members: vec![MemberSpec {
                    model: ToyModelConfig::default(),
                    seeds: 64,
                    train_sets: 1,
                    label: None,
                }],
            }],
            analysis: Analysis::Decompose { group_by: None },
            repetitions: 1,
            seed: 0,
        }
    }
}

fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

fn prefix_field(err: BvError, prefix: &str) -> BvError {
    match err {
        BvError::Validation { field, message } => BvError::Validation {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BvError::Validation {
            field: "spec".into(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    /// Checks every field; errors name the offending path, e.g.
    /// `pools[1].members[0].seeds`.
    pub fn validate(&self) -> Result<()> {
        self.world.validate().map_err(|e| prefix_field(e, "world"))?;
        if self.pools.is_empty() {
            return Err(BvError::validation("pools", "model grid is empty"));
        }
        if self.repetitions == 0 {
            return Err(BvError::validation("repetitions", "must be at least 1"));
        }
        let mut names = std::collections::BTreeSet::new();
        for (p, pool) in self.pools.iter().enumerate() {
            if !is_token(&pool.name) {
                return Err(BvError::validation(
                    format!("pools[{p}].name"),
                    "use letters, digits, '_', '-' or '.'",
                ));
            }
            if !names.insert(&pool.name) {
                return Err(BvError::validation(format!("pools[{p}].name"), "duplicate pool name"));
            }
            if pool.members.is_empty() {
                return Err(BvError::validation(
                    format!("pools[{p}].members"),
                    "model grid is empty",
                ));
            }
            for (m, member) in pool.members.iter().enumerate() {
                let at = format!("pools[{p}].members[{m}]");
                member.model.validate().map_err(|e| prefix_field(e, &at))?;
                if member.seeds == 0 {
                    return Err(BvError::validation(format!("{at}.seeds"), "must be at least 1"));
                }
                if member.train_sets == 0 {
                    return Err(BvError::validation(format!("{at}.train_sets"), "must be at least 1"));
                }
                if let Some(l) = &member.label {
                    if !is_token(l) {
                        return Err(BvError::validation(
                            format!("{at}.label"),
                            "use letters, digits, '_', '-' or '.'",
                        ));
                    }
                }
            }
        }
        match &self.analysis {
            Analysis::None | Analysis::Decompose { .. } => {}
            Analysis::Curve {
                modes,
                ks,
                draws,
                with_replacement,
            } => {
                if modes.is_empty() {
                    return Err(BvError::validation("analysis.modes", "no ensemble modes"));
                }
                if ks.is_empty() || ks.contains(&0) {
                    return Err(BvError::validation("analysis.ks", "sizes must be positive"));
                }
                if *draws == 0 {
                    return Err(BvError::validation("analysis.draws", "must be at least 1"));
                }
                if !with_replacement {
                    let kmax = ks.iter().max().copied().unwrap_or(0);
                    for (p, pool) in self.pools.iter().enumerate() {
                        if kmax > pool_size(pool) {
                            return Err(BvError::validation(
                                "analysis.ks",
                                format!(
                                    "k = {kmax} exceeds the {} models of pools[{p}] without with_replacement",
                                    pool_size(pool)
                                ),
                            ));
                        }
                    }
                }
            }
            Analysis::Bootstrap {
                b,
                k,
                n_seeds,
                truth_sets,
            } => {
                if *b < 2 {
                    return Err(BvError::validation("analysis.b", "must be at least 2"));
                }
                if *k == 0 {
                    return Err(BvError::validation("analysis.k", "must be at least 1"));
                }
                if *n_seeds < 2 {
                    return Err(BvError::validation("analysis.n_seeds", "must be at least 2"));
                }
                if *truth_sets < 2 {
                    return Err(BvError::validation("analysis.truth_sets", "must be at least 2"));
                }
            }
            Analysis::Greedy { budget } => {
                if *budget == 0 {
                    return Err(BvError::validation("analysis.budget", "must be at least 1"));
                }
                if self.world.eval_size < 2 {
                    return Err(BvError::validation(
                        "world.eval_size",
                        "greedy needs at least 2 evaluation points",
                    ));
                }
            }
        }
        Ok(())
    }
}

fn pool_size(pool: &PoolSpec) -> usize {
    pool.members.iter().map(|m| m.seeds * m.train_sets).sum()
}

/// Trained predictions of one pool in one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRun {
    pub name: String,
    pub repetition: usize,
    pub log: PredictionLog,
}

impl PoolRun {
    pub fn pool(&self) -> Result<ModelPool<f64>> {
        self.log.to_pool()
    }
}

/// Typed analysis results, one per (pool, repetition) or per repetition.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Decompose {
        pool: String,
        repetition: usize,
        result: Decomposition<f64>,
        conditional: Option<ConditionalDecomposition<f64>>,
    },
    Curve {
        pool: String,
        repetition: usize,
        curve: EnsembleCurve<f64>,
    },
    Bootstrap {
        repetition: usize,
        estimate: DoubleBootstrap,
        conditional: BiasVariance<f64>,
        truth: BiasVariance<f64>,
    },
    Greedy {
        pool: String,
        repetition: usize,
        selected: Vec<usize>,
        val_nll: Vec<f64>,
        test_nll: f64,
    },
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<PoolRun>,
    /// Evaluation labels per repetition.
    pub eval_labels: Vec<Vec<usize>>,
    pub outcomes: Vec<Outcome>,
    pub report: Report,
    pub files: Vec<PathBuf>,
}

impl ToyWorld {
    fn repetition(&self, r: usize) -> Self {
        Self {
            master_seed: self.master_seed.wrapping_add(r as u64),
            ..self.clone()
        }
    }
}

/// Trains every pool of the spec for repetition `r`.
pub fn train_pools(spec: &ExperimentSpec, r: usize) -> Result<(WorldSample, Vec<PoolRun>)> {
    spec.validate()?;
    let world = spec.world.repetition(r);
    let sample = world.make()?;
    let r64 = r as u64;
    let max_sets = spec
        .pools
        .iter()
        .flat_map(|p| p.members.iter().map(|m| m.train_sets))
        .max()
        .unwrap_or(1);
    let fresh: Vec<Dataset> = if max_sets > 1 {
        (0..max_sets)
            .into_par_iter()
            .map(|t| world.fresh_training_set(derive_seed(spec.seed, &[r64, FRESH_SETS, t as u64])))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut runs = Vec::with_capacity(spec.pools.len());
    for (p, pool) in spec.pools.iter().enumerate() {
        let jobs: Vec<(usize, usize, usize)> = pool
            .members
            .iter()
            .enumerate()
            .flat_map(|(m, mem)| (0..mem.train_sets).flat_map(move |t| (0..mem.seeds).map(move |s| (m, t, s))))
            .collect();
        let trained: Vec<(Tag, Vec<SimplexPoint<f64>>)> = jobs
            .par_iter()
            .map(|&(m, t, s)| {
                let member = &pool.members[m];
                let data = if member.train_sets == 1 {
                    &sample.train
                } else {
                    &fresh[t]
                };
                let seed = derive_seed(spec.seed, &[r64, p as u64, m as u64, t as u64, s as u64]);
                let model = fit(&member.model, data, world.n_classes, seed)
                    .map_err(|e| prefix_field(e, &format!("pools[{p}].members[{m}]")))?;
                let tag = Tag {
                    seed,
                    train_id: data.id.clone(),
                    group: Some(member.label.clone().unwrap_or_else(|| format!("m{m}"))),
                };
                Ok((tag, model.predict(&sample.eval.inputs)?))
            })
            .collect::<Result<_>>()?;
        let (tags, preds): (Vec<Tag>, Vec<_>) = trained.into_iter().unzip();
        let log = PredictionLog::from_pool(&ModelPool::new(preds)?, tags)?;
        runs.push(PoolRun {
            name: pool.name.clone(),
            repetition: r,
            log,
        });
    }
    Ok((sample, runs))
}

fn mean_over<R>(items: &[R], f: impl Fn(&R) -> f64) -> f64 {
    pairwise_sum(&items.iter().map(f).collect::<Vec<_>>()) / items.len() as f64
}

/// Per-example and averaged decompositions of a logged pool.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDecomposition {
    pub per_example: Vec<(Decomposition<f64>, Option<ConditionalDecomposition<f64>>)>,
    pub aggregate: Decomposition<f64>,
    pub conditional: Option<ConditionalDecomposition<f64>>,
}

/// Decomposes every example of `log` against its one-hot label under the
/// named generator (`kl` or `mse`; `mse` reads the rows as probability
/// vectors), optionally conditioned on a tag.
pub fn decompose_log(
    log: &PredictionLog,
    labels: &[usize],
    loss: &str,
    group_by: Option<GroupBy>,
) -> Result<LogDecomposition> {
    if labels.len() != log.header.n_examples {
        return Err(BvError::validation(
            "labels",
            format!("{} labels for {} examples", labels.len(), log.header.n_examples),
        ));
    }
    let c = log.header.n_classes;
    if let Some(i) = labels.iter().position(|&y| y >= c) {
        return Err(BvError::validation(
            "labels",
            format!("label {} at position {i} out of range for {c} classes", labels[i]),
        ));
    }
    if loss != "kl" && loss != "mse" {
        return Err(BvError::usage(format!("unknown loss `{loss}`, expected kl or mse")));
    }
    let gen = generator_by_name::<f64>(loss, c)?;
    let per_example: Vec<(Decomposition<f64>, Option<ConditionalDecomposition<f64>>)> = (0..labels.len())
        .into_par_iter()
        .map(|e| {
            let y = SimplexPoint::<f64>::one_hot(labels[e], c)?;
            let set = log.example_set(e)?;
            let label_law = PredictionSet::uniform(vec![y.probs().to_vec()])?;
            let d = decompose(gen.as_ref(), &label_law, &set)?;
            let cd = match group_by {
                Some(g) => Some(conditional_decompose(gen.as_ref(), y.probs(), &set.regroup(g))?),
                None => None,
            };
            Ok((d, cd))
        })
        .collect::<Result<_>>()?;
    let aggregate = Decomposition {
        bayes_error: mean_over(&per_example, |p| p.0.bayes_error),
        bias: mean_over(&per_example, |p| p.0.bias),
        variance: mean_over(&per_example, |p| p.0.variance),
        total: mean_over(&per_example, |p| p.0.total),
    };
    let conditional = group_by.map(|_| {
        let get = |f: fn(&ConditionalDecomposition<f64>) -> f64| {
            mean_over(&per_example, |p| f(p.1.as_ref().expect("conditional computed")))
        };
        ConditionalDecomposition {
            conditional_bias: get(|c| c.conditional_bias),
            conditional_variance: get(|c| c.conditional_variance),
            gap: get(|c| c.gap),
            total_bias: get(|c| c.total_bias),
            total_variance: get(|c| c.total_variance),
        }
    });
    Ok(LogDecomposition {
        per_example,
        aggregate,
        conditional,
    })
}

fn example_subset(pool: &ModelPool<f64>, keep: &[usize]) -> Result<ModelPool<f64>> {
    ModelPool::new(
        pool.models()
            .iter()
            .map(|m| keep.iter().map(|&e| m[e].clone()).collect())
            .collect(),
    )
}

fn primal_nll(pool: &ModelPool<f64>, members: &[usize], labels: &[usize]) -> f64 {
    let lp = pool.combine(members, EnsembleMode::Primal);
    mean_over(&lp.iter().zip(labels).collect::<Vec<_>>(), |(l, &y)| -l[y])
}

fn g6(x: f64) -> String {
    fmt_sig(x, 6)
}

fn analyse(
    spec: &ExperimentSpec,
    r: usize,
    sample: &WorldSample,
    runs: &[PoolRun],
    outcomes: &mut Vec<Outcome>,
) -> Result<()> {
    let labels = &sample.eval_labels;
    match &spec.analysis {
        Analysis::None => {}
        Analysis::Decompose { group_by } => {
            for run in runs {
                let d = decompose_log(&run.log, labels, "kl", *group_by)?;
                outcomes.push(Outcome::Decompose {
                    pool: run.name.clone(),
                    repetition: r,
                    result: d.aggregate,
                    conditional: d.conditional,
                });
            }
        }
        Analysis::Curve {
            modes,
            ks,
            draws,
            with_replacement,
        } => {
            let sampling = if *with_replacement {
                Sampling::WithReplacement
            } else {
                Sampling::WithoutReplacement
            };
            for (p, run) in runs.iter().enumerate() {
                let pool = run.pool()?;
                for &mode in modes {
                    let seed = derive_seed(spec.seed, &[r as u64, CURVE_DRAWS, p as u64]);
                    let curve = ensemble_curve(&pool, labels, mode, ks, *draws, seed, sampling)?;
                    outcomes.push(Outcome::Curve {
                        pool: run.name.clone(),
                        repetition: r,
                        curve,
                    });
                }
            }
        }
        Analysis::Bootstrap {
            b,
            k,
            n_seeds,
            truth_sets,
        } => {
            let world = spec.world.repetition(r);
            let trainer = ToyTrainer {
                config: spec.pools[0].members[0].model.clone(),
                n_classes: world.n_classes,
                eval_inputs: sample.eval.inputs.clone(),
            };
            let seed = derive_seed(spec.seed, &[r as u64, BOOTSTRAP]);
            let estimate = double_bootstrap_estimate(&trainer, &sample.train, *b, *k, labels, seed)?;
            let conditional = conditional_estimate(&trainer, &sample.train, *n_seeds, *k, labels, seed)?;
            let draw = |s: u64| world.fresh_training_set(s);
            let truth = fresh_set_estimate(&trainer, &draw, *truth_sets, *k, labels, seed)?;
            outcomes.push(Outcome::Bootstrap {
                repetition: r,
                estimate,
                conditional,
                truth,
            });
        }
        Analysis::Greedy { budget } => {
            let val: Vec<usize> = (0..labels.len()).step_by(2).collect();
            let test: Vec<usize> = (1..labels.len()).step_by(2).collect();
            let val_labels: Vec<usize> = val.iter().map(|&e| labels[e]).collect();
            let test_labels: Vec<usize> = test.iter().map(|&e| labels[e]).collect();
            for run in runs {
                let pool = run.pool()?;
                let (selected, val_nll) =
                    greedy_select_with_trace(&example_subset(&pool, &val)?, &val_labels, *budget)?;
                let test_nll = primal_nll(&example_subset(&pool, &test)?, &selected, &test_labels);
                outcomes.push(Outcome::Greedy {
                    pool: run.name.clone(),
                    repetition: r,
                    selected,
                    val_nll,
                    test_nll,
                });
            }
        }
    }
    Ok(())
}

fn tabulate(outcomes: &[Outcome]) -> Vec<Table> {
    let mut tables: Vec<Table> = Vec::new();
    let mut table = |name: &str, cols: &[&str]| -> usize {
        if let Some(i) = tables.iter().position(|t| t.name == name) {
            return i;
        }
        tables.push(Table::new(name, cols));
        tables.len() - 1
    };
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Decompose {
                pool,
                repetition,
                result: d,
                conditional,
            } => match conditional {
                None => rows.push((
                    table("decompose", &["pool", "rep", "bayes", "bias", "variance", "total"]),
                    vec![
                        pool.clone(),
                        repetition.to_string(),
                        g6(d.bayes_error),
                        g6(d.bias),
                        g6(d.variance),
                        g6(d.total),
                    ],
                )),
                Some(c) => rows.push((
                    table(
                        "decompose",
                        &[
                            "pool",
                            "rep",
                            "bayes",
                            "bias",
                            "variance",
                            "total",
                            "cond_bias",
                            "cond_variance",
                            "gap",
                        ],
                    ),
                    vec![
                        pool.clone(),
                        repetition.to_string(),
                        g6(d.bayes_error),
                        g6(d.bias),
                        g6(d.variance),
                        g6(d.total),
                        g6(c.conditional_bias),
                        g6(c.conditional_variance),
                        g6(c.gap),
                    ],
                )),
            },
            Outcome::Curve {
                pool,
                repetition,
                curve,
            } => {
                let t = table(
                    "curve",
                    &[
                        "pool",
                        "rep",
                        "mode",
                        "k",
                        "bias",
                        "variance",
                        "nll",
                        "bias_se",
                        "variance_se",
                        "nll_se",
                    ],
                );
                for i in 0..curve.ks.len() {
                    rows.push((
                        t,
                        vec![
                            pool.clone(),
                            repetition.to_string(),
                            curve.mode.to_string(),
                            curve.ks[i].to_string(),
                            g6(curve.bias[i]),
                            g6(curve.variance[i]),
                            g6(curve.nll[i]),
                            g6(curve.bias_se[i]),
                            g6(curve.variance_se[i]),
                            g6(curve.nll_se[i]),
                        ],
                    ));
                }
            }
            Outcome::Bootstrap {
                repetition,
                estimate,
                conditional,
                truth,
            } => {
                let t = table(
                    "bootstrap",
                    &[
                        "rep",
                        "quantity",
                        "b1",
                        "b2",
                        "t",
                        "b0",
                        "degenerate",
                        "conditional",
                        "truth",
                    ],
                );
                for (name, e, c, tr) in [
                    ("bias", &estimate.bias, conditional.bias, truth.bias),
                    ("variance", &estimate.variance, conditional.variance, truth.variance),
                ] {
                    rows.push((
                        t,
                        vec![
                            repetition.to_string(),
                            name.into(),
                            g6(e.b1),
                            g6(e.b2),
                            g6(e.t),
                            g6(e.b0),
                            e.degenerate.to_string(),
                            g6(c),
                            g6(tr),
                        ],
                    ));
                }
            }
            Outcome::Greedy {
                pool,
                repetition,
                selected,
                val_nll,
                test_nll,
            } => {
                let t = table("greedy", &["pool", "rep", "step", "model", "val_nll", "test_nll"]);
                for (i, (&m, &v)) in selected.iter().zip(val_nll).enumerate() {
                    let last = i + 1 == selected.len();
                    rows.push((
                        t,
                        vec![
                            pool.clone(),
                            repetition.to_string(),
                            (i + 1).to_string(),
                            m.to_string(),
                            g6(v),
                            if last { g6(*test_nll) } else { "-".into() },
                        ],
                    ));
                }
            }
        }
    }
    for (t, row) in rows {
        tables[t].push(row);
    }
    tables
}

/// Runs every repetition of `spec`. With `out_dir`, writes one prediction log
/// per pool and repetition (`{pool}_r{r}.predlog`), the evaluation labels
/// (`labels_r{r}.txt`) and `report.json`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut runs = Vec::new();
    let mut eval_labels = Vec::new();
    let mut outcomes = Vec::new();
    for r in 0..spec.repetitions {
        let (sample, rep_runs) = if matches!(spec.analysis, Analysis::Bootstrap { .. }) {
            (spec.world.repetition(r).make()?, Vec::new())
        } else {
            train_pools(spec, r)?
        };
        analyse(spec, r, &sample, &rep_runs, &mut outcomes)?;
        eval_labels.push(sample.eval_labels);
        runs.extend(rep_runs);
    }

    let spec_json = serde_json::to_string(spec).expect("spec serialises");
    let config = serde_json::to_value(spec).expect("spec serialises");
    let mut report = Report::new("bv experiment", config, Some(spec.seed));
    report
        .provenance
        .input_digests
        .insert("spec".into(), sha256_hex(spec_json.as_bytes()));
    report.tables = tabulate(&outcomes);
    for o in &outcomes {
        if let Outcome::Bootstrap {
            repetition, estimate, ..
        } = o
        {
            for (name, e) in [("bias", &estimate.bias), ("variance", &estimate.variance)] {
                if e.degenerate {
                    report.warnings.push(format!(
                        "repetition {repetition}: {name} b2 ≤ 0, correction not applied"
                    ));
                }
            }
        }
    }

    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for run in &runs {
            let path = dir.join(format!("{}_r{}.predlog", run.name, run.repetition));
            run.log.write_file(&path)?;
            files.push(path);
        }
        for (r, labels) in eval_labels.iter().enumerate() {
            let path = dir.join(format!("labels_r{r}.txt"));
            std::fs::write(&path, render_labels(labels))?;
            files.push(path);
        }
        let path = dir.join("report.json");
        std::fs::write(&path, report.to_json())?;
        files.push(path);
    }
    Ok(ExperimentOutput {
        runs,
        eval_labels,
        outcomes,
        report,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(analysis: Analysis) -> ExperimentSpec {
        ExperimentSpec {
            world: ToyWorld {
                train_size: 48,
                eval_size: 24,
                ..ToyWorld::default()
            },
            pools: vec![PoolSpec {
                name: "p".into(),
                members: vec![MemberSpec {
                    model: ToyModelConfig {
                        steps: 30,
                        ..ToyModelConfig::mlp(1, 4)
                    },
                    seeds: 4,
                    train_sets: 1,
                    label: None,
                }],
            }],
            analysis,
            repetitions: 1,
            seed: 5,
        }
    }

    #[test]
    fn empty_grid_is_rejected_with_field_path() {
        let mut spec = small_spec(Analysis::None);
        spec.pools.clear();
        assert!(matches!(spec.validate(), Err(BvError::Validation { field, .. }) if field == "pools"));
        let mut spec = small_spec(Analysis::None);
        spec.pools[0].members.clear();
        assert!(matches!(spec.validate(), Err(BvError::Validation { field, .. }) if field == "pools[0].members"));
        let mut spec = small_spec(Analysis::None);
        spec.pools[0].members[0].seeds = 0;
        assert!(matches!(
            spec.validate(),
            Err(BvError::Validation { field, .. }) if field == "pools[0].members[0].seeds"
        ));
    }

    #[test]
    fn spec_json_round_trip_and_unknown_fields() {
        let spec = small_spec(Analysis::Curve {
            modes: vec![EnsembleMode::Primal, EnsembleMode::Dual],
            ks: vec![1, 2],
            draws: 3,
            with_replacement: false,
        });
        assert_eq!(ExperimentSpec::from_json(&spec.to_json()).unwrap(), spec);
        let bad = r#"{"pools": [], "analysis": {"kind": "none"}, "bogus": 1}"#;
        assert!(ExperimentSpec::from_json(bad).is_err());
    }

    #[test]
    fn replays_identically() {
        let spec = small_spec(Analysis::Decompose {
            group_by: Some(GroupBy::Seed),
        });
        let a = run_experiment(&spec, None).unwrap();
        let b = run_experiment(&spec, None).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.runs, b.runs);
        let log = &a.runs[0].log;
        assert_eq!(log.header.n_models, 4);
        assert_eq!(log.header.n_examples, 24);
        match &a.outcomes[0] {
            Outcome::Decompose {
                result, conditional, ..
            } => {
                assert!(result.residual().abs() < 1e-9);
                // One model per seed: the conditional laws are point masses.
                let c = conditional.unwrap();
                assert!(c.conditional_variance.abs() < 1e-12);
                assert!((c.gap - result.variance).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn writes_logs_labels_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec(Analysis::Greedy { budget: 3 });
        let out = run_experiment(&spec, Some(dir.path())).unwrap();
        assert_eq!(out.files.len(), 3);
        let back = PredictionLog::read_file(&dir.path().join("p_r0.predlog")).unwrap();
        assert_eq!(back, out.runs[0].log);
        assert!(out.report.table("greedy").is_some());
    }

    #[test]
    fn curve_k1_matches_decompose() {
        let spec = small_spec(Analysis::Curve {
            modes: vec![EnsembleMode::Primal],
            ks: vec![1],
            draws: 10,
            with_replacement: false,
        });
        let out = run_experiment(&spec, None).unwrap();
        let d = decompose_log(&out.runs[0].log, &out.eval_labels[0], "kl", None)
            .unwrap()
            .aggregate;
        match &out.outcomes[0] {
            Outcome::Curve { curve, .. } => {
                assert!(curve.enumerated[0]);
                assert!((curve.bias[0] - d.bias).abs() < 1e-9);
                assert!((curve.variance[0] - d.variance).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }
}
