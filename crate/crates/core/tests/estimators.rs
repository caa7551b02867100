//! Estimator behaviour on toy worlds where the truth can be computed.

use bvdual::estimators::{exact_conditional_gap, fresh_set_estimate};
use bvdual::toylab::{ToyModelConfig, ToyTrainer, ToyWorld};
use bvdual::*;

fn world(train: usize, noise: f64, seed: u64) -> ToyWorld {
    ToyWorld {
        train_size: train,
        eval_size: 96,
        noise_scale: noise,
        master_seed: seed,
        ..ToyWorld::default()
    }
}

fn trainer(w: &ToyWorld, cfg: ToyModelConfig) -> ToyTrainer {
    ToyTrainer {
        config: cfg,
        n_classes: w.n_classes,
        eval_inputs: w.make().unwrap().eval.inputs,
    }
}

fn small_mlp() -> ToyModelConfig {
    ToyModelConfig {
        steps: 60,
        ..ToyModelConfig::mlp(1, 6)
    }
}

#[test]
fn gap_identity_on_an_enumerable_world() {
    let w = world(12, 1.0, 3);
    let sets: Vec<Dataset> = (0..4).map(|s| w.fresh_training_set(s).unwrap()).collect();
    let t = trainer(&w, small_mlp());
    let labels = w.make().unwrap().eval_labels;
    let c = exact_conditional_gap(&t, &sets, &[1, 2, 3], &labels).unwrap();
    assert!(c.gap > 0.0);
    assert!((c.conditional_bias - c.total_bias - c.gap).abs() <= 1e-9);
    assert!((c.total_variance - c.conditional_variance - c.gap).abs() <= 1e-9);
    assert!(c.residual().abs() <= 1e-9);
}

#[test]
fn conditional_estimate_leans_the_predicted_way() {
    let w = world(48, 1.0, 11);
    let t = trainer(&w, small_mlp());
    let sample = w.make().unwrap();
    let cond = conditional_estimate(&t, &sample.train, 24, 1, &sample.eval_labels, 5).unwrap();
    let draw = |s: u64| w.fresh_training_set(s);
    // Four independent blocks of fresh sets give the reference and its σ.
    let blocks: Vec<BiasVariance<f64>> = (0..4)
        .map(|b| fresh_set_estimate(&t, &draw, 50, 1, &sample.eval_labels, 100 + b).unwrap())
        .collect();
    let mean = |f: fn(&BiasVariance<f64>) -> f64| blocks.iter().map(f).sum::<f64>() / 4.0;
    let sd = |f: fn(&BiasVariance<f64>) -> f64, m: f64| {
        (blocks.iter().map(|b| (f(b) - m).powi(2)).sum::<f64>() / 3.0).sqrt() / 2.0
    };
    let (tb, tv) = (mean(|b| b.bias), mean(|b| b.variance));
    let (sb, sv) = (sd(|b| b.bias, tb), sd(|b| b.variance, tv));
    assert!(cond.bias >= tb - 3.0 * sb, "bias {} vs {tb} ± {sb}", cond.bias);
    assert!(
        cond.variance <= tv + 3.0 * sv,
        "variance {} vs {tv} ± {sv}",
        cond.variance
    );
}

#[test]
fn partition_bias_shrinks_with_subset_size() {
    // Well separated classes: a linearly separable concept up to rare outliers.
    let w = world(256, 0.35, 2);
    let cfg = ToyModelConfig {
        steps: 150,
        l2: 1e-2,
        ..ToyModelConfig::logistic()
    };
    let t = trainer(&w, cfg);
    let sample = w.make().unwrap();
    let small = partition_estimate(&t, &sample.train, 16, 1, &sample.eval_labels, 9).unwrap();
    let large = partition_estimate(&t, &sample.train, 4, 1, &sample.eval_labels, 9).unwrap();
    assert!(large.bias < small.bias, "{} !< {}", large.bias, small.bias);

    // Same ordering for the fresh-set truth at subset sizes 16 and 64.
    let truth = |n: usize| {
        let wn = ToyWorld {
            train_size: n,
            ..w.clone()
        };
        let draw = move |s: u64| wn.fresh_training_set(s);
        fresh_set_estimate(&t, &draw, 40, 1, &sample.eval_labels, 4).unwrap()
    };
    assert!(truth(64).bias < truth(16).bias);
}

#[test]
fn two_seed_minimum_is_additive() {
    let w = world(32, 1.0, 1);
    let t = trainer(&w, small_mlp());
    let s = w.make().unwrap();
    // Record what the estimator trains so the mean NLL can be recomputed directly.
    let seen = std::sync::Mutex::new(Vec::new());
    let recording = |d: &Dataset, seed: u64| {
        let p = t.train(d, seed)?;
        seen.lock().unwrap().push(p.clone());
        Ok(p)
    };
    let e = conditional_estimate(&recording, &s.train, 2, 1, &s.eval_labels, 0).unwrap();
    let preds = seen.into_inner().unwrap();
    assert_eq!(preds.len(), 2);
    let n = s.eval_labels.len() as f64;
    let nll: f64 = preds
        .iter()
        .map(|p| {
            p.iter()
                .zip(&s.eval_labels)
                .map(|(q, &y)| -q.log_probs()[y])
                .sum::<f64>()
                / n
        })
        .sum::<f64>()
        / 2.0;
    assert!(
        (e.bias + e.variance - nll).abs() < 1e-9,
        "{} vs {nll}",
        e.bias + e.variance
    );
}
