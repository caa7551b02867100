//! Small softmax classifiers trained by full-batch gradient descent.

use crate::bregman::SimplexPoint;
use crate::error::{BvError, Result};
use crate::estimators::{Dataset, Trainer};
use crate::numerics::log_softmax;
use crate::seed::rng_for;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyModelConfig {
    pub kind: ModelKind,
    /// Hidden units per layer (mlp only).
    pub hidden_width: usize,
    /// Number of hidden layers (mlp only).
    pub depth: usize,
    /// ℓ₂ penalty on weight matrices (biases are not penalised).
    pub l2: f64,
    pub label_smoothing: f64,
    pub steps: usize,
    pub step_size: f64,
    /// Multiplier on the He-normal initialisation scale; 0 gives a zero init.
    pub init_scale: f64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden_width: 16,
            depth: 1,
            l2: 1e-3,
            label_smoothing: 0.0,
            steps: 200,
            step_size: 0.5,
            init_scale: 1.0,
        }
    }
}

impl ToyModelConfig {
    pub fn logistic() -> Self {
        Self {
            kind: ModelKind::Logistic,
            ..Self::default()
        }
    }

    pub fn mlp(depth: usize, hidden_width: usize) -> Self {
        Self {
            kind: ModelKind::Mlp,
            depth,
            hidden_width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ModelKind::Mlp && (self.depth == 0 || self.hidden_width == 0) {
            return Err(BvError::validation(
                "model.depth",
                "mlp needs depth ≥ 1 and hidden_width ≥ 1",
            ));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(BvError::validation("model.l2", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(BvError::validation("model.label_smoothing", "must lie in [0, 1)"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(BvError::validation("model.step_size", "must be positive"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(BvError::validation("model.init_scale", "must be non-negative"));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    fn widths(&self, input_dim: usize, n_classes: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        if self.kind == ModelKind::Mlp {
            w.extend(std::iter::repeat(self.hidden_width).take(self.depth));
        }
        w.push(n_classes);
        w
    }
}

/// A feed-forward ReLU network whose parameters live in one flat vector:
/// for each layer, the weight matrix (row-major, `out × in`) then the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    widths: Vec<usize>,
    pub params: Vec<f64>,
}

impl ToyModel {
    /// He-normal weights scaled by `cfg.init_scale`, zero biases.
    pub fn init(cfg: &ToyModelConfig, input_dim: usize, n_classes: usize, seed: u64) -> Self {
        let widths = cfg.widths(input_dim, n_classes);
        let mut rng = rng_for(seed, &[]);
        let mut params = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let std = cfg.init_scale * (2.0 / fan_in as f64).sqrt();
            if std > 0.0 {
                let normal = Normal::new(0.0, std).expect("positive std");
                params.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
            } else {
                params.extend(std::iter::repeat(0.0).take(fan_in * fan_out));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self { widths, params }
    }

    pub fn n_classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        // (weight offset, bias offset, in, out)
        let mut off = 0;
        (0..self.widths.len() - 1)
            .map(|l| {
                let (i, o) = (self.widths[l], self.widths[l + 1]);
                let w = off;
                off += i * o;
                let b = off;
                off += o;
                (w, b, i, o)
            })
            .collect()
    }

    /// Pre-activations of every layer for one input.
    fn forward_one(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.layer_offsets();
        let mut pre = Vec::with_capacity(layers.len());
        let mut act = x.to_vec();
        for (l, &(w, b, n_in, n_out)) in layers.iter().enumerate() {
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &self.params[w + o * n_in..w + (o + 1) * n_in];
                    self.params[b + o] + row.iter().zip(&act).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l + 1 < layers.len() {
                act = z.iter().map(|&v| v.max(0.0)).collect();
            }
            pre.push(z);
        }
        pre
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward_one(x).pop().unwrap()
    }

    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<SimplexPoint<f64>>> {
        inputs
            .iter()
            .map(|x| SimplexPoint::from_logits(&self.logits(x)))
            .collect()
    }

    /// Regularised training objective and its gradient:
    /// mean smoothed cross-entropy plus `(l2/2)·Σ W²`.
    pub fn loss_and_grad(&self, data: &Dataset, l2: f64, smoothing: f64) -> (f64, Vec<f64>) {
        let layers = self.layer_offsets();
        let c = self.n_classes();
        let n = data.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (x, &y) in data.inputs.iter().zip(&data.targets) {
            let pre = self.forward_one(x);
            let logp = log_softmax(pre.last().unwrap());
            let mut delta: Vec<f64> = (0..c)
                .map(|j| {
                    let t = smoothing / c as f64 + if j == y { 1.0 - smoothing } else { 0.0 };
                    loss -= t * logp[j] / n;
                    (logp[j].exp() - t) / n
                })
                .collect();
            for l in (0..layers.len()).rev() {
                let (w, b, n_in, n_out) = layers[l];
                let input: Vec<f64> = if l == 0 {
                    x.clone()
                } else {
                    pre[l - 1].iter().map(|&v| v.max(0.0)).collect()
                };
                for o in 0..n_out {
                    grad[b + o] += delta[o];
                    let row = &mut grad[w + o * n_in..w + (o + 1) * n_in];
                    for (g, &a) in row.iter_mut().zip(&input) {
                        *g += delta[o] * a;
                    }
                }
                if l > 0 {
                    let mut back = vec![0.0; n_in];
                    for o in 0..n_out {
                        let row = &self.params[w + o * n_in..w + (o + 1) * n_in];
                        for (bk, &wv) in back.iter_mut().zip(row) {
                            *bk += delta[o] * wv;
                        }
                    }
                    delta = back
                        .into_iter()
                        .zip(&pre[l - 1])
                        .map(|(d, &z)| if z > 0.0 { d } else { 0.0 })
                        .collect();
                }
            }
        }
        if l2 > 0.0 {
            for &(w, _, n_in, n_out) in &layers {
                for i in w..w + n_in * n_out {
                    loss += 0.5 * l2 * self.params[i] * self.params[i];
                    grad[i] += l2 * self.params[i];
                }
            }
        }
        (loss, grad)
    }

    /// Mean unsmoothed cross-entropy on `data`.
    pub fn nll(&self, data: &Dataset) -> f64 {
        let total: f64 = data
            .inputs
            .iter()
            .zip(&data.targets)
            .map(|(x, &y)| -log_softmax(&self.logits(x))[y])
            .sum();
        total / data.len() as f64
    }
}

/// Fits a model to `data` from the seed-determined initialisation.
pub fn fit(cfg: &ToyModelConfig, data: &Dataset, n_classes: usize, seed: u64) -> Result<ToyModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(BvError::validation("dataset", "empty training set"));
    }
    if let Some(i) = data.targets.iter().position(|&t| t >= n_classes) {
        return Err(BvError::Domain {
            index: i,
            reason: format!("target {} out of range", data.targets[i]),
        });
    }
    let dim = data.inputs[0].len();
    let mut model = ToyModel::init(cfg, dim, n_classes, seed);
    for step in 0..cfg.steps {
        let (loss, grad) = model.loss_and_grad(data, cfg.l2, cfg.label_smoothing);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(BvError::TrainingDivergence { step });
        }
        for (p, g) in model.params.iter_mut().zip(&grad) {
            *p -= cfg.step_size * g;
        }
    }
    Ok(model)
}

/// Trains a toy model and returns its predictions on `eval_inputs`.
pub fn train_toy(
    cfg: &ToyModelConfig,
    data: &Dataset,
    n_classes: usize,
    eval_inputs: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<SimplexPoint<f64>>> {
    fit(cfg, data, n_classes, seed)?.predict(eval_inputs)
}

/// [`Trainer`] backed by a toy model and a fixed evaluation set.
#[derive(Debug, Clone)]
pub struct ToyTrainer {
    pub config: ToyModelConfig,
    pub n_classes: usize,
    pub eval_inputs: Vec<Vec<f64>>,
}

impl Trainer for ToyTrainer {
    fn train(&self, data: &Dataset, seed: u64) -> Result<Vec<SimplexPoint<f64>>> {
        train_toy(&self.config, data, self.n_classes, &self.eval_inputs, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylab::world::ToyWorld;
    use rand::Rng;

    fn small_world(noise: f64) -> ToyWorld {
        ToyWorld {
            noise_scale: noise,
            train_size: 96,
            eval_size: 32,
            ..ToyWorld::default()
        }
    }

    #[test]
    fn logistic_fits_separable_data() {
        let s = small_world(0.15).make().unwrap();
        let cfg = ToyModelConfig {
            l2: 0.0,
            steps: 400,
            step_size: 1.0,
            ..ToyModelConfig::logistic()
        };
        let m = fit(&cfg, &s.train, 3, 0).unwrap();
        assert!(m.nll(&s.train) < 0.1, "{}", m.nll(&s.train));
    }

    #[test]
    fn zero_init_logistic_ignores_seed() {
        let s = small_world(1.0).make().unwrap();
        let cfg = ToyModelConfig {
            init_scale: 0.0,
            steps: 50,
            ..ToyModelConfig::logistic()
        };
        let a = train_toy(&cfg, &s.train, 3, &s.eval.inputs, 1).unwrap();
        let b = train_toy(&cfg, &s.train, 3, &s.eval.inputs, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn smoothed_optimum_is_stationary() {
        let s = small_world(0.3).make().unwrap();
        let cfg = ToyModelConfig {
            l2: 1e-2,
            label_smoothing: 0.1,
            steps: 3000,
            step_size: 1.0,
            init_scale: 0.0,
            ..ToyModelConfig::logistic()
        };
        let m = fit(&cfg, &s.train, 3, 0).unwrap();
        let (_, g) = m.loss_and_grad(&s.train, cfg.l2, cfg.label_smoothing);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "{norm}");
        // the smoothed targets bound the fitted probabilities away from 0 and 1
        for p in m.predict(&s.train.inputs).unwrap() {
            assert!(p.probs().iter().all(|&v| v > 1e-3));
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let s = small_world(1.0).make().unwrap();
        let data = s.train.subset(&(0..24).collect::<Vec<_>>(), "g");
        let mut rng = rng_for(99, &[]);
        for (i, cfg) in [
            ToyModelConfig::logistic(),
            ToyModelConfig::mlp(1, 5),
            ToyModelConfig::mlp(3, 4),
        ]
        .iter()
        .cycle()
        .take(10)
        .enumerate()
        {
            let cfg = ToyModelConfig {
                l2: 0.05,
                label_smoothing: 0.1,
                ..cfg.clone()
            };
            let mut m = ToyModel::init(&cfg, 2, 3, i as u64);
            for p in m.params.iter_mut() {
                *p += rng.random_range(-0.5..0.5);
            }
            let (_, g) = m.loss_and_grad(&data, cfg.l2, cfg.label_smoothing);
            let h = 1e-6;
            for j in 0..m.params.len() {
                let mut plus = m.clone();
                plus.params[j] += h;
                let mut minus = m.clone();
                minus.params[j] -= h;
                let fd = (plus.loss_and_grad(&data, cfg.l2, cfg.label_smoothing).0
                    - minus.loss_and_grad(&data, cfg.l2, cfg.label_smoothing).0)
                    / (2.0 * h);
                let rel = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-3);
                assert!(rel < 1e-5, "param {j}: fd {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let s = small_world(1.0).make().unwrap();
        let cfg = ToyModelConfig {
            step_size: 1e300,
            steps: 10,
            ..ToyModelConfig::mlp(2, 8)
        };
        assert!(matches!(
            fit(&cfg, &s.train, 3, 0),
            Err(BvError::TrainingDivergence { .. })
        ));
    }

    #[test]
    fn trainer_is_deterministic_bitwise() {
        let s = small_world(1.0).make().unwrap();
        let t = ToyTrainer {
            config: ToyModelConfig {
                steps: 30,
                ..ToyModelConfig::mlp(2, 8)
            },
            n_classes: 3,
            eval_inputs: s.eval.inputs.clone(),
        };
        let a = t.train(&s.train, 5).unwrap();
        let b = t.train(&s.train, 5).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!(p
                .log_probs()
                .iter()
                .zip(q.log_probs())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_ne!(a, t.train(&s.train, 6).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(ToyModelConfig {
            label_smoothing: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ToyModelConfig {
            depth: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ToyModelConfig {
            depth: 0,
            ..ToyModelConfig::logistic()
        }
        .validate()
        .is_ok());
        assert!(ToyModelConfig {
            step_size: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
