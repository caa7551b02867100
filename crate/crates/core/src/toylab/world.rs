//! Gaussian-mixture toy worlds.

use crate::error::{BvError, Result};
use crate::estimators::Dataset;
use crate::seed::rng_for;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// One isotropic Gaussian per class, uniform class prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyWorld {
    pub n_classes: usize,
    pub dim: usize,
    /// One mean per class. Left empty, the means are spread evenly on a circle
    /// of radius 1.5 in the first two coordinates.
    pub class_means: Vec<Vec<f64>>,
    pub noise_scale: f64,
    pub train_size: usize,
    pub eval_size: usize,
    pub master_seed: u64,
}

impl Default for ToyWorld {
    fn default() -> Self {
        Self {
            n_classes: 3,
            dim: 2,
            class_means: Vec::new(),
            noise_scale: 1.0,
            train_size: 512,
            eval_size: 2048,
            master_seed: 0,
        }
    }
}

/// Training set, evaluation set and evaluation labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSample {
    pub train: Dataset,
    pub eval: Dataset,
    pub eval_labels: Vec<usize>,
}

impl ToyWorld {
    pub fn means(&self) -> Vec<Vec<f64>> {
        if !self.class_means.is_empty() {
            return self.class_means.clone();
        }
        (0..self.n_classes)
            .map(|c| {
                let angle = 2.0 * std::f64::consts::PI * c as f64 / self.n_classes as f64;
                let mut m = vec![0.0; self.dim];
                m[0] = 1.5 * angle.cos();
                if self.dim > 1 {
                    m[1] = 1.5 * angle.sin();
                }
                m
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(BvError::validation("world.n_classes", "at least 2 classes required"));
        }
        if self.dim == 0 {
            return Err(BvError::validation("world.dim", "must be positive"));
        }
        if self.dim == 1 && self.class_means.is_empty() && self.n_classes > 2 {
            return Err(BvError::validation(
                "world.class_means",
                "default means need dim ≥ 2 for more than two classes",
            ));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(BvError::validation("world.noise_scale", "must be a positive real"));
        }
        if self.train_size == 0 || self.eval_size == 0 {
            return Err(BvError::validation("world.train_size", "sizes must be positive"));
        }
        let means = self.means();
        if means.len() != self.n_classes {
            return Err(BvError::validation(
                "world.class_means",
                format!("{} means for {} classes", means.len(), self.n_classes),
            ));
        }
        for (i, m) in means.iter().enumerate() {
            if m.len() != self.dim {
                return Err(BvError::validation(
                    format!("world.class_means[{i}]"),
                    format!("has dimension {}, expected {}", m.len(), self.dim),
                ));
            }
            if means[..i].iter().any(|o| o == m) {
                return Err(BvError::validation(
                    format!("world.class_means[{i}]"),
                    "class means must be pairwise distinct",
                ));
            }
        }
        Ok(())
    }

    fn sample(&self, n: usize, seed: u64, path: &[u64], id: String) -> Result<Dataset> {
        let means = self.means();
        let noise =
            Normal::new(0.0, self.noise_scale).map_err(|e| BvError::validation("world.noise_scale", e.to_string()))?;
        let mut rng = rng_for(seed, path);
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random_range(0..self.n_classes);
            inputs.push(means[c].iter().map(|&m| m + noise.sample(&mut rng)).collect());
            targets.push(c);
        }
        Dataset::new(inputs, targets, id)
    }

    /// The fixed training and evaluation sets of this world.
    pub fn make(&self) -> Result<WorldSample> {
        self.validate()?;
        let train = self.sample(self.train_size, self.master_seed, &[0], "train".into())?;
        let eval = self.sample(self.eval_size, self.master_seed, &[1], "eval".into())?;
        let eval_labels = eval.targets.clone();
        Ok(WorldSample {
            train,
            eval,
            eval_labels,
        })
    }

    /// A fresh training set of `train_size` points drawn from the same law.
    pub fn fresh_training_set(&self, seed: u64) -> Result<Dataset> {
        self.validate()?;
        self.sample(self.train_size, self.master_seed, &[2, seed], format!("fresh-{seed}"))
    }
}

pub fn make_world(cfg: &ToyWorld) -> Result<WorldSample> {
    cfg.make()
}
