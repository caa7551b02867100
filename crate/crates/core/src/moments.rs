//! Central labels, dual means and the generalised laws of total expectation
//! and variance over weighted empirical laws.

use crate::bregman::{divergence_prepared, ConvexGenerator, DualPoint};
use crate::error::{BvError, Result};
use crate::numerics::{pairwise_sum, weighted_vector_mean};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Provenance attached to one point of a [`PredictionSet`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub seed: u64,
    pub train_id: String,
    pub group: Option<String>,
}

impl Tag {
    pub fn group(key: impl Into<String>) -> Self {
        Tag {
            group: Some(key.into()),
            ..Tag::default()
        }
    }
}

/// Which tag field acts as the conditioning variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Seed,
    TrainId,
    Group,
}

impl std::str::FromStr for GroupBy {
    type Err = BvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seed" => Ok(GroupBy::Seed),
            "train_id" => Ok(GroupBy::TrainId),
            "group" => Ok(GroupBy::Group),
            other => Err(BvError::usage(format!(
                "unknown grouping `{other}` (expected seed, train_id or group)"
            ))),
        }
    }
}

/// A weighted empirical law over points of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet<T> {
    points: Vec<Vec<T>>,
    weights: Vec<T>,
    tags: Vec<Tag>,
}

impl<T: Scalar> PredictionSet<T> {
    /// Uniform weights, default tags.
    pub fn uniform(points: Vec<Vec<T>>) -> Result<Self> {
        let n = points.len();
        let tags = vec![Tag::default(); n];
        Self::build(points, None, tags)
    }

    /// Explicit weights; they must be non-negative and sum to one within `1e-12`
    /// (f64) and are renormalised exactly.
    pub fn weighted(points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        let n = points.len();
        Self::build(points, Some(weights), vec![Tag::default(); n])
    }

    pub fn with_tags(points: Vec<Vec<T>>, weights: Option<Vec<T>>, tags: Vec<Tag>) -> Result<Self> {
        Self::build(points, weights, tags)
    }

    /// Uniform weights with a group key per point.
    pub fn grouped<S: Into<String>>(points: Vec<Vec<T>>, groups: Vec<S>) -> Result<Self> {
        let tags = groups.into_iter().map(Tag::group).collect();
        Self::build(points, None, tags)
    }

    fn build(points: Vec<Vec<T>>, weights: Option<Vec<T>>, tags: Vec<Tag>) -> Result<Self> {
        if points.is_empty() {
            return Err(BvError::validation("points", "prediction set is empty"));
        }
        let dim = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(BvError::Dimension {
                expected: dim,
                got: p.len(),
            });
        }
        if tags.len() != points.len() {
            return Err(BvError::validation("tags", "one tag per point required"));
        }
        let weights = match weights {
            None => vec![T::one() / T::from_count(points.len()); points.len()],
            Some(w) => {
                if w.len() != points.len() {
                    return Err(BvError::validation("weights", "one weight per point required"));
                }
                if let Some(index) = w.iter().position(|&v| !(v >= T::zero()) || !v.is_finite()) {
                    return Err(BvError::Domain {
                        index,
                        reason: "weights must be finite and non-negative".into(),
                    });
                }
                let total = pairwise_sum(&w);
                let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
                if (total - T::one()).abs() > tol {
                    return Err(BvError::validation("weights", format!("sum to {total}, not 1")));
                }
                w.into_iter().map(|v| v / total).collect()
            }
        };
        Ok(Self { points, weights, tags })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    /// Copy whose `group` tag is taken from the selected field.
    pub fn regroup(&self, by: GroupBy) -> Self {
        let tags = self
            .tags
            .iter()
            .map(|t| {
                let group = match by {
                    GroupBy::Seed => Some(t.seed.to_string()),
                    GroupBy::TrainId => Some(t.train_id.clone()),
                    GroupBy::Group => t.group.clone(),
                };
                Tag { group, ..t.clone() }
            })
            .collect();
        Self { tags, ..self.clone() }
    }

    /// Points canonicalised by `gen`, in order.
    pub fn prepared<G: ConvexGenerator<T> + ?Sized>(&self, gen: &G) -> Result<Vec<Vec<T>>> {
        self.points.iter().map(|p| gen.canonicalize(p)).collect()
    }

    /// Splits the law by group key into (key, marginal weight, conditional law),
    /// in sorted key order. Fails if any point lacks a group key.
    pub fn split_by_group(&self) -> Result<Vec<(String, T, PredictionSet<T>)>> {
        let mut buckets: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.tags.iter().enumerate() {
            let key = t
                .group
                .as_deref()
                .ok_or_else(|| BvError::usage(format!("point {i} has no group tag")))?;
            buckets.entry(key).or_default().push(i);
        }
        let mut out = Vec::with_capacity(buckets.len());
        for (key, idx) in buckets {
            let raw: Vec<T> = idx.iter().map(|&i| self.weights[i]).collect();
            let mass = pairwise_sum(&raw);
            let (points, weights) = if mass > T::zero() {
                (
                    idx.iter().map(|&i| self.points[i].clone()).collect(),
                    raw.iter().map(|&w| w / mass).collect(),
                )
            } else {
                let n = T::from_count(idx.len());
                (
                    idx.iter().map(|&i| self.points[i].clone()).collect(),
                    vec![T::one() / n; idx.len()],
                )
            };
            let tags = idx.iter().map(|&i| self.tags[i].clone()).collect();
            out.push((key.to_string(), mass, PredictionSet { points, weights, tags }));
        }
        Ok(out)
    }
}

/// Decomposition of the variance along a conditioning variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSplit<T> {
    /// `E_Z 𝕍[X|Z]`.
    pub unexplained: T,
    /// `𝕍[𝓔(X|Z)]`.
    pub explained: T,
    /// `𝕍[X]`.
    pub total: T,
}

impl<T: Scalar> VarianceSplit<T> {
    pub fn residual(&self) -> T {
        (self.total - self.unexplained - self.explained).abs()
    }
}

/// Central label `E Y`: the weighted arithmetic mean.
pub fn mean_label<T: Scalar>(dist: &PredictionSet<T>) -> Vec<T> {
    weighted_vector_mean(&dist.points, &dist.weights)
}

/// Dual mean `𝓔X = (E X*)*`, the minimiser of `z ↦ E D[z‖X]`.
pub fn dual_mean<T: Scalar, G: ConvexGenerator<T> + ?Sized>(gen: &G, dist: &PredictionSet<T>) -> Result<Vec<T>> {
    let prepared = dist.prepared(gen)?;
    dual_mean_prepared(gen, &prepared, &dist.weights)
}

pub(crate) fn dual_mean_prepared<T: Scalar, G: ConvexGenerator<T> + ?Sized>(
    gen: &G,
    points: &[Vec<T>],
    weights: &[T],
) -> Result<Vec<T>> {
    let duals: Vec<Vec<T>> = points.iter().map(|p| gen.gradient(p)).collect();
    let mean = weighted_vector_mean(&duals, weights);
    if mean.iter().any(|v| v.is_nan()) {
        return Err(BvError::Numerical {
            stage: "dual-space mean",
        });
    }
    let z = DualPoint {
        coords: mean,
        generator: gen.name(),
    };
    gen.canonicalize(&gen.conjugate_gradient(&z.coords))
}

/// Per-group dual means `𝓔[X|Z=g]` with group weights, in sorted key order.
pub fn conditional_dual_means<T: Scalar, G: ConvexGenerator<T> + ?Sized>(
    gen: &G,
    dist: &PredictionSet<T>,
) -> Result<BTreeMap<String, (T, Vec<T>)>> {
    dist.split_by_group()?
        .into_iter()
        .map(|(key, w, sub)| Ok((key, (w, dual_mean(gen, &sub)?))))
        .collect()
}

/// Model variance `𝕍X = E D[𝓔X‖X]`.
pub fn variance<T: Scalar, G: ConvexGenerator<T> + ?Sized>(gen: &G, dist: &PredictionSet<T>) -> Result<T> {
    let prepared = dist.prepared(gen)?;
    let center = dual_mean_prepared(gen, &prepared, &dist.weights)?;
    expected_divergence_from(gen, &center, &prepared, &dist.weights)
}

/// `Σ wᵢ D[center‖xᵢ]` over canonical points.
pub(crate) fn expected_divergence_from<T: Scalar, G: ConvexGenerator<T> + ?Sized>(
    gen: &G,
    center: &[T],
    points: &[Vec<T>],
    weights: &[T],
) -> Result<T> {
    let terms = points
        .iter()
        .zip(weights)
        .map(|(p, &w)| Ok(w * divergence_prepared(gen, center, p)?))
        .collect::<Result<Vec<T>>>()?;
    Ok(pairwise_sum(&terms))
}

/// Generalised law of total variance along the group tag.
pub fn total_variance_split<T: Scalar, G: ConvexGenerator<T> + ?Sized>(
    gen: &G,
    dist: &PredictionSet<T>,
) -> Result<VarianceSplit<T>> {
    let groups = dist.split_by_group()?;
    let mut unexplained_terms = Vec::with_capacity(groups.len());
    let mut centers = Vec::with_capacity(groups.len());
    let mut group_weights = Vec::with_capacity(groups.len());
    for (_, w, sub) in &groups {
        unexplained_terms.push(*w * variance(gen, sub)?);
        centers.push(dual_mean(gen, sub)?);
        group_weights.push(*w);
    }
    let center_law = PredictionSet::weighted(centers, group_weights)?;
    Ok(VarianceSplit {
        unexplained: pairwise_sum(&unexplained_terms),
        explained: variance(gen, &center_law)?,
        total: variance(gen, dist)?,
    })
}
