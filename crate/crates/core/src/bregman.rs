//! Convex generators, primal/dual coordinate maps and Bregman divergences.
//!
//! A [`ConvexGenerator`] bundles a strictly convex function `F`, its gradient
//! (the dual map `x ↦ x*`), its convex conjugate `F*` and the conjugate's
//! gradient (the primal map `z ↦ z*`). Every divergence and dual mean in the
//! crate is derived from these four functions:
//!
//! ```text
//! D_F[y‖x] = F(y) − F(x) − ∇F(x)ᵀ(y − x)
//! ```
//!
//! On the probability simplex the dual map of negative entropy is only
//! defined up to an additive constant. The gauge is fixed as `x* = log x`;
//! the primal map is `softmax`, which quotients the constant away.

use crate::error::{BvError, Result};
use crate::numerics::{log_softmax, logsumexp, softmax};
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Componentwise floor applied to every simplex and orthant point.
pub const PROB_FLOOR: f64 = 1e-12;

/// The set a generator is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    FullSpace,
    PositiveOrthant,
    Simplex,
}

/// A strictly convex, differentiable function together with its conjugate.
///
/// `value` and `gradient` expect points that went through [`canonicalize`](Self::canonicalize).
pub trait ConvexGenerator<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;
    fn dimension(&self) -> usize;
    fn domain(&self) -> Domain;

    /// Validates `x` and maps it to its canonical in-domain representation
    /// (flooring and renormalisation where the domain requires it).
    fn canonicalize(&self, x: &[T]) -> Result<Vec<T>>;

    /// `F(x)`.
    fn value(&self, x: &[T]) -> T;
    /// `∇F(x)`, the dual coordinates of `x`.
    fn gradient(&self, x: &[T]) -> Vec<T>;
    /// `F*(z)`.
    fn conjugate_value(&self, z: &[T]) -> T;
    /// `∇F*(z)`, the primal point whose dual is `z`.
    fn conjugate_gradient(&self, z: &[T]) -> Vec<T>;
}

fn check_dimension<T>(expected: usize, x: &[T]) -> Result<()> {
    if x.len() != expected {
        return Err(BvError::Dimension { expected, got: x.len() });
    }
    Ok(())
}

fn check_finite<T: Scalar>(x: &[T]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(BvError::Domain {
            index,
            reason: "non-finite coordinate".into(),
        }),
        None => Ok(()),
    }
}

fn check_non_negative<T: Scalar>(x: &[T]) -> Result<()> {
    match x.iter().position(|&v| v < T::zero()) {
        Some(index) => Err(BvError::Domain {
            index,
            reason: format!("negative entry {}", x[index]),
        }),
        None => Ok(()),
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `F(x) = ‖x‖²` on ℝᵈ. Its divergence is the squared Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SquaredEuclidean {
    pub dim: usize,
}

impl SquaredEuclidean {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl<T: Scalar> ConvexGenerator<T> for SquaredEuclidean {
    fn name(&self) -> &'static str {
        "mse"
    }
    fn dimension(&self) -> usize {
        self.dim
    }
    fn domain(&self) -> Domain {
        Domain::FullSpace
    }
    fn canonicalize(&self, x: &[T]) -> Result<Vec<T>> {
        check_dimension(self.dim, x)?;
        check_finite(x)?;
        Ok(x.to_vec())
    }
    fn value(&self, x: &[T]) -> T {
        dot(x, x)
    }
    fn gradient(&self, x: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        x.iter().map(|&v| two * v).collect()
    }
    fn conjugate_value(&self, z: &[T]) -> T {
        dot(z, z) / T::lit(4.0)
    }
    fn conjugate_gradient(&self, z: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        z.iter().map(|&v| v / two).collect()
    }
}

/// `F(x) = Σ xᵢ log xᵢ` on the open probability simplex. Its divergence is KL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeEntropy {
    pub dim: usize,
}

impl NegativeEntropy {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl<T: Scalar> ConvexGenerator<T> for NegativeEntropy {
    fn name(&self) -> &'static str {
        "kl"
    }
    fn dimension(&self) -> usize {
        self.dim
    }
    fn domain(&self) -> Domain {
        Domain::Simplex
    }
    fn canonicalize(&self, x: &[T]) -> Result<Vec<T>> {
        check_dimension(self.dim, x)?;
        Ok(SimplexPoint::new(x.to_vec())?.probs)
    }
    fn value(&self, x: &[T]) -> T {
        x.iter().map(|&v| v * v.ln()).sum()
    }
    fn gradient(&self, x: &[T]) -> Vec<T> {
        x.iter().map(|&v| v.ln()).collect()
    }
    fn conjugate_value(&self, z: &[T]) -> T {
        logsumexp(z)
    }
    fn conjugate_gradient(&self, z: &[T]) -> Vec<T> {
        softmax(z)
    }
}

/// `F(x) = Σ xᵢ log xᵢ − xᵢ` on the positive orthant (generalised I-divergence).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneralizedEntropy {
    pub dim: usize,
}

impl GeneralizedEntropy {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl<T: Scalar> ConvexGenerator<T> for GeneralizedEntropy {
    fn name(&self) -> &'static str {
        "idiv"
    }
    fn dimension(&self) -> usize {
        self.dim
    }
    fn domain(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn canonicalize(&self, x: &[T]) -> Result<Vec<T>> {
        check_dimension(self.dim, x)?;
        check_finite(x)?;
        check_non_negative(x)?;
        let floor = T::lit(PROB_FLOOR);
        Ok(x.iter().map(|&v| v.max(floor)).collect())
    }
    fn value(&self, x: &[T]) -> T {
        x.iter().map(|&v| v * v.ln() - v).sum()
    }
    fn gradient(&self, x: &[T]) -> Vec<T> {
        x.iter().map(|&v| v.ln()).collect()
    }
    fn conjugate_value(&self, z: &[T]) -> T {
        z.iter().map(|&v| v.exp()).sum()
    }
    fn conjugate_gradient(&self, z: &[T]) -> Vec<T> {
        z.iter().map(|&v| v.exp()).collect()
    }
}

/// Builds a generator from its short name (`kl`, `mse`, `idiv`).
pub fn generator_by_name<T: Scalar>(name: &str, dim: usize) -> Result<Box<dyn ConvexGenerator<T>>> {
    if dim == 0 {
        return Err(BvError::usage("generator dimension must be positive"));
    }
    match name {
        "kl" => Ok(Box::new(NegativeEntropy::new(dim))),
        "mse" => Ok(Box::new(SquaredEuclidean::new(dim))),
        "idiv" => Ok(Box::new(GeneralizedEntropy::new(dim))),
        other => Err(BvError::usage(format!("unknown generator `{other}`"))),
    }
}

/// A probability vector, floored at [`PROB_FLOOR`] and renormalised, with its
/// logarithm cached. This is the canonical representation for KL work.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint<T> {
    probs: Vec<T>,
    log_probs: Vec<T>,
}

impl<T: Scalar> SimplexPoint<T> {
    /// Validates non-negativity and unit sum (within [`Scalar::simplex_tolerance`]),
    /// then floors and renormalises.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(BvError::Dimension { expected: 1, got: 0 });
        }
        check_finite(&probs)?;
        check_non_negative(&probs)?;
        let sum: T = probs.iter().copied().sum();
        if (sum - T::one()).abs() > T::simplex_tolerance() {
            return Err(BvError::Domain {
                index: probs.len() - 1,
                reason: format!("entries sum to {sum}, not 1"),
            });
        }
        Ok(Self::floored(probs))
    }

    /// From a log-probability vector whose log-sum-exp is zero within tolerance.
    pub fn from_log_probs(log_probs: &[T]) -> Result<Self> {
        if log_probs.is_empty() {
            return Err(BvError::Dimension { expected: 1, got: 0 });
        }
        if let Some(index) = log_probs.iter().position(|v| v.is_nan() || *v == T::infinity()) {
            return Err(BvError::Domain {
                index,
                reason: "log-probability is NaN or +inf".into(),
            });
        }
        let lse = logsumexp(log_probs);
        if !lse.is_finite() || lse.abs() > T::simplex_tolerance() {
            return Err(BvError::Domain {
                index: log_probs.len() - 1,
                reason: format!("log-probabilities have logsumexp {lse}, not 0"),
            });
        }
        Ok(Self::floored(softmax(log_probs)))
    }

    /// Softmax of arbitrary finite logits.
    pub fn from_logits(logits: &[T]) -> Result<Self> {
        check_finite(logits)?;
        Self::from_log_probs(&log_softmax(logits))
    }

    /// Vertex `class` of the simplex, floored like every other point.
    pub fn one_hot(class: usize, n_classes: usize) -> Result<Self> {
        if class >= n_classes {
            return Err(BvError::Domain {
                index: class,
                reason: format!("class index out of range for {n_classes} classes"),
            });
        }
        let mut p = vec![T::zero(); n_classes];
        p[class] = T::one();
        Ok(Self::floored(p))
    }

    pub fn uniform(n_classes: usize) -> Self {
        let v = T::one() / T::from_count(n_classes);
        Self::floored(vec![v; n_classes])
    }

    fn floored(mut probs: Vec<T>) -> Self {
        let floor = T::lit(PROB_FLOOR);
        for p in probs.iter_mut() {
            *p = p.max(floor);
        }
        let sum: T = probs.iter().copied().sum();
        for p in probs.iter_mut() {
            *p = *p / sum;
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Self { probs, log_probs }
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[T] {
        &self.log_probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn into_probs(self) -> Vec<T> {
        self.probs
    }
}

/// Dual coordinates `x* = ∇F(x)`, bound to the generator that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint<T> {
    pub coords: Vec<T>,
    pub generator: &'static str,
}

/// `F(x)`.
pub fn evaluate<T: Scalar, G: ConvexGenerator<T> + ?Sized>(gen: &G, x: &[T]) -> Result<T> {
    let x = gen.canonicalize(x)?;
    Ok(gen.value(&x))
}

/// `x* = ∇F(x)`.
pub fn to_dual<T: Scalar, G: ConvexGenerator<T> + ?Sized>(gen: &G, x: &[T]) -> Result<DualPoint<T>> {
    let x = gen.canonicalize(x)?;
    Ok(DualPoint {
        coords: gen.gradient(&x),
        generator: gen.name(),
    })
}

/// `z* = ∇F*(z)`.
pub fn to_primal<T: Scalar, G: ConvexGenerator<T> + ?Sized>(gen: &G, z: &DualPoint<T>) -> Result<Vec<T>> {
    if z.generator != gen.name() {
        return Err(BvError::usage(format!(
            "dual point belongs to generator `{}`, not `{}`",
            z.generator,
            gen.name()
        )));
    }
    check_dimension(gen.dimension(), &z.coords)?;
    Ok(gen.conjugate_gradient(&z.coords))
}

/// `D_F[y‖x]` for arbitrary (validated) points.
pub fn divergence<T: Scalar, G: ConvexGenerator<T> + ?Sized>(gen: &G, y: &[T], x: &[T]) -> Result<T> {
    let y = gen.canonicalize(y)?;
    let x = gen.canonicalize(x)?;
    divergence_prepared(gen, &y, &x)
}

/// `D_F[y‖x]` for points already passed through `canonicalize`.
pub fn divergence_prepared<T: Scalar, G: ConvexGenerator<T> + ?Sized>(gen: &G, y: &[T], x: &[T]) -> Result<T> {
    let fy = gen.value(y);
    if !fy.is_finite() {
        return Err(BvError::Numerical { stage: "F(y)" });
    }
    let fx = gen.value(x);
    if !fx.is_finite() {
        return Err(BvError::Numerical { stage: "F(x)" });
    }
    let grad = gen.gradient(x);
    let lin: T = grad.iter().zip(y.iter().zip(x)).map(|(&g, (&a, &b))| g * (a - b)).sum();
    if !lin.is_finite() {
        return Err(BvError::Numerical {
            stage: "∇F(x)ᵀ(y − x)"
        });
    }
    Ok(fy - fx - lin)
}

/// `D_{F*}[a‖b] = F*(a) − F*(b) − ∇F*(b)ᵀ(a − b)` on dual coordinates.
pub fn conjugate_divergence<T: Scalar, G: ConvexGenerator<T> + ?Sized>(
    gen: &G,
    a: &DualPoint<T>,
    b: &DualPoint<T>,
) -> Result<T> {
    for p in [a, b] {
        if p.generator != gen.name() {
            return Err(BvError::usage("dual point bound to a different generator"));
        }
        check_dimension(gen.dimension(), &p.coords)?;
    }
    let fa = gen.conjugate_value(&a.coords);
    let fb = gen.conjugate_value(&b.coords);
    let grad = gen.conjugate_gradient(&b.coords);
    let lin: T = grad
        .iter()
        .zip(a.coords.iter().zip(&b.coords))
        .map(|(&g, (&u, &v))| g * (u - v))
        .sum();
    let d = fa - fb - lin;
    if !d.is_finite() {
        return Err(BvError::Numerical {
            stage: "conjugate divergence",
        });
    }
    Ok(d)
}

/// Draws a random point in the generator's domain. Used for spot checks.
pub fn sample_domain_point<T: Scalar, R: Rng + ?Sized>(domain: Domain, dim: usize, rng: &mut R) -> Vec<T> {
    match domain {
        Domain::FullSpace => (0..dim).map(|_| T::lit(rng.random_range(-3.0..3.0))).collect(),
        Domain::PositiveOrthant => (0..dim)
            .map(|_| T::lit(rng.random_range(-4.0_f64..2.0).exp()))
            .collect(),
        Domain::Simplex => {
            let logits: Vec<T> = (0..dim).map(|_| T::lit(rng.random_range(-4.0..4.0))).collect();
            softmax(&logits)
        }
    }
}

/// Spot-checks that a generator is strictly convex and that its primal map
/// inverts its dual map. Generators failing either check are rejected, since
/// dual means are only unique under strict convexity.
pub fn verify_generator<T: Scalar, G: ConvexGenerator<T> + ?Sized, R: Rng + ?Sized>(
    gen: &G,
    samples: usize,
    rng: &mut R,
) -> Result<()> {
    let dim = gen.dimension();
    let slack = T::epsilon().sqrt();
    for _ in 0..samples {
        let x = gen.canonicalize(&sample_domain_point(gen.domain(), dim, rng))?;
        let y = gen.canonicalize(&sample_domain_point(gen.domain(), dim, rng))?;
        let t = T::lit(rng.random_range(0.05..0.95));
        let mid: Vec<T> = x.iter().zip(&y).map(|(&a, &b)| t * a + (T::one() - t) * b).collect();
        let chord = t * gen.value(&x) + (T::one() - t) * gen.value(&y);
        let separated = x.iter().zip(&y).any(|(&a, &b)| (a - b).abs() > slack);
        if separated && !(gen.value(&mid) < chord) {
            return Err(BvError::validation(
                gen.name(),
                "generator is not strictly convex on its domain",
            ));
        }
        let back = gen.conjugate_gradient(&gen.gradient(&x));
        let err = back.iter().zip(&x).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        if err > slack {
            return Err(BvError::validation(
                gen.name(),
                "primal map does not invert the dual map",
            ));
        }
    }
    Ok(())
}
