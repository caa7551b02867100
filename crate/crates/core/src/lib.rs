//! Bias-variance decompositions for Bregman divergences, computed in dual
//! coordinates.
//!
//! The math core (`bregman`, `moments`, `decomposition`, `ensembling`) is
//! generic over the scalar type; aliases for `f64` and `f32` are exported
//! below. Estimators, toy models and file formats work in `f64`.
//!
//! ```
//! use bvdual::{decompose, NegativeEntropy, PredictionSetF64};
//!
//! let kl = NegativeEntropy::new(2);
//! let labels = PredictionSetF64::uniform(vec![vec![1.0, 0.0]]).unwrap();
//! let preds = PredictionSetF64::uniform(vec![vec![0.8, 0.2], vec![0.6, 0.4]]).unwrap();
//! let d = decompose(&kl, &labels, &preds).unwrap();
//! assert!((d.bias + d.variance - d.total).abs() < 1e-12);
//! ```

pub mod bregman;
pub mod decomposition;
pub mod ensembling;
pub mod error;
pub mod estimators;
pub mod io;
pub mod moments;
pub mod numerics;
pub mod scalar;
pub mod seed;
pub mod toylab;

pub use bregman::{
    conjugate_divergence, divergence, generator_by_name, to_dual, to_primal, ConvexGenerator, Domain, DualPoint,
    GeneralizedEntropy, NegativeEntropy, SimplexPoint, SquaredEuclidean, PROB_FLOOR,
};
pub use decomposition::{
    conditional_decompose, decompose, ensemble_draw_estimate, kl_bias_variance_closed_form, BiasVariance,
    ConditionalDecomposition, Decomposition, DrawEstimate,
};
pub use ensembling::{
    counterexample_report, dual_ensemble, ensemble_curve, exhaustive_ensemble_law, greedy_select, primal_ensemble,
    CounterexampleReport, EnsembleCurve, EnsembleMode, ModelPool, Sampling,
};
pub use error::{BvError, Result};
pub use estimators::{
    bootstrap_sample, conditional_estimate, double_bootstrap_estimate, partition_estimate, BootstrapEstimate, Dataset,
    DoubleBootstrap, Trainer,
};
pub use moments::{dual_mean, mean_label, total_variance_split, variance, GroupBy, PredictionSet, Tag, VarianceSplit};
pub use scalar::Scalar;
pub use seed::derive_seed;

pub type SimplexPointF64 = SimplexPoint<f64>;
pub type SimplexPointF32 = SimplexPoint<f32>;
pub type DualPointF64 = DualPoint<f64>;
pub type DualPointF32 = DualPoint<f32>;
pub type PredictionSetF64 = PredictionSet<f64>;
pub type PredictionSetF32 = PredictionSet<f32>;
pub type DecompositionF64 = Decomposition<f64>;
pub type DecompositionF32 = Decomposition<f32>;
pub type BiasVarianceF64 = BiasVariance<f64>;
pub type ModelPoolF64 = ModelPool<f64>;
pub type ModelPoolF32 = ModelPool<f32>;
pub type EnsembleCurveF64 = EnsembleCurve<f64>;
