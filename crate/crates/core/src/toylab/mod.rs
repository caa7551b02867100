//! Synthetic worlds, small classifiers and the sweep harness built on them.

pub mod experiment;
pub mod model;
pub mod world;

pub use experiment::{
    decompose_log, run_experiment, train_pools, Analysis, ExperimentOutput, ExperimentSpec, LogDecomposition,
    MemberSpec, Outcome, PoolRun, PoolSpec,
};
pub use model::{fit, train_toy, ModelKind, ToyModel, ToyModelConfig, ToyTrainer};
pub use world::{make_world, ToyWorld, WorldSample};
