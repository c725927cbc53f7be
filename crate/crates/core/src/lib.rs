//! Continuous-variable quadratic boosting.
//!
//! A pool of one- and two-feature logistic classifiers is combined into a
//! strong classifier `Σ w_i h_i(x)`. The weights minimise the squared-error
//! boosting loss, written as a quadratic form `wᵀJw + Cᵀw` over the simplex
//! `{w ≥ 0, Σw = R}` and handed to a classical continuous-variable solver.
//!
//! Pipeline modules, in data-flow order: [`dataset`], [`balancing`],
//! [`weak`], [`hamiltonian`], [`solver`], [`model`]. [`bench`] runs timed
//! sweeps over the whole pipeline.

pub mod balancing;
pub mod bench;
pub mod dataset;
pub mod hamiltonian;
pub mod model;
pub mod solver;
pub mod weak;

pub use balancing::{BalanceConfig, BalanceError, Strategy};
pub use dataset::{Dataset, DatasetError, Label, ScalerParams, SyntheticSpec};
pub use hamiltonian::{Hamiltonian, HamiltonianError};
pub use model::{auc, Model, ModelError, ThresholdRule, TrainConfig};
pub use solver::{Backend, Solution, SolverConfig, SolverError};
pub use weak::{PoolConfig, PredictionMatrix, WeakClassifier, WeakError};
