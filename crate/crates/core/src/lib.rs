//! Continuum-armed bandit optimisation with aggregated feedback.
//!
//! Every sample of a cell returns the average of the reward function over the
//! cell's representative points plus Gaussian noise. [`gpoo`] models the
//! function with a Gaussian process over those averages; [`baselines`] holds
//! the empirical-mean tree bandits it is compared with.

pub mod baselines;
pub mod env;
pub mod error;
pub mod gp;
pub mod gpoo;
pub mod kernel;
pub mod linalg;
pub mod partition;
pub mod run;

pub use baselines::{AveStoOO, EmpiricalStats, StoooConfig};
pub use env::{build_env, stream_rng, EnvName, EnvSpec, Environment, TrialRng};
pub use error::{Error, Result};
pub use gp::{AggregatedQuery, History, PosteriorMoments};
pub use gpoo::{beta, regret_bound, Gpoo, GpooConfig, RegretBound, TheoryParams};
pub use kernel::{KernelFamily, KernelSpec};
pub use linalg::{CholFactor, Matrix, SymMatrix};
pub use partition::{Bounds, Cell, DiameterSchedule, NodeId, PartitionTree};
pub use run::{run_to_budget, Recommendation, RegretRow, StepLog, TreeOptimizer};
