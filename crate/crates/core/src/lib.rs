//! Solver library for discrete, finite, stochastic MDPs over n-dimensional
//! gridworlds.
//!
//! The transition model is stored as a sum of sparse rank-one tensor
//! components: for every state/action pair, the list of `(successor,
//! probability)` entries with strictly positive mass. Because gridworld
//! dynamics only ever reach a handful of neighbouring cells, each pair has at
//! most `2D - 1` components regardless of the total state count, so the
//! compressed model grows linearly in the number of states while a dense
//! per-action matrix grows quadratically.
//!
//! Value iteration and policy iteration run directly on the compressed
//! representation ([`solvers::value_iteration`], [`solvers::policy_iteration`]).
//! A dense tabular baseline ([`transition::TabularModel`] plus
//! [`solvers::tabular_value_iteration`] / [`solvers::tabular_policy_iteration`])
//! implements the same Jacobi backups on per-action `S x S` matrices, which
//! keeps the two routes comparable down to their residual traces. The
//! [`bench`] module measures both on grid families of increasing size and
//! writes the results as CSV.

pub mod bench;
pub mod error;
pub mod gridworld;
pub mod solvers;
pub mod statespace;
pub mod transition;

pub use error::{Error, Result};
pub use gridworld::{ActionId, GridSpec};
pub use solvers::{Policy, SolveResult, SolverConfig, SolverKind, ValueFunction};
pub use statespace::{GridShape, MultiIndex, StateId, StepDir};
pub use transition::{ComponentModel, RewardModel, TabularModel};
