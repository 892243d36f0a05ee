//! Multi-fidelity hierarchical optimistic optimization.
//!
//! Maximizes a noisy black-box function over a box when cheaper, biased
//! approximations of it can be queried at fidelities `z` in `[0, 1]`.
//! [`mfhoo`] runs one tree search with fixed smoothness parameters;
//! [`mfpoo`] runs several in parallel over a grid of `rho` values and picks
//! the best. [`harness`] sweeps budgets and seeds and writes regret tables.

pub mod exec;
pub mod fidelity;
pub mod harness;
pub mod mfhoo;
pub mod mfpoo;
pub mod objective;
pub mod partition;
pub mod theory;

pub use exec::Execution;
pub use fidelity::{BiasModel, CostFunction};
pub use mfhoo::{MfhooConfig, Nu};
pub use mfpoo::MfpooConfig;
pub use objective::MultiFidelityObjective;
pub use partition::{BoxDomain, Cell, CellId};
