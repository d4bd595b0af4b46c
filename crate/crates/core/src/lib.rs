//! Online decision mediation: deciding, round by round, whether to accept a
//! fallible human's action, intervene with a learned model's action, or pay
//! to request an expert's action, while the model learns only from requested
//! labels.
//!
//! - [`domain`]: shared types and the per-round loss.
//! - [`env`]: synthetic and tabular environments and the noisy human.
//! - [`model`]: an online Dirichlet-GP classifier with predictive sampling.
//! - [`mediators`]: UMPIRE and the benchmark mediator policies.
//! - [`metrics`]: regret, mediator error counters, heldout metrics.
//! - [`runner`]: experiment suites, sweeps, and CSV artifacts.
//! - [`pm`]: the partial-monitoring reward and feedback matrices.

pub mod domain;
pub mod env;
pub mod mediators;
pub mod metrics;
pub mod model;
pub mod pm;
pub mod runner;
pub mod seed;
