//! Constrained Bayesian optimization for objectives with crash constraints:
//! experiments that violate a constraint return no measurements at all, only
//! a failure label.
//!
//! The toolkit models the objective with a standard GP over the successful
//! observations, models each constraint with a single-output GP over hybrid
//! data (real values on success, bare labels on failure) whose success
//! threshold is itself a learnable hyperparameter, and proposes experiments
//! via constrained expected improvement. Heuristic failure-penalty baselines
//! and a seeded benchmark harness round out the crate; the `crashbo` binary
//! in this workspace drives everything from the command line.

pub mod acquisition;
pub mod baselines;
pub mod benchmarks;
pub mod error;
pub mod exec;
pub mod harness;
pub mod hyperopt;
pub mod gp;
pub mod gpcr;
pub mod kernel;
pub mod math;
pub mod optim;

pub use error::{Error, Result};
pub use gp::{GpDataset, GpModel};
pub use gpcr::{EpOptions, GpcrHyper, GpcrModel, HybridDataset};
pub use kernel::KernelHyper;
pub use math::UnivariateGaussian;
