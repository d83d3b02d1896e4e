//! Federated black-box prompt tuning at desk scale.
//!
//! Simulated clients tune lightweight prompt-generator parameters against
//! opaque loss oracles using zeroth-order methods — two-point SPSA for
//! continuous prompts, policy gradients over categorical token
//! distributions, and GP-based Bayesian optimization for soft prompts —
//! while a central aggregator periodically averages client state. Everything
//! is driven by a counter-based RNG so runs replay exactly from a seed.
//!
//! The numeric core is generic over the scalar type ([`scalar::Real`]);
//! the aliases below pin the `f64` instantiations used by the harness.

pub mod bayesopt;
pub mod config;
pub mod error;
pub mod federation;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod partition;
pub mod pge;
pub mod pmi;
pub mod rng;
pub mod scalar;
pub mod spsa;
pub mod vector;

pub use config::{parse_config_path, parse_config_str, ExperimentConfig};
pub use error::{Error, Result};
pub use harness::{grid_run, run_experiment};
pub use rng::DetRng;

/// `f64` instantiations of the core types (the harness default).
pub type ParamVectorF64 = vector::ParamVector<f64>;
pub type PolicyF64 = pge::CategoricalPromptPolicy<f64>;
pub type GpStateF64 = bayesopt::GpState<f64>;
pub type SpsaConfigF64 = spsa::SpsaConfig<f64>;
pub type OracleInputF64 = oracle::OracleInput<f64>;

/// `f32` instantiations for memory-constrained experimentation.
pub type ParamVectorF32 = vector::ParamVector<f32>;
pub type PolicyF32 = pge::CategoricalPromptPolicy<f32>;
pub type GpStateF32 = bayesopt::GpState<f32>;
