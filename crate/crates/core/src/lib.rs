//! Evolutionary models of in-group versus out-group interaction strategies
//! under shifting environments.
//!
//! - [`model`]: outcome distributions, benefit curves and exact expected fitness.
//! - [`equilibrium`]: selection gradients, singular strategies, PIPs and sweeps.
//! - [`simulation`]: individual-based copying process and ensemble statistics.
//! - [`cli`]: configuration files and the figure-data commands.

pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod model;
pub mod simulation;

pub use equilibrium::Scenario;
pub use error::{Error, Result};
pub use model::{BenefitCurve, Environment, InteractionParams, OutcomeTally, RiskModel, Strategy};
