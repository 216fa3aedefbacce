//! Minimum dual φ-divergence estimation for two-component mixtures by a
//! proximal-point iteration that contains EM as a special case.
//!
//! The crate is organized bottom-up:
//!
//! - [`divergence`]: φ generators (Cressie-Read family and named members)
//!   and the proximal generator ψ
//! - [`models`]: the two-Gaussian and two-Weibull mixtures, label
//!   posteriors, sampling and the EM update
//! - [`quadrature`]: adaptive Gauss-Kronrod integration with a
//!   Gauss-Legendre fallback
//! - [`kde`]: Gaussian kernel density estimate with Silverman's bandwidth
//! - [`estimators`]: the dual, kernel-dual, density-power and likelihood
//!   objectives
//! - [`optimizer`]: box-constrained Nelder-Mead
//! - [`proximal`]: the proximal-point driver, its penalty and diagnostics
//! - [`simulation`]: contamination schemes, total variation error and the
//!   replication harness

pub mod divergence;
pub mod error;
pub mod estimators;
pub mod kde;
pub mod models;
pub mod optimizer;
pub mod proximal;
pub mod quadrature;
pub mod simulation;

pub use divergence::{DivergenceSpec, ProximalGenerator};
pub use estimators::{Objective, ObjectiveChoice, ObjectiveKind};
pub use error::{Error, Result};
pub use kde::KernelDensity;
pub use models::{MixtureModel, ParamVector, Sample};
pub use optimizer::NelderMeadConfig;
pub use proximal::{AcceptRule, BetaSchedule, ProximalConfig, ProximalTrace, StopReason, StopRule, TraceRecord};
pub use quadrature::QuadratureConfig;
pub use simulation::{Contamination, EstimatorSpec, ExperimentPlan, ExperimentReport, InitStrategy, PlanFile};
