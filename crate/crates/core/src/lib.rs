//! Geometric neural-network tracking control for Euler–Poincaré systems on
//! matrix Lie groups.
//!
//! The crate is organised bottom-up:
//!
//! * [`liegroup`]: matrix helpers and the SE(3)/SO(3) kernels (hat/vee,
//!   closed-form exponential, adjoint representations, error maps).
//! * [`calculus`]: left-trivialized numerical derivatives of functions on and
//!   into a matrix Lie group.
//! * [`errfun`]: the SE(3) configuration error function with its closed-form
//!   differential and Hessian.
//! * [`dynamics`]: forced Euler–Poincaré dynamics, tracking-error dynamics,
//!   the ideal feedback-linearizing law and the geometric integrators.
//! * [`nncontrol`]: the two-layer network controller, its learning rules and
//!   weight-sensitivity propagation.
//! * [`scenario`]: the leader/three-agent formation case study and its logs.
//! * [`validation`]: oracle suites that cross-check every derivative formula.

pub mod calculus;
pub mod dynamics;
pub mod errfun;
pub mod error;
pub mod liegroup;
pub mod nncontrol;
pub mod scenario;
pub mod validation;

pub use dynamics::{GainParams, Integrator, Scheme};
pub use errfun::ErrFunParams;
pub use error::{Error, Result};
pub use liegroup::{MatrixLieGroup, Se3, So3};
pub use nncontrol::{LearnParams, NNWeights};
pub use scenario::{ControlMode, RunLog, ScenarioConfig};

/// Version string recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
