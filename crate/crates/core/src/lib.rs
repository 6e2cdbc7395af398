//! Forward model and orbital-angular-momentum estimator for a double
//! Laguerre-Gaussian rotational-cavity optomechanical system.
//!
//! The pipeline is `params` → `steady_state` → `response` → `spectrum` →
//! `oam_meter`; `oracle` integrates the full nonlinear mean-field equations
//! in the time domain as an independent check on the linearised path.

pub mod linalg;
pub mod oam_meter;
pub mod oracle;
pub mod params;
pub mod pipeline;
pub mod response;
pub mod spectrum;
pub mod steady_state;

pub use params::{derive_params, parse_config, validate, Detuning2Spec, SystemConfig, SystemParams};
pub use steady_state::{solve_steady, SteadySolveReport, SteadyState};
