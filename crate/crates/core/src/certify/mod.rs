//! Numerical checks of optimality: stationarity, dual certificates, curvature
//! probes, induced-regularizer estimates and factor transformations.

mod certificate;
mod hessian;
mod induced;
mod transforms;

pub use certificate::{global_certificate, global_certificate_with, stationarity_residual, Certificate};
pub use hessian::{hessian_min_eigenvalue, HESSIAN_SIZE_LIMIT};
pub use induced::{convexity_probe, induced_reg_estimate, PenaltySchedule};
pub use transforms::{rebalance_factors, scaling_transport, RebalanceDirection};
