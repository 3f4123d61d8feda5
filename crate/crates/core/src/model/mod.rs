//! Losses, regularizers, proximal operators and per-sample code solves.

mod loss;
mod prox;
pub(crate) mod regularizer;
mod sample;

pub(crate) use loss::BoundLoss;
pub use loss::{loss_gradient, loss_value, robust_inner_solve};
pub(crate) use prox::{prox_group_l2, prox_nonsmooth, prox_sql1_unchecked, smooth_nu};
pub use prox::{prox_sql1, soft_threshold, ProxResult};
pub use regularizer::{reg_matrix_value, reg_subgradient, reg_vector_value};
pub(crate) use sample::{sample_loss, sigma_max_sq, CodeSolver, SamplePenalty};
pub use sample::{solve_h_given_d, InnerConfig, InnerMode};
