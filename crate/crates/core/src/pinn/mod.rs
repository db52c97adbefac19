//! Physics-informed training of the residual network on the normalized
//! coupled equations.

pub mod metrics;
pub mod optim;
pub mod residual;
pub mod sampling;
pub mod train;

pub use metrics::{analytic_reference, mse_vs_reference, ModeError};
pub use optim::{Adam, Plateau};
pub use residual::{ic_residual, pde_residual, IcLoss, PdeLoss};
pub use sampling::{sample_collocation, CollocationSet, CORRIDOR_HALF};
pub use train::{train, LossRecord, StopReason, TrainConfig, TrainReport};
