//! Losses, Adam, finite-difference gradient checks and the training loop.

mod adam;
mod gradcheck;
mod loss;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{
    gradcheck, gradcheck_suite, relative_error, GradcheckReport, SuiteEntry, GRADCHECK_EPSILON,
    GRADCHECK_TOLERANCE,
};
pub use loss::{mse_loss, psnr, psnr_from_mse, PSNR_CAP};
pub use train::{fit, FitLog, LossRecord, TrainConfig};
