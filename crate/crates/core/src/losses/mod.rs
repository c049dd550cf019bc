//! SSIM, the view-consistency loss and the adversarial objective.

mod gan;
mod ssim;

pub use gan::{
    gan_loss_with_r1, logistic, printed_term_direct, softplus_neg, softplus_neg_grad, GanLoss, GanLossConfig,
    GanObjective, LinearDiscriminator, DEFAULT_ETA, DEFAULT_LAMBDA,
};
pub use ssim::{
    ssim, ssim_on, ssim_with_grad, view_consistency_loss, view_consistency_loss_with_grad, view_consistency_on,
    SsimConfig, DEFAULT_DELTA,
};
