//! The learning substrate: a rectifier network with exact gradients, the
//! losses used by every protocol and the per-label tables exchanged by the
//! distillation schemes.

mod loss;
mod model;
mod tables;
mod train;

pub use loss::{cross_entropy, cross_entropy_grad, distillation_grad, softmax, PROB_FLOOR};
pub use model::{forward_logits, Architecture, ModelWeights};
pub use tables::{
    average_logits, leave_one_out, local_covariate_means, logits_at_covariates, mixed_up_covariates, CovariateTable,
    LogitTable,
};
pub use train::{evaluate_accuracy, hfd_distill_loss, hfd_distill_step, regularized_loss, sgd_step};
