//! Losses, negative sampling, Adam and the early-stopped training loop.

mod adam;
mod loss;
mod sampling;
mod trainer;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use loss::{
    bpr_loss_and_grad, bpr_objective, ssm_loss_and_grad, ssm_objective, LossOutput, Objective,
};
pub use sampling::{BprTriple, InteractionSampler, SsmBatch};
pub use trainer::{
    train, EarlyStopping, LossKind, Observation, StopReason, TrainConfig, TrainReport, Trainer,
    ValidationPoint,
};
