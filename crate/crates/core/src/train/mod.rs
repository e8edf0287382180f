//! Pretraining and contrastive training.

mod adamw;
mod gradcheck;
mod loss;
mod mlm;
mod objective;
mod trainer;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use gradcheck::{grad_check, rel_error, CoordCheck, GradCheckOptions, GradCheckReport};
pub use loss::{
    cosine_grad, info_nce, loss_global, loss_joint, loss_local, GlobalLoss, GlobalVectors, InfoNceVariant, LocalLoss,
    LocalVectors,
};
pub use mlm::{mask_ids, mlm_accuracy, mlm_step, pretrain_mlm, MlmConfig, MlmHead, MlmOutput};
pub use objective::{batch_loss, batch_loss_and_grads, globals_with_grads, BatchLoss, Objective};
pub use trainer::{history_to_csv, train, write_history, Ablation, LossRecord, TrainConfig};
