//! Student encoders and the distillation objective.

mod head;
mod loss;
mod optim;
mod train;

pub use head::{silu, silu_grad, HeadGrads, Layer, MlpHead};
pub use loss::{cross_modal_loss, soft_target_ce, target_entropy};
pub use optim::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use train::{
    total_loss, train, BatchNoise, LossBreakdown, LossRecord, Modality, ModelGrads, StudentModel, TrainConfig,
    TrainedModel,
};
