//! Feed-forward classifier, optimizer and training loop.

mod model;
mod train;

pub use model::{
    forward, gradient, init_model, loss_and_gradient, sgd_step, softmax, BatchItem, BatchOutcome, Gradients,
    ModelParams, Velocity,
};
pub use train::{
    lr_at, predict_all, train, ConfidenceTables, CurriculumConfig, EpochRecord, LossKind, Prediction, Strategy,
    TrainConfig, TrainHistory, Trainer,
};
