//! Dense rectifier classifiers trained from scratch: forward pass, exact gradients for the
//! one-hot and distillation objectives, momentum SGD and learning-rate schedules.

pub mod io;
mod loss;
mod model;
mod optim;
mod train;

pub use loss::{loss_and_grads, LossKind, LossSpec};
pub use model::{argmax, forward, predict_rows, softmax_rows, Activation, Dense, Forward, ModelSpec, Params};
pub use optim::{OptimizerConfig, Schedule, Sgd};
pub use train::{train, TrainedModel};
