//! Fully connected sigmoid network trained with mini-batch Adam.

mod adam;
mod network;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use network::{
    accumulate_backward, accumulate_batch, backward, forward, forward_batch, forward_into, init_params, loss,
    numeric_gradient, predict_one, sigmoid, Activation, Architecture, BackwardBuffers, BatchWorkspace, Cache, Layer,
    Parameters,
};
pub use train::{evaluate_loss, iterations_per_epoch, train, train_observed, EarlyStopping, TrainConfig, TrainReport};
