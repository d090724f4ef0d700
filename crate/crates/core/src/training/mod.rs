//! Contrastive training of the context and response generators.

mod loss;
mod optim;
mod train;

pub use loss::{loss_gradients, npair_from_kl, npair_loss, Batch, Gradients, NpairLoss};
pub use optim::AdamW;
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};
