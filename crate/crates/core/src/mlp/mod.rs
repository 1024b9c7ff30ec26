//! Feedforward ReLU networks trained with Adam, and their ensembles.

mod adam;
mod ensemble;
mod linalg;
mod network;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use ensemble::{confidence_interval, mean_and_sample_std, t_critical, train_ensemble, Ensemble, Prediction};
pub use network::{Dense, Mlp};
pub use train::{train_member, MemberReport, TrainConfig, TrainingSet};
