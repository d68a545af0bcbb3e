//! Dataset labeling, the classifier and interface losses, and the
//! alternating training loop.

mod algorithm;
mod config;
mod labels;
mod loss;

pub use algorithm::{algorithm1, init_networks, History, IterRecord, Phase, PhaseEvent, PhaseRecord, TrainOutcome};
pub use config::{KInit, KLoss, StepMode, TrainConfig};
pub use labels::{best_initial_witnesses, initial_violations, label_dataset, DatasetLabels, Label};
pub use loss::{ce, loss_k, loss_v, LossBreakdown, CE_CLAMP};
