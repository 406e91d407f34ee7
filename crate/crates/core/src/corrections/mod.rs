//! Minor corrections: the replacement buffer and the training engine shared
//! by the differential critic, its ablations and the baselines.

mod buffer;
mod config;
mod engine;

pub use buffer::ReplacementBuffer;
pub use config::TrainingConfig;
pub use engine::{
    build_critic, build_generator, generate_batch, generate_with, human_timeout, pretrain, train,
    train_baseline, train_dicgan, ConvergenceRecord, CorrectionRow, DesiredFn, Method, NoopObserver,
    Phase, StopReason, TrainedModel, TrainingObserver, TrainingRun,
};
