//! Model assembly, training, evaluation and checkpoints.

mod checkpoint;
mod config;
mod metrics;
mod model;
mod optim;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{mode_name, parse_mode, ModelConfig, RunConfig, TrainConfig};
pub use metrics::{argmax, binary_auc, compute_metrics, Metrics};
pub use model::{BagModel, HgMambaModel, MeanPoolModel, ModelCache, MIN_EDGE_WEIGHT};
pub use optim::{adam_step, lr_schedule, AdamState, DEFAULT_BETAS, DEFAULT_EPS};
pub use train::{
    eval_scan_seed, evaluate, train, train_scan_seed, train_with, EpochRecord, History,
    TrainOutcome,
};
