//! Adam, checkpoints, the training loop, checkpoint-watching evaluation,
//! the test runner and backbone pretraining.

mod adam;
mod checkpoint;
mod eval;
mod pretrain;
mod strategy;
mod trainer;

pub use adam::{Adam, AdamConfig, Moments};
pub use checkpoint::{
    checkpoint_name, fingerprint, parse_checkpoint_name, Checkpoint, CheckpointWriter, ModelManifest, CKPT_MAGIC,
    CKPT_VERSION, MODEL_FILE,
};
pub use eval::{
    append_report, eval_loop, evaluate, load_model, predict, read_report, run_test, score, select_best,
    CheckpointWatcher, EvalLoopConfig, EvalRow, Prediction, REPORT_HEADER,
};
pub use pretrain::{aux_example, pretrain_backbone, PretrainConfig, AUX_CLASSES};
pub use strategy::Case;
pub use trainer::{TrainConfig, Trainer};
