//! Experiment orchestration: the toy-scale grid of ASR, MT, end-to-end,
//! cascade, joint, augmentation, and pretraining runs, with append-only
//! result persistence and comparison tables.

mod config;
mod report;
mod runner;

pub use config::{ExperimentConfig, ExperimentKind, ModelSpec};
pub use report::{append_rows, compare_report, read_rows, ResultRow};
pub use runner::{
    asr_decode_cfg, cascade_utt, mt_decode_cfg, run_experiment, transcribe, translate_text,
    Pipeline,
};
