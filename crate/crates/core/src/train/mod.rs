//! Training loops, batching, checkpoint averaging plumbing, and the
//! training-time augmentations.

mod augment;
mod batch;
mod hyp_augment;
mod joint;
mod trainer;

pub use augment::embedding_average_augment;
pub use batch::make_batches;
pub use hyp_augment::{augment_with_hypotheses, AugmentedCorpus};
pub use joint::{
    train_joint, train_joint_with, Connector, ConnectorKind, FreezeMode, JointExample,
    JointLossTerms, JointModel, JointTrainOutput, TokenBridge, ASR_PREFIX, MT_PREFIX,
};
pub use trainer::{
    average_trailing, curve_to_csv, train, train_with, CurvePoint, TrainConfig, TrainExample,
    TrainInput, TrainOutput,
};
