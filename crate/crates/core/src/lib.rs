//! Desk-scale spoken-language-translation toolkit.
//!
//! Implements the full stack needed to study cascade, end-to-end, and
//! jointly trained speech-translation systems on synthetic tasks:
//! a small autodiff tensor core, transformer encoder-decoder models with a
//! convolution speech frontend, beam search with EOS thresholding and
//! coupled cascade decoding, multi-task joint training with an ASR
//! auxiliary loss, and WER/CER/BLEU evaluation.

pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod decode;
pub mod train;
pub mod transformer;

pub use error::{Error, Result};
pub use params::{average_checkpoints, Checkpoint, Param};
pub use tensor::Tensor;
