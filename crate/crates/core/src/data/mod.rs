//! Synthetic task data: vocabularies, tokenization, corpus generation, and
//! pseudo-speech features.

mod corpus;
mod features;
mod tokenize;
mod vocab;

pub use corpus::{
    gen_examples, gen_toy_corpus, read_jsonl, write_jsonl, DatasetRecord, ParallelExample,
    TaskConfig,
};
pub use features::{cmvn, synth_features, token_prototype, FeatureSequence};
pub use tokenize::{normalize_text, TokenMode, Tokenizer, DEFAULT_MERGES};
pub use vocab::{TokenSequence, Vocabulary, EOS, NUM_RESERVED, PAD, SOS, UNK};

use crate::error::Result;

/// Tokenizer over the task's alphabet in the requested mode; subword mode
/// uses the committed default merge table.
pub fn tokenizer_for(mode: TokenMode, task: &TaskConfig) -> Result<Tokenizer> {
    match mode {
        TokenMode::Char => Tokenizer::char_over(task.tokenizer_alphabet()),
        TokenMode::Subword => Tokenizer::subword_over(task.tokenizer_alphabet(), DEFAULT_MERGES),
    }
}
