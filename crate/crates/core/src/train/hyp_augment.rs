//! MT training-corpus augmentation with ASR hypotheses: the oracle
//! (source → target) pairs are joined by (1-best hypothesis → target) pairs
//! so the MT model sees the error patterns it will face at decode time.

use crate::data::{FeatureSequence, ParallelExample};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct AugmentedCorpus {
    pub pairs: Vec<(String, String)>,
    /// Examples whose decode failed or produced empty text.
    pub skipped: usize,
}

/// `decode` maps features to the 1-best hypothesis text (None to skip).
pub fn augment_with_hypotheses<F>(examples: &[ParallelExample], mut decode: F) -> AugmentedCorpus
where
    F: FnMut(&FeatureSequence) -> Result<Option<String>>,
{
    let mut pairs: Vec<(String, String)> = examples
        .iter()
        .map(|e| (e.source.clone(), e.target.clone()))
        .collect();
    let mut skipped = 0usize;
    for ex in examples {
        match decode(&ex.features) {
            Ok(Some(hyp)) if !hyp.is_empty() => pairs.push((hyp, ex.target.clone())),
            _ => skipped += 1,
        }
    }
    AugmentedCorpus { pairs, skipped }
}
