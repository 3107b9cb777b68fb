//! Scorer adapter for a [`SeqModel`] over one encoded input.

use crate::data::SOS;
use crate::error::Result;
use crate::tensor::{no_grad, Tensor};
use crate::transformer::{EncoderInput, Forward, SeqModel};

use super::Scorer;

pub struct ModelScorer<'a> {
    model: &'a SeqModel,
    states: Tensor,
}

impl<'a> ModelScorer<'a> {
    /// Encodes the input once; decode steps reuse the encoder states.
    pub fn new(model: &'a SeqModel, input: EncoderInput) -> Result<ModelScorer<'a>> {
        let states = no_grad(|| model.encode(input, &mut Forward::eval()))?;
        Ok(ModelScorer { model, states })
    }

    /// Wraps precomputed encoder states (the joint-model bridge path).
    pub fn from_states(model: &'a SeqModel, states: Tensor) -> ModelScorer<'a> {
        ModelScorer { model, states }
    }

    pub fn states(&self) -> &Tensor {
        &self.states
    }
}

impl Scorer for ModelScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.model.config().vocab_tgt
    }

    fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        let mut full = Vec::with_capacity(prefix.len() + 1);
        full.push(SOS);
        full.extend_from_slice(prefix);
        self.model.decode_step(&self.states, &full)
    }

    fn next_with_state(&self, prefix: &[u32]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let mut full = Vec::with_capacity(prefix.len() + 1);
        full.push(SOS);
        full.extend_from_slice(prefix);
        let (dist, state) = self.model.decode_step_with_state(&self.states, &full)?;
        Ok((dist, Some(state)))
    }
}
