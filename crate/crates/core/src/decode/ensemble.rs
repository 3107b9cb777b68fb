//! Ensembles by softmax averaging: member probability distributions are
//! averaged in probability space for every prefix.

use crate::error::{Error, Result};

use super::Scorer;

pub struct EnsembleScorer<'a> {
    members: Vec<Box<dyn Scorer + 'a>>,
    /// Member whose hidden states the ensemble reports (the joint model when
    /// ensembling a joint ASR with a stand-alone one).
    state_member: usize,
}

impl<'a> EnsembleScorer<'a> {
    pub fn new(members: Vec<Box<dyn Scorer + 'a>>) -> Result<EnsembleScorer<'a>> {
        let first = members
            .first()
            .ok_or_else(|| Error::Decode("ensemble: no members".into()))?;
        let vocab = first.vocab_size();
        for (i, m) in members.iter().enumerate() {
            if m.vocab_size() != vocab {
                return Err(Error::Decode(format!(
                    "ensemble: member {i} has vocabulary {}, expected {vocab}",
                    m.vocab_size()
                )));
            }
        }
        Ok(EnsembleScorer {
            members,
            state_member: 0,
        })
    }

    pub fn with_state_member(mut self, idx: usize) -> EnsembleScorer<'a> {
        self.state_member = idx;
        self
    }
}

impl Scorer for EnsembleScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.members[0].vocab_size()
    }

    fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        let mut mean = vec![0.0f64; self.vocab_size()];
        for m in &self.members {
            let dist = m.next_distribution(prefix)?;
            if dist.len() != mean.len() {
                return Err(Error::Decode(
                    "ensemble: member distribution width changed".into(),
                ));
            }
            for (acc, p) in mean.iter_mut().zip(&dist) {
                *acc += p;
            }
        }
        let n = self.members.len() as f64;
        for v in mean.iter_mut() {
            *v /= n;
        }
        Ok(mean)
    }

    fn next_with_state(&self, prefix: &[u32]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let dist = self.next_distribution(prefix)?;
        let (_, state) = self.members[self.state_member].next_with_state(prefix)?;
        Ok((dist, state))
    }
}
