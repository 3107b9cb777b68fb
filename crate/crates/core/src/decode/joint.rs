//! Joint-model decoding: the ASR beam carries decoder hidden traces, each
//! trace bridges into a separate MT search, and the union of translations is
//! ranked by the combined score log P(z|x) + log P(y|bridge(z)).

use crate::error::{Error, Result};

use super::{beam_search, DecodeConfig, Hypothesis, Scorer};

#[derive(Debug, Clone)]
pub struct JointDecodeOutput {
    pub translation: Hypothesis,
    pub asr_hypothesis: Hypothesis,
    pub combined_score: f64,
    /// Every ASR hypothesis that contributed an MT search.
    pub asr_nbest: Vec<Hypothesis>,
}

/// Runs the ASR beam with hidden-state recording, builds one MT scorer per
/// hypothesis via `mt_for` (the hypothesis carries both its hidden trace and
/// its discrete tokens, so bridges and ensembles can use either), and
/// returns the best multiplied-out pair. The returned translation is always
/// a member of some per-hypothesis n-best list.
pub fn joint_decode<S, F>(
    asr: &(impl Scorer + ?Sized),
    mt_for: F,
    cfg_asr: &DecodeConfig,
    cfg_mt: &DecodeConfig,
) -> Result<JointDecodeOutput>
where
    S: Scorer,
    F: Fn(&Hypothesis) -> Result<S>,
{
    let mut cfg = cfg_asr.clone();
    cfg.record_hidden = true;
    let asr_hyps = beam_search(asr, &cfg)?;
    let usable: Vec<&Hypothesis> = asr_hyps.iter().filter(|h| !h.is_content_empty()).collect();
    if usable.is_empty() {
        return Err(Error::Decode(
            "joint decode: every ASR hypothesis was empty".into(),
        ));
    }
    let mut best: Option<(f64, Hypothesis, Hypothesis)> = None;
    for z in &usable {
        if z.hidden_trace.is_none() {
            return Err(Error::Decode("joint decode: hidden trace missing".into()));
        }
        let mt = mt_for(z)?;
        for y in beam_search(&mt, cfg_mt)? {
            let key = z.logprob + y.logprob;
            let better = match &best {
                None => true,
                Some((bk, by, bz)) => {
                    key > *bk
                        || (key == *bk
                            && (y.tokens < by.tokens
                                || (y.tokens == by.tokens && z.tokens < bz.tokens)))
                }
            };
            if better {
                best = Some((key, y, (*z).clone()));
            }
        }
    }
    let (combined_score, translation, asr_hypothesis) = best.expect("usable nonempty");
    Ok(JointDecodeOutput {
        translation,
        asr_hypothesis,
        combined_score,
        asr_nbest: usable.into_iter().cloned().collect(),
    })
}
