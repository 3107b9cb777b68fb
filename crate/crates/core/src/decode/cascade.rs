//! Coupled cascade search: an ASR n-best list feeds per-hypothesis MT
//! searches, with three coupling modes.
//!
//! `one_best` translates only the top ASR hypothesis. `n_best` translates
//! every ASR hypothesis and keeps the translation with the best MT-only
//! normalized score. `ranked_n_best` couples the searches: every (z, y)
//! pair competes on log P(z|x) + log P(y|z), i.e. each MT beam is seeded
//! with its ASR hypothesis's sentence log-probability as a constant score
//! offset (constant per beam, so it is applied at union-ranking time).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{beam_search, DecodeConfig, Hypothesis, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeMode {
    OneBest,
    NBest,
    RankedNBest,
}

#[derive(Debug, Clone)]
pub struct CascadeOutput {
    pub translation: Hypothesis,
    pub asr_hypothesis: Hypothesis,
    /// log P(z|x) + log P(y|z) of the returned pair.
    pub combined_score: f64,
    /// ASR hypotheses with empty content, skipped before translation.
    pub skipped_empty: usize,
}

/// Decodes the ASR n-best, bridges each hypothesis to an MT scorer via
/// `mt_for`, and selects the output pair per `mode`.
pub fn cascade_decode<S, F>(
    asr: &(impl Scorer + ?Sized),
    mt_for: F,
    mode: CascadeMode,
    cfg_asr: &DecodeConfig,
    cfg_mt: &DecodeConfig,
) -> Result<CascadeOutput>
where
    S: Scorer,
    F: Fn(&Hypothesis) -> Result<S>,
{
    let asr_hyps = beam_search(asr, cfg_asr)?;
    let mut skipped = 0usize;
    let usable: Vec<&Hypothesis> = asr_hyps
        .iter()
        .filter(|h| {
            let empty = h.is_content_empty();
            if empty {
                skipped += 1;
            }
            !empty
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::Decode(
            "cascade: every ASR hypothesis was empty".into(),
        ));
    }
    let sources: &[&Hypothesis] = match mode {
        CascadeMode::OneBest => &usable[..1],
        _ => &usable[..],
    };
    let mut best: Option<(f64, Hypothesis, Hypothesis)> = None;
    for z in sources {
        let mt = mt_for(z)?;
        let translations = beam_search(&mt, cfg_mt)?;
        for y in translations {
            let key = match mode {
                // MT-only ranking; the beam already sorted each list, but the
                // union across z's needs an explicit comparison
                CascadeMode::OneBest | CascadeMode::NBest => {
                    y.normalized_score(cfg_mt.length_penalty_alpha)
                }
                CascadeMode::RankedNBest => z.logprob + y.logprob,
            };
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
        if mode == CascadeMode::OneBest {
            break;
        }
    }
    let (_, translation, asr_hypothesis) = best.expect("at least one usable source");
    let combined_score = asr_hypothesis.logprob + translation.logprob;
    Ok(CascadeOutput {
        translation,
        asr_hypothesis,
        combined_score,
        skipped_empty: skipped,
    })
}
