//! Beam search with EOS thresholding and length normalization, plus the
//! coupled cascade and joint searches built on top of it.
//!
//! A [`Scorer`] yields the next-token distribution for any emitted-token
//! prefix (the start symbol is implicit). Beam search keeps `beam` live
//! prefixes ranked by cumulative log-probability. At each step the EOS
//! extension of a live prefix competes with ordinary extensions and is
//! admitted only if p(eos) ≥ γ·p(best non-eos token); admitted EOS
//! candidates that outrank the beam cutoff move to the finished set without
//! consuming a live slot. Reserved non-EOS ids (pad/unk/sos) are never
//! proposed. When a prefix reaches `max_len` emitted tokens, EOS is force
//! appended with its actual log-probability so every returned hypothesis
//! scores as the sum of its per-step log-probabilities.

mod cascade;
mod ensemble;
mod joint;
mod model_scorer;

pub use cascade::{cascade_decode, CascadeMode, CascadeOutput};
pub use ensemble::EnsembleScorer;
pub use joint::{joint_decode, JointDecodeOutput};
pub use model_scorer::ModelScorer;

use crate::data::{EOS, NUM_RESERVED};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Next-token distribution provider over a fixed target vocabulary.
pub trait Scorer {
    fn vocab_size(&self) -> usize;

    /// Normalized distribution over the vocabulary given the emitted-token
    /// prefix (without the start symbol).
    fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>>;

    /// Distribution plus, when available, the decoder hidden state that
    /// produced it.
    fn next_with_state(&self, prefix: &[u32]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        Ok((self.next_distribution(prefix)?, None))
    }
}

/// Scorer backed by a closure; handy for table-driven tests and rescoring.
pub struct FnScorer<F>
where
    F: Fn(&[u32]) -> Result<Vec<f64>>,
{
    pub vocab: usize,
    pub f: F,
}

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&[u32]) -> Result<Vec<f64>>,
{
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        (self.f)(prefix)
    }
}

/// A beam-search hypothesis: emitted tokens and their cumulative
/// log-probability, with optional decoder states (one per emitted token).
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub logprob: f64,
    pub finished: bool,
    pub hidden_trace: Option<Vec<Vec<f64>>>,
}

impl Hypothesis {
    /// logprob / len(tokens)^alpha.
    pub fn normalized_score(&self, alpha: f64) -> f64 {
        length_normalized_score(self.logprob, self.tokens.len().max(1), alpha)
    }

    /// Emitted tokens without the trailing EOS.
    pub fn content(&self) -> &[u32] {
        match self.tokens.split_last() {
            Some((&last, rest)) if last == EOS => rest,
            _ => &self.tokens,
        }
    }

    pub fn is_content_empty(&self) -> bool {
        self.content().is_empty()
    }
}

/// Length-penalized score: logprob / length^alpha.
pub fn length_normalized_score(logprob: f64, length: usize, alpha: f64) -> f64 {
    assert!(length >= 1, "length_normalized_score: length must be >= 1");
    logprob / (length as f64).powf(alpha)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam: usize,
    pub length_penalty_alpha: f64,
    /// EOS admitted only if p(eos) ≥ gamma · p(top non-eos candidate).
    pub eos_gamma: f64,
    /// Maximum emitted content tokens before EOS is forced.
    pub max_len: usize,
    pub n_best: usize,
    /// Record decoder hidden states on every hypothesis.
    #[serde(default)]
    pub record_hidden: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 10,
            length_penalty_alpha: 1.0,
            eos_gamma: 1.0,
            max_len: 64,
            n_best: 1,
            record_hidden: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam < 1 || self.max_len < 1 {
            return Err(Error::Config(
                "decode: beam and max_len must be >= 1".into(),
            ));
        }
        if self.n_best < 1 || self.n_best > self.beam {
            return Err(Error::Config(format!(
                "decode: n_best {} outside 1..=beam {}",
                self.n_best, self.beam
            )));
        }
        if self.eos_gamma < 0.0 || self.length_penalty_alpha < 0.0 {
            return Err(Error::Config(
                "decode: gamma and length penalty must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn with_n_best(mut self, n: usize) -> Self {
        self.n_best = n;
        self
    }
}

struct Live {
    tokens: Vec<u32>,
    logprob: f64,
    trace: Option<Vec<Vec<f64>>>,
    /// Distribution at this prefix, filled when the hypothesis is expanded.
    dist: Vec<f64>,
    state: Option<Vec<f64>>,
}

fn validated_distribution(
    scorer: &(impl Scorer + ?Sized),
    prefix: &[u32],
    need_state: bool,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let (dist, state) = scorer.next_with_state(prefix)?;
    if dist.len() != scorer.vocab_size() {
        return Err(Error::Decode(format!(
            "scorer distribution has {} entries, vocabulary is {}",
            dist.len(),
            scorer.vocab_size()
        )));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Decode(
            "scorer distribution has negative or non-finite mass".into(),
        ));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-4 {
        return Err(Error::Decode(format!(
            "scorer returned unnormalized distribution (sum {sum:.6})"
        )));
    }
    if need_state && state.is_none() {
        return Err(Error::Decode(
            "scorer does not expose decoder hidden states".into(),
        ));
    }
    Ok((dist, state))
}

/// Runs the beam search and returns the `n_best` hypotheses sorted by
/// length-normalized score (ties broken by token order).
pub fn beam_search(scorer: &(impl Scorer + ?Sized), cfg: &DecodeConfig) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    let vocab = scorer.vocab_size();
    if vocab <= EOS as usize {
        return Err(Error::Decode(format!(
            "scorer vocabulary {vocab} lacks the reserved ids"
        )));
    }
    let mut live: Vec<Live> = vec![Live {
        tokens: Vec::new(),
        logprob: 0.0,
        trace: cfg.record_hidden.then(Vec::new),
        dist: Vec::new(),
        state: None,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _step in 0..cfg.max_len {
        for l in live.iter_mut() {
            let (dist, state) = validated_distribution(scorer, &l.tokens, cfg.record_hidden)?;
            l.dist = dist;
            l.state = state;
        }
        // candidate = (parent index, token, cumulative logprob)
        let mut candidates: Vec<(usize, u32, f64)> = Vec::new();
        for (pi, l) in live.iter().enumerate() {
            let top_non_eos = (0..vocab as u32)
                .filter(|&t| t != EOS && t >= NUM_RESERVED)
                .map(|t| l.dist[t as usize])
                .fold(0.0f64, f64::max);
            for t in 0..vocab as u32 {
                if l.dist[t as usize] <= 0.0 {
                    continue; // zero-probability extensions never enter the beam
                }
                if t == EOS {
                    if l.dist[EOS as usize] >= cfg.eos_gamma * top_non_eos {
                        candidates.push((pi, EOS, l.logprob + l.dist[EOS as usize].ln()));
                    }
                } else if t >= NUM_RESERVED {
                    candidates.push((pi, t, l.logprob + l.dist[t as usize].ln()));
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.2.total_cmp(&a.2).then_with(|| {
                let ta = (&live[a.0].tokens, a.1);
                let tb = (&live[b.0].tokens, b.1);
                cmp_extended(ta, tb)
            })
        });
        let mut next_live: Vec<Live> = Vec::with_capacity(cfg.beam);
        for (pi, tok, lp) in candidates {
            let parent = &live[pi];
            if tok == EOS {
                let mut tokens = parent.tokens.clone();
                tokens.push(EOS);
                finished.push(Hypothesis {
                    tokens,
                    logprob: lp,
                    finished: true,
                    hidden_trace: extend_trace(parent),
                });
            } else {
                let mut tokens = parent.tokens.clone();
                tokens.push(tok);
                next_live.push(Live {
                    tokens,
                    logprob: lp,
                    trace: extend_trace(parent),
                    dist: Vec::new(),
                    state: None,
                });
                if next_live.len() == cfg.beam {
                    break;
                }
            }
        }
        live = next_live;
        if finished.len() >= cfg.beam || live.is_empty() {
            live.clear();
            break;
        }
        // prune when no live prefix can still reach the kept n-best
        if finished.len() >= cfg.n_best {
            let mut scores: Vec<f64> = finished
                .iter()
                .map(|h| h.normalized_score(cfg.length_penalty_alpha))
                .collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            let nth = scores[cfg.n_best - 1];
            let horizon = ((cfg.max_len + 1) as f64).powf(cfg.length_penalty_alpha);
            let best_bound = live
                .iter()
                .map(|l| l.logprob / horizon)
                .fold(f64::NEG_INFINITY, f64::max);
            if best_bound < nth - 1e-9 {
                live.clear();
                break;
            }
        }
    }

    // hypotheses still live at max_len: force-append EOS at its true
    // log-probability so score bookkeeping stays exact
    for l in &live {
        let (dist, state) = validated_distribution(scorer, &l.tokens, cfg.record_hidden)?;
        let parent = Live {
            tokens: l.tokens.clone(),
            logprob: l.logprob,
            trace: l.trace.clone(),
            dist: dist.clone(),
            state,
        };
        let mut tokens = l.tokens.clone();
        tokens.push(EOS);
        finished.push(Hypothesis {
            tokens,
            logprob: l.logprob + dist[EOS as usize].ln(),
            finished: true,
            hidden_trace: extend_trace(&parent),
        });
    }
    if finished.is_empty() {
        return Err(Error::Decode("beam search produced no hypotheses".into()));
    }
    finished.sort_by(|a, b| {
        b.normalized_score(cfg.length_penalty_alpha)
            .total_cmp(&a.normalized_score(cfg.length_penalty_alpha))
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    finished.truncate(cfg.n_best);
    Ok(finished)
}

fn extend_trace(parent: &Live) -> Option<Vec<Vec<f64>>> {
    parent.trace.as_ref().map(|t| {
        let mut t = t.clone();
        t.push(parent.state.clone().expect("state recorded with trace"));
        t
    })
}

/// Lexicographic order of two prefixes each extended by one token.
fn cmp_extended(a: (&Vec<u32>, u32), b: (&Vec<u32>, u32)) -> std::cmp::Ordering {
    let (at, ax) = a;
    let (bt, bx) = b;
    let alen = at.len() + 1;
    let blen = bt.len() + 1;
    for i in 0..alen.min(blen) {
        let av = if i < at.len() { at[i] } else { ax };
        let bv = if i < bt.len() { bt[i] } else { bx };
        match av.cmp(&bv) {
            std::cmp::Ordering::Equal => {}
            other => return other,
        }
    }
    alen.cmp(&blen)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic table scorer: the distribution for a prefix is a fixed
    /// function of (seed, prefix).
    pub(crate) fn table_scorer(seed: u64, vocab: usize) -> impl Scorer {
        use rand::{Rng, SeedableRng};
        FnScorer {
            vocab,
            f: move |prefix: &[u32]| {
                let mut key = seed ^ 0x9e37;
                for &t in prefix {
                    key = key.wrapping_mul(0x100000001b3).wrapping_add(t as u64 + 1);
                }
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(key);
                let mut dist = vec![0.0; vocab];
                for slot in dist.iter_mut().skip(3) {
                    *slot = rng.random_range(0.05..1.0);
                }
                let sum: f64 = dist.iter().sum();
                for d in dist.iter_mut() {
                    *d /= sum;
                }
                Ok(dist)
            },
        }
    }

    fn greedy_argmax(scorer: &impl Scorer, max_len: usize) -> (Vec<u32>, f64) {
        let mut tokens = Vec::new();
        let mut lp = 0.0;
        for _ in 0..max_len {
            let dist = scorer.next_distribution(&tokens).unwrap();
            let (best, p) = dist
                .iter()
                .enumerate()
                .skip(3)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            lp += p.ln();
            tokens.push(best as u32);
            if best as u32 == EOS {
                return (tokens, lp);
            }
        }
        let dist = scorer.next_distribution(&tokens).unwrap();
        lp += dist[EOS as usize].ln();
        tokens.push(EOS);
        (tokens, lp)
    }

    #[test]
    fn beam_one_gamma_zero_is_greedy() {
        for seed in 0..20 {
            let scorer = table_scorer(seed, 6);
            let cfg = DecodeConfig {
                beam: 1,
                eos_gamma: 0.0,
                length_penalty_alpha: 1.0,
                max_len: 5,
                n_best: 1,
                record_hidden: false,
            };
            let got = beam_search(&scorer, &cfg).unwrap();
            let (tokens, lp) = greedy_argmax(&scorer, 5);
            assert_eq!(got[0].tokens, tokens, "seed {seed}");
            assert!((got[0].logprob - lp).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_gamma_never_emits_eos_early() {
        let scorer = table_scorer(3, 6);
        let cfg = DecodeConfig {
            beam: 3,
            eos_gamma: f64::INFINITY,
            max_len: 4,
            n_best: 3,
            ..DecodeConfig::default()
        };
        let hyps = beam_search(&scorer, &cfg).unwrap();
        for h in &hyps {
            assert_eq!(h.tokens.len(), 5, "forced eos only at max_len");
            assert_eq!(*h.tokens.last().unwrap(), EOS);
            assert!(h.finished);
        }
    }

    #[test]
    fn nbest_sorted_and_deterministic() {
        let scorer = table_scorer(8, 6);
        let cfg = DecodeConfig {
            beam: 8,
            n_best: 8,
            max_len: 3,
            eos_gamma: 0.0,
            ..DecodeConfig::default()
        };
        let hyps = beam_search(&scorer, &cfg).unwrap();
        for w in hyps.windows(2) {
            let a = w[0].normalized_score(1.0);
            let b = w[1].normalized_score(1.0);
            assert!(a >= b || (a - b).abs() < 1e-12);
        }
        let again = beam_search(&scorer, &cfg).unwrap();
        for (x, y) in hyps.iter().zip(&again) {
            assert_eq!(x.tokens, y.tokens);
        }
    }

    #[test]
    fn unnormalized_scorer_rejected() {
        let bad = FnScorer {
            vocab: 6,
            f: |_: &[u32]| Ok(vec![0.3; 6]),
        };
        let err = beam_search(&bad, &DecodeConfig::default()).unwrap_err();
        assert!(err.to_string().contains("unnormalized"));
    }

    #[test]
    fn length_penalty_examples() {
        assert_eq!(length_normalized_score(-4.0, 4, 0.0), -4.0);
        assert_eq!(length_normalized_score(-4.0, 4, 1.0), -1.0);
        // ordering inversion between alpha 0 and alpha 1
        let short = (-3.0, 2usize);
        let long = (-5.0, 6usize);
        assert!(length_normalized_score(short.0, short.1, 0.0) > length_normalized_score(long.0, long.1, 0.0));
        assert!(length_normalized_score(short.0, short.1, 1.0) < length_normalized_score(long.0, long.1, 1.0));
    }

    #[test]
    fn finished_implies_trailing_eos_and_consistent_logprob() {
        let scorer = table_scorer(5, 7);
        let cfg = DecodeConfig {
            beam: 4,
            n_best: 4,
            max_len: 4,
            ..DecodeConfig::default()
        };
        for h in beam_search(&scorer, &cfg).unwrap() {
            assert!(h.finished);
            assert_eq!(*h.tokens.last().unwrap(), EOS);
            assert!(h.logprob <= 0.0);
            // forced rescore: independent accumulation over the prefix
            let mut lp = 0.0;
            for i in 0..h.tokens.len() {
                let dist = scorer.next_distribution(&h.tokens[..i]).unwrap();
                lp += dist[h.tokens[i] as usize].ln();
            }
            assert!((lp - h.logprob).abs() < 1e-5);
        }
    }

    #[test]
    fn hidden_trace_has_one_state_per_token() {
        struct Stateful;
        impl Scorer for Stateful {
            fn vocab_size(&self) -> usize {
                6
            }
            fn next_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>> {
                Ok(self.next_with_state(prefix)?.0)
            }
            fn next_with_state(&self, prefix: &[u32]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
                let mut d = vec![0.0; 6];
                d[EOS as usize] = 0.1 + 0.2 * prefix.len() as f64;
                d[4] = 1.0 - d[EOS as usize];
                Ok((d, Some(vec![prefix.len() as f64])))
            }
        }
        let cfg = DecodeConfig {
            beam: 2,
            n_best: 2,
            max_len: 3,
            record_hidden: true,
            eos_gamma: 0.0,
            ..DecodeConfig::default()
        };
        for h in beam_search(&Stateful, &cfg).unwrap() {
            let trace = h.hidden_trace.as_ref().unwrap();
            assert_eq!(trace.len(), h.tokens.len());
            for (i, s) in trace.iter().enumerate() {
                assert_eq!(s[0], i as f64);
            }
        }
    }

    #[test]
    fn record_hidden_without_states_rejected() {
        let scorer = table_scorer(0, 6);
        let cfg = DecodeConfig {
            record_hidden: true,
            ..DecodeConfig::default()
        };
        assert!(beam_search(&scorer, &cfg).is_err());
    }
}
