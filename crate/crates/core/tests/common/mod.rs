//! Shared test oracles: deterministic table scorers and exhaustive searches
//! that replicate the decoding rules by direct enumeration, independent of
//! the beam bookkeeping they verify.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sltk::decode::{FnScorer, Scorer};

pub const EOS: u32 = 3;

/// Scorer whose distribution for any prefix is a pure function of
/// (seed, prefix): positive mass on EOS and ids `4..4+content`, zero
/// elsewhere.
pub type TableScorer = FnScorer<Box<dyn Fn(&[u32]) -> sltk::Result<Vec<f64>>>>;

pub fn table_scorer(seed: u64, content: usize) -> TableScorer {
    let vocab = 4 + content;
    FnScorer {
        vocab,
        f: Box::new(move |prefix: &[u32]| {
            let mut key = seed.wrapping_mul(0x2545f4914f6cdd1d) ^ 0xabcd;
            for &t in prefix {
                key = key.wrapping_mul(0x100000001b3).wrapping_add(t as u64 + 17);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            let mut dist = vec![0.0; vocab];
            dist[EOS as usize] = rng.random_range(0.05..1.0);
            for slot in dist.iter_mut().skip(4) {
                *slot = rng.random_range(0.05..1.0);
            }
            let sum: f64 = dist.iter().sum();
            for d in dist.iter_mut() {
                *d /= sum;
            }
            Ok(dist)
        }),
    }
}

/// Log-probability of a complete token sequence (ending in EOS) under a
/// scorer, accumulated step by step.
pub fn forced_logprob(scorer: &impl Scorer, tokens: &[u32]) -> f64 {
    let mut lp = 0.0;
    for i in 0..tokens.len() {
        let dist = scorer.next_distribution(&tokens[..i]).expect("scorer");
        lp += dist[tokens[i] as usize].ln();
    }
    lp
}

/// Every complete sequence reachable within `max_len` content tokens:
/// enumerate all full-vocabulary strings of length `max_len` over the active
/// tokens (EOS plus `content` ids), truncate each at its first EOS, force
/// EOS where none appears, and deduplicate.
pub fn enumerate_completions(content: usize, max_len: usize) -> Vec<Vec<u32>> {
    let active: Vec<u32> = std::iter::once(EOS)
        .chain((0..content as u32).map(|i| 4 + i))
        .collect();
    let mut raw: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(raw.len() * active.len());
        for seq in &raw {
            for &t in &active {
                let mut s = seq.clone();
                s.push(t);
                next.push(s);
            }
        }
        raw = next;
    }
    let mut canon: Vec<Vec<u32>> = raw
        .into_iter()
        .map(|seq| {
            let mut out = Vec::new();
            for t in seq {
                out.push(t);
                if t == EOS {
                    break;
                }
            }
            if *out.last().unwrap() != EOS {
                out.push(EOS);
            }
            out
        })
        .collect();
    canon.sort();
    canon.dedup();
    canon
}

/// Exhaustive argmax of the length-normalized score over every completion,
/// ties broken by token order.
pub fn exhaustive_best(scorer: &impl Scorer, content: usize, max_len: usize, alpha: f64) -> (Vec<u32>, f64) {
    let mut best: Option<(Vec<u32>, f64)> = None;
    for seq in enumerate_completions(content, max_len) {
        let lp = forced_logprob(scorer, &seq);
        let score = lp / (seq.len() as f64).powf(alpha);
        let better = match &best {
            None => true,
            Some((bt, bs)) => score > *bs || (score == *bs && seq < *bt),
        };
        if better {
            best = Some((seq, score));
        }
    }
    best.expect("nonempty enumeration")
}
