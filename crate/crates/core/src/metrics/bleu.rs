//! Corpus BLEU-4: geometric mean of corpus-aggregated clipped n-gram
//! precisions times a brevity penalty. Any zero precision gives BLEU 0.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BleuScore {
    /// 0..=100.
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub matched: [u64; MAX_ORDER],
    pub total: [u64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU over whitespace-style token lists, one reference per hypothesis.
pub fn corpus_bleu(refs: &[Vec<String>], hyps: &[Vec<String>]) -> Result<BleuScore> {
    if refs.is_empty() {
        return Err(Error::InvalidArgument("bleu: empty corpus".into()));
    }
    if refs.len() != hyps.len() {
        return Err(Error::InvalidArgument(format!(
            "bleu: {} references vs {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let mut matched = [0u64; MAX_ORDER];
    let mut total = [0u64; MAX_ORDER];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;
    for (r, h) in refs.iter().zip(hyps) {
        hyp_len += h.len() as u64;
        ref_len += r.len() as u64;
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(r, n);
            for (gram, count) in ngram_counts(h, n) {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matched[n - 1] += count.min(clip);
            }
            total[n - 1] += h.len().saturating_sub(n - 1) as u64;
        }
    }
    let mut precisions = [0.0f64; MAX_ORDER];
    for n in 0..MAX_ORDER {
        precisions[n] = if total[n] > 0 {
            matched[n] as f64 / total[n] as f64
        } else {
            0.0
        };
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean: f64 = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuScore {
        bleu,
        precisions,
        matched,
        total,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

/// BLEU over text lines, tokenized on whitespace.
pub fn corpus_bleu_text<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<BleuScore> {
    let tok = |lines: &[S]| -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.as_ref().split_whitespace().map(str::to_string).collect())
            .collect()
    };
    corpus_bleu(&tok(refs), &tok(hyps))
}
