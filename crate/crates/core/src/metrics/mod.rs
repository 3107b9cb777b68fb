//! Evaluation: WER/CER from edit-distance alignments and corpus BLEU.

mod bleu;
mod wer;

pub use bleu::{corpus_bleu, corpus_bleu_text, BleuScore, MAX_ORDER};
pub use wer::{edit_distance_alignment, error_rate, sentence_cer, sentence_wer, EditCounts};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corpus-level evaluation summary. WER counts aggregate over whitespace
/// words; CER treats every character (spaces included) as a token; BLEU
/// components are kept so the score can be recomputed from the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_sentences: usize,
    pub wer: f64,
    pub cer: f64,
    pub bleu: f64,
    pub word_counts: EditCounts,
    pub ref_words: usize,
    pub char_counts: EditCounts,
    pub ref_chars: usize,
    pub bleu_detail: BleuScore,
}

impl EvalReport {
    pub fn one_line(&self) -> String {
        format!(
            "sentences {}  WER {:.2}%  CER {:.2}%  BLEU {:.2}",
            self.n_sentences, self.wer, self.cer, self.bleu
        )
    }
}

/// Evaluates line-aligned hypothesis and reference texts.
pub fn evaluate<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<EvalReport> {
    if refs.is_empty() {
        return Err(Error::InvalidArgument("evaluate: empty corpus".into()));
    }
    if refs.len() != hyps.len() {
        return Err(Error::InvalidArgument(format!(
            "evaluate: {} references vs {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let mut word_counts = EditCounts::default();
    let mut ref_words = 0usize;
    let mut char_counts = EditCounts::default();
    let mut ref_chars = 0usize;
    for (r, h) in refs.iter().zip(hyps) {
        let rw: Vec<&str> = r.as_ref().split_whitespace().collect();
        let hw: Vec<&str> = h.as_ref().split_whitespace().collect();
        word_counts.add(edit_distance_alignment(&rw, &hw));
        ref_words += rw.len();
        let rc: Vec<char> = r.as_ref().chars().collect();
        let hc: Vec<char> = h.as_ref().chars().collect();
        char_counts.add(edit_distance_alignment(&rc, &hc));
        ref_chars += rc.len();
    }
    let bleu_detail = corpus_bleu_text(refs, hyps)?;
    Ok(EvalReport {
        n_sentences: refs.len(),
        wer: error_rate(word_counts, ref_words),
        cer: error_rate(char_counts, ref_chars),
        bleu: bleu_detail.bleu,
        word_counts,
        ref_words,
        char_counts,
        ref_chars,
        bleu_detail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_aggregates_both_rates() {
        let refs = vec!["a b c".to_string(), "d e f g".to_string()];
        let hyps = vec!["a x c".to_string(), "d e f g".to_string()];
        let rep = evaluate(&refs, &hyps).unwrap();
        assert_eq!(rep.n_sentences, 2);
        assert!((rep.wer - 100.0 * 1.0 / 7.0).abs() < 1e-9);
        assert_eq!(rep.word_counts.substitutions, 1);
        assert!(rep.cer > 0.0);
        assert_eq!(rep.bleu, rep.bleu_detail.bleu);
    }

    #[test]
    fn perfect_hypotheses_score_perfectly() {
        let lines = vec!["a b c d e".to_string(), "f g h i j k".to_string()];
        let rep = evaluate(&lines, &lines).unwrap();
        assert_eq!(rep.wer, 0.0);
        assert_eq!(rep.cer, 0.0);
        assert_eq!(rep.bleu, 100.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let refs = vec!["a".to_string()];
        let hyps: Vec<String> = vec![];
        assert!(evaluate(&refs, &hyps).is_err());
    }
}
