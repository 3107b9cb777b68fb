//! Property-based invariants over randomized inputs.

use proptest::prelude::*;

use sltk::data::{cmvn, tokenizer_for, FeatureSequence, TaskConfig, TokenMode};
use sltk::decode::length_normalized_score;
use sltk::metrics::{corpus_bleu_text, edit_distance_alignment};
use sltk::optim::{noam_lrate, ScheduleConfig};
use sltk::tensor::{ops, Tensor};

fn small_matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..8, 1usize..6).prop_flat_map(|(rows, cols)| {
        proptest::collection::vec(-50.0..50.0f64, rows * cols)
            .prop_map(move |data| (rows, cols, data))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions((rows, cols, data) in small_matrix()) {
        let x = Tensor::new(data, &[rows, cols]).unwrap();
        let y = ops::softmax(&x, 1).unwrap();
        for row in y.data().chunks(cols) {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn cmvn_is_shift_and_scale_invariant(
        (rows, cols, data) in small_matrix(),
        a in 0.1..5.0f64,
        b in -10.0..10.0f64,
    ) {
        let base = FeatureSequence::new(data.clone(), rows, cols).unwrap();
        let scaled = FeatureSequence::new(
            data.iter().map(|v| a * v + b).collect(),
            rows,
            cols,
        )
        .unwrap();
        let n1 = cmvn(&base).unwrap();
        let n2 = cmvn(&scaled).unwrap();
        for (x, y) in n1.rows().flatten().zip(n2.rows().flatten()) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        // and idempotent
        let again = cmvn(&n1).unwrap();
        for (x, y) in n1.rows().flatten().zip(again.rows().flatten()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn tokenize_roundtrips_for_both_modes(words in proptest::collection::vec(0usize..12, 1..9)) {
        let task = TaskConfig::default();
        let text = words
            .iter()
            .map(|w| char::from(b'a' + *w as u8).to_string())
            .collect::<Vec<_>>()
            .join(" ");
        for mode in [TokenMode::Char, TokenMode::Subword] {
            let tok = tokenizer_for(mode, &task).unwrap();
            let seq = tok.tokenize(&text).unwrap();
            prop_assert_eq!(tok.detokenize(seq.ids()), text.clone());
        }
    }

    #[test]
    fn toy_target_recoverable(words in proptest::collection::vec(0usize..12, 1..9)) {
        let task = TaskConfig::default();
        let source = words
            .iter()
            .map(|w| char::from(b'a' + *w as u8).to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let target = task.oracle_translate(&source);
        prop_assert_eq!(task.oracle_invert(&target), source);
    }

    #[test]
    fn noam_is_unimodal_at_warmup(warmup in 2u64..200, k in 0.1..3.0f64, d in 1usize..10) {
        let cfg = ScheduleConfig::new(k, 1 << d, warmup).unwrap();
        let peak = noam_lrate(warmup, &cfg);
        prop_assert!(noam_lrate(warmup - 1, &cfg) < peak);
        prop_assert!(noam_lrate(warmup + 1, &cfg) < peak);
    }

    #[test]
    fn edit_distance_symmetric_total(a in proptest::collection::vec(0u8..4, 0..8),
                                     b in proptest::collection::vec(0u8..4, 0..8)) {
        let fwd = edit_distance_alignment(&a, &b);
        let rev = edit_distance_alignment(&b, &a);
        // multiple minimal alignments may decompose differently, but the
        // total distance is symmetric
        prop_assert_eq!(fwd.total(), rev.total());
    }

    #[test]
    fn wer_suffix_invariance(r in proptest::collection::vec(0u8..4, 1..6),
                             h in proptest::collection::vec(0u8..4, 1..6),
                             suffix in proptest::collection::vec(0u8..4, 0..5)) {
        let base = edit_distance_alignment(&r, &h).total();
        let mut r2 = r.clone();
        let mut h2 = h.clone();
        r2.extend_from_slice(&suffix);
        h2.extend_from_slice(&suffix);
        prop_assert_eq!(edit_distance_alignment(&r2, &h2).total(), base);
    }

    #[test]
    fn bleu_of_self_is_100(sentences in proptest::collection::vec(
        proptest::collection::vec(0usize..6, 4..10), 1..5)) {
        let lines: Vec<String> = sentences
            .iter()
            .map(|s| {
                s.iter()
                    .map(|w| char::from(b'a' + *w as u8).to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let score = corpus_bleu_text(&lines, &lines).unwrap();
        prop_assert_eq!(score.bleu, 100.0);
    }

    #[test]
    fn length_penalty_zero_is_identity(lp in -40.0..0.0f64, len in 1usize..30) {
        prop_assert_eq!(length_normalized_score(lp, len, 0.0), lp);
        // alpha=1 divides by the length
        prop_assert!((length_normalized_score(lp, len, 1.0) - lp / len as f64).abs() < 1e-12);
    }
}
