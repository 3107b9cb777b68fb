//! Contracts of the jointly trained pipeline model.

mod common;

use sltk::data::{synth_features, FeatureSequence};
use sltk::decode::DecodeConfig;
use sltk::params::{zero_grads, Checkpoint};
use sltk::tensor::ops;
use sltk::train::{
    train, train_joint, ConnectorKind, FreezeMode, JointExample, JointModel, TrainConfig,
    TrainExample, TrainInput, ASR_PREFIX, MT_PREFIX,
};
use sltk::transformer::{Forward, InputMode, ModelConfig, SeqModel};

fn asr_cfg() -> ModelConfig {
    ModelConfig {
        n_enc_layers: 1,
        n_dec_layers: 1,
        d_model: 8,
        d_ff: 16,
        h: 2,
        vocab_src: 8,
        vocab_tgt: 8,
        input_mode: InputMode::Speech,
        feature_dim: 5,
        conv_channels: 4,
        ..ModelConfig::default()
    }
}

fn mt_cfg() -> ModelConfig {
    ModelConfig {
        n_enc_layers: 1,
        n_dec_layers: 1,
        d_model: 12,
        d_ff: 16,
        h: 2,
        vocab_src: 8,
        vocab_tgt: 9,
        input_mode: InputMode::Text,
        ..ModelConfig::default()
    }
}

fn toy_features(tokens: &[u32], seed: u64) -> FeatureSequence {
    synth_features(tokens, seed, 4, 0.05, 5).unwrap()
}

fn joint_corpus(n: usize) -> Vec<JointExample> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
    (0..n)
        .map(|i| {
            let len = rng.random_range(2..4);
            let source: Vec<u32> = (0..len).map(|_| rng.random_range(4..8u32)).collect();
            let target: Vec<u32> = source.iter().rev().map(|t| 4 + (t - 4 + 1) % 5).collect();
            JointExample {
                features: toy_features(&source, 100 + i as u64),
                source,
                target,
            }
        })
        .collect()
}

#[test]
fn zero_mt_weight_reduces_to_plain_asr_training() {
    let corpus = joint_corpus(4);
    let cfg = TrainConfig {
        epochs: 2,
        batch_target_units: 1000, // single batch
        warmup: 5,
        k: 0.5,
        dropout: 0.0,
        mt_loss_weight: 0.0,
        ..TrainConfig::default()
    };

    let mut standalone = SeqModel::new(asr_cfg(), 7).unwrap();
    let asr_corpus: Vec<TrainExample> = corpus
        .iter()
        .map(|e| TrainExample {
            input: TrainInput::Features(e.features.clone()),
            target: e.source.clone(),
        })
        .collect();
    train(&mut standalone, &asr_corpus, &cfg).unwrap();

    let mut joint = JointModel::new(asr_cfg(), mt_cfg(), ConnectorKind::Linear, 7).unwrap();
    train_joint(&mut joint, &corpus, &cfg).unwrap();

    let plain = Checkpoint::from_params(standalone.params());
    for p in joint.asr.params() {
        let bare = p.name().strip_prefix(ASR_PREFIX).unwrap();
        let (_, want) = plain.get(bare).unwrap();
        assert_eq!(p.value().data(), want, "{bare}");
    }
}

#[test]
fn connector_only_freeze_keeps_submodels_bitwise() {
    let corpus = joint_corpus(3);
    let asr_ckpt = Checkpoint::from_params(SeqModel::new(asr_cfg(), 3).unwrap().params());
    let mt_ckpt = Checkpoint::from_params(SeqModel::new(mt_cfg(), 4).unwrap().params());
    let mut joint = JointModel::from_pretrained(
        &asr_ckpt,
        &mt_ckpt,
        asr_cfg(),
        mt_cfg(),
        ConnectorKind::Linear,
        9,
    )
    .unwrap()
    .with_freeze(FreezeMode::ConnectorOnly);
    let before_asr = Checkpoint::from_params(joint.asr.params());
    let before_mt = Checkpoint::from_params(joint.mt.params());
    let before_connector = Checkpoint::from_params(joint.connector.params());
    let cfg = TrainConfig {
        epochs: 1,
        warmup: 5,
        ..TrainConfig::default()
    };
    train_joint(&mut joint, &corpus, &cfg).unwrap();
    assert_eq!(Checkpoint::from_params(joint.asr.params()), before_asr);
    assert_eq!(Checkpoint::from_params(joint.mt.params()), before_mt);
    assert_ne!(
        Checkpoint::from_params(joint.connector.params()),
        before_connector,
        "connector must actually train"
    );
}

#[test]
fn connector_only_without_pretraining_rejected() {
    let mut joint = JointModel::new(asr_cfg(), mt_cfg(), ConnectorKind::Linear, 1)
        .unwrap()
        .with_freeze(FreezeMode::ConnectorOnly);
    let err = train_joint(&mut joint, &joint_corpus(2), &TrainConfig::default()).unwrap_err();
    assert!(err.to_string().contains("pretrained"));
}

#[test]
fn asr_encoder_receives_gradients_from_both_objectives() {
    let joint = JointModel::new(asr_cfg(), mt_cfg(), ConnectorKind::Linear, 11).unwrap();
    let ex = &joint_corpus(1)[0];

    // pick one ASR encoder weight
    let probe = joint
        .asr
        .params()
        .iter()
        .find(|p| p.name() == "asr.enc.0.attn.h0.wq")
        .unwrap()
        .clone();

    // gradients of the MT-only loss must reach the ASR stack (two-path flow)
    zero_grads(joint.params());
    let terms = joint
        .forward_losses(ex, 0.1, &mut Forward::eval())
        .unwrap();
    let mt_loss = ops::scale(&terms.mt_sum, 1.0 / terms.mt_count as f64);
    mt_loss.backward().unwrap();
    let grad_mt = probe.value().grad_or_zeros();
    assert!(grad_mt.iter().any(|g| g.abs() > 1e-12));

    // finite-difference probe on that weight for the MT loss
    let mt_value = |joint: &JointModel| -> f64 {
        let t = joint.forward_losses(ex, 0.1, &mut Forward::eval()).unwrap();
        ops::scale(&t.mt_sum, 1.0 / t.mt_count as f64).item()
    };
    let h = 1e-4;
    let base = probe.value().data().to_vec();
    let idx = grad_mt
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap()
        .0;
    let mut plus = base.clone();
    plus[idx] += h;
    probe.replace_data(plus);
    let lp = mt_value(&joint);
    let mut minus = base.clone();
    minus[idx] -= h;
    probe.replace_data(minus);
    let lm = mt_value(&joint);
    probe.replace_data(base);
    let fd = (lp - lm) / (2.0 * h);
    let rel = (fd - grad_mt[idx]).abs() / fd.abs().max(grad_mt[idx].abs()).max(1e-8);
    assert!(rel < 1e-3, "fd {fd} vs ad {}", grad_mt[idx]);

    // the ASR objective reaches it too
    zero_grads(joint.params());
    let terms = joint
        .forward_losses(ex, 0.1, &mut Forward::eval())
        .unwrap();
    let asr_loss = ops::scale(&terms.asr_sum, 1.0 / terms.asr_count as f64);
    asr_loss.backward().unwrap();
    assert!(probe
        .value()
        .grad_or_zeros()
        .iter()
        .any(|g| g.abs() > 1e-12));

    // while the MT stack must not receive ASR-objective gradients
    for p in joint.mt.params() {
        assert!(p.value().grad_or_zeros().iter().all(|g| *g == 0.0));
    }
}

#[test]
fn pretrained_weights_copied_bitwise_and_connector_counted() {
    let asr_model = SeqModel::new(asr_cfg(), 21).unwrap();
    let mt_model = SeqModel::new(mt_cfg(), 22).unwrap();
    let asr_ckpt = Checkpoint::from_params(asr_model.params());
    let mt_ckpt = Checkpoint::from_params(mt_model.params());
    let joint = JointModel::from_pretrained(
        &asr_ckpt,
        &mt_ckpt,
        asr_cfg(),
        mt_cfg(),
        ConnectorKind::Linear,
        0,
    )
    .unwrap();
    assert!(joint.is_from_pretrained());
    for p in joint.asr.params() {
        let bare = p.name().strip_prefix(ASR_PREFIX).unwrap();
        assert_eq!(p.value().data(), asr_ckpt.get(bare).unwrap().1);
    }
    for p in joint.mt.params() {
        let bare = p.name().strip_prefix(MT_PREFIX).unwrap();
        assert_eq!(p.value().data(), mt_ckpt.get(bare).unwrap().1);
    }
    let connector_params: usize = joint
        .connector
        .params()
        .iter()
        .map(|p| p.value().numel())
        .sum();
    assert_eq!(connector_params, 8 * 12 + 12);
}

#[test]
fn self_attention_connector_with_zero_layers_rejected() {
    let err = JointModel::new(
        asr_cfg(),
        mt_cfg(),
        ConnectorKind::SelfAttn { layers: 0 },
        0,
    )
    .unwrap_err();
    assert!(err.to_string().contains("layer"));
}

#[test]
fn pretrained_shape_mismatch_names_the_layer() {
    let mut wrong = asr_cfg();
    wrong.d_ff = 24;
    let asr_ckpt = Checkpoint::from_params(SeqModel::new(wrong, 1).unwrap().params());
    let mt_ckpt = Checkpoint::from_params(SeqModel::new(mt_cfg(), 2).unwrap().params());
    let err = JointModel::from_pretrained(
        &asr_ckpt,
        &mt_ckpt,
        asr_cfg(),
        mt_cfg(),
        ConnectorKind::Linear,
        0,
    )
    .unwrap_err()
    .to_string();
    assert!(err.contains("ffn"), "{err}");
}

#[test]
fn joint_decode_matches_exhaustive_pair_search() {
    let joint = JointModel::new(asr_cfg(), mt_cfg(), ConnectorKind::SelfAttn { layers: 1 }, 5)
        .unwrap();
    let features = toy_features(&[4, 6], 77);

    let wide = |max_len: usize| DecodeConfig {
        beam: 64,
        n_best: 64,
        max_len,
        eos_gamma: 0.0,
        length_penalty_alpha: 0.0,
        record_hidden: false,
    };
    let got = joint.decode(&features, &wide(2), &wide(2)).unwrap();

    // oracle: enumerate ASR completions (4 content tokens, len <= 2), walk
    // each by forced stepping to collect trace + logprob, then enumerate MT
    // completions under the bridged scorer
    use sltk::decode::Scorer;
    let asr_scorer = sltk::decode::ModelScorer::new(
        &joint.asr,
        sltk::transformer::EncoderInput::Features(&features),
    )
    .unwrap();
    let mut best = f64::NEG_INFINITY;
    let mut all_pairs = 0;
    for z in common::enumerate_completions(4, 2) {
        if z.len() == 1 {
            continue; // content-empty, skipped by joint decode
        }
        let mut lp_z = 0.0;
        let mut trace = Vec::new();
        for i in 0..z.len() {
            let (dist, state) = asr_scorer.next_with_state(&z[..i]).unwrap();
            lp_z += dist[z[i] as usize].ln();
            trace.push(state.unwrap());
        }
        let zh = sltk::decode::Hypothesis {
            tokens: z.clone(),
            logprob: lp_z,
            finished: true,
            hidden_trace: Some(trace),
        };
        let mt_scorer = joint.bridge_scorer(&zh).unwrap();
        for y in common::enumerate_completions(5, 2) {
            let lp_y = common::forced_logprob(&mt_scorer, &y);
            best = best.max(lp_z + lp_y);
            all_pairs += 1;
        }
    }
    assert!(all_pairs > 50);
    assert!(
        (got.combined_score - best).abs() < 1e-9,
        "beam {} vs exhaustive {best}",
        got.combined_score
    );
}

#[test]
fn joint_training_loss_decreases() {
    let mut joint = JointModel::new(asr_cfg(), mt_cfg(), ConnectorKind::Linear, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        warmup: 8,
        k: 1.0,
        label_smoothing: 0.0,
        ..TrainConfig::default()
    };
    let out = train_joint(&mut joint, &joint_corpus(12), &cfg).unwrap();
    assert!(out.epoch_losses.last().unwrap() < out.epoch_losses.first().unwrap());
    assert_eq!(out.epoch_asr_losses.len(), 4);
}
