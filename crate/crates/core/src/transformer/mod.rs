//! Transformer encoder-decoder models for speech and text inputs.

mod attention;
mod conv;
mod ffn;
mod layers;
mod loss;
mod positional;

pub use attention::{multi_head_attention, scaled_dot_attention, AttentionParams, AttnMask};
pub use conv::ConvFrontend;
pub use ffn::{position_wise_ffn, FfnParams};
pub use layers::{DecoderLayer, EncoderLayer, LayerNormP};
pub use loss::{label_smoothed_loss, label_smoothed_loss_sum};
pub use positional::positional_encoding;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSequence, SOS};
use crate::error::{Error, Result};
use crate::params::Param;
use crate::tensor::{no_grad, ops, xavier_uniform, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Speech,
    Text,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub h: usize,
    pub vocab_src: usize,
    pub vocab_tgt: usize,
    pub input_mode: InputMode,
    /// Width of speech feature frames; unused for text input.
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_conv_channels")]
    pub conv_channels: usize,
    pub dropout: f64,
    pub label_smoothing: f64,
    /// Normalize-sublayer-add when true (the default), post-norm otherwise.
    #[serde(default = "default_pre_norm")]
    pub pre_norm: bool,
    /// Multiplier applied to token embeddings before positional encodings
    /// are added; balances content against positional signal.
    #[serde(default = "default_emb_scale")]
    pub emb_scale: f64,
}

fn default_emb_scale() -> f64 {
    1.0
}

fn default_feature_dim() -> usize {
    40
}
fn default_conv_channels() -> usize {
    64
}
fn default_pre_norm() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_model: 64,
            d_ff: 128,
            h: 4,
            vocab_src: 8,
            vocab_tgt: 8,
            input_mode: InputMode::Text,
            feature_dim: default_feature_dim(),
            conv_channels: default_conv_channels(),
            dropout: 0.0,
            label_smoothing: 0.1,
            pre_norm: true,
            emb_scale: default_emb_scale(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || !self.d_model.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "model: d_model {} must be positive and even",
                self.d_model
            )));
        }
        if self.h == 0 || !self.d_model.is_multiple_of(self.h) {
            return Err(Error::Config(format!(
                "model: d_model {} not divisible by {} heads",
                self.d_model, self.h
            )));
        }
        if self.d_ff == 0 {
            return Err(Error::Config("model: d_ff must be positive".into()));
        }
        if self.vocab_src < 4 || self.vocab_tgt < 4 {
            return Err(Error::Config(
                "model: vocabularies must include the 4 reserved tokens".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(
                "model: dropout and label_smoothing must lie in [0, 1)".into(),
            ));
        }
        if self.input_mode == InputMode::Speech && (self.feature_dim == 0 || self.conv_channels == 0)
        {
            return Err(Error::Config("model: empty speech frontend".into()));
        }
        Ok(())
    }
}

/// Per-position embedding averaging applied during training.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmbAvgSpec {
    pub rate: f64,
    pub at_encoder: bool,
    pub at_decoder: bool,
}

pub(crate) struct TrainCtx<'a> {
    pub dropout: f64,
    pub rng: &'a mut ChaCha8Rng,
    pub emb_avg: Option<EmbAvgSpec>,
}

/// Forward-pass context: evaluation (deterministic) or training (dropout and
/// optional embedding averaging driven by a seeded RNG).
pub struct Forward<'a> {
    pub(crate) train: Option<TrainCtx<'a>>,
}

impl Forward<'static> {
    pub fn eval() -> Forward<'static> {
        Forward { train: None }
    }
}

impl<'a> Forward<'a> {
    pub fn train(dropout: f64, rng: &'a mut ChaCha8Rng) -> Forward<'a> {
        Forward {
            train: Some(TrainCtx {
                dropout,
                rng,
                emb_avg: None,
            }),
        }
    }

    pub fn with_emb_avg(mut self, spec: Option<EmbAvgSpec>) -> Forward<'a> {
        if let Some(ctx) = self.train.as_mut() {
            ctx.emb_avg = spec;
        }
        self
    }

    /// Inverted dropout; identity in eval mode or at rate zero.
    pub(crate) fn dropout(&mut self, x: &Tensor) -> Tensor {
        use rand::Rng;
        let Some(ctx) = self.train.as_mut() else {
            return x.clone();
        };
        if ctx.dropout <= 0.0 {
            return x.clone();
        }
        let keep = 1.0 - ctx.dropout;
        let mask: Vec<f64> = (0..x.numel())
            .map(|_| {
                if ctx.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mask = Tensor::new(mask, x.shape()).expect("dropout mask shape");
        ops::mul(x, &mask).expect("same shape")
    }

    fn augment(&mut self, embedded: &Tensor, table: &Tensor, at_encoder: bool) -> Result<Tensor> {
        let Some(ctx) = self.train.as_mut() else {
            return Ok(embedded.clone());
        };
        let Some(spec) = ctx.emb_avg else {
            return Ok(embedded.clone());
        };
        let wanted = if at_encoder {
            spec.at_encoder
        } else {
            spec.at_decoder
        };
        if !wanted {
            return Ok(embedded.clone());
        }
        crate::train::embedding_average_augment(embedded, table, spec.rate, ctx.rng)
    }
}

/// Encoder input: token ids for text models, feature frames for speech.
#[derive(Debug, Clone, Copy)]
pub enum EncoderInput<'a> {
    Tokens(&'a [u32]),
    Features(&'a FeatureSequence),
}

enum InputLayer {
    Embedding(Param),
    Frontend(ConvFrontend),
}

/// A complete encoder-decoder model with its parameter registry.
pub struct SeqModel {
    config: ModelConfig,
    input_layer: InputLayer,
    enc_layers: Vec<EncoderLayer>,
    enc_final_ln: Option<LayerNormP>,
    tgt_embedding: Param,
    dec_layers: Vec<DecoderLayer>,
    dec_final_ln: Option<LayerNormP>,
    out_w: Param,
    out_b: Param,
    registry: Vec<Param>,
}

impl SeqModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<SeqModel> {
        SeqModel::new_prefixed(config, seed, "")
    }

    /// Builds the model with every parameter name prefixed, so sub-models of
    /// a composite (joint) model keep distinct checkpoint entries.
    pub fn new_prefixed(config: ModelConfig, seed: u64, prefix: &str) -> Result<SeqModel> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut registry = Vec::new();
        let input_layer = match config.input_mode {
            InputMode::Text => {
                let emb = Param::new(
                    format!("{prefix}src_emb"),
                    xavier_uniform(&[config.vocab_src, config.d_model], &mut rng),
                );
                registry.push(emb.clone());
                InputLayer::Embedding(emb)
            }
            InputMode::Speech => InputLayer::Frontend(ConvFrontend::new(
                &format!("{prefix}frontend"),
                config.feature_dim,
                config.conv_channels,
                config.d_model,
                &mut rng,
                &mut registry,
            )),
        };
        let enc_layers: Vec<EncoderLayer> = (0..config.n_enc_layers)
            .map(|i| {
                EncoderLayer::new(
                    &format!("{prefix}enc.{i}"),
                    config.d_model,
                    config.d_ff,
                    config.h,
                    &mut rng,
                    &mut registry,
                )
            })
            .collect();
        let enc_final_ln = (config.pre_norm && config.n_enc_layers > 0).then(|| {
            LayerNormP::new(&format!("{prefix}enc.final_ln"), config.d_model, &mut registry)
        });
        let tgt_embedding = Param::new(
            format!("{prefix}tgt_emb"),
            xavier_uniform(&[config.vocab_tgt, config.d_model], &mut rng),
        );
        registry.push(tgt_embedding.clone());
        let dec_layers: Vec<DecoderLayer> = (0..config.n_dec_layers)
            .map(|i| {
                DecoderLayer::new(
                    &format!("{prefix}dec.{i}"),
                    config.d_model,
                    config.d_ff,
                    config.h,
                    &mut rng,
                    &mut registry,
                )
            })
            .collect();
        let dec_final_ln = (config.pre_norm && config.n_dec_layers > 0).then(|| {
            LayerNormP::new(&format!("{prefix}dec.final_ln"), config.d_model, &mut registry)
        });
        let out_w = Param::new(
            format!("{prefix}out.w"),
            xavier_uniform(&[config.d_model, config.vocab_tgt], &mut rng),
        );
        let out_b = Param::new(
            format!("{prefix}out.b"),
            Tensor::zeros(&[config.vocab_tgt]).unwrap().requires_grad(),
        );
        registry.push(out_w.clone());
        registry.push(out_b.clone());
        Ok(SeqModel {
            config,
            input_layer,
            enc_layers,
            enc_final_ln,
            tgt_embedding,
            dec_layers,
            dec_final_ln,
            out_w,
            out_b,
            registry,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.registry
    }

    pub fn target_embedding(&self) -> &Param {
        &self.tgt_embedding
    }

    fn add_positions(&self, x: &Tensor) -> Result<Tensor> {
        let pe = positional_encoding(x.shape()[0], self.config.d_model)?;
        ops::add(x, &pe)
    }

    /// Runs the encoder stack and returns the hidden state sequence H.
    pub fn encode(&self, input: EncoderInput, fwd: &mut Forward) -> Result<Tensor> {
        let x = match (&self.input_layer, input) {
            (InputLayer::Embedding(table), EncoderInput::Tokens(ids)) => {
                if ids.is_empty() {
                    return Err(Error::InvalidArgument("encode: empty token input".into()));
                }
                let table_t = table.value();
                let emb = ops::embedding(&table_t, ids)?;
                let emb = fwd.augment(&emb, &table_t, true)?;
                let emb = ops::scale(&emb, self.config.emb_scale);
                self.add_positions(&emb)?
            }
            (InputLayer::Frontend(fe), EncoderInput::Features(f)) => {
                let x = fe.forward(f)?;
                self.add_positions(&x)?
            }
            (InputLayer::Embedding(_), EncoderInput::Features(_)) => {
                return Err(Error::InvalidArgument(
                    "encode: text model given speech features".into(),
                ))
            }
            (InputLayer::Frontend(_), EncoderInput::Tokens(_)) => {
                return Err(Error::InvalidArgument(
                    "encode: speech model given token input".into(),
                ))
            }
        };
        self.run_encoder_stack(x, fwd)
    }

    /// Encoder pass over continuous input states (the joint-model bridge);
    /// the embedding layer is bypassed, positions are still added.
    pub fn encode_continuous(&self, states: &Tensor, fwd: &mut Forward) -> Result<Tensor> {
        if states.rank() != 2 || states.shape()[1] != self.config.d_model {
            return Err(Error::ShapeMismatch {
                op: "encode_continuous",
                lhs: states.shape().to_vec(),
                rhs: vec![self.config.d_model],
            });
        }
        let x = self.add_positions(states)?;
        self.run_encoder_stack(x, fwd)
    }

    fn run_encoder_stack(&self, mut x: Tensor, fwd: &mut Forward) -> Result<Tensor> {
        for layer in &self.enc_layers {
            x = layer.forward(&x, fwd, self.config.pre_norm)?;
        }
        if let Some(ln) = &self.enc_final_ln {
            x = ln.apply(&x)?;
        }
        Ok(x)
    }

    /// Decoder stack over a teacher-forced prefix; returns one hidden state
    /// per prefix position (final layer, before the output projection).
    pub fn decode_hidden(&self, h: &Tensor, prefix: &[u32], fwd: &mut Forward) -> Result<Tensor> {
        if prefix.is_empty() {
            return Err(Error::Decode("decode: empty prefix".into()));
        }
        if prefix[0] != SOS {
            return Err(Error::Decode(format!(
                "decode: prefix must start with <sos>, got id {}",
                prefix[0]
            )));
        }
        let table_t = self.tgt_embedding.value();
        let emb = ops::embedding(&table_t, prefix)?;
        let emb = fwd.augment(&emb, &table_t, false)?;
        let emb = ops::scale(&emb, self.config.emb_scale);
        let mut x = self.add_positions(&emb)?;
        for layer in &self.dec_layers {
            x = layer.forward(&x, h, fwd, self.config.pre_norm)?;
        }
        if let Some(ln) = &self.dec_final_ln {
            x = ln.apply(&x)?;
        }
        Ok(x)
    }

    /// Projects decoder states to target-vocabulary logits.
    pub fn logits(&self, hidden: &Tensor) -> Result<Tensor> {
        ops::add_bias(&ops::matmul(hidden, &self.out_w.value())?, &self.out_b.value())
    }

    /// Normalized next-token distribution after the given prefix.
    pub fn decode_step(&self, h: &Tensor, prefix: &[u32]) -> Result<Vec<f64>> {
        Ok(self.decode_step_with_state(h, prefix)?.0)
    }

    /// Next-token distribution plus the final-layer hidden state that
    /// produced it (the bridge representation for joint models).
    pub fn decode_step_with_state(
        &self,
        h: &Tensor,
        prefix: &[u32],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        no_grad(|| {
            let hidden = self.decode_hidden(h, prefix, &mut Forward::eval())?;
            let last = ops::slice_rows(&hidden, hidden.shape()[0] - 1, hidden.shape()[0])?;
            let logits = self.logits(&last)?;
            let dist = ops::softmax(&logits, 1)?;
            Ok((dist.data().to_vec(), last.data().to_vec()))
        })
    }

    /// Teacher-forced loss of one example: encodes the input, decodes
    /// `[sos] target`, and scores against `target [eos]`. Returns the summed
    /// label-smoothed loss and the number of scored positions.
    pub fn forward_loss(
        &self,
        input: EncoderInput,
        target_content: &[u32],
        eps: f64,
        fwd: &mut Forward,
    ) -> Result<(Tensor, usize)> {
        if target_content.is_empty() {
            return Err(Error::InvalidArgument("forward_loss: empty target".into()));
        }
        let h = self.encode(input, fwd)?;
        let mut prefix = Vec::with_capacity(target_content.len() + 1);
        prefix.push(SOS);
        prefix.extend_from_slice(target_content);
        let mut gold = target_content.to_vec();
        gold.push(crate::data::EOS);
        let hidden = self.decode_hidden(&h, &prefix, fwd)?;
        let logits = self.logits(&hidden)?;
        label_smoothed_loss_sum(&logits, &gold, eps, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text_config(n_enc: usize, n_dec: usize) -> ModelConfig {
        ModelConfig {
            n_enc_layers: n_enc,
            n_dec_layers: n_dec,
            d_model: 8,
            d_ff: 16,
            h: 2,
            vocab_src: 10,
            vocab_tgt: 10,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_encoder_layers_is_embed_plus_positions() {
        let model = SeqModel::new(text_config(0, 1), 5).unwrap();
        let ids = [4u32, 5, 6];
        let h = model
            .encode(EncoderInput::Tokens(&ids), &mut Forward::eval())
            .unwrap();
        let emb = ops::embedding(&model.tgt_embedding.value(), &[0]).unwrap();
        drop(emb);
        let table = match &model.input_layer {
            InputLayer::Embedding(p) => p.value(),
            _ => unreachable!(),
        };
        let want = ops::add(
            &ops::scale(&ops::embedding(&table, &ids).unwrap(), model.config().emb_scale),
            &positional_encoding(3, 8).unwrap(),
        )
        .unwrap();
        assert_eq!(h.data(), want.data());
    }

    #[test]
    fn forward_is_bitwise_deterministic_without_dropout() {
        let model = SeqModel::new(text_config(2, 2), 9).unwrap();
        let ids = [4u32, 7, 5, 9];
        let a = model
            .encode(EncoderInput::Tokens(&ids), &mut Forward::eval())
            .unwrap();
        let b = model
            .encode(EncoderInput::Tokens(&ids), &mut Forward::eval())
            .unwrap();
        assert_eq!(a.data(), b.data());
        let da = model.decode_step(&a, &[SOS, 4]).unwrap();
        let db = model.decode_step(&b, &[SOS, 4]).unwrap();
        assert_eq!(da, db);
    }

    #[test]
    fn perturbing_input_changes_hidden_states() {
        let cfg = ModelConfig {
            input_mode: InputMode::Speech,
            feature_dim: 6,
            conv_channels: 8,
            ..text_config(2, 1)
        };
        let model = SeqModel::new(cfg, 3).unwrap();
        let base = FeatureSequence::new(vec![0.1; 12 * 6], 12, 6).unwrap();
        let mut bumped_rows = base.to_rows();
        bumped_rows[7][2] += 1.0;
        let bumped = FeatureSequence::from_rows(&bumped_rows).unwrap();
        let ha = model
            .encode(EncoderInput::Features(&base), &mut Forward::eval())
            .unwrap();
        let hb = model
            .encode(EncoderInput::Features(&bumped), &mut Forward::eval())
            .unwrap();
        assert_ne!(ha.data(), hb.data());
    }

    #[test]
    fn decode_distribution_sums_to_one() {
        let model = SeqModel::new(text_config(1, 1), 2).unwrap();
        let h = model
            .encode(EncoderInput::Tokens(&[4, 5]), &mut Forward::eval())
            .unwrap();
        let dist = model.decode_step(&h, &[SOS, 4, 6]).unwrap();
        let s: f64 = dist.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(dist.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn causality_prediction_invariant_to_suffix() {
        let model = SeqModel::new(text_config(1, 2), 4).unwrap();
        let h = model
            .encode(EncoderInput::Tokens(&[4, 5, 6]), &mut Forward::eval())
            .unwrap();
        let prefix = [SOS, 4, 5];
        let base = model.decode_step(&h, &prefix).unwrap();
        // extend with arbitrary suffixes; the position-2 prediction is the
        // hidden state at index 2, which the causal mask must freeze
        for suffix in [[6u32, 7].as_slice(), &[9], &[8, 8, 8]] {
            let mut longer = prefix.to_vec();
            longer.extend_from_slice(suffix);
            let hidden = model
                .decode_hidden(&h, &longer, &mut Forward::eval())
                .unwrap();
            let at = ops::slice_rows(&hidden, 2, 3).unwrap();
            let logits = model.logits(&at).unwrap();
            let dist = ops::softmax(&logits, 1).unwrap();
            for (a, b) in dist.data().iter().zip(&base) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_and_malformed_prefix_rejected() {
        let model = SeqModel::new(text_config(1, 1), 4).unwrap();
        let h = model
            .encode(EncoderInput::Tokens(&[4]), &mut Forward::eval())
            .unwrap();
        assert!(model.decode_step(&h, &[]).is_err());
        assert!(model.decode_step(&h, &[4]).is_err(), "missing <sos>");
    }

    #[test]
    fn unknown_token_rejected_by_encoder() {
        let model = SeqModel::new(text_config(1, 1), 4).unwrap();
        let err = model
            .encode(EncoderInput::Tokens(&[99]), &mut Forward::eval())
            .unwrap_err();
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn input_mode_mismatch_rejected() {
        let model = SeqModel::new(text_config(1, 1), 4).unwrap();
        let f = FeatureSequence::new(vec![0.0; 8 * 40], 8, 40).unwrap();
        assert!(model
            .encode(EncoderInput::Features(&f), &mut Forward::eval())
            .is_err());
    }

    #[test]
    fn registry_names_are_unique() {
        let model = SeqModel::new(text_config(3, 2), 0).unwrap();
        let mut names: Vec<&str> = model.params().iter().map(|p| p.name()).collect();
        let before = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(before, names.len());
    }
}
