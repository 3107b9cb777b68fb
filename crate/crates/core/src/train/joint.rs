//! The jointly trained pipeline model: a speech→source ASR model whose
//! decoder hidden states feed, through a connector, the encoder of a text
//! MT model. Training uses the multi-task loss asr_loss + λ·mt_loss, so the
//! ASR stack receives gradients from both objectives while the MT stack
//! sees only its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSequence, EOS, SOS};
use crate::decode::{
    joint_decode, DecodeConfig, EnsembleScorer, Hypothesis, JointDecodeOutput, ModelScorer,
    Scorer,
};

/// Discrete bridge for MT ensembling: maps ASR hypothesis tokens to MT
/// source ids (detokenize, retokenize).
pub type TokenBridge<'a> = &'a dyn Fn(&[u32]) -> Result<Vec<u32>>;
use crate::error::{Error, Result};
use crate::optim::{adam_update, clip_grad_norm, noam_lrate, AdamState, ScheduleConfig};
use crate::params::{zero_grads, Checkpoint, Param};
use crate::tensor::{no_grad, ops, xavier_uniform, Tensor};
use crate::transformer::{
    label_smoothed_loss_sum, EncoderInput, EncoderLayer, Forward, ModelConfig, SeqModel,
};

use super::batch::make_batches;
use super::trainer::{CurvePoint, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ConnectorKind {
    Linear,
    SelfAttn { layers: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeMode {
    /// Every parameter trains.
    Full,
    /// Only the connector trains; requires pretrained sub-models.
    ConnectorOnly,
}

/// Bridge from ASR decoder states (d_asr) to MT encoder inputs (d_mt):
/// a linear projection, optionally followed by self-attention layers.
pub struct Connector {
    pub kind: ConnectorKind,
    proj_w: Param,
    proj_b: Param,
    layers: Vec<EncoderLayer>,
    pre_norm: bool,
    params: Vec<Param>,
}

impl Connector {
    fn new(
        kind: ConnectorKind,
        d_asr: usize,
        mt_cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Connector> {
        if let ConnectorKind::SelfAttn { layers } = kind {
            if layers == 0 {
                return Err(Error::Config(
                    "connector: self-attention kind needs at least 1 layer".into(),
                ));
            }
        }
        let d_mt = mt_cfg.d_model;
        let mut params = Vec::new();
        let proj_w = Param::new("connector.proj.w", xavier_uniform(&[d_asr, d_mt], rng));
        let proj_b = Param::new(
            "connector.proj.b",
            Tensor::zeros(&[d_mt]).unwrap().requires_grad(),
        );
        params.push(proj_w.clone());
        params.push(proj_b.clone());
        let layers = match kind {
            ConnectorKind::Linear => Vec::new(),
            ConnectorKind::SelfAttn { layers } => (0..layers)
                .map(|i| {
                    EncoderLayer::new(
                        &format!("connector.attn.{i}"),
                        d_mt,
                        mt_cfg.d_ff,
                        mt_cfg.h,
                        rng,
                        &mut params,
                    )
                })
                .collect(),
        };
        Ok(Connector {
            kind,
            proj_w,
            proj_b,
            layers,
            pre_norm: mt_cfg.pre_norm,
            params,
        })
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn forward(&self, states: &Tensor, fwd: &mut Forward) -> Result<Tensor> {
        let mut x = ops::add_bias(
            &ops::matmul(states, &self.proj_w.value())?,
            &self.proj_b.value(),
        )?;
        for layer in &self.layers {
            x = layer.forward(&x, fwd, self.pre_norm)?;
        }
        Ok(x)
    }
}

/// Aligned triple for joint training.
#[derive(Debug, Clone)]
pub struct JointExample {
    pub features: FeatureSequence,
    pub source: Vec<u32>,
    pub target: Vec<u32>,
}

pub struct JointModel {
    pub asr: SeqModel,
    pub mt: SeqModel,
    pub connector: Connector,
    pub freeze: FreezeMode,
    from_pretrained: bool,
    registry: Vec<Param>,
}

pub const ASR_PREFIX: &str = "asr.";
pub const MT_PREFIX: &str = "mt.";

impl JointModel {
    pub fn new(
        asr_cfg: ModelConfig,
        mt_cfg: ModelConfig,
        kind: ConnectorKind,
        seed: u64,
    ) -> Result<JointModel> {
        if asr_cfg.input_mode != crate::transformer::InputMode::Speech {
            return Err(Error::Config("joint: ASR sub-model must take speech".into()));
        }
        if mt_cfg.input_mode != crate::transformer::InputMode::Text {
            return Err(Error::Config("joint: MT sub-model must take text".into()));
        }
        let asr = SeqModel::new_prefixed(asr_cfg.clone(), seed, ASR_PREFIX)?;
        let mt = SeqModel::new_prefixed(mt_cfg.clone(), seed.wrapping_add(1), MT_PREFIX)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        let connector = Connector::new(kind, asr_cfg.d_model, &mt_cfg, &mut rng)?;
        let mut registry = asr.params().to_vec();
        registry.extend(connector.params().iter().cloned());
        registry.extend(mt.params().iter().cloned());
        Ok(JointModel {
            asr,
            mt,
            connector,
            freeze: FreezeMode::Full,
            from_pretrained: false,
            registry,
        })
    }

    /// Builds the joint model from independently trained checkpoints: ASR
    /// and MT weights are copied in, the connector starts fresh, and the MT
    /// embedding layer is simply bypassed by the continuous bridge.
    pub fn from_pretrained(
        asr_ckpt: &Checkpoint,
        mt_ckpt: &Checkpoint,
        asr_cfg: ModelConfig,
        mt_cfg: ModelConfig,
        kind: ConnectorKind,
        seed: u64,
    ) -> Result<JointModel> {
        let mut joint = JointModel::new(asr_cfg, mt_cfg, kind, seed)?;
        apply_prefixed(asr_ckpt, joint.asr.params(), ASR_PREFIX)?;
        apply_prefixed(mt_ckpt, joint.mt.params(), MT_PREFIX)?;
        joint.from_pretrained = true;
        Ok(joint)
    }

    pub fn with_freeze(mut self, mode: FreezeMode) -> JointModel {
        self.freeze = mode;
        self
    }

    pub fn is_from_pretrained(&self) -> bool {
        self.from_pretrained
    }

    pub fn params(&self) -> &[Param] {
        &self.registry
    }

    pub fn trainable_params(&self) -> Vec<Param> {
        match self.freeze {
            FreezeMode::Full => self.registry.clone(),
            FreezeMode::ConnectorOnly => self.connector.params().to_vec(),
        }
    }

    /// Teacher-forced losses of one triple: the ASR decoder runs over
    /// `[sos] source`, its final-layer states bridge into the MT encoder,
    /// and the MT decoder runs over `[sos] target`. Returns summed losses
    /// with their position counts.
    pub fn forward_losses(
        &self,
        ex: &JointExample,
        eps: f64,
        fwd: &mut Forward,
    ) -> Result<JointLossTerms> {
        if ex.source.is_empty() || ex.target.is_empty() {
            return Err(Error::InvalidArgument("joint: empty source or target".into()));
        }
        let h_asr = self
            .asr
            .encode(EncoderInput::Features(&ex.features), fwd)?;
        let mut src_prefix = Vec::with_capacity(ex.source.len() + 1);
        src_prefix.push(SOS);
        src_prefix.extend_from_slice(&ex.source);
        let mut src_gold = ex.source.clone();
        src_gold.push(EOS);
        let asr_hidden = self.asr.decode_hidden(&h_asr, &src_prefix, fwd)?;
        let asr_logits = self.asr.logits(&asr_hidden)?;
        let (asr_sum, asr_count) = label_smoothed_loss_sum(&asr_logits, &src_gold, eps, None)?;

        let bridge = self.connector.forward(&asr_hidden, fwd)?;
        let h_mt = self.mt.encode_continuous(&bridge, fwd)?;
        let mut tgt_prefix = Vec::with_capacity(ex.target.len() + 1);
        tgt_prefix.push(SOS);
        tgt_prefix.extend_from_slice(&ex.target);
        let mut tgt_gold = ex.target.clone();
        tgt_gold.push(EOS);
        let mt_hidden = self.mt.decode_hidden(&h_mt, &tgt_prefix, fwd)?;
        let mt_logits = self.mt.logits(&mt_hidden)?;
        let (mt_sum, mt_count) = label_smoothed_loss_sum(&mt_logits, &tgt_gold, eps, None)?;
        Ok(JointLossTerms {
            asr_sum,
            asr_count,
            mt_sum,
            mt_count,
        })
    }

    /// MT scorer for one ASR hypothesis: its hidden trace runs through the
    /// connector into the MT encoder.
    pub fn bridge_scorer(&self, z: &Hypothesis) -> Result<ModelScorer<'_>> {
        let trace = z
            .hidden_trace
            .as_ref()
            .ok_or_else(|| Error::Decode("joint: hypothesis lacks hidden trace".into()))?;
        let d = self.asr.config().d_model;
        if trace.iter().any(|s| s.len() != d) {
            return Err(Error::Decode("joint: trace width mismatch".into()));
        }
        let flat: Vec<f64> = trace.iter().flatten().copied().collect();
        let states = Tensor::new(flat, &[trace.len(), d])?;
        let encoded = no_grad(|| -> Result<Tensor> {
            let bridged = self.connector.forward(&states, &mut Forward::eval())?;
            self.mt.encode_continuous(&bridged, &mut Forward::eval())
        })?;
        Ok(ModelScorer::from_states(&self.mt, encoded))
    }

    /// n-best hidden-representation decoding: ASR beam with traces, one MT
    /// beam per trace, union ranked by combined score.
    pub fn decode(
        &self,
        features: &FeatureSequence,
        cfg_asr: &DecodeConfig,
        cfg_mt: &DecodeConfig,
    ) -> Result<JointDecodeOutput> {
        self.decode_with(features, None, None, cfg_asr, cfg_mt)
    }

    /// Joint decoding with optional softmax-averaged ensembling: a
    /// stand-alone ASR model on the source side and/or a stand-alone MT
    /// model fed with the discrete hypothesis tokens (mapped through
    /// `bridge_tokens`, e.g. a detokenize→retokenize step).
    pub fn decode_with(
        &self,
        features: &FeatureSequence,
        ensemble_asr: Option<&SeqModel>,
        ensemble_mt: Option<(&SeqModel, TokenBridge)>,
        cfg_asr: &DecodeConfig,
        cfg_mt: &DecodeConfig,
    ) -> Result<JointDecodeOutput> {
        let joint_asr = ModelScorer::new(&self.asr, EncoderInput::Features(features))?;
        let mut members: Vec<Box<dyn Scorer>> = vec![Box::new(joint_asr)];
        if let Some(standalone) = ensemble_asr {
            members.push(Box::new(ModelScorer::new(
                standalone,
                EncoderInput::Features(features),
            )?));
        }
        let asr_scorer = EnsembleScorer::new(members)?;
        let mt_for = |z: &Hypothesis| -> Result<EnsembleScorer<'_>> {
            let mut members: Vec<Box<dyn Scorer>> = vec![Box::new(self.bridge_scorer(z)?)];
            if let Some((standalone_mt, bridge_tokens)) = &ensemble_mt {
                let ids = bridge_tokens(z.content())?;
                members.push(Box::new(ModelScorer::new(
                    standalone_mt,
                    EncoderInput::Tokens(&ids),
                )?));
            }
            EnsembleScorer::new(members)
        };
        joint_decode(&asr_scorer, mt_for, cfg_asr, cfg_mt)
    }
}

pub struct JointLossTerms {
    pub asr_sum: Tensor,
    pub asr_count: usize,
    pub mt_sum: Tensor,
    pub mt_count: usize,
}

impl std::fmt::Debug for JointModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JointModel")
            .field("connector", &self.connector.kind)
            .field("freeze", &self.freeze)
            .field("from_pretrained", &self.from_pretrained)
            .finish()
    }
}

fn apply_prefixed(ckpt: &Checkpoint, params: &[Param], prefix: &str) -> Result<()> {
    for p in params {
        let bare = p.name().strip_prefix(prefix).ok_or_else(|| {
            Error::Checkpoint(format!("parameter `{}` lacks prefix `{prefix}`", p.name()))
        })?;
        let (shape, data) = ckpt.get(bare).ok_or_else(|| {
            Error::Checkpoint(format!("checkpoint missing layer `{bare}`"))
        })?;
        let current = p.value();
        if shape != current.shape() {
            return Err(Error::Checkpoint(format!(
                "layer `{bare}`: checkpoint shape {:?} incompatible with model shape {:?}",
                shape,
                current.shape()
            )));
        }
        p.replace_data(data.to_vec());
    }
    Ok(())
}

#[derive(Debug)]
pub struct JointTrainOutput {
    pub checkpoints: Vec<Checkpoint>,
    pub curve: Vec<CurvePoint>,
    pub epoch_losses: Vec<f64>,
    pub epoch_asr_losses: Vec<f64>,
    pub epoch_mt_losses: Vec<f64>,
    pub stopped_early_at: Option<usize>,
}

/// Multi-task training: per batch, total = mean asr loss + λ · mean mt loss,
/// one ADAM step over the trainable parameter set per `freeze` mode. The
/// learning-rate schedule uses the ASR d_model.
pub fn train_joint(
    joint: &mut JointModel,
    corpus: &[JointExample],
    cfg: &TrainConfig,
) -> Result<JointTrainOutput> {
    train_joint_with(joint, corpus, cfg, |_, _| Ok(false))
}

pub fn train_joint_with(
    joint: &mut JointModel,
    corpus: &[JointExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &JointModel) -> Result<bool>,
) -> Result<JointTrainOutput> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("train_joint: empty corpus".into()));
    }
    if joint.freeze == FreezeMode::ConnectorOnly && !joint.from_pretrained {
        return Err(Error::Config(
            "train_joint: connector-only freezing requires pretrained sub-models".into(),
        ));
    }
    let lens: Vec<usize> = corpus.iter().map(|e| e.target.len()).collect();
    let batches = make_batches(&lens, cfg.batch_target_units)?;
    let schedule = ScheduleConfig::new(cfg.k, joint.asr.config().d_model, cfg.warmup)?;
    let trainable = joint.trainable_params();
    let mut adam = AdamState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut global_step = 0u64;
    let mut out = JointTrainOutput {
        checkpoints: Vec::new(),
        curve: Vec::new(),
        epoch_losses: Vec::new(),
        epoch_asr_losses: Vec::new(),
        epoch_mt_losses: Vec::new(),
        stopped_early_at: None,
    };
    for epoch in 0..cfg.epochs {
        let mut e_combined = 0.0;
        let mut e_asr = 0.0;
        let mut e_mt = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            zero_grads(joint.params());
            let mut fwd = Forward::train(cfg.dropout, &mut rng).with_emb_avg(cfg.emb_avg);
            let mut asr_sums = Vec::new();
            let mut mt_sums = Vec::new();
            let (mut asr_tokens, mut mt_tokens) = (0usize, 0usize);
            for &i in batch {
                let terms = joint.forward_losses(&corpus[i], cfg.label_smoothing, &mut fwd)?;
                asr_tokens += terms.asr_count;
                mt_tokens += terms.mt_count;
                asr_sums.push(terms.asr_sum);
                mt_sums.push(terms.mt_sum);
            }
            let asr_loss = ops::scale(&sum_tensors(&asr_sums)?, 1.0 / asr_tokens as f64);
            let mt_loss = ops::scale(&sum_tensors(&mt_sums)?, 1.0 / mt_tokens as f64);
            let total = ops::add(&asr_loss, &ops::scale(&mt_loss, cfg.mt_loss_weight))?;
            let loss_value = total.item();
            if !loss_value.is_finite() {
                return Err(Error::TrainAborted {
                    epoch,
                    batch: bi,
                    reason: format!("non-finite joint loss {loss_value}"),
                });
            }
            total.backward()?;
            if let Some(max_norm) = cfg.grad_clip {
                clip_grad_norm(&trainable, max_norm);
            }
            global_step += 1;
            let lrate = noam_lrate(global_step, &schedule);
            adam_update(&trainable, &mut adam, lrate).map_err(|e| Error::TrainAborted {
                epoch,
                batch: bi,
                reason: e.to_string(),
            })?;
            e_combined += loss_value;
            e_asr += asr_loss.item();
            e_mt += mt_loss.item();
            out.curve.push(CurvePoint {
                step: global_step,
                loss: loss_value,
                lrate,
            });
        }
        let n = batches.len() as f64;
        out.epoch_losses.push(e_combined / n);
        out.epoch_asr_losses.push(e_asr / n);
        out.epoch_mt_losses.push(e_mt / n);
        let ckpt = Checkpoint::from_params(joint.params());
        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            ckpt.save(&dir.join(format!("epoch-{epoch:03}.sqbr")))?;
        }
        out.checkpoints.push(ckpt);
        if on_epoch(epoch, joint)? {
            out.stopped_early_at = Some(epoch);
            break;
        }
    }
    Ok(out)
}

fn sum_tensors(parts: &[Tensor]) -> Result<Tensor> {
    let mut total = parts[0].clone();
    for p in &parts[1..] {
        total = ops::add(&total, p)?;
    }
    Ok(total)
}
