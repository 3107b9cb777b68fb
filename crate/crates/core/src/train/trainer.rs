//! Teacher-forced training of a single sequence model.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureSequence;
use crate::error::{Error, Result};
use crate::optim::{adam_update, clip_grad_norm, noam_lrate, AdamState, ScheduleConfig};
use crate::params::{zero_grads, Checkpoint};
use crate::tensor::{ops, Tensor};
use crate::transformer::{EmbAvgSpec, EncoderInput, Forward, SeqModel};

use super::batch::make_batches;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_target_units: usize,
    pub warmup: u64,
    pub k: f64,
    pub label_smoothing: f64,
    pub dropout: f64,
    pub seed: u64,
    /// How many trailing epoch checkpoints the decoding average uses.
    pub average_last: usize,
    /// λ: weight of the MT loss in joint training.
    pub mt_loss_weight: f64,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub emb_avg: Option<EmbAvgSpec>,
    /// When set, epoch checkpoints are also serialized here.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    /// Desk-scale defaults; the paper-scale preset is [`TrainConfig::paper`].
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_target_units: 700,
            warmup: 100,
            k: 1.0,
            label_smoothing: 0.1,
            dropout: 0.0,
            seed: 0,
            average_last: 5,
            mt_loss_weight: 1.0,
            grad_clip: None,
            emb_avg: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    /// Hyperparameters at the scale the original systems were trained with:
    /// 150 epochs, 7000-unit batches, 25000 warmup steps, 10-epoch average.
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 150,
            batch_target_units: 7000,
            warmup: 25000,
            k: 1.0,
            label_smoothing: 0.1,
            dropout: 0.1,
            average_last: 10,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.average_last < 1 {
            return Err(Error::Config("train: average_last must be >= 1".into()));
        }
        if self.batch_target_units < 1 {
            return Err(Error::Config("train: batch_target_units must be >= 1".into()));
        }
        if self.mt_loss_weight < 0.0 {
            return Err(Error::Config("train: mt_loss_weight must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(
                "train: dropout and label_smoothing must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// One training example: encoder input plus target content tokens
/// (no sentinels; SOS/EOS are added by teacher forcing).
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub input: TrainInput,
    pub target: Vec<u32>,
}

#[derive(Debug, Clone)]
pub enum TrainInput {
    Tokens(Vec<u32>),
    Features(FeatureSequence),
}

impl TrainInput {
    pub fn as_encoder_input(&self) -> EncoderInput<'_> {
        match self {
            TrainInput::Tokens(ids) => EncoderInput::Tokens(ids),
            TrainInput::Features(f) => EncoderInput::Features(f),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub loss: f64,
    pub lrate: f64,
}

/// Loss curve as `step,loss,lrate` comma-separated lines.
pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("step,loss,lrate\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.step, p.loss, p.lrate));
    }
    out
}

#[derive(Debug)]
pub struct TrainOutput {
    pub checkpoints: Vec<Checkpoint>,
    pub curve: Vec<CurvePoint>,
    pub epoch_losses: Vec<f64>,
    pub stopped_early_at: Option<usize>,
}

/// Trains with one ADAM step per batch at the scheduled learning rate.
pub fn train(model: &mut SeqModel, corpus: &[TrainExample], cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(model, corpus, cfg, |_, _| Ok(false))
}

/// Like [`train`] but invokes `on_epoch(epoch_index, model)` after each
/// epoch's checkpoint; returning true stops training early (validation-based
/// early stopping).
pub fn train_with(
    model: &mut SeqModel,
    corpus: &[TrainExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &SeqModel) -> Result<bool>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    validate_corpus(model, corpus)?;
    let lens: Vec<usize> = corpus.iter().map(|e| e.target.len()).collect();
    let batches = make_batches(&lens, cfg.batch_target_units)?;
    let schedule = ScheduleConfig::new(cfg.k, model.config().d_model, cfg.warmup)?;
    let mut adam = AdamState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut global_step = 0u64;
    let mut out = TrainOutput {
        checkpoints: Vec::new(),
        curve: Vec::new(),
        epoch_losses: Vec::new(),
        stopped_early_at: None,
    };
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0f64;
        for (bi, batch) in batches.iter().enumerate() {
            zero_grads(model.params());
            let mut fwd = Forward::train(cfg.dropout, &mut rng).with_emb_avg(cfg.emb_avg);
            let mut sums: Vec<Tensor> = Vec::with_capacity(batch.len());
            let mut total_tokens = 0usize;
            for &i in batch {
                let ex = &corpus[i];
                let (sum, count) = model.forward_loss(
                    ex.input.as_encoder_input(),
                    &ex.target,
                    cfg.label_smoothing,
                    &mut fwd,
                )?;
                sums.push(sum);
                total_tokens += count;
            }
            let mut total = sums[0].clone();
            for s in &sums[1..] {
                total = ops::add(&total, s)?;
            }
            let loss = ops::scale(&total, 1.0 / total_tokens as f64);
            let loss_value = loss.item();
            if !loss_value.is_finite() {
                return Err(Error::TrainAborted {
                    epoch,
                    batch: bi,
                    reason: format!("non-finite loss {loss_value}"),
                });
            }
            loss.backward()?;
            if let Some(max_norm) = cfg.grad_clip {
                clip_grad_norm(model.params(), max_norm);
            }
            global_step += 1;
            let lrate = noam_lrate(global_step, &schedule);
            adam_update(model.params(), &mut adam, lrate).map_err(|e| Error::TrainAborted {
                epoch,
                batch: bi,
                reason: e.to_string(),
            })?;
            epoch_loss += loss_value;
            out.curve.push(CurvePoint {
                step: global_step,
                loss: loss_value,
                lrate,
            });
        }
        let ckpt = Checkpoint::from_params(model.params());
        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            ckpt.save(&dir.join(format!("epoch-{epoch:03}.sqbr")))?;
        }
        out.checkpoints.push(ckpt);
        out.epoch_losses.push(epoch_loss / batches.len() as f64);
        if on_epoch(epoch, model)? {
            out.stopped_early_at = Some(epoch);
            break;
        }
    }
    Ok(out)
}

fn validate_corpus(model: &SeqModel, corpus: &[TrainExample]) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("train: empty corpus".into()));
    }
    let cfg = model.config();
    for (i, ex) in corpus.iter().enumerate() {
        if let Some(&bad) = ex.target.iter().find(|&&t| t as usize >= cfg.vocab_tgt) {
            return Err(Error::InvalidArgument(format!(
                "train: example {i} target id {bad} outside vocabulary {}",
                cfg.vocab_tgt
            )));
        }
        if let TrainInput::Tokens(ids) = &ex.input {
            if let Some(&bad) = ids.iter().find(|&&t| t as usize >= cfg.vocab_src) {
                return Err(Error::InvalidArgument(format!(
                    "train: example {i} source id {bad} outside vocabulary {}",
                    cfg.vocab_src
                )));
            }
        }
    }
    Ok(())
}

/// The mean of the trailing `average_last` checkpoints (or all, if fewer).
pub fn average_trailing(checkpoints: &[Checkpoint], average_last: usize) -> Result<Checkpoint> {
    let n = checkpoints.len().min(average_last.max(1));
    let tail = &checkpoints[checkpoints.len() - n..];
    crate::params::average_checkpoints(tail)
}
