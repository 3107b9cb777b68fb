//! Experiment grid configuration.

use serde::{Deserialize, Serialize};

use crate::data::{TaskConfig, TokenMode};
use crate::decode::DecodeConfig;
use crate::error::{Error, Result};
use crate::train::{ConnectorKind, TrainConfig};
use crate::transformer::{InputMode, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Asr,
    Mt,
    E2e,
    CascadeOne,
    CascadeN,
    CascadeRanked,
    Joint,
    JointEnsemble,
    Augmented,
    EmbAvg,
    PretrainLinearFreeze,
    PretrainLinearFull,
    PretrainSelfattnFreeze,
    PretrainSelfattnFull,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Asr => "asr",
            ExperimentKind::Mt => "mt",
            ExperimentKind::E2e => "e2e",
            ExperimentKind::CascadeOne => "cascade_one",
            ExperimentKind::CascadeN => "cascade_n",
            ExperimentKind::CascadeRanked => "cascade_ranked",
            ExperimentKind::Joint => "joint",
            ExperimentKind::JointEnsemble => "joint_ensemble",
            ExperimentKind::Augmented => "augmented",
            ExperimentKind::EmbAvg => "emb_avg",
            ExperimentKind::PretrainLinearFreeze => "pretrain_linear_freeze",
            ExperimentKind::PretrainLinearFull => "pretrain_linear_full",
            ExperimentKind::PretrainSelfattnFreeze => "pretrain_selfattn_freeze",
            ExperimentKind::PretrainSelfattnFull => "pretrain_selfattn_full",
        }
    }

    pub fn all() -> &'static [ExperimentKind] {
        &[
            ExperimentKind::Asr,
            ExperimentKind::Mt,
            ExperimentKind::E2e,
            ExperimentKind::CascadeOne,
            ExperimentKind::CascadeN,
            ExperimentKind::CascadeRanked,
            ExperimentKind::Joint,
            ExperimentKind::JointEnsemble,
            ExperimentKind::Augmented,
            ExperimentKind::EmbAvg,
            ExperimentKind::PretrainLinearFreeze,
            ExperimentKind::PretrainLinearFull,
            ExperimentKind::PretrainSelfattnFreeze,
            ExperimentKind::PretrainSelfattnFull,
        ]
    }
}

/// Architecture knobs, independent of vocabulary sizes (those come from the
/// tokenizers at build time).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub h: usize,
    pub dropout: f64,
    pub label_smoothing: f64,
    #[serde(default = "default_true")]
    pub pre_norm: bool,
    #[serde(default = "default_channels")]
    pub conv_channels: usize,
    #[serde(default = "default_emb_scale")]
    pub emb_scale: f64,
}

fn default_emb_scale() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}
fn default_channels() -> usize {
    64
}

impl ModelSpec {
    /// Desk-scale speech model (ASR and end-to-end roles).
    pub fn speech_desk() -> ModelSpec {
        ModelSpec {
            n_enc_layers: 4,
            n_dec_layers: 2,
            d_model: 64,
            d_ff: 128,
            h: 4,
            dropout: 0.0,
            label_smoothing: 0.1,
            pre_norm: true,
            conv_channels: 64,
            emb_scale: default_emb_scale(),
        }
    }

    /// Desk-scale text model.
    pub fn text_desk() -> ModelSpec {
        ModelSpec {
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_model: 32,
            d_ff: 128,
            h: 4,
            dropout: 0.0,
            label_smoothing: 0.1,
            pre_norm: true,
            conv_channels: 64,
            emb_scale: default_emb_scale(),
        }
    }

    /// The original ASR/end-to-end architecture: 12 encoder and 6 decoder
    /// layers at d_model 256, d_ff 2048, 4 heads.
    pub fn speech_paper() -> ModelSpec {
        ModelSpec {
            n_enc_layers: 12,
            n_dec_layers: 6,
            d_model: 256,
            d_ff: 2048,
            h: 4,
            dropout: 0.1,
            label_smoothing: 0.1,
            pre_norm: true,
            conv_channels: 64,
            emb_scale: default_emb_scale(),
        }
    }

    /// The original MT architecture: 6+6 layers at 512/1024 with 8 heads.
    pub fn text_paper() -> ModelSpec {
        ModelSpec {
            n_enc_layers: 6,
            n_dec_layers: 6,
            d_model: 512,
            d_ff: 1024,
            h: 8,
            dropout: 0.1,
            label_smoothing: 0.1,
            pre_norm: true,
            conv_channels: 64,
            emb_scale: default_emb_scale(),
        }
    }

    pub fn to_config(
        &self,
        input_mode: InputMode,
        vocab_src: usize,
        vocab_tgt: usize,
        feature_dim: usize,
    ) -> ModelConfig {
        ModelConfig {
            n_enc_layers: self.n_enc_layers,
            n_dec_layers: self.n_dec_layers,
            d_model: self.d_model,
            d_ff: self.d_ff,
            h: self.h,
            vocab_src,
            vocab_tgt,
            input_mode,
            feature_dim,
            conv_channels: self.conv_channels,
            dropout: self.dropout,
            label_smoothing: self.label_smoothing,
            pre_norm: self.pre_norm,
            emb_scale: self.emb_scale,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: ExperimentKind,
    /// Rows sharing a dataset id are comparable in reports.
    pub dataset_id: String,
    pub seed: u64,
    pub task: TaskConfig,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    /// Source-side granularity (MT inputs; ASR targets unless overridden).
    pub src_token_mode: TokenMode,
    /// Target-side granularity (MT/E2E outputs).
    pub tgt_token_mode: TokenMode,
    /// ASR output granularity when it differs from the MT source side; the
    /// cascade then bridges by detokenizing and retokenizing.
    #[serde(default)]
    pub asr_token_mode: Option<TokenMode>,
    pub asr: ModelSpec,
    pub mt: ModelSpec,
    pub e2e: ModelSpec,
    pub train: TrainConfig,
    pub decode_asr: DecodeConfig,
    pub decode_mt: DecodeConfig,
    /// Connector for joint/pretrained kinds (the pretrain_* kinds override
    /// the kind discriminant; the layer count applies to self-attention).
    pub connector: ConnectorKind,
    /// Embedding-averaging settings for the emb_avg kind.
    pub emb_avg_rate: f64,
    pub emb_avg_encoder: bool,
    pub emb_avg_decoder: bool,
}

impl ExperimentConfig {
    pub fn desk_default(kind: ExperimentKind, id: impl Into<String>) -> ExperimentConfig {
        ExperimentConfig {
            id: id.into(),
            kind,
            dataset_id: "toy-v1".into(),
            seed: 4,
            task: TaskConfig::default(),
            n_train: 500,
            n_dev: 32,
            n_test: 32,
            src_token_mode: TokenMode::Char,
            tgt_token_mode: TokenMode::Char,
            asr_token_mode: None,
            asr: ModelSpec::speech_desk(),
            mt: ModelSpec::text_desk(),
            e2e: ModelSpec::speech_desk(),
            train: TrainConfig {
                epochs: 60,
                batch_target_units: 250,
                warmup: 150,
                k: 0.35,
                ..TrainConfig::default()
            },
            decode_asr: DecodeConfig {
                beam: 10,
                n_best: 4,
                length_penalty_alpha: 1.0,
                eos_gamma: 1.0,
                ..DecodeConfig::default()
            },
            decode_mt: DecodeConfig {
                beam: 5,
                n_best: 3,
                length_penalty_alpha: 1.0,
                eos_gamma: 1.0,
                ..DecodeConfig::default()
            },
            connector: ConnectorKind::Linear,
            emb_avg_rate: 0.1,
            emb_avg_encoder: false,
            emb_avg_decoder: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.dataset_id.is_empty() {
            return Err(Error::Config("experiment: empty id".into()));
        }
        if self.n_train == 0 || self.n_dev == 0 {
            return Err(Error::Config("experiment: need train and dev data".into()));
        }
        self.task.validate()?;
        self.train.validate()?;
        self.decode_asr.validate()?;
        self.decode_mt.validate()?;
        if !(0.0..=1.0).contains(&self.emb_avg_rate) {
            return Err(Error::Config("experiment: emb_avg_rate outside [0,1]".into()));
        }
        Ok(())
    }

    /// Stable content hash of the canonical JSON form, for auditable rows.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
