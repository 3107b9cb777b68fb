//! Experiment execution: data synthesis, training, decoding, evaluation,
//! and result-row assembly for every kind in the grid.

use std::path::Path;

use crate::data::{
    gen_examples, ParallelExample, TokenMode, Tokenizer, DEFAULT_MERGES,
};
use crate::decode::{
    beam_search, cascade_decode, CascadeMode, DecodeConfig, Hypothesis, ModelScorer,
};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::train::{
    augment_with_hypotheses, average_trailing, train, train_joint, ConnectorKind, FreezeMode,
    JointExample, JointModel, TrainConfig, TrainExample, TrainInput,
};
use crate::transformer::{EmbAvgSpec, EncoderInput, InputMode, SeqModel};

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{append_rows, ResultRow};

/// Tokenizers and data splits shared by every kind.
pub struct Pipeline {
    pub char_tok: Tokenizer,
    pub asr_tok: Tokenizer,
    pub src_tok: Tokenizer,
    pub tgt_tok: Tokenizer,
    pub train_ex: Vec<ParallelExample>,
    pub dev_ex: Vec<ParallelExample>,
    pub test_ex: Vec<ParallelExample>,
}

fn build_tokenizer(mode: TokenMode, cfg: &ExperimentConfig) -> Result<Tokenizer> {
    let alphabet = cfg.task.tokenizer_alphabet();
    match mode {
        TokenMode::Char => Tokenizer::char_over(alphabet),
        TokenMode::Subword => Tokenizer::subword_over(alphabet, DEFAULT_MERGES),
    }
}

impl Pipeline {
    pub fn build(cfg: &ExperimentConfig) -> Result<Pipeline> {
        let char_tok = build_tokenizer(TokenMode::Char, cfg)?;
        let asr_tok = build_tokenizer(cfg.asr_token_mode.unwrap_or(cfg.src_token_mode), cfg)?;
        let src_tok = build_tokenizer(cfg.src_token_mode, cfg)?;
        let tgt_tok = build_tokenizer(cfg.tgt_token_mode, cfg)?;
        let total = cfg.n_train + cfg.n_dev + cfg.n_test;
        let mut all = gen_examples(cfg.seed, total, &cfg.task, &char_tok)?;
        let test_ex = all.split_off(cfg.n_train + cfg.n_dev);
        let dev_ex = all.split_off(cfg.n_train);
        Ok(Pipeline {
            char_tok,
            asr_tok,
            src_tok,
            tgt_tok,
            train_ex: all,
            dev_ex,
            test_ex,
        })
    }

    pub fn asr_examples(&self, examples: &[ParallelExample]) -> Result<Vec<TrainExample>> {
        examples
            .iter()
            .map(|e| {
                Ok(TrainExample {
                    input: TrainInput::Features(e.features.clone()),
                    target: self.asr_tok.tokenize(&e.source)?.content(),
                })
            })
            .collect()
    }

    pub fn mt_examples(&self, pairs: &[(String, String)]) -> Result<Vec<TrainExample>> {
        pairs
            .iter()
            .map(|(s, t)| {
                Ok(TrainExample {
                    input: TrainInput::Tokens(self.src_tok.tokenize(s)?.ids().to_vec()),
                    target: self.tgt_tok.tokenize(t)?.content(),
                })
            })
            .collect()
    }

    pub fn e2e_examples(&self, examples: &[ParallelExample]) -> Result<Vec<TrainExample>> {
        examples
            .iter()
            .map(|e| {
                Ok(TrainExample {
                    input: TrainInput::Features(e.features.clone()),
                    target: self.tgt_tok.tokenize(&e.target)?.content(),
                })
            })
            .collect()
    }

    pub fn joint_examples(&self, examples: &[ParallelExample]) -> Result<Vec<JointExample>> {
        examples
            .iter()
            .map(|e| {
                Ok(JointExample {
                    features: e.features.clone(),
                    source: self.asr_tok.tokenize(&e.source)?.content(),
                    target: self.tgt_tok.tokenize(&e.target)?.content(),
                })
            })
            .collect()
    }

    pub fn pairs(&self, examples: &[ParallelExample]) -> Vec<(String, String)> {
        examples
            .iter()
            .map(|e| (e.source.clone(), e.target.clone()))
            .collect()
    }

    /// Maps discrete ASR output ids to MT source ids through text.
    pub fn bridge_tokens(&self, asr_content: &[u32]) -> Result<Vec<u32>> {
        let text = self.asr_tok.detokenize(asr_content);
        if text.is_empty() {
            return Err(Error::Decode("bridge: empty hypothesis text".into()));
        }
        Ok(self.src_tok.tokenize(&text)?.ids().to_vec())
    }
}

/// Per-utterance ASR decode budget: estimated source tokens plus headroom.
pub fn asr_decode_cfg(base: &DecodeConfig, t_frames: usize, frames_per_token: usize) -> DecodeConfig {
    let mut cfg = base.clone();
    cfg.max_len = t_frames / frames_per_token.max(1) + 10;
    cfg
}

/// Per-utterance MT decode budget: twice the source length plus headroom.
pub fn mt_decode_cfg(base: &DecodeConfig, src_len: usize) -> DecodeConfig {
    let mut cfg = base.clone();
    cfg.max_len = 2 * src_len + 10;
    cfg
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn train_and_average(
    model: &mut SeqModel,
    examples: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<()> {
    let out = train(model, examples, cfg)?;
    let avg = average_trailing(&out.checkpoints, cfg.average_last)?;
    avg.apply_to(model.params())
}

fn speech_config(cfg: &ExperimentConfig, spec: &super::config::ModelSpec, vocab_tgt: usize) -> crate::transformer::ModelConfig {
    spec.to_config(InputMode::Speech, vocab_tgt, vocab_tgt, cfg.task.feature_dim)
}

fn text_config(
    spec: &super::config::ModelSpec,
    vocab_src: usize,
    vocab_tgt: usize,
) -> crate::transformer::ModelConfig {
    spec.to_config(InputMode::Text, vocab_src, vocab_tgt, 0)
}

pub fn transcribe(
    asr: &SeqModel,
    tok: &Tokenizer,
    ex: &ParallelExample,
    base: &DecodeConfig,
    frames_per_token: usize,
) -> Result<(String, Hypothesis)> {
    let scorer = ModelScorer::new(asr, EncoderInput::Features(&ex.features))?;
    let cfg = asr_decode_cfg(base, ex.features.len(), frames_per_token);
    let hyp = beam_search(&scorer, &cfg)?.remove(0);
    Ok((tok.detokenize(hyp.content()), hyp))
}

pub fn translate_text(
    mt: &SeqModel,
    src_tok: &Tokenizer,
    tgt_tok: &Tokenizer,
    source: &str,
    base: &DecodeConfig,
) -> Result<(String, Hypothesis)> {
    let ids = src_tok.tokenize(source)?.ids().to_vec();
    let scorer = ModelScorer::new(mt, EncoderInput::Tokens(&ids))?;
    let cfg = mt_decode_cfg(base, ids.len());
    let hyp = beam_search(&scorer, &cfg)?.remove(0);
    Ok((tgt_tok.detokenize(hyp.content()), hyp))
}

struct RowBuilder<'a> {
    cfg: &'a ExperimentConfig,
    hash: String,
}

impl<'a> RowBuilder<'a> {
    fn new(cfg: &'a ExperimentConfig) -> RowBuilder<'a> {
        RowBuilder {
            cfg,
            hash: cfg.content_hash(),
        }
    }

    fn decode_desc(&self) -> String {
        format!(
            "asr_beam={} mt_beam={} alpha={}/{} gamma={}",
            self.cfg.decode_asr.beam,
            self.cfg.decode_mt.beam,
            self.cfg.decode_asr.length_penalty_alpha,
            self.cfg.decode_mt.length_penalty_alpha,
            self.cfg.decode_asr.eos_gamma
        )
    }

    fn row(
        &self,
        split: &str,
        variant: Option<&str>,
        wer: Option<f64>,
        cer: Option<f64>,
        bleu: Option<f64>,
    ) -> ResultRow {
        ResultRow {
            experiment_id: self.cfg.id.clone(),
            dataset_id: self.cfg.dataset_id.clone(),
            kind: self.cfg.kind.name().to_string(),
            variant: variant.map(str::to_string),
            split: split.to_string(),
            wer,
            cer,
            bleu,
            decode: self.decode_desc(),
            seed: self.cfg.seed,
            config_hash: self.hash.clone(),
            status: "ok".to_string(),
            note: None,
        }
    }

    fn failure(&self, stage_name: &str) -> ResultRow {
        let mut r = self.row("-", None, None, None, None);
        r.status = format!("failed:{stage_name}");
        r
    }
}

/// Runs one experiment end to end and appends its rows (or a failure marker)
/// to `results_path` when given. Fully deterministic for a fixed config.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    results_path: Option<&Path>,
) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let builder = RowBuilder::new(cfg);
    match run_kind(cfg, &builder) {
        Ok(rows) => {
            if let Some(path) = results_path {
                append_rows(path, &rows)?;
            }
            Ok(rows)
        }
        Err(e) => {
            let stage_name = match &e {
                Error::Stage { stage, .. } => stage,
                _ => "unknown",
            };
            if let Some(path) = results_path {
                append_rows(path, &[builder.failure(stage_name)])?;
            }
            Err(e)
        }
    }
}

fn run_kind(cfg: &ExperimentConfig, rb: &RowBuilder) -> Result<Vec<ResultRow>> {
    let pipe = stage("data", Pipeline::build(cfg))?;
    match cfg.kind {
        ExperimentKind::Asr => run_asr(cfg, rb, &pipe),
        ExperimentKind::Mt => run_mt(cfg, rb, &pipe),
        ExperimentKind::E2e => run_e2e(cfg, rb, &pipe),
        ExperimentKind::CascadeOne => run_cascade(cfg, rb, &pipe, CascadeMode::OneBest),
        ExperimentKind::CascadeN => run_cascade(cfg, rb, &pipe, CascadeMode::NBest),
        ExperimentKind::CascadeRanked => run_cascade(cfg, rb, &pipe, CascadeMode::RankedNBest),
        ExperimentKind::Joint => run_joint(cfg, rb, &pipe, false),
        ExperimentKind::JointEnsemble => run_joint(cfg, rb, &pipe, true),
        ExperimentKind::Augmented => run_augmented(cfg, rb, &pipe),
        ExperimentKind::EmbAvg => run_emb_avg(cfg, rb, &pipe),
        ExperimentKind::PretrainLinearFreeze => {
            run_pretrained(cfg, rb, &pipe, ConnectorKind::Linear, FreezeMode::ConnectorOnly)
        }
        ExperimentKind::PretrainLinearFull => {
            run_pretrained(cfg, rb, &pipe, ConnectorKind::Linear, FreezeMode::Full)
        }
        ExperimentKind::PretrainSelfattnFreeze => run_pretrained(
            cfg,
            rb,
            &pipe,
            selfattn_kind(cfg),
            FreezeMode::ConnectorOnly,
        ),
        ExperimentKind::PretrainSelfattnFull => {
            run_pretrained(cfg, rb, &pipe, selfattn_kind(cfg), FreezeMode::Full)
        }
    }
}

fn selfattn_kind(cfg: &ExperimentConfig) -> ConnectorKind {
    match cfg.connector {
        ConnectorKind::SelfAttn { layers } => ConnectorKind::SelfAttn { layers },
        ConnectorKind::Linear => ConnectorKind::SelfAttn { layers: 1 },
    }
}

fn trained_asr(cfg: &ExperimentConfig, pipe: &Pipeline) -> Result<SeqModel> {
    let mut model = SeqModel::new(
        speech_config(cfg, &cfg.asr, pipe.asr_tok.vocab_size()),
        cfg.seed.wrapping_add(101),
    )?;
    let examples = pipe.asr_examples(&pipe.train_ex)?;
    train_and_average(&mut model, &examples, &cfg.train)?;
    Ok(model)
}

fn trained_mt(cfg: &ExperimentConfig, pipe: &Pipeline, pairs: &[(String, String)]) -> Result<SeqModel> {
    let mut model = SeqModel::new(
        text_config(&cfg.mt, pipe.src_tok.vocab_size(), pipe.tgt_tok.vocab_size()),
        cfg.seed.wrapping_add(202),
    )?;
    let examples = pipe.mt_examples(pairs)?;
    train_and_average(&mut model, &examples, &cfg.train)?;
    Ok(model)
}

fn run_asr(cfg: &ExperimentConfig, rb: &RowBuilder, pipe: &Pipeline) -> Result<Vec<ResultRow>> {
    let model = stage("train_asr", trained_asr(cfg, pipe))?;
    let mut rows = Vec::new();
    for (split, examples) in [("dev", &pipe.dev_ex), ("test", &pipe.test_ex)] {
        let report = stage("evaluate", eval_asr(cfg, pipe, &model, examples))?;
        rows.push(rb.row(split, None, Some(report.wer), Some(report.cer), None));
    }
    Ok(rows)
}

fn eval_asr(
    cfg: &ExperimentConfig,
    pipe: &Pipeline,
    model: &SeqModel,
    examples: &[ParallelExample],
) -> Result<crate::metrics::EvalReport> {
    let mut refs = Vec::new();
    let mut hyps = Vec::new();
    for ex in examples {
        let (text, _) = transcribe(
            model,
            &pipe.asr_tok,
            ex,
            &cfg.decode_asr,
            cfg.task.frames_per_token,
        )?;
        refs.push(ex.source.clone());
        hyps.push(text);
    }
    evaluate(&refs, &hyps)
}

fn run_mt(cfg: &ExperimentConfig, rb: &RowBuilder, pipe: &Pipeline) -> Result<Vec<ResultRow>> {
    let pairs = pipe.pairs(&pipe.train_ex);
    let model = stage("train_mt", trained_mt(cfg, pipe, &pairs))?;
    let mut rows = Vec::new();
    for (split, examples) in [("dev", &pipe.dev_ex), ("test", &pipe.test_ex)] {
        let report = stage("evaluate", eval_mt_oracle(cfg, pipe, &model, examples))?;
        rows.push(rb.row(split, None, None, None, Some(report.bleu)));
    }
    Ok(rows)
}

fn eval_mt_oracle(
    cfg: &ExperimentConfig,
    pipe: &Pipeline,
    model: &SeqModel,
    examples: &[ParallelExample],
) -> Result<crate::metrics::EvalReport> {
    let mut refs = Vec::new();
    let mut hyps = Vec::new();
    for ex in examples {
        let (text, _) = translate_text(model, &pipe.src_tok, &pipe.tgt_tok, &ex.source, &cfg.decode_mt)?;
        refs.push(ex.target.clone());
        hyps.push(text);
    }
    evaluate(&refs, &hyps)
}

fn run_e2e(cfg: &ExperimentConfig, rb: &RowBuilder, pipe: &Pipeline) -> Result<Vec<ResultRow>> {
    let mut model = SeqModel::new(
        speech_config(cfg, &cfg.e2e, pipe.tgt_tok.vocab_size()),
        cfg.seed.wrapping_add(303),
    )?;
    let examples = pipe.e2e_examples(&pipe.train_ex)?;
    stage("train_e2e", train_and_average(&mut model, &examples, &cfg.train))?;
    let mut rows = Vec::new();
    for (split, examples) in [("dev", &pipe.dev_ex), ("test", &pipe.test_ex)] {
        let mut refs = Vec::new();
        let mut hyps = Vec::new();
        for ex in examples {
            let scorer = ModelScorer::new(&model, EncoderInput::Features(&ex.features))?;
            let dcfg = asr_decode_cfg(&cfg.decode_asr, ex.features.len(), cfg.task.frames_per_token);
            let hyp = stage("decode", beam_search(&scorer, &dcfg))?.remove(0);
            refs.push(ex.target.clone());
            hyps.push(pipe.tgt_tok.detokenize(hyp.content()));
        }
        let report = stage("evaluate", evaluate(&refs, &hyps))?;
        rows.push(rb.row(split, None, None, None, Some(report.bleu)));
    }
    Ok(rows)
}

fn run_cascade(
    cfg: &ExperimentConfig,
    rb: &RowBuilder,
    pipe: &Pipeline,
    mode: CascadeMode,
) -> Result<Vec<ResultRow>> {
    let asr = stage("train_asr", trained_asr(cfg, pipe))?;
    let pairs = pipe.pairs(&pipe.train_ex);
    let mt = stage("train_mt", trained_mt(cfg, pipe, &pairs))?;
    let mut rows = Vec::new();
    for (split, examples) in [("dev", &pipe.dev_ex), ("test", &pipe.test_ex)] {
        let mut src_refs = Vec::new();
        let mut src_hyps = Vec::new();
        let mut tgt_refs = Vec::new();
        let mut tgt_hyps = Vec::new();
        for ex in examples {
            let out = stage("decode", cascade_utt(cfg, pipe, &asr, &mt, ex, mode))?;
            src_refs.push(ex.source.clone());
            src_hyps.push(pipe.asr_tok.detokenize(out.asr_hypothesis.content()));
            tgt_refs.push(ex.target.clone());
            tgt_hyps.push(pipe.tgt_tok.detokenize(out.translation.content()));
        }
        let asr_rep = stage("evaluate", evaluate(&src_refs, &src_hyps))?;
        let mt_rep = stage("evaluate", evaluate(&tgt_refs, &tgt_hyps))?;
        rows.push(rb.row(
            split,
            None,
            Some(asr_rep.wer),
            Some(asr_rep.cer),
            Some(mt_rep.bleu),
        ));
    }
    Ok(rows)
}

pub fn cascade_utt(
    cfg: &ExperimentConfig,
    pipe: &Pipeline,
    asr: &SeqModel,
    mt: &SeqModel,
    ex: &ParallelExample,
    mode: CascadeMode,
) -> Result<crate::decode::CascadeOutput> {
    let asr_scorer = ModelScorer::new(asr, EncoderInput::Features(&ex.features))?;
    let cfg_asr = asr_decode_cfg(&cfg.decode_asr, ex.features.len(), cfg.task.frames_per_token);
    let mt_base = cfg.decode_mt.clone();
    let mt_for = |z: &Hypothesis| -> Result<ModelScorer<'_>> {
        let ids = pipe.bridge_tokens(z.content())?;
        ModelScorer::new(mt, EncoderInput::Tokens(&ids))
    };
    // budget follows the top hypothesis's length estimate
    let cfg_mt = mt_decode_cfg(&mt_base, ex.features.len() / cfg.task.frames_per_token.max(1));
    cascade_decode(&asr_scorer, mt_for, mode, &cfg_asr, &cfg_mt)
}

fn run_joint(
    cfg: &ExperimentConfig,
    rb: &RowBuilder,
    pipe: &Pipeline,
    with_ensembles: bool,
) -> Result<Vec<ResultRow>> {
    let asr_cfg = speech_config(cfg, &cfg.asr, pipe.asr_tok.vocab_size());
    let mt_cfg = text_config(&cfg.mt, pipe.src_tok.vocab_size(), pipe.tgt_tok.vocab_size());
    let mut joint = JointModel::new(asr_cfg, mt_cfg, cfg.connector, cfg.seed.wrapping_add(404))?;
    let examples = pipe.joint_examples(&pipe.train_ex)?;
    let out = stage("train_joint", train_joint(&mut joint, &examples, &cfg.train))?;
    let avg = stage(
        "average",
        average_trailing(&out.checkpoints, cfg.train.average_last),
    )?;
    stage("average", avg.apply_to(joint.params()))?;

    let (standalone_asr, standalone_mt);
    let variants: Vec<(&str, bool, bool)> = if with_ensembles {
        standalone_asr = stage("train_asr", trained_asr(cfg, pipe))?;
        let pairs = pipe.pairs(&pipe.train_ex);
        standalone_mt = stage("train_mt", trained_mt(cfg, pipe, &pairs))?;
        vec![
            ("stand-alone", false, false),
            ("ens-asr", true, false),
            ("ens-mt", false, true),
            ("ens-asr-mt", true, true),
        ]
    } else {
        standalone_asr = SeqModel::new(
            speech_config(cfg, &cfg.asr, pipe.asr_tok.vocab_size()),
            0,
        )?;
        standalone_mt = SeqModel::new(
            text_config(&cfg.mt, pipe.src_tok.vocab_size(), pipe.tgt_tok.vocab_size()),
            0,
        )?;
        vec![("", false, false)]
    };

    let bridge = |ids: &[u32]| pipe.bridge_tokens(ids);
    let mut rows = Vec::new();
    for (variant, ens_asr, ens_mt) in variants {
        for (split, examples) in [("dev", &pipe.dev_ex), ("test", &pipe.test_ex)] {
            let mut src_refs = Vec::new();
            let mut src_hyps = Vec::new();
            let mut tgt_refs = Vec::new();
            let mut tgt_hyps = Vec::new();
            for ex in examples {
                let cfg_asr =
                    asr_decode_cfg(&cfg.decode_asr, ex.features.len(), cfg.task.frames_per_token);
                let cfg_mt = mt_decode_cfg(
                    &cfg.decode_mt,
                    ex.features.len() / cfg.task.frames_per_token.max(1),
                );
                let out = stage(
                    "decode",
                    joint.decode_with(
                        &ex.features,
                        ens_asr.then_some(&standalone_asr),
                        ens_mt.then_some((&standalone_mt, &bridge as crate::train::TokenBridge)),
                        &cfg_asr,
                        &cfg_mt,
                    ),
                )?;
                src_refs.push(ex.source.clone());
                src_hyps.push(pipe.asr_tok.detokenize(out.asr_hypothesis.content()));
                tgt_refs.push(ex.target.clone());
                tgt_hyps.push(pipe.tgt_tok.detokenize(out.translation.content()));
            }
            let asr_rep = stage("evaluate", evaluate(&src_refs, &src_hyps))?;
            let mt_rep = stage("evaluate", evaluate(&tgt_refs, &tgt_hyps))?;
            let variant_opt = (!variant.is_empty()).then_some(variant);
            rows.push(rb.row(
                split,
                variant_opt,
                Some(asr_rep.wer),
                None,
                Some(mt_rep.bleu),
            ));
        }
    }
    Ok(rows)
}

fn run_augmented(cfg: &ExperimentConfig, rb: &RowBuilder, pipe: &Pipeline) -> Result<Vec<ResultRow>> {
    let asr = stage("train_asr", trained_asr(cfg, pipe))?;
    let augmented = stage("augment", {
        let mut decode = |features: &crate::data::FeatureSequence| -> Result<Option<String>> {
            let scorer = ModelScorer::new(&asr, EncoderInput::Features(features))?;
            let dcfg = asr_decode_cfg(&cfg.decode_asr, features.len(), cfg.task.frames_per_token);
            let hyp = beam_search(&scorer, &dcfg)?.remove(0);
            let text = pipe.asr_tok.detokenize(hyp.content());
            Ok((!text.is_empty()).then_some(text))
        };
        Ok(augment_with_hypotheses(&pipe.train_ex, &mut decode))
    })?;
    let mt = stage("train_mt", trained_mt(cfg, pipe, &augmented.pairs))?;
    oracle_and_hyp_rows(cfg, rb, pipe, &asr, &mt)
}

fn run_emb_avg(cfg: &ExperimentConfig, rb: &RowBuilder, pipe: &Pipeline) -> Result<Vec<ResultRow>> {
    let asr = stage("train_asr", trained_asr(cfg, pipe))?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.emb_avg = Some(EmbAvgSpec {
        rate: cfg.emb_avg_rate,
        at_encoder: cfg.emb_avg_encoder,
        at_decoder: cfg.emb_avg_decoder,
    });
    let pairs = pipe.pairs(&pipe.train_ex);
    let mt = stage("train_mt", {
        let mut model = SeqModel::new(
            text_config(&cfg.mt, pipe.src_tok.vocab_size(), pipe.tgt_tok.vocab_size()),
            cfg.seed.wrapping_add(202),
        )?;
        let examples = pipe.mt_examples(&pairs)?;
        train_and_average(&mut model, &examples, &train_cfg).map(|_| model)
    })?;
    oracle_and_hyp_rows(cfg, rb, pipe, &asr, &mt)
}

/// Shared evaluation for the MT-robustness kinds: BLEU with oracle source
/// text and with 1-best ASR hypotheses as input.
fn oracle_and_hyp_rows(
    cfg: &ExperimentConfig,
    rb: &RowBuilder,
    pipe: &Pipeline,
    asr: &SeqModel,
    mt: &SeqModel,
) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (split, examples) in [("dev", &pipe.dev_ex), ("test", &pipe.test_ex)] {
        let oracle = stage("evaluate", eval_mt_oracle(cfg, pipe, mt, examples))?;
        rows.push(rb.row(split, Some("oracle-input"), None, None, Some(oracle.bleu)));
        let mut refs = Vec::new();
        let mut hyps = Vec::new();
        for ex in examples {
            let out = stage(
                "decode",
                cascade_utt(cfg, pipe, asr, mt, ex, CascadeMode::OneBest),
            )?;
            refs.push(ex.target.clone());
            hyps.push(pipe.tgt_tok.detokenize(out.translation.content()));
        }
        let hyp_rep = stage("evaluate", evaluate(&refs, &hyps))?;
        rows.push(rb.row(split, Some("hyp-input"), None, None, Some(hyp_rep.bleu)));
    }
    Ok(rows)
}

fn run_pretrained(
    cfg: &ExperimentConfig,
    rb: &RowBuilder,
    pipe: &Pipeline,
    kind: ConnectorKind,
    freeze: FreezeMode,
) -> Result<Vec<ResultRow>> {
    let asr = stage("train_asr", trained_asr(cfg, pipe))?;
    let pairs = pipe.pairs(&pipe.train_ex);
    let mt = stage("train_mt", trained_mt(cfg, pipe, &pairs))?;
    let asr_ckpt = crate::params::Checkpoint::from_params(asr.params());
    let mt_ckpt = crate::params::Checkpoint::from_params(mt.params());
    let asr_cfg = speech_config(cfg, &cfg.asr, pipe.asr_tok.vocab_size());
    let mt_cfg = text_config(&cfg.mt, pipe.src_tok.vocab_size(), pipe.tgt_tok.vocab_size());
    let mut joint = stage(
        "init_joint",
        JointModel::from_pretrained(
            &asr_ckpt,
            &mt_ckpt,
            asr_cfg,
            mt_cfg,
            kind,
            cfg.seed.wrapping_add(505),
        ),
    )?
    .with_freeze(freeze);
    let examples = pipe.joint_examples(&pipe.train_ex)?;
    let out = stage("train_joint", train_joint(&mut joint, &examples, &cfg.train))?;
    let avg = stage(
        "average",
        average_trailing(&out.checkpoints, cfg.train.average_last),
    )?;
    stage("average", avg.apply_to(joint.params()))?;
    let mut rows = Vec::new();
    for (split, examples) in [("dev", &pipe.dev_ex), ("test", &pipe.test_ex)] {
        let mut src_refs = Vec::new();
        let mut src_hyps = Vec::new();
        let mut tgt_refs = Vec::new();
        let mut tgt_hyps = Vec::new();
        for ex in examples {
            let cfg_asr =
                asr_decode_cfg(&cfg.decode_asr, ex.features.len(), cfg.task.frames_per_token);
            let cfg_mt = mt_decode_cfg(
                &cfg.decode_mt,
                ex.features.len() / cfg.task.frames_per_token.max(1),
            );
            let out = stage("decode", joint.decode(&ex.features, &cfg_asr, &cfg_mt))?;
            src_refs.push(ex.source.clone());
            src_hyps.push(pipe.asr_tok.detokenize(out.asr_hypothesis.content()));
            tgt_refs.push(ex.target.clone());
            tgt_hyps.push(pipe.tgt_tok.detokenize(out.translation.content()));
        }
        let asr_rep = stage("evaluate", evaluate(&src_refs, &src_hyps))?;
        let mt_rep = stage("evaluate", evaluate(&tgt_refs, &tgt_hyps))?;
        rows.push(rb.row(split, None, Some(asr_rep.wer), None, Some(mt_rep.bleu)));
    }
    Ok(rows)
}
