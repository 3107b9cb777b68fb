//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sltk::data::{
    gen_examples, read_jsonl, tokenizer_for, write_jsonl, DatasetRecord, FeatureSequence,
    ParallelExample, TaskConfig, TokenMode, Tokenizer,
};
use sltk::decode::{beam_search, cascade_decode, CascadeMode, DecodeConfig, Hypothesis, ModelScorer};
use sltk::experiment::{
    asr_decode_cfg, compare_report, mt_decode_cfg, read_rows, run_experiment, ExperimentConfig,
    ExperimentKind, ModelSpec,
};
use sltk::params::Checkpoint;
use sltk::train::{average_trailing, curve_to_csv, TrainConfig, TrainExample, TrainInput};
use sltk::transformer::{EncoderInput, InputMode, ModelConfig, SeqModel};

use crate::{results_dir, RoleArg};

/// Everything needed to rebuild a trained model for decoding.
#[derive(Serialize, Deserialize)]
struct RunManifest {
    role: String,
    model: ModelConfig,
    task: TaskConfig,
    src_mode: TokenMode,
    tgt_mode: TokenMode,
    seed: u64,
}

pub fn gen(out_dir: &Path, seed: u64, counts: [usize; 3], task: TaskConfig) -> Result<()> {
    task.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let char_tok = tokenizer_for(TokenMode::Char, &task)?;
    let total: usize = counts.iter().sum();
    let mut all = gen_examples(seed, total, &task, &char_tok)?;
    let test = all.split_off(counts[0] + counts[1]);
    let dev = all.split_off(counts[0]);
    for (name, examples) in [("train", &all), ("dev", &dev), ("test", &test)] {
        let records: Vec<DatasetRecord> = examples
            .iter()
            .map(|e| DatasetRecord::from_example(e, true))
            .collect();
        write_jsonl(&out_dir.join(format!("{name}.jsonl")), &records)?;
    }
    std::fs::write(out_dir.join("task.json"), serde_json::to_string_pretty(&task)?)?;
    println!(
        "wrote {}/{}/{} examples to {}",
        counts[0],
        counts[1],
        counts[2],
        out_dir.display()
    );
    Ok(())
}

fn load_task(data_dir: &Path) -> Result<TaskConfig> {
    let text = std::fs::read_to_string(data_dir.join("task.json"))
        .with_context(|| format!("reading {}/task.json", data_dir.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_examples(path: &Path) -> Result<Vec<ParallelExample>> {
    read_jsonl(path)?
        .into_iter()
        .map(|r| r.into_example().map_err(Into::into))
        .collect()
}

fn read_json_or<T: serde::de::DeserializeOwned>(path: Option<&Path>, default: T) -> Result<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(default),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    data_dir: &Path,
    out_dir: &Path,
    role: RoleArg,
    src_mode: TokenMode,
    tgt_mode: TokenMode,
    model_spec: Option<&Path>,
    train_config: Option<&Path>,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let task = load_task(data_dir)?;
    let examples = load_examples(&data_dir.join("train.jsonl"))?;
    let src_tok = tokenizer_for(src_mode, &task)?;
    let tgt_tok = tokenizer_for(tgt_mode, &task)?;

    let default_spec = match role {
        RoleArg::Asr | RoleArg::E2e => ModelSpec::speech_desk(),
        RoleArg::Mt => ModelSpec::text_desk(),
    };
    let spec: ModelSpec = read_json_or(model_spec, default_spec)?;
    let mut cfg: TrainConfig = read_json_or(train_config, TrainConfig::default())?;
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(out_dir)?;
    cfg.checkpoint_dir = Some(out_dir.join("checkpoints"));

    let (model_cfg, role_name, train_examples): (ModelConfig, &str, Vec<TrainExample>) = match role
    {
        RoleArg::Asr => {
            let mc = spec.to_config(
                InputMode::Speech,
                src_tok.vocab_size(),
                src_tok.vocab_size(),
                task.feature_dim,
            );
            let ex = examples
                .iter()
                .map(|e| {
                    Ok(TrainExample {
                        input: TrainInput::Features(e.features.clone()),
                        target: src_tok.tokenize(&e.source)?.content(),
                    })
                })
                .collect::<Result<_, sltk::Error>>()?;
            (mc, "asr", ex)
        }
        RoleArg::Mt => {
            let mc = spec.to_config(
                InputMode::Text,
                src_tok.vocab_size(),
                tgt_tok.vocab_size(),
                task.feature_dim,
            );
            let ex = examples
                .iter()
                .map(|e| {
                    Ok(TrainExample {
                        input: TrainInput::Tokens(src_tok.tokenize(&e.source)?.ids().to_vec()),
                        target: tgt_tok.tokenize(&e.target)?.content(),
                    })
                })
                .collect::<Result<_, sltk::Error>>()?;
            (mc, "mt", ex)
        }
        RoleArg::E2e => {
            let mc = spec.to_config(
                InputMode::Speech,
                tgt_tok.vocab_size(),
                tgt_tok.vocab_size(),
                task.feature_dim,
            );
            let ex = examples
                .iter()
                .map(|e| {
                    Ok(TrainExample {
                        input: TrainInput::Features(e.features.clone()),
                        target: tgt_tok.tokenize(&e.target)?.content(),
                    })
                })
                .collect::<Result<_, sltk::Error>>()?;
            (mc, "e2e", ex)
        }
    };

    let mut model = SeqModel::new(model_cfg.clone(), cfg.seed)?;
    let out = sltk::train::train(&mut model, &train_examples, &cfg)
        .map_err(|e| anyhow::anyhow!("stage train: {e}"))?;
    let avg = average_trailing(&out.checkpoints, cfg.average_last)?;
    avg.save(&out_dir.join("average.sqbr"))?;
    std::fs::write(out_dir.join("loss.csv"), curve_to_csv(&out.curve))?;
    let manifest = RunManifest {
        role: role_name.to_string(),
        model: model_cfg,
        task,
        src_mode,
        tgt_mode,
        seed: cfg.seed,
    };
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!(
        "trained {role_name} for {} epochs; final loss {:.4}; run dir {}",
        out.epoch_losses.len(),
        out.epoch_losses.last().copied().unwrap_or(f64::NAN),
        out_dir.display()
    );
    Ok(())
}

pub fn average(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut ckpts = Vec::with_capacity(inputs.len());
    for p in inputs {
        ckpts.push(Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?);
    }
    let avg = sltk::average_checkpoints(&ckpts)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    avg.save(out)?;
    println!("averaged {} checkpoints into {}", ckpts.len(), out.display());
    Ok(())
}

struct LoadedRun {
    manifest: RunManifest,
    model: SeqModel,
    src_tok: Tokenizer,
    tgt_tok: Tokenizer,
}

fn load_run(run: &Path, checkpoint: Option<&Path>) -> Result<LoadedRun> {
    let text = std::fs::read_to_string(run.join("config.json"))
        .with_context(|| format!("reading {}/config.json", run.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let model = SeqModel::new(manifest.model.clone(), manifest.seed)?;
    let ckpt_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.join("average.sqbr"));
    let ckpt = Checkpoint::load(&ckpt_path)
        .with_context(|| format!("loading {}", ckpt_path.display()))?;
    ckpt.apply_to(model.params())?;
    let src_tok = tokenizer_for(manifest.src_mode, &manifest.task)?;
    let tgt_tok = tokenizer_for(manifest.tgt_mode, &manifest.task)?;
    Ok(LoadedRun {
        manifest,
        model,
        src_tok,
        tgt_tok,
    })
}

/// Output tokenizer of a run: ASR runs emit source-side tokens, MT/E2E runs
/// emit target-side tokens.
fn output_tokenizer(run: &LoadedRun) -> &Tokenizer {
    if run.manifest.role == "asr" {
        &run.src_tok
    } else {
        &run.tgt_tok
    }
}

fn decode_input<'a>(
    run: &'a LoadedRun,
    ex: &'a ParallelExample,
    src_ids: &'a [u32],
) -> EncoderInput<'a> {
    match run.manifest.model.input_mode {
        InputMode::Speech => EncoderInput::Features(&ex.features),
        InputMode::Text => EncoderInput::Tokens(src_ids),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn decode(
    run_dir: &Path,
    data: &Path,
    out_prefix: &Path,
    checkpoint: Option<&Path>,
    beam: usize,
    alpha: f64,
    gamma: f64,
    n_best: usize,
) -> Result<()> {
    let run = load_run(run_dir, checkpoint)?;
    let examples = load_examples(data)?;
    let base = DecodeConfig {
        beam,
        length_penalty_alpha: alpha,
        eos_gamma: gamma,
        n_best: n_best.min(beam),
        ..DecodeConfig::default()
    };
    let mut hyp_out = String::new();
    let mut nbest_out = String::new();
    let out_tok = output_tokenizer(&run);
    for (i, ex) in examples.iter().enumerate() {
        let utt = format!("utt-{i:04}");
        let src_ids = run.src_tok.tokenize(&ex.source)?.ids().to_vec();
        let cfg = match run.manifest.model.input_mode {
            InputMode::Speech => asr_decode_cfg(
                &base,
                ex.features.len(),
                run.manifest.task.frames_per_token,
            ),
            InputMode::Text => mt_decode_cfg(&base, src_ids.len()),
        };
        let scorer = ModelScorer::new(&run.model, decode_input(&run, ex, &src_ids))?;
        let hyps = beam_search(&scorer, &cfg)?;
        let top = &hyps[0];
        hyp_out.push_str(&format!(
            "{utt}\t{}\t{:.6}\t{:.6}\n",
            out_tok.detokenize(top.content()),
            top.logprob,
            top.normalized_score(alpha)
        ));
        for (rank, h) in hyps.iter().enumerate() {
            nbest_out.push_str(&format!(
                "{utt}\t{rank}\t{}\t{:.6}\t{:.6}\n",
                out_tok.detokenize(h.content()),
                h.logprob,
                h.normalized_score(alpha)
            ));
        }
    }
    let hyp_path = out_prefix.with_extension("hyp");
    let nbest_path = out_prefix.with_extension("nbest");
    write_output(&hyp_path, &hyp_out)?;
    write_output(&nbest_path, &nbest_out)?;
    println!(
        "decoded {} utterances -> {} and {}",
        examples.len(),
        hyp_path.display(),
        nbest_path.display()
    );
    Ok(())
}

fn write_output(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cascade(
    asr_run: &Path,
    mt_run: &Path,
    data: &Path,
    mode: CascadeMode,
    out_prefix: &Path,
    beams: [usize; 3],
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    let asr = load_run(asr_run, None)?;
    let mt = load_run(mt_run, None)?;
    if asr.manifest.role != "asr" {
        bail!("--asr-run must point at an asr run, found {}", asr.manifest.role);
    }
    if mt.manifest.role != "mt" {
        bail!("--mt-run must point at an mt run, found {}", mt.manifest.role);
    }
    let [asr_beam, mt_beam, n_best] = beams;
    let examples = load_examples(data)?;
    let mut hyp_out = String::new();
    let mut asr_out = String::new();
    for (i, ex) in examples.iter().enumerate() {
        let utt = format!("utt-{i:04}");
        let asr_scorer = ModelScorer::new(&asr.model, EncoderInput::Features(&ex.features))?;
        let cfg_asr = asr_decode_cfg(
            &DecodeConfig {
                beam: asr_beam,
                n_best: n_best.min(asr_beam),
                length_penalty_alpha: alpha,
                eos_gamma: gamma,
                ..DecodeConfig::default()
            },
            ex.features.len(),
            asr.manifest.task.frames_per_token,
        );
        let cfg_mt = mt_decode_cfg(
            &DecodeConfig {
                beam: mt_beam,
                n_best: n_best.min(mt_beam),
                length_penalty_alpha: alpha,
                eos_gamma: gamma,
                ..DecodeConfig::default()
            },
            ex.features.len() / asr.manifest.task.frames_per_token.max(1),
        );
        let mt_for = |z: &Hypothesis| -> sltk::Result<ModelScorer<'_>> {
            let text = asr.src_tok.detokenize(z.content());
            let ids = mt.src_tok.tokenize(&text)?.ids().to_vec();
            ModelScorer::new(&mt.model, EncoderInput::Tokens(&ids))
        };
        let out = cascade_decode(&asr_scorer, mt_for, mode, &cfg_asr, &cfg_mt)?;
        hyp_out.push_str(&format!(
            "{utt}\t{}\t{:.6}\t{:.6}\n",
            mt.tgt_tok.detokenize(out.translation.content()),
            out.translation.logprob,
            out.combined_score
        ));
        asr_out.push_str(&format!(
            "{utt}\t{}\t{:.6}\n",
            asr.src_tok.detokenize(out.asr_hypothesis.content()),
            out.asr_hypothesis.logprob
        ));
    }
    let hyp_path = out_prefix.with_extension("hyp");
    let asr_path = out_prefix.with_extension("asr");
    write_output(&hyp_path, &hyp_out)?;
    write_output(&asr_path, &asr_out)?;
    println!(
        "cascaded {} utterances -> {} (translations) and {} (transcripts)",
        examples.len(),
        hyp_path.display(),
        asr_path.display()
    );
    Ok(())
}

pub fn evaluate(refs: &Path, hyps: &Path, json: Option<&Path>) -> Result<()> {
    let read_lines = |p: &Path| -> Result<Vec<String>> {
        Ok(std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))?
            .lines()
            .map(str::to_string)
            .collect())
    };
    let report = sltk::metrics::evaluate(&read_lines(refs)?, &read_lines(hyps)?)?;
    let pretty = serde_json::to_string_pretty(&report)?;
    if let Some(p) = json {
        write_output(p, &pretty)?;
    }
    println!("{pretty}");
    println!("{}", report.one_line());
    Ok(())
}

fn default_results_file(results: Option<&Path>) -> PathBuf {
    results
        .map(Path::to_path_buf)
        .unwrap_or_else(|| results_dir().join("results.jsonl"))
}

pub fn experiment(
    config: Option<&Path>,
    kind: Option<&str>,
    id: &str,
    results: Option<&Path>,
) -> Result<()> {
    let results_path = default_results_file(results);
    let configs: Vec<ExperimentConfig> = match (config, kind) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            vec![serde_json::from_str(&text)?]
        }
        (None, Some(name)) => {
            if name == "all" {
                ExperimentKind::all()
                    .iter()
                    .map(|k| ExperimentConfig::desk_default(*k, format!("{id}-{}", k.name())))
                    .collect()
            } else {
                let kind: ExperimentKind = serde_json::from_str(&format!("\"{name}\""))
                    .map_err(|_| anyhow::anyhow!("unknown experiment kind `{name}`"))?;
                vec![ExperimentConfig::desk_default(kind, id)]
            }
        }
        _ => bail!("pass exactly one of --config or --kind"),
    };
    for cfg in &configs {
        let rows = run_experiment(cfg, Some(&results_path))
            .map_err(|e| anyhow::anyhow!("experiment `{}` failed: {e}", cfg.id))?;
        for r in &rows {
            println!("{}", r.to_jsonl());
        }
    }
    println!("results appended to {}", results_path.display());
    Ok(())
}

pub fn report(
    results: Option<&Path>,
    dataset: Option<&str>,
    out: Option<&Path>,
    json: Option<&Path>,
) -> Result<()> {
    let path = default_results_file(results);
    let mut rows = read_rows(&path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(d) = dataset {
        rows.retain(|r| r.dataset_id == d);
    }
    rows.retain(|r| r.status == "ok");
    if rows.is_empty() {
        bail!("no rows to report");
    }
    let table = compare_report(&rows)?;
    if let Some(p) = out {
        write_output(p, &table)?;
    }
    if let Some(p) = json {
        write_output(p, &serde_json::to_string_pretty(&rows)?)?;
    }
    print!("{table}");
    Ok(())
}

/// Shared with tests: decodes one features sequence to text with a run.
#[allow(dead_code)]
pub fn transcribe_features(
    run: &Path,
    features: &FeatureSequence,
    beam: usize,
) -> Result<String> {
    let run = load_run(run, None)?;
    let scorer = ModelScorer::new(&run.model, EncoderInput::Features(features))?;
    let cfg = asr_decode_cfg(
        &DecodeConfig {
            beam,
            ..DecodeConfig::default()
        },
        features.len(),
        run.manifest.task.frames_per_token,
    );
    let hyp = beam_search(&scorer, &cfg)?.remove(0);
    Ok(output_tokenizer(&run).detokenize(hyp.content()))
}
