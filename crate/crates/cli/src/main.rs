//! `sltk` command line: synthetic-data generation, training, decoding,
//! cascades, evaluation, and the experiment grid.

mod commands;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "sltk", version, about = "Desk-scale speech translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Char,
    Subword,
}

impl From<ModeArg> for sltk::data::TokenMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Char => sltk::data::TokenMode::Char,
            ModeArg::Subword => sltk::data::TokenMode::Subword,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum RoleArg {
    Asr,
    Mt,
    E2e,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CascadeModeArg {
    OneBest,
    NBest,
    RankedNBest,
}

impl From<CascadeModeArg> for sltk::decode::CascadeMode {
    fn from(m: CascadeModeArg) -> Self {
        match m {
            CascadeModeArg::OneBest => sltk::decode::CascadeMode::OneBest,
            CascadeModeArg::NBest => sltk::decode::CascadeMode::NBest,
            CascadeModeArg::RankedNBest => sltk::decode::CascadeMode::RankedNBest,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus with pseudo-speech features.
    Gen {
        /// Output directory for train/dev/test JSONL files and task.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        n_train: usize,
        #[arg(long, default_value_t = 50)]
        n_dev: usize,
        #[arg(long, default_value_t = 50)]
        n_test: usize,
        #[arg(long, default_value_t = 12)]
        alphabet: usize,
        #[arg(long, default_value_t = 3)]
        min_len: usize,
        #[arg(long, default_value_t = 7)]
        max_len: usize,
        #[arg(long, default_value_t = 4)]
        frames_per_token: usize,
        #[arg(long, default_value_t = 0.1)]
        noise_sd: f64,
        #[arg(long, default_value_t = 40)]
        feature_dim: usize,
    },
    /// Train one model (ASR, MT, or end-to-end) on a generated dataset.
    Train {
        /// Directory produced by `gen`.
        #[arg(long)]
        data_dir: PathBuf,
        /// Run directory for checkpoints, config, and the loss curve.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long, value_enum, default_value = "char")]
        src_mode: ModeArg,
        #[arg(long, value_enum, default_value = "char")]
        tgt_mode: ModeArg,
        /// JSON file with a ModelSpec; defaults to the desk-scale spec.
        #[arg(long)]
        model_spec: Option<PathBuf>,
        /// JSON file with a TrainConfig; defaults to desk-scale training.
        #[arg(long)]
        train_config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Average checkpoints elementwise.
    Average {
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a dataset with one trained model; writes hypothesis and
    /// n-best files.
    Decode {
        /// Run directory produced by `train`.
        #[arg(long)]
        run: PathBuf,
        /// Dataset JSONL to decode.
        #[arg(long)]
        data: PathBuf,
        /// Output prefix; writes <prefix>.hyp and <prefix>.nbest.
        #[arg(long)]
        out_prefix: PathBuf,
        /// Checkpoint inside the run to use (defaults to average.sqbr).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        beam: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 4)]
        n_best: usize,
    },
    /// Coupled ASR→MT decoding of a dataset.
    Cascade {
        #[arg(long)]
        asr_run: PathBuf,
        #[arg(long)]
        mt_run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "ranked-n-best")]
        mode: CascadeModeArg,
        #[arg(long)]
        out_prefix: PathBuf,
        #[arg(long, default_value_t = 10)]
        asr_beam: usize,
        #[arg(long, default_value_t = 5)]
        mt_beam: usize,
        #[arg(long, default_value_t = 4)]
        n_best: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Score line-aligned hypothesis and reference files.
    Evaluate {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        /// Write the full report JSON here as well.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run one experiment (or every kind) from the grid.
    Experiment {
        /// JSON ExperimentConfig; exclusive with --kind.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Desk-default run of one kind, e.g. `asr` or `cascade_ranked`;
        /// `all` runs the whole grid.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, default_value = "exp")]
        id: String,
        /// Results file; defaults to $SLTK_RESULTS_DIR/results.jsonl.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Render a comparison table from a results file.
    Report {
        /// Results file; defaults to $SLTK_RESULTS_DIR/results.jsonl.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Keep only rows with this dataset id.
        #[arg(long)]
        dataset: Option<String>,
        /// Write the table here too.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the selected rows as a JSON array here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

/// Results directory: $SLTK_RESULTS_DIR or ./results.
pub fn results_dir() -> PathBuf {
    std::env::var_os("SLTK_RESULTS_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen {
            out_dir,
            seed,
            n_train,
            n_dev,
            n_test,
            alphabet,
            min_len,
            max_len,
            frames_per_token,
            noise_sd,
            feature_dim,
        } => commands::gen(
            &out_dir,
            seed,
            [n_train, n_dev, n_test],
            sltk::data::TaskConfig {
                alphabet,
                min_len,
                max_len,
                frames_per_token,
                noise_sd,
                feature_dim,
            },
        ),
        Command::Train {
            data_dir,
            out_dir,
            role,
            src_mode,
            tgt_mode,
            model_spec,
            train_config,
            epochs,
            seed,
        } => commands::train(
            &data_dir,
            &out_dir,
            role,
            src_mode.into(),
            tgt_mode.into(),
            model_spec.as_deref(),
            train_config.as_deref(),
            epochs,
            seed,
        ),
        Command::Average { inputs, out } => commands::average(&inputs, &out),
        Command::Decode {
            run,
            data,
            out_prefix,
            checkpoint,
            beam,
            alpha,
            gamma,
            n_best,
        } => commands::decode(
            &run,
            &data,
            &out_prefix,
            checkpoint.as_deref(),
            beam,
            alpha,
            gamma,
            n_best,
        ),
        Command::Cascade {
            asr_run,
            mt_run,
            data,
            mode,
            out_prefix,
            asr_beam,
            mt_beam,
            n_best,
            alpha,
            gamma,
        } => commands::cascade(
            &asr_run,
            &mt_run,
            &data,
            mode.into(),
            &out_prefix,
            [asr_beam, mt_beam, n_best],
            alpha,
            gamma,
        ),
        Command::Evaluate { refs, hyps, json } => {
            commands::evaluate(&refs, &hyps, json.as_deref())
        }
        Command::Experiment {
            config,
            kind,
            id,
            results,
        } => commands::experiment(config.as_deref(), kind.as_deref(), &id, results.as_deref()),
        Command::Report {
            results,
            dataset,
            out,
            json,
        } => commands::report(
            results.as_deref(),
            dataset.as_deref(),
            out.as_deref(),
            json.as_deref(),
        ),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
