//! Synthetic parallel corpus: random source strings over a small alphabet
//! with a deterministic reverse-and-map transduction as the target, so the
//! optimal translation of every source is known and checkable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::features::{synth_features, FeatureSequence};
use super::tokenize::Tokenizer;

/// Parameters of the synthetic task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskConfig {
    /// Number of distinct source letters, drawn from `a..`.
    pub alphabet: usize,
    /// Source length range in words, inclusive.
    pub min_len: usize,
    pub max_len: usize,
    pub frames_per_token: usize,
    pub noise_sd: f64,
    pub feature_dim: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            alphabet: 12,
            min_len: 3,
            max_len: 7,
            frames_per_token: 4,
            noise_sd: 0.1,
            feature_dim: 40,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphabet < 4 || self.alphabet > 26 {
            return Err(Error::Config(format!(
                "task: alphabet size {} outside 4..=26",
                self.alphabet
            )));
        }
        if self.min_len < 1 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "task: bad length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        if self.frames_per_token < 1 {
            return Err(Error::Config("task: frames_per_token must be >= 1".into()));
        }
        Ok(())
    }

    pub fn letters(&self) -> Vec<char> {
        (0..self.alphabet).map(|i| (b'a' + i as u8) as char).collect()
    }

    /// Alphabet for tokenizers: the letters plus the word separator.
    pub fn tokenizer_alphabet(&self) -> Vec<String> {
        let mut v: Vec<String> = self.letters().iter().map(|c| c.to_string()).collect();
        v.push(" ".to_string());
        v
    }

    /// The fixed token bijection: the i-th letter maps to the
    /// (i + ⌊A/2⌋ mod A)-th letter.
    pub fn map_token(&self, c: char) -> char {
        let a = self.alphabet;
        let i = (c as u8 - b'a') as usize % a;
        (b'a' + ((i + a / 2) % a) as u8) as char
    }

    fn unmap_token(&self, c: char) -> char {
        let a = self.alphabet;
        let i = (c as u8 - b'a') as usize % a;
        (b'a' + ((i + a - a / 2) % a) as u8) as char
    }

    /// The exact transduction the corpus encodes: reverse the word order and
    /// map every word through the bijection.
    pub fn oracle_translate(&self, source: &str) -> String {
        source
            .split_whitespace()
            .rev()
            .map(|w| {
                w.chars()
                    .map(|c| self.map_token(c))
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Inverse of [`oracle_translate`]; recovers the source from a target.
    pub fn oracle_invert(&self, target: &str) -> String {
        target
            .split_whitespace()
            .rev()
            .map(|w| w.chars().map(|c| self.unmap_token(c)).collect::<String>())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// One utterance: pseudo-speech features with its transcript and translation.
#[derive(Debug, Clone)]
pub struct ParallelExample {
    pub features: FeatureSequence,
    pub source: String,
    pub target: String,
}

/// Random (source, target) text pairs; the target is always
/// `oracle_translate(source)`. Same seed, same corpus.
pub fn gen_toy_corpus(seed: u64, n: usize, cfg: &TaskConfig) -> Result<Vec<(String, String)>> {
    cfg.validate()?;
    let letters = cfg.letters();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let words: Vec<String> = (0..len)
            .map(|_| letters[rng.random_range(0..letters.len())].to_string())
            .collect();
        let source = words.join(" ");
        let target = cfg.oracle_translate(&source);
        out.push((source, target));
    }
    Ok(out)
}

/// Full examples: corpus pairs with synthesized features for the source's
/// word tokens — each spoken word contributes `frames_per_token` frames;
/// the separating spaces are word boundaries with no acoustic signature.
/// Feature noise is seeded per-example from `seed`.
pub fn gen_examples(
    seed: u64,
    n: usize,
    cfg: &TaskConfig,
    char_tok: &Tokenizer,
) -> Result<Vec<ParallelExample>> {
    let pairs = gen_toy_corpus(seed, n, cfg)?;
    let space_id = char_tok.vocab().id_of(" ");
    let mut out = Vec::with_capacity(n);
    for (i, (source, target)) in pairs.into_iter().enumerate() {
        let word_ids: Vec<u32> = char_tok
            .tokenize(&source)?
            .content()
            .into_iter()
            .filter(|id| Some(*id) != space_id)
            .collect();
        let features = synth_features(
            &word_ids,
            seed ^ (0x5eed ^ i as u64).wrapping_mul(0x9e3779b97f4a7c15),
            cfg.frames_per_token,
            cfg.noise_sd,
            cfg.feature_dim,
        )?;
        out.push(ParallelExample {
            features,
            source,
            target,
        });
    }
    Ok(out)
}

/// Line-delimited dataset record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub source: String,
    pub target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
}

impl DatasetRecord {
    pub fn from_example(ex: &ParallelExample, with_features: bool) -> DatasetRecord {
        DatasetRecord {
            source: ex.source.clone(),
            target: ex.target.clone(),
            features: with_features.then(|| ex.features.to_rows()),
        }
    }

    pub fn into_example(self) -> Result<ParallelExample> {
        if self.source.is_empty() || self.target.is_empty() {
            return Err(Error::InvalidArgument("dataset: empty text field".into()));
        }
        let rows = self.features.ok_or_else(|| {
            Error::InvalidArgument("dataset: record has no features".into())
        })?;
        Ok(ParallelExample {
            features: FeatureSequence::from_rows(&rows)?,
            source: self.source,
            target: self.target,
        })
    }
}

pub fn write_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
