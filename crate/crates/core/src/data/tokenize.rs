//! Character and subword tokenization.
//!
//! The subword scheme applies a fixed, committed merge table: starting from
//! characters, each merge rule `(left, right)` in table order joins every
//! adjacent occurrence of the pair. Concatenating token strings always
//! restores the input text, so detokenize ∘ tokenize is the identity for
//! texts over the vocabulary's alphabet.

use crate::error::{Error, Result};

use super::vocab::{TokenSequence, Vocabulary, EOS, UNK};

/// Default merge table over the toy alphabet `a..l` plus space.
/// `<sp>` spells a space inside an operand.
pub const DEFAULT_MERGES: &str = include_str!("merges.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    Char,
    Subword,
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    mode: TokenMode,
    vocab: Vocabulary,
    merges: Vec<(String, String)>,
}

impl Tokenizer {
    /// Character tokenizer over an explicit alphabet (space included by the
    /// caller when wanted).
    pub fn char_over<I, S>(alphabet: I) -> Result<Tokenizer>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Ok(Tokenizer {
            mode: TokenMode::Char,
            vocab: Vocabulary::new(alphabet)?,
            merges: Vec::new(),
        })
    }

    /// Subword tokenizer from a merge table; the vocabulary is the alphabet
    /// plus every merge output, in table order.
    pub fn subword_over<I, S>(alphabet: I, merge_table: &str) -> Result<Tokenizer>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = alphabet.into_iter().map(Into::into).collect();
        let merges = parse_merges(merge_table)?;
        for (left, right) in &merges {
            let joined = format!("{left}{right}");
            if !tokens.contains(&joined) {
                tokens.push(joined);
            }
        }
        Ok(Tokenizer {
            mode: TokenMode::Subword,
            vocab: Vocabulary::new(tokens)?,
            merges,
        })
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Splits text to tokens per the mode and appends EOS. Characters absent
    /// from the vocabulary map to UNK.
    pub fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        if text.is_empty() {
            return Err(Error::InvalidArgument("tokenize: empty text".into()));
        }
        let mut pieces: Vec<String> = text.chars().map(|c| c.to_string()).collect();
        if self.mode == TokenMode::Subword {
            for (left, right) in &self.merges {
                let mut i = 0;
                while i + 1 < pieces.len() {
                    if &pieces[i] == left && &pieces[i + 1] == right {
                        pieces[i] = format!("{left}{right}");
                        pieces.remove(i + 1);
                        // re-check from the same slot so chains like
                        // (ab)+(c) after (a)+(b) can apply in one pass
                        continue;
                    }
                    i += 1;
                }
            }
        }
        let mut ids: Vec<u32> = pieces
            .iter()
            .map(|p| self.vocab.id_of(p).unwrap_or(UNK))
            .collect();
        ids.push(EOS);
        TokenSequence::new(ids, &self.vocab)
    }

    /// Concatenation of token strings, skipping sentinels.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if Vocabulary::is_reserved(id) {
                continue;
            }
            if let Some(t) = self.vocab.token(id) {
                out.push_str(t);
            }
        }
        out
    }
}

fn parse_merges(table: &str) -> Result<Vec<(String, String)>> {
    let mut merges = Vec::new();
    for (lineno, line) in table.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let (left, right) = match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(r), None) => (l, r),
            _ => {
                return Err(Error::Config(format!(
                    "merge table line {}: expected two operands",
                    lineno + 1
                )))
            }
        };
        merges.push((left.replace("<sp>", " "), right.replace("<sp>", " ")));
    }
    Ok(merges)
}

/// Lowercases, strips punctuation, and collapses whitespace runs. A no-op on
/// the synthetic alphabet; applied when loading external text.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_alphanumeric() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(c.to_lowercase());
        }
        // punctuation dropped
    }
    out
}
