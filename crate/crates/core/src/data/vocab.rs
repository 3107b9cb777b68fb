//! Vocabularies and validated token sequences.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const SOS: u32 = 2;
pub const EOS: u32 = 3;
pub const NUM_RESERVED: u32 = 4;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<sos>", "<eos>"];

/// Ordered token inventory with dense ids; ids 0..3 are pad/unk/sos/eos.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new<I, S>(content: I) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for t in content {
            let t = t.into();
            if index.contains_key(&t) {
                return Err(Error::InvalidArgument(format!(
                    "vocabulary: duplicate token {t:?}"
                )));
            }
            index.insert(t.clone(), tokens.len() as u32);
            tokens.push(t);
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn is_reserved(id: u32) -> bool {
        id < NUM_RESERVED
    }
}

/// Token ids with the sequence invariants enforced: every id is in range
/// and EOS appears at most once, only in final position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>, vocab: &Vocabulary) -> Result<TokenSequence> {
        for &id in &ids {
            if id as usize >= vocab.len() {
                return Err(Error::UnknownToken {
                    id,
                    vocab: vocab.len(),
                });
            }
        }
        if ids[..ids.len().saturating_sub(1)].contains(&EOS) {
            return Err(Error::InvalidArgument(
                "token sequence: interior EOS".into(),
            ));
        }
        Ok(TokenSequence { ids })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids with reserved sentinels stripped.
    pub fn content(&self) -> Vec<u32> {
        self.ids
            .iter()
            .copied()
            .filter(|&id| !Vocabulary::is_reserved(id))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::new(["a", "b"]).unwrap();
        assert_eq!(v.id_of("<pad>"), Some(PAD));
        assert_eq!(v.id_of("<unk>"), Some(UNK));
        assert_eq!(v.id_of("<sos>"), Some(SOS));
        assert_eq!(v.id_of("<eos>"), Some(EOS));
        assert_eq!(v.id_of("a"), Some(4));
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn duplicate_tokens_rejected() {
        assert!(Vocabulary::new(["a", "a"]).is_err());
        assert!(Vocabulary::new(["<eos>"]).is_err());
    }

    #[test]
    fn interior_eos_rejected() {
        let v = Vocabulary::new(["a"]).unwrap();
        assert!(TokenSequence::new(vec![4, EOS, 4], &v).is_err());
        assert!(TokenSequence::new(vec![4, 4, EOS], &v).is_ok());
    }

    #[test]
    fn out_of_range_id_rejected() {
        let v = Vocabulary::new(["a"]).unwrap();
        assert!(TokenSequence::new(vec![9], &v).is_err());
    }
}
