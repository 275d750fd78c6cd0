use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("token {index} should be {expected:?}, found {found:?}")]
    MissingSpecial {
        index: usize,
        expected: &'static str,
        found: String,
    },
    #[error("token {0:?} appears twice")]
    Duplicate(String),
}

/// Token/index bijection with the specials at indices 0 to 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocab {
    /// Keeps tokens seen at least `min_freq` times, ordered by descending
    /// frequency and then lexicographically.
    pub fn build<'a, I, S>(corpus: I, min_freq: usize) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut empty = true;
        for sentence in corpus {
            for tok in sentence {
                empty = false;
                *counts.entry(tok).or_default() += 1;
            }
        }
        if empty {
            return Err(VocabError::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_freq.max(1) && !SPECIALS.contains(&t))
            .collect();
        // BTreeMap iteration is already lexicographic; the sort is stable.
        kept.sort_by(|a, b| b.1.cmp(&a.1));
        Self::from_tokens(
            SPECIALS
                .iter()
                .map(|s| s.to_string())
                .chain(kept.into_iter().map(|(t, _)| t.to_string()))
                .collect(),
        )
    }

    /// Rebuilds a vocabulary from its token list (for example when loading
    /// from disk).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        for (index, &expected) in SPECIALS.iter().enumerate() {
            match tokens.get(index) {
                Some(t) if t == expected => {}
                other => {
                    return Err(VocabError::MissingSpecial {
                        index,
                        expected,
                        found: other.cloned().unwrap_or_default(),
                    })
                }
            }
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Index of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or(SPECIALS[UNK as usize], String::as_str)
    }

    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<u32> {
        tokens.into_iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i)).collect()
    }
}
