use std::collections::HashMap;

use super::chunk::Chunk;
use super::token::Token;
use crate::{Error, Result};

pub const UNK: &str = "<unk>";

/// Token to id mapping built from training chunks. The unknown token always
/// takes the last id.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    token_of: Vec<String>,
    id_of: HashMap<String, usize>,
    freq: Vec<usize>,
    is_word: Vec<bool>,
    unk_id: usize,
}

impl Vocabulary {
    /// Builds from explicit `(surface, frequency)` pairs, already ordered.
    fn from_ordered(entries: Vec<(String, usize)>) -> Self {
        let mut token_of = Vec::with_capacity(entries.len() + 1);
        let mut freq = Vec::with_capacity(entries.len() + 1);
        for (s, f) in entries {
            token_of.push(s);
            freq.push(f);
        }
        let unk_id = token_of.len();
        token_of.push(UNK.to_string());
        freq.push(0);
        let id_of = token_of.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let is_word = token_of
            .iter()
            .enumerate()
            .map(|(i, s)| i != unk_id && s.chars().any(char::is_alphanumeric))
            .collect();
        Vocabulary {
            token_of,
            id_of,
            freq,
            is_word,
            unk_id,
        }
    }

    /// A vocabulary over a fixed list of surfaces in the given order.
    pub fn from_surfaces<S: AsRef<str>>(surfaces: &[S]) -> Self {
        Vocabulary::from_ordered(surfaces.iter().map(|s| (s.as_ref().to_string(), 0)).collect())
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_of.is_empty()
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn encode(&self, surface: &str) -> usize {
        self.id_of.get(surface).copied().unwrap_or(self.unk_id)
    }

    /// Surface of `id`. Panics when out of range.
    pub fn decode(&self, id: usize) -> &str {
        &self.token_of[id]
    }

    pub fn freq(&self, id: usize) -> usize {
        self.freq[id]
    }

    pub fn is_word(&self, id: usize) -> bool {
        self.is_word[id]
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.id_of.contains_key(surface)
    }

    pub fn encode_tokens(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.encode(t.surface())).collect()
    }

    pub fn decode_ids(&self, ids: &[usize]) -> Vec<Token> {
        ids.iter().map(|&i| Token::new(self.decode(i))).collect()
    }

    pub fn surfaces(&self) -> &[String] {
        &self.token_of
    }

    /// Hash of the ordered surfaces; checkpoints store it to detect a
    /// vocabulary change.
    pub fn fingerprint(&self) -> u64 {
        crate::rng::fnv1a(self.token_of.join("\n").as_bytes())
    }
}

/// Counts surfaces across `chunks` and keeps those seen at least `min_freq`
/// times, most frequent first, ties in lexicographic order.
pub fn build_vocabulary(chunks: &[Chunk], min_freq: usize) -> Result<Vocabulary> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut any = false;
    for c in chunks {
        for t in &c.tokens {
            any = true;
            *counts.entry(t.surface()).or_default() += 1;
        }
    }
    if !any {
        return Err(Error::EmptyCorpus);
    }
    let mut entries: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|&(s, f)| f >= min_freq.max(1) && s != UNK)
        .map(|(s, f)| (s.to_string(), f))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_ordered(entries))
}
