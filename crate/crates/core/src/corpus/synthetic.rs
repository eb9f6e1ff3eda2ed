//! Synthetic authors: order-2 Markov chains over a shared vocabulary.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::seq::index::sample;
use rand::Rng as _;

use super::chunk::ChunkRule;
use super::dataset::{filter_and_split_with, Dataset, Document, SplitRatios, MIN_TRAIN_CHUNKS};
use super::token::Token;
use crate::rng::{derive_seed, derive_seed_u64, rng_from, stream, Rng};
use crate::{Error, Result};

pub const SYNTHETIC_VOCAB_SIZE: usize = 200;
const PUNCTUATION: [&str; 5] = [",", ".", ";", "!", "?"];
const FAVOURITES: usize = 30;
const FROM_FAVOURITES: usize = 5;
const FROM_ANYWHERE: usize = 3;

/// The fixed 200-token vocabulary shared by every synthetic author:
/// 195 pronounceable pseudo-words and 5 punctuation marks. It does not
/// depend on any seed.
pub fn synthetic_vocabulary() -> Vec<String> {
    const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    const CODAS: [&str; 4] = ["", "", "n", "r"];
    let mut rng = rng_from(0x5eed_0f_a07);
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(SYNTHETIC_VOCAB_SIZE);
    while words.len() < SYNTHETIC_VOCAB_SIZE - PUNCTUATION.len() {
        let syllables = rng.random_range(1..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
            w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
        }
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words.extend(PUNCTUATION.iter().map(|p| p.to_string()));
    words
}

/// One synthetic author.
///
/// For every two-token context the author has a fixed set of eight
/// candidate continuations with fixed weights, derived from the author's
/// seed and the context. Five of the eight come from the author's thirty
/// favourite words, which is what makes authors separable.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovAuthor {
    pub name: String,
    seed: u64,
    favourites: Vec<usize>,
}

impl MarkovAuthor {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        let mut rng = rng_from(derive_seed_u64(seed, &[0]));
        let n_words = SYNTHETIC_VOCAB_SIZE - PUNCTUATION.len();
        let favourites = sample(&mut rng, n_words, FAVOURITES).into_vec();
        MarkovAuthor {
            name: name.into(),
            seed,
            favourites,
        }
    }

    pub fn favourites(&self) -> &[usize] {
        &self.favourites
    }

    /// Candidate continuations and their weights for context `(a, b)`.
    pub fn transitions(&self, a: usize, b: usize) -> Vec<(usize, f64)> {
        let mut rng = rng_from(derive_seed_u64(self.seed, &[1, a as u64, b as u64]));
        let mut out = Vec::with_capacity(FROM_FAVOURITES + FROM_ANYWHERE);
        for _ in 0..FROM_FAVOURITES {
            out.push(self.favourites[rng.random_range(0..self.favourites.len())]);
        }
        for _ in 0..FROM_ANYWHERE {
            out.push(rng.random_range(0..SYNTHETIC_VOCAB_SIZE));
        }
        out.into_iter()
            .map(|t| (t, 0.05 + rng.random::<f64>()))
            .collect()
    }

    pub fn next(&self, a: usize, b: usize, rng: &mut Rng) -> usize {
        let cands = self.transitions(a, b);
        let total: f64 = cands.iter().map(|c| c.1).sum();
        let mut u = rng.random::<f64>() * total;
        for &(t, w) in &cands {
            if u < w {
                return t;
            }
            u -= w;
        }
        cands[cands.len() - 1].0
    }

    /// `len` token ids; the first two are favourites drawn uniformly.
    pub fn sample_ids(&self, len: usize, rng: &mut Rng) -> Vec<usize> {
        let mut ids = Vec::with_capacity(len);
        while ids.len() < len.min(2) {
            ids.push(self.favourites[rng.random_range(0..self.favourites.len())]);
        }
        while ids.len() < len {
            let n = ids.len();
            ids.push(self.next(ids[n - 2], ids[n - 1], rng));
        }
        ids
    }

    pub fn sample_tokens(&self, len: usize, rng: &mut Rng) -> Vec<Token> {
        static VOCAB: OnceLock<Vec<String>> = OnceLock::new();
        let vocab = VOCAB.get_or_init(synthetic_vocabulary);
        self.sample_ids(len, rng)
            .into_iter()
            .map(|i| Token::new(vocab[i].as_str()))
            .collect()
    }
}

pub fn synthetic_author_name(i: usize) -> String {
    format!("author{i:02}")
}

/// The authors `make_synthetic_corpus(n_authors, _, seed)` draws from.
pub fn synthetic_authors(n_authors: usize, seed: u64) -> Vec<MarkovAuthor> {
    (0..n_authors)
        .map(|i| {
            let name = synthetic_author_name(i);
            let s = derive_seed(seed, &["synthetic-author", &name]);
            MarkovAuthor::new(name, s)
        })
        .collect()
}

/// `chunks_per_author` chunks of 100 tokens for each of `n_authors`
/// authors, split 70/10/20 per author.
pub fn make_synthetic_corpus(n_authors: usize, chunks_per_author: usize, seed: u64) -> Result<Dataset> {
    if n_authors < 2 {
        return Err(Error::InvalidArgument(format!(
            "a synthetic corpus needs at least 2 authors, got {n_authors}"
        )));
    }
    let rule = ChunkRule::default();
    let mut docs = Vec::with_capacity(n_authors * chunks_per_author);
    for author in synthetic_authors(n_authors, seed) {
        for i in 0..chunks_per_author {
            let idx = i.to_string();
            let mut rng = stream(seed, &["synthetic-chunk", &author.name, &idx]);
            let tokens = author.sample_tokens(rule.chunk_size, &mut rng);
            let text = super::token::detokenize(&tokens);
            docs.push(Document::new(format!("{}-{i:04}", author.name), text, &author.name));
        }
    }
    filter_and_split_with(&docs, SplitRatios::default(), seed, rule, MIN_TRAIN_CHUNKS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    #[test]
    fn vocabulary_is_fixed_and_distinct() {
        let v = synthetic_vocabulary();
        assert_eq!(v.len(), 200);
        assert_eq!(v.iter().collect::<BTreeSet<_>>().len(), 200);
        assert_eq!(v, synthetic_vocabulary());
        assert_eq!(v.iter().filter(|s| Token::new(s.as_str()).is_word()).count(), 195);
    }

    #[test]
    fn five_by_hundred() {
        let ds = make_synthetic_corpus(5, 100, 7).unwrap();
        assert_eq!(ds.chunks.len(), 500);
        assert_eq!(ds.authors.len(), 5);
        assert!(ds.chunks.iter().all(|c| c.tokens.len() == 100 && c.word_count() >= 25));
        for a in &ds.authors {
            assert_eq!(ds.of_author(a, Split::Train).count(), 70);
        }
        assert_eq!(ds, make_synthetic_corpus(5, 100, 7).unwrap());
    }

    #[test]
    fn seeds_change_the_text() {
        let a = make_synthetic_corpus(2, 20, 1).unwrap();
        let b = make_synthetic_corpus(2, 20, 2).unwrap();
        assert_ne!(a.chunks[0].tokens, b.chunks[0].tokens);
    }

    #[test]
    fn authors_prefer_their_favourites() {
        let authors = synthetic_authors(2, 3);
        assert_ne!(authors[0].favourites(), authors[1].favourites());
        let mut rng = rng_from(0);
        let ids = authors[0].sample_ids(2000, &mut rng);
        let fav: BTreeSet<usize> = authors[0].favourites().iter().copied().collect();
        let share = ids.iter().filter(|i| fav.contains(i)).count() as f64 / ids.len() as f64;
        assert!(share > 0.6, "favourite share {share}");
    }

    #[test]
    fn needs_two_authors() {
        assert!(make_synthetic_corpus(1, 100, 0).is_err());
    }
}
