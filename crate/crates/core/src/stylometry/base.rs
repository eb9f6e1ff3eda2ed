use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use super::pos::{PosTag, PosTagger};
use crate::corpus::{Chunk, Token};
use crate::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Function-word list, matched case-insensitively.
#[derive(Clone, Debug)]
pub struct Stopwords {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Stopwords {
    pub fn new<S: AsRef<str>>(words: &[S]) -> Self {
        let mut list: Vec<String> = Vec::new();
        let mut index = HashMap::new();
        for w in words {
            let w = w.as_ref().trim().to_lowercase();
            if !w.is_empty() && !index.contains_key(&w) {
                index.insert(w.clone(), list.len());
                list.push(w);
            }
        }
        Stopwords { words: list, index }
    }

    /// The bundled 179-word English list.
    pub fn bundled() -> Self {
        Stopwords::new(&BUNDLED_STOPWORDS.lines().collect::<Vec<_>>())
    }

    /// One word per line.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Stopwords::new(&text.lines().collect::<Vec<_>>()))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn position(&self, surface: &str) -> Option<usize> {
        self.index.get(&surface.to_lowercase()).copied()
    }
}

/// Result of [`fit_word_length_range`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WordLengthRange {
    pub n_max: usize,
    /// True when no word reached the frequency threshold.
    pub fallback: bool,
}

pub const WORD_LENGTH_MIN_FREQ: usize = 5;

/// Length of the longest word that occurs at least five times in the
/// training chunks. Words are counted by raw surface. Falls back to the
/// longest word overall, with a warning, when no word is frequent enough.
pub fn fit_word_length_range<'a>(chunks: impl IntoIterator<Item = &'a Chunk>) -> Result<WordLengthRange> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in chunks.into_iter().flat_map(|c| &c.tokens).filter(|t| t.is_word()) {
        *counts.entry(t.surface()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let len = |s: &str| s.chars().count();
    let frequent = counts
        .iter()
        .filter(|&(_, &n)| n >= WORD_LENGTH_MIN_FREQ)
        .map(|(s, _)| len(s))
        .max();
    Ok(match frequent {
        Some(n_max) => WordLengthRange { n_max, fallback: false },
        None => {
            let n_max = counts.keys().map(|s| len(s)).max().unwrap_or(1);
            log::warn!(
                "no word occurs {WORD_LENGTH_MIN_FREQ} times; using the longest word length {n_max}"
            );
            WordLengthRange { n_max, fallback: true }
        }
    })
}

/// Function-word, word-length and POS relative frequencies of one chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseFeatureVector {
    pub function_words: Vec<f64>,
    /// Entry `i` is the share of words with `i + 1` characters.
    pub word_lengths: Vec<f64>,
    pub pos: Vec<f64>,
}

impl BaseFeatureVector {
    pub fn dim(&self) -> usize {
        self.function_words.len() + self.word_lengths.len() + self.pos.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.function_words);
        v.extend_from_slice(&self.word_lengths);
        v.extend_from_slice(&self.pos);
        v
    }
}

/// Fitted extractor for [`BaseFeatureVector`]s.
#[derive(Clone, Debug)]
pub struct BaseFeatures {
    pub stopwords: Stopwords,
    pub tagger: PosTagger,
    pub n_max: usize,
}

impl BaseFeatures {
    pub fn new(stopwords: Stopwords, tagger: PosTagger, n_max: usize) -> Self {
        BaseFeatures {
            stopwords,
            tagger,
            n_max,
        }
    }

    /// Bundled resources with `n_max` fitted on `train`.
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a Chunk>) -> Result<Self> {
        let range = fit_word_length_range(train)?;
        Ok(BaseFeatures::new(Stopwords::bundled(), PosTagger::bundled(), range.n_max))
    }

    pub fn dim(&self) -> usize {
        self.stopwords.len() + self.n_max + PosTag::ALL.len()
    }

    /// Function words and POS tags are divided by the token count, word
    /// lengths by the word count. Words longer than `n_max` are not counted.
    pub fn extract_tokens(&self, tokens: &[Token]) -> Result<BaseFeatureVector> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("cannot extract features from an empty chunk".into()));
        }
        let n_tokens = tokens.len() as f64;
        let mut function_words = vec![0.0; self.stopwords.len()];
        let mut word_lengths = vec![0.0; self.n_max];
        let mut pos = vec![0.0; PosTag::ALL.len()];
        let mut n_words = 0usize;
        for t in tokens {
            if let Some(i) = self.stopwords.position(t.surface()) {
                function_words[i] += 1.0;
            }
            if t.is_word() {
                n_words += 1;
                let l = t.char_len();
                if (1..=self.n_max).contains(&l) {
                    word_lengths[l - 1] += 1.0;
                }
            }
            pos[self.tagger.tag_one(t).index()] += 1.0;
        }
        function_words.iter_mut().chain(pos.iter_mut()).for_each(|v| *v /= n_tokens);
        if n_words > 0 {
            word_lengths.iter_mut().for_each(|v| *v /= n_words as f64);
        }
        Ok(BaseFeatureVector {
            function_words,
            word_lengths,
            pos,
        })
    }

    pub fn extract(&self, chunk: &Chunk) -> Result<BaseFeatureVector> {
        self.extract_tokens(&chunk.tokens)
    }

    /// Extracts every chunk in parallel; results keep the input order.
    pub fn extract_all(&self, chunks: &[&Chunk]) -> Result<Vec<BaseFeatureVector>> {
        chunks.par_iter().map(|c| self.extract(c)).collect()
    }
}
