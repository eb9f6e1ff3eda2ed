use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::corpus::Chunk;

/// Sparse vector with entries sorted by index.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        debug_assert!(entries.iter().all(|e| e.0 < dim && e.1.is_finite()));
        SparseVector { dim, entries }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries
            .binary_search_by_key(&i, |e| e.0)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }

    /// Keeps only the indices in `selected` (sorted), renumbered densely.
    pub fn project(&self, selected: &[usize]) -> SparseVector {
        let pos: HashMap<usize, usize> = selected.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let entries = self
            .entries
            .iter()
            .filter_map(|&(i, x)| pos.get(&i).map(|&k| (k, x)))
            .collect();
        SparseVector::new(selected.len(), entries)
    }
}

/// Character n-gram counts of one text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NgramProfile {
    pub counts: BTreeMap<String, usize>,
    /// Total number of n-grams for each n, indexed by n.
    pub totals: Vec<usize>,
}

impl NgramProfile {
    /// Count of `gram` divided by the number of n-grams of the same length.
    pub fn frequency(&self, gram: &str) -> f64 {
        let n = gram.chars().count();
        match (self.counts.get(gram), self.totals.get(n)) {
            (Some(&c), Some(&t)) if t > 0 => c as f64 / t as f64,
            _ => 0.0,
        }
    }
}

/// All character n-grams of `text` for `n` in `lo..=hi`.
pub fn char_ngrams(text: &str, lo: usize, hi: usize) -> NgramProfile {
    let chars: Vec<char> = text.chars().collect();
    let mut counts = BTreeMap::new();
    let mut totals = vec![0; hi + 1];
    for n in lo.max(1)..=hi {
        for w in chars.windows(n) {
            *counts.entry(w.iter().collect::<String>()).or_default() += 1;
            totals[n] += 1;
        }
    }
    NgramProfile { counts, totals }
}

/// Index of the n-grams seen in training text.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramVocabulary {
    pub lo: usize,
    pub hi: usize,
    grams: Vec<String>,
    index: HashMap<String, usize>,
}

impl NgramVocabulary {
    /// Every n-gram of the training chunks, ordered by length then text.
    pub fn fit(chunks: &[&Chunk], lo: usize, hi: usize) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        for c in chunks {
            seen.extend(char_ngrams(&c.text(), lo, hi).counts.into_keys());
        }
        let mut grams: Vec<String> = seen.into_iter().collect();
        grams.sort_by(|a, b| a.chars().count().cmp(&b.chars().count()).then(a.cmp(b)));
        let index = grams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        NgramVocabulary { lo, hi, grams, index }
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn gram(&self, i: usize) -> &str {
        &self.grams[i]
    }

    /// Relative frequencies of the known n-grams. The denominator is the
    /// chunk's total n-gram count for that n, unknown n-grams included.
    pub fn transform(&self, chunk: &Chunk) -> SparseVector {
        let p = char_ngrams(&chunk.text(), self.lo, self.hi);
        let entries = p
            .counts
            .iter()
            .filter_map(|(g, _)| self.index.get(g).map(|&i| (i, p.frequency(g))))
            .collect();
        SparseVector::new(self.len(), entries)
    }

    pub fn transform_all(&self, chunks: &[&Chunk]) -> Vec<SparseVector> {
        chunks.par_iter().map(|c| self.transform(c)).collect()
    }
}
