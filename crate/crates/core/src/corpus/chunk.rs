use serde::{Deserialize, Serialize};

use super::token::{detokenize, word_count, Token};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Generated,
    Ingested,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Real => "real",
            Origin::Generated => "generated",
            Origin::Ingested => "ingested",
        }
    }
}

/// Chunking parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRule {
    pub chunk_size: usize,
    pub min_tail_words: usize,
}

impl Default for ChunkRule {
    fn default() -> Self {
        ChunkRule {
            chunk_size: 100,
            min_tail_words: 25,
        }
    }
}

/// One classification example.
///
/// Forgeries produced in embedding mode have no surface tokens; they carry
/// a `len x emb_dim` matrix in `dense` instead.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    pub id: String,
    pub tokens: Vec<Token>,
    pub dense: Option<Tensor>,
    pub author: String,
    pub origin: Origin,
    pub split: Split,
}

impl Chunk {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<Token>,
        author: impl Into<String>,
        origin: Origin,
        split: Split,
    ) -> Self {
        Chunk {
            id: id.into(),
            tokens,
            dense: None,
            author: author.into(),
            origin,
            split,
        }
    }

    /// Number of positions: tokens, or rows of the dense matrix.
    pub fn len(&self) -> usize {
        match &self.dense {
            Some(d) => d.rows(),
            None => self.tokens.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn word_count(&self) -> usize {
        word_count(&self.tokens)
    }

    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }

    /// Positive for `author` only when it is a real text by that author.
    /// Forgeries are negatives whatever author they imitate.
    pub fn is_positive_for(&self, author: &str) -> bool {
        self.origin == Origin::Real && self.author == author
    }
}

/// Cuts `tokens` into consecutive pieces of `chunk_size`. The final piece
/// is kept only if it holds at least `min_tail_words` words.
pub fn chunk_document(tokens: &[Token], chunk_size: usize, min_tail_words: usize) -> Vec<Vec<Token>> {
    assert!(chunk_size > 0, "chunk_size must be positive");
    let mut out: Vec<Vec<Token>> = tokens.chunks(chunk_size).map(<[Token]>::to_vec).collect();
    if let Some(last) = out.last() {
        if word_count(last) < min_tail_words {
            out.pop();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `n` tokens where the last 30 hold exactly `tail_words` words.
    fn sequence(n: usize, tail_words: usize) -> Vec<Token> {
        let mut t: Vec<Token> = (0..n - 30).map(|i| Token::new(format!("w{i}"))).collect();
        for i in 0..30 {
            t.push(if i < tail_words { Token::new("x") } else { Token::new(",") });
        }
        t
    }

    #[test]
    fn tail_with_enough_words_is_kept() {
        let toks = sequence(230, 26);
        assert_eq!(word_count(&toks[200..]), 26);
        let c = chunk_document(&toks, 100, 25);
        assert_eq!(c.iter().map(Vec::len).collect::<Vec<_>>(), [100, 100, 30]);
    }

    #[test]
    fn short_tail_is_dropped() {
        let toks = sequence(230, 20);
        assert_eq!(word_count(&toks[200..]), 20);
        assert_eq!(chunk_document(&toks, 100, 25).len(), 2);
    }

    #[test]
    fn exact_fit() {
        let toks: Vec<Token> = (0..100).map(|i| Token::new(format!("w{i}"))).collect();
        let c = chunk_document(&toks, 100, 25);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 100);
    }

    #[test]
    fn rule_applies_to_a_single_short_document() {
        let toks: Vec<Token> = (0..10).map(|i| Token::new(format!("w{i}"))).collect();
        assert!(chunk_document(&toks, 100, 25).is_empty());
        assert_eq!(chunk_document(&toks, 100, 0).len(), 1);
    }

    #[test]
    fn forgeries_are_negative() {
        let c = Chunk::new("x", vec![Token::new("a")], "A", Origin::Generated, Split::Train);
        assert!(!c.is_positive_for("A"));
        let r = Chunk { origin: Origin::Real, ..c };
        assert!(r.is_positive_for("A"));
        assert!(!r.is_positive_for("B"));
    }

    proptest! {
        #[test]
        fn chunking_conserves_tokens(
            words in proptest::collection::vec(any::<bool>(), 0..400),
            size in 1usize..120,
            min_tail in 0usize..40,
        ) {
            let toks: Vec<Token> = words
                .iter()
                .enumerate()
                .map(|(i, &w)| if w { Token::new(format!("t{i}")) } else { Token::new(".") })
                .collect();
            let chunks = chunk_document(&toks, size, min_tail);
            let kept: usize = chunks.iter().map(Vec::len).sum();
            let pieces = toks.len().div_ceil(size);
            let tail = toks.len() - pieces.saturating_sub(1) * size;
            let dropped = toks.len() - kept;
            prop_assert!(dropped == 0 || dropped == tail);
            let n = chunks.len();
            for (i, c) in chunks.iter().enumerate() {
                prop_assert!(!c.is_empty() && c.len() <= size);
                if i + 1 < n { prop_assert_eq!(c.len(), size); }
            }
            if let (Some(last), 0) = (chunks.last(), dropped) {
                prop_assert!(word_count(last) >= min_tail);
            }
            let flat: Vec<Token> = chunks.concat();
            prop_assert_eq!(&flat[..], &toks[..kept]);
        }
    }
}
