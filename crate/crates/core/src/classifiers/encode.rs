use crate::corpus::{Chunk, Vocabulary};
use crate::error::{Error, Result};
use crate::generators::EmbeddingTable;
use crate::stylometry::BaseFeatures;

use super::cnn::{Example, InputKind, SeqInput};

/// Turns chunks into CNN examples. With a table the network reads dense
/// rows (embedding the text of real chunks); without one it reads ids.
#[derive(Clone, Debug)]
pub struct CnnEncoder {
    pub vocab: Vocabulary,
    pub table: Option<EmbeddingTable>,
    pub base: Option<BaseFeatures>,
}

impl CnnEncoder {
    pub fn new(vocab: Vocabulary, table: Option<EmbeddingTable>, base: Option<BaseFeatures>) -> Result<Self> {
        if let Some(t) = &table {
            if t.vocab_size() != vocab.len() {
                return Err(Error::Shape(format!(
                    "embedding table has {} rows for a vocabulary of {}",
                    t.vocab_size(),
                    vocab.len()
                )));
            }
        }
        Ok(CnnEncoder { vocab, table, base })
    }

    pub fn input_kind(&self) -> InputKind {
        match &self.table {
            Some(t) => InputKind::Dense { dim: t.dim() },
            None => InputKind::OneHot {
                vocab_size: self.vocab.len(),
            },
        }
    }

    pub fn bf_dim(&self) -> Option<usize> {
        self.base.as_ref().map(BaseFeatures::dim)
    }

    pub fn encode(&self, chunk: &Chunk, label: bool) -> Result<Example> {
        let seq = match (&self.table, &chunk.dense) {
            (Some(t), Some(d)) => {
                if d.cols() != t.dim() {
                    return Err(Error::Shape(format!(
                        "chunk {} has rows of width {}, expected {}",
                        chunk.id,
                        d.cols(),
                        t.dim()
                    )));
                }
                SeqInput::Dense(d.clone())
            }
            (Some(t), None) => SeqInput::Dense(t.lookup(&self.vocab.encode_tokens(&chunk.tokens))),
            (None, None) => SeqInput::Ids(self.vocab.encode_tokens(&chunk.tokens)),
            (None, Some(_)) => {
                return Err(Error::InvalidArgument(format!(
                    "chunk {} is dense but the classifier reads token ids",
                    chunk.id
                )))
            }
        };
        let bf = match &self.base {
            Some(_) if chunk.dense.is_some() => {
                return Err(Error::InvalidArgument(format!(
                    "chunk {} has no text to extract base features from",
                    chunk.id
                )))
            }
            Some(b) => Some(b.extract(chunk)?.to_vec()),
            None => None,
        };
        Ok(Example { seq, bf, label })
    }

    /// Encodes chunks labelled by whether they are real texts of `author`.
    pub fn encode_for(&self, chunks: &[&Chunk], author: &str) -> Result<Vec<Example>> {
        chunks
            .iter()
            .map(|c| self.encode(c, c.is_positive_for(author)))
            .collect()
    }
}
