use rand::Rng as _;
use rayon::prelude::*;

use super::embedding::EmbeddingTable;
use super::model::GeneratorModel;
use super::sample::{encode_prompt, generate, Generated, SamplingConfig};
use super::train::PROMPT_LEN;
use crate::corpus::{Chunk, Dataset, Origin, Split, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{derive_seed_u64, stream};

pub const AUGMENT_FACTOR: usize = 10;
pub const AUGMENT_MAX: usize = 1000;

/// Number of forgeries for an author with `n_train` training chunks.
pub fn augmentation_size(n_train: usize) -> usize {
    (AUGMENT_FACTOR * n_train).min(AUGMENT_MAX)
}

/// Generates forgeries of `author`: each one starts from the first tokens
/// of a training chunk drawn with replacement and matches its length.
/// The returned chunks are training negatives.
pub fn augment(
    dataset: &Dataset,
    author: &str,
    model: &GeneratorModel,
    vocab: &Vocabulary,
    table: Option<&EmbeddingTable>,
    cfg: &SamplingConfig,
    seed: u64,
) -> Result<Vec<Chunk>> {
    augment_n(dataset, author, model, vocab, table, cfg, seed, None)
}

/// As [`augment`] with an explicit count; `None` uses [`augmentation_size`].
#[allow(clippy::too_many_arguments)]
pub fn augment_n(
    dataset: &Dataset,
    author: &str,
    model: &GeneratorModel,
    vocab: &Vocabulary,
    table: Option<&EmbeddingTable>,
    cfg: &SamplingConfig,
    seed: u64,
    count: Option<usize>,
) -> Result<Vec<Chunk>> {
    if !dataset.authors.contains(author) {
        return Err(Error::UnknownAuthor(author.to_string()));
    }
    if model.config.vocab_size != vocab.len() {
        return Err(Error::Shape(format!(
            "generator vocabulary of {} but {} given",
            model.config.vocab_size,
            vocab.len()
        )));
    }
    let sources: Vec<&Chunk> = dataset.of_author(author, Split::Train).collect();
    if sources.is_empty() {
        return Err(Error::UnknownAuthor(author.to_string()));
    }
    let n = count.unwrap_or_else(|| augmentation_size(sources.len()));
    let mut pick = stream(seed, &["augment", author]);
    let picks: Vec<usize> = (0..n).map(|_| pick.random_range(0..sources.len())).collect();
    picks
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let src = sources[s];
            let prompt = encode_prompt(vocab, &src.tokens[..PROMPT_LEN.min(src.tokens.len())]);
            let sample_cfg = SamplingConfig {
                seed: derive_seed_u64(cfg.seed ^ seed, &[i as u64]),
                ..cfg.clone()
            };
            let out = generate(model, &prompt, src.len(), &sample_cfg, Some(vocab.unk_id()), table)?;
            let id = format!("{author}:generated:{i:04}#0");
            let mut chunk = Chunk::new(id, Vec::new(), author, Origin::Generated, Split::Train);
            match out {
                Generated::Ids(ids) => chunk.tokens = vocab.decode_ids(&ids),
                Generated::Dense(rows) => chunk.dense = Some(rows),
            }
            Ok(chunk)
        })
        .collect()
}
