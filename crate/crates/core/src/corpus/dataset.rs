use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::chunk::{chunk_document, Chunk, ChunkRule, Origin, Split};
use super::jsonl::{read_jsonl, write_jsonl};
use super::token::tokenize;
use crate::{Error, Result};

/// Authors need at least this many training chunks to stay in a dataset.
pub const MIN_TRAIN_CHUNKS: usize = 10;

/// One line of a corpus file. `origin` only appears in prepared chunk
/// files written by [`Dataset::save`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub author: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, author: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            author: author.into(),
            split: None,
            origin: None,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = Some(split);
        self
    }
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, d)| d).collect())
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(path, docs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let all = [self.train, self.validation, self.test];
        if all.iter().any(|r| !(0.0..=1.0).contains(r)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be non-negative and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }

    /// Largest-remainder allocation of `n` items over train, validation, test.
    pub fn allocate(&self, n: usize) -> [usize; 3] {
        let quotas = [self.train, self.validation, self.test].map(|r| r * n as f64);
        let mut counts = quotas.map(|q| q.floor() as usize);
        let mut left = n - counts.iter().sum::<usize>().min(n);
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

/// Chunks of several authors with their split assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub chunks: Vec<Chunk>,
    pub authors: BTreeSet<String>,
    pub seed: u64,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Chunk> {
        self.chunks.iter().filter(move |c| c.split == split)
    }

    /// Real chunks written by `author` in `split`.
    pub fn of_author<'a>(&'a self, author: &'a str, split: Split) -> impl Iterator<Item = &'a Chunk> {
        self.split(split)
            .filter(move |c| c.origin == Origin::Real && c.author == author)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn author_list(&self) -> Vec<String> {
        self.authors.iter().cloned().collect()
    }

    /// Writes one JSON line per chunk (already chunked, with its split).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut docs = Vec::with_capacity(self.chunks.len());
        for c in &self.chunks {
            if c.dense.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "chunk {} has no surface text and cannot be saved",
                    c.id
                )));
            }
            docs.push(Document {
                id: c.id.clone(),
                text: c.text(),
                author: c.author.clone(),
                split: Some(c.split),
                origin: Some(c.origin),
            });
        }
        write_jsonl(path, &docs)
    }

    /// Reads a file written by [`Dataset::save`]. Each line is one chunk.
    pub fn load(path: &Path, seed: u64) -> Result<Dataset> {
        let mut chunks = Vec::new();
        for (line, d) in read_jsonl::<Document>(path)? {
            let Some(split) = d.split else {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: "prepared chunk without a split".into(),
                });
            };
            let origin = d.origin.unwrap_or(Origin::Real);
            chunks.push(Chunk::new(d.id, tokenize(&d.text), d.author, origin, split));
        }
        let authors = qualified_authors(&chunks, MIN_TRAIN_CHUNKS);
        if authors.is_empty() {
            return Err(Error::AllAuthorsFiltered {
                min_chunks: MIN_TRAIN_CHUNKS,
            });
        }
        Ok(Dataset {
            chunks,
            authors,
            seed,
        })
    }
}

fn qualified_authors(chunks: &[Chunk], min_train: usize) -> BTreeSet<String> {
    let mut train: BTreeMap<&str, usize> = BTreeMap::new();
    for c in chunks.iter().filter(|c| c.origin == Origin::Real) {
        let n = train.entry(&c.author).or_default();
        if c.split == Split::Train {
            *n += 1;
        }
    }
    train
        .into_iter()
        .filter(|&(_, n)| n >= min_train)
        .map(|(a, _)| a.to_string())
        .collect()
}

/// Chunks every document, assigns splits and drops thin authors, using the
/// default chunk rule and threshold.
pub fn filter_and_split(docs: &[Document], ratios: SplitRatios, seed: u64) -> Result<Dataset> {
    filter_and_split_with(docs, ratios, seed, ChunkRule::default(), MIN_TRAIN_CHUNKS)
}

/// Documents that declare a split keep it for all their chunks. The rest
/// are split per author: that author's undeclared chunks are shuffled with a
/// stream derived from `seed` and the author name, then cut by
/// [`SplitRatios::allocate`]. Authors left with fewer than `min_train`
/// training chunks are removed entirely.
pub fn filter_and_split_with(
    docs: &[Document],
    ratios: SplitRatios,
    seed: u64,
    rule: ChunkRule,
    min_train: usize,
) -> Result<Dataset> {
    ratios.validate()?;
    let mut chunks = Vec::new();
    let mut pending: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for d in docs {
        let pieces = chunk_document(&tokenize(&d.text), rule.chunk_size, rule.min_tail_words);
        for (k, tokens) in pieces.into_iter().enumerate() {
            let split = d.split.unwrap_or(Split::Train);
            if d.split.is_none() {
                pending.entry(&d.author).or_default().push(chunks.len());
            }
            let id = format!("{}#{k}", d.id);
            chunks.push(Chunk::new(id, tokens, d.author.clone(), Origin::Real, split));
        }
    }
    for (author, mut idx) in pending {
        let mut rng = crate::rng::stream(seed, &["split", author]);
        idx.shuffle(&mut rng);
        let [n_train, n_val, _] = ratios.allocate(idx.len());
        for (pos, &i) in idx.iter().enumerate() {
            chunks[i].split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
        }
    }
    let authors = qualified_authors(&chunks, min_train);
    if authors.is_empty() {
        return Err(Error::AllAuthorsFiltered {
            min_chunks: min_train,
        });
    }
    chunks.retain(|c| authors.contains(&c.author));
    Ok(Dataset {
        chunks,
        authors,
        seed,
    })
}
