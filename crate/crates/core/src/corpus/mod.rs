//! Texts, tokens, chunks and datasets.

mod chunk;
mod dataset;
mod ingest;
mod jsonl;
mod synthetic;
mod token;
mod vocab;

pub use chunk::{chunk_document, Chunk, ChunkRule, Origin, Split};
pub use dataset::{
    filter_and_split, filter_and_split_with, read_documents, write_documents, Dataset, Document,
    SplitRatios, MIN_TRAIN_CHUNKS,
};
pub use ingest::{ingest_generated, ingest_generated_with, write_generated, GeneratedText};
pub use jsonl::{read_jsonl, write_jsonl};
pub use synthetic::{
    make_synthetic_corpus, synthetic_author_name, synthetic_authors, synthetic_vocabulary,
    MarkovAuthor, SYNTHETIC_VOCAB_SIZE,
};
pub use token::{detokenize, tokenize, word_count, Token};
pub use vocab::{build_vocabulary, Vocabulary, UNK};
