use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chunk::{chunk_document, Chunk, ChunkRule, Origin, Split};
use super::jsonl::{read_jsonl, write_jsonl};
use super::token::tokenize;
use crate::Result;

#[derive(Debug, Serialize, Deserialize)]
pub struct GeneratedText {
    pub text: String,
}

/// Reads externally generated forgeries of `target_author`, one
/// `{"text": ...}` record per line, and chunks them with the default rule.
/// The chunks are training negatives for that author.
pub fn ingest_generated(path: &Path, target_author: &str) -> Result<Vec<Chunk>> {
    ingest_generated_with(path, target_author, ChunkRule::default())
}

pub fn ingest_generated_with(path: &Path, target_author: &str, rule: ChunkRule) -> Result<Vec<Chunk>> {
    let mut out = Vec::new();
    for (line, rec) in read_jsonl::<GeneratedText>(path)? {
        let pieces = chunk_document(&tokenize(&rec.text), rule.chunk_size, rule.min_tail_words);
        for (k, tokens) in pieces.into_iter().enumerate() {
            out.push(Chunk::new(
                format!("{target_author}:ingested:{line}#{k}"),
                tokens,
                target_author,
                Origin::Ingested,
                Split::Train,
            ));
        }
    }
    Ok(out)
}

pub fn write_generated(path: &Path, texts: &[String]) -> Result<()> {
    let recs: Vec<GeneratedText> = texts.iter().map(|t| GeneratedText { text: t.clone() }).collect();
    write_jsonl(path, &recs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use std::fs;

    fn long_text(n: usize, seed: usize) -> String {
        (0..n)
            .map(|i| if (i + seed) % 7 == 0 { "," } else { "word" })
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.jsonl");
        let texts: Vec<String> = (0..3).map(|i| long_text(120, i)).collect();
        write_generated(&p, &texts).unwrap();
        let chunks = ingest_generated(&p, "A").unwrap();
        assert!(chunks.len() >= 3);
        assert!(chunks.iter().all(|c| c.origin == Origin::Ingested && !c.is_positive_for("A")));
    }

    #[test]
    fn missing_text_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.jsonl");
        fs::write(&p, "{\"text\": \"a b\"}\n\n{\"txt\": \"oops\"}\n").unwrap();
        match ingest_generated(&p, "A") {
            Err(Error::Malformed { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("text"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.jsonl");
        fs::write(&p, "\n  \n").unwrap();
        assert!(matches!(ingest_generated(&p, "A"), Err(Error::EmptyFile { .. })));
    }

    #[test]
    fn missing_file_is_io() {
        let e = ingest_generated(Path::new("/nonexistent/g.jsonl"), "A").unwrap_err();
        assert!(e.is_data_error());
    }

    #[test]
    fn chunk_count_matches_independent_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.jsonl");
        let texts: Vec<String> = (0..40).map(|i| long_text(60 + (i * 37) % 90, i)).collect();
        write_generated(&p, &texts).unwrap();
        // Independent count: split on spaces (every token here is space
        // separated), then apply the 100 / 25 rule by hand.
        let mut expected = 0;
        for t in &texts {
            let toks: Vec<&str> = t.split(' ').collect();
            let full = toks.len() / 100;
            let tail = &toks[full * 100..];
            let tail_words = tail.iter().filter(|s| **s != ",").count();
            expected += full + usize::from(!tail.is_empty() && tail_words >= 25);
        }
        let avg = texts.iter().map(|t| t.split(' ').count()).sum::<usize>() as f64 / 40.0;
        assert!((avg - 100.0).abs() < 10.0, "average length {avg}");
        assert_eq!(ingest_generated(&p, "A").unwrap().len(), expected);
    }
}
