use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::Chunk;
use crate::{Error, Result};

/// Identifying columns for one exported point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointLabel {
    pub id: String,
    pub author: String,
    pub split: String,
    pub origin: String,
}

impl PointLabel {
    pub fn of(chunk: &Chunk) -> Self {
        PointLabel {
            id: chunk.id.clone(),
            author: chunk.author.clone(),
            split: chunk.split.as_str().to_string(),
            origin: chunk.origin.as_str().to_string(),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Columns `id author split origin v_1 .. v_d`.
pub fn hidden_tsv(labels: &[PointLabel], vectors: &[Vec<f64>]) -> Result<String> {
    if labels.len() != vectors.len() {
        return Err(Error::Shape(format!("{} labels for {} vectors", labels.len(), vectors.len())));
    }
    let d = vectors.first().map_or(0, Vec::len);
    let mut s = String::from("id\tauthor\tsplit\torigin");
    for k in 1..=d {
        write!(s, "\tv_{k}").unwrap();
    }
    s.push('\n');
    for (l, v) in labels.iter().zip(vectors) {
        if v.len() != d {
            return Err(Error::Shape("hidden vectors differ in length".into()));
        }
        write!(s, "{}\t{}\t{}\t{}", l.id, l.author, l.split, l.origin).unwrap();
        for x in v {
            write!(s, "\t{x}").unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_hidden_tsv(path: &Path, labels: &[PointLabel], vectors: &[Vec<f64>]) -> Result<()> {
    write(path, &hidden_tsv(labels, vectors)?)
}

/// Columns `id author origin x y`.
pub fn tsne_tsv(labels: &[PointLabel], coords: &[[f64; 2]]) -> Result<String> {
    if labels.len() != coords.len() {
        return Err(Error::Shape(format!("{} labels for {} points", labels.len(), coords.len())));
    }
    let mut s = String::from("id\tauthor\torigin\tx\ty\n");
    for (l, c) in labels.iter().zip(coords) {
        writeln!(s, "{}\t{}\t{}\t{}\t{}", l.id, l.author, l.origin, c[0], c[1]).unwrap();
    }
    Ok(s)
}

pub fn write_tsne_tsv(path: &Path, labels: &[PointLabel], coords: &[[f64; 2]]) -> Result<()> {
    write(path, &tsne_tsv(labels, coords)?)
}

/// Reads a file written by [`write_hidden_tsv`].
pub fn read_hidden_tsv(path: &Path) -> Result<(Vec<PointLabel>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().ok_or_else(|| Error::EmptyFile { path: path.to_path_buf() })?.1;
    let d = header.split('\t').count().saturating_sub(4);
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != d + 4 {
            return Err(malformed(format!("expected {} columns, found {}", d + 4, cols.len())));
        }
        let v = cols[4..]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| malformed(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        labels.push(PointLabel {
            id: cols[0].into(),
            author: cols[1].into(),
            split: cols[2].into(),
            origin: cols[3].into(),
        });
        vectors.push(v);
    }
    if labels.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Ok((labels, vectors))
}
