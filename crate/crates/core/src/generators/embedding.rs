use rand_distr::{Distribution, Normal};

use crate::rng::rng_from;
use crate::tensor::Tensor;

pub const EMBEDDING_STD: f64 = 0.02;

/// Fixed token vectors shared by embedding-mode generators (as regression
/// targets) and the CNN's dense input path (to embed real text).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub vectors: Tensor,
}

impl EmbeddingTable {
    /// Gaussian rows with standard deviation 0.02.
    pub fn new(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let normal = Normal::new(0.0, EMBEDDING_STD).expect("valid std");
        let data = (0..vocab_size * dim).map(|_| normal.sample(&mut rng)).collect();
        EmbeddingTable {
            vectors: Tensor::matrix(vocab_size, dim, data),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// `[ids.len() x dim]` matrix of rows.
    pub fn lookup(&self, ids: &[usize]) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(self.vectors.row_slice(i));
        }
        Tensor::matrix(ids.len(), d, data)
    }

    /// Id of the row with the highest cosine similarity to `v`.
    pub fn nearest(&self, v: &[f64]) -> usize {
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let scores: Vec<f64> = (0..self.vocab_size())
            .map(|r| {
                let row = self.vectors.row_slice(r);
                let dot: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
                let rn = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                dot / (rn * vn)
            })
            .collect();
        crate::tensor::value::argmax(&scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_gaussian_rows() {
        let t = EmbeddingTable::new(300, 128, 5);
        assert_eq!((t.vocab_size(), t.dim()), (300, 128));
        assert_eq!(t, EmbeddingTable::new(300, 128, 5));
        let n = t.vectors.len() as f64;
        let mean = t.vectors.data().iter().sum::<f64>() / n;
        let std = (t.vectors.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.02).abs() < 0.001, "{std}");
        let rows = t.lookup(&[7, 3]);
        assert_eq!(rows.row_slice(1), t.vectors.row_slice(3));
        assert_eq!(t.nearest(t.vectors.row_slice(42)), 42);
    }
}
