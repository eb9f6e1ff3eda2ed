use crate::corpus::Chunk;
use crate::error::{Error, Result};
use crate::stylometry::{chi2_select, BaseFeatures, NgramVocabulary};

pub const NGRAM_RANGE: (usize, usize) = (1, 3);
pub const NGRAM_KEEP: f64 = 0.1;

/// Maps a chunk to the SVM input: the base-feature block followed by the
/// χ²-selected character n-grams, each n-gram column divided by its
/// maximum on the training set.
#[derive(Clone, Debug)]
pub struct SvmFeaturizer {
    pub base: BaseFeatures,
    pub ngrams: NgramVocabulary,
    pub selected: Vec<usize>,
    pub scale: Vec<f64>,
}

impl SvmFeaturizer {
    pub fn fit(train: &[&Chunk], labels: &[bool]) -> Result<Self> {
        SvmFeaturizer::fit_with(train, labels, NGRAM_RANGE, NGRAM_KEEP)
    }

    pub fn fit_with(train: &[&Chunk], labels: &[bool], range: (usize, usize), keep: f64) -> Result<Self> {
        if train.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} chunks but {} labels",
                train.len(),
                labels.len()
            )));
        }
        if let Some(c) = train.iter().find(|c| c.dense.is_some()) {
            return Err(Error::InvalidArgument(format!(
                "chunk {} has no text; the SVM needs surface tokens",
                c.id
            )));
        }
        let base = BaseFeatures::fit(train.iter().copied())?;
        let ngrams = NgramVocabulary::fit(train, range.0, range.1);
        let sparse = ngrams.transform_all(train);
        let selected = chi2_select(&sparse, labels, keep)?;
        let mut scale = vec![0.0f64; selected.len()];
        for v in &sparse {
            for (j, &f) in selected.iter().enumerate() {
                scale[j] = scale[j].max(v.get(f));
            }
        }
        Ok(SvmFeaturizer {
            base,
            ngrams,
            selected,
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim() + self.selected.len()
    }

    pub fn transform(&self, chunk: &Chunk) -> Result<Vec<f64>> {
        if chunk.dense.is_some() {
            return Err(Error::InvalidArgument(format!(
                "chunk {} has no text; the SVM needs surface tokens",
                chunk.id
            )));
        }
        let mut out = self.base.extract(chunk)?.to_vec();
        let sparse = self.ngrams.transform(chunk);
        for (&f, &s) in self.selected.iter().zip(&self.scale) {
            let v = sparse.get(f);
            out.push(if s > 0.0 { v / s } else { 0.0 });
        }
        Ok(out)
    }

    pub fn transform_all(&self, chunks: &[&Chunk]) -> Result<Vec<Vec<f64>>> {
        use rayon::prelude::*;
        chunks.par_iter().map(|c| self.transform(c)).collect()
    }
}
