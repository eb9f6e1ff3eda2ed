//! Stylometric features: base features, character n-grams and χ² selection.

mod base;
mod chi2;
mod ngrams;
mod pos;

pub use base::{
    fit_word_length_range, BaseFeatureVector, BaseFeatures, Stopwords, WordLengthRange,
    WORD_LENGTH_MIN_FREQ,
};
pub use chi2::{chi2_scores, chi2_select, chi2_statistic};
pub use ngrams::{char_ngrams, NgramProfile, NgramVocabulary, SparseVector};
pub use pos::{PosTag, PosTagger};
