//! Authorship verification with generated forgeries.
//!
//! The crate trains text generators to imitate a target author, adds their
//! output to the verifier's training set as negative examples, and measures
//! how SVM and CNN verifiers react. See the `book/` directory for a guided
//! tour of each stage.

pub mod classifiers;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod gan;
pub mod generators;
pub mod harness;
pub mod rng;
pub mod stylometry;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/tensor.md")]
    mod tensor {}
    #[doc = include_str!("../../../book/src/stylometry.md")]
    mod stylometry {}
    #[doc = include_str!("../../../book/src/generators.md")]
    mod generators {}
    #[doc = include_str!("../../../book/src/gan.md")]
    mod gan {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
