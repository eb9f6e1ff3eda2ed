//! Language models that imitate a target author: GRU and transformer
//! bodies, one-hot or embedding encodings, training, sampling and the
//! forgery protocol.

pub mod augment;
pub mod embedding;
pub mod model;
pub mod sample;
pub mod train;

pub use augment::{augment, augment_n, augmentation_size, AUGMENT_FACTOR, AUGMENT_MAX};
pub use embedding::{EmbeddingTable, EMBEDDING_STD};
pub use model::{Arch, Encoding, GeneratorConfig, GeneratorModel, Stepper};
pub use sample::{
    banned_next, choose_next, encode_prompt, generate, top_k_probs, Generated, SamplingConfig, Strategy,
};
pub use train::{lm_loss, lm_train, lm_train_emb, lm_windows, LmConfig, LmLog, PROMPT_LEN};
