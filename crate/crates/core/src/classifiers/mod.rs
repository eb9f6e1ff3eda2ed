//! Binary verifiers: an SVM over stylometric features and a CNN over token
//! sequences.

pub mod cnn;
pub mod encode;
pub mod kernel;
pub mod svm;
pub mod svm_features;

pub use cnn::{
    cnn_train, pos_weight, CnnConfig, CnnModel, CnnNet, Example, InputKind, SeqInput, TrainLog,
    TrainRecipe,
};
pub use encode::CnnEncoder;
pub use kernel::{kernel_eval, Kernel, KernelKind};
pub use svm::{
    box_bounds, dual_objective, gram_matrix, smo_solve, svm_train, GridPoint, SmoConfig,
    SmoSolution, SvmGrid, SvmModel, SvmTrained,
};
pub use svm_features::SvmFeaturizer;
