//! Metrics, significance testing and embedding exports.

mod export;
mod metrics;
mod tsne;

pub use export::{
    hidden_tsv, read_hidden_tsv, tsne_tsv, write_hidden_tsv, write_tsne_tsv, PointLabel,
};
pub use metrics::{
    delta_pct, f1, k_metric, mcnemar, mcnemar_counts, Confusion, McNemar, MCNEMAR_EXACT_BELOW,
};
pub use tsne::{tsne, TsneConfig, TsneResult};
