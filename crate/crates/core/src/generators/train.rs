use rand::seq::SliceRandom;

use super::embedding::EmbeddingTable;
use super::model::{Encoding, GeneratorModel};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::nn::{cosine_distance, cross_entropy};
use crate::tensor::{AdamConfig, OptimizerState, Tape, Tensor, Var};

/// Shortest prefix that gets a next-token target.
pub const PROMPT_LEN: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct LmConfig {
    pub epochs: usize,
    pub optimizer: AdamConfig,
    /// Chunks per optimisation step.
    pub batch: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            epochs: 300,
            optimizer: AdamConfig::adamw(0.001),
            batch: 32,
        }
    }
}

/// Training pairs a chunk of `len` tokens yields: prefixes of length
/// `PROMPT_LEN..len`, each predicting the token that follows.
pub fn lm_windows(len: usize) -> usize {
    len.saturating_sub(PROMPT_LEN)
}

/// Mean loss per target for each epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LmLog {
    pub epoch_loss: Vec<f64>,
}

enum Target<'a> {
    Ids,
    Table(&'a EmbeddingTable),
}

/// Next-token cross-entropy training of a one-hot generator. Each chunk
/// is one forward pass; its causal outputs cover every window at once.
pub fn lm_train(model: &mut GeneratorModel, chunks: &[Vec<usize>], cfg: &LmConfig, seed: u64) -> Result<LmLog> {
    if model.config.encoding != Encoding::OneHot {
        return Err(Error::InvalidArgument("lm_train needs a one-hot generator".into()));
    }
    train(model, chunks, cfg, seed, Target::Ids)
}

/// Cosine-distance training of an embedding generator against the frozen
/// table row of each next token.
pub fn lm_train_emb(
    model: &mut GeneratorModel,
    chunks: &[Vec<usize>],
    table: &EmbeddingTable,
    cfg: &LmConfig,
    seed: u64,
) -> Result<LmLog> {
    if model.config.encoding != Encoding::Emb {
        return Err(Error::InvalidArgument("lm_train_emb needs an embedding generator".into()));
    }
    if table.dim() != model.config.emb_dim || table.vocab_size() != model.config.vocab_size {
        return Err(Error::Shape(format!(
            "table is {}x{}, generator expects {}x{}",
            table.vocab_size(),
            table.dim(),
            model.config.vocab_size,
            model.config.emb_dim
        )));
    }
    train(model, chunks, cfg, seed, Target::Table(table))
}

fn train(model: &mut GeneratorModel, chunks: &[Vec<usize>], cfg: &LmConfig, seed: u64, target: Target) -> Result<LmLog> {
    let usable: Vec<&Vec<usize>> = chunks.iter().filter(|c| lm_windows(c.len()) > 0).collect();
    if usable.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut opt = OptimizerState::new(&model.store, cfg.optimizer);
    let mut rng = stream(seed, &["lm-train"]);
    let mut log = LmLog::default();
    for epoch in 0..cfg.epochs {
        let mut order = usable.clone();
        order.shuffle(&mut rng);
        let (mut total, mut count) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch.max(1)) {
            let tape = Tape::new();
            let p = model.store.bind(&tape);
            let inputs: Vec<Var> = batch
                .iter()
                .map(|ids| match target {
                    Target::Ids => model.embed_ids(&p, &ids[..ids.len() - 1]),
                    Target::Table(t) => model.embed_rows(&p, tape.constant(t.lookup(&ids[..ids.len() - 1]))),
                })
                .collect::<Result<_>>()?;
            let outs = model.forward(&tape, &p, &inputs);
            let picked: Vec<Var> = outs
                .iter()
                .map(|o| o.slice_rows(PROMPT_LEN - 1, o.rows()))
                .collect();
            let gold: Vec<usize> = batch.iter().flat_map(|ids| ids[PROMPT_LEN..].iter().copied()).collect();
            let out = tape.concat_rows(&picked);
            let loss = match target {
                Target::Ids => cross_entropy(out, &gold),
                Target::Table(t) => cosine_distance(out, &t.lookup(&gold))?,
            };
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("language-model loss became {value} at epoch {}", epoch + 1)));
            }
            let grads = tape.backward(loss)?;
            model.store.accumulate(&p, &grads);
            opt.step(&mut model.store);
            model.store.zero_grad();
            total += value * gold.len() as f64;
            count += gold.len();
        }
        log.epoch_loss.push(total / count as f64);
    }
    Ok(log)
}

/// Mean per-target loss of `model` on `chunks` without training.
pub fn lm_loss(model: &GeneratorModel, chunks: &[Vec<usize>], table: Option<&EmbeddingTable>) -> Result<f64> {
    let tape = Tape::new();
    let p = model.store.bind_constants(&tape);
    let (mut total, mut count) = (0.0, 0usize);
    for ids in chunks.iter().filter(|c| lm_windows(c.len()) > 0) {
        let input = match (model.config.encoding, table) {
            (Encoding::OneHot, _) => model.embed_ids(&p, &ids[..ids.len() - 1])?,
            (Encoding::Emb, Some(t)) => model.embed_rows(&p, tape.constant(t.lookup(&ids[..ids.len() - 1])))?,
            (Encoding::Emb, None) => return Err(Error::InvalidArgument("embedding generator needs its table".into())),
        };
        let out = model.forward(&tape, &p, &[input])[0];
        let out = out.slice_rows(PROMPT_LEN - 1, out.rows());
        let gold = &ids[PROMPT_LEN..];
        let loss = match table {
            Some(t) if model.config.encoding == Encoding::Emb => cosine_distance(out, &t.lookup(gold))?,
            _ => cross_entropy(out, gold),
        };
        total += loss.item() * gold.len() as f64;
        count += gold.len();
    }
    if count == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(total / count as f64)
}

/// Cosine distance between two vectors, for callers outside the tape.
pub fn cosine_loss(out: &[f64], target: &[f64]) -> Result<f64> {
    let tape = Tape::new();
    let o = tape.constant(Tensor::row(out.to_vec()));
    Ok(cosine_distance(o, &Tensor::row(target.to_vec()))?.item())
}
