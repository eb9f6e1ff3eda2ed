use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};

use super::embedding::EmbeddingTable;
use super::model::{Encoding, GeneratorModel};
use crate::corpus::{Token, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};
use crate::tensor::value::argmax;
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    TopK,
    Categorical,
    Argmax,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::TopK => "topk",
            Strategy::Categorical => "categorical",
            Strategy::Argmax => "argmax",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "topk" => Ok(Strategy::TopK),
            "categorical" => Ok(Strategy::Categorical),
            "argmax" => Ok(Strategy::Argmax),
            _ => Err(Error::Config(format!("unknown sampling strategy `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    pub strategy: Strategy,
    pub k: usize,
    /// Forbid repeating any n-gram of this size; 0 disables the check.
    pub block_ngram: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            strategy: Strategy::Categorical,
            k: 50,
            block_ngram: 5,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("top-k needs k >= 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Softmax of `logits / temperature` over the `k` largest entries, zero
/// elsewhere. Ties at the cut keep the lower indices.
pub fn top_k_probs(logits: &[f64], k: usize, temperature: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..logits.len()).filter(|&i| logits[i].is_finite()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order.truncate(k.max(1));
    softmax_over(logits, &order, temperature)
}

fn softmax_over(logits: &[f64], keep: &[usize], temperature: f64) -> Vec<f64> {
    let mut probs = vec![0.0; logits.len()];
    let Some(max) = keep.iter().map(|&i| logits[i]).reduce(f64::max) else {
        return probs;
    };
    let mut z = 0.0;
    for &i in keep {
        let e = ((logits[i] - max) / temperature).exp();
        probs[i] = e;
        z += e;
    }
    probs.iter_mut().for_each(|p| *p /= z);
    probs
}

/// Tokens that would complete an `n`-gram already present in `history`.
pub fn banned_next(history: &[usize], n: usize) -> BTreeSet<usize> {
    let mut banned = BTreeSet::new();
    if n == 0 || history.len() < n.saturating_sub(1) {
        return banned;
    }
    if n == 1 {
        return history.iter().copied().collect();
    }
    let tail = &history[history.len() - (n - 1)..];
    for w in history.windows(n) {
        if &w[..n - 1] == tail {
            banned.insert(w[n - 1]);
        }
    }
    banned
}

/// Picks the next id from a logit row. `masked` ids are never chosen;
/// repeated n-grams are avoided unless that leaves nothing to choose.
pub fn choose_next(
    logits: &[f64],
    history: &[usize],
    masked: &[usize],
    cfg: &SamplingConfig,
    rng: &mut Rng,
) -> usize {
    let mut l = logits.to_vec();
    for &m in masked {
        if m < l.len() {
            l[m] = f64::NEG_INFINITY;
        }
    }
    let banned = banned_next(history, cfg.block_ngram);
    let mut filtered = l.clone();
    for &b in &banned {
        filtered[b] = f64::NEG_INFINITY;
    }
    if filtered.iter().all(|v| !v.is_finite()) {
        log::warn!("every candidate repeats a {}-gram; lifting the ban for this step", cfg.block_ngram);
        filtered = l;
        if filtered.iter().all(|v| !v.is_finite()) {
            filtered = logits.to_vec();
        }
    }
    match cfg.strategy {
        Strategy::Argmax => argmax(&filtered),
        Strategy::TopK | Strategy::Categorical => {
            let probs = match cfg.strategy {
                Strategy::TopK => top_k_probs(&filtered, cfg.k, cfg.temperature),
                _ => top_k_probs(&filtered, usize::MAX, cfg.temperature),
            };
            WeightedIndex::new(&probs).map_or_else(|_| argmax(&filtered), |d| d.sample(rng))
        }
    }
}

/// Result of [`generate`]: token ids for one-hot models, rows for
/// embedding models. The prompt is included.
#[derive(Clone, Debug, PartialEq)]
pub enum Generated {
    Ids(Vec<usize>),
    Dense(Tensor),
}

impl Generated {
    pub fn len(&self) -> usize {
        match self {
            Generated::Ids(v) => v.len(),
            Generated::Dense(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maps prompt tokens to ids; unknown ones become UNK with a warning.
pub fn encode_prompt(vocab: &Vocabulary, prompt: &[Token]) -> Vec<usize> {
    prompt
        .iter()
        .map(|t| {
            if !vocab.contains(t.surface()) {
                log::warn!("prompt token `{}` is not in the vocabulary; using {}", t.surface(), crate::corpus::UNK);
            }
            vocab.encode(t.surface())
        })
        .collect()
}

/// Continues `prompt` autoregressively until the sequence holds `length`
/// items. One-hot models never emit `unk`; embedding models need `table`.
pub fn generate(
    model: &GeneratorModel,
    prompt: &[usize],
    length: usize,
    cfg: &SamplingConfig,
    unk: Option<usize>,
    table: Option<&EmbeddingTable>,
) -> Result<Generated> {
    cfg.validate()?;
    if prompt.is_empty() {
        return Err(Error::InvalidArgument("generation needs a non-empty prompt".into()));
    }
    if length < prompt.len() {
        return Err(Error::InvalidArgument(format!(
            "requested length {length} is shorter than the prompt ({})",
            prompt.len()
        )));
    }
    let tape = Tape::new();
    let p = model.store.bind_constants(&tape);
    let mut st = model.stepper(&tape, &p, 1);
    match model.config.encoding {
        Encoding::OneHot => {
            let mut rng = rng_from(cfg.seed);
            let masked: Vec<usize> = unk.into_iter().collect();
            let mut seq = prompt.to_vec();
            let mut out = None;
            for &id in prompt {
                out = Some(st.push_ids(&[id])?);
            }
            while seq.len() < length {
                let logits = out.expect("prompt is non-empty").value();
                let next = choose_next(logits.row_slice(0), &seq, &masked, cfg, &mut rng);
                seq.push(next);
                if seq.len() < length {
                    out = Some(st.push_ids(&[next])?);
                }
            }
            Ok(Generated::Ids(seq))
        }
        Encoding::Emb => {
            let table = table.ok_or_else(|| Error::InvalidArgument("embedding generation needs the table".into()))?;
            let mut rows = table.lookup(prompt);
            let mut out = None;
            for r in 0..rows.rows() {
                out = Some(st.push(tape.constant(Tensor::row(rows.row_slice(r).to_vec())))?);
            }
            let d = table.dim();
            let mut data = rows.into_data();
            while data.len() / d < length {
                let v = out.expect("prompt is non-empty").value().row_slice(0).to_vec();
                data.extend_from_slice(&v);
                if data.len() / d < length {
                    out = Some(st.push(tape.constant(Tensor::row(v)))?);
                }
            }
            rows = Tensor::matrix(length, d, data);
            Ok(Generated::Dense(rows))
        }
    }
}
