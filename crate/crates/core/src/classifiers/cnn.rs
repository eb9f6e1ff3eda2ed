//! Convolutional verifier: parallel conv/max-pool blocks over the token
//! sequence, an optional base-feature branch, and a single-logit head.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::evaluation::{f1, Confusion};
use crate::rng::{derive_seed, rng_from, stream, Rng};
use crate::tensor::nn::{dropout, weighted_bce_with_logits, ConvMaxBlock, Linear};
use crate::tensor::{AdamConfig, Bound, Checkpoint, OptimizerState, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// Token ids over a vocabulary, projected without bias.
    OneHot { vocab_size: usize },
    /// Rows of a fixed width, used as they are.
    Dense { dim: usize },
}

impl InputKind {
    /// Width of one input row before any projection.
    pub fn width(self) -> usize {
        match self {
            InputKind::OneHot { vocab_size } => vocab_size,
            InputKind::Dense { dim } => dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnConfig {
    pub input: InputKind,
    pub projection: usize,
    pub kernels: Vec<usize>,
    pub widths: (usize, usize),
    pub dropout: f64,
    pub trunk: usize,
    /// Width of the base-feature vector; `None` drops the branch.
    pub bf_dim: Option<usize>,
    pub bf_hidden: (usize, usize),
}

impl CnnConfig {
    pub fn new(input: InputKind) -> Self {
        CnnConfig {
            input,
            projection: 128,
            kernels: vec![3, 5],
            widths: (512, 256),
            dropout: 0.3,
            trunk: 64,
            bf_dim: None,
            bf_hidden: (128, 64),
        }
    }

    pub fn with_bf(mut self, dim: usize) -> Self {
        self.bf_dim = Some(dim);
        self
    }

    /// Width of the vector fed to the head.
    pub fn hidden_dim(&self) -> usize {
        self.trunk + self.bf_dim.map_or(0, |_| self.bf_hidden.1)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.kernels.is_empty() || self.kernels.contains(&0) {
            return bad(format!("cnn kernels must be positive, got {:?}", self.kernels));
        }
        if self.widths.0 == 0 || self.widths.1 == 0 || self.trunk == 0 || self.projection == 0 {
            return bad("cnn layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("cnn dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.input.width() == 0 {
            return bad("cnn input width is zero".into());
        }
        Ok(())
    }

    fn to_header(&self) -> BTreeMap<String, String> {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut h = BTreeMap::new();
        let input = match self.input {
            InputKind::OneHot { vocab_size } => format!("onehot:{vocab_size}"),
            InputKind::Dense { dim } => format!("dense:{dim}"),
        };
        h.insert("model".into(), "cnn".into());
        h.insert("input".into(), input);
        h.insert("projection".into(), self.projection.to_string());
        h.insert("kernels".into(), list(&self.kernels));
        h.insert("widths".into(), list(&[self.widths.0, self.widths.1]));
        h.insert("dropout".into(), self.dropout.to_string());
        h.insert("trunk".into(), self.trunk.to_string());
        h.insert("bf".into(), self.bf_dim.map_or("none".into(), |d| d.to_string()));
        h.insert("bf_hidden".into(), list(&[self.bf_hidden.0, self.bf_hidden.1]));
        h
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bad = |k: &str, v: &str| Error::Checkpoint(format!("bad header `{k}` = `{v}`"));
        let num = |k: &str| -> Result<usize> {
            let v = ck.header_value(k)?;
            v.parse().map_err(|_| bad(k, v))
        };
        let list = |k: &str| -> Result<Vec<usize>> {
            let v = ck.header_value(k)?;
            v.split(',').map(|s| s.parse().map_err(|_| bad(k, v))).collect()
        };
        let pair = |k: &str| -> Result<(usize, usize)> {
            match list(k)?.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err(bad(k, ck.header_value(k).unwrap_or(""))),
            }
        };
        if ck.header_value("model")? != "cnn" {
            return Err(Error::Checkpoint("not a CNN checkpoint".into()));
        }
        let input_s = ck.header_value("input")?;
        let input = match input_s.split_once(':') {
            Some(("onehot", n)) => InputKind::OneHot {
                vocab_size: n.parse().map_err(|_| bad("input", input_s))?,
            },
            Some(("dense", n)) => InputKind::Dense {
                dim: n.parse().map_err(|_| bad("input", input_s))?,
            },
            _ => return Err(bad("input", input_s)),
        };
        let bf_s = ck.header_value("bf")?;
        let bf_dim = match bf_s {
            "none" => None,
            n => Some(n.parse().map_err(|_| bad("bf", bf_s))?),
        };
        let dropout_s = ck.header_value("dropout")?;
        Ok(CnnConfig {
            input,
            projection: num("projection")?,
            kernels: list("kernels")?,
            widths: pair("widths")?,
            dropout: dropout_s.parse().map_err(|_| bad("dropout", dropout_s))?,
            trunk: num("trunk")?,
            bf_dim,
            bf_hidden: pair("bf_hidden")?,
        })
    }
}

/// A token sequence as the network reads it.
#[derive(Clone, Debug, PartialEq)]
pub enum SeqInput {
    Ids(Vec<usize>),
    Dense(Tensor),
}

impl SeqInput {
    pub fn len(&self) -> usize {
        match self {
            SeqInput::Ids(ids) => ids.len(),
            SeqInput::Dense(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub seq: SeqInput,
    pub bf: Option<Vec<f64>>,
    pub label: bool,
}

/// Network weights and layout.
#[derive(Clone, Debug)]
pub struct CnnNet {
    pub config: CnnConfig,
    pub store: ParamStore,
    proj: Option<Linear>,
    blocks: Vec<ConvMaxBlock>,
    trunk: Linear,
    bf: Option<(Linear, Linear)>,
    head: Linear,
}

impl CnnNet {
    pub fn new(config: CnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed);
        let mut store = ParamStore::new();
        let (proj, d_in) = match config.input {
            InputKind::OneHot { vocab_size } => (
                Some(Linear::new(&mut store, "proj", vocab_size, config.projection, false, &mut rng)),
                config.projection,
            ),
            InputKind::Dense { dim } => (None, dim),
        };
        let blocks: Vec<ConvMaxBlock> = config
            .kernels
            .iter()
            .map(|&k| ConvMaxBlock::new(&mut store, &format!("block{k}"), d_in, k, config.widths, &mut rng))
            .collect();
        let pooled = config.kernels.len() * config.widths.1;
        let trunk = Linear::new(&mut store, "trunk", pooled, config.trunk, true, &mut rng);
        let bf = config.bf_dim.map(|d| {
            let (h1, h2) = config.bf_hidden;
            (
                Linear::new(&mut store, "bf1", d, h1, true, &mut rng),
                Linear::new(&mut store, "bf2", h1, h2, true, &mut rng),
            )
        });
        let head = Linear::new(&mut store, "head", config.hidden_dim(), 1, true, &mut rng);
        Ok(CnnNet {
            config,
            store,
            proj,
            blocks,
            trunk,
            bf,
            head,
        })
    }

    /// Shortest sequence every block accepts.
    pub fn min_len(&self) -> usize {
        self.blocks.iter().map(ConvMaxBlock::min_len).max().unwrap_or(1)
    }

    pub fn input_width(&self) -> usize {
        self.config.input.width()
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim()
    }

    /// Embeds a stored sequence. Ids use a row lookup, which equals the
    /// projection of their one-hot rows.
    pub fn embed<'t>(&self, tape: &'t Tape, p: &Bound<'t>, seq: &SeqInput) -> Result<Var<'t>> {
        self.check_len(seq.len())?;
        match (seq, &self.proj) {
            (SeqInput::Ids(ids), Some(proj)) => {
                let v = self.input_width();
                if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
                    return Err(Error::Shape(format!("token id {bad} outside vocabulary of {v}")));
                }
                Ok(p.get(proj.weight).gather_rows(ids))
            }
            (SeqInput::Dense(t), None) => self.embed_var(p, tape.constant(t.clone())),
            (SeqInput::Ids(_), None) => Err(Error::InvalidArgument(
                "this network reads dense rows, not token ids".into(),
            )),
            (SeqInput::Dense(_), Some(_)) => Err(Error::InvalidArgument(
                "this network reads token ids, not dense rows".into(),
            )),
        }
    }

    /// Embeds input-space rows (`[L x input_width]`): one-hot or relaxed
    /// one-hot rows go through the projection, dense rows pass unchanged.
    pub fn embed_var<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "input rows of width {} but the network expects {}",
                x.cols(),
                self.input_width()
            )));
        }
        self.check_len(x.rows())?;
        Ok(match &self.proj {
            Some(proj) => proj.forward(p, x),
            None => x,
        })
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len < self.min_len() {
            let kernel = self.config.kernels.iter().copied().max().unwrap_or(1);
            return Err(Error::SequenceTooShort { len, kernel });
        }
        Ok(())
    }

    /// `[B x hidden_dim]` representation of embedded sequences.
    pub fn hidden<'t>(
        &self,
        tape: &'t Tape,
        p: &Bound<'t>,
        embedded: &[Var<'t>],
        bf: Option<Var<'t>>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var<'t>> {
        let pooled: Vec<Var<'t>> = self
            .blocks
            .iter()
            .map(|b| b.forward_batch(tape, p, embedded))
            .collect::<Result<_>>()?;
        let x = dropout(tape.concat_cols(&pooled), self.config.dropout, training, rng);
        let t = self.trunk.forward(p, x).relu();
        match (&self.bf, bf) {
            (None, None) => Ok(t),
            (Some((l1, l2)), Some(f)) => {
                if f.rows() != embedded.len() || f.cols() != l1.d_in {
                    return Err(Error::Shape(format!(
                        "base features {:?}, expected [{} x {}]",
                        f.shape(),
                        embedded.len(),
                        l1.d_in
                    )));
                }
                let b = l2.forward(p, l1.forward(p, f).relu()).relu();
                Ok(tape.concat_cols(&[t, b]))
            }
            (Some(_), None) => Err(Error::InvalidArgument("the network expects base features".into())),
            (None, Some(_)) => Err(Error::InvalidArgument(
                "base features given to a network without that branch".into(),
            )),
        }
    }

    /// Raw scores `[B x 1]` from the head.
    pub fn head<'t>(&self, p: &Bound<'t>, hidden: Var<'t>) -> Var<'t> {
        self.head.forward(p, hidden)
    }

    fn batch_inputs<'t>(
        &self,
        tape: &'t Tape,
        p: &Bound<'t>,
        batch: &[&Example],
    ) -> Result<(Vec<Var<'t>>, Option<Var<'t>>)> {
        let seqs = batch
            .iter()
            .map(|e| self.embed(tape, p, &e.seq))
            .collect::<Result<Vec<_>>>()?;
        let bf = if self.bf.is_some() {
            let rows = batch
                .iter()
                .map(|e| {
                    e.bf.clone()
                        .ok_or_else(|| Error::InvalidArgument("example lacks base features".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(tape.constant(Tensor::from_rows(&rows)))
        } else {
            None
        };
        Ok((seqs, bf))
    }

    /// Eval-mode hidden vectors and raw scores for each example.
    pub fn evaluate(&self, examples: &[Example]) -> Result<Vec<(Vec<f64>, f64)>> {
        let mut out = Vec::with_capacity(examples.len());
        let mut rng = rng_from(0);
        for batch in examples.chunks(64) {
            let tape = Tape::new();
            let p = self.store.bind_constants(&tape);
            let refs: Vec<&Example> = batch.iter().collect();
            let (seqs, bf) = self.batch_inputs(&tape, &p, &refs)?;
            let h = self.hidden(&tape, &p, &seqs, bf, false, &mut rng)?;
            let s = self.head(&p, h);
            let (hv, sv) = (h.value(), s.value());
            for r in 0..batch.len() {
                out.push((hv.row_slice(r).to_vec(), sv.get(r, 0)));
            }
        }
        Ok(out)
    }

    /// Mean weighted loss of one optimisation step over `batch`.
    fn train_step(
        &mut self,
        opt: &mut OptimizerState,
        batch: &[&Example],
        pos_weight: f64,
        rng: &mut Rng,
    ) -> Result<f64> {
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let (seqs, bf) = self.batch_inputs(&tape, &p, batch)?;
        let h = self.hidden(&tape, &p, &seqs, bf, true, rng)?;
        let labels: Vec<bool> = batch.iter().map(|e| e.label).collect();
        let loss = weighted_bce_with_logits(self.head(&p, h), &labels, pos_weight);
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("CNN loss became {value}")));
        }
        let grads = tape.backward(loss)?;
        self.store.accumulate(&p, &grads);
        opt.step(&mut self.store);
        self.store.zero_grad();
        Ok(value)
    }

    /// One shuffled pass; returns the mean batch loss.
    fn train_epoch(
        &mut self,
        opt: &mut OptimizerState,
        data: &[&Example],
        batch: usize,
        pos_weight: f64,
        rng: &mut Rng,
    ) -> Result<f64> {
        let mut order: Vec<&Example> = data.to_vec();
        order.shuffle(rng);
        let mut total = 0.0;
        let mut n = 0;
        for b in order.chunks(batch.max(1)) {
            total += self.train_step(opt, b, pos_weight, rng)?;
            n += 1;
        }
        Ok(total / n.max(1) as f64)
    }
}

/// Optimisation and early-stopping settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecipe {
    pub optimizer: AdamConfig,
    pub batch: usize,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub finetune_epochs: usize,
}

impl Default for TrainRecipe {
    fn default() -> Self {
        TrainRecipe {
            optimizer: AdamConfig::adamw(0.001),
            batch: 32,
            min_epochs: 50,
            max_epochs: 500,
            patience: 25,
            finetune_epochs: 5,
        }
    }
}

/// Negatives per positive.
pub fn pos_weight(labels: &[bool]) -> Result<f64> {
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok(neg as f64 / pos as f64)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    pub val_f1: Vec<f64>,
    /// 1-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub finetune_loss: Vec<f64>,
}

impl TrainLog {
    pub fn epochs_run(&self) -> usize {
        self.epoch_loss.len()
    }
}

/// Trains with early stopping on validation F1, restores the best epoch,
/// then fine-tunes on training plus validation data.
pub fn cnn_train(
    config: CnnConfig,
    train: &[Example],
    val: &[Example],
    recipe: &TrainRecipe,
    seed: u64,
) -> Result<(CnnModel, TrainLog)> {
    if recipe.min_epochs > recipe.max_epochs {
        return Err(Error::Config(format!(
            "min_epochs {} exceeds max_epochs {}",
            recipe.min_epochs, recipe.max_epochs
        )));
    }
    if val.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    let labels: Vec<bool> = train.iter().map(|e| e.label).collect();
    let pw = pos_weight(&labels)?;
    let mut net = CnnNet::new(config, derive_seed(seed, &["cnn-init"]))?;
    let mut rng = stream(seed, &["cnn-train"]);
    let mut opt = OptimizerState::new(&net.store, recipe.optimizer);
    let train_refs: Vec<&Example> = train.iter().collect();
    let val_labels: Vec<bool> = val.iter().map(|e| e.label).collect();

    let mut log = TrainLog::default();
    let mut best = (f64::NEG_INFINITY, net.store.snapshot());
    let mut stale = 0;
    for epoch in 1..=recipe.max_epochs {
        log.epoch_loss
            .push(net.train_epoch(&mut opt, &train_refs, recipe.batch, pw, &mut rng)?);
        let preds: Vec<bool> = net.evaluate(val)?.iter().map(|(_, s)| *s > 0.0).collect();
        let score = f1(Confusion::from_predictions(&preds, &val_labels)?);
        log.val_f1.push(score);
        if score > best.0 {
            best = (score, net.store.snapshot());
            log.best_epoch = epoch;
            stale = 0;
        } else if epoch > recipe.min_epochs {
            stale += 1;
        }
        if stale >= recipe.patience {
            break;
        }
    }
    if recipe.max_epochs > 0 {
        net.store.restore(&best.1);
    }

    let all: Vec<&Example> = train.iter().chain(val).collect();
    let all_labels: Vec<bool> = all.iter().map(|e| e.label).collect();
    let pw_all = pos_weight(&all_labels)?;
    let mut opt = OptimizerState::new(&net.store, recipe.optimizer);
    for _ in 0..recipe.finetune_epochs {
        log.finetune_loss
            .push(net.train_epoch(&mut opt, &all, recipe.batch, pw_all, &mut rng)?);
    }
    let epochs = log.best_epoch + recipe.finetune_epochs;
    Ok((CnnModel { net, epochs }, log))
}

/// A trained network ready for prediction.
#[derive(Clone, Debug)]
pub struct CnnModel {
    pub net: CnnNet,
    /// Epochs behind the stored weights: the restored epoch plus fine-tuning.
    pub epochs: usize,
}

fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

impl CnnModel {
    /// Probability of the positive class and the label at 0.5.
    pub fn predict(&self, example: &Example) -> Result<(f64, bool)> {
        Ok(self.predict_all(std::slice::from_ref(example))?[0])
    }

    pub fn predict_all(&self, examples: &[Example]) -> Result<Vec<(f64, bool)>> {
        Ok(self
            .net
            .evaluate(examples)?
            .into_iter()
            .map(|(_, s)| (sigmoid(s), s > 0.0))
            .collect())
    }

    /// The vector the head reads.
    pub fn hidden_representation(&self, example: &Example) -> Result<Vec<f64>> {
        Ok(self.net.evaluate(std::slice::from_ref(example))?.remove(0).0)
    }

    pub fn hidden_all(&self, examples: &[Example]) -> Result<Vec<Vec<f64>>> {
        Ok(self.net.evaluate(examples)?.into_iter().map(|(h, _)| h).collect())
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let mut ck = Checkpoint::from_store(&self.net.store, seed, self.epochs as u64);
        ck.header = self.net.config.to_header();
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = CnnConfig::from_checkpoint(ck)?;
        let mut net = CnnNet::new(config, 0)?;
        ck.load_into(&mut net.store)?;
        Ok(CnnModel {
            net,
            epochs: ck.step as usize,
        })
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        self.to_checkpoint(seed).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        CnnModel::from_checkpoint(&Checkpoint::load(path)?)
    }
}
