use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::nn::{GruLayer, Linear, TransformerEncoder};
use crate::tensor::{Bound, Checkpoint, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arch {
    Gru,
    Tra,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Encoding {
    /// Token ids in, next-token logits out.
    OneHot,
    /// Embedding rows in, embedding-sized vectors out.
    Emb,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Gru => "gru",
            Arch::Tra => "tra",
        }
    }
}

impl Encoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::OneHot => "1h",
            Encoding::Emb => "emb",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(Arch::Gru),
            "tra" | "transformer" => Ok(Arch::Tra),
            _ => Err(Error::Config(format!("unknown generator architecture `{s}`"))),
        }
    }
}

impl FromStr for Encoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1h" | "onehot" => Ok(Encoding::OneHot),
            "emb" => Ok(Encoding::Emb),
            _ => Err(Error::Config(format!("unknown encoding `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub arch: Arch,
    pub encoding: Encoding,
    pub vocab_size: usize,
    pub emb_dim: usize,
    /// Width of the bias-free input projection; also the transformer width.
    pub projection: usize,
    /// GRU state width, or the transformer feed-forward width.
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
}

impl GeneratorConfig {
    pub fn new(arch: Arch, encoding: Encoding, vocab_size: usize) -> Self {
        GeneratorConfig {
            arch,
            encoding,
            vocab_size,
            emb_dim: 128,
            projection: 128,
            hidden: 512,
            layers: 2,
            heads: 4,
        }
    }

    pub fn input_width(&self) -> usize {
        match self.encoding {
            Encoding::OneHot => self.vocab_size,
            Encoding::Emb => self.emb_dim,
        }
    }

    pub fn output_width(&self) -> usize {
        self.input_width()
    }

    fn body_width(&self) -> usize {
        match self.arch {
            Arch::Gru => self.hidden,
            Arch::Tra => self.projection,
        }
    }

    fn to_header(&self, vocab_hash: u64) -> BTreeMap<String, String> {
        let mut h = BTreeMap::new();
        for (k, v) in [
            ("model", "generator".to_string()),
            ("arch", self.arch.to_string()),
            ("encoding", self.encoding.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("emb_dim", self.emb_dim.to_string()),
            ("projection", self.projection.to_string()),
            ("hidden", self.hidden.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("vocab_hash", format!("{vocab_hash:016x}")),
        ] {
            h.insert(k.to_string(), v);
        }
        h
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.header_value("model")? != "generator" {
            return Err(Error::Checkpoint("not a generator checkpoint".into()));
        }
        let num = |k: &str| -> Result<usize> {
            let v = ck.header_value(k)?;
            v.parse()
                .map_err(|_| Error::Checkpoint(format!("bad header `{k}` = `{v}`")))
        };
        Ok(GeneratorConfig {
            arch: ck.header_value("arch")?.parse()?,
            encoding: ck.header_value("encoding")?.parse()?,
            vocab_size: num("vocab_size")?,
            emb_dim: num("emb_dim")?,
            projection: num("projection")?,
            hidden: num("hidden")?,
            layers: num("layers")?,
            heads: num("heads")?,
        })
    }
}

#[derive(Clone, Debug)]
enum Body {
    Gru(Vec<GruLayer>),
    Tra(TransformerEncoder),
}

/// A causal sequence model: bias-free input projection, GRU or transformer
/// body, a ReLU layer, and an output head.
#[derive(Clone, Debug)]
pub struct GeneratorModel {
    pub config: GeneratorConfig,
    pub store: ParamStore,
    /// Fingerprint of the vocabulary the model was built for.
    pub vocab_hash: u64,
    proj: Linear,
    body: Body,
    post: Linear,
    head: Linear,
}

impl GeneratorModel {
    pub fn new(config: GeneratorConfig, vocab_hash: u64, seed: u64) -> Result<Self> {
        if config.vocab_size == 0 || config.projection == 0 || config.hidden == 0 || config.layers == 0 {
            return Err(Error::Config("generator sizes must be positive".into()));
        }
        if config.encoding == Encoding::Emb && config.emb_dim == 0 {
            return Err(Error::Config("embedding width must be positive".into()));
        }
        let mut rng = rng_from(seed);
        let mut store = ParamStore::new();
        let proj = Linear::new(&mut store, "proj", config.input_width(), config.projection, false, &mut rng);
        let body = match config.arch {
            Arch::Gru => Body::Gru(
                (0..config.layers)
                    .map(|i| {
                        let d_in = if i == 0 { config.projection } else { config.hidden };
                        GruLayer::new(&mut store, &format!("gru{i}"), d_in, config.hidden, &mut rng)
                    })
                    .collect(),
            ),
            Arch::Tra => Body::Tra(TransformerEncoder::new(
                &mut store,
                "tra",
                config.projection,
                config.heads,
                config.hidden,
                config.layers,
                &mut rng,
            )?),
        };
        let w = config.body_width();
        let post = Linear::new(&mut store, "post", w, w, true, &mut rng);
        let head = Linear::new(&mut store, "head", w, config.output_width(), true, &mut rng);
        Ok(GeneratorModel {
            config,
            store,
            vocab_hash,
            proj,
            body,
            post,
            head,
        })
    }

    /// Projection of token ids (a row lookup).
    pub fn embed_ids<'t>(&self, p: &Bound<'t>, ids: &[usize]) -> Result<Var<'t>> {
        if self.config.encoding != Encoding::OneHot {
            return Err(Error::InvalidArgument("embedding-mode generators read vectors, not ids".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::Shape(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(p.get(self.proj.weight).gather_rows(ids))
    }

    /// Projection of input-space rows (one-hot, relaxed one-hot or embeddings).
    pub fn embed_rows<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        if x.cols() != self.config.input_width() {
            return Err(Error::Shape(format!(
                "generator input rows of width {}, expected {}",
                x.cols(),
                self.config.input_width()
            )));
        }
        Ok(self.proj.forward(p, x))
    }

    fn read_out<'t>(&self, p: &Bound<'t>, h: Var<'t>) -> Var<'t> {
        self.head.forward(p, self.post.forward(p, h).relu())
    }

    /// Outputs at every position of each projected sequence; row `i`
    /// depends on rows `0..=i` only.
    pub fn forward<'t>(&self, tape: &'t Tape, p: &Bound<'t>, seqs: &[Var<'t>]) -> Vec<Var<'t>> {
        match &self.body {
            Body::Tra(enc) => seqs
                .iter()
                .map(|&x| {
                    let h = enc.forward(p, x, true).expect("widths fixed at construction");
                    self.read_out(p, h)
                })
                .collect(),
            Body::Gru(layers) => {
                if seqs.is_empty() {
                    return Vec::new();
                }
                let lens: Vec<usize> = seqs.iter().map(|s| s.rows()).collect();
                let max = lens.iter().copied().max().unwrap_or(0);
                let b = seqs.len();
                let d = self.config.projection;
                // pad at the end, then reorder to time-major rows
                let padded: Vec<Var<'t>> = seqs
                    .iter()
                    .map(|&s| {
                        if s.rows() == max {
                            s
                        } else {
                            tape.concat_rows(&[s, tape.constant(Tensor::zeros(&[max - s.rows(), d]))])
                        }
                    })
                    .collect();
                let time_major: Vec<usize> = (0..max).flat_map(|t| (0..b).map(move |i| i * max + t)).collect();
                let x = tape.concat_rows(&padded).gather_rows(&time_major);
                let mut steps: Vec<Var<'t>> = (0..max).map(|t| x.slice_rows(t * b, (t + 1) * b)).collect();
                for layer in layers {
                    steps = layer.run(tape, p, &steps);
                }
                let out = self.read_out(p, tape.concat_rows(&steps));
                lens.iter()
                    .enumerate()
                    .map(|(i, &l)| out.gather_rows(&(0..l).map(|t| t * b + i).collect::<Vec<_>>()))
                    .collect()
            }
        }
    }

    /// Incremental evaluation for `batch` sequences on `tape`.
    pub fn stepper<'t, 'm>(&'m self, tape: &'t Tape, p: &'m Bound<'t>, batch: usize) -> Stepper<'t, 'm> {
        let state = match &self.body {
            Body::Gru(layers) => StepState::Gru(
                layers
                    .iter()
                    .map(|l| tape.constant(Tensor::zeros(&[batch, l.hidden])))
                    .collect(),
            ),
            Body::Tra(_) => StepState::Tra(vec![Vec::new(); batch]),
        };
        Stepper {
            model: self,
            tape,
            p,
            state,
        }
    }

    pub fn to_checkpoint(&self, seed: u64, step: u64) -> Checkpoint {
        let mut ck = Checkpoint::from_store(&self.store, seed, step);
        ck.header = self.config.to_header(self.vocab_hash);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = GeneratorConfig::from_checkpoint(ck)?;
        let hash_s = ck.header_value("vocab_hash")?;
        let vocab_hash = u64::from_str_radix(hash_s, 16)
            .map_err(|_| Error::Checkpoint(format!("bad header `vocab_hash` = `{hash_s}`")))?;
        let mut model = GeneratorModel::new(config, vocab_hash, 0)?;
        ck.load_into(&mut model.store)?;
        Ok(model)
    }
}

enum StepState<'t> {
    Gru(Vec<Var<'t>>),
    Tra(Vec<Vec<Var<'t>>>),
}

/// Feeds one input row per sequence at a time and returns the output row.
pub struct Stepper<'t, 'm> {
    model: &'m GeneratorModel,
    tape: &'t Tape,
    p: &'m Bound<'t>,
    state: StepState<'t>,
}

impl<'t> Stepper<'t, '_> {
    /// `x` holds one input-space row per sequence (`[B x input_width]`).
    pub fn push(&mut self, x: Var<'t>) -> Result<Var<'t>> {
        let m = self.model;
        let e = m.embed_rows(self.p, x)?;
        self.push_embedded(e)
    }

    /// As [`push`](Self::push) for token ids.
    pub fn push_ids(&mut self, ids: &[usize]) -> Result<Var<'t>> {
        let e = self.model.embed_ids(self.p, ids)?;
        self.push_embedded(e)
    }

    fn push_embedded(&mut self, e: Var<'t>) -> Result<Var<'t>> {
        let m = self.model;
        match (&mut self.state, &m.body) {
            (StepState::Gru(hs), Body::Gru(layers)) => {
                if e.rows() != hs[0].rows() {
                    return Err(Error::Shape(format!("{} rows for a batch of {}", e.rows(), hs[0].rows())));
                }
                let mut x = e;
                for (h, layer) in hs.iter_mut().zip(layers) {
                    *h = layer.step(self.p, x, *h);
                    x = *h;
                }
                Ok(m.read_out(self.p, x))
            }
            (StepState::Tra(prefixes), Body::Tra(enc)) => {
                if e.rows() != prefixes.len() {
                    return Err(Error::Shape(format!("{} rows for a batch of {}", e.rows(), prefixes.len())));
                }
                let mut outs = Vec::with_capacity(prefixes.len());
                for (i, prefix) in prefixes.iter_mut().enumerate() {
                    prefix.push(e.row(i));
                    let seq = self.tape.concat_rows(prefix);
                    let h = enc.forward(self.p, seq, true)?;
                    outs.push(h.row(h.rows() - 1));
                }
                Ok(m.read_out(self.p, self.tape.concat_rows(&outs)))
            }
            _ => unreachable!("stepper state matches the model body"),
        }
    }
}
