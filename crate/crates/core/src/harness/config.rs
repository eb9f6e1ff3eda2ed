use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classifiers::{KernelKind, SmoConfig, SvmGrid, TrainRecipe};
use crate::error::{Error, Result};
use crate::gan::GanConfig;
use crate::generators::{Arch, Encoding, LmConfig, SamplingConfig, Strategy};
use crate::rng::fnv1a;
use crate::tensor::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierKind {
    Svm,
    Cnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    Internal(Arch),
    /// Forgeries read from files, one per author.
    Ingested,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Training {
    Lm,
    Gan,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Cnn => "cnn",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(ClassifierKind::Svm),
            "cnn" => Ok(ClassifierKind::Cnn),
            _ => Err(Error::Config(format!("unknown classifier `{s}` (svm, cnn)"))),
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorKind::Internal(a) => write!(f, "{a}"),
            GeneratorKind::Ingested => f.write_str("ingested"),
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("ingested") {
            return Ok(GeneratorKind::Ingested);
        }
        s.parse::<Arch>()
            .map(GeneratorKind::Internal)
            .map_err(|_| Error::Config(format!("unknown generator `{s}` (gru, tra, ingested)")))
    }
}

impl fmt::Display for Training {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Training::Lm => "lmtr",
            Training::Gan => "gantr",
        })
    }
}

impl FromStr for Training {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lmtr" | "lm" => Ok(Training::Lm),
            "gantr" | "gan" => Ok(Training::Gan),
            _ => Err(Error::Config(format!("unknown training `{s}` (lmtr, gantr)"))),
        }
    }
}

/// CNN architecture knobs; the input kind and base-feature width follow
/// from the data.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnSettings {
    pub projection: usize,
    pub kernels: Vec<usize>,
    pub widths: (usize, usize),
    pub dropout: f64,
    pub trunk: usize,
    pub bf_hidden: (usize, usize),
    /// Use the base-feature branch whenever the inputs have text.
    pub base_features: bool,
    pub recipe: TrainRecipe,
}

impl Default for CnnSettings {
    fn default() -> Self {
        CnnSettings {
            projection: 128,
            kernels: vec![3, 5],
            widths: (512, 256),
            dropout: 0.3,
            trunk: 64,
            bf_hidden: (128, 64),
            base_features: true,
            recipe: TrainRecipe::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSettings {
    pub emb_dim: usize,
    pub projection: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub lm: LmConfig,
}

impl Default for GenSettings {
    fn default() -> Self {
        GenSettings {
            emb_dim: 128,
            projection: 128,
            hidden: 512,
            layers: 2,
            heads: 4,
            lm: LmConfig::default(),
        }
    }
}

/// Everything one experiment needs. Text form: `key = value` lines, `#`
/// comments; see [`ExperimentConfig::to_text`] for every key.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub classifier: ClassifierKind,
    pub generator: GeneratorKind,
    pub encoding: Encoding,
    pub training: Training,
    pub seed: u64,
    /// Path template with `{author}` for ingested forgeries.
    pub ingested: Option<String>,
    /// Path template with `{author}` for forged test chunks; their
    /// false-positive rate is reported per arm.
    pub probe: Option<String>,
    pub vocab_min_freq: usize,
    pub cnn: CnnSettings,
    pub svm_grid: SvmGrid,
    pub smo: SmoConfig,
    pub gen: GenSettings,
    pub sample: SamplingConfig,
    pub gan: GanConfig,
    pub augment_count: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            classifier: ClassifierKind::Cnn,
            generator: GeneratorKind::Internal(Arch::Gru),
            encoding: Encoding::OneHot,
            training: Training::Lm,
            seed: 0,
            ingested: None,
            probe: None,
            vocab_min_freq: 1,
            cnn: CnnSettings::default(),
            svm_grid: SvmGrid::default(),
            smo: SmoConfig::default(),
            gen: GenSettings::default(),
            sample: SamplingConfig::default(),
            gan: GanConfig::default(),
            augment_count: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse(key, p.trim())).collect()
}

fn parse_pair(key: &str, v: &str) -> Result<(usize, usize)> {
    match parse_list::<usize>(key, v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::Config(format!("`{key}` takes two comma-separated numbers"))),
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn opt_path(v: &str) -> Option<String> {
    (!v.is_empty() && v != "none").then(|| v.to_string())
}

impl ExperimentConfig {
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let r = &mut self.cnn.recipe;
        match key {
            "dataset" => self.dataset = opt_path(v).map(PathBuf::from),
            "classifier" => self.classifier = v.parse()?,
            "generator" => self.generator = v.parse()?,
            "encoding" => self.encoding = v.parse().map_err(|_| Error::Config(format!("unknown encoding `{v}`")))?,
            "training" => self.training = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "ingested" => self.ingested = opt_path(v),
            "probe" => self.probe = opt_path(v),
            "vocab.min_freq" => self.vocab_min_freq = parse(key, v)?,

            "cnn.projection" => self.cnn.projection = parse(key, v)?,
            "cnn.kernels" => self.cnn.kernels = parse_list(key, v)?,
            "cnn.widths" => self.cnn.widths = parse_pair(key, v)?,
            "cnn.dropout" => self.cnn.dropout = parse(key, v)?,
            "cnn.trunk" => self.cnn.trunk = parse(key, v)?,
            "cnn.bf_hidden" => self.cnn.bf_hidden = parse_pair(key, v)?,
            "cnn.base_features" => self.cnn.base_features = parse(key, v)?,
            "cnn.lr" => r.optimizer.lr = parse(key, v)?,
            "cnn.batch" => r.batch = parse(key, v)?,
            "cnn.min_epochs" => r.min_epochs = parse(key, v)?,
            "cnn.max_epochs" => r.max_epochs = parse(key, v)?,
            "cnn.patience" => r.patience = parse(key, v)?,
            "cnn.finetune_epochs" => r.finetune_epochs = parse(key, v)?,

            "svm.c_values" => self.svm_grid.c_values = parse_list(key, v)?,
            "svm.kernels" => self.svm_grid.kernels = parse_list::<KernelKind>(key, v)?,
            "svm.weighting" => self.svm_grid.weighting = parse_list(key, v)?,
            "svm.tolerance" => self.smo.tolerance = parse(key, v)?,
            "svm.max_passes" => self.smo.max_passes = parse(key, v)?,

            "gen.emb_dim" => self.gen.emb_dim = parse(key, v)?,
            "gen.projection" => self.gen.projection = parse(key, v)?,
            "gen.hidden" => self.gen.hidden = parse(key, v)?,
            "gen.layers" => self.gen.layers = parse(key, v)?,
            "gen.heads" => self.gen.heads = parse(key, v)?,
            "gen.epochs" => self.gen.lm.epochs = parse(key, v)?,
            "gen.lr" => self.gen.lm.optimizer.lr = parse(key, v)?,
            "gen.batch" => self.gen.lm.batch = parse(key, v)?,

            "sample.strategy" => self.sample.strategy = parse::<Strategy>(key, v)?,
            "sample.k" => self.sample.k = parse(key, v)?,
            "sample.block_ngram" => self.sample.block_ngram = parse(key, v)?,
            "sample.temperature" => self.sample.temperature = parse(key, v)?,

            "gan.epochs" => self.gan.epochs = parse(key, v)?,
            "gan.critic_passes" => self.gan.critic_passes = parse(key, v)?,
            "gan.lambda_gp" => self.gan.lambda_gp = parse(key, v)?,
            "gan.lr" => {
                let lr = parse(key, v)?;
                self.gan.generator_optimizer = AdamConfig::adam(lr);
                self.gan.critic_optimizer = AdamConfig::adam(lr);
            }
            "gan.batch" => self.gan.batch = parse(key, v)?,
            "gan.tau" => self.gan.tau = parse(key, v)?,

            "augment.count" => {
                self.augment_count = match v {
                    "auto" | "" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Rejects combinations no experiment uses, before any training.
    pub fn validate(&self) -> Result<()> {
        if self.classifier == ClassifierKind::Svm
            && self.encoding == Encoding::Emb
            && matches!(self.generator, GeneratorKind::Internal(_))
        {
            return Err(Error::Config(
                "the SVM reads text features; it cannot use embedding-mode forgeries".into(),
            ));
        }
        if self.generator == GeneratorKind::Ingested && self.ingested.is_none() {
            return Err(Error::Config("generator = ingested needs an `ingested` path template".into()));
        }
        for t in [&self.ingested, &self.probe].into_iter().flatten() {
            if !t.contains("{author}") {
                return Err(Error::Config(format!("path template `{t}` lacks `{{author}}`")));
            }
        }
        let r = &self.cnn.recipe;
        if r.min_epochs > r.max_epochs {
            return Err(Error::Config("cnn.min_epochs exceeds cnn.max_epochs".into()));
        }
        if self.gen.lm.batch == 0 || r.batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        self.sample.validate()?;
        self.gan.validate()
    }

    /// Canonical text holding every key; parses back to `self`.
    pub fn to_text(&self) -> String {
        let r = &self.cnn.recipe;
        let path = |p: &Option<String>| p.clone().unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("dataset", self.dataset.as_ref().map_or("none".into(), |p| p.display().to_string()));
        kv("classifier", self.classifier.to_string());
        kv("generator", self.generator.to_string());
        kv("encoding", self.encoding.to_string());
        kv("training", self.training.to_string());
        kv("seed", self.seed.to_string());
        kv("ingested", path(&self.ingested));
        kv("probe", path(&self.probe));
        kv("vocab.min_freq", self.vocab_min_freq.to_string());
        kv("cnn.projection", self.cnn.projection.to_string());
        kv("cnn.kernels", join(&self.cnn.kernels));
        kv("cnn.widths", format!("{},{}", self.cnn.widths.0, self.cnn.widths.1));
        kv("cnn.dropout", self.cnn.dropout.to_string());
        kv("cnn.trunk", self.cnn.trunk.to_string());
        kv("cnn.bf_hidden", format!("{},{}", self.cnn.bf_hidden.0, self.cnn.bf_hidden.1));
        kv("cnn.base_features", self.cnn.base_features.to_string());
        kv("cnn.lr", r.optimizer.lr.to_string());
        kv("cnn.batch", r.batch.to_string());
        kv("cnn.min_epochs", r.min_epochs.to_string());
        kv("cnn.max_epochs", r.max_epochs.to_string());
        kv("cnn.patience", r.patience.to_string());
        kv("cnn.finetune_epochs", r.finetune_epochs.to_string());
        kv("svm.c_values", join(&self.svm_grid.c_values));
        kv("svm.kernels", join(&self.svm_grid.kernels));
        kv("svm.weighting", join(&self.svm_grid.weighting));
        kv("svm.tolerance", self.smo.tolerance.to_string());
        kv("svm.max_passes", self.smo.max_passes.to_string());
        kv("gen.emb_dim", self.gen.emb_dim.to_string());
        kv("gen.projection", self.gen.projection.to_string());
        kv("gen.hidden", self.gen.hidden.to_string());
        kv("gen.layers", self.gen.layers.to_string());
        kv("gen.heads", self.gen.heads.to_string());
        kv("gen.epochs", self.gen.lm.epochs.to_string());
        kv("gen.lr", self.gen.lm.optimizer.lr.to_string());
        kv("gen.batch", self.gen.lm.batch.to_string());
        kv("sample.strategy", self.sample.strategy.to_string());
        kv("sample.k", self.sample.k.to_string());
        kv("sample.block_ngram", self.sample.block_ngram.to_string());
        kv("sample.temperature", self.sample.temperature.to_string());
        kv("gan.epochs", self.gan.epochs.to_string());
        kv("gan.critic_passes", self.gan.critic_passes.to_string());
        kv("gan.lambda_gp", self.gan.lambda_gp.to_string());
        kv("gan.lr", self.gan.generator_optimizer.lr.to_string());
        kv("gan.batch", self.gan.batch.to_string());
        kv("gan.tau", self.gan.tau.to_string());
        kv("augment.count", self.augment_count.map_or("auto".into(), |n| n.to_string()));
        s
    }

    /// Hash of the canonical text, recorded in run manifests.
    pub fn hash(&self) -> u64 {
        fnv1a(self.to_text().as_bytes())
    }
}
