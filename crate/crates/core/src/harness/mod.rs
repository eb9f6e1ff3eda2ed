//! Experiment orchestration: one round per author comparing a verifier
//! trained on the original data with one that also sees forgeries.

mod config;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{ClassifierKind, CnnSettings, ExperimentConfig, GenSettings, GeneratorKind, Training};
pub use report::{MacroRow, Report, REPORT_HEADER};

use crate::classifiers::{cnn_train, svm_train, CnnConfig, CnnEncoder, CnnModel, CnnNet, InputKind, SvmFeaturizer, SvmModel};
use crate::corpus::{build_vocabulary, ingest_generated, Chunk, Dataset, Split, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::{f1, k_metric, mcnemar, Confusion, McNemar};
use crate::gan::gan_train;
use crate::generators::{
    augment_n, augmentation_size, lm_train, lm_train_emb, EmbeddingTable, Encoding, GeneratorConfig,
    GeneratorModel,
};
use crate::rng::{derive_seed, fnv1a};
use crate::stylometry::BaseFeatures;
use crate::tensor::Tensor;

/// Seed of one stage of one author's round.
pub fn round_seed(seed: u64, author: &str, stage: &str) -> u64 {
    derive_seed(seed, &["round", author, stage])
}

/// Data-level state shared by every round: the vocabulary and, in
/// embedding mode, the shared table.
#[derive(Clone, Debug)]
pub struct Shared {
    pub vocab: Vocabulary,
    pub table: Option<EmbeddingTable>,
}

impl Shared {
    pub fn build(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        let train: Vec<Chunk> = dataset.split(Split::Train).cloned().collect();
        let vocab = build_vocabulary(&train, cfg.vocab_min_freq)?;
        let table = (cfg.encoding == Encoding::Emb)
            .then(|| EmbeddingTable::new(vocab.len(), cfg.gen.emb_dim, derive_seed(cfg.seed, &["embedding-table"])));
        Ok(Shared { vocab, table })
    }
}

fn path_for(template: &str, author: &str) -> PathBuf {
    PathBuf::from(template.replace("{author}", author))
}

/// A generator trained on `author`'s training chunks.
pub fn train_generator(dataset: &Dataset, author: &str, shared: &Shared, cfg: &ExperimentConfig) -> Result<GeneratorModel> {
    let GeneratorKind::Internal(arch) = cfg.generator else {
        return Err(Error::Config("ingested forgeries need no generator".into()));
    };
    let g = &cfg.gen;
    let gcfg = GeneratorConfig {
        emb_dim: g.emb_dim,
        projection: g.projection,
        hidden: g.hidden,
        layers: g.layers,
        heads: g.heads,
        ..GeneratorConfig::new(arch, cfg.encoding, shared.vocab.len())
    };
    let mut model = GeneratorModel::new(gcfg, shared.vocab.fingerprint(), round_seed(cfg.seed, author, "generator-init"))?;
    let ids: Vec<Vec<usize>> = dataset
        .of_author(author, Split::Train)
        .map(|c| shared.vocab.encode_tokens(&c.tokens))
        .collect();
    if ids.is_empty() {
        return Err(Error::UnknownAuthor(author.to_string()));
    }
    let seed = round_seed(cfg.seed, author, "generator-train");
    match (cfg.training, &shared.table) {
        (Training::Lm, None) => {
            lm_train(&mut model, &ids, &g.lm, seed)?;
        }
        (Training::Lm, Some(t)) => {
            lm_train_emb(&mut model, &ids, t, &g.lm, seed)?;
        }
        (Training::Gan, table) => {
            let (input, real): (InputKind, Vec<Tensor>) = match table {
                None => (
                    InputKind::OneHot {
                        vocab_size: shared.vocab.len(),
                    },
                    ids.iter().map(|s| Tensor::one_hot(s, shared.vocab.len())).collect(),
                ),
                Some(t) => (InputKind::Dense { dim: t.dim() }, ids.iter().map(|s| t.lookup(s)).collect()),
            };
            let ccfg = CnnConfig {
                projection: cfg.cnn.projection,
                kernels: cfg.cnn.kernels.clone(),
                widths: cfg.cnn.widths,
                dropout: 0.0,
                trunk: cfg.cnn.trunk,
                ..CnnConfig::new(input)
            };
            let mut critic = CnnNet::new(ccfg, round_seed(cfg.seed, author, "critic-init"))?;
            let gan_cfg = crate::gan::GanConfig {
                seed,
                ..cfg.gan.clone()
            };
            let trace = gan_train(&mut model, &mut critic, &real, &gan_cfg)?;
            if let Some(last) = trace.records.last() {
                log::info!("{author}: GAN finished, W = {:.4}", last.wasserstein);
            }
        }
    }
    Ok(model)
}

/// The negative training chunks added for `author`.
pub fn forgeries(dataset: &Dataset, author: &str, shared: &Shared, cfg: &ExperimentConfig) -> Result<Vec<Chunk>> {
    let n_train = dataset.of_author(author, Split::Train).count();
    let n = cfg.augment_count.unwrap_or_else(|| augmentation_size(n_train));
    match cfg.generator {
        GeneratorKind::Ingested => {
            let template = cfg.ingested.as_deref().expect("validated config");
            let mut chunks = ingest_generated(&path_for(template, author), author)?;
            if chunks.len() < n {
                log::warn!("{author}: only {} ingested forgeries, {n} wanted", chunks.len());
            }
            chunks.truncate(n);
            Ok(chunks)
        }
        GeneratorKind::Internal(_) => {
            let model = train_generator(dataset, author, shared, cfg)?;
            augment_n(
                dataset,
                author,
                &model,
                &shared.vocab,
                shared.table.as_ref(),
                &cfg.sample,
                round_seed(cfg.seed, author, "augment"),
                Some(n),
            )
        }
    }
}

/// Turns chunks into classifier inputs. Fitted once per round on the
/// original training set and reused by both arms.
pub enum Featurizer {
    Cnn(CnnEncoder),
    Svm(SvmFeaturizer),
}

pub enum Verifier {
    Cnn(CnnModel),
    Svm(SvmModel),
}

impl Featurizer {
    pub fn fit(train: &[&Chunk], author: &str, shared: &Shared, cfg: &ExperimentConfig) -> Result<Self> {
        match cfg.classifier {
            ClassifierKind::Svm => {
                let labels: Vec<bool> = train.iter().map(|c| c.is_positive_for(author)).collect();
                Ok(Featurizer::Svm(SvmFeaturizer::fit(train, &labels)?))
            }
            ClassifierKind::Cnn => {
                // base features need text on every input
                let text_everywhere = cfg.encoding == Encoding::OneHot || cfg.generator == GeneratorKind::Ingested;
                let base = if cfg.cnn.base_features && text_everywhere {
                    Some(BaseFeatures::fit(train.iter().copied())?)
                } else {
                    None
                };
                Ok(Featurizer::Cnn(CnnEncoder::new(shared.vocab.clone(), shared.table.clone(), base)?))
            }
        }
    }

    pub fn train(&self, train: &[&Chunk], val: &[&Chunk], author: &str, cfg: &ExperimentConfig, seed: u64) -> Result<Verifier> {
        match self {
            Featurizer::Cnn(enc) => {
                let tr = enc.encode_for(train, author)?;
                let va = enc.encode_for(val, author)?;
                let c = &cfg.cnn;
                let ccfg = CnnConfig {
                    projection: c.projection,
                    kernels: c.kernels.clone(),
                    widths: c.widths,
                    dropout: c.dropout,
                    trunk: c.trunk,
                    bf_dim: enc.bf_dim(),
                    bf_hidden: c.bf_hidden,
                    ..CnnConfig::new(enc.input_kind())
                };
                let (model, log) = cnn_train(ccfg, &tr, &va, &c.recipe, seed)?;
                log::info!("{author}: CNN trained for {} epochs", log.epochs_run());
                Ok(Verifier::Cnn(model))
            }
            Featurizer::Svm(f) => {
                let tx = f.transform_all(train)?;
                let ty: Vec<bool> = train.iter().map(|c| c.is_positive_for(author)).collect();
                let vx = f.transform_all(val)?;
                let vy: Vec<bool> = val.iter().map(|c| c.is_positive_for(author)).collect();
                let trained = svm_train(&tx, &ty, &vx, &vy, &cfg.svm_grid, &cfg.smo)?;
                Ok(Verifier::Svm(trained.model))
            }
        }
    }

    /// Positive-class decisions for `chunks`.
    pub fn predict(&self, model: &Verifier, chunks: &[&Chunk], author: &str) -> Result<Vec<bool>> {
        match (self, model) {
            (Featurizer::Cnn(enc), Verifier::Cnn(m)) => {
                let ex = enc.encode_for(chunks, author)?;
                Ok(m.predict_all(&ex)?.into_iter().map(|(_, y)| y).collect())
            }
            (Featurizer::Svm(f), Verifier::Svm(m)) => m.predict_all(&f.transform_all(chunks)?),
            _ => Err(Error::InvalidArgument("featurizer and verifier of different kinds".into())),
        }
    }
}

/// Order-sensitive hash of the chunks an arm was evaluated on.
pub fn chunk_set_hash(chunks: &[&Chunk]) -> u64 {
    let mut s = String::new();
    for c in chunks {
        s.push_str(&c.id);
        s.push('\u{1f}');
        s.push_str(&c.text());
        s.push('\u{1e}');
    }
    fnv1a(s.as_bytes())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmResult {
    pub confusion: Confusion,
    pub f1: f64,
    pub k: f64,
    /// Share of forged probe chunks accepted as the author's.
    pub probe_fpr: Option<f64>,
    pub test_hash: u64,
    pub n_train: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundResult {
    pub author: String,
    pub baseline: ArmResult,
    pub augmented: ArmResult,
    pub mcnemar: McNemar,
    pub n_forgeries: usize,
}

impl RoundResult {
    pub fn significant(&self) -> bool {
        self.mcnemar.p_value < 0.05
    }
}

fn evaluate_arm(
    feat: &Featurizer,
    model: &Verifier,
    author: &str,
    test: &[&Chunk],
    probe: Option<&[Chunk]>,
    n_train: usize,
) -> Result<(ArmResult, Vec<bool>)> {
    let truth: Vec<bool> = test.iter().map(|c| c.is_positive_for(author)).collect();
    let pred = feat.predict(model, test, author)?;
    let confusion = Confusion::from_predictions(&pred, &truth)?;
    let probe_fpr = match probe {
        Some(p) if !p.is_empty() => {
            let refs: Vec<&Chunk> = p.iter().collect();
            let hits = feat.predict(model, &refs, author)?.into_iter().filter(|&y| y).count();
            Some(hits as f64 / p.len() as f64)
        }
        _ => None,
    };
    let correct = pred.iter().zip(&truth).map(|(p, t)| p == t).collect();
    Ok((
        ArmResult {
            confusion,
            f1: f1(confusion),
            k: k_metric(confusion)?,
            probe_fpr,
            test_hash: chunk_set_hash(test),
            n_train,
        },
        correct,
    ))
}

/// Trains and evaluates both arms for `author`. Both verifiers start from
/// the same seed, so they differ only in the added forgeries.
pub fn run_round(dataset: &Dataset, author: &str, shared: &Shared, cfg: &ExperimentConfig) -> Result<RoundResult> {
    cfg.validate()?;
    if !dataset.authors.contains(author) {
        return Err(Error::UnknownAuthor(author.to_string()));
    }
    let real = |split| -> Vec<&Chunk> {
        dataset
            .split(split)
            .filter(|c| c.origin == crate::corpus::Origin::Real)
            .collect()
    };
    let (train, val, test) = (real(Split::Train), real(Split::Validation), real(Split::Test));
    let probe = match &cfg.probe {
        Some(t) => Some(ingest_generated(&path_for(t, author), author)?),
        None => None,
    };
    let fakes = forgeries(dataset, author, shared, cfg)?;
    let feat = Featurizer::fit(&train, author, shared, cfg)?;
    let seed = round_seed(cfg.seed, author, "classifier");

    let base_model = feat.train(&train, &val, author, cfg, seed)?;
    let (baseline, base_correct) = evaluate_arm(&feat, &base_model, author, &test, probe.as_deref(), train.len())?;

    let mut aug_train = train.clone();
    aug_train.extend(fakes.iter());
    let aug_model = feat.train(&aug_train, &val, author, cfg, seed)?;
    let (augmented, aug_correct) = evaluate_arm(&feat, &aug_model, author, &test, probe.as_deref(), aug_train.len())?;

    Ok(RoundResult {
        author: author.to_string(),
        mcnemar: mcnemar(&base_correct, &aug_correct)?,
        baseline,
        augmented,
        n_forgeries: fakes.len(),
    })
}

/// One round per author, run in parallel and reported in author order.
pub fn run_experiment(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    if dataset.authors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "an experiment needs at least 2 authors, found {}",
            dataset.authors.len()
        )));
    }
    let shared = Shared::build(dataset, cfg)?;
    let authors = dataset.author_list();
    let rounds = authors
        .par_iter()
        .map(|a| {
            log::info!("round {a}: start");
            run_round(dataset, a, &shared, cfg).map_err(|e| Error::Round {
                author: a.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report::from_rounds(rounds))
}

/// Writes `report.tsv`, `config.cfg`, `manifest.txt` and, with a probe,
/// `probe.tsv` under `out_dir`.
pub fn write_outputs(out_dir: &Path, report: &Report, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, body: String| {
        let p = out_dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    write("report.tsv", report.to_tsv())?;
    write("config.cfg", cfg.to_text())?;
    write("manifest.txt", report.manifest(cfg))?;
    if let Some(p) = report.probe_tsv() {
        write("probe.tsv", p)?;
    }
    Ok(())
}
