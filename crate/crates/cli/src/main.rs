use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use avforge::classifiers::{CnnModel, SvmModel};
use avforge::corpus::{
    filter_and_split, ingest_generated, make_synthetic_corpus, read_documents, write_generated, Chunk, Dataset,
    Split, SplitRatios,
};
use avforge::evaluation::{f1, k_metric, read_hidden_tsv, tsne, write_hidden_tsv, write_tsne_tsv, Confusion, PointLabel, TsneConfig};
use avforge::generators::{augment_n, Arch, Encoding, GeneratorModel};
use avforge::harness::{
    round_seed, run_experiment, train_generator, write_outputs, ClassifierKind, ExperimentConfig,
    Featurizer, GeneratorKind, Shared, Training, Verifier,
};
use avforge::tensor::Checkpoint;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avforge", version, about = "Authorship verification with generated forgeries")]
struct Cli {
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk, filter and split a corpus, or synthesize one; writes `dataset.jsonl`.
    Prepare {
        /// JSON lines with `id`, `text`, `author` and an optional `split`.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        input: Option<PathBuf>,
        /// `AUTHORSxCHUNKS`, e.g. `5x100`.
        #[arg(long)]
        synthetic: Option<String>,
    },
    /// Trains a generator on one author and saves its checkpoint.
    TrainGenerator {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        author: String,
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long)]
        encoding: Option<Encoding>,
        /// `lmtr` or `gantr`.
        #[arg(long)]
        training: Option<String>,
    },
    /// Writes forgeries of an author as `{"text": ...}` lines.
    Augment {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        author: String,
        /// Generator checkpoint from `train-generator`.
        #[arg(long)]
        generator: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Trains one verifier, optionally with forgeries as extra negatives.
    TrainClassifier {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        author: String,
        /// `{"text": ...}` lines added as negatives.
        #[arg(long)]
        forgeries: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<String>,
    },
    /// Runs every author's round and writes the report.
    Run {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Dumps the CNN's hidden representation of chunks as TSV.
    ExportHidden {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        author: String,
        /// CNN checkpoint from `train-classifier`.
        #[arg(long)]
        model: PathBuf,
        /// `train`, `validation`, `test` or `all`.
        #[arg(long, default_value = "test")]
        split: String,
        /// Extra `{"text": ...}` lines to embed, e.g. forgeries.
        #[arg(long)]
        forgeries: Option<PathBuf>,
    },
    /// Maps an exported hidden TSV to 2-D with t-SNE.
    Tsne {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },
}

struct Ctx {
    cfg: ExperimentConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn dataset_path(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.cfg.dataset.clone())
            .unwrap_or_else(|| self.out_dir.join("dataset.jsonl"))
    }

    fn dataset(&mut self, flag: Option<PathBuf>) -> anyhow::Result<Dataset> {
        let path = self.dataset_path(flag);
        let ds = Dataset::load(&path, self.cfg.seed)?;
        self.cfg.dataset = Some(path);
        Ok(ds)
    }

    fn out(&self, name: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(self.out_dir.join(name))
    }
}

fn parse_synthetic(spec: &str) -> anyhow::Result<(usize, usize)> {
    let (a, c) = spec
        .split_once(['x', 'X'])
        .with_context(|| format!("--synthetic expects AUTHORSxCHUNKS, got `{spec}`"))?;
    Ok((a.trim().parse()?, c.trim().parse()?))
}

fn real_split<'a>(ds: &'a Dataset, split: Split) -> Vec<&'a Chunk> {
    ds.split(split).filter(|c| c.origin == avforge::corpus::Origin::Real).collect()
}

fn check_author(ds: &Dataset, author: &str) -> anyhow::Result<()> {
    if !ds.authors.contains(author) {
        return Err(avforge::Error::UnknownAuthor(author.to_string()).into());
    }
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut ctx = Ctx {
        cfg,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Prepare { input, synthetic } => {
            let ds = match (input, synthetic) {
                (Some(path), _) => filter_and_split(&read_documents(&path)?, SplitRatios::default(), ctx.cfg.seed)?,
                (None, Some(spec)) => {
                    let (a, c) = parse_synthetic(&spec)?;
                    make_synthetic_corpus(a, c, ctx.cfg.seed)?
                }
                (None, None) => bail!("give --input or --synthetic"),
            };
            let path = ctx.out("dataset.jsonl")?;
            ds.save(&path)?;
            println!(
                "{}: {} chunks, {} authors ({} train / {} validation / {} test)",
                path.display(),
                ds.chunks.len(),
                ds.authors.len(),
                ds.count(Split::Train),
                ds.count(Split::Validation),
                ds.count(Split::Test)
            );
        }
        Command::TrainGenerator {
            dataset,
            author,
            arch,
            encoding,
            training,
        } => {
            if let Some(a) = arch {
                ctx.cfg.generator = GeneratorKind::Internal(a);
            }
            if let Some(e) = encoding {
                ctx.cfg.encoding = e;
            }
            if let Some(t) = training {
                ctx.cfg.training = t.parse::<Training>()?;
            }
            ctx.cfg.validate()?;
            let ds = ctx.dataset(dataset)?;
            check_author(&ds, &author)?;
            let shared = Shared::build(&ds, &ctx.cfg)?;
            let model = train_generator(&ds, &author, &shared, &ctx.cfg)?;
            let path = ctx.out(&format!("generator-{author}.json"))?;
            model.to_checkpoint(ctx.cfg.seed, 0).save(&path)?;
            println!("{}", path.display());
        }
        Command::Augment {
            dataset,
            author,
            generator,
            count,
        } => {
            let ds = ctx.dataset(dataset)?;
            let model = GeneratorModel::from_checkpoint(&Checkpoint::load(&generator)?)?;
            if model.config.encoding == Encoding::Emb {
                bail!("embedding-mode forgeries have no text to write; use `run` instead");
            }
            let shared = Shared::build(&ds, &ctx.cfg)?;
            if model.vocab_hash != shared.vocab.fingerprint() {
                bail!("{} was trained on a different vocabulary", generator.display());
            }
            let chunks = augment_n(
                &ds,
                &author,
                &model,
                &shared.vocab,
                None,
                &ctx.cfg.sample,
                round_seed(ctx.cfg.seed, &author, "augment"),
                count.or(ctx.cfg.augment_count),
            )?;
            let texts: Vec<String> = chunks.iter().map(Chunk::text).collect();
            let path = ctx.out(&format!("forgeries-{author}.jsonl"))?;
            write_generated(&path, &texts)?;
            println!("{}: {} forgeries", path.display(), texts.len());
        }
        Command::TrainClassifier {
            dataset,
            author,
            forgeries: extra,
            classifier,
        } => {
            if let Some(c) = classifier {
                ctx.cfg.classifier = c.parse::<ClassifierKind>()?;
            }
            if extra.is_some() {
                ctx.cfg.generator = GeneratorKind::Ingested;
                ctx.cfg.ingested = Some("{author}".into());
            }
            ctx.cfg.validate()?;
            let ds = ctx.dataset(dataset)?;
            check_author(&ds, &author)?;
            let shared = Shared::build(&ds, &ctx.cfg)?;
            let train = real_split(&ds, Split::Train);
            let fakes = match &extra {
                Some(p) => ingest_generated(p, &author)?,
                None => Vec::new(),
            };
            let feat = Featurizer::fit(&train, &author, &shared, &ctx.cfg)?;
            let mut all = train.clone();
            all.extend(fakes.iter());
            let val = real_split(&ds, Split::Validation);
            let seed = round_seed(ctx.cfg.seed, &author, "classifier");
            let model = feat.train(&all, &val, &author, &ctx.cfg, seed)?;
            let test = real_split(&ds, Split::Test);
            let truth: Vec<bool> = test.iter().map(|c| c.is_positive_for(&author)).collect();
            let c = Confusion::from_predictions(&feat.predict(&model, &test, &author)?, &truth)?;
            println!("test F1 {:.4}  K {:.4}  ({} forgeries)", f1(c), k_metric(c)?, fakes.len());
            let path = match &model {
                Verifier::Cnn(m) => {
                    let p = ctx.out(&format!("classifier-{author}.json"))?;
                    m.save(&p, seed)?;
                    p
                }
                Verifier::Svm(m) => {
                    let p = ctx.out(&format!("classifier-{author}.svm"))?;
                    SvmModel::save(m, &p)?;
                    p
                }
            };
            println!("{}", path.display());
        }
        Command::Run { dataset } => {
            let ds = ctx.dataset(dataset)?;
            let report = run_experiment(&ds, &ctx.cfg)?;
            write_outputs(&ctx.out_dir, &report, &ctx.cfg)?;
            print!("{}", report.to_tsv());
        }
        Command::ExportHidden {
            dataset,
            author,
            model,
            split,
            forgeries: extra,
        } => {
            ctx.cfg.classifier = ClassifierKind::Cnn;
            if extra.is_some() {
                ctx.cfg.generator = GeneratorKind::Ingested;
                ctx.cfg.ingested = Some("{author}".into());
            }
            let ds = ctx.dataset(dataset)?;
            check_author(&ds, &author)?;
            let cnn = CnnModel::load(&model)?;
            let shared = Shared::build(&ds, &ctx.cfg)?;
            let feat = Featurizer::fit(&real_split(&ds, Split::Train), &author, &shared, &ctx.cfg)?;
            let Featurizer::Cnn(enc) = &feat else { unreachable!("CNN featurizer requested") };
            let mut chunks: Vec<&Chunk> = match split.as_str() {
                "all" => ds.chunks.iter().collect(),
                s => {
                    let sp = Split::ALL
                        .into_iter()
                        .find(|x| x.as_str() == s)
                        .with_context(|| format!("unknown split `{s}`"))?;
                    ds.split(sp).collect()
                }
            };
            let fakes = match &extra {
                Some(p) => ingest_generated(p, &author)?,
                None => Vec::new(),
            };
            chunks.extend(fakes.iter());
            let examples = enc.encode_for(&chunks, &author)?;
            let vectors = cnn.hidden_all(&examples)?;
            let labels: Vec<PointLabel> = chunks.iter().map(|c| PointLabel::of(c)).collect();
            let path = ctx.out(&format!("hidden-{author}.tsv"))?;
            write_hidden_tsv(&path, &labels, &vectors)?;
            println!("{}: {} points", path.display(), vectors.len());
        }
        Command::Tsne {
            input,
            perplexity,
            iterations,
        } => {
            let (labels, vectors) = read_hidden_tsv(&input)?;
            let cfg = TsneConfig {
                perplexity,
                iterations,
                seed: ctx.cfg.seed,
                ..TsneConfig::default()
            };
            let res = tsne(&vectors, &cfg)?;
            let path = ctx.out(&tsne_name(&input))?;
            write_tsne_tsv(&path, &labels, &res.coords)?;
            println!("{}: KL {:.4} -> {:.4}", path.display(), res.initial_kl, res.final_kl);
        }
    }
    Ok(())
}

fn tsne_name(input: &Path) -> String {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("points");
    format!("{stem}-tsne.tsv")
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let data = err.chain().any(|e| {
        e.downcast_ref::<avforge::Error>().is_some_and(avforge::Error::is_data_error)
            || e.downcast_ref::<std::io::Error>().is_some()
    });
    if data {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
