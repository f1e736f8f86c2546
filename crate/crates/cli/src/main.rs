use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use coref_core::analysis::{
    bucket_csv, bucket_report, error_report, parse_error_annotations, segment_length_sweep, sweep_csv, LengthUnit,
};
use coref_core::checkpoint::{self, Checkpoint};
use coref_core::config::AppConfig;
use coref_core::corpus::{self, parse_conll, parse_gap, snippet_document, Document, SubwordVocabulary};
use coref_core::eval::{gap_resolve, gap_score, DocumentCounts, GapDecision, MetricReport, Partition};
use coref_core::model::CorefModel;
use coref_core::segment::Variant;
use coref_core::train::{gradient_check, train, GradCheckOptions};
use coref_core::Error;

/// Whole words seen fewer times than this in the training data are left to
/// character pieces.
const VOCAB_MIN_COUNT: usize = 2;

const DEFAULT_LENGTHS: [usize; 5] = [128, 256, 384, 450, 512];

#[derive(Parser)]
#[command(name = "coref", version, about = "Span-ranking coreference resolution and analysis tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    max_segment_len: Option<usize>,
}

#[derive(Args)]
struct Predictions {
    /// Trained checkpoint used to predict clusters.
    #[arg(long, conflicts_with = "pred", required_unless_present = "pred")]
    model: Option<PathBuf>,
    /// CoNLL file holding predicted clusters.
    #[arg(long)]
    pred: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the configured training set and write a checkpoint.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
        /// Per-step loss log (tab-separated).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score predicted clusters against a gold CoNLL file.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[command(flatten)]
        predictions: Predictions,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the scores as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score pronoun resolution on a GAP file, split by gender.
    ScoreGap {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train and score one model per segment length.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated segment lengths.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LENGTHS)]
        lengths: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scores and cluster spread by document length.
    Buckets {
        #[arg(long)]
        gold: PathBuf,
        #[command(flatten)]
        predictions: Predictions,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Length unit, `tokens` or `word-pieces`.
        #[arg(long)]
        unit: Option<LengthUnit>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count annotated cluster-level errors per category and system.
    Errors {
        /// Tab-separated annotations: doc_key, cluster_id, categories, system.
        annotations: PathBuf,
        /// Comma-separated systems; defaults to those in the file.
        #[arg(long, value_delimiter = ',')]
        systems: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences on one document.
    Gradcheck {
        #[command(flatten)]
        overrides: Overrides,
        /// CoNLL file; its first document is used unless `--doc` is given.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        doc: Option<String>,
        /// Checkpoint to check instead of a freshly initialized model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Split the tokens of a CoNLL file into word pieces.
    Tokenize {
        #[arg(long)]
        gold: PathBuf,
        /// Take the vocabulary from this checkpoint.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// An error with its exit code: 1 for bad input, 2 for runtime failures.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_validation() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Outcome<AppConfig> {
    Ok(match path {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    })
}

fn apply(overrides: &Overrides) -> Outcome<AppConfig> {
    let mut config = load_config(overrides.config.as_deref())?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(v) = overrides.variant {
        config.segmentation.variant = v;
    }
    if let Some(t) = overrides.max_segment_len {
        config.segmentation.max_segment_len = t;
    }
    Ok(config)
}

fn read_conll(path: &Path) -> Outcome<Vec<Document>> {
    parse_conll(&read(path)?).map_err(|e| Failure::from(e).prefixed(path))
}

impl Failure {
    fn prefixed(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

fn data_path<'a>(path: &'a Option<PathBuf>, key: &str) -> Outcome<&'a Path> {
    path.as_deref().ok_or_else(|| Failure::usage(format!("the configuration sets no `data.{key}` file")))
}

/// The configured vocabulary file, or one built from `docs`.
fn vocabulary(config: &AppConfig, docs: &[Document]) -> Outcome<SubwordVocabulary> {
    match &config.data.vocab {
        Some(p) => Ok(SubwordVocabulary::parse(&read(p)?).map_err(|e| Failure::from(e).prefixed(p))?),
        None => Ok(SubwordVocabulary::covering(
            docs.iter().flat_map(|d| d.tokens.iter().map(|t| t.surface.as_str())),
            VOCAB_MIN_COUNT,
        )),
    }
}

fn tokenize_all(docs: &mut [Document], vocab: &SubwordVocabulary) {
    for d in docs {
        d.tokenize(vocab);
    }
}

fn load_checkpoint(path: &Path) -> Outcome<(CorefModel, SubwordVocabulary)> {
    let Checkpoint { model, vocabulary } = checkpoint::load(path).map_err(|e| Failure::from(e).prefixed(path))?;
    let vocab = vocabulary.ok_or_else(|| Failure::usage(format!("{}: checkpoint carries no vocabulary", path.display())))?;
    Ok((model, vocab))
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Gold documents (tokenized when a model is used) with the predicted
/// partition for each.
fn gold_and_predicted(gold: &Path, predictions: &Predictions) -> Outcome<(Vec<Document>, Vec<Partition>)> {
    let mut docs = read_conll(gold)?;
    let predicted = if let Some(model_path) = &predictions.model {
        let (model, vocab) = load_checkpoint(model_path)?;
        tokenize_all(&mut docs, &vocab);
        docs.iter()
            .map(|d| Ok(Partition::new(model.predict_clusters(d)?)?))
            .collect::<Outcome<Vec<_>>>()?
    } else {
        let path = predictions.pred.as_deref().expect("clap requires --model or --pred");
        let mut by_key: HashMap<String, Document> = read_conll(path)?.into_iter().map(|d| (d.doc_key.clone(), d)).collect();
        docs.iter()
            .map(|g| {
                let p = by_key
                    .remove(&g.doc_key)
                    .ok_or_else(|| Failure::usage(format!("{}: no document `{}`", path.display(), g.doc_key)))?;
                if p.num_tokens() != g.num_tokens() {
                    return Err(Failure::usage(format!(
                        "document `{}` has {} gold tokens but {} predicted",
                        g.doc_key,
                        g.num_tokens(),
                        p.num_tokens()
                    )));
                }
                Ok(Partition::new(p.gold_clusters)?)
            })
            .collect::<Outcome<Vec<_>>>()?
    };
    Ok((docs, predicted))
}

fn gold_partitions(docs: &[Document]) -> Outcome<Vec<Partition>> {
    Ok(docs.iter().map(|d| Partition::new(d.gold_clusters.clone())).collect::<Result<_, _>>()?)
}

fn run_train(overrides: &Overrides, out: &Path, log_path: Option<&Path>) -> Outcome {
    let config = apply(overrides)?;
    let mut docs = read_conll(data_path(&config.data.train, "train")?)?;
    let vocab = vocabulary(&config, &docs)?;
    tokenize_all(&mut docs, &vocab);
    let train_config = config.train_config();
    let mut model = CorefModel::new(config.model_config(vocab.len())?, config.seed)?;
    log::info!("training on {} documents, {} parameters", docs.len(), model.params.num_scalars());
    let mut log_file = match log_path {
        Some(p) => Some(fs::File::create(p)?),
        None => None,
    };
    let history = train(&docs, &mut model, &train_config, log_file.as_mut().map(|f| f as &mut dyn Write))?;
    checkpoint::save(out, &model, Some(&vocab))?;
    let last = history.last().map_or(f64::NAN, |r| r.loss);
    println!("{} steps, final loss {last:.6}, checkpoint {}", history.len(), out.display());
    Ok(())
}

fn run_evaluate(gold: &Path, predictions: &Predictions, config: Option<&Path>, out: Option<&Path>) -> Outcome {
    let config = load_config(config)?;
    let (docs, predicted) = gold_and_predicted(gold, predictions)?;
    let pairs: Vec<_> = gold_partitions(&docs)?.into_iter().zip(predicted).collect();
    let report = MetricReport::evaluate(&pairs, config.eval.aggregation);
    print!("{}", report.table());
    if let Some(p) = out {
        emit(Some(p), &report.csv())?;
    }
    Ok(())
}

fn run_score_gap(gold: &Path, model_path: &Path, config: Option<&Path>) -> Outcome {
    let config = load_config(config)?;
    let examples = parse_gap(&read(gold)?).map_err(|e| Failure::from(e).prefixed(gold))?;
    let (model, vocab) = load_checkpoint(model_path)?;
    let decisions = examples
        .iter()
        .map(|ex| {
            let mut snippet = snippet_document(ex);
            snippet.document.tokenize(&vocab);
            let predicted = Partition::new(model.predict_clusters(&snippet.document)?)?;
            Ok(GapDecision::new(ex, gap_resolve(ex, &snippet, &predicted, config.eval.gap_match)))
        })
        .collect::<Outcome<Vec<_>>>()?;
    let r = gap_score(&decisions);
    println!("examples\tM\tF\tB\tO");
    println!(
        "{}\t{:.1}\t{:.1}\t{:.2}\t{:.1}",
        examples.len(),
        100.0 * r.masculine,
        100.0 * r.feminine,
        r.bias,
        100.0 * r.overall
    );
    Ok(())
}

fn run_sweep(overrides: &Overrides, lengths: &[usize], out: Option<&Path>) -> Outcome {
    let config = apply(overrides)?;
    let mut train_docs = read_conll(data_path(&config.data.train, "train")?)?;
    let mut dev_docs = read_conll(data_path(&config.data.dev, "dev")?)?;
    let vocab = vocabulary(&config, &train_docs)?;
    tokenize_all(&mut train_docs, &vocab);
    tokenize_all(&mut dev_docs, &vocab);
    let template = config.model_config(vocab.len())?;
    log::info!("sweeping segment lengths {lengths:?}");
    let rows = segment_length_sweep(&train_docs, &dev_docs, &template, &config.train_config(), config.seed, lengths)?;
    emit(out, &sweep_csv(&rows))
}

fn run_buckets(
    gold: &Path,
    predictions: &Predictions,
    config: Option<&Path>,
    unit: Option<LengthUnit>,
    out: Option<&Path>,
) -> Outcome {
    let config = load_config(config)?;
    let unit = unit.unwrap_or(config.eval.length_unit);
    let (docs, predicted) = gold_and_predicted(gold, predictions)?;
    if unit == LengthUnit::WordPieces && predictions.model.is_none() {
        return Err(Failure::usage("word-piece lengths need --model for its vocabulary"));
    }
    let counts: Vec<_> = gold_partitions(&docs)?
        .iter()
        .zip(&predicted)
        .map(|(g, p)| DocumentCounts::compute(g, p))
        .collect();
    emit(out, &bucket_csv(&bucket_report(&docs, &counts, unit)?))
}

fn run_errors(path: &Path, systems: &[String], out: Option<&Path>) -> Outcome {
    let annotations = parse_error_annotations(&read(path)?).map_err(|e| Failure::from(e).prefixed(path))?;
    let mut systems = systems.to_vec();
    if systems.is_empty() {
        for a in &annotations {
            if !systems.contains(&a.system) {
                systems.push(a.system.clone());
            }
        }
    }
    emit(out, &error_report(&annotations, &systems).table())
}

fn run_gradcheck(overrides: &Overrides, gold: &Path, key: Option<&str>, model_path: Option<&Path>, tolerance: f64) -> Outcome {
    let mut docs = read_conll(gold)?;
    let (model, vocab) = match model_path {
        Some(p) => load_checkpoint(p)?,
        None => {
            let config = apply(overrides)?;
            let vocab = vocabulary(&config, &docs)?;
            let model = CorefModel::new(config.model_config(vocab.len())?, config.seed)?;
            (model, vocab)
        }
    };
    tokenize_all(&mut docs, &vocab);
    let doc = match key {
        Some(k) => docs.iter().find(|d| d.doc_key == k).ok_or_else(|| Failure::usage(format!("no document `{k}`")))?,
        None => docs.first().ok_or_else(|| Failure::usage(format!("{}: no documents", gold.display())))?,
    };
    let options = GradCheckOptions {
        tolerance,
        ..GradCheckOptions::default()
    };
    let report = gradient_check(&model, doc, options)?;
    print!("{}", report.table());
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<_> = report.failing().iter().map(|c| c.name()).collect();
        Err(Failure::runtime(format!("gradient check failed for {}", names.join(", "))))
    }
}

fn run_tokenize(gold: &Path, model_path: Option<&Path>, config: Option<&Path>, out: Option<&Path>) -> Outcome {
    let docs = read_conll(gold)?;
    let vocab = match model_path {
        Some(p) => load_checkpoint(p)?.1,
        None => vocabulary(&load_config(config)?, &docs)?,
    };
    let mut text = String::new();
    for d in &docs {
        let surfaces: Vec<&str> = d.tokens.iter().map(|t| t.surface.as_str()).collect();
        let tok = corpus::tokenize(&surfaces, &vocab);
        let restored = corpus::detokenize(&tok, &vocab);
        for (i, (surface, range)) in surfaces.iter().zip(&tok.ranges).enumerate() {
            let pieces: Vec<&str> = tok.pieces[range.clone()].iter().map(|&p| vocab.piece(p).unwrap_or("?")).collect();
            text.push_str(&format!("{}\t{i}\t{surface}\t{}\n", d.doc_key, pieces.join(" ")));
            if restored[i] != *surface && tok.pieces[range.clone()] != [vocab.unknown_id()] {
                return Err(Failure::runtime(format!("`{surface}` detokenizes to `{}`", restored[i])));
            }
        }
    }
    emit(out, &text)
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Train { overrides, out, log } => run_train(overrides, out, log.as_deref()),
        Command::Evaluate { gold, predictions, config, out } => run_evaluate(gold, predictions, config.as_deref(), out.as_deref()),
        Command::ScoreGap { gold, model, config } => run_score_gap(gold, model, config.as_deref()),
        Command::Sweep { overrides, lengths, out } => run_sweep(overrides, lengths, out.as_deref()),
        Command::Buckets { gold, predictions, config, unit, out } => {
            run_buckets(gold, predictions, config.as_deref(), *unit, out.as_deref())
        }
        Command::Errors { annotations, systems, out } => run_errors(annotations, systems, out.as_deref()),
        Command::Gradcheck { overrides, gold, doc, model, tolerance } => {
            run_gradcheck(overrides, gold, doc.as_deref(), model.as_deref(), *tolerance)
        }
        Command::Tokenize { gold, model, config, out } => run_tokenize(gold, model.as_deref(), config.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
