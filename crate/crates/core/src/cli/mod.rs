//! The `repengine` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 ingestion or transport, 3 training or
//! validation, 4 scoring or export. Data goes to `--out` (written atomically)
//! or stdout; diagnostics go to stderr.

mod bundle;

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

pub use bundle::{
    reachable_embeddings, BundleError, BundledContext, ModelBundle, ScoringParts, TrainingMeta,
    BUNDLE_FORMAT_VERSION,
};

use crate::annotation::{
    aggregate_annotations, dataset_stats, load_annotations, write_annotations, LabeledPost,
    DEFAULT_MIN_AGREEMENT,
};
use crate::corpus::{
    fetch_live, load_corpus, Corpus, FetchConfig, ListingTab, ThreadSleeper, TranscriptTransport,
    Transport, UreqTransport, WotTable, BEARER_TOKEN_ENV,
};
use crate::embeddings::{export_vectors, post_vector, EmbeddingStore, VectorOptions};
use crate::ensemble::{score_post, CombinerMode, ScoringContext, DEFAULT_THRESHOLD};
use crate::evaluation::{cross_validate, CvConfig};
use crate::pipeline::{build_dataset, fit_model, Dataset, PipelineConfig, DEFAULT_INNER_FOLDS};
use crate::svce::ConceptLexicon;
use crate::svm::{SvmParams, DEFAULT_EPOCHS, DEFAULT_LAMBDA};
use crate::synthetic::{synthetic_corpus, synthetic_wot_tsv, SyntheticConfig};
use crate::util::write_atomic;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INGEST: i32 = 2;
pub const EXIT_TRAIN: i32 = 3;
pub const EXIT_SCORE: i32 = 4;

const USER_AGENT: &str = concat!("repengine/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(
    name = "repengine",
    version,
    about = "Credibility scoring for security posts"
)]
pub struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch posts and author profiles into a JSONL corpus.
    Ingest(IngestArgs),
    /// Fit all components and write a model bundle.
    Train(TrainArgs),
    /// Score a corpus with a bundle, one JSON verdict per line.
    Score(ScoreArgs),
    /// Cross-validate the pipeline and write a JSON report.
    Evaluate(EvaluateArgs),
    /// Write post embeddings as CSV.
    ExportVectors(ExportArgs),
    /// Write a synthetic corpus, annotations, embeddings and WOT table.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    subreddits: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "hot")]
    tabs: Vec<ListingTab>,
    /// Submissions per listing.
    #[arg(long, default_value_t = 100)]
    limit: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Serve responses from a recorded JSON transcript instead of the network.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, default_value = "https://oauth.reddit.com")]
    base_url: String,
    /// Reference time for ages; defaults to now.
    #[arg(long)]
    snapshot_utc: Option<i64>,
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// CSV with columns post_id,annotator_id,label.
    #[arg(long)]
    annotations: PathBuf,
    /// word2vec text format.
    #[arg(long)]
    embeddings: PathBuf,
    /// TSV term,category; the bundled lexicon when absent.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// TSV domain,score 0-100; every URL scores the default when absent.
    #[arg(long)]
    wot: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MIN_AGREEMENT)]
    min_agreement: f64,
    /// Scale post vectors to unit length.
    #[arg(long)]
    normalize_vectors: bool,
    /// Disable version and file-name pattern tagging.
    #[arg(long)]
    no_patterns: bool,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Also feed Pe to the SVM as a feature.
    #[arg(long)]
    stacked: bool,
    /// Folds used to produce held-out margins for calibration and weights.
    #[arg(long, default_value_t = DEFAULT_INNER_FOLDS)]
    inner_folds: usize,
}

impl ModelArgs {
    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            svm: SvmParams {
                lambda: self.lambda,
                epochs: self.epochs,
                seed: self.seed,
                ..SvmParams::default()
            },
            threshold: self.threshold,
            mode: if self.stacked {
                CombinerMode::Stacked
            } else {
                CombinerMode::WeightedSum
            },
            inner_folds: self.inner_folds,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out_bundle: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the bundle's decision threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Use every minority-class post and an equal sample of the majority.
    #[arg(long)]
    balanced: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write held-out verdicts as JSONL.
    #[arg(long)]
    verdicts_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fill the label column from these annotations.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MIN_AGREEMENT)]
    min_agreement: f64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    posts: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();

    let (code, result) = match cli.command {
        Command::Ingest(a) => (EXIT_INGEST, cmd_ingest(a)),
        Command::Train(a) => (EXIT_TRAIN, cmd_train(a)),
        Command::Score(a) => (EXIT_SCORE, cmd_score(a)),
        Command::Evaluate(a) => (EXIT_TRAIN, cmd_evaluate(a)),
        Command::ExportVectors(a) => (EXIT_SCORE, cmd_export_vectors(a)),
        Command::Synth(a) => (EXIT_TRAIN, cmd_synth(a)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            code
        }
    }
}

/// The error chain joined by ": ", skipping causes already quoted by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(bytes).and_then(|()| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn read_corpus_file(path: &Path) -> anyhow::Result<Corpus> {
    load_corpus(path).with_context(|| format!("corpus {}", path.display()))
}

fn cmd_ingest(a: IngestArgs) -> anyhow::Result<()> {
    let transport: Box<dyn Transport> = match &a.replay {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading transcript {}", p.display()))?;
            Box::new(TranscriptTransport::from_json(&text).context("parsing transcript")?)
        }
        None => {
            let token = std::env::var(BEARER_TOKEN_ENV).unwrap_or_default();
            if token.trim().is_empty() {
                bail!("{BEARER_TOKEN_ENV} is not set");
            }
            Box::new(UreqTransport::new(
                Some(token.trim().to_string()),
                USER_AGENT,
            ))
        }
    };
    let config = FetchConfig {
        base_url: a.base_url.trim_end_matches('/').to_string(),
        snapshot_utc: a.snapshot_utc,
        ..FetchConfig::default()
    };
    let corpus = fetch_live(
        &a.subreddits,
        &a.tabs,
        a.limit,
        transport.as_ref(),
        &ThreadSleeper,
        &config,
    )?;
    log::info!(
        "fetched {} posts by {} authors",
        corpus.len(),
        corpus.authors.len()
    );
    emit(a.out.as_deref(), corpus.to_jsonl().as_bytes())
}

struct Inputs {
    corpus: Corpus,
    labeled: Vec<LabeledPost>,
    lexicon: ConceptLexicon,
    store: EmbeddingStore,
    wot: WotTable,
    vectors: VectorOptions,
}

impl Inputs {
    fn load(a: &InputArgs) -> anyhow::Result<Self> {
        let corpus = read_corpus_file(&a.corpus)?;
        let records = load_annotations(&a.annotations)
            .with_context(|| format!("annotations {}", a.annotations.display()))?;
        let agg = aggregate_annotations(&records, a.min_agreement)?;
        let stats = dataset_stats(&agg.kept);
        log::info!(
            "{} credible and {} non-credible posts kept, {} dropped",
            stats.credible,
            stats.non_credible,
            agg.dropped.len()
        );
        let store = EmbeddingStore::load(&a.embeddings)
            .with_context(|| format!("embeddings {}", a.embeddings.display()))?;
        let lexicon = match &a.lexicon {
            Some(p) => {
                ConceptLexicon::load(p).with_context(|| format!("lexicon {}", p.display()))?
            }
            None => ConceptLexicon::builtin(),
        }
        .with_patterns(!a.no_patterns);
        let wot = match &a.wot {
            Some(p) => WotTable::load(p).with_context(|| format!("WOT table {}", p.display()))?,
            None => WotTable::default(),
        };
        Ok(Inputs {
            corpus,
            labeled: agg.kept,
            lexicon,
            store,
            wot,
            vectors: VectorOptions {
                normalize: a.normalize_vectors,
            },
        })
    }

    fn dataset(&self) -> anyhow::Result<Dataset> {
        Ok(build_dataset(
            &self.corpus,
            &self.labeled,
            &self.lexicon,
            &self.store,
            &self.wot,
            self.vectors,
        )?)
    }
}

/// Fits on every labeled post and assembles the bundle.
fn train_bundle(
    inputs: &Inputs,
    args: &ModelArgs,
    min_agreement: f64,
) -> anyhow::Result<ModelBundle> {
    let dataset = inputs.dataset()?;
    let config = args.pipeline();
    let examples: Vec<_> = dataset.examples.iter().collect();
    let model = fit_model(&examples, &config)?;
    let n_credible = dataset.labels().iter().filter(|l| l.is_credible()).count();
    let meta = TrainingMeta {
        seed: args.seed,
        lambda: args.lambda,
        epochs: args.epochs,
        inner_folds: args.inner_folds,
        min_agreement,
        n_credible,
        n_non_credible: dataset.len() - n_credible,
    };
    Ok(ModelBundle::new(
        model,
        &inputs.lexicon,
        &inputs.store,
        &inputs.wot,
        inputs.vectors,
        inputs.corpus.snapshot_utc,
        meta,
    )?)
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let inputs = Inputs::load(&a.inputs)?;
    let bundle = train_bundle(&inputs, &a.model, a.inputs.min_agreement)?;
    log::info!(
        "weights We {} Ws {}, threshold {}",
        bundle.model.weights.we,
        bundle.model.weights.ws,
        bundle.model.threshold
    );
    emit(Some(&a.out_bundle), bundle.to_json().as_bytes())
}

fn load_bundle(path: &Path) -> anyhow::Result<ModelBundle> {
    ModelBundle::load(path).with_context(|| format!("bundle {}", path.display()))
}

fn cmd_score(a: ScoreArgs) -> anyhow::Result<()> {
    let bundle = load_bundle(&a.bundle)?;
    let corpus = read_corpus_file(&a.corpus)?;
    let parts = bundle.scoring_parts()?;
    let mut model = bundle.model;
    if let Some(t) = a.threshold {
        model = model.with_threshold(t)?;
    }
    let ctx = ScoringContext {
        lexicon: &parts.lexicon,
        store: &parts.store,
        wot: &parts.wot,
        snapshot_utc: corpus.snapshot_utc,
        vectors: parts.vectors,
    };
    let mut out = Vec::new();
    for post in &corpus.posts {
        let author = corpus
            .author_of(post)
            .with_context(|| format!("post {} has no author", post.id))?;
        let v = score_post(post, author, &model, &ctx)
            .with_context(|| format!("scoring post {}", post.id))?;
        serde_json::to_writer(&mut out, &v)?;
        out.push(b'\n');
    }
    emit(a.out.as_deref(), &out)
}

fn cmd_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let inputs = Inputs::load(&a.inputs)?;
    let dataset = inputs.dataset()?;
    let config = CvConfig {
        k: a.k,
        seed: a.model.seed,
        balanced: a.balanced,
        pipeline: a.model.pipeline(),
    };
    let report = cross_validate(&dataset, &config)?;
    log::info!(
        "pooled accuracy: ensemble {:.4}, embedding {:.4}, svm {:.4}",
        report.ensemble.metrics.accuracy,
        report.embedding.metrics.accuracy,
        report.svm.metrics.accuracy
    );
    if let Some(p) = &a.verdicts_out {
        let mut buf = Vec::new();
        for pred in &report.predictions {
            serde_json::to_writer(&mut buf, pred)?;
            buf.push(b'\n');
        }
        emit(Some(p), &buf)?;
    }
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    emit(a.out.as_deref(), json.as_bytes())
}

fn cmd_export_vectors(a: ExportArgs) -> anyhow::Result<()> {
    let bundle = load_bundle(&a.bundle)?;
    let corpus = read_corpus_file(&a.corpus)?;
    let parts = bundle.scoring_parts()?;
    let labels: Option<HashMap<String, crate::Label>> = match &a.annotations {
        Some(p) => {
            let records =
                load_annotations(p).with_context(|| format!("annotations {}", p.display()))?;
            let agg = aggregate_annotations(&records, a.min_agreement)?;
            Some(agg.kept.into_iter().map(|l| (l.post_id, l.label)).collect())
        }
        None => None,
    };
    let embeddings: Vec<_> = corpus
        .posts
        .iter()
        .map(|p| post_vector(p, &parts.lexicon, &parts.store, parts.vectors))
        .collect();
    let mut buf = Vec::new();
    export_vectors(&mut buf, bundle.embedding_dim, &embeddings, labels.as_ref())?;
    emit(a.out.as_deref(), &buf)
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<()> {
    let data = synthetic_corpus(&SyntheticConfig {
        n_posts: a.posts,
        seed: a.seed,
        ..SyntheticConfig::default()
    })?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut ann = Vec::new();
    write_annotations(&data.annotations, &mut ann)?;
    let mut emb = Vec::new();
    data.store.write(&mut emb)?;
    emit(
        Some(&a.out_dir.join("corpus.jsonl")),
        data.corpus.to_jsonl().as_bytes(),
    )?;
    emit(Some(&a.out_dir.join("annotations.csv")), &ann)?;
    emit(Some(&a.out_dir.join("embeddings.txt")), &emb)?;
    emit(
        Some(&a.out_dir.join("wot.tsv")),
        synthetic_wot_tsv().as_bytes(),
    )
}
