//! Command-line front end: ingest reviews, train sentence-aspect and rating
//! models, and apply or evaluate them.

mod config;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use aspectlex::corpus::synth::{
    generate_synthetic, LexiconSpec, SynthConfig, RECOVERY_SUMMARY_ECHO,
};
use aspectlex::corpus::{
    load_corpora_with, load_labels, read_raw_reviews, write_labels, write_review_line,
    LabeledSentence, LoadOptions,
};
use aspectlex::eval::{
    evaluate_ratings, evaluate_segmentation, evaluate_summaries, ranking_eval, ranking_report,
    write_pr_csv,
};
use aspectlex::model::{load_model, save_model};
use aspectlex::rating::{
    load_rating_model, save_rating_model, segment_corpus_for_rating, segment_for_rating,
    train_rating_model,
};
use aspectlex::{
    segment_review_with, summarize_review, top_words, train_semisupervised, train_supervised,
    train_unsupervised, AspectSchema, Corpus, Error, Model, Predictor, SentenceLabel,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{config_hash, Mode, RunConfig};

/// Bad invocation: missing inputs, bad flag values, invalid config.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "aspectlex", version, about = "Aspect segmentation, summarization and rating recovery for multi-aspect reviews")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Number of aspects per review that may go unused.
    #[arg(long, global = true)]
    relax: Option<usize>,
    /// Label each sentence independently, without requiring every aspect.
    #[arg(long, global = true)]
    no_diversity: bool,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[arg(long, global = true, value_enum)]
    predictor: Option<PredictorArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PredictorArg {
    Unsegmented,
    Segmented,
    Joint,
}

impl From<PredictorArg> for Predictor {
    fn from(p: PredictorArg) -> Self {
        match p {
            PredictorArg::Unsegmented => Predictor::Unsegmented,
            PredictorArg::Segmented => Predictor::Segmented,
            PredictorArg::Joint => Predictor::Joint,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tokenize review files into a normalized corpus and vocabulary.
    Ingest(IngestArgs),
    /// Train a sentence-aspect model, or a rating model with --predictor.
    Train(TrainArgs),
    /// Label every sentence with an aspect.
    Segment(ApplyArgs),
    /// Pick one sentence per aspect for every review.
    Summarize(ApplyArgs),
    /// Predict aspect ratings with a rating model.
    Predict(PredictArgs),
    /// Score segmentation, summarization, ranking or rating predictions.
    Evaluate(EvaluateArgs),
    /// Highest-weighted words of an aspect, optionally at a rating.
    Lexicon(LexiconArgs),
    /// Generate a corpus from planted parameters.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Review files (JSON lines).
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Normalized corpus output (JSON lines).
    #[arg(long)]
    #[serde(skip)]
    output: PathBuf,
    /// Vocabulary output (TSV: word, document frequency).
    #[arg(long)]
    #[serde(skip)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    min_df: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Sentence-aspect model that segments reviews for rating training.
    #[arg(long)]
    segmenter: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ApplyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: Vec<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    /// Rating model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    segmenter: Option<PathBuf>,
    #[arg(long)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Task {
    Segmentation,
    Summarization,
    Ranking,
    Rating,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    task: Task,
    /// Sentence-aspect model (segmentation, summarization, ranking).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Rating predictions (JSON lines) for the rating task.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Report output (default: stdout).
    #[arg(long)]
    #[serde(skip)]
    output: Option<PathBuf>,
    /// Precision-recall curves for the ranking task (CSV).
    #[arg(long)]
    #[serde(skip)]
    pr_curve: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct LexiconArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    aspect: String,
    /// Rank sentiment weights at this rating instead of aspect weights.
    #[arg(long)]
    rating: Option<f64>,
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long)]
    #[serde(skip)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    /// Five beer aspects with a hand-written lexicon.
    Beer,
    /// Look, taste and overall with numbered words.
    Numbered,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    reviews: usize,
    #[arg(long, value_enum, default_value_t = Preset::Beer)]
    preset: Preset,
    /// Probability that a review's aspects share one latent rating.
    #[arg(long, default_value_t = 0.0)]
    correlation: f64,
    /// Probability that an overall sentence is a summary written in another
    /// aspect's words (default: 0.5 for numbered, 0 for beer).
    #[arg(long)]
    summary_echo: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    output_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_numerical() => 3,
        _ => 2,
    }
}

/// Resolved configuration plus the command's own arguments; its hash tags
/// every output.
#[derive(Serialize)]
struct Provenance<'a, A: Serialize> {
    command: &'static str,
    config: &'a RunConfig,
    args: &'a A,
}

struct Ctx {
    config: RunConfig,
}

impl Ctx {
    /// Hash of the command, resolved config and arguments. Output
    /// locations are left out so that the same computation written to two
    /// places gives identical files.
    fn hash<A: Serialize>(&self, command: &'static str, args: &A) -> String {
        let mut config = self.config.clone();
        config.output_dir = None;
        config_hash(&Provenance {
            command,
            config: &config,
            args,
        })
    }

    fn options(&self) -> aspectlex::SegmentOptions {
        self.config.train.segment_options()
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker threads")?;
    }
    let mut config = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(usage(format!("config file {} not found", path.display())));
            }
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(relax) = cli.relax {
        config.train.relax = relax;
    }
    if cli.no_diversity {
        config.train.diversity = false;
    }
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    if let Some(p) = cli.predictor {
        config.predictor = Some(p.into());
    }
    let mut ctx = Ctx { config };
    match cli.command {
        Command::Ingest(a) => {
            override_opt(&mut ctx.config.schema, &a.schema);
            if let Some(m) = a.min_df {
                ctx.config.min_df = m;
            }
            ctx.config = ctx.config.finish()?;
            ingest(&ctx, &a)
        }
        Command::Train(a) => {
            override_opt(&mut ctx.config.schema, &a.schema);
            override_vec(&mut ctx.config.corpus, &a.corpus);
            override_opt(&mut ctx.config.labels, &a.labels);
            override_opt(&mut ctx.config.segmenter, &a.segmenter);
            override_opt(&mut ctx.config.output_dir, &a.output_dir);
            ctx.config = ctx.config.finish()?;
            train(&ctx)
        }
        Command::Segment(a) => {
            override_vec(&mut ctx.config.corpus, &a.corpus);
            ctx.config = ctx.config.finish()?;
            segment(&ctx, &a)
        }
        Command::Summarize(a) => {
            override_vec(&mut ctx.config.corpus, &a.corpus);
            ctx.config = ctx.config.finish()?;
            summarize(&ctx, &a)
        }
        Command::Predict(a) => {
            override_vec(&mut ctx.config.corpus, &a.corpus);
            override_opt(&mut ctx.config.segmenter, &a.segmenter);
            ctx.config = ctx.config.finish()?;
            predict(&ctx, &a)
        }
        Command::Evaluate(a) => {
            override_vec(&mut ctx.config.corpus, &a.corpus);
            override_opt(&mut ctx.config.labels, &a.labels);
            override_opt(&mut ctx.config.schema, &a.schema);
            ctx.config = ctx.config.finish()?;
            evaluate(&ctx, &a)
        }
        Command::Lexicon(a) => {
            ctx.config = ctx.config.finish()?;
            lexicon(&ctx, &a)
        }
        Command::Synth(a) => {
            ctx.config = ctx.config.finish()?;
            synth(&ctx, &a)
        }
    }
}

fn override_opt(field: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        field.clone_from(flag);
    }
}

fn override_vec(field: &mut Vec<PathBuf>, flag: &[PathBuf]) {
    if !flag.is_empty() {
        *field = flag.to_vec();
    }
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.exists() {
        return Err(usage(format!("{what} {} not found", path.display())));
    }
    Ok(())
}

fn schema_path(config: &RunConfig) -> anyhow::Result<&Path> {
    let path = config
        .schema
        .as_deref()
        .ok_or_else(|| usage("no schema given (--schema or `schema` in the config)"))?;
    require_file(path, "schema")?;
    Ok(path)
}

fn corpus_paths(config: &RunConfig) -> anyhow::Result<&[PathBuf]> {
    if config.corpus.is_empty() {
        return Err(usage("no corpus given (--corpus or `corpus` in the config)"));
    }
    for p in &config.corpus {
        require_file(p, "corpus")?;
    }
    Ok(&config.corpus)
}

fn load(config: &RunConfig, schema: &AspectSchema, vocabulary: Option<&aspectlex::Vocabulary>) -> anyhow::Result<Corpus> {
    let options = LoadOptions {
        min_df: config.min_df,
        vocabulary: vocabulary.cloned(),
    };
    Ok(load_corpora_with(corpus_paths(config)?, schema, &options)?)
}

fn attach_labels(corpus: &mut Corpus, path: &Path) -> anyhow::Result<()> {
    require_file(path, "label file")?;
    corpus.labels = load_labels(path, &corpus.schema)?;
    corpus.label_grid()?;
    Ok(())
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_segmenter(path: &Path) -> anyhow::Result<Model> {
    require_file(path, "model")?;
    Ok(load_model(path)?)
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> anyhow::Result<()> {
    let schema = AspectSchema::load(schema_path(&ctx.config)?)?;
    for p in &a.inputs {
        require_file(p, "input")?;
    }
    let corpus = load_corpora_with(
        &a.inputs,
        &schema,
        &LoadOptions {
            min_df: ctx.config.min_df,
            vocabulary: None,
        },
    )?;
    let hash = ctx.hash("ingest", a);
    let mut out = open_output(Some(&a.output))?;
    for r in &corpus.reviews {
        write_review_line(&mut out, &schema, r, Some(&hash))?;
    }
    out.flush()?;
    if let Some(path) = &a.vocab {
        let mut out = open_output(Some(path))?;
        writeln!(out, "# config_hash={hash}")?;
        writeln!(out, "word\tdoc_freq")?;
        let v = &corpus.vocabulary;
        for i in 0..v.len() {
            writeln!(out, "{}\t{}", v.word(i), v.doc_freq(i))?;
        }
        out.flush()?;
    }
    log::info!(
        "ingested {} reviews, {} sentences, vocabulary {}",
        corpus.reviews.len(),
        corpus.num_sentences(),
        corpus.vocabulary.len()
    );
    Ok(())
}

fn train(ctx: &Ctx) -> anyhow::Result<()> {
    let config = &ctx.config;
    let out_dir = config
        .output_dir
        .clone()
        .ok_or_else(|| usage("no output directory given (--output-dir or `output_dir`)"))?;
    let hash = ctx.hash("train", &());
    if let Some(predictor) = config.predictor {
        return train_rating(ctx, predictor, &out_dir, &hash);
    }
    let schema = AspectSchema::load(schema_path(config)?)?;
    if config.mode == Mode::Supervised && config.labels.is_none() {
        return Err(usage("supervised training needs a label file (--labels)"));
    }
    let mut corpus = load(config, &schema, None)?;
    match (&config.labels, config.mode) {
        (Some(path), Mode::Semi | Mode::Supervised) => attach_labels(&mut corpus, path)?,
        (Some(_), Mode::Unsupervised) => log::warn!("unsupervised training ignores the label file"),
        (None, Mode::Semi) => log::warn!("no label file; semi-supervised training is unsupervised"),
        _ => {}
    }
    log::info!(
        "training ({:?}) on {} reviews, vocabulary {}",
        config.mode,
        corpus.reviews.len(),
        corpus.vocabulary.len()
    );
    let outcome = match config.mode {
        Mode::Unsupervised => train_unsupervised(&corpus, &config.train)?,
        Mode::Semi => train_semisupervised(&corpus, &config.train)?,
        Mode::Supervised => train_supervised(&corpus, &config.train)?,
    };
    log::info!("objective {:.6} (restart {})", outcome.objective, outcome.restart);
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut model = Model::new(outcome.params, corpus.vocabulary.clone());
    model.config_hash = Some(hash.clone());
    save_model(&model, out_dir.join("model.json"))?;
    outcome
        .log
        .save_csv(out_dir.join("train_log.csv"), Some(&format!("config_hash={hash}")))?;
    write_snapshot(config, &hash, &out_dir)
}

fn write_snapshot(config: &RunConfig, hash: &str, dir: &Path) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Snapshot<'a> {
        config_hash: &'a str,
        config: &'a RunConfig,
    }
    let text = serde_json::to_string_pretty(&Snapshot {
        config_hash: hash,
        config,
    })?;
    std::fs::write(dir.join("config.json"), text + "\n")?;
    Ok(())
}

fn train_rating(ctx: &Ctx, predictor: Predictor, out_dir: &Path, hash: &str) -> anyhow::Result<()> {
    let config = &ctx.config;
    let segmenter = match (&config.segmenter, predictor.needs_segmentation()) {
        (Some(p), _) => Some(load_segmenter(p)?),
        (None, true) => {
            return Err(usage(format!(
                "the {} predictor needs a segmenter model (--segmenter)",
                predictor.name()
            )))
        }
        (None, false) => None,
    };
    let schema = match (&segmenter, &config.schema) {
        (_, Some(_)) => AspectSchema::load(schema_path(config)?)?,
        (Some(m), None) => m.params.schema().clone(),
        (None, None) => return Err(usage("no schema given (--schema or `schema` in the config)")),
    };
    if let Some(m) = &segmenter {
        m.check_schema(&schema)?;
    }
    let corpus = load(config, &schema, segmenter.as_ref().map(|m| &m.vocabulary))?;
    let labels = match &segmenter {
        Some(m) => Some(segment_corpus_for_rating(&m.params, &corpus, ctx.options())?),
        None => None,
    };
    log::info!("training the {} rating predictor on {} reviews", predictor.name(), corpus.reviews.len());
    let mut model = train_rating_model(&corpus, labels.as_deref(), predictor, &config.rating)?;
    model.config_hash = Some(hash.to_string());
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    save_rating_model(&model, out_dir.join("rating_model.json"))?;
    write_snapshot(config, hash, out_dir)
}

fn load_for_model(ctx: &Ctx, model: &Model) -> anyhow::Result<Corpus> {
    load(&ctx.config, model.params.schema(), Some(&model.vocabulary))
}

fn segment(ctx: &Ctx, a: &ApplyArgs) -> anyhow::Result<()> {
    let model = load_segmenter(&a.model)?;
    let corpus = load_for_model(ctx, &model)?;
    let hash = ctx.hash("segment", a);
    let schema = model.params.schema();
    let mut out = open_output(a.output.as_deref())?;
    writeln!(out, "# config_hash={hash}")?;
    writeln!(out, "review_id\tsentence_index\taspect")?;
    let mut failed = 0;
    for review in &corpus.reviews {
        match segment_review_with(&model.params, review, ctx.options()) {
            Ok(labels) => {
                for (s, k) in labels.iter().enumerate() {
                    writeln!(out, "{}\t{s}\t{}", review.review_id, schema.aspect_name(*k))?;
                }
            }
            Err(e) => {
                failed += 1;
                log::warn!("review {}: {e}", review.review_id);
            }
        }
    }
    out.flush()?;
    if failed > 0 {
        log::warn!("{failed} reviews could not be segmented");
    }
    Ok(())
}

fn summarize(ctx: &Ctx, a: &ApplyArgs) -> anyhow::Result<()> {
    let model = load_segmenter(&a.model)?;
    let corpus = load_for_model(ctx, &model)?;
    let hash = ctx.hash("summarize", a);
    let schema = model.params.schema();
    let mut out = open_output(a.output.as_deref())?;
    writeln!(out, "# config_hash={hash}")?;
    writeln!(out, "review_id\taspect\tsentence_index")?;
    for review in &corpus.reviews {
        match summarize_review(&model.params, review) {
            Ok(picks) => {
                for (k, s) in picks.iter().enumerate() {
                    writeln!(out, "{}\t{}\t{s}", review.review_id, schema.aspect_name(k))?;
                }
            }
            Err(e) => log::warn!("review {}: {e}", review.review_id),
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    review_id: &'a str,
    predictor: Predictor,
    ratings: BTreeMap<&'a str, f64>,
    config_hash: &'a str,
}

fn predict(ctx: &Ctx, a: &PredictArgs) -> anyhow::Result<()> {
    require_file(&a.model, "rating model")?;
    let model = load_rating_model(&a.model)?;
    let schema = model.gamma.schema().clone();
    let segmenter = match (&ctx.config.segmenter, model.predictor.needs_segmentation()) {
        (Some(p), true) => {
            let m = load_segmenter(p)?;
            m.check_schema(&schema)?;
            if m.vocabulary != model.vocabulary {
                bail!(Error::DimensionMismatch(
                    "segmenter and rating model use different vocabularies".into()
                ));
            }
            Some(m)
        }
        (None, true) => {
            return Err(usage(format!(
                "the {} predictor needs a segmenter model (--segmenter)",
                model.predictor.name()
            )))
        }
        (_, false) => None,
    };
    let corpus = load(&ctx.config, &schema, Some(&model.vocabulary))?;
    let hash = ctx.hash("predict", a);
    let mut out = open_output(a.output.as_deref())?;
    for review in &corpus.reviews {
        let labels = match &segmenter {
            Some(m) => Some(segment_for_rating(&m.params, review, ctx.options())?),
            None => None,
        };
        let p = match model.predict(review, labels.as_deref()) {
            Ok(p) => p,
            Err(e @ Error::BudgetExceeded { .. }) => return Err(e.into()),
            Err(e) => {
                log::warn!("review {}: {e}", review.review_id);
                continue;
            }
        };
        let line = PredictionLine {
            review_id: &review.review_id,
            predictor: p.predictor,
            ratings: p
                .ratings
                .iter()
                .enumerate()
                .map(|(k, v)| (schema.aspect_name(k), *v))
                .collect(),
            config_hash: &hash,
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn read_predictions(path: &Path, schema: &AspectSchema) -> anyhow::Result<HashMap<String, Vec<f64>>> {
    #[derive(serde::Deserialize)]
    struct Line {
        review_id: String,
        ratings: BTreeMap<String, f64>,
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let mut ratings = vec![f64::NAN; schema.num_aspects()];
        for (name, v) in parsed.ratings {
            let k = schema.aspect_index(&name).ok_or(Error::UnknownAspect(name))?;
            ratings[k] = v;
        }
        if let Some(k) = ratings.iter().position(|v| v.is_nan()) {
            bail!(Error::Parse {
                line: i + 1,
                message: format!("no prediction for aspect `{}`", schema.aspect_name(k)),
            });
        }
        out.insert(parsed.review_id, ratings);
    }
    Ok(out)
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> anyhow::Result<()> {
    let hash = ctx.hash("evaluate", a);
    let task_name = match a.task {
        Task::Segmentation => "segmentation",
        Task::Summarization => "summarization",
        Task::Ranking => "ranking",
        Task::Rating => "rating",
    };
    let mut report = if a.task == Task::Rating {
        let path = a
            .predictions
            .as_deref()
            .ok_or_else(|| usage("the rating task needs --predictions"))?;
        require_file(path, "predictions")?;
        let schema = AspectSchema::load(schema_path(&ctx.config)?)?;
        let corpus = load(&ctx.config, &schema, None)?;
        let predicted = read_predictions(path, &schema)?;
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for r in &corpus.reviews {
            if let Some(p) = predicted.get(&r.review_id) {
                preds.push(p.clone());
                truths.push(r.ratings.clone());
            }
        }
        if preds.is_empty() {
            bail!(Error::NoData("no prediction matches a corpus review".into()));
        }
        evaluate_ratings(task_name, &schema, &preds, &truths)?
    } else {
        let model_path = a
            .model
            .as_deref()
            .ok_or_else(|| usage(format!("the {task_name} task needs --model")))?;
        let model = load_segmenter(model_path)?;
        let mut corpus = load_for_model(ctx, &model)?;
        let labels = ctx
            .config
            .labels
            .as_deref()
            .ok_or_else(|| usage(format!("the {task_name} task needs --labels")))?;
        attach_labels(&mut corpus, labels)?;
        let corpus = labeled_reviews(&corpus)?;
        match a.task {
            Task::Segmentation => {
                let predicted = corpus
                    .reviews
                    .iter()
                    .map(|r| segment_review_with(&model.params, r, ctx.options()))
                    .collect::<aspectlex::Result<Vec<_>>>()?;
                evaluate_segmentation(task_name, &predicted, &corpus)?
            }
            Task::Summarization => {
                let picks: Vec<Option<Vec<usize>>> = corpus
                    .reviews
                    .iter()
                    .map(|r| match summarize_review(&model.params, r) {
                        Ok(p) => Ok(Some(p)),
                        Err(Error::SummaryTooShort { .. }) => Ok(None),
                        Err(e) => Err(e),
                    })
                    .collect::<aspectlex::Result<_>>()?;
                evaluate_summaries(task_name, &picks, &corpus)?
            }
            Task::Ranking => {
                let rankings = ranking_eval(&model.params, &corpus)?;
                if let Some(path) = &a.pr_curve {
                    let mut out = open_output(Some(path))?;
                    writeln!(out, "# config_hash={hash}")?;
                    write_pr_csv(&mut out, &rankings)?;
                    out.flush()?;
                }
                ranking_report(task_name, &rankings)
            }
            Task::Rating => unreachable!(),
        }
    };
    report.config_hash = Some(hash);
    let mut out = open_output(a.output.as_deref())?;
    writeln!(out, "{}", report.to_json()?)?;
    out.flush()?;
    Ok(())
}

/// The reviews with at least one labeled sentence.
fn labeled_reviews(corpus: &Corpus) -> anyhow::Result<Corpus> {
    let grid = corpus.label_grid()?;
    let keep: Vec<usize> = grid
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(Option::is_some))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        bail!(Error::NoData("no label matches a corpus review".into()));
    }
    Ok(corpus.subset(&keep))
}

fn lexicon(ctx: &Ctx, a: &LexiconArgs) -> anyhow::Result<()> {
    let model = load_segmenter(&a.model)?;
    let schema = model.params.schema();
    let k = schema
        .aspect_index(&a.aspect)
        .ok_or_else(|| usage(format!("unknown aspect `{}`", a.aspect)))?;
    let level = match a.rating {
        Some(v) => Some(schema.level_index(k, v).ok_or_else(|| {
            usage(format!("{v} is not a rating level of `{}`", a.aspect))
        })?),
        None => None,
    };
    let words = top_words(&model.params, &model.vocabulary, k, level, a.top)?;
    let hash = ctx.hash("lexicon", a);
    let mut out = open_output(a.output.as_deref())?;
    writeln!(out, "# config_hash={hash}")?;
    writeln!(out, "rank\tword\tweight")?;
    for (i, (w, x)) in words.iter().enumerate() {
        writeln!(out, "{}\t{w}\t{x:.6}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&a.correlation) {
        return Err(usage("--correlation must lie in [0, 1]"));
    }
    let (schema, spec) = match a.preset {
        Preset::Beer => (LexiconSpec::beer_schema(), LexiconSpec::beer()),
        Preset::Numbered => (LexiconSpec::numbered_schema(), LexiconSpec::recovery()),
    };
    let echo = match (a.summary_echo, a.preset) {
        (Some(x), _) => x,
        (None, Preset::Numbered) => RECOVERY_SUMMARY_ECHO,
        (None, Preset::Beer) => 0.0,
    };
    if !(0.0..=1.0).contains(&echo) {
        return Err(usage("--summary-echo must lie in [0, 1]"));
    }
    let planted = spec.build(&schema)?;
    let out = generate_synthetic(
        &planted,
        &SynthConfig {
            n_reviews: a.reviews,
            rating_correlation: a.correlation,
            summary_echo: echo,
            seed: ctx.config.seed,
            ..SynthConfig::default()
        },
    )?;
    let hash = ctx.hash("synth", a);
    let dir = &a.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    schema.save(dir.join("schema.json"))?;
    let mut w = open_output(Some(&dir.join("corpus.jsonl")))?;
    for r in &out.corpus.reviews {
        write_review_line(&mut w, &schema, r, Some(&hash))?;
    }
    w.flush()?;
    let labels: Vec<LabeledSentence> = out
        .corpus
        .reviews
        .iter()
        .zip(&out.assignments)
        .flat_map(|(r, a)| {
            a.iter().enumerate().map(|(s, &k)| LabeledSentence {
                review_id: r.review_id.clone(),
                sentence_index: s,
                label: SentenceLabel::Aspect(k),
            })
        })
        .collect();
    let mut w = open_output(Some(&dir.join("labels.tsv")))?;
    writeln!(w, "# config_hash={hash}")?;
    write_labels(&mut w, &schema, &labels)?;
    w.flush()?;
    let mut planted_model = Model::new(planted.params, planted.vocabulary);
    planted_model.config_hash = Some(hash);
    save_model(&planted_model, dir.join("planted_model.json"))?;
    // reading the corpus back must reproduce it exactly
    debug_assert_eq!(read_raw_reviews(&dir.join("corpus.jsonl"), &schema)?.len(), a.reviews);
    log::info!("wrote {} reviews to {}", a.reviews, dir.display());
    Ok(())
}
