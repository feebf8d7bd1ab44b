use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};

use valuelab::analysis::{
    aggregate_table, context_delta, per_value_delta, prediction_change_rate, qualitative_bundle,
    ResultsStore, RunKey, RunReport,
};
use valuelab::evaluation::{
    compute_metrics, paired_bootstrap, paired_permutation, read_predictions, MetricSelector,
    DEFAULT_BOOTSTRAP_ITERATIONS, DEFAULT_PERMUTATION_ITERATIONS,
};
use valuelab::knowledge::{build_index, load_kb, RemoteEmbedding, SourceType};
use valuelab::runner::{expand_grid, run_and_persist, GridConfig, Retrieval};
use valuelab::{
    load_sentences, split_statistics, BackendFamily, BackendSpec, ContextCondition, ContextKind,
    CorpusFormat, DecodeParams, EmbeddingProvider, ExperimentConfig, HashEmbedding, KbIndex,
    RagMode, SentenceRecord, Split,
};

const ENCODER_ENDPOINT_VAR: &str = "VALUELAB_ENCODER_ENDPOINT";
const LLM_ENDPOINT_VAR: &str = "VALUELAB_LLM_ENDPOINT";
const EMBED_ENDPOINT_VAR: &str = "VALUELAB_EMBED_ENDPOINT";

fn load_corpus(path: &Path, format: Option<CorpusFormat>) -> Result<Vec<SentenceRecord>> {
    let format = format.unwrap_or_else(|| CorpusFormat::from_path(path));
    load_sentences(path, format).with_context(|| format!("loading corpus {}", path.display()))
}

fn write_or_print(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, contents)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{contents}");
            if !contents.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Jsonl,
}

impl From<FormatArg> for CorpusFormat {
    fn from(value: FormatArg) -> CorpusFormat {
        match value {
            FormatArg::Tsv => CorpusFormat::Tsv,
            FormatArg::Jsonl => CorpusFormat::Jsonl,
        }
    }
}

// ---------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------

#[derive(Args)]
pub struct IngestArgs {
    /// Corpus file (TSV with header, or JSON lines).
    #[arg(long)]
    input: PathBuf,
    /// Input layout; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Write the statistics report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let records = load_corpus(&args.input, args.format.map(Into::into))?;
    let stats = split_statistics(&records)?;
    let report = serde_json::to_string_pretty(&stats)?;
    write_or_print(args.out.as_deref(), &report)
}

// ---------------------------------------------------------------------
// index
// ---------------------------------------------------------------------

#[derive(Clone, Copy, ValueEnum)]
pub enum ProviderArg {
    /// Deterministic offline hash embeddings.
    Hash,
    /// Remote embedding service (VALUELAB_EMBED_ENDPOINT).
    Remote,
}

#[derive(Args)]
pub struct IndexArgs {
    /// KB file (JSON lines with id, source_type, text, optional values).
    #[arg(long)]
    kb: PathBuf,
    /// Where to write the serialized index.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "hash")]
    provider: ProviderArg,
    /// Hash-provider vector dimension.
    #[arg(long, default_value_t = 384)]
    dimension: usize,
    /// Hash-provider seed.
    #[arg(long, default_value_t = 0)]
    embedding_seed: u64,
}

fn embedding_provider(
    provider: ProviderArg,
    dimension: usize,
    seed: u64,
) -> Result<Box<dyn EmbeddingProvider>> {
    match provider {
        ProviderArg::Hash => Ok(Box::new(HashEmbedding::new(dimension, seed))),
        ProviderArg::Remote => {
            let endpoint = std::env::var(EMBED_ENDPOINT_VAR)
                .map_err(|_| anyhow!("{EMBED_ENDPOINT_VAR} is not set"))?;
            Ok(Box::new(RemoteEmbedding::connect(&endpoint)?))
        }
    }
}

pub fn index(args: IndexArgs) -> Result<()> {
    let chunks = load_kb(&args.kb)?;
    let by_type = |t: SourceType| chunks.iter().filter(|c| c.source_type == t).count();
    eprintln!(
        "loaded {} chunks ({} definition, {} guidelines, {} theory)",
        chunks.len(),
        by_type(SourceType::Definition),
        by_type(SourceType::Guidelines),
        by_type(SourceType::Theory),
    );
    let provider = embedding_provider(args.provider, args.dimension, args.embedding_seed)?;
    let index = build_index(chunks, provider.as_ref())?;
    std::fs::write(&args.out, serde_json::to_string(&index)?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("indexed {} chunks at dimension {}", index.len(), index.dimension());
    Ok(())
}

// ---------------------------------------------------------------------
// run
// ---------------------------------------------------------------------

#[derive(Clone, Copy, ValueEnum)]
pub enum ContextArg {
    Sentence,
    Window,
    Document,
}

impl From<ContextArg> for ContextKind {
    fn from(value: ContextArg) -> ContextKind {
        match value {
            ContextArg::Sentence => ContextKind::Sentence,
            ContextArg::Window => ContextKind::Window,
            ContextArg::Document => ContextKind::Document,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum RagArg {
    None,
    Early,
}

impl From<RagArg> for RagMode {
    fn from(value: RagArg) -> RagMode {
        match value {
            RagArg::None => RagMode::None,
            RagArg::Early => RagMode::Early,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Encoder,
    Llm,
    Mock,
}

impl From<FamilyArg> for BackendFamily {
    fn from(value: FamilyArg) -> BackendFamily {
        match value {
            FamilyArg::Encoder => BackendFamily::Encoder,
            FamilyArg::Llm => BackendFamily::Llm,
            FamilyArg::Mock => BackendFamily::Mock,
        }
    }
}

#[derive(Args)]
pub struct RunArgs {
    /// Declarative grid file (TOML). Mutually exclusive with the
    /// single-run flags below.
    #[arg(long, conflicts_with_all = ["model", "backend", "context"])]
    config: Option<PathBuf>,
    /// Results store directory (prediction files plus manifest).
    #[arg(long)]
    out: PathBuf,
    /// Re-run even when a cached prediction file matches the config hash.
    #[arg(long)]
    force: bool,
    /// Corpus file; with --config this overrides the grid's corpus entry.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    corpus_format: Option<FormatArg>,

    // Single-run flags.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<FamilyArg>,
    /// Backend service address; "builtin" is the mock backend. Falls back
    /// to VALUELAB_ENCODER_ENDPOINT / VALUELAB_LLM_ENDPOINT.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, value_enum)]
    context: Option<ContextArg>,
    #[arg(long, default_value_t = 2)]
    window_radius: usize,
    #[arg(long, value_enum, default_value = "none")]
    rag: RagArg,
    /// KB file, required for --rag early.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    top_k: usize,
    #[arg(long, default_value_t = 200)]
    kb_budget: usize,
    #[arg(long, default_value_t = 1024)]
    total_budget: usize,
    /// Decision threshold for scoring backends.
    #[arg(long)]
    threshold: Option<f64>,
    /// Maximum generated tokens for completion backends.
    #[arg(long, default_value_t = 64)]
    max_tokens: u32,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "test")]
    split: Split,

    // Embedding provider for retrieval.
    #[arg(long, value_enum, default_value = "hash")]
    embedding: ProviderArg,
    #[arg(long, default_value_t = 384)]
    embedding_dim: usize,
    #[arg(long, default_value_t = 0)]
    embedding_seed: u64,
}

fn resolve_endpoint(family: BackendFamily, endpoint: Option<&str>) -> Result<String> {
    if let Some(endpoint) = endpoint {
        return Ok(endpoint.to_string());
    }
    match family {
        BackendFamily::Mock => Ok("builtin".to_string()),
        BackendFamily::Encoder => std::env::var(ENCODER_ENDPOINT_VAR)
            .map_err(|_| anyhow!("--endpoint or {ENCODER_ENDPOINT_VAR} required for encoder backends")),
        BackendFamily::Llm => std::env::var(LLM_ENDPOINT_VAR)
            .map_err(|_| anyhow!("--endpoint or {LLM_ENDPOINT_VAR} required for llm backends")),
    }
}

fn single_run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let family: BackendFamily = args
        .backend
        .ok_or_else(|| anyhow!("--backend is required without --config"))?
        .into();
    let model = args.model.clone().ok_or_else(|| anyhow!("--model is required without --config"))?;
    let context: ContextKind = args
        .context
        .ok_or_else(|| anyhow!("--context is required without --config"))?
        .into();
    let backend = BackendSpec {
        family,
        endpoint: resolve_endpoint(family, args.endpoint.as_deref())?,
        model,
    };
    let mut config = ExperimentConfig::new(
        backend,
        ContextCondition { kind: context, window_radius: args.window_radius },
        args.rag.into(),
        args.split,
    );
    if let Some(threshold) = args.threshold {
        config.threshold = Some(threshold);
    }
    if family == BackendFamily::Llm {
        config.decode = Some(DecodeParams { max_tokens: args.max_tokens, ..DecodeParams::default() });
    }
    config.top_k = args.top_k;
    config.kb_budget = args.kb_budget;
    config.total_budget = args.total_budget;
    config.seed = args.seed;
    config.kb_path = args.kb.clone();
    Ok(config)
}

pub fn run(args: RunArgs) -> Result<()> {
    let (configs, corpus_path) = match &args.config {
        Some(path) => {
            let grid = GridConfig::from_path(path)?;
            let corpus_path = args
                .corpus
                .clone()
                .or_else(|| {
                    grid.corpus.as_ref().and_then(|c| c.for_split(grid.split).cloned())
                })
                .ok_or_else(|| anyhow!("no corpus file: pass --corpus or set [corpus] in the grid"))?;
            (expand_grid(&grid)?, corpus_path)
        }
        None => {
            let config = single_run_config(&args)?;
            let corpus_path = args
                .corpus
                .clone()
                .ok_or_else(|| anyhow!("--corpus is required without --config"))?;
            (vec![config], corpus_path)
        }
    };

    let corpus = load_corpus(&corpus_path, args.corpus_format.map(Into::into))?;
    let mut store = ResultsStore::open(&args.out)?;

    // One index and one retrieval handle serve every rag=early run, so
    // lookups are shared across the whole grid.
    let provider = embedding_provider(args.embedding, args.embedding_dim, args.embedding_seed)?;
    let kb_path = configs.iter().find_map(|c| c.kb_path.clone());
    let index: Option<KbIndex> = match &kb_path {
        Some(path) => Some(build_index(load_kb(path)?, provider.as_ref())?),
        None => None,
    };
    let retrieval = index.as_ref().map(|index| Retrieval::new(index, provider.as_ref()));

    for config in &configs {
        let retrieval_ref = match (config.rag, &retrieval) {
            (RagMode::Early, Some(retrieval)) => Some(retrieval),
            (RagMode::Early, None) => bail!("rag=early run without a KB index"),
            (RagMode::None, _) => None,
        };
        let key = config.run_key();
        let (path, cached) =
            run_and_persist(config, &corpus, retrieval_ref, &mut store, args.force)?;
        let state = if cached { "cached" } else { "ran" };
        eprintln!("{state} {key} -> {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------

#[derive(Args)]
pub struct EvaluateArgs {
    /// A single prediction file to evaluate.
    #[arg(long, conflicts_with = "store")]
    preds: Option<PathBuf>,
    /// Evaluate every run in this results store instead, saving reports
    /// into its manifest.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Gold corpus file.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum)]
    gold_format: Option<FormatArg>,
    /// Split recorded in the report (single-file mode).
    #[arg(long, default_value = "test")]
    split: Split,
    /// Write the report here instead of stdout (single-file mode).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let gold = load_corpus(&args.gold, args.gold_format.map(Into::into))?;
    match (&args.preds, &args.store) {
        (Some(preds_path), None) => {
            let preds = read_predictions(preds_path)?;
            let metrics = compute_metrics(&preds, &gold)?;
            let report = serde_json::to_string_pretty(&metrics)?;
            write_or_print(args.out.as_deref(), &report)
        }
        (None, Some(store_path)) => {
            let mut store = ResultsStore::open(store_path)?;
            let entries: Vec<_> = store.entries().to_vec();
            if entries.is_empty() {
                bail!("store {} lists no runs", store_path.display());
            }
            for entry in entries {
                let preds = store.load_predictions(&entry)?;
                let metrics = compute_metrics(&preds, &gold)?;
                let report = RunReport { key: entry.key.clone(), split: entry.split, metrics };
                store.save_report(&entry.key, &report)?;
                eprintln!("evaluated {} (macro {:.3})", entry.key, report.metrics.macro_f1);
            }
            Ok(())
        }
        _ => bail!("pass exactly one of --preds or --store"),
    }
}

// ---------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------

#[derive(Clone, Copy, ValueEnum)]
pub enum TestArg {
    Permutation,
    Bootstrap,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    preds_a: PathBuf,
    #[arg(long)]
    preds_b: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum)]
    gold_format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "permutation")]
    test: TestArg,
    /// macro-f1, micro-f1, or label:<canonical name>.
    #[arg(long, default_value = "macro-f1")]
    metric: String,
    /// Defaults: 2000 for permutation, 1000 for bootstrap.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let gold = load_corpus(&args.gold, args.gold_format.map(Into::into))?;
    let preds_a = read_predictions(&args.preds_a)?;
    let preds_b = read_predictions(&args.preds_b)?;
    let metric: MetricSelector = args.metric.parse().map_err(|e: String| anyhow!(e))?;
    let result = match args.test {
        TestArg::Permutation => paired_permutation(
            &preds_a,
            &preds_b,
            &gold,
            metric,
            args.iterations.unwrap_or(DEFAULT_PERMUTATION_ITERATIONS),
            args.seed,
        )?,
        TestArg::Bootstrap => paired_bootstrap(
            &preds_a,
            &preds_b,
            &gold,
            metric,
            args.iterations.unwrap_or(DEFAULT_BOOTSTRAP_ITERATIONS),
            args.seed,
        )?,
    };
    write_or_print(args.out.as_deref(), &serde_json::to_string_pretty(&result)?)
}

// ---------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------

#[derive(Clone, Copy, ValueEnum)]
pub enum TableFormat {
    Tsv,
    Markdown,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    report: AnalyzeReport,
}

#[derive(Subcommand)]
pub enum AnalyzeReport {
    /// One row per (model, context, rag); multi-seed groups as mean and sd.
    Aggregate {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_enum, default_value = "tsv")]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Macro-F1 delta between two context conditions of one model.
    ContextDelta {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long, value_enum, default_value = "none")]
        rag: RagArg,
        #[arg(long, value_enum)]
        baseline: ContextArg,
        #[arg(long, value_enum)]
        comparison: ContextArg,
        #[arg(long, value_enum, default_value = "tsv")]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-label F1 deltas between two run keys.
    PerValue {
        #[arg(long)]
        store: PathBuf,
        /// Run key, e.g. "model=deberta,context=document,rag=none".
        #[arg(long)]
        baseline: String,
        #[arg(long)]
        comparison: String,
        #[arg(long, value_enum, default_value = "tsv")]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fraction of sentences whose predicted label set differs.
    ChangeRate {
        #[arg(long)]
        preds_a: PathBuf,
        #[arg(long)]
        preds_b: PathBuf,
    },
    /// JSON-lines bundle of changed sentences with both label sets.
    Qualitative {
        #[arg(long)]
        preds_a: PathBuf,
        #[arg(long)]
        preds_b: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        corpus_format: Option<FormatArg>,
        #[arg(long, default_value_t = 50)]
        max_items: usize,
        /// Include sentence text verbatim (off by default to respect
        /// dataset license terms).
        #[arg(long)]
        include_text: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn render(table: &valuelab::analysis::Table, format: TableFormat) -> String {
    match format {
        TableFormat::Tsv => table.to_tsv(),
        TableFormat::Markdown => table.to_markdown(),
    }
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    match args.report {
        AnalyzeReport::Aggregate { store, format, out } => {
            let store = ResultsStore::open(&store)?;
            let keys: Vec<RunKey> = store.entries().iter().map(|e| e.key.clone()).collect();
            if keys.is_empty() {
                bail!("store lists no runs");
            }
            let table = aggregate_table(&store, &keys)?;
            write_or_print(out.as_deref(), &render(&table, format))
        }
        AnalyzeReport::ContextDelta { store, model, rag, baseline, comparison, format, out } => {
            let store = ResultsStore::open(&store)?;
            let rag: RagMode = rag.into();
            let table =
                context_delta(&store, &model, (baseline.into(), rag), (comparison.into(), rag))?;
            write_or_print(out.as_deref(), &render(&table.to_table(), format))
        }
        AnalyzeReport::PerValue { store, baseline, comparison, format, out } => {
            let store = ResultsStore::open(&store)?;
            let baseline: RunKey = baseline.parse().map_err(|e: String| anyhow!(e))?;
            let comparison: RunKey = comparison.parse().map_err(|e: String| anyhow!(e))?;
            let table = per_value_delta(&store, &baseline, &comparison)?;
            write_or_print(out.as_deref(), &render(&table.to_table(), format))
        }
        AnalyzeReport::ChangeRate { preds_a, preds_b } => {
            let a = read_predictions(&preds_a)?;
            let b = read_predictions(&preds_b)?;
            println!("{:.6}", prediction_change_rate(&a, &b)?);
            Ok(())
        }
        AnalyzeReport::Qualitative {
            preds_a,
            preds_b,
            corpus,
            corpus_format,
            max_items,
            include_text,
            out,
        } => {
            let a = read_predictions(&preds_a)?;
            let b = read_predictions(&preds_b)?;
            let corpus = load_corpus(&corpus, corpus_format.map(Into::into))?;
            let bundle = qualitative_bundle(&a, &b, &corpus, max_items, include_text)?;
            let mut lines = String::new();
            for example in &bundle {
                lines.push_str(&serde_json::to_string(example)?);
                lines.push('\n');
            }
            write_or_print(out.as_deref(), &lines)
        }
    }
}
