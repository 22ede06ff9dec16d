mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{ArgAction, Args, Parser, Subcommand};

use asasf_core::embedding::BackendKind;
use asasf_core::metrics::check_schema;
use asasf_core::retrieval::IndexedField;
use asasf_core::{
    build_report, embedder_from_config, evaluate_manifest, hold_out_dev, optimize_few_shot,
    propose_instructions, ChatBackend, Corpus, CorpusFormat, Embedder, ErrorLedger, Grader,
    HttpChatClient, LedgerSnapshot, MajorityBaseline, MaxSimIndex, Mode, OptimizedProgram,
    OptimizerSettings, PipelineConfig, PipelineError, PromptStyle, RetrievalError, RunManifest,
    Signature, Split,
};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "asasf", version, about = "Short-answer scoring with feedback")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for the cached corpus, index, manifests and reports.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Cached corpus path (default: <out-dir>/corpus.jsonl).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// MaxSim index path (default: <out-dir>/index.asxi).
    #[arg(long, global = true)]
    index: Option<PathBuf>,
    /// Embedding backend: remote or deterministic.
    #[arg(long, global = true)]
    embedder: Option<BackendKind>,
    /// Base URL of the remote embedding service.
    #[arg(long, global = true)]
    embed_endpoint: Option<String>,
    /// Vector width of the embedding backend.
    #[arg(long, global = true)]
    embed_dim: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a corpus file and cache it for later commands.
    Ingest {
        path: PathBuf,
        /// jsonl or csv; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<CorpusFormat>,
    },
    /// Build the MaxSim index over one split's student answers.
    Index {
        #[arg(long, default_value = "train")]
        split: Split,
    },
    /// Grade a split and write a run manifest.
    Grade(GradeArgs),
    /// Compute metrics for a run manifest.
    Evaluate {
        manifest: PathBuf,
        #[command(flatten)]
        text: TextArgs,
    },
    /// Search instructions and demo sets on a dev slice of the train split.
    Optimize(OptimizeArgs),
    /// Render a comparison table for several manifests.
    Report {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[command(flatten)]
        text: TextArgs,
    },
}

#[derive(Args, Debug)]
struct TextArgs {
    /// Also compute BLEU and ROUGE-2 on the feedback.
    #[arg(long)]
    with_text_metrics: bool,
    /// Also compute embedding-similarity F1 (implies text metrics).
    #[arg(long)]
    embed_sim: bool,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// Model id sent to the chat endpoint.
    #[arg(long)]
    model: Option<String>,
    /// OpenAI-compatible base URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Requests in flight at once.
    #[arg(long)]
    concurrency: Option<usize>,
    /// Retries after the first attempt on transient errors.
    #[arg(long)]
    max_retries: Option<u32>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    /// Sampling temperature.
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args, Debug)]
struct GradeArgs {
    /// zero-shot, rag, vote, optimized or majority.
    #[arg(long)]
    mode: Option<Mode>,
    /// Retrieved neighbors (default 5 for rag and vote, 0 otherwise).
    #[arg(long)]
    k: Option<usize>,
    /// train, test_ua or test_uq.
    #[arg(long)]
    split: Option<Split>,
    /// predict or cot.
    #[arg(long)]
    style: Option<PromptStyle>,
    /// Seed recorded in the manifest.
    #[arg(long)]
    seed: Option<u64>,
    /// Never retrieve answers to the live item's own question.
    #[arg(long)]
    exclude_same_question: bool,
    /// Optimized program JSON, for `--mode optimized`.
    #[arg(long)]
    program: Option<PathBuf>,
    /// Signature JSON replacing the built-in grading signature.
    #[arg(long)]
    signature: Option<PathBuf>,
    /// Load the index even if its embedder fingerprint differs.
    #[arg(long)]
    force_index: bool,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// Candidate programs to evaluate.
    #[arg(long)]
    budget: Option<usize>,
    /// Largest demo set a candidate may carry.
    #[arg(long)]
    k_max: Option<usize>,
    /// Share of the train split held out for scoring candidates.
    #[arg(long)]
    dev_fraction: Option<f64>,
    /// Number of instruction rewrites to request from the proposal model.
    #[arg(long)]
    proposals: Option<usize>,
    /// Model that rewrites the base instruction (default: --model).
    #[arg(long)]
    proposal_model: Option<String>,
    /// Endpoint for the proposal model (default: --endpoint).
    #[arg(long)]
    proposal_endpoint: Option<String>,
    #[arg(long)]
    style: Option<PromptStyle>,
    /// Seed recorded in the manifest.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    signature: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

/// Exit 1 for bad input or configuration, 2 for failures while running.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Config(_)
        | PipelineError::MissingIndex(_)
        | PipelineError::MissingBackend(_)
        | PipelineError::MissingProgram
        | PipelineError::GoldLeakage(_)
        | PipelineError::Prompt(_) => invalid(e),
        _ => runtime(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path).map_err(invalid)?,
        None => RunConfig::default(),
    };
    apply_global_flags(&cli, &mut cfg);
    match cli.command {
        Command::Ingest { path, format } => ingest(&cfg, &path, format),
        Command::Index { split } => index(&cfg, split),
        Command::Grade(args) => {
            apply_grade_flags(&args, &mut cfg);
            grade(cfg)
        }
        Command::Evaluate { manifest, text } => evaluate(&cfg, &manifest, &text),
        Command::Optimize(args) => {
            apply_optimize_flags(&args, &mut cfg);
            optimize(cfg)
        }
        Command::Report { manifests, text } => report(&cfg, &manifests, &text),
    }
}

fn apply_global_flags(cli: &Cli, cfg: &mut RunConfig) {
    if let Some(v) = &cli.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &cli.corpus {
        cfg.corpus = Some(v.clone());
    }
    if let Some(v) = &cli.index {
        cfg.index = Some(v.clone());
    }
    if let Some(v) = cli.embedder {
        cfg.embedder.backend = v;
    }
    if let Some(v) = &cli.embed_endpoint {
        cfg.embedder.endpoint = Some(v.clone());
    }
    if let Some(v) = cli.embed_dim {
        cfg.embedder.dimension = v;
    }
}

fn apply_model_flags(args: &ModelArgs, model: &mut asasf_core::ModelConfig) {
    if let Some(v) = &args.model {
        model.model = v.clone();
    }
    if let Some(v) = &args.endpoint {
        model.endpoint = v.clone();
    }
    if let Some(v) = args.concurrency {
        model.concurrency = v;
    }
    if let Some(v) = args.max_retries {
        model.max_retries = v;
    }
    if let Some(v) = args.timeout {
        model.timeout_secs = v;
    }
    if let Some(v) = args.temperature {
        model.temperature = v;
    }
}

fn apply_grade_flags(args: &GradeArgs, cfg: &mut RunConfig) {
    let g = &mut cfg.grade;
    if let Some(v) = args.mode {
        g.mode = v;
    }
    if let Some(v) = args.k {
        g.k = Some(v);
    }
    if let Some(v) = args.split {
        g.split = v;
    }
    if let Some(v) = args.style {
        g.style = v;
    }
    if let Some(v) = args.seed {
        g.seed = v;
    }
    if args.exclude_same_question {
        g.exclude_same_question = true;
    }
    if let Some(v) = &args.program {
        g.program = Some(v.clone());
    }
    if let Some(v) = &args.signature {
        g.signature = Some(v.clone());
    }
    if args.force_index {
        g.force_index = true;
    }
    apply_model_flags(&args.model, &mut cfg.model);
    cfg.grade.k = Some(cfg.effective_k());
}

fn apply_optimize_flags(args: &OptimizeArgs, cfg: &mut RunConfig) {
    let o = &mut cfg.optimize;
    if let Some(v) = args.budget {
        o.budget = v;
    }
    if let Some(v) = args.k_max {
        o.k_max = v;
    }
    if let Some(v) = args.dev_fraction {
        o.dev_fraction = v;
    }
    if let Some(v) = args.proposals {
        o.proposals = v;
    }
    if let Some(v) = args.style {
        cfg.grade.style = v;
    }
    if let Some(v) = args.seed {
        cfg.grade.seed = v;
    }
    if let Some(v) = &args.signature {
        cfg.grade.signature = Some(v.clone());
    }
    apply_model_flags(&args.model, &mut cfg.model);
    if args.proposal_model.is_some() || args.proposal_endpoint.is_some() {
        let p = cfg.proposal_model.get_or_insert_with(|| cfg.model.clone());
        if let Some(v) = &args.proposal_model {
            p.model = v.clone();
        }
        if let Some(v) = &args.proposal_endpoint {
            p.endpoint = v.clone();
        }
    }
}

fn stamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string()
}

/// `<dir>/<prefix>-<timestamp>.<ext>`, with a counter if the name is taken.
fn output_path(dir: &Path, prefix: &str, ext: &str) -> Outcome<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(runtime)?;
    let base = format!("{prefix}-{}", stamp());
    let mut path = dir.join(format!("{base}.{ext}"));
    let mut n = 1;
    while path.exists() {
        path = dir.join(format!("{base}-{n}.{ext}"));
        n += 1;
    }
    Ok(path)
}

fn load_corpus(cfg: &RunConfig) -> Outcome<Corpus> {
    let path = cfg.corpus_path();
    if !path.exists() {
        return Err(invalid(anyhow!(
            "no corpus at {}; run `asasf ingest <path>` first or pass --corpus",
            path.display()
        )));
    }
    Corpus::load(&path, CorpusFormat::from_path(&path))
        .with_context(|| format!("cannot load corpus {}", path.display()))
        .map_err(invalid)
}

fn load_signature(path: Option<&Path>) -> Outcome<Signature> {
    match path {
        None => Ok(Signature::asas_f()),
        Some(p) => Signature::from_json_file(p)
            .with_context(|| format!("cannot load signature {}", p.display()))
            .map_err(invalid),
    }
}

fn make_embedder(cfg: &RunConfig) -> Outcome<Box<dyn Embedder>> {
    embedder_from_config(&cfg.embedder)
        .context("invalid embedder configuration")
        .map_err(invalid)
}

fn make_client(model: &asasf_core::ModelConfig) -> Outcome<HttpChatClient> {
    HttpChatClient::new(model.clone())
        .context("invalid model configuration")
        .map_err(invalid)
}

fn print_ledger(ledger: &LedgerSnapshot) {
    for row in &ledger.rows {
        let c = row.counts;
        eprintln!(
            "ledger {}/{}/k={}: {} calls, {} typed failures ({:.2}%), {} recovered by fallback, {} hard failures",
            row.stratum.model,
            row.stratum.pipeline,
            row.stratum.k,
            c.total,
            c.typed_failures,
            100.0 * c.typed_failure_rate(),
            c.fallback_successes,
            c.hard_failures
        );
    }
}

fn ingest(cfg: &RunConfig, path: &Path, format: Option<CorpusFormat>) -> Outcome<()> {
    let format = format.unwrap_or_else(|| CorpusFormat::from_path(path));
    let corpus = Corpus::load(path, format)
        .with_context(|| format!("invalid corpus {}", path.display()))
        .map_err(invalid)?;
    let target = cfg.corpus_path();
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    corpus
        .save(&target, CorpusFormat::Jsonl)
        .with_context(|| format!("cannot write {}", target.display()))
        .map_err(runtime)?;
    for split in Split::ALL {
        println!("{}\t{}", split.as_str(), corpus.split_iter(split).count());
    }
    eprintln!("cached {} records at {}", corpus.len(), target.display());
    Ok(())
}

fn index(cfg: &RunConfig, split: Split) -> Outcome<()> {
    let corpus = load_corpus(cfg)?;
    let records = corpus.split_view(split);
    if records.is_empty() {
        return Err(invalid(anyhow!("split {} is empty", split.as_str())));
    }
    let embedder = make_embedder(cfg)?;
    let index = MaxSimIndex::build(&records, embedder.as_ref(), IndexedField::StudentAnswer)
        .map_err(|e| match e {
            RetrievalError::EmptyIndex => invalid(e),
            other => runtime(other),
        })?;
    let path = cfg.index_path();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    index
        .save(&path)
        .with_context(|| format!("cannot write index {}", path.display()))
        .map_err(runtime)?;
    println!("{}", path.display());
    eprintln!(
        "indexed {} records ({} skipped), fingerprint {}",
        index.len(),
        index.skipped(),
        index.fingerprint()
    );
    Ok(())
}

fn load_index(cfg: &RunConfig, embedder: &dyn Embedder) -> Outcome<MaxSimIndex> {
    let path = cfg.index_path();
    if !path.exists() {
        return Err(invalid(anyhow!(
            "mode {} needs a MaxSim index but none exists at {}; build it with `asasf index --split train`",
            cfg.grade.mode,
            path.display()
        )));
    }
    MaxSimIndex::load(&path, Some(&embedder.fingerprint()), cfg.grade.force_index).map_err(|e| {
        match e {
            RetrievalError::FingerprintMismatch { .. } => invalid(anyhow!(
                "{e}; rebuild the index with the current embedder or pass --force-index"
            )),
            RetrievalError::Io(_) => runtime(e),
            other => invalid(other),
        }
    })
}

fn grade(cfg: RunConfig) -> Outcome<()> {
    let mode = cfg.grade.mode;
    let k = cfg.effective_k();
    let corpus = load_corpus(&cfg)?;
    let records = corpus.split_view(cfg.grade.split);
    if records.is_empty() {
        return Err(invalid(anyhow!("split {} is empty", cfg.grade.split.as_str())));
    }
    let signature = load_signature(cfg.grade.signature.as_deref())?;

    let pipeline = PipelineConfig {
        mode,
        k,
        style: cfg.grade.style,
        model: cfg.model.clone(),
        proposal_model: cfg.proposal_model.clone(),
        exclude_same_question: cfg.grade.exclude_same_question,
        seed: cfg.grade.seed,
    };
    pipeline.validate(None).map_err(pipeline_failure)?;

    let embedder = make_embedder(&cfg)?;
    let index = if mode.uses_index() {
        Some(load_index(&cfg, embedder.as_ref())?)
    } else {
        None
    };
    let client = if mode.uses_llm() {
        Some(make_client(&cfg.model)?)
    } else {
        None
    };
    let program = match (mode, &cfg.grade.program) {
        (Mode::Optimized, None) => {
            return Err(invalid(anyhow!(
                "mode optimized needs --program <file> from `asasf optimize`"
            )))
        }
        (Mode::Optimized, Some(p)) => Some(
            OptimizedProgram::load(p)
                .with_context(|| format!("cannot load program {}", p.display()))
                .map_err(invalid)?,
        ),
        _ => None,
    };

    let mut grader = Grader::new(pipeline, &signature).map_err(pipeline_failure)?;
    if let Some(c) = &client {
        grader = grader.with_backend(c);
    }
    if let Some(i) = &index {
        grader = grader.with_index(i, embedder.as_ref());
    }
    if let Some(p) = &program {
        grader = grader.with_program(p);
    }
    if mode == Mode::Majority {
        let train = corpus.split_view(Split::Train);
        let baseline = MajorityBaseline::fit(&train)
            .ok_or_else(|| invalid(anyhow!("majority mode needs a non-empty train split")))?;
        grader = grader.with_majority(baseline);
    }

    let (items, ledger) = grader.run_split(&records).map_err(pipeline_failure)?;
    print_ledger(&ledger);
    let run_config = serde_json::to_value(&cfg).map_err(runtime)?;
    let manifest = RunManifest::assemble(
        &grader,
        cfg.grade.split,
        &records,
        items,
        ledger,
        run_config,
        chrono::Utc::now().to_rfc3339(),
    );
    let path = output_path(
        &cfg.out_dir,
        &format!("grade-{}-k{}-{}", mode, manifest.k, cfg.grade.split.as_str()),
        "json",
    )?;
    manifest.save(&path).map_err(runtime)?;
    println!("{}", path.display());
    Ok(())
}

fn evaluate(cfg: &RunConfig, manifest_path: &Path, text: &TextArgs) -> Outcome<()> {
    let manifest = RunManifest::load(manifest_path)
        .with_context(|| format!("cannot read manifest {}", manifest_path.display()))
        .map_err(invalid)?;
    let embedder = if text.embed_sim {
        Some(make_embedder(cfg)?)
    } else {
        None
    };
    let evaluation = evaluate_manifest(
        &manifest,
        text.with_text_metrics || text.embed_sim,
        embedder.as_deref(),
    )
    .map_err(invalid)?;
    let json = serde_json::to_string_pretty(&evaluation).map_err(runtime)?;
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".into());
    let path = output_path(&cfg.out_dir, &format!("eval-{stem}"), "json")?;
    std::fs::write(&path, format!("{json}\n")).map_err(runtime)?;
    println!("{json}");
    eprintln!(
        "accuracy {:.4}  macro-F1 {:.4}  RMSE {:.4}  ({} evaluated, {} excluded); written to {}",
        evaluation.scores.accuracy,
        evaluation.scores.macro_f1,
        evaluation.scores.rmse,
        evaluation.scores.n_evaluated,
        evaluation.scores.n_excluded,
        path.display()
    );
    Ok(())
}

fn report(cfg: &RunConfig, paths: &[PathBuf], text: &TextArgs) -> Outcome<()> {
    let manifests = paths
        .iter()
        .map(|p| {
            RunManifest::load(p)
                .with_context(|| format!("cannot read manifest {}", p.display()))
                .map_err(invalid)
        })
        .collect::<Outcome<Vec<_>>>()?;
    let schemas: Vec<_> = manifests.iter().map(|m| m.output_schema.as_slice()).collect();
    check_schema(&schemas).map_err(invalid)?;
    let embedder = if text.embed_sim {
        Some(make_embedder(cfg)?)
    } else {
        None
    };
    let evaluations = manifests
        .iter()
        .map(|m| {
            evaluate_manifest(m, text.with_text_metrics || text.embed_sim, embedder.as_deref())
                .map_err(invalid)
        })
        .collect::<Outcome<Vec<_>>>()?;
    let report = build_report(&evaluations).map_err(invalid)?;
    let csv_path = output_path(&cfg.out_dir, "report", "csv")?;
    std::fs::write(&csv_path, &report.csv).map_err(runtime)?;
    let txt_path = csv_path.with_extension("txt");
    std::fs::write(&txt_path, &report.text).map_err(runtime)?;
    print!("{}", report.text);
    eprintln!("written to {} and {}", txt_path.display(), csv_path.display());
    Ok(())
}

fn optimize(cfg: RunConfig) -> Outcome<()> {
    let corpus = load_corpus(&cfg)?;
    let train = corpus.split_view(Split::Train);
    let seed = cfg.grade.seed;
    let (pool, dev) =
        hold_out_dev(&train, cfg.optimize.dev_fraction, seed).map_err(pipeline_failure)?;
    let signature = load_signature(cfg.grade.signature.as_deref())?;
    let executor = make_client(&cfg.model)?;

    let base = asasf_core::compile_signature(&signature, cfg.grade.style)
        .map_err(|e| invalid(anyhow!(e)))?
        .instruction;
    let instructions = if cfg.optimize.proposals > 0 {
        let proposer = make_client(cfg.proposal_model.as_ref().unwrap_or(&cfg.model))?;
        propose_instructions(&proposer as &dyn ChatBackend, &base, cfg.optimize.proposals)
    } else {
        vec![base]
    };

    let ledger = ErrorLedger::new();
    let settings = OptimizerSettings {
        budget: cfg.optimize.budget,
        k_max: cfg.optimize.k_max,
        seed,
        style: cfg.grade.style,
        concurrency: cfg.model.concurrency,
    };
    let program = optimize_few_shot(
        &pool,
        &dev,
        &signature,
        &instructions,
        &executor,
        &settings,
        &ledger,
    )
    .map_err(pipeline_failure)?;
    print_ledger(&ledger.snapshot());
    let path = output_path(&cfg.out_dir, "program", "json")?;
    program.save(&path).map_err(runtime)?;
    println!("{}", path.display());
    eprintln!(
        "dev accuracy {:.4} with {} demos ({} dev items, {} candidates)",
        program.dev_accuracy,
        program.demos.len(),
        dev.len(),
        program.trace.len()
    );
    Ok(())
}
