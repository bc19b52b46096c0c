//! The `gqr` command line: dataset synthesis, training, evaluation,
//! latency benchmarking, one-off routing, and the HTTP gateway.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use gqr_core::corpus::{self, synth, CorpusError, SplitRole};
use gqr_core::eval::bench::{bench_latency, BenchConfig};
use gqr_core::eval::report::emit_report;
use gqr_core::eval::{self, EvalError, EvalReport};
use gqr_core::llm::{FixtureError, HttpChatClient, LlmRouter, ReplayStub};
use gqr_core::models::artifact::{load_model, save_model, ArtifactError, GuardedModel};
use gqr_core::models::linear::LinearOptions;
use gqr_core::models::mlp::MlpOptions;
use gqr_core::models::{Router, TrainConfig, TrainError};
use gqr_core::{LinearModelF32, MlpModelF32};

use crate::config::{ConfigError, GatewayConfig, LlmSection};
use crate::server::{self, ServeError};

const EXIT_CODE_HELP: &str = "Exit codes:
  0  success
  2  usage error
  3  an input file was not found
  4  invalid manifest, config, or data
  5  training failed
  6  unreadable or corrupt model artifact
  7  classification backend failure
  8  server failed to start";

#[derive(Parser)]
#[command(
    name = "gqr",
    version,
    about = "Guarded query routing: classify queries into domains or reject them",
    after_help = EXIT_CODE_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a router on a benchmark and save it as an artifact
    Train(TrainArgs),
    /// Evaluate a router over a benchmark's test splits
    Eval(EvalArgs),
    /// Measure routing latency across batch sizes
    Bench(BenchArgs),
    /// Run the HTTP gateway
    Serve(ServeArgs),
    /// Classify a single query with a saved artifact
    Route(RouteArgs),
    /// Generate a small synthetic benchmark for smoke tests
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Mlp,
    Linear,
}

#[derive(Args)]
struct TrainArgs {
    /// Benchmark manifest (TOML)
    #[arg(long)]
    manifest: PathBuf,
    /// Model family to train
    #[arg(long, value_enum)]
    kind: ModelKind,
    /// Output artifact path
    #[arg(long)]
    out: PathBuf,
    /// Acceptance threshold baked into the artifact (mlp only; linear
    /// models gate at 0.5)
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Default: 0.001 for mlp, 2.0 for linear
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Hidden layer width (mlp)
    #[arg(long, default_value_t = 1024)]
    hidden_width: usize,
    /// Hidden dropout rate during training (mlp)
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    /// Minimum document frequency for a vocabulary term (mlp)
    #[arg(long, default_value_t = 2)]
    min_df: u32,
    /// Vocabulary size cap (mlp)
    #[arg(long, default_value_t = 100_000)]
    max_vocab: usize,
    /// Hashed feature buckets, a power of two (linear)
    #[arg(long, default_value_t = 1 << 21)]
    buckets: u32,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("backend").required(true).args(["model", "llm_config"]))]
struct EvalArgs {
    /// Benchmark manifest (TOML)
    #[arg(long)]
    manifest: PathBuf,
    /// Artifact to evaluate
    #[arg(long)]
    model: Option<PathBuf>,
    /// Delegating-backend config (TOML) to evaluate instead of an artifact
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// Replay completions from a JSONL fixture instead of calling the
    /// backend endpoint
    #[arg(long, requires = "llm_config")]
    replay: Option<PathBuf>,
    /// Serve-time threshold override (artifact backends only)
    #[arg(long)]
    threshold: Option<f64>,
    /// Row label in reports (default: model file stem or "llm")
    #[arg(long)]
    label: Option<String>,
    /// Also write report.txt and report.csv into this directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark manifest supplying the query pool (all test splits)
    #[arg(long)]
    manifest: PathBuf,
    /// Artifact to time
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated batch sizes
    #[arg(long, value_delimiter = ',', default_values_t = [1, 32, 64, 128, 256])]
    batch_sizes: Vec<usize>,
    /// Unmeasured batches per size
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Measured batches per size
    #[arg(long, default_value_t = 100)]
    iters: usize,
}

#[derive(Args)]
struct ServeArgs {
    /// Gateway config (TOML)
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("backend").required(true).args(["model", "llm_config"]))]
struct RouteArgs {
    /// Artifact to classify with
    #[arg(long)]
    model: Option<PathBuf>,
    /// Delegating-backend config (TOML) to classify with instead
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// Serve-time threshold override (artifact backends only)
    #[arg(long)]
    threshold: Option<f64>,
    /// Query text
    #[arg(long)]
    query: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to write the benchmark into
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    per_domain_train: usize,
    #[arg(long, default_value_t = 200)]
    per_domain_valid: usize,
    #[arg(long, default_value_t = 200)]
    per_domain_test: usize,
    #[arg(long, default_value_t = 500)]
    per_ood_set: usize,
    #[arg(long, default_value_t = 17)]
    seed: u64,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

fn io_not_found(source: &std::io::Error) -> bool {
    source.kind() == ErrorKind::NotFound
}

fn corpus_failure(e: CorpusError) -> Failure {
    let code = match &e {
        CorpusError::Io { source, .. } if io_not_found(source) => 3,
        _ => 4,
    };
    Failure::new(code, e.to_string())
}

fn artifact_failure(e: ArtifactError) -> Failure {
    let code = match &e {
        ArtifactError::Io { source, .. } if io_not_found(source) => 3,
        _ => 6,
    };
    Failure::new(code, e.to_string())
}

fn train_failure(e: TrainError) -> Failure {
    Failure::new(5, e.to_string())
}

fn eval_failure(e: EvalError) -> Failure {
    let code = match &e {
        EvalError::Io { source, .. } if io_not_found(source) => 3,
        _ => 4,
    };
    Failure::new(code, e.to_string())
}

fn fixture_failure(e: FixtureError) -> Failure {
    let code = match &e {
        FixtureError::Io { source, .. } if io_not_found(source) => 3,
        _ => 4,
    };
    Failure::new(code, e.to_string())
}

fn config_failure(e: ConfigError) -> Failure {
    let code = match &e {
        ConfigError::Io { source, .. } if io_not_found(source) => 3,
        _ => 4,
    };
    Failure::new(code, e.to_string())
}

fn serve_failure(e: ServeError) -> Failure {
    match e {
        ServeError::Config(c) => config_failure(c),
        ServeError::Artifact(a) => artifact_failure(a),
        ServeError::Backend(b) => Failure::new(4, b.to_string()),
        ServeError::Bind { .. } => Failure::new(8, e.to_string()),
    }
}

/// Parses the CLI and runs one command; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Route(args) => cmd_route(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let benchmark = corpus::load_benchmark(&args.manifest).map_err(corpus_failure)?;
    let domains = benchmark.manifest.domains.clone();
    let train = benchmark.train_examples();
    let valid = benchmark.valid_examples();
    let config = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.learning_rate.unwrap_or(match args.kind {
            ModelKind::Mlp => 1e-3,
            ModelKind::Linear => 2.0,
        }),
        batch_size: args.batch_size,
        seed: args.seed,
    };
    let model = match args.kind {
        ModelKind::Mlp => {
            let options = MlpOptions {
                hidden_width: args.hidden_width,
                dropout: args.dropout,
                min_df: args.min_df,
                max_vocab: args.max_vocab,
            };
            let threshold = args.threshold.unwrap_or(0.99);
            GuardedModel::Mlp(
                MlpModelF32::train(&domains, &train, &valid, &config, &options, threshold)
                    .map_err(train_failure)?,
            )
        }
        ModelKind::Linear => {
            if args.threshold.is_some() {
                return Err(Failure::new(
                    4,
                    "linear models gate at a fixed 0.5; --threshold only applies to mlp",
                ));
            }
            let options = LinearOptions { bucket_count: args.buckets, ..LinearOptions::default() };
            GuardedModel::Linear(
                LinearModelF32::train(&domains, &train, &valid, &config, &options)
                    .map_err(train_failure)?,
            )
        }
    };
    save_model(&model, &args.out).map_err(artifact_failure)?;
    let size = std::fs::metadata(&args.out).map(|m| m.len()).unwrap_or(0);
    println!(
        "wrote {} ({}, {} domains, {} bytes)",
        args.out.display(),
        model.kind(),
        domains.len(),
        size
    );
    Ok(())
}

fn load_artifact(path: &Path, threshold: Option<f64>) -> Result<GuardedModel<f32>, Failure> {
    let mut model = load_model(path).map_err(artifact_failure)?;
    if let Some(t) = threshold {
        model.set_threshold(t).map_err(|e| Failure::new(4, e.to_string()))?;
    }
    Ok(model)
}

fn file_stem_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string())
}

fn print_report(report: &EvalReport) {
    println!("model         {}", report.label);
    println!("id_accuracy   {:.2}", report.id_accuracy);
    println!("ood_accuracy  {:.2}", report.ood_accuracy);
    match report.unsafe_avg {
        Some(u) => println!("unsafe_avg    {u:.2}"),
        None => println!("unsafe_avg    -"),
    }
    println!("gqr_score     {:.2}", report.gqr_score);
    println!("errors        {}", report.error_count);
    for (name, acc) in &report.per_set {
        println!("  {name}  {acc:.2}");
    }
}

/// Builds the backend named by `--model` / `--llm-config`, plus a
/// default report label.
fn build_router(
    model: &Option<PathBuf>,
    llm_config: &Option<PathBuf>,
    replay: &Option<PathBuf>,
    threshold: Option<f64>,
) -> Result<(Box<dyn Router>, String), Failure> {
    match (model, llm_config) {
        (Some(path), None) => {
            let model = load_artifact(path, threshold)?;
            let label = file_stem_label(path);
            Ok((Box::new(model), label))
        }
        (None, Some(path)) => {
            if threshold.is_some() {
                return Err(Failure::new(
                    4,
                    "--threshold requires a model artifact; the delegating backend is uncalibrated",
                ));
            }
            let text = std::fs::read_to_string(path).map_err(|source| {
                Failure::new(
                    if io_not_found(&source) { 3 } else { 4 },
                    format!("{}: {source}", path.display()),
                )
            })?;
            let section: LlmSection = toml::from_str(&text)
                .map_err(|e| Failure::new(4, format!("{}: {e}", path.display())))?;
            let router: Box<dyn Router> = match replay {
                Some(fixture) => {
                    let stub = ReplayStub::from_file(fixture).map_err(fixture_failure)?;
                    Box::new(
                        LlmRouter::new(section.domains.clone(), &section.config, stub)
                            .map_err(|e| Failure::new(4, e.to_string()))?,
                    )
                }
                None => {
                    let client = HttpChatClient::new(&section.config)
                        .map_err(|e| Failure::new(7, e.to_string()))?;
                    Box::new(
                        LlmRouter::new(section.domains.clone(), &section.config, client)
                            .map_err(|e| Failure::new(4, e.to_string()))?,
                    )
                }
            };
            Ok((router, "llm".to_string()))
        }
        _ => Err(Failure::new(4, "exactly one of --model and --llm-config must be given")),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let benchmark = corpus::load_benchmark(&args.manifest).map_err(corpus_failure)?;
    let (router, default_label) =
        build_router(&args.model, &args.llm_config, &args.replay, args.threshold)?;
    let label = args.label.unwrap_or(default_label);
    let report = eval::evaluate(router.as_ref(), &benchmark, &label).map_err(eval_failure)?;
    print_report(&report);
    if let Some(dir) = &args.out {
        let (txt, csv) = emit_report(&[report], &[], dir).map_err(eval_failure)?;
        println!("wrote {} and {}", txt.display(), csv.display());
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let benchmark = corpus::load_benchmark(&args.manifest).map_err(corpus_failure)?;
    let model = load_artifact(&args.model, None)?;
    let size = std::fs::metadata(&args.model).map(|m| m.len()).unwrap_or(0);
    let pool: Vec<&str> = benchmark
        .splits_with_role(SplitRole::TestId)
        .chain(benchmark.splits_with_role(SplitRole::TestOod))
        .flat_map(|s| s.examples.iter().map(|e| e.text.as_str()))
        .collect();
    let config = BenchConfig {
        batch_sizes: args.batch_sizes,
        warmup: args.warmup,
        iters: args.iters,
    };
    let label = file_stem_label(&args.model);
    let table =
        bench_latency(&model, &pool, &config, &label, size).map_err(eval_failure)?;
    println!("model {} ({} bytes on disk)", table.label, table.size_on_disk);
    println!("batch  seconds_per_query");
    for (b, mean) in table.batch_sizes.iter().zip(&table.mean_seconds_per_query) {
        println!("{b:<6} {mean:.9}");
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<(), Failure> {
    let config = GatewayConfig::load(&args.config).map_err(config_failure)?;
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| Failure::new(8, format!("cannot start async runtime: {e}")))?;
    runtime.block_on(server::serve(config)).map_err(serve_failure)
}

fn cmd_route(args: RouteArgs) -> Result<(), Failure> {
    let (router, _) = build_router(&args.model, &args.llm_config, &None, args.threshold)?;
    let decision = router
        .route(&args.query)
        .map_err(|e| Failure::new(7, e.to_string()))?;
    println!("decision  {}", decision.outcome.label());
    for (domain, score) in &decision.scores {
        println!("  {domain}  {score:.4}");
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let config = synth::SynthConfig {
        per_domain_train: args.per_domain_train,
        per_domain_valid: args.per_domain_valid,
        per_domain_test: args.per_domain_test,
        per_ood_set: args.per_ood_set,
        seed: args.seed,
    };
    let manifest = synth::generate(&args.out, &config).map_err(corpus_failure)?;
    println!("wrote {}", manifest.display());
    Ok(())
}
