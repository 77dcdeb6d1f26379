//! `hhpool`: build instance-specific heuristic pools and route instances to them.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hhpool_core::problems::ProblemKind;
use hhpool_core::selection::Strategy;

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "hhpool", version, about = "Per-subclass heuristic design and instance-specific selection")]
pub struct Cli {
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// List every subclass of a problem kind as CSV.
    Subclasses {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write seeded instance files for one or more subclasses.
    Generate(GenerateArgs),
    /// Evolve a heuristic per subclass, then run neighbor search, and save the pool.
    Build(BuildArgs),
    /// Pick a heuristic for one instance and solve it.
    Select(SelectArgs),
    /// Select and solve a batch of instances and write a gap report.
    Evaluate(EvaluateArgs),
    /// Train the neural selector on instances labelled by the pool.
    TrainClassifier(TrainArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Obpp,
    Cvrp,
}

impl From<KindArg> for ProblemKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Obpp => ProblemKind::Obpp,
            KindArg::Cvrp => ProblemKind::Cvrp,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StrategyArg {
    Random,
    Closest,
    Llm,
    Classifier,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Closest => Strategy::Closest,
            StrategyArg::Llm => Strategy::Llm,
            StrategyArg::Classifier => Strategy::Classifier,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Subclass label, e.g. obpp/500/uniform/random/100/0.5 (repeatable).
    #[arg(long = "key", required_unless_present = "all")]
    pub keys: Vec<String>,
    /// Every grid subclass of --kind.
    #[arg(long, requires = "kind", conflicts_with = "keys")]
    pub all: bool,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Instances per subclass.
    #[arg(short, long, default_value_t = 30)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Language-model client options.
#[derive(Args, Debug, Clone)]
pub struct LlmArgs {
    /// Use the offline deterministic mock instead of an HTTP endpoint.
    #[arg(long)]
    pub mock: bool,
    /// Probability that a mock reply is unusable.
    #[arg(long, default_value_t = 0.0)]
    pub mock_failure_rate: f64,
    /// Mock seed (defaults to --seed).
    #[arg(long)]
    pub mock_seed: Option<u64>,
    /// Chat-completions base URL (env INSTSPEC_LLM_BASE_URL).
    #[arg(long)]
    pub base_url: Option<String>,
    /// Model name (env INSTSPEC_LLM_MODEL).
    #[arg(long)]
    pub llm_model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    #[arg(long)]
    pub transport_retries: Option<u32>,
    /// Append every request and response to this JSONL file (key redacted).
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Build only these subclasses (repeatable label).
    #[arg(long = "key")]
    pub keys: Vec<String>,
    /// Build an evenly spaced subset of this many grid subclasses.
    #[arg(long, conflicts_with = "keys")]
    pub subset: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub population: usize,
    /// LLM queries per subclass.
    #[arg(long, default_value_t = 800)]
    pub budget: u64,
    /// Neighbors examined by neighbor search.
    #[arg(long, default_value_t = 20)]
    pub k_n: usize,
    #[arg(long, default_value_t = 30)]
    pub instances: usize,
    #[arg(long, default_value_t = 3)]
    pub retry_limit: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Pool file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-subclass evolution logs (default: <out>.logs).
    #[arg(long)]
    pub logs_dir: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "closest")]
    pub strategy: StrategyArg,
    /// Candidate-set size (default depends on strategy and kind).
    #[arg(long)]
    pub k_c: Option<usize>,
    /// Classifier model file (classifier strategy).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub retry_limit: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference objectives (JSON map from instance id).
    #[arg(long)]
    pub references: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pool: PathBuf,
    /// Instance files or directories of them (repeatable).
    #[arg(long = "instances", required = true)]
    pub instances: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "closest")]
    pub strategy: StrategyArg,
    #[arg(long)]
    pub k_c: Option<usize>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub retry_limit: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Aggregate by one feature name (e.g. sequence).
    #[arg(long)]
    pub group_by: Option<String>,
    #[arg(long)]
    pub references: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// CSV report path; a JSON twin is written alongside.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub llm: LlmArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub pool: PathBuf,
    /// Instance files or directories; if omitted, instances are generated per pool subclass.
    #[arg(long = "instances")]
    pub instances: Vec<PathBuf>,
    /// Generated instances per subclass when --instances is absent.
    #[arg(long, default_value_t = 30)]
    pub per_subclass: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Subclasses { .. } => "subclasses",
            Command::Generate(_) => "generate",
            Command::Build(_) => "build",
            Command::Select(_) => "select",
            Command::Evaluate(_) => "evaluate",
            Command::TrainClassifier(_) => "train-classifier",
        }
    }

    fn default_manifest(&self) -> PathBuf {
        match self {
            Command::Subclasses { out: Some(p), .. } => manifest::sibling(p, "manifest.json"),
            Command::Generate(a) => a.out_dir.join("manifest.json"),
            Command::Build(a) => manifest::sibling(&a.out, "manifest.json"),
            Command::Evaluate(a) => manifest::sibling(&a.out, "manifest.json"),
            Command::TrainClassifier(a) => manifest::sibling(&a.out, "manifest.json"),
            _ => PathBuf::from(format!("hhpool-{}.manifest.json", self.name())),
        }
    }
}

/// Cause chain, skipping causes already spelled out by their parent.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let manifest_path = cli.manifest.clone().unwrap_or_else(|| cli.command.default_manifest());
    let mut manifest = RunManifest::start(cli.command.name());

    let result = commands::run(cli.command, &mut manifest);
    let (code, error) = match &result {
        Ok(code) => (*code, None),
        Err(e) => {
            let msg = error_chain(&e.error);
            eprintln!("error: {msg}");
            (e.code, Some(msg))
        }
    };
    manifest.finish(code as i32, error);
    if let Err(e) = manifest.write(&manifest_path) {
        log::warn!("could not write manifest {}: {e}", manifest_path.display());
    }
    ExitCode::from(code)
}
