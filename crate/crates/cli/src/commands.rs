use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use hhpool_core::evaluation::{evaluate_instance, load_reference_file, optimality_gap, EvaluationReport, InstanceRow};
use hhpool_core::evolution::{build_pool, BuildOutcome, EvolutionConfig};
use hhpool_core::heuristics::Builtin;
use hhpool_core::llm::{describe_subclass, HttpLlm, LlmClient, LlmConfig, MockLlm};
use hhpool_core::pool::HeuristicPool;
use hhpool_core::problems::{
    enumerate_subclasses, feature_names, feature_vector, generate_instance, instance_seed, read_instance,
    standardize, write_instance, ProblemInstance, ProblemKind, SubclassKey,
};
use hhpool_core::selection::{
    default_k_c, preselect_key, select_classifier, select_closest, select_llm, select_random, train_classifier,
    ClassifierModel, SelectionOutcome, Strategy, TrainConfig,
};

use crate::manifest::{sibling, RunManifest};
use crate::{BuildArgs, Command, EvaluateArgs, GenerateArgs, LlmArgs, SelectArgs, TrainArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_TRANSPORT: u8 = 4;
pub const EXIT_PARTIAL: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult = Result<u8, CliError>;

trait OrInput<T> {
    fn input(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> OrInput<T> for Result<T, E> {
    fn input(self) -> Result<T, CliError> {
        self.map_err(|e| CliError { code: EXIT_INPUT, error: e.into() })
    }
}

fn input_error(msg: String) -> CliError {
    CliError { code: EXIT_INPUT, error: anyhow!(msg) }
}

pub fn run(command: Command, m: &mut RunManifest) -> CmdResult {
    match command {
        Command::Subclasses { kind, out } => subclasses(kind.into(), out, m),
        Command::Generate(a) => generate(a, m),
        Command::Build(a) => build(a, m),
        Command::Select(a) => select(a, m),
        Command::Evaluate(a) => evaluate(a, m),
        Command::TrainClassifier(a) => train(a, m),
    }
}

fn file_stem(key: &SubclassKey) -> String {
    key.label().replace('/', "_")
}

fn parse_keys(labels: &[String], kind: Option<ProblemKind>) -> Result<Vec<SubclassKey>, CliError> {
    let mut keys = Vec::new();
    for label in labels {
        let key = SubclassKey::parse_label(label).map_err(input_error)?;
        if let Some(kind) = kind.filter(|k| *k != key.kind()) {
            return Err(input_error(format!("{label} is not a {kind} subclass")));
        }
        if !key.is_grid_point() {
            log::warn!("{label} is not a grid subclass; using it anyway");
        }
        keys.push(key);
    }
    Ok(keys)
}

fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(input_error("--workers must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().input()
}

/// Expands directories into their `*.json` files (sorted), skipping manifests.
fn instance_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))
                .input()?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension().is_some_and(|x| x == "json")
                        && !f.file_name().is_some_and(|n| n.to_string_lossy().ends_with("manifest.json"))
                })
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(input_error("no instance files found".into()));
    }
    Ok(out)
}

fn load_instances(paths: &[PathBuf], kind: ProblemKind) -> Result<Vec<ProblemInstance>, CliError> {
    let files = instance_files(paths)?;
    let instances: Vec<ProblemInstance> =
        files.par_iter().map(|f| read_instance(f)).collect::<Result<_, _>>().input()?;
    if let Some(bad) = instances.iter().find(|i| i.kind() != kind) {
        return Err(input_error(format!("instance {} is not {kind}", bad.id())));
    }
    Ok(instances)
}

fn llm_config(a: &LlmArgs) -> LlmConfig {
    let mut c = LlmConfig::from_env();
    if let Some(v) = &a.base_url {
        c.base_url = v.clone();
    }
    if let Some(v) = &a.llm_model {
        c.model_name = v.clone();
    }
    if let Some(v) = &a.api_key_env {
        c.api_key_env = v.clone();
    }
    if let Some(v) = a.temperature {
        c.temperature = v;
    }
    if let Some(v) = a.timeout_secs {
        c.timeout_secs = v;
    }
    if let Some(v) = a.transport_retries {
        c.max_transport_retries = v;
    }
    c
}

/// The client plus the identity string recorded in pool metadata.
fn make_client(a: &LlmArgs, seed: u64) -> Result<(Box<dyn LlmClient>, String, serde_json::Value), CliError> {
    if a.mock {
        let seed = a.mock_seed.unwrap_or(seed);
        let client = MockLlm::new(seed, a.mock_failure_rate).input()?;
        let id = format!("mock(seed={seed},failure_rate={})", a.mock_failure_rate);
        return Ok((Box::new(client), id, json!({"mock": true, "seed": seed, "failure_rate": a.mock_failure_rate})));
    }
    let config = llm_config(a);
    let mut client = HttpLlm::new(config.clone()).input()?;
    if let Some(t) = &a.transcript {
        client = client.with_transcript(t).input()?;
    }
    let id = format!("http({}, {})", config.base_url, config.model_name);
    Ok((Box::new(client), id, serde_json::to_value(&config).expect("config serializes")))
}

fn subclasses(kind: ProblemKind, out: Option<PathBuf>, m: &mut RunManifest) -> CmdResult {
    m.config = json!({ "kind": kind.as_str() });
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["label"];
    header.extend(feature_names(kind));
    header.push("description");
    w.write_record(&header).input()?;
    let keys = enumerate_subclasses(kind);
    for key in &keys {
        let mut row = vec![key.label()];
        row.extend(feature_vector(key).0.iter().map(|v| v.to_string()));
        row.push(describe_subclass(key));
        w.write_record(&row).input()?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{e}")).input()?;
    match out {
        Some(path) => {
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display())).input()?;
            log::info!("{} subclasses written to {}", keys.len(), path.display());
            m.outputs.push(path);
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes).input()?;
        }
    }
    Ok(EXIT_OK)
}

fn generate(a: GenerateArgs, m: &mut RunManifest) -> CmdResult {
    let keys = if a.all {
        enumerate_subclasses(a.kind.expect("clap requires kind").into())
    } else {
        parse_keys(&a.keys, a.kind.map(Into::into))?
    };
    m.config = json!({ "keys": keys.len(), "n": a.n, "seed": a.seed, "out_dir": a.out_dir });
    m.seeds.push(a.seed);
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display())).input()?;
    keys.par_iter()
        .try_for_each(|key| -> anyhow::Result<()> {
            for idx in 0..a.n {
                let inst = generate_instance(key, instance_seed(a.seed, key, idx))?;
                write_instance(&inst, &a.out_dir.join(format!("{}__{idx:03}.json", file_stem(key))))?;
            }
            Ok(())
        })
        .input()?;
    log::info!("wrote {} instances to {}", keys.len() as u64 * a.n, a.out_dir.display());
    m.outputs.push(a.out_dir);
    Ok(EXIT_OK)
}

/// Evenly spaced grid indices `i * len / n`.
fn subset_of(grid: Vec<SubclassKey>, n: usize) -> Vec<SubclassKey> {
    let n = n.min(grid.len());
    (0..n).map(|i| grid[i * grid.len() / n]).collect()
}

fn build(a: BuildArgs, m: &mut RunManifest) -> CmdResult {
    let kind: ProblemKind = a.kind.into();
    let keys = if !a.keys.is_empty() {
        parse_keys(&a.keys, Some(kind))?
    } else if let Some(n) = a.subset {
        if n == 0 {
            return Err(input_error("--subset must be at least 1".into()));
        }
        subset_of(enumerate_subclasses(kind), n)
    } else {
        enumerate_subclasses(kind)
    };
    let config = EvolutionConfig {
        population_size: a.population,
        query_budget: a.budget,
        k_n: a.k_n,
        seed: a.seed,
        training_instances_per_subclass: a.instances,
        parse_retry_limit: a.retry_limit,
    };
    config.validate().input()?;
    let (client, identity, client_cfg) = make_client(&a.llm, a.seed)?;
    m.config = json!({
        "kind": kind.as_str(),
        "subclasses": keys.iter().map(|k| k.label()).collect::<Vec<_>>(),
        "evolution": config,
        "client": client_cfg,
        "workers": a.workers,
    });
    m.seeds.push(a.seed);

    let threads = worker_pool(a.workers)?;
    log::info!("building {} subclasses on {} workers with {identity}", keys.len(), threads.current_num_threads());
    let outcome = threads.install(|| build_pool(&keys, &config, client.as_ref(), &identity)).input()?;

    let logs_dir = a.logs_dir.clone().unwrap_or_else(|| sibling(&a.out, "logs"));
    write_build_outputs(&a.out, &logs_dir, &outcome)?;
    m.outputs.extend([a.out.clone(), logs_dir, sibling(&a.out, "report.csv")]);

    let pool = &outcome.pool;
    for (key, msg) in &pool.metadata.failures {
        log::error!("{key}: {msg}");
    }
    if pool.is_empty() {
        return Err(CliError { code: EXIT_TRANSPORT, error: anyhow!("every subclass failed; no pool written") });
    }
    let improved = pool.entries().filter(|e| e.fitness_post_ns > e.fitness_pre_ns).count();
    log::info!("pool of {} entries saved to {} ({improved} improved by neighbor search)", pool.len(), a.out.display());
    if pool.metadata.partial {
        log::warn!("{} subclasses failed; the pool is partial", pool.metadata.failures.len());
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn write_build_outputs(out: &Path, logs_dir: &Path, outcome: &BuildOutcome) -> Result<(), CliError> {
    fs::create_dir_all(logs_dir).with_context(|| format!("creating {}", logs_dir.display())).input()?;
    for log in &outcome.logs {
        let path = logs_dir.join(format!("{}.jsonl", log.subclass.replace('/', "_")));
        fs::write(&path, log.to_jsonl()).with_context(|| format!("writing {}", path.display())).input()?;
    }
    if outcome.pool.is_empty() {
        return Ok(());
    }
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).input()?;
    }
    outcome.pool.save(out).input()?;

    let baselines: BTreeMap<SubclassKey, f64> = outcome.baseline_fitness.iter().copied().collect();
    let mut w = csv::Writer::from_path(sibling(out, "report.csv")).input()?;
    w.write_record([
        "label",
        "heuristic_id",
        "baseline_fitness",
        "fitness_pre_ns",
        "fitness_post_ns",
        "ns_source",
        "ns_monotone",
        "queries_used",
    ])
    .input()?;
    for e in outcome.pool.entries() {
        w.write_record([
            e.key.label(),
            e.program.id.clone(),
            baselines.get(&e.key).map(|b| b.to_string()).unwrap_or_default(),
            e.fitness_pre_ns.to_string(),
            e.fitness_post_ns.to_string(),
            e.ns_source.map(|k| k.label()).unwrap_or_default(),
            (e.fitness_post_ns >= e.fitness_pre_ns).to_string(),
            e.queries_used.to_string(),
        ])
        .input()?;
    }
    w.flush().input()?;
    Ok(())
}

/// Everything a strategy needs besides the pool and the instance.
struct Selector {
    strategy: Strategy,
    k_c: usize,
    retry_limit: u32,
    seed: u64,
    model: Option<ClassifierModel>,
    client: Option<Box<dyn LlmClient>>,
}

impl Selector {
    fn new(
        strategy: Strategy,
        k_c: usize,
        retry_limit: u32,
        seed: u64,
        model_path: Option<&Path>,
        llm: &LlmArgs,
        m: &mut RunManifest,
    ) -> Result<Self, CliError> {
        let model = match (strategy, model_path) {
            (Strategy::Classifier, Some(p)) => {
                m.inputs.push(p.to_path_buf());
                Some(ClassifierModel::load(p).input()?)
            }
            (Strategy::Classifier, None) => return Err(input_error("the classifier strategy needs --model".into())),
            _ => None,
        };
        let client = match strategy {
            Strategy::Llm => Some(make_client(llm, seed)?.0),
            _ => None,
        };
        Ok(Self { strategy, k_c, retry_limit, seed, model, client })
    }

    fn select(&self, pool: &HeuristicPool, instance: &ProblemInstance) -> Result<SelectionOutcome, CliError> {
        let key = instance.key();
        let candidates = preselect_key(&key, pool, self.k_c).input()?;
        match self.strategy {
            Strategy::Closest => select_closest(&candidates),
            Strategy::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(self.seed, &key, instance.seed()));
                select_random(&candidates, &mut rng)
            }
            Strategy::Llm => select_llm(
                &candidates,
                pool,
                &describe_subclass(&key),
                self.client.as_deref().expect("client for llm strategy"),
                self.retry_limit,
            ),
            Strategy::Classifier => {
                let stats = pool.stats().expect("non-empty pool");
                let x = standardize(&feature_vector(&key), stats);
                select_classifier(self.model.as_ref().expect("model for classifier strategy"), &candidates, &x)
            }
        }
        .input()
    }
}

fn load_pool(path: &Path, m: &mut RunManifest) -> Result<HeuristicPool, CliError> {
    m.inputs.push(path.to_path_buf());
    let pool = HeuristicPool::load(path).input()?;
    if pool.is_empty() {
        return Err(input_error(format!("pool {} is empty", path.display())));
    }
    Ok(pool)
}

fn load_references(path: Option<&Path>, m: &mut RunManifest) -> Result<BTreeMap<String, f64>, CliError> {
    match path {
        Some(p) => {
            m.inputs.push(p.to_path_buf());
            load_reference_file(p).input()
        }
        None => Ok(BTreeMap::new()),
    }
}

fn solve(
    pool: &HeuristicPool,
    outcome: &SelectionOutcome,
    instance: &ProblemInstance,
    references: &BTreeMap<String, f64>,
) -> Result<InstanceRow, CliError> {
    let program = pool
        .program_by_id(&outcome.heuristic_id)
        .ok_or_else(|| input_error(format!("heuristic {} is not in the pool", outcome.heuristic_id)))?;
    let baseline = Builtin::baseline(pool.kind).program();
    evaluate_instance(program, instance, references, Some(&baseline)).input()
}

fn select(a: SelectArgs, m: &mut RunManifest) -> CmdResult {
    let pool = load_pool(&a.pool, m)?;
    m.inputs.push(a.instance.clone());
    let instance = read_instance(&a.instance).input()?;
    if instance.kind() != pool.kind {
        return Err(input_error(format!("pool is {} but the instance is {}", pool.kind, instance.kind())));
    }
    let strategy: Strategy = a.strategy.into();
    let k_c = a.k_c.unwrap_or_else(|| default_k_c(strategy, pool.kind));
    m.config = json!({ "strategy": strategy, "k_c": k_c, "retry_limit": a.retry_limit, "seed": a.seed });
    m.seeds.push(a.seed);
    let references = load_references(a.references.as_deref(), m)?;
    let selector = Selector::new(strategy, k_c, a.retry_limit, a.seed, a.model.as_deref(), &a.llm, m)?;

    let outcome = selector.select(&pool, &instance)?;
    let row = solve(&pool, &outcome, &instance, &references)?;
    let program = pool.program_by_id(&outcome.heuristic_id).expect("checked in solve");
    let baseline_gap = match (row.baseline_objective, row.reference) {
        (Some(b), Some(r)) if r != 0.0 => optimality_gap(b, r).ok(),
        _ => None,
    };
    let report = json!({
        "instance": row.instance_id,
        "selection": outcome,
        "program": program.render(),
        "objective": row.objective,
        "reference": row.reference,
        "gap": row.gap,
        "baseline_objective": row.baseline_objective,
        "baseline_gap": baseline_gap,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(EXIT_OK)
}

fn evaluate(a: EvaluateArgs, m: &mut RunManifest) -> CmdResult {
    let pool = load_pool(&a.pool, m)?;
    let strategy: Strategy = a.strategy.into();
    let k_c = a.k_c.unwrap_or_else(|| default_k_c(strategy, pool.kind));
    m.config = json!({
        "strategy": strategy,
        "k_c": k_c,
        "retry_limit": a.retry_limit,
        "seed": a.seed,
        "group_by": a.group_by,
        "workers": a.workers,
    });
    m.seeds.push(a.seed);
    m.inputs.extend(a.instances.iter().cloned());
    let references = load_references(a.references.as_deref(), m)?;
    let selector = Selector::new(strategy, k_c, a.retry_limit, a.seed, a.model.as_deref(), &a.llm, m)?;
    let threads = worker_pool(a.workers)?;

    let results: Vec<(SelectionOutcome, InstanceRow)> = threads.install(|| {
        let instances = load_instances(&a.instances, pool.kind)?;
        instances
            .par_iter()
            .map(|inst| {
                let outcome = selector.select(&pool, inst)?;
                let row = solve(&pool, &outcome, inst, &references)?;
                Ok((outcome, row))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let queries: u64 = results.iter().map(|(o, _)| o.queries_used).sum();
    let fallbacks = results.iter().filter(|(o, _)| o.fallback).count();
    let mut sel = String::new();
    for (o, r) in &results {
        let line = json!({
            "instance": r.instance_id,
            "heuristic_id": o.heuristic_id,
            "chosen_key": o.chosen_key.label(),
            "queries_used": o.queries_used,
            "fallback": o.fallback,
        });
        sel.push_str(&line.to_string());
        sel.push('\n');
    }
    let rows: Vec<InstanceRow> = results.into_iter().map(|(_, r)| r).collect();
    write_rows_csv(&sibling(&a.out, "rows.csv"), &rows)?;
    let report = EvaluationReport::from_rows(rows, a.group_by.as_deref()).input()?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).input()?;
    }
    report.write(&a.out).input()?;
    fs::write(sibling(&a.out, "selections.jsonl"), sel).input()?;
    m.outputs.extend([
        a.out.clone(),
        a.out.with_extension("json"),
        sibling(&a.out, "rows.csv"),
        sibling(&a.out, "selections.jsonl"),
    ]);

    let n = report.rows.len();
    log::info!(
        "{n} instances, mean objective {:.4}, mean gap {}, baseline mean objective {}, mean queries {:.3}, {fallbacks} fallbacks",
        report.mean_objective,
        report.mean_gap.map(|g| format!("{g:.4}%")).unwrap_or_else(|| "n/a".into()),
        report.mean_baseline_objective.map(|b| format!("{b:.4}")).unwrap_or_else(|| "n/a".into()),
        queries as f64 / n as f64,
    );
    Ok(EXIT_OK)
}

/// Per-instance rows with the baseline comparison.
fn write_rows_csv(path: &Path, rows: &[InstanceRow]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).input()?;
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_path(path).input()?;
    w.write_record([
        "instance_id",
        "heuristic_id",
        "objective",
        "reference",
        "gap",
        "baseline_objective",
        "baseline_gap",
    ])
    .input()?;
    for r in rows {
        let baseline_gap = match (r.baseline_objective, r.reference) {
            (Some(b), Some(x)) if x != 0.0 => optimality_gap(b, x).ok(),
            _ => None,
        };
        w.write_record([
            r.instance_id.clone(),
            r.heuristic_id.clone(),
            r.objective.to_string(),
            opt(r.reference),
            opt(r.gap),
            opt(r.baseline_objective),
            opt(baseline_gap),
        ])
        .input()?;
    }
    w.flush().input()?;
    Ok(())
}

fn train(a: TrainArgs, m: &mut RunManifest) -> CmdResult {
    let pool = load_pool(&a.pool, m)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        seed: a.seed,
        hidden: a.hidden,
    };
    m.config = json!({ "train": config, "per_subclass": a.per_subclass, "instances": a.instances });
    m.seeds.push(a.seed);

    let dataset = if a.instances.is_empty() {
        // Labels depend only on the declared subclass, so generated
        // instances would contribute identical points.
        let stats = pool.stats().expect("non-empty pool");
        let mut data = Vec::new();
        for e in pool.entries() {
            let x = standardize(&feature_vector(&e.key), stats);
            data.extend(std::iter::repeat_n((x, e.program.id.clone()), a.per_subclass as usize));
        }
        data
    } else {
        m.inputs.extend(a.instances.iter().cloned());
        let instances = load_instances(&a.instances, pool.kind)?;
        hhpool_core::selection::build_dataset(&pool, &instances).input()?
    };
    let ids = pool.heuristic_ids();
    let outcome = train_classifier(&dataset, &ids, &config).input()?;

    let correct = dataset
        .iter()
        .filter(|(x, label)| {
            let probs = hhpool_core::selection::classifier_forward(&outcome.model, &x.0).expect("dimension");
            let arg = (0..probs.len()).max_by(|&i, &j| probs[i].total_cmp(&probs[j]).then(j.cmp(&i))).unwrap_or(0);
            outcome.model.ids.get(arg) == Some(label)
        })
        .count();
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).input()?;
    }
    outcome.model.save(&a.out).input()?;
    let mut losses = String::from("epoch,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        losses.push_str(&format!("{},{l}\n", i + 1));
    }
    fs::write(sibling(&a.out, "losses.csv"), losses).input()?;
    m.outputs.extend([a.out.clone(), sibling(&a.out, "losses.csv")]);
    log::info!(
        "trained on {} samples, {} classes; final loss {:.5}; training accuracy {:.2}%",
        dataset.len(),
        ids.len(),
        outcome.losses.last().copied().unwrap_or(f64::NAN),
        100.0 * correct as f64 / dataset.len() as f64
    );
    Ok(EXIT_OK)
}
