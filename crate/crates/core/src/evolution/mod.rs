//! Per-subclass evolutionary design of priority functions, and the
//! neighbor-search refinement over a finished pool.

mod record;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use record::{EvolutionLog, QueryRecord};
pub use crate::llm::OperatorKind;

use crate::evaluation::objective;
use crate::heuristics::random::random_expr;
use crate::heuristics::{Builtin, HeuristicProgram};
use crate::llm::{
    describe_subclass, parse_program_response, render_generation_prompt, render_init_prompt, render_retry_message,
    ChatMessage, LlmClient, LlmError,
};
use crate::pool::{BuildMetadata, HeuristicPool, PoolEntry};
use crate::problems::{
    feature_vector, generate_instance, instance_seed, standardize, FeatureStats, GenerateError, ProblemInstance,
    SubclassKey,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub query_budget: u64,
    pub k_n: usize,
    pub seed: u64,
    pub training_instances_per_subclass: usize,
    pub parse_retry_limit: u32,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 10,
            query_budget: 800,
            k_n: 20,
            seed: 0,
            training_instances_per_subclass: 30,
            parse_retry_limit: 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("no training instances")]
    NoInstances,
    #[error("instance generation failed: {0}")]
    Generate(#[from] GenerateError),
    #[error("LLM transport failed after {} queries: {source}", log.queries_used)]
    Transport { source: LlmError, log: Box<EvolutionLog> },
    #[error("cannot select {k} parents from a population of {size}")]
    Selection { k: usize, size: usize },
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if self.population_size < 2 {
            return Err(EvolutionError::Config("population size must be at least 2".into()));
        }
        if self.query_budget < self.population_size as u64 {
            return Err(EvolutionError::Config("query budget must be at least the population size".into()));
        }
        if self.k_n < 1 {
            return Err(EvolutionError::Config("k_n must be at least 1".into()));
        }
        if self.training_instances_per_subclass < 1 {
            return Err(EvolutionError::Config("need at least one training instance per subclass".into()));
        }
        Ok(())
    }

    /// Short digest of the serialized config, for build metadata.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Independent RNG stream for one purpose within one subclass.
pub fn subclass_rng(master_seed: u64, key: &SubclassKey, purpose: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(purpose.as_bytes());
    h.update([0]);
    h.update(key.digest());
    h.update(master_seed.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// The seeded training set of a subclass.
pub fn training_instances(key: &SubclassKey, config: &EvolutionConfig) -> Result<Vec<ProblemInstance>, GenerateError> {
    (0..config.training_instances_per_subclass as u64)
        .map(|i| generate_instance(key, instance_seed(config.seed, key, i)))
        .collect()
}

/// Fitness on the training set, evaluated instance-parallel. The summation
/// order is fixed, so the result does not depend on scheduling.
pub fn parallel_fitness(program: &HeuristicProgram, instances: &[ProblemInstance]) -> f64 {
    let objectives: Vec<f64> =
        instances.par_iter().map(|i| objective(program, i).expect("program and instances share a kind")).collect();
    crate::evaluation::fitness_from_objectives(&objectives)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    /// Sorted by fitness (best first), ties by id.
    pub members: Vec<HeuristicProgram>,
    pub generation: u64,
}

fn member_fitness(p: &HeuristicProgram) -> f64 {
    p.fitness.expect("population members carry fitness")
}

impl Population {
    fn sort(&mut self) {
        self.members.sort_by(|a, b| member_fitness(b).total_cmp(&member_fitness(a)).then_with(|| a.id.cmp(&b.id)));
    }

    pub fn best(&self) -> &HeuristicProgram {
        &self.members[0]
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m.id == id)
    }

    /// Adds `child` unless its id is present, then keeps the `cap` best.
    pub fn update(&mut self, child: HeuristicProgram, cap: usize) -> bool {
        if self.contains(&child.id) {
            return false;
        }
        let id = child.id.clone();
        self.members.push(child);
        self.sort();
        self.members.truncate(cap);
        self.generation += 1;
        self.contains(&id)
    }
}

/// Samples `k` distinct members with probability proportional to
/// `1 / (rank + 1)`, where rank counts strictly better members.
pub fn roulette_select<R: Rng + ?Sized>(
    population: &Population,
    k: usize,
    rng: &mut R,
) -> Result<Vec<HeuristicProgram>, EvolutionError> {
    let n = population.members.len();
    if k > n {
        return Err(EvolutionError::Selection { k, size: n });
    }
    let mut pool: Vec<(f64, &HeuristicProgram)> = population
        .members
        .iter()
        .map(|m| {
            let rank = population.members.iter().filter(|o| member_fitness(o) > member_fitness(m)).count();
            (1.0 / (rank as f64 + 1.0), m)
        })
        .collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = pool.iter().map(|(w, _)| w).sum();
        let mut x = rng.gen::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (i, (w, _)) in pool.iter().enumerate() {
            if x < *w {
                pick = i;
                break;
            }
            x -= w;
        }
        out.push(pool.remove(pick).1.clone());
    }
    Ok(out)
}

fn digest_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Result of one offspring request: the program (if any attempt parsed) and
/// one record per query sent.
pub struct StepOutcome {
    pub offspring: Option<HeuristicProgram>,
    pub records: Vec<QueryRecord>,
}

/// Transport failure during an offspring request, with the queries already sent.
#[derive(Debug)]
pub struct StepError {
    pub source: LlmError,
    pub records: Vec<QueryRecord>,
}

/// Asks the model for a program, feeding parse errors back for up to
/// `max_attempts` queries. `reject` marks parsable but unwanted replies
/// (duplicates), which are retried like parse failures.
fn query_program(
    client: &dyn LlmClient,
    mut messages: Vec<ChatMessage>,
    kind: crate::problems::ProblemKind,
    phase: &str,
    parent_ids: &[String],
    max_attempts: u64,
    reject: &dyn Fn(&HeuristicProgram) -> bool,
) -> Result<StepOutcome, StepError> {
    let mut records = Vec::new();
    for attempt in 1..=max_attempts {
        let reply = match client.complete(&messages) {
            Ok(r) => r,
            Err(source) => return Err(StepError { source, records }),
        };
        let mut record = QueryRecord {
            query_index: 0,
            phase: phase.to_string(),
            attempt,
            parent_ids: parent_ids.to_vec(),
            response_digest: digest_hex(&reply.text),
            outcome: String::new(),
            offspring_id: None,
            offspring_fitness: None,
        };
        let problem = match parse_program_response(&reply.text, kind) {
            Ok(p) if reject(&p) => format!("duplicate of an existing program ({})", p.render()),
            Ok(p) => {
                record.outcome = "ok".into();
                record.offspring_id = Some(p.id.clone());
                records.push(record);
                return Ok(StepOutcome { offspring: Some(p), records });
            }
            Err(e) => e.to_string(),
        };
        record.outcome = format!("rejected: {problem}");
        records.push(record);
        messages.push(ChatMessage::assistant(if reply.text.trim().is_empty() { "(empty)".into() } else { reply.text }));
        messages.push(render_retry_message(&problem));
    }
    Ok(StepOutcome { offspring: None, records })
}

fn with_request_tag(mut messages: Vec<ChatMessage>, tag: &str) -> Vec<ChatMessage> {
    if let Some(last) = messages.iter_mut().rev().find(|m| m.role == crate::llm::Role::User) {
        last.content.push_str(&format!("\nRequest: {tag}\n"));
    }
    messages
}

/// One offspring under `operator`. Each attempt is one query; the returned
/// program carries the operator and parent ids as lineage.
pub fn evolve_step(
    operator: OperatorKind,
    parents: &[HeuristicProgram],
    client: &dyn LlmClient,
    key: &SubclassKey,
    max_attempts: u64,
    request_tag: &str,
) -> Result<StepOutcome, StepError> {
    let kind = key.kind();
    let messages = render_generation_prompt(operator, parents, &describe_subclass(key), kind)
        .map_err(|e| StepError { source: LlmError::Config(e.to_string()), records: Vec::new() })?;
    let parent_ids: Vec<String> = parents.iter().map(|p| p.id.clone()).collect();
    let mut out = query_program(
        client,
        with_request_tag(messages, request_tag),
        kind,
        operator.tag(),
        &parent_ids,
        max_attempts,
        &|_| false,
    )?;
    out.offspring = out.offspring.map(|p| p.with_lineage(operator.tag(), parent_ids.clone()));
    Ok(out)
}

struct Run<'a> {
    key: SubclassKey,
    instances: &'a [ProblemInstance],
    client: &'a dyn LlmClient,
    config: &'a EvolutionConfig,
    rng: ChaCha8Rng,
    memo: HashMap<String, f64>,
    log: EvolutionLog,
    best: Option<HeuristicProgram>,
}

impl Run<'_> {
    fn remaining(&self) -> u64 {
        self.config.query_budget - self.log.queries_used
    }

    fn evaluate(&mut self, mut p: HeuristicProgram) -> HeuristicProgram {
        let f = match self.memo.get(&p.id) {
            Some(f) => *f,
            None => {
                let f = parallel_fitness(&p, self.instances);
                self.memo.insert(p.id.clone(), f);
                f
            }
        };
        p.fitness = Some(f);
        if self.best.as_ref().is_none_or(|b| f > member_fitness(b)) {
            self.best = Some(p.clone());
        }
        p
    }

    fn record(&mut self, records: Vec<QueryRecord>) {
        for mut r in records {
            r.query_index = self.log.queries_used;
            self.log.queries_used += 1;
            self.log.records.push(r);
        }
    }

    fn transport(&mut self, e: LlmError, records: Vec<QueryRecord>) -> EvolutionError {
        self.record(records);
        EvolutionError::Transport { source: e, log: Box::new(std::mem::take(&mut self.log)) }
    }

    fn random_member(&mut self, taken: &dyn Fn(&str) -> bool) -> Option<HeuristicProgram> {
        let kind = self.key.kind();
        (0..100).find_map(|_| {
            let p = HeuristicProgram::from_expr(kind, random_expr(kind, 3, &mut self.rng), "random substitute");
            (!taken(&p.id)).then(|| p.with_lineage("random", vec![]))
        })
    }

    fn init(&mut self) -> Result<Population, EvolutionError> {
        let kind = self.key.kind();
        let baseline = Builtin::baseline(kind).program();
        let mut pop = Population { members: vec![self.evaluate(baseline)], generation: 0 };
        let description = describe_subclass(&self.key);
        for slot in 1..self.config.population_size {
            let attempts = (self.config.parse_retry_limit as u64 + 1).min(self.remaining());
            let ids: Vec<String> = pop.members.iter().map(|m| m.id.clone()).collect();
            let messages = with_request_tag(render_init_prompt(&description, kind), &format!("init-{slot}"));
            let reject = |p: &HeuristicProgram| ids.contains(&p.id);
            let outcome = query_program(self.client, messages, kind, "init", &[], attempts, &reject);
            let program = match outcome {
                Ok(StepOutcome { offspring, records }) => {
                    self.record(records);
                    offspring.map(|p| p.with_lineage("init", vec![]))
                }
                Err(e) => return Err(self.transport(e.source, e.records)),
            };
            let program = match program {
                Some(p) => Some(p),
                None => self.random_member(&|id| ids.iter().any(|m| m == id)),
            };
            if let Some(p) = program {
                let p = self.evaluate(p);
                if let Some(last) = self.log.records.last_mut().filter(|r| r.offspring_id.as_deref() == Some(&p.id)) {
                    last.offspring_fitness = p.fitness;
                }
                pop.members.push(p);
                pop.sort();
            }
        }
        self.log.best_trajectory.push(member_fitness(self.best.as_ref().expect("baseline evaluated")));
        Ok(pop)
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub best: HeuristicProgram,
    pub baseline_fitness: f64,
    pub population: Population,
    pub log: EvolutionLog,
}

/// Initializes the population, then produces offspring with the operators
/// in cyclic order until the query budget is spent. Returns the best
/// program ever evaluated.
pub fn run_evolution(
    key: &SubclassKey,
    instances: &[ProblemInstance],
    client: &dyn LlmClient,
    config: &EvolutionConfig,
) -> Result<EvolutionResult, EvolutionError> {
    config.validate()?;
    if instances.is_empty() {
        return Err(EvolutionError::NoInstances);
    }
    let mut run = Run {
        key: *key,
        instances,
        client,
        config,
        rng: subclass_rng(config.seed, key, "evolution"),
        memo: HashMap::new(),
        log: EvolutionLog { subclass: key.label(), ..Default::default() },
        best: None,
    };
    let mut pop = run.init()?;
    let baseline_fitness = run.memo[&Builtin::baseline(key.kind()).program().id];

    let mut op_index = 0usize;
    let mut stalled = 0;
    while run.remaining() > 0 {
        let op = OperatorKind::ALL[op_index % OperatorKind::ALL.len()];
        op_index += 1;
        if pop.members.len() < op.arity() {
            stalled += 1;
            if stalled > OperatorKind::ALL.len() {
                break;
            }
            continue;
        }
        stalled = 0;
        let parents = roulette_select(&pop, op.arity(), &mut run.rng)?;
        let attempts = (config.parse_retry_limit as u64 + 1).min(run.remaining());
        let tag = format!("q{}", run.log.queries_used);
        let step = match evolve_step(op, &parents, client, key, attempts, &tag) {
            Ok(s) => s,
            Err(e) => return Err(run.transport(e.source, e.records)),
        };
        run.record(step.records);
        if let Some(child) = step.offspring {
            let child = run.evaluate(child);
            if let Some(last) = run.log.records.last_mut() {
                last.offspring_fitness = child.fitness;
            }
            pop.update(child, config.population_size);
        }
        run.log.best_trajectory.push(member_fitness(run.best.as_ref().expect("best exists")));
    }
    let best = run.best.take().expect("baseline evaluated");
    run.log.best_fitness = member_fitness(&best);
    run.log.best_id = best.id.clone();
    Ok(EvolutionResult { best, baseline_fitness, population: pop, log: run.log })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSearchOutcome {
    pub program: HeuristicProgram,
    pub fitness: f64,
    /// `None` when the incumbent was kept.
    pub source: Option<SubclassKey>,
    pub candidates_evaluated: usize,
}

/// The `k` pool keys nearest to `key` in standardized feature space,
/// excluding `key` itself; ties by key order.
pub fn nearest_keys(pool: &HeuristicPool, key: &SubclassKey, k: usize, stats: &FeatureStats) -> Vec<(SubclassKey, f64)> {
    let target = standardize(&feature_vector(key), stats);
    let mut dists: Vec<(SubclassKey, f64)> = pool
        .keys()
        .into_iter()
        .filter(|other| other != key)
        .map(|other| (other, target.distance(&standardize(&feature_vector(&other), stats))))
        .collect();
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    dists.truncate(k);
    dists
}

/// Evaluates the incumbent of `key` and the programs of its `k_n` nearest
/// pool neighbors on `instances`, keeping the best. The incumbent wins ties.
pub fn neighbor_search(
    pool: &HeuristicPool,
    key: &SubclassKey,
    instances: &[ProblemInstance],
    k_n: usize,
    stats: &FeatureStats,
) -> Option<NeighborSearchOutcome> {
    let incumbent = pool.lookup(key)?;
    let mut best = NeighborSearchOutcome {
        program: incumbent.program.clone(),
        fitness: incumbent.fitness_pre_ns,
        source: None,
        candidates_evaluated: 1,
    };
    let mut seen: HashMap<String, f64> = HashMap::new();
    seen.insert(incumbent.program.id.clone(), incumbent.fitness_pre_ns);
    for (other, _) in nearest_keys(pool, key, k_n, stats) {
        let program = &pool.lookup(&other).expect("key from pool").program;
        best.candidates_evaluated += 1;
        let f = *seen.entry(program.id.clone()).or_insert_with(|| parallel_fitness(program, instances));
        if f > best.fitness {
            best.fitness = f;
            best.program = program.clone();
            best.source = Some(other);
        }
    }
    best.program.fitness = Some(best.fitness);
    Some(best)
}

#[derive(Debug)]
pub struct BuildOutcome {
    pub pool: HeuristicPool,
    /// Evolution logs in subclass order (failed subclasses carry partial logs).
    pub logs: Vec<EvolutionLog>,
    pub baseline_fitness: Vec<(SubclassKey, f64)>,
}

/// Evolves every subclass (in parallel), then applies one neighbor-search
/// pass against the pre-search pool snapshot. Results do not depend on
/// the number of worker threads.
pub fn build_pool(
    keys: &[SubclassKey],
    config: &EvolutionConfig,
    client: &dyn LlmClient,
    client_identity: &str,
) -> Result<BuildOutcome, EvolutionError> {
    config.validate()?;
    let kind = match keys.first() {
        Some(k) => k.kind(),
        None => return Err(EvolutionError::Config("no subclasses to build".into())),
    };
    if keys.iter().any(|k| k.kind() != kind) {
        return Err(EvolutionError::Config("subclasses of different problem kinds".into()));
    }
    let mut keys = keys.to_vec();
    keys.sort();
    keys.dedup();

    let results: Vec<(SubclassKey, Result<EvolutionResult, EvolutionError>)> = keys
        .par_iter()
        .map(|key| {
            let res = training_instances(key, config)
                .map_err(EvolutionError::from)
                .and_then(|inst| run_evolution(key, &inst, client, config));
            (*key, res)
        })
        .collect();

    let metadata = BuildMetadata {
        master_seed: config.seed,
        config_digest: config.digest(),
        client: client_identity.to_string(),
        partial: false,
        failures: Vec::new(),
    };
    let mut pre = HeuristicPool::new(kind, metadata);
    let mut logs = Vec::new();
    let mut baselines = Vec::new();
    for (key, res) in results {
        match res {
            Ok(r) => {
                pre.insert(PoolEntry {
                    key,
                    fitness_pre_ns: member_fitness(&r.best),
                    fitness_post_ns: member_fitness(&r.best),
                    program: r.best,
                    ns_source: None,
                    queries_used: r.log.queries_used,
                })
                .expect("kinds checked");
                baselines.push((key, r.baseline_fitness));
                logs.push(r.log);
            }
            Err(e) => {
                log::warn!("subclass {key} failed: {e}");
                pre.metadata.partial = true;
                pre.metadata.failures.push((key.label(), e.to_string()));
                if let EvolutionError::Transport { log, .. } = e {
                    logs.push(*log);
                }
            }
        }
    }

    let Some(stats) = pre.stats().cloned() else {
        return Ok(BuildOutcome { pool: pre, logs, baseline_fitness: baselines });
    };
    let updates: Vec<(SubclassKey, Option<NeighborSearchOutcome>)> = pre
        .keys()
        .par_iter()
        .map(|key| {
            let inst = training_instances(key, config).expect("generated before");
            (*key, neighbor_search(&pre, key, &inst, config.k_n, &stats))
        })
        .collect();

    let mut pool = pre.clone();
    for (key, outcome) in updates {
        let Some(o) = outcome else { continue };
        let mut entry = pre.lookup(&key).expect("key from pool").clone();
        entry.fitness_post_ns = o.fitness;
        entry.ns_source = o.source;
        entry.program = o.program;
        pool.insert(entry).expect("kinds checked");
    }
    Ok(BuildOutcome { pool, logs, baseline_fitness: baselines })
}
