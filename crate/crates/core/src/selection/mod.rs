//! Routing an instance to a pool heuristic: distance-based pre-selection
//! followed by one of four choice strategies.

mod classifier;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classifier::{
    build_dataset, classifier_forward, loss_and_gradient, select_classifier, train_classifier, ClassifierError,
    ClassifierModel, TrainConfig, TrainOutcome, CLASSIFIER_SCHEMA_VERSION,
};

use crate::llm::{
    describe_subclass, parse_selection_response, render_selection_prompt, render_selection_retry_message,
    CandidateEntry, ChatMessage, LlmClient,
};
use crate::pool::HeuristicPool;
use crate::problems::{standardize, FeatureVector, SubclassKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Closest,
    Llm,
    Classifier,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Closest => "closest",
            Strategy::Llm => "llm",
            Strategy::Classifier => "classifier",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Strategy::Random),
            "closest" => Ok(Strategy::Closest),
            "llm" => Ok(Strategy::Llm),
            "classifier" => Ok(Strategy::Classifier),
            other => Err(format!("unknown strategy `{other}` (expected random, closest, llm or classifier)")),
        }
    }
}

/// Candidate-set size used when none is given.
pub fn default_k_c(strategy: Strategy, kind: crate::problems::ProblemKind) -> usize {
    use crate::problems::ProblemKind::*;
    match (strategy, kind) {
        (_, Cvrp) => 2,
        (Strategy::Classifier, Obpp) => 5,
        (_, Obpp) => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub key: SubclassKey,
    pub heuristic_id: String,
    pub distance: f64,
}

/// Nearest pool entries, ascending by distance (ties by key).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub entries: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.entries.iter().any(|c| c.heuristic_id == id)
    }

    /// Heuristic ids in candidate order, first occurrence only.
    pub fn distinct_ids(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.entries {
            if !out.contains(&c.heuristic_id.as_str()) {
                out.push(&c.heuristic_id);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub heuristic_id: String,
    /// Pool key whose entry supplied the chosen heuristic.
    pub chosen_key: SubclassKey,
    pub strategy: Strategy,
    pub queries_used: u64,
    /// Set when the strategy could not decide and the closest candidate was used.
    pub fallback: bool,
    pub candidates: CandidateSet,
}

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("the pool is empty")]
    EmptyPool,
    #[error("k_c must be at least 1")]
    ZeroK,
    #[error("the candidate set is empty")]
    NoCandidates,
    #[error("pool is for {pool} but the instance is {instance}")]
    KindMismatch { pool: crate::problems::ProblemKind, instance: crate::problems::ProblemKind },
}

/// The `k_c` pool entries nearest to the target's raw feature vector after
/// standardization with the pool statistics.
pub fn preselect(
    features: &FeatureVector,
    pool: &HeuristicPool,
    k_c: usize,
) -> Result<CandidateSet, SelectionError> {
    if k_c == 0 {
        return Err(SelectionError::ZeroK);
    }
    let stats = pool.stats().ok_or(SelectionError::EmptyPool)?;
    let target = standardize(features, stats);
    let mut entries: Vec<Candidate> = pool
        .entries()
        .map(|e| Candidate {
            key: e.key,
            heuristic_id: e.program.id.clone(),
            distance: target.distance(&standardize(&crate::problems::feature_vector(&e.key), stats)),
        })
        .collect();
    entries.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.key.cmp(&b.key)));
    entries.truncate(k_c);
    Ok(CandidateSet { entries })
}

/// Pre-selection for an instance whose declared key may be off-grid.
pub fn preselect_key(key: &SubclassKey, pool: &HeuristicPool, k_c: usize) -> Result<CandidateSet, SelectionError> {
    if key.kind() != pool.kind {
        return Err(SelectionError::KindMismatch { pool: pool.kind, instance: key.kind() });
    }
    preselect(&crate::problems::feature_vector(key), pool, k_c)
}

fn outcome(candidates: &CandidateSet, index: usize, strategy: Strategy, queries: u64, fallback: bool) -> SelectionOutcome {
    let c = &candidates.entries[index];
    SelectionOutcome {
        heuristic_id: c.heuristic_id.clone(),
        chosen_key: c.key,
        strategy,
        queries_used: queries,
        fallback,
        candidates: candidates.clone(),
    }
}

/// Uniform choice among the distinct heuristic ids.
pub fn select_random<R: Rng + ?Sized>(candidates: &CandidateSet, rng: &mut R) -> Result<SelectionOutcome, SelectionError> {
    let ids = candidates.distinct_ids();
    if ids.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let id = ids[rng.gen_range(0..ids.len())];
    let index = candidates.entries.iter().position(|c| c.heuristic_id == id).expect("id from set");
    Ok(outcome(candidates, index, Strategy::Random, 0, false))
}

pub fn select_closest(candidates: &CandidateSet) -> Result<SelectionOutcome, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    Ok(outcome(candidates, 0, Strategy::Closest, 0, false))
}

/// Asks the model to pick a candidate. Unusable answers are retried up to
/// `retry_limit` times; after that, or on a transport failure, the closest
/// candidate is returned with the fallback flag set.
pub fn select_llm(
    candidates: &CandidateSet,
    pool: &HeuristicPool,
    instance_description: &str,
    client: &dyn LlmClient,
    retry_limit: u32,
) -> Result<SelectionOutcome, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let entries: Vec<CandidateEntry> = candidates
        .entries
        .iter()
        .take(crate::llm::MAX_SELECTION_CANDIDATES)
        .map(|c| {
            let entry = pool.lookup(&c.key);
            CandidateEntry {
                subclass_description: describe_subclass(&c.key),
                program_text: entry.map(|e| e.program.render()).unwrap_or_default(),
                fitness: entry.map(|e| e.fitness_post_ns),
            }
        })
        .collect();
    let k = entries.len();
    let mut messages: Vec<ChatMessage> =
        render_selection_prompt(instance_description, &entries).expect("1..=16 candidates");
    let mut queries = 0;
    for _ in 0..=retry_limit {
        queries += 1;
        let reply = match client.complete(&messages) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("selection query failed: {e}");
                break;
            }
        };
        match parse_selection_response(&reply.text, k) {
            Ok(i) => return Ok(outcome(candidates, i - 1, Strategy::Llm, queries, false)),
            Err(e) => {
                let text = if reply.text.trim().is_empty() { "(empty)".to_string() } else { reply.text };
                messages.push(ChatMessage::assistant(text));
                messages.push(render_selection_retry_message(&e.to_string(), k));
            }
        }
    }
    Ok(outcome(candidates, 0, Strategy::Llm, queries, true))
}

#[cfg(test)]
mod tests;
