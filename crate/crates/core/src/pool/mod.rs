//! The heuristic pool: one champion program per subclass, persisted as JSON.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heuristics::{parse, HeuristicProgram, LineageStep, ParseError};
use crate::problems::{compute_feature_stats, FeatureStats, ProblemKind, SubclassKey};

pub const POOL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub key: SubclassKey,
    pub program: HeuristicProgram,
    pub fitness_pre_ns: f64,
    pub fitness_post_ns: f64,
    /// Subclass whose program was installed by neighbor search, if any.
    pub ns_source: Option<SubclassKey>,
    pub queries_used: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildMetadata {
    pub master_seed: u64,
    pub config_digest: String,
    pub client: String,
    pub partial: bool,
    /// `(subclass label, message)` for every subclass that failed to build.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicPool {
    pub kind: ProblemKind,
    entries: BTreeMap<SubclassKey, PoolEntry>,
    stats: Option<FeatureStats>,
    pub metadata: BuildMetadata,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("pool file is corrupt: {0}")]
    Corrupt(String),
    #[error("pool schema version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("program for subclass {key} does not parse: {source}")]
    BadProgram { key: String, source: ParseError },
    #[error("invalid pool: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    key: SubclassKey,
    program_id: String,
    program: String,
    description: String,
    fitness_pre_ns: f64,
    fitness_post_ns: f64,
    ns_source: Option<String>,
    queries_used: u64,
    lineage: Vec<LineageStep>,
}

#[derive(Serialize, Deserialize)]
struct PoolFile {
    schema_version: u32,
    kind: ProblemKind,
    metadata: BuildMetadata,
    feature_stats: Option<FeatureStats>,
    entries: Vec<EntryRecord>,
}

impl HeuristicPool {
    pub fn new(kind: ProblemKind, metadata: BuildMetadata) -> Self {
        Self { kind, entries: BTreeMap::new(), stats: None, metadata }
    }

    /// Inserts or replaces the entry for `entry.key` and refreshes the
    /// feature statistics.
    pub fn insert(&mut self, entry: PoolEntry) -> Result<(), PoolError> {
        if entry.key.kind() != self.kind || entry.program.kind != self.kind {
            return Err(PoolError::Invalid(format!("entry {} does not match pool kind {}", entry.key, self.kind)));
        }
        self.entries.insert(entry.key, entry);
        self.refresh_stats();
        Ok(())
    }

    fn refresh_stats(&mut self) {
        let keys: Vec<SubclassKey> = self.entries.keys().copied().collect();
        self.stats = compute_feature_stats(&keys).ok();
    }

    pub fn lookup(&self, key: &SubclassKey) -> Option<&PoolEntry> {
        self.entries.get(key)
    }

    /// Entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.values()
    }

    pub fn keys(&self) -> Vec<SubclassKey> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Standardization statistics over the pool's keys; `None` when empty.
    pub fn stats(&self) -> Option<&FeatureStats> {
        self.stats.as_ref()
    }

    /// Distinct program ids, sorted.
    pub fn heuristic_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.entries.values().map(|e| e.program.id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn program_by_id(&self, id: &str) -> Option<&HeuristicProgram> {
        self.entries.values().map(|e| &e.program).find(|p| p.id == id)
    }

    pub fn to_json(&self) -> String {
        let file = PoolFile {
            schema_version: POOL_SCHEMA_VERSION,
            kind: self.kind,
            metadata: self.metadata.clone(),
            feature_stats: self.stats.clone(),
            entries: self
                .entries
                .values()
                .map(|e| EntryRecord {
                    key: e.key,
                    program_id: e.program.id.clone(),
                    program: e.program.render(),
                    description: e.program.description.clone(),
                    fitness_pre_ns: e.fitness_pre_ns,
                    fitness_post_ns: e.fitness_post_ns,
                    ns_source: e.ns_source.map(|k| k.label()),
                    queries_used: e.queries_used,
                    lineage: e.program.lineage.clone(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("pool serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, PoolError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| PoolError::Corrupt(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| PoolError::Corrupt("missing schema_version".into()))?;
        if found != POOL_SCHEMA_VERSION as u64 {
            return Err(PoolError::Version { found, expected: POOL_SCHEMA_VERSION });
        }
        let file: PoolFile = serde_json::from_value(value).map_err(|e| PoolError::Corrupt(e.to_string()))?;

        let mut entries = BTreeMap::new();
        for r in file.entries {
            let label = r.key.label();
            if r.key.kind() != file.kind {
                return Err(PoolError::Invalid(format!("entry {label} is not a {} subclass", file.kind)));
            }
            let mut program =
                parse(&r.program, file.kind).map_err(|source| PoolError::BadProgram { key: label.clone(), source })?;
            if program.id != r.program_id {
                return Err(PoolError::Invalid(format!("entry {label}: program id does not match its text")));
            }
            if !(r.fitness_post_ns >= r.fitness_pre_ns) {
                return Err(PoolError::Invalid(format!("entry {label}: post-NS fitness below pre-NS fitness")));
            }
            let ns_source = r
                .ns_source
                .map(|s| SubclassKey::parse_label(&s))
                .transpose()
                .map_err(|e| PoolError::Invalid(format!("entry {label}: {e}")))?;
            program.description = r.description;
            program.lineage = r.lineage;
            program.fitness = Some(r.fitness_post_ns);
            let entry = PoolEntry {
                key: r.key,
                program,
                fitness_pre_ns: r.fitness_pre_ns,
                fitness_post_ns: r.fitness_post_ns,
                ns_source,
                queries_used: r.queries_used,
            };
            if entries.insert(r.key, entry).is_some() {
                return Err(PoolError::Invalid(format!("duplicate entry {label}")));
            }
        }
        let mut pool = Self { kind: file.kind, entries, stats: None, metadata: file.metadata };
        pool.refresh_stats();
        if !stats_match(pool.stats.as_ref(), file.feature_stats.as_ref()) {
            return Err(PoolError::Invalid("feature statistics do not match the entry keys".into()));
        }
        Ok(pool)
    }

    /// Writes via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<(), PoolError> {
        let io_err = |source| PoolError::Io { path: path.display().to_string(), source };
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        tmp.write_all(self.to_json().as_bytes()).map_err(io_err)?;
        tmp.persist(path).map_err(|e| io_err(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PoolError> {
        let text = fs::read_to_string(path).map_err(|source| PoolError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

fn stats_match(a: Option<&FeatureStats>, b: Option<&FeatureStats>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => {
            let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-9 * p.abs().max(1.0));
            close(&a.mean, &b.mean) && close(&a.std, &b.std)
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::builtin;
    use crate::problems::{ObppSubclassKey, SequenceType, WeightDistribution};

    fn key(n: u32) -> SubclassKey {
        ObppSubclassKey::new(n, WeightDistribution::Uniform, SequenceType::Random, 100, 0.5).into()
    }

    fn entry(n: u32, name: &str) -> PoolEntry {
        let mut program = builtin(name).unwrap();
        program.fitness = Some(-10.0);
        PoolEntry { key: key(n), program, fitness_pre_ns: -11.0, fitness_post_ns: -10.0, ns_source: Some(key(1000)), queries_used: 7 }
    }

    fn sample_pool() -> HeuristicPool {
        let mut p = HeuristicPool::new(ProblemKind::Obpp, BuildMetadata { master_seed: 3, ..Default::default() });
        p.insert(entry(1000, "best_fit")).unwrap();
        p.insert(entry(500, "first_fit")).unwrap();
        p
    }

    #[test]
    fn empty_round_trip() {
        let p = HeuristicPool::new(ProblemKind::Cvrp, BuildMetadata::default());
        assert_eq!(HeuristicPool::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn round_trip_and_stable_bytes() {
        let p = sample_pool();
        let text = p.to_json();
        let back = HeuristicPool::from_json(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_json(), text);
        // entries are written in key order
        assert!(text.find("\"num_items\": 500").unwrap() < text.find("\"num_items\": 1000").unwrap());
    }

    #[test]
    fn lookup_semantics() {
        let p = sample_pool();
        assert_eq!(p.lookup(&key(500)).unwrap().program.id, builtin("first_fit").unwrap().id);
        assert!(p.lookup(&key(750)).is_none());
        assert_eq!(p.heuristic_ids().len(), 2);
    }

    #[test]
    fn distinct_load_errors() {
        let text = sample_pool().to_json();
        let tampered = text.replace("(-index)", "(-index +)");
        match HeuristicPool::from_json(&tampered) {
            Err(PoolError::BadProgram { key, .. }) => assert!(key.starts_with("obpp/500/")),
            other => panic!("expected bad program, got {other:?}"),
        }
        let versioned = text.replacen("\"schema_version\": 1", "\"schema_version\": 99", 1);
        assert!(matches!(HeuristicPool::from_json(&versioned), Err(PoolError::Version { found: 99, .. })));
        assert!(matches!(HeuristicPool::from_json("{\"schema"), Err(PoolError::Corrupt(_))));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.json");
        let p = sample_pool();
        p.save(&path).unwrap();
        let first = fs::read(&path).unwrap();
        HeuristicPool::load(&path).unwrap().save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }
}
