//! Per-instance results, reference objectives and grouped summaries.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{brute_force_cvrp, obpp_lower_bound, objective, optimality_gap, EvaluationError, MAX_BRUTE_FORCE_CUSTOMERS};
use crate::heuristics::HeuristicProgram;
use crate::problems::{feature_names, feature_vector, ProblemInstance, SubclassKey};

pub const REPORT_CSV_HEADER: &str = "group,feature_value,mean_obj,mean_gap,one_minus_gap";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown feature dimension `{name}` (expected one of: {expected})")]
    UnknownDimension { name: String, expected: String },
    #[error("report has no rows")]
    Empty,
    #[error("rows mix OBPP and CVRP instances")]
    MixedKinds,
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed reference file {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance_id: String,
    pub key: SubclassKey,
    pub heuristic_id: String,
    pub objective: f64,
    pub reference: Option<f64>,
    pub gap: Option<f64>,
    pub baseline_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub group: String,
    pub feature_value: String,
    pub count: usize,
    pub mean_obj: f64,
    pub mean_gap: Option<f64>,
    pub one_minus_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<InstanceRow>,
    pub mean_objective: f64,
    /// Mean over the rows that have a gap; `None` when no row has one.
    pub mean_gap: Option<f64>,
    pub mean_baseline_objective: Option<f64>,
    pub group_by: Option<String>,
    pub groups: Vec<FeatureGroup>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(group: &str, value: &str, rows: &[&InstanceRow]) -> FeatureGroup {
    let mean_gap = mean(rows.iter().filter_map(|r| r.gap));
    FeatureGroup {
        group: group.to_string(),
        feature_value: value.to_string(),
        count: rows.len(),
        mean_obj: mean(rows.iter().map(|r| r.objective)).unwrap_or(0.0),
        mean_gap,
        one_minus_gap: mean_gap.map(|g| 1.0 - g / 100.0),
    }
}

impl EvaluationReport {
    /// Builds a report whose means are recomputed from `rows`. With a
    /// dimension, `groups` holds the grouped summary; otherwise a single
    /// `all` row.
    pub fn from_rows(rows: Vec<InstanceRow>, group_by: Option<&str>) -> Result<Self, ReportError> {
        if rows.is_empty() {
            return Err(ReportError::Empty);
        }
        let groups = match group_by {
            Some(dim) => aggregate_by_feature(&rows, dim)?,
            None => vec![summarize("all", "all", &rows.iter().collect::<Vec<_>>())],
        };
        Ok(Self {
            mean_objective: mean(rows.iter().map(|r| r.objective)).unwrap_or(0.0),
            mean_gap: mean(rows.iter().filter_map(|r| r.gap)),
            mean_baseline_objective: mean(rows.iter().filter_map(|r| r.baseline_objective)),
            group_by: group_by.map(str::to_string),
            groups,
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for g in &self.groups {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                g.group,
                g.feature_value,
                g.mean_obj,
                fmt(g.mean_gap),
                fmt(g.one_minus_gap)
            ));
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json` next to each other.
    pub fn write(&self, csv_path: &Path) -> Result<(), ReportError> {
        let io_err = |p: &Path| {
            let path = p.display().to_string();
            move |source| ReportError::Io { path, source }
        };
        fs::write(csv_path, self.to_csv()).map_err(io_err(csv_path))?;
        let json_path = csv_path.with_extension("json");
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(&json_path, json).map_err(io_err(&json_path))
    }
}

/// Groups rows by one feature dimension and averages within each group.
/// Groups are ordered by the raw feature value.
pub fn aggregate_by_feature(rows: &[InstanceRow], dimension: &str) -> Result<Vec<FeatureGroup>, ReportError> {
    let kind = rows.first().ok_or(ReportError::Empty)?.key.kind();
    if rows.iter().any(|r| r.key.kind() != kind) {
        return Err(ReportError::MixedKinds);
    }
    let names = feature_names(kind);
    let dim = names.iter().position(|n| *n == dimension).ok_or_else(|| ReportError::UnknownDimension {
        name: dimension.to_string(),
        expected: names.join(", "),
    })?;

    let mut buckets: Vec<(f64, String, Vec<&InstanceRow>)> = Vec::new();
    for row in rows {
        let raw = feature_vector(&row.key).0[dim];
        match buckets.iter_mut().find(|b| b.0 == raw) {
            Some(b) => b.2.push(row),
            None => {
                let label = row.key.label();
                let shown = label.split('/').nth(dim + 1).unwrap_or_default().to_string();
                buckets.push((raw, shown, vec![row]));
            }
        }
    }
    buckets.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(buckets.iter().map(|(_, shown, group)| summarize(dimension, shown, group)).collect())
}

/// Reference objective for the gap: the bin lower bound for OBPP; for CVRP
/// the supplied reference if any, else the exact optimum on tiny instances.
pub fn reference_objective(instance: &ProblemInstance, references: &BTreeMap<String, f64>) -> Option<f64> {
    if let Some(r) = references.get(&instance.id()) {
        return Some(*r);
    }
    match instance {
        ProblemInstance::Obpp(i) => Some(obpp_lower_bound(i)),
        ProblemInstance::Cvrp(i) if i.customers.len() <= MAX_BRUTE_FORCE_CUSTOMERS => brute_force_cvrp(i).ok(),
        ProblemInstance::Cvrp(_) => None,
    }
}

/// Runs `program` (and optionally a baseline) on one instance.
pub fn evaluate_instance(
    program: &HeuristicProgram,
    instance: &ProblemInstance,
    references: &BTreeMap<String, f64>,
    baseline: Option<&HeuristicProgram>,
) -> Result<InstanceRow, ReportError> {
    let obj = objective(program, instance)?;
    let reference = reference_objective(instance, references);
    let gap = match reference {
        Some(r) if r != 0.0 => Some(optimality_gap(obj, r)?),
        _ => None,
    };
    let baseline_objective = baseline.map(|b| objective(b, instance)).transpose()?;
    Ok(InstanceRow {
        instance_id: instance.id(),
        key: instance.key(),
        heuristic_id: program.id.clone(),
        objective: obj,
        reference,
        gap,
        baseline_objective,
    })
}

/// Reads a JSON object mapping instance id to reference objective.
pub fn load_reference_file(path: &Path) -> Result<BTreeMap<String, f64>, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json { path: path.display().to_string(), source })
}

pub fn save_reference_file(path: &Path, references: &BTreeMap<String, f64>) -> Result<(), ReportError> {
    let json = serde_json::to_string_pretty(references).expect("map serializes");
    fs::write(path, json).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}
