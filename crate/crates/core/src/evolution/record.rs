use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_index: u64,
    /// `init` or an operator tag.
    pub phase: String,
    pub attempt: u64,
    pub parent_ids: Vec<String>,
    pub response_digest: String,
    pub outcome: String,
    pub offspring_id: Option<String>,
    pub offspring_fitness: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionLog {
    pub subclass: String,
    pub records: Vec<QueryRecord>,
    /// Best fitness seen so far, after initialization and after each offspring request.
    pub best_trajectory: Vec<f64>,
    pub queries_used: u64,
    pub best_fitness: f64,
    pub best_id: String,
}

impl EvolutionLog {
    /// One JSON object per query, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "summary": {
                "subclass": self.subclass,
                "queries_used": self.queries_used,
                "best_fitness": self.best_fitness,
                "best_id": self.best_id,
                "best_trajectory": self.best_trajectory,
            }
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}
