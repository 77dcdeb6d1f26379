//! One-instance-per-file JSON format.
//!
//! ```json
//! {"kind":"OBPP","key":{...},"seed":7,"capacity":100,"items":[12,40,...]}
//! {"kind":"CVRP","key":{...},"seed":3,"vehicle_capacity":100,
//!  "depot":{"x":50.0,"y":50.0},"customers":[{"x":1.5,"y":2.25,"demand":7},...]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Customer, CvrpInstance, CvrpSubclassKey, ObppInstance, ObppSubclassKey, Point, ProblemInstance, ProblemKind,
};

#[derive(Debug, Error)]
pub enum InstanceFileError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed instance file {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("invalid instance in {path}: {reason}")]
    Invalid { path: String, reason: String },
}

#[derive(Serialize, Deserialize)]
struct CustomerRecord {
    x: f64,
    y: f64,
    demand: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum InstanceRecord {
    #[serde(rename = "OBPP")]
    Obpp { key: ObppSubclassKey, seed: u64, capacity: u32, items: Vec<u32> },
    #[serde(rename = "CVRP")]
    Cvrp {
        key: CvrpSubclassKey,
        seed: u64,
        vehicle_capacity: u32,
        depot: Point,
        customers: Vec<CustomerRecord>,
    },
}

impl From<&ProblemInstance> for InstanceRecord {
    fn from(instance: &ProblemInstance) -> Self {
        match instance {
            ProblemInstance::Obpp(i) => InstanceRecord::Obpp {
                key: i.key,
                seed: i.seed,
                capacity: i.capacity,
                items: i.items.clone(),
            },
            ProblemInstance::Cvrp(i) => InstanceRecord::Cvrp {
                key: i.key,
                seed: i.seed,
                vehicle_capacity: i.vehicle_capacity,
                depot: i.depot,
                customers: i
                    .customers
                    .iter()
                    .map(|c| CustomerRecord { x: c.location.x, y: c.location.y, demand: c.demand })
                    .collect(),
            },
        }
    }
}

impl From<InstanceRecord> for ProblemInstance {
    fn from(record: InstanceRecord) -> Self {
        match record {
            InstanceRecord::Obpp { key, seed, capacity, items } => {
                ProblemInstance::Obpp(ObppInstance { capacity, items, key, seed })
            }
            InstanceRecord::Cvrp { key, seed, vehicle_capacity, depot, customers } => {
                ProblemInstance::Cvrp(CvrpInstance {
                    depot,
                    customers: customers
                        .into_iter()
                        .map(|c| Customer { location: Point { x: c.x, y: c.y }, demand: c.demand })
                        .collect(),
                    vehicle_capacity,
                    key,
                    seed,
                })
            }
        }
    }
}

pub fn instance_to_json(instance: &ProblemInstance) -> String {
    serde_json::to_string(&InstanceRecord::from(instance)).expect("instance records always serialize")
}

pub fn instance_from_json(text: &str) -> Result<ProblemInstance, serde_json::Error> {
    serde_json::from_str::<InstanceRecord>(text).map(Into::into)
}

pub fn write_instance(instance: &ProblemInstance, path: &Path) -> Result<(), InstanceFileError> {
    let mut text = instance_to_json(instance);
    text.push('\n');
    fs::write(path, text).map_err(|source| InstanceFileError::Io { path: path.display().to_string(), source })
}

/// Reads and validates an instance file.
pub fn read_instance(path: &Path) -> Result<ProblemInstance, InstanceFileError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| InstanceFileError::Io { path: p.clone(), source })?;
    let instance = instance_from_json(&text).map_err(|source| InstanceFileError::Json { path: p.clone(), source })?;
    instance.validate().map_err(|reason| InstanceFileError::Invalid { path: p, reason })?;
    Ok(instance)
}

impl ProblemKind {
    pub fn file_tag(self) -> &'static str {
        match self {
            ProblemKind::Obpp => "obpp",
            ProblemKind::Cvrp => "cvrp",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate_instance, SubclassKey};

    #[test]
    fn file_round_trip_both_kinds() {
        let dir = tempfile::tempdir().unwrap();
        for label in ["obpp/500/gaussian/random/150/0.4", "cvrp/200/gaussian/weibull/75/0.3"] {
            let key = SubclassKey::parse_label(label).unwrap();
            let inst = generate_instance(&key, 9).unwrap();
            let path = dir.path().join("x.json");
            write_instance(&inst, &path).unwrap();
            assert_eq!(read_instance(&path).unwrap(), inst);
        }
    }

    #[test]
    fn json_shape() {
        let key = SubclassKey::parse_label("cvrp/200/grid/uniform/100/0.5").unwrap();
        let inst = generate_instance(&key, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&instance_to_json(&inst)).unwrap();
        assert_eq!(v["kind"], "CVRP");
        assert_eq!(v["vehicle_capacity"], 100);
        assert_eq!(v["depot"]["x"], 50.0);
        assert_eq!(v["key"]["location_dist"], "Grid");
        assert!(v["customers"][0]["demand"].is_u64());
        for c in v["customers"].as_array().unwrap() {
            let text = c["x"].to_string();
            let frac = text.split('.').nth(1).map_or(0, str::len);
            assert!(frac <= 6, "{text}");
        }
    }

    #[test]
    fn invalid_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\"kind\":\"OBPP\"").unwrap();
        assert!(matches!(read_instance(&path), Err(InstanceFileError::Json { .. })));
        let key = SubclassKey::parse_label("obpp/500/uniform/random/50/0.3").unwrap();
        let text = instance_to_json(&generate_instance(&key, 0).unwrap()).replace("\"capacity\":50", "\"capacity\":5");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_instance(&path), Err(InstanceFileError::Invalid { .. })));
    }
}
