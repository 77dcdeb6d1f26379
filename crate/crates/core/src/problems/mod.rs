//! Problem domains, subclass grids and feature vectors.
//!
//! A subclass is one point of a five-dimensional feature grid. Instances are
//! generated per subclass from a seed and are pure functions of `(key, seed)`.

mod generate;
mod io;
mod sampling;

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use generate::{generate_cvrp_instance, generate_instance, generate_obpp_instance, GenerateError};
pub use io::{instance_from_json, instance_to_json};
pub use io::{read_instance, write_instance, InstanceFileError};
pub use sampling::WeightSampler;

/// Number of features describing a subclass.
pub const FEATURE_DIM: usize = 5;

pub const OBPP_NUM_ITEMS: [u32; 10] = [500, 1000, 1500, 2000, 2500, 3000, 3500, 4000, 4500, 5000];
pub const OBPP_CAPACITIES: [u32; 10] = [50, 100, 150, 200, 250, 300, 350, 400, 450, 500];
pub const OBPP_RATIOS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

pub const CVRP_NUM_CUSTOMERS: [u32; 5] = [200, 400, 600, 800, 1000];
pub const CVRP_CAPACITIES: [u32; 5] = [50, 75, 100, 125, 150];
pub const CVRP_RATIOS: [f64; 3] = [0.3, 0.5, 0.7];

/// Fixed depot location shared by every CVRP instance.
pub const DEPOT: Point = Point { x: 50.0, y: 50.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "OBPP")]
    Obpp,
    #[serde(rename = "CVRP")]
    Cvrp,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Obpp => "OBPP",
            ProblemKind::Cvrp => "CVRP",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "obpp" => Ok(ProblemKind::Obpp),
            "cvrp" => Ok(ProblemKind::Cvrp),
            other => Err(format!("unknown problem kind `{other}` (expected obpp or cvrp)")),
        }
    }
}

/// Item weight / customer demand distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WeightDistribution {
    Uniform,
    Gaussian,
    Weibull,
}

/// Arrival order of OBPP items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SequenceType {
    Random,
    NonDecreasing,
    NonIncreasing,
}

/// Spatial layout of CVRP customers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LocationDistribution {
    Uniform,
    Gaussian,
    Grid,
}

macro_rules! categorical {
    ($ty:ty, [$($variant:ident => $code:expr, $name:expr);+ $(;)?]) => {
        impl $ty {
            pub const ALL: [$ty; 3] = [$(<$ty>::$variant),+];

            /// Stable integer encoding used in feature vectors.
            pub fn code(self) -> u32 {
                match self { $(<$ty>::$variant => $code),+ }
            }

            pub fn from_code(code: u32) -> Option<Self> {
                match code { $($code => Some(<$ty>::$variant),)+ _ => None }
            }

            pub fn name(self) -> &'static str {
                match self { $(<$ty>::$variant => $name),+ }
            }
        }

        impl std::str::FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let lower = s.to_ascii_lowercase().replace(['-', '_'], "");
                $(if lower == $name.replace('-', "") { return Ok(<$ty>::$variant); })+
                Err(format!("unknown value `{s}`"))
            }
        }
    };
}

categorical!(WeightDistribution, [Uniform => 0, "uniform"; Gaussian => 1, "gaussian"; Weibull => 2, "weibull"]);
categorical!(SequenceType, [Random => 0, "random"; NonDecreasing => 1, "non-decreasing"; NonIncreasing => 2, "non-increasing"]);
categorical!(LocationDistribution, [Uniform => 0, "uniform"; Gaussian => 1, "gaussian"; Grid => 2, "grid"]);

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObppSubclassKey {
    pub num_items: u32,
    pub weight_dist: WeightDistribution,
    pub sequence: SequenceType,
    pub capacity: u32,
    pub capacity_ratio: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CvrpSubclassKey {
    pub num_customers: u32,
    pub location_dist: LocationDistribution,
    pub demand_dist: WeightDistribution,
    pub vehicle_capacity: u32,
    pub capacity_ratio: f64,
}

// The ratio is compared by its total order so keys can live in ordered maps.
macro_rules! key_ordering {
    ($ty:ty, $($field:ident),+) => {
        impl Ord for $ty {
            fn cmp(&self, other: &Self) -> Ordering {
                Ordering::Equal
                    $(.then_with(|| self.$field.cmp(&other.$field)))+
                    .then_with(|| self.capacity_ratio.total_cmp(&other.capacity_ratio))
            }
        }

        impl PartialOrd for $ty {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl PartialEq for $ty {
            fn eq(&self, other: &Self) -> bool {
                self.cmp(other) == Ordering::Equal
            }
        }

        impl Eq for $ty {}

        impl Hash for $ty {
            fn hash<H: Hasher>(&self, state: &mut H) {
                $(self.$field.hash(state);)+
                self.capacity_ratio.to_bits().hash(state);
            }
        }
    };
}

key_ordering!(ObppSubclassKey, num_items, weight_dist, sequence, capacity);
key_ordering!(CvrpSubclassKey, num_customers, location_dist, demand_dist, vehicle_capacity);

impl ObppSubclassKey {
    pub fn new(
        num_items: u32,
        weight_dist: WeightDistribution,
        sequence: SequenceType,
        capacity: u32,
        capacity_ratio: f64,
    ) -> Self {
        Self { num_items, weight_dist, sequence, capacity, capacity_ratio }
    }

    pub fn is_grid_point(&self) -> bool {
        OBPP_NUM_ITEMS.contains(&self.num_items)
            && OBPP_CAPACITIES.contains(&self.capacity)
            && OBPP_RATIOS.iter().any(|r| *r == self.capacity_ratio)
    }
}

impl CvrpSubclassKey {
    pub fn new(
        num_customers: u32,
        location_dist: LocationDistribution,
        demand_dist: WeightDistribution,
        vehicle_capacity: u32,
        capacity_ratio: f64,
    ) -> Self {
        Self { num_customers, location_dist, demand_dist, vehicle_capacity, capacity_ratio }
    }

    pub fn is_grid_point(&self) -> bool {
        CVRP_NUM_CUSTOMERS.contains(&self.num_customers)
            && CVRP_CAPACITIES.contains(&self.vehicle_capacity)
            && CVRP_RATIOS.iter().any(|r| *r == self.capacity_ratio)
    }
}

/// A point in either subclass grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubclassKey {
    Obpp(ObppSubclassKey),
    Cvrp(CvrpSubclassKey),
}

impl From<ObppSubclassKey> for SubclassKey {
    fn from(k: ObppSubclassKey) -> Self {
        SubclassKey::Obpp(k)
    }
}

impl From<CvrpSubclassKey> for SubclassKey {
    fn from(k: CvrpSubclassKey) -> Self {
        SubclassKey::Cvrp(k)
    }
}

/// Names of the feature dimensions, in feature-vector order.
pub fn feature_names(kind: ProblemKind) -> [&'static str; FEATURE_DIM] {
    match kind {
        ProblemKind::Obpp => ["num_items", "weight_dist", "sequence", "capacity", "capacity_ratio"],
        ProblemKind::Cvrp => [
            "num_customers",
            "location_dist",
            "demand_dist",
            "vehicle_capacity",
            "capacity_ratio",
        ],
    }
}

impl SubclassKey {
    pub fn kind(&self) -> ProblemKind {
        match self {
            SubclassKey::Obpp(_) => ProblemKind::Obpp,
            SubclassKey::Cvrp(_) => ProblemKind::Cvrp,
        }
    }

    pub fn capacity_ratio(&self) -> f64 {
        match self {
            SubclassKey::Obpp(k) => k.capacity_ratio,
            SubclassKey::Cvrp(k) => k.capacity_ratio,
        }
    }

    pub fn is_grid_point(&self) -> bool {
        match self {
            SubclassKey::Obpp(k) => k.is_grid_point(),
            SubclassKey::Cvrp(k) => k.is_grid_point(),
        }
    }

    /// Compact, stable text form, e.g. `obpp/500/uniform/random/100/0.5`.
    pub fn label(&self) -> String {
        match self {
            SubclassKey::Obpp(k) => format!(
                "obpp/{}/{}/{}/{}/{}",
                k.num_items,
                k.weight_dist.name(),
                k.sequence.name(),
                k.capacity,
                k.capacity_ratio
            ),
            SubclassKey::Cvrp(k) => format!(
                "cvrp/{}/{}/{}/{}/{}",
                k.num_customers,
                k.location_dist.name(),
                k.demand_dist.name(),
                k.vehicle_capacity,
                k.capacity_ratio
            ),
        }
    }

    /// Parses the output of [`SubclassKey::label`].
    pub fn parse_label(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.trim().split('/').collect();
        if parts.len() != 6 {
            return Err(format!("expected 6 `/`-separated fields in `{text}`"));
        }
        let int = |s: &str| s.parse::<u32>().map_err(|e| format!("bad integer `{s}`: {e}"));
        let ratio = parts[5].parse::<f64>().map_err(|e| format!("bad ratio `{}`: {e}", parts[5]))?;
        match parts[0].parse::<ProblemKind>()? {
            ProblemKind::Obpp => Ok(SubclassKey::Obpp(ObppSubclassKey::new(
                int(parts[1])?,
                parts[2].parse()?,
                parts[3].parse()?,
                int(parts[4])?,
                ratio,
            ))),
            ProblemKind::Cvrp => Ok(SubclassKey::Cvrp(CvrpSubclassKey::new(
                int(parts[1])?,
                parts[2].parse()?,
                parts[3].parse()?,
                int(parts[4])?,
                ratio,
            ))),
        }
    }

    /// SHA-256 of the label; the basis for per-key RNG streams.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.label().as_bytes()).into()
    }
}

impl fmt::Display for SubclassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Seed of the `index`-th instance of a subclass under a master seed.
pub fn instance_seed(master_seed: u64, key: &SubclassKey, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"instance-seed");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(key.label().as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// The full OBPP grid in lexicographic order (4500 keys).
pub fn enumerate_obpp_subclasses() -> Vec<ObppSubclassKey> {
    let mut keys = Vec::with_capacity(4500);
    for &num_items in &OBPP_NUM_ITEMS {
        for weight_dist in WeightDistribution::ALL {
            for sequence in SequenceType::ALL {
                for &capacity in &OBPP_CAPACITIES {
                    for &ratio in &OBPP_RATIOS {
                        keys.push(ObppSubclassKey::new(num_items, weight_dist, sequence, capacity, ratio));
                    }
                }
            }
        }
    }
    keys
}

/// The full CVRP grid in lexicographic order (675 keys).
pub fn enumerate_cvrp_subclasses() -> Vec<CvrpSubclassKey> {
    let mut keys = Vec::with_capacity(675);
    for &num_customers in &CVRP_NUM_CUSTOMERS {
        for location_dist in LocationDistribution::ALL {
            for demand_dist in WeightDistribution::ALL {
                for &capacity in &CVRP_CAPACITIES {
                    for &ratio in &CVRP_RATIOS {
                        keys.push(CvrpSubclassKey::new(num_customers, location_dist, demand_dist, capacity, ratio));
                    }
                }
            }
        }
    }
    keys
}

pub fn enumerate_subclasses(kind: ProblemKind) -> Vec<SubclassKey> {
    match kind {
        ProblemKind::Obpp => enumerate_obpp_subclasses().into_iter().map(Into::into).collect(),
        ProblemKind::Cvrp => enumerate_cvrp_subclasses().into_iter().map(Into::into).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    pub fn distance(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Raw feature vector: numeric fields as-is, categorical fields by their integer code.
pub fn feature_vector(key: &SubclassKey) -> FeatureVector {
    match key {
        SubclassKey::Obpp(k) => FeatureVector([
            k.num_items as f64,
            k.weight_dist.code() as f64,
            k.sequence.code() as f64,
            k.capacity as f64,
            k.capacity_ratio,
        ]),
        SubclassKey::Cvrp(k) => FeatureVector([
            k.num_customers as f64,
            k.location_dist.code() as f64,
            k.demand_dist.code() as f64,
            k.vehicle_capacity as f64,
            k.capacity_ratio,
        ]),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot compute feature statistics over an empty key set")]
    EmptyKeySet,
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl FeatureStats {
    /// Dimensions whose standard deviation is zero; these standardize to 0.
    pub fn degenerate(&self) -> [bool; FEATURE_DIM] {
        self.std.map(|s| s == 0.0)
    }
}

pub fn compute_feature_stats(keys: &[SubclassKey]) -> Result<FeatureStats, FeatureError> {
    if keys.is_empty() {
        return Err(FeatureError::EmptyKeySet);
    }
    let vectors: Vec<FeatureVector> = keys.iter().map(feature_vector).collect();
    Ok(stats_of_vectors(&vectors))
}

pub(crate) fn stats_of_vectors(vectors: &[FeatureVector]) -> FeatureStats {
    let n = vectors.len() as f64;
    let mut mean = [0.0; FEATURE_DIM];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.0.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; FEATURE_DIM];
    for v in vectors {
        for d in 0..FEATURE_DIM {
            let diff = v.0[d] - mean[d];
            var[d] += diff * diff;
        }
    }
    let mut std = var.map(|v| (v / n).sqrt());
    // Floating residue from identical values must not look like spread.
    for d in 0..FEATURE_DIM {
        if std[d] <= 1e-12 * mean[d].abs().max(1.0) {
            std[d] = 0.0;
        }
    }
    FeatureStats { mean, std }
}

pub fn standardize(fv: &FeatureVector, stats: &FeatureStats) -> FeatureVector {
    let mut out = [0.0; FEATURE_DIM];
    for d in 0..FEATURE_DIM {
        out[d] = if stats.std[d] == 0.0 { 0.0 } else { (fv.0[d] - stats.mean[d]) / stats.std[d] };
    }
    FeatureVector(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn dist(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObppInstance {
    pub capacity: u32,
    pub items: Vec<u32>,
    pub key: ObppSubclassKey,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub location: Point,
    pub demand: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvrpInstance {
    pub depot: Point,
    pub customers: Vec<Customer>,
    pub vehicle_capacity: u32,
    pub key: CvrpSubclassKey,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemInstance {
    Obpp(ObppInstance),
    Cvrp(CvrpInstance),
}

impl ProblemInstance {
    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemInstance::Obpp(_) => ProblemKind::Obpp,
            ProblemInstance::Cvrp(_) => ProblemKind::Cvrp,
        }
    }

    pub fn key(&self) -> SubclassKey {
        match self {
            ProblemInstance::Obpp(i) => i.key.into(),
            ProblemInstance::Cvrp(i) => i.key.into(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ProblemInstance::Obpp(i) => i.seed,
            ProblemInstance::Cvrp(i) => i.seed,
        }
    }

    /// Identifier used in reports and reference-objective files.
    pub fn id(&self) -> String {
        format!("{}#{:016x}", self.key().label(), self.seed())
    }

    /// Checks the generator invariants (feasibility and declared length).
    pub fn validate(&self) -> Result<(), String> {
        match self {
            ProblemInstance::Obpp(inst) => {
                if inst.items.len() != inst.key.num_items as usize {
                    return Err(format!(
                        "instance has {} items but key declares {}",
                        inst.items.len(),
                        inst.key.num_items
                    ));
                }
                if inst.capacity != inst.key.capacity {
                    return Err("capacity differs from key".into());
                }
                if let Some(w) = inst.items.iter().find(|&&w| w == 0 || w > inst.capacity) {
                    return Err(format!("item weight {w} outside [1, {}]", inst.capacity));
                }
                Ok(())
            }
            ProblemInstance::Cvrp(inst) => {
                if inst.customers.len() != inst.key.num_customers as usize {
                    return Err(format!(
                        "instance has {} customers but key declares {}",
                        inst.customers.len(),
                        inst.key.num_customers
                    ));
                }
                if inst.vehicle_capacity != inst.key.vehicle_capacity {
                    return Err("vehicle capacity differs from key".into());
                }
                if let Some(c) = inst.customers.iter().find(|c| c.demand == 0 || c.demand > inst.vehicle_capacity) {
                    return Err(format!("demand {} outside [1, {}]", c.demand, inst.vehicle_capacity));
                }
                Ok(())
            }
        }
    }
}

/// Numeric features derived from raw instance data, for cross-checking declarations.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedFeatures {
    pub count: f64,
    pub capacity: f64,
    pub realized_ratio: f64,
}

pub fn derive_features(instance: &ProblemInstance) -> DerivedFeatures {
    match instance {
        ProblemInstance::Obpp(i) => {
            let n = i.items.len().max(1) as f64;
            let mean = i.items.iter().map(|&w| w as f64).sum::<f64>() / n;
            DerivedFeatures {
                count: i.items.len() as f64,
                capacity: i.capacity as f64,
                realized_ratio: mean / i.capacity as f64,
            }
        }
        ProblemInstance::Cvrp(i) => {
            let n = i.customers.len().max(1) as f64;
            let mean = i.customers.iter().map(|c| c.demand as f64).sum::<f64>() / n;
            DerivedFeatures {
                count: i.customers.len() as f64,
                capacity: i.vehicle_capacity as f64,
                realized_ratio: mean / i.vehicle_capacity as f64,
            }
        }
    }
}

/// Names of numeric features whose derived value differs from the declared
/// one by more than 10% relative error.
pub fn feature_mismatches(instance: &ProblemInstance) -> Vec<&'static str> {
    let derived = derive_features(instance);
    let declared = feature_vector(&instance.key()).0;
    let names = feature_names(instance.kind());
    let pairs = [(0, derived.count), (3, derived.capacity), (4, derived.realized_ratio)];
    pairs
        .iter()
        .filter(|(dim, value)| {
            let d = declared[*dim];
            (value - d).abs() > 0.10 * d.abs()
        })
        .map(|(dim, _)| names[*dim])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obpp_grid_size_and_order() {
        // 10 * 3 * 3 * 10 * 5
        assert_eq!(
            OBPP_NUM_ITEMS.len() * 3 * 3 * OBPP_CAPACITIES.len() * OBPP_RATIOS.len(),
            4500
        );
        let keys = enumerate_obpp_subclasses();
        assert_eq!(keys.len(), 4500);
        assert_eq!(
            keys[0],
            ObppSubclassKey::new(500, WeightDistribution::Uniform, SequenceType::Random, 50, 0.3)
        );
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cvrp_grid_size_and_order() {
        assert_eq!(CVRP_NUM_CUSTOMERS.len() * 3 * 3 * CVRP_CAPACITIES.len() * CVRP_RATIOS.len(), 675);
        let keys = enumerate_cvrp_subclasses();
        assert_eq!(keys.len(), 675);
        assert_eq!(
            keys[0],
            CvrpSubclassKey::new(200, LocationDistribution::Uniform, WeightDistribution::Uniform, 50, 0.3)
        );
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_keys_are_unique() {
        let obpp: std::collections::HashSet<_> = enumerate_obpp_subclasses().into_iter().collect();
        assert_eq!(obpp.len(), 4500);
        let cvrp: std::collections::HashSet<_> = enumerate_cvrp_subclasses().into_iter().collect();
        assert_eq!(cvrp.len(), 675);
    }

    #[test]
    fn feature_vector_encodings() {
        let k = ObppSubclassKey::new(500, WeightDistribution::Uniform, SequenceType::Random, 100, 0.5);
        assert_eq!(feature_vector(&k.into()).0, [500.0, 0.0, 0.0, 100.0, 0.5]);
        let k = ObppSubclassKey::new(1000, WeightDistribution::Weibull, SequenceType::NonIncreasing, 50, 0.7);
        assert_eq!(feature_vector(&k.into()).0, [1000.0, 2.0, 2.0, 50.0, 0.7]);
    }

    #[test]
    fn equal_feature_vectors_mean_equal_keys() {
        let keys = enumerate_subclasses(ProblemKind::Obpp);
        let mut seen = std::collections::HashMap::new();
        for k in &keys {
            let bits = feature_vector(k).0.map(f64::to_bits);
            assert!(seen.insert(bits, *k).is_none(), "two keys share a feature vector");
        }
    }

    #[test]
    fn stats_degenerate_and_two_point() {
        let single = [SubclassKey::from(ObppSubclassKey::new(
            500,
            WeightDistribution::Gaussian,
            SequenceType::Random,
            100,
            0.5,
        ))];
        let stats = compute_feature_stats(&single).unwrap();
        assert_eq!(stats.std, [0.0; 5]);
        assert_eq!(stats.degenerate(), [true; 5]);

        let two = stats_of_vectors(&[FeatureVector([0.0; 5]), FeatureVector([2.0; 5])]);
        assert_eq!(two.mean, [1.0; 5]);
        assert_eq!(two.std, [1.0; 5]);

        assert_eq!(compute_feature_stats(&[]), Err(FeatureError::EmptyKeySet));
    }

    #[test]
    fn full_grid_mean_of_scale() {
        let stats = compute_feature_stats(&enumerate_subclasses(ProblemKind::Obpp)).unwrap();
        // (500 + 5000) / 2
        assert!((stats.mean[0] - 2750.0).abs() < 1e-9);
        assert!((stats.mean[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_cases() {
        let stats = FeatureStats { mean: [1.0, 2.0, 3.0, 4.0, 5.0], std: [1.0, 2.0, 0.0, 4.0, 0.5] };
        assert_eq!(standardize(&FeatureVector(stats.mean), &stats).0, [0.0; 5]);
        let shifted = FeatureVector([2.0, 4.0, 3.0, 8.0, 5.5]);
        assert_eq!(standardize(&shifted, &stats).0, [1.0, 1.0, 0.0, 1.0, 1.0]);
        let off = FeatureVector([1.0, 2.0, 99.0, 4.0, 5.0]);
        assert_eq!(standardize(&off, &stats).0[2], 0.0);
    }

    #[test]
    fn label_round_trip() {
        for k in enumerate_subclasses(ProblemKind::Cvrp).iter().step_by(37) {
            assert_eq!(SubclassKey::parse_label(&k.label()).unwrap(), *k);
        }
        let k = SubclassKey::parse_label("obpp/750/weibull/non-decreasing/120/0.45").unwrap();
        assert!(!k.is_grid_point());
    }

    #[test]
    fn instance_seeds_differ_by_index_and_key() {
        let keys = enumerate_subclasses(ProblemKind::Obpp);
        let a = instance_seed(0, &keys[0], 0);
        assert_ne!(a, instance_seed(0, &keys[0], 1));
        assert_ne!(a, instance_seed(0, &keys[1], 0));
        assert_ne!(a, instance_seed(1, &keys[0], 0));
        assert_eq!(a, instance_seed(0, &keys[0], 0));
    }
}
