use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{
    Customer, CvrpInstance, CvrpSubclassKey, LocationDistribution, ObppInstance, ObppSubclassKey, Point,
    ProblemInstance, SequenceType, SubclassKey, WeightSampler, DEPOT,
};

const COORD_MAX: f64 = 100.0;
const GAUSSIAN_LOCATION_STD: f64 = 15.0;

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("capacity ratio {0} is outside (0, 1]")]
    BadRatio(f64),
    #[error("instance must have at least one item or customer")]
    Empty,
    #[error("capacity must be positive")]
    ZeroCapacity,
}

fn stream(key: &SubclassKey, seed: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"instance-stream");
    hasher.update(key.label().as_bytes());
    hasher.update(seed.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn check(count: u32, capacity: u32, ratio: f64) -> Result<(), GenerateError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(GenerateError::BadRatio(ratio));
    }
    if count == 0 {
        return Err(GenerateError::Empty);
    }
    if capacity == 0 {
        return Err(GenerateError::ZeroCapacity);
    }
    Ok(())
}

pub fn generate_obpp_instance(key: ObppSubclassKey, seed: u64) -> Result<ObppInstance, GenerateError> {
    check(key.num_items, key.capacity, key.capacity_ratio)?;
    let mut rng = stream(&key.into(), seed);
    let sampler = WeightSampler::new(key.weight_dist, key.capacity, key.capacity_ratio);
    let mut items = sampler.sample_stratified(key.num_items as usize, &mut rng);
    match key.sequence {
        SequenceType::Random => items.shuffle(&mut rng),
        SequenceType::NonDecreasing => items.sort_unstable(),
        SequenceType::NonIncreasing => items.sort_unstable_by(|a, b| b.cmp(a)),
    }
    Ok(ObppInstance { capacity: key.capacity, items, key, seed })
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

pub fn generate_cvrp_instance(key: CvrpSubclassKey, seed: u64) -> Result<CvrpInstance, GenerateError> {
    check(key.num_customers, key.vehicle_capacity, key.capacity_ratio)?;
    let n = key.num_customers as usize;
    let mut rng = stream(&key.into(), seed);

    let locations: Vec<Point> = match key.location_dist {
        LocationDistribution::Uniform => (0..n)
            .map(|_| Point {
                x: round6(rng.gen::<f64>() * COORD_MAX),
                y: round6(rng.gen::<f64>() * COORD_MAX),
            })
            .collect(),
        LocationDistribution::Gaussian => {
            let normal = Normal::new(0.0, GAUSSIAN_LOCATION_STD).expect("finite std");
            (0..n)
                .map(|_| Point {
                    x: round6((DEPOT.x + normal.sample(&mut rng)).clamp(0.0, COORD_MAX)),
                    y: round6((DEPOT.y + normal.sample(&mut rng)).clamp(0.0, COORD_MAX)),
                })
                .collect()
        }
        LocationDistribution::Grid => grid_points(n),
    };

    let sampler = WeightSampler::new(key.demand_dist, key.vehicle_capacity, key.capacity_ratio);
    let mut demands = sampler.sample_stratified(n, &mut rng);
    demands.shuffle(&mut rng);

    let customers = locations
        .into_iter()
        .zip(demands)
        .map(|(location, demand)| Customer { location, demand })
        .collect();
    Ok(CvrpInstance { depot: DEPOT, customers, vehicle_capacity: key.vehicle_capacity, key, seed })
}

/// First `n` cell centres, row-major, of the `ceil(sqrt(n))`-sided lattice over the square.
pub(crate) fn grid_points(n: usize) -> Vec<Point> {
    let side = (n as f64).sqrt().ceil().max(1.0) as usize;
    let step = COORD_MAX / side as f64;
    (0..n)
        .map(|cell| {
            let (row, col) = (cell / side, cell % side);
            Point { x: round6((col as f64 + 0.5) * step), y: round6((row as f64 + 0.5) * step) }
        })
        .collect()
}

pub fn generate_instance(key: &SubclassKey, seed: u64) -> Result<ProblemInstance, GenerateError> {
    match key {
        SubclassKey::Obpp(k) => generate_obpp_instance(*k, seed).map(ProblemInstance::Obpp),
        SubclassKey::Cvrp(k) => generate_cvrp_instance(*k, seed).map(ProblemInstance::Cvrp),
    }
}
