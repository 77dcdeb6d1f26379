//! Classical baselines coded directly, plus seeded instance sets.
#![allow(dead_code)]

use hhpool_core::problems::{
    enumerate_cvrp_subclasses, enumerate_obpp_subclasses, generate_cvrp_instance, generate_obpp_instance,
    CvrpInstance, CvrpSubclassKey, ObppInstance, ObppSubclassKey, LocationDistribution, SequenceType,
    WeightDistribution,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn best_fit_bins(inst: &ObppInstance) -> usize {
    let mut free: Vec<u32> = Vec::new();
    for &w in &inst.items {
        let mut pick: Option<usize> = None;
        for (i, &f) in free.iter().enumerate() {
            if f >= w && pick.is_none_or(|p| f < free[p]) {
                pick = Some(i);
            }
        }
        match pick {
            Some(i) => free[i] -= w,
            None => free.push(inst.capacity - w),
        }
    }
    free.len()
}

pub fn first_fit_bins(inst: &ObppInstance) -> usize {
    let mut free: Vec<u32> = Vec::new();
    for &w in &inst.items {
        match free.iter().position(|&f| f >= w) {
            Some(i) => free[i] -= w,
            None => free.push(inst.capacity - w),
        }
    }
    free.len()
}

/// Nearest feasible unvisited customer; back to the depot when none fits.
pub fn closest_priority_distance(inst: &CvrpInstance) -> f64 {
    let n = inst.customers.len();
    let mut visited = vec![false; n];
    let mut left = n;
    let mut pos = inst.depot;
    let mut load = inst.vehicle_capacity;
    let mut total = 0.0;
    while left > 0 {
        let mut pick: Option<(usize, f64)> = None;
        for (i, c) in inst.customers.iter().enumerate() {
            if visited[i] || c.demand > load {
                continue;
            }
            let d = pos.dist(&c.location);
            if pick.is_none_or(|(_, bd)| d < bd) {
                pick = Some((i, d));
            }
        }
        match pick {
            Some((i, d)) => {
                total += d;
                pos = inst.customers[i].location;
                load -= inst.customers[i].demand;
                visited[i] = true;
                left -= 1;
            }
            None => {
                total += pos.dist(&inst.depot);
                pos = inst.depot;
                load = inst.vehicle_capacity;
            }
        }
    }
    total + pos.dist(&inst.depot)
}

/// `count` instances from grid keys drawn with a seeded stream.
pub fn obpp_grid_sample(count: usize, seed: u64) -> Vec<ObppInstance> {
    let grid = enumerate_obpp_subclasses();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_obpp_instance(grid[rng.gen_range(0..grid.len())], rng.gen()).unwrap()).collect()
}

pub fn cvrp_grid_sample(count: usize, seed: u64) -> Vec<CvrpInstance> {
    let grid = enumerate_cvrp_subclasses();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_cvrp_instance(grid[rng.gen_range(0..grid.len())], rng.gen()).unwrap()).collect()
}

/// Off-grid OBPP instances with `lo..=hi` items.
pub fn small_obpp(count: usize, lo: u32, hi: u32, seed: u64) -> Vec<ObppInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let key = ObppSubclassKey::new(
                rng.gen_range(lo..=hi),
                WeightDistribution::ALL[rng.gen_range(0..3)],
                SequenceType::ALL[rng.gen_range(0..3)],
                [50, 100, 150][rng.gen_range(0..3)],
                [0.3, 0.4, 0.5, 0.6, 0.7][rng.gen_range(0..5)],
            );
            generate_obpp_instance(key, rng.gen()).unwrap()
        })
        .collect()
}

pub fn small_cvrp(count: usize, lo: u32, hi: u32, seed: u64) -> Vec<CvrpInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let key = CvrpSubclassKey::new(
                rng.gen_range(lo..=hi),
                LocationDistribution::ALL[rng.gen_range(0..3)],
                WeightDistribution::ALL[rng.gen_range(0..3)],
                [50, 100, 150][rng.gen_range(0..3)],
                [0.3, 0.5, 0.7][rng.gen_range(0..3)],
            );
            generate_cvrp_instance(key, rng.gen()).unwrap()
        })
        .collect()
}
