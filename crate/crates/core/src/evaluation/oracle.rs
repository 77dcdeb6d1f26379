//! Exact solvers for tiny instances, used as optimality oracles.

use thiserror::Error;

use crate::problems::{CvrpInstance, ObppInstance};

pub const MAX_BRUTE_FORCE_ITEMS: usize = 12;
pub const MAX_BRUTE_FORCE_CUSTOMERS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("instance has {actual} elements; exact search supports at most {limit}")]
    SizeExceeded { actual: usize, limit: usize },
}

/// Minimum number of bins over all assignments (offline optimum).
pub fn brute_force_obpp(instance: &ObppInstance) -> Result<usize, OracleError> {
    let n = instance.items.len();
    if n > MAX_BRUTE_FORCE_ITEMS {
        return Err(OracleError::SizeExceeded { actual: n, limit: MAX_BRUTE_FORCE_ITEMS });
    }
    if n == 0 {
        return Ok(0);
    }
    let mut items = instance.items.clone();
    items.sort_unstable_by(|a, b| b.cmp(a));
    let total: u64 = items.iter().map(|&w| w as u64).sum();
    let lower = total.div_ceil(instance.capacity as u64) as usize;

    let mut best = n;
    let mut loads = Vec::with_capacity(n);
    bin_search(&items, 0, instance.capacity, &mut loads, &mut best, lower);
    Ok(best)
}

fn bin_search(items: &[u32], i: usize, capacity: u32, loads: &mut Vec<u32>, best: &mut usize, lower: usize) {
    if *best == lower {
        return;
    }
    if i == items.len() {
        *best = (*best).min(loads.len());
        return;
    }
    let w = items[i];
    for b in 0..loads.len() {
        // Bins with equal load are interchangeable; try only the first.
        if loads[b] + w > capacity || loads[..b].contains(&loads[b]) {
            continue;
        }
        loads[b] += w;
        bin_search(items, i + 1, capacity, loads, best, lower);
        loads[b] -= w;
    }
    if loads.len() + 1 < *best {
        loads.push(w);
        bin_search(items, i + 1, capacity, loads, best, lower);
        loads.pop();
    }
}

/// Minimum total distance over all partitions of customers into
/// capacity-feasible routes and all visiting orders within each route.
pub fn brute_force_cvrp(instance: &CvrpInstance) -> Result<f64, OracleError> {
    let n = instance.customers.len();
    if n > MAX_BRUTE_FORCE_CUSTOMERS {
        return Err(OracleError::SizeExceeded { actual: n, limit: MAX_BRUTE_FORCE_CUSTOMERS });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let full = 1usize << n;
    let locs: Vec<_> = instance.customers.iter().map(|c| c.location).collect();
    let from_depot: Vec<f64> = locs.iter().map(|l| instance.depot.dist(l)).collect();

    // path[mask][j]: shortest depot -> ... -> j path visiting exactly `mask`.
    let mut path = vec![vec![f64::INFINITY; n]; full];
    for j in 0..n {
        path[1 << j][j] = from_depot[j];
    }
    for mask in 1..full {
        for j in 0..n {
            let cur = path[mask][j];
            if mask & (1 << j) == 0 || !cur.is_finite() {
                continue;
            }
            for k in 0..n {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let cand = cur + locs[j].dist(&locs[k]);
                if cand < path[next][k] {
                    path[next][k] = cand;
                }
            }
        }
    }

    let mut route = vec![f64::INFINITY; full];
    for (mask, cost) in route.iter_mut().enumerate().skip(1) {
        let demand: u32 = (0..n).filter(|j| mask & (1 << j) != 0).map(|j| instance.customers[j].demand).sum();
        if demand > instance.vehicle_capacity {
            continue;
        }
        *cost = (0..n)
            .filter(|j| mask & (1 << j) != 0)
            .map(|j| path[mask][j] + from_depot[j])
            .fold(f64::INFINITY, f64::min);
    }

    let mut best = vec![f64::INFINITY; full];
    best[0] = 0.0;
    for mask in 1..full {
        // The route containing the lowest customer in `mask` fixes the split.
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let part = sub | low;
            let cand = route[part] + best[mask ^ part];
            if cand < best[mask] {
                best[mask] = cand;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    Ok(best[full - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{pack_obpp, route_cvrp};
    use crate::heuristics::builtin;
    use crate::problems::{
        Customer, CvrpSubclassKey, LocationDistribution, ObppSubclassKey, Point, SequenceType, WeightDistribution,
        DEPOT,
    };

    fn obpp(capacity: u32, items: &[u32]) -> ObppInstance {
        let key =
            ObppSubclassKey::new(items.len() as u32, WeightDistribution::Uniform, SequenceType::Random, capacity, 0.5);
        ObppInstance { capacity, items: items.to_vec(), key, seed: 0 }
    }

    fn cvrp(capacity: u32, customers: &[(f64, f64, u32)]) -> CvrpInstance {
        let key = CvrpSubclassKey::new(
            customers.len() as u32,
            LocationDistribution::Uniform,
            WeightDistribution::Uniform,
            capacity,
            0.5,
        );
        CvrpInstance {
            depot: DEPOT,
            customers: customers.iter().map(|&(x, y, demand)| Customer { location: Point { x, y }, demand }).collect(),
            vehicle_capacity: capacity,
            key,
            seed: 0,
        }
    }

    #[test]
    fn obpp_small_cases() {
        assert_eq!(brute_force_obpp(&obpp(7, &[5, 4, 3, 2])), Ok(2));
        assert_eq!(brute_force_obpp(&obpp(9, &[9, 9, 9, 9])), Ok(4));
        assert_eq!(brute_force_obpp(&obpp(10, &[4, 4, 3, 3, 3, 3])), Ok(2));
        assert!(matches!(brute_force_obpp(&obpp(10, &[1; 13])), Err(OracleError::SizeExceeded { .. })));
    }

    #[test]
    fn obpp_optimum_never_exceeds_best_fit() {
        let inst = obpp(10, &[3, 7, 5, 5, 2, 8, 6, 4, 1, 9]);
        let opt = brute_force_obpp(&inst).unwrap();
        assert_eq!(opt, 5);
        assert!(opt <= pack_obpp(&inst, &builtin("best_fit").unwrap()).bin_count);
    }

    #[test]
    fn cvrp_one_and_two_customers() {
        let one = cvrp(10, &[(50.0, 60.0, 3)]);
        assert!((brute_force_cvrp(&one).unwrap() - 20.0).abs() < 1e-12);

        let pts = [(20.0, 50.0, 4), (20.0, 60.0, 4)];
        let two = cvrp(10, &pts);
        let d = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let depot = (50.0, 50.0);
        let (a, b) = ((pts[0].0, pts[0].1), (pts[1].0, pts[1].1));
        let joint_ab = d(depot, a) + d(a, b) + d(b, depot);
        let joint_ba = d(depot, b) + d(b, a) + d(a, depot);
        let separate = 2.0 * d(depot, a) + 2.0 * d(depot, b);
        let expect = joint_ab.min(joint_ba).min(separate);
        assert!((brute_force_cvrp(&two).unwrap() - expect).abs() < 1e-12);

        let tight = cvrp(5, &pts);
        assert!((brute_force_cvrp(&tight).unwrap() - separate).abs() < 1e-12);
    }

    #[test]
    fn cvrp_optimum_never_exceeds_greedy() {
        let inst = cvrp(
            10,
            &[(10.0, 10.0, 3), (90.0, 15.0, 4), (30.0, 80.0, 5), (70.0, 70.0, 2), (45.0, 20.0, 6), (60.0, 40.0, 3)],
        );
        let opt = brute_force_cvrp(&inst).unwrap();
        let greedy = route_cvrp(&inst, &builtin("closest_priority").unwrap()).total_distance;
        assert!(opt <= greedy + 1e-9);
    }
}
