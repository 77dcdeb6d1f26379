//! Running priority functions on instances and measuring the result.

mod oracle;
mod report;

use thiserror::Error;

pub use oracle::{brute_force_cvrp, brute_force_obpp, OracleError, MAX_BRUTE_FORCE_CUSTOMERS, MAX_BRUTE_FORCE_ITEMS};
pub use report::{
    aggregate_by_feature, evaluate_instance, load_reference_file, reference_objective, save_reference_file,
    EvaluationReport, FeatureGroup, InstanceRow, ReportError, REPORT_CSV_HEADER,
};

use crate::heuristics::{Env, HeuristicProgram, Var, VAR_COUNT};
use crate::problems::{CvrpInstance, ObppInstance, ProblemInstance, ProblemKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObppSolution {
    /// Bin index of each item, in arrival order.
    pub assignments: Vec<usize>,
    pub bin_count: usize,
    pub loads: Vec<u32>,
}

impl ObppSolution {
    /// Checks capacity, density of bin indices and consistency of loads.
    pub fn check(&self, instance: &ObppInstance) -> Result<(), String> {
        if self.assignments.len() != instance.items.len() {
            return Err("assignment count differs from item count".into());
        }
        if self.loads.len() != self.bin_count {
            return Err("load vector length differs from bin count".into());
        }
        let mut loads = vec![0u32; self.bin_count];
        for (&bin, &w) in self.assignments.iter().zip(&instance.items) {
            if bin >= self.bin_count {
                return Err(format!("bin index {bin} out of range"));
            }
            loads[bin] += w;
        }
        if loads != self.loads {
            return Err("recorded loads do not match assignments".into());
        }
        if let Some(l) = loads.iter().find(|&&l| l > instance.capacity || l == 0) {
            return Err(format!("bin load {l} is empty or exceeds capacity {}", instance.capacity));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvrpSolution {
    /// Customer indices per route; the depot is implicit at both ends.
    pub routes: Vec<Vec<usize>>,
    pub total_distance: f64,
}

/// Length of a route set including depot departures and returns.
pub fn routes_distance(instance: &CvrpInstance, routes: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    for route in routes {
        let mut pos = instance.depot;
        for &c in route {
            let next = instance.customers[c].location;
            total += pos.dist(&next);
            pos = next;
        }
        total += pos.dist(&instance.depot);
    }
    total
}

impl CvrpSolution {
    pub fn check(&self, instance: &CvrpInstance) -> Result<(), String> {
        let mut seen = vec![false; instance.customers.len()];
        for route in &self.routes {
            if route.is_empty() {
                return Err("empty route".into());
            }
            let mut load = 0u32;
            for &c in route {
                if c >= seen.len() || seen[c] {
                    return Err(format!("customer {c} missing from instance or visited twice"));
                }
                seen[c] = true;
                load += instance.customers[c].demand;
            }
            if load > instance.vehicle_capacity {
                return Err(format!("route load {load} exceeds capacity {}", instance.vehicle_capacity));
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(format!("customer {c} never visited"));
        }
        let recomputed = routes_distance(instance, &self.routes);
        if (recomputed - self.total_distance).abs() > 1e-9 {
            return Err(format!("distance {} differs from recomputed {recomputed}", self.total_distance));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("program is for {program} but the instance is {instance}")]
    KindMismatch { program: ProblemKind, instance: ProblemKind },
    #[error("fitness needs at least one instance")]
    NoInstances,
    #[error("reference objective is zero")]
    ZeroReference,
}

/// Online packing: each arriving item goes to the feasible open bin with the
/// highest score (ties: lowest index). A bin is opened only when no open bin
/// can take the item.
pub fn pack_obpp(instance: &ObppInstance, program: &HeuristicProgram) -> ObppSolution {
    let capacity = instance.capacity;
    let cap = capacity as f64;
    let mut loads: Vec<u32> = Vec::new();
    let mut assignments = Vec::with_capacity(instance.items.len());
    let mut env: Env = [0.0; VAR_COUNT];
    env[Var::Capacity.slot()] = cap;

    for &item in &instance.items {
        env[Var::Item.slot()] = item as f64;
        env[Var::BinsOpen.slot()] = loads.len() as f64;
        let mut best: Option<(usize, f64)> = None;
        for (idx, &load) in loads.iter().enumerate() {
            let remaining = capacity - load;
            if remaining < item {
                continue;
            }
            env[Var::Remaining.slot()] = remaining as f64;
            env[Var::Fill.slot()] = load as f64 / cap;
            env[Var::Index.slot()] = idx as f64;
            let s = program.score(&env);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((idx, s));
            }
        }
        let bin = match best {
            Some((idx, _)) => idx,
            None => {
                loads.push(0);
                loads.len() - 1
            }
        };
        loads[bin] += item;
        assignments.push(bin);
    }
    ObppSolution { assignments, bin_count: loads.len(), loads }
}

/// Constructive routing: from the current position, drive to the feasible
/// unvisited customer with the highest score (ties: lowest index); when none
/// fits, return to the depot and start a new route with full capacity.
pub fn route_cvrp(instance: &CvrpInstance, program: &HeuristicProgram) -> CvrpSolution {
    let n = instance.customers.len();
    let capacity = instance.vehicle_capacity;
    let depot = instance.depot;
    let depot_dist: Vec<f64> = instance.customers.iter().map(|c| depot.dist(&c.location)).collect();
    let mut unvisited: Vec<usize> = (0..n).collect();
    let mut routes: Vec<Vec<usize>> = Vec::new();
    let mut env: Env = [0.0; VAR_COUNT];
    env[Var::Capacity.slot()] = capacity as f64;

    let mut current: Vec<usize> = Vec::new();
    let mut pos = depot;
    let mut remaining = capacity;
    let mut total = 0.0;
    while !unvisited.is_empty() {
        env[Var::Remaining.slot()] = remaining as f64;
        env[Var::DistPDepot.slot()] = pos.dist(&depot);
        env[Var::Unserved.slot()] = unvisited.len() as f64;
        let mut best: Option<(usize, usize, f64)> = None; // (slot in unvisited, customer, score)
        for (slot, &c) in unvisited.iter().enumerate() {
            let cust = &instance.customers[c];
            if cust.demand > remaining {
                continue;
            }
            env[Var::Dist.slot()] = pos.dist(&cust.location);
            env[Var::Demand.slot()] = cust.demand as f64;
            env[Var::DistDepotC.slot()] = depot_dist[c];
            let s = program.score(&env);
            let better = match best {
                None => true,
                Some((_, bc, bs)) => s > bs || (s == bs && c < bc),
            };
            if better {
                best = Some((slot, c, s));
            }
        }
        match best {
            Some((slot, c, _)) => {
                let loc = instance.customers[c].location;
                total += pos.dist(&loc);
                pos = loc;
                remaining -= instance.customers[c].demand;
                current.push(c);
                unvisited.swap_remove(slot);
            }
            None => {
                // Demands never exceed capacity, so a fresh vehicle always has a candidate.
                debug_assert!(!current.is_empty());
                total += pos.dist(&depot);
                routes.push(std::mem::take(&mut current));
                pos = depot;
                remaining = capacity;
            }
        }
    }
    if !current.is_empty() {
        total += pos.dist(&depot);
        routes.push(current);
    }
    CvrpSolution { routes, total_distance: total }
}

/// `ceil(total weight / capacity)`.
pub fn obpp_lower_bound(instance: &ObppInstance) -> f64 {
    let total: u64 = instance.items.iter().map(|&w| w as u64).sum();
    total.div_ceil(instance.capacity as u64) as f64
}

/// `100 * (obj - ref) / |ref|`.
pub fn optimality_gap(objective: f64, reference: f64) -> Result<f64, EvaluationError> {
    if reference == 0.0 {
        return Err(EvaluationError::ZeroReference);
    }
    Ok(100.0 * (objective - reference) / reference.abs())
}

/// Objective of a program on one instance: bins used (OBPP) or total distance (CVRP).
pub fn objective(program: &HeuristicProgram, instance: &ProblemInstance) -> Result<f64, EvaluationError> {
    if program.kind != instance.kind() {
        return Err(EvaluationError::KindMismatch { program: program.kind, instance: instance.kind() });
    }
    Ok(match instance {
        ProblemInstance::Obpp(i) => pack_obpp(i, program).bin_count as f64,
        ProblemInstance::Cvrp(i) => route_cvrp(i, program).total_distance,
    })
}

/// Negated mean objective; higher is better.
pub fn fitness(program: &HeuristicProgram, instances: &[ProblemInstance]) -> Result<f64, EvaluationError> {
    if instances.is_empty() {
        return Err(EvaluationError::NoInstances);
    }
    let objectives = instances.iter().map(|i| objective(program, i)).collect::<Result<Vec<_>, _>>()?;
    Ok(fitness_from_objectives(&objectives))
}

pub fn fitness_from_objectives(objectives: &[f64]) -> f64 {
    -(objectives.iter().sum::<f64>() / objectives.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::{builtin, parse};
    use crate::problems::{
        Customer, CvrpSubclassKey, LocationDistribution, ObppSubclassKey, Point, SequenceType, WeightDistribution,
        DEPOT,
    };

    fn obpp(capacity: u32, items: &[u32]) -> ObppInstance {
        let key = ObppSubclassKey::new(
            items.len() as u32,
            WeightDistribution::Uniform,
            SequenceType::Random,
            capacity,
            0.5,
        );
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
            customers: customers
                .iter()
                .map(|&(x, y, demand)| Customer { location: Point { x, y }, demand })
                .collect(),
            vehicle_capacity: capacity,
            key,
            seed: 0,
        }
    }

    #[test]
    fn best_fit_hand_trace() {
        let inst = obpp(10, &[6, 5, 4, 3, 2]);
        let sol = pack_obpp(&inst, &builtin("best_fit").unwrap());
        assert_eq!(sol.bin_count, 2);
        assert_eq!(sol.assignments, vec![0, 1, 0, 1, 1]);
        assert_eq!(sol.loads, vec![10, 10]);
        sol.check(&inst).unwrap();
    }

    #[test]
    fn best_fit_and_first_fit_differ_on_placement() {
        let inst = obpp(10, &[5, 6, 4]);
        let bf = pack_obpp(&inst, &builtin("best_fit").unwrap());
        let ff = pack_obpp(&inst, &builtin("first_fit").unwrap());
        assert_eq!(bf.assignments, vec![0, 1, 1]);
        assert_eq!(ff.assignments, vec![0, 1, 0]);
        assert_eq!((bf.bin_count, ff.bin_count), (2, 2));
    }

    #[test]
    fn single_item_one_bin() {
        let sol = pack_obpp(&obpp(10, &[7]), &builtin("first_fit").unwrap());
        assert_eq!(sol.bin_count, 1);
    }

    #[test]
    fn scores_never_open_bins_early() {
        // Scores every bin terribly; the item still goes to an open feasible bin.
        let p = parse("-1e18", ProblemKind::Obpp).unwrap();
        let sol = pack_obpp(&obpp(10, &[2, 2, 2, 2, 2]), &p);
        assert_eq!(sol.bin_count, 1);
    }

    #[test]
    fn single_customer_route() {
        let inst = cvrp(10, &[(53.0, 54.0, 4)]);
        let sol = route_cvrp(&inst, &builtin("closest_priority").unwrap());
        assert_eq!(sol.routes, vec![vec![0]]);
        assert!((sol.total_distance - 10.0).abs() < 1e-12);
        sol.check(&inst).unwrap();
    }

    #[test]
    fn full_demands_force_singletons() {
        let inst = cvrp(5, &[(10.0, 10.0, 5), (20.0, 80.0, 5), (90.0, 40.0, 5)]);
        let sol = route_cvrp(&inst, &builtin("closest_priority").unwrap());
        assert_eq!(sol.routes.len(), 3);
        sol.check(&inst).unwrap();
    }

    #[test]
    fn route_ties_go_to_lowest_index() {
        let inst = cvrp(10, &[(60.0, 50.0, 6), (40.0, 50.0, 6)]);
        let sol = route_cvrp(&inst, &builtin("closest_priority").unwrap());
        assert_eq!(sol.routes, vec![vec![0], vec![1]]);
    }

    #[test]
    fn lower_bound_ceiling() {
        assert_eq!(obpp_lower_bound(&obpp(10, &[10, 10])), 2.0);
        assert_eq!(obpp_lower_bound(&obpp(10, &[10, 10, 1])), 3.0);
    }

    #[test]
    fn gap_arithmetic() {
        assert_eq!(optimality_gap(5.0, 5.0), Ok(0.0));
        assert_eq!(optimality_gap(90.0, 100.0), Ok(-10.0));
        assert_eq!(optimality_gap(1.0, 0.0), Err(EvaluationError::ZeroReference));
        assert_eq!(optimality_gap(-90.0, -100.0), Ok(10.0));
    }

    #[test]
    fn fitness_is_negated_mean() {
        assert_eq!(fitness_from_objectives(&[10.0, 12.0, 14.0]), -12.0);
        let p = builtin("best_fit").unwrap();
        assert_eq!(fitness(&p, &[]), Err(EvaluationError::NoInstances));
        let c = ProblemInstance::Cvrp(cvrp(10, &[(1.0, 1.0, 1)]));
        assert!(matches!(fitness(&p, &[c]), Err(EvaluationError::KindMismatch { .. })));
    }
}
