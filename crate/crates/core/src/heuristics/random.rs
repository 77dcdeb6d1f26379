//! Random expression trees ("grow" initialisation).

use rand::Rng;

use super::expr::{binding_set, Expr, BINARY_OPS, UNARY_OPS};
use crate::problems::ProblemKind;

/// A random constant with three decimals in `[-10, 10]`.
pub fn random_constant<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let v = (rng.gen_range(-10.0..=10.0f64) * 1000.0).round() / 1000.0;
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

pub fn random_leaf<R: Rng + ?Sized>(kind: ProblemKind, rng: &mut R) -> Expr {
    let vars = binding_set(kind);
    if rng.gen_bool(0.7) {
        Expr::var(vars[rng.gen_range(0..vars.len())])
    } else {
        Expr::constant(random_constant(rng))
    }
}

/// Grows a tree of depth at most `max_depth` (a leaf has depth 1).
pub fn random_expr<R: Rng + ?Sized>(kind: ProblemKind, max_depth: usize, rng: &mut R) -> Expr {
    if max_depth <= 1 || rng.gen_bool(0.3) {
        return random_leaf(kind, rng);
    }
    let d = max_depth - 1;
    match rng.gen_range(0..10) {
        0..=1 => Expr::unary(UNARY_OPS[rng.gen_range(0..UNARY_OPS.len())], random_expr(kind, d, rng)),
        2..=8 => Expr::binary(
            BINARY_OPS[rng.gen_range(0..BINARY_OPS.len())],
            random_expr(kind, d, rng),
            random_expr(kind, d, rng),
        ),
        _ => Expr::if_less(
            random_expr(kind, d, rng),
            random_expr(kind, d, rng),
            random_expr(kind, d, rng),
            random_expr(kind, d, rng),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::check_budget;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn respects_depth_and_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let e = random_expr(ProblemKind::Cvrp, 6, &mut rng);
            assert!(e.depth() <= 6);
            assert!(check_budget(&e).is_ok());
        }
    }
}
