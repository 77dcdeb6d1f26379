//! Algebraic clean-up of expression trees.
//!
//! Every rewrite preserves the value computed by [`Expr::eval`] for all
//! environments, including the protected-operator and clamping semantics.

use rand::Rng;

use super::expr::{BinaryOp, Expr, UnaryOp};

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == v)
}

/// Bottom-up simplification to a fixed point.
pub fn simplify(e: &Expr) -> Expr {
    let mut cur = e.clone();
    loop {
        let next = simplify_once(&cur);
        if next == cur {
            return next;
        }
        cur = next;
    }
}

fn simplify_once(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Unary(op, inner) => {
            let inner = simplify_once(inner);
            if let Expr::Const(c) = inner {
                return Expr::Const(Expr::unary(*op, Expr::Const(c)).eval(&[0.0; super::VAR_COUNT]));
            }
            match (op, &inner) {
                (UnaryOp::Neg, Expr::Unary(UnaryOp::Neg, x)) => (**x).clone(),
                (UnaryOp::Abs, Expr::Unary(UnaryOp::Abs, _)) => inner,
                (UnaryOp::Abs, Expr::Unary(UnaryOp::Neg, x)) => Expr::unary(UnaryOp::Abs, (**x).clone()),
                _ => Expr::unary(*op, inner),
            }
        }
        Expr::Binary(op, a, b) => {
            let a = simplify_once(a);
            let b = simplify_once(b);
            if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                return Expr::Const(Expr::binary(*op, Expr::Const(*x), Expr::Const(*y)).eval(&[0.0; super::VAR_COUNT]));
            }
            match op {
                BinaryOp::Min | BinaryOp::Max if a == b => a,
                BinaryOp::Add if is_const(&b, 0.0) => a,
                BinaryOp::Add if is_const(&a, 0.0) => b,
                BinaryOp::Sub if is_const(&b, 0.0) => a,
                BinaryOp::Sub if is_const(&a, 0.0) => Expr::unary(UnaryOp::Neg, b),
                BinaryOp::Mul if is_const(&b, 1.0) => a,
                BinaryOp::Mul if is_const(&a, 1.0) => b,
                BinaryOp::DivP if is_const(&b, 1.0) => a,
                BinaryOp::PowC if is_const(&b, 1.0) => a,
                _ => Expr::binary(*op, a, b),
            }
        }
        Expr::IfLess(a, b, t, f) => {
            let (a, b, t, f) = (simplify_once(a), simplify_once(b), simplify_once(t), simplify_once(f));
            if t == f || a == b {
                // equal branches, or `a < a` which is always false
                return f;
            }
            if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                return if x < y { t } else { f };
            }
            Expr::if_less(a, b, t, f)
        }
    }
}

/// Replaces one random internal node by one of its children. Strictly reduces
/// the node count unless the tree is a single leaf.
pub fn prune<R: Rng + ?Sized>(e: &Expr, rng: &mut R) -> Expr {
    let internal: Vec<usize> = {
        let mut idx = Vec::new();
        let mut i = 0;
        e.visit(&mut |n| {
            if !n.children().is_empty() {
                idx.push(i);
            }
            i += 1;
        });
        idx
    };
    if internal.is_empty() {
        return e.clone();
    }
    let target = internal[rng.gen_range(0..internal.len())];
    let mut out = e.clone();
    let node = out.subtree_mut(target).expect("index from traversal");
    let children = node.children();
    let pick = children[rng.gen_range(0..children.len())].clone();
    *node = pick;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::{parse_expr, random::random_expr, Var, VAR_COUNT};
    use crate::problems::ProblemKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obpp(s: &str) -> Expr {
        parse_expr(s, ProblemKind::Obpp).unwrap()
    }

    #[test]
    fn removes_redundancy() {
        assert_eq!(simplify(&obpp("min(item, item)")), obpp("item"));
        assert_eq!(simplify(&obpp("(remaining - item) * 1 + 0")), obpp("remaining - item"));
        assert_eq!(simplify(&obpp("-(-(fill))")), obpp("fill"));
        assert_eq!(simplify(&obpp("iflt(item, item, 3, fill)")), obpp("fill"));
        assert_eq!(simplify(&obpp("2 * 3 + index")), obpp("6 + index"));
    }

    #[test]
    fn preserves_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let e = random_expr(ProblemKind::Obpp, 5, &mut rng);
            let s = simplify(&e);
            assert!(s.node_count() <= e.node_count());
            for _ in 0..5 {
                let mut env = [0.0; VAR_COUNT];
                for slot in env.iter_mut() {
                    *slot = rng.gen_range(-50.0..50.0);
                }
                env[Var::Index.slot()] = rng.gen_range(0..10) as f64;
                assert_eq!(e.eval(&env), s.eval(&env), "{e} vs {s}");
            }
        }
    }

    #[test]
    fn prune_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = obpp("max(item, fill) + abs(index)");
        for _ in 0..50 {
            assert!(prune(&e, &mut rng).node_count() < e.node_count());
        }
        assert_eq!(prune(&obpp("item"), &mut rng), obpp("item"));
    }
}
