use std::fmt::{self, Write as _};

use crate::problems::ProblemKind;

/// Largest magnitude any node may produce.
pub const VALUE_LIMIT: f64 = 1e18;
/// Divisors smaller than this in magnitude make `div_p` return 0.
pub const DIV_EPS: f64 = 1e-9;
pub const LOG_EPS: f64 = 1e-9;
pub const EXP_CAP: f64 = 50.0;
pub const POW_EXP_LIMIT: f64 = 8.0;

pub const MAX_DEPTH: usize = 24;
pub const MAX_NODES: usize = 512;

/// Every variable a priority function may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// OBPP: weight of the arriving item.
    Item,
    /// OBPP: free space of the candidate bin. CVRP: free vehicle capacity.
    Remaining,
    /// OBPP: bin capacity. CVRP: vehicle capacity.
    Capacity,
    /// OBPP: load of the candidate bin divided by capacity.
    Fill,
    /// OBPP: 0-based index of the candidate bin.
    Index,
    /// OBPP: number of bins opened so far.
    BinsOpen,
    /// CVRP: distance from the current position to the candidate.
    Dist,
    /// CVRP: demand of the candidate.
    Demand,
    /// CVRP: distance from the depot to the candidate.
    DistDepotC,
    /// CVRP: distance from the current position back to the depot.
    DistPDepot,
    /// CVRP: customers not yet visited.
    Unserved,
}

pub const VAR_COUNT: usize = 11;

/// Variable slots, indexed by `Var as usize`.
pub type Env = [f64; VAR_COUNT];

const ALL_VARS: [Var; VAR_COUNT] = [
    Var::Item,
    Var::Remaining,
    Var::Capacity,
    Var::Fill,
    Var::Index,
    Var::BinsOpen,
    Var::Dist,
    Var::Demand,
    Var::DistDepotC,
    Var::DistPDepot,
    Var::Unserved,
];

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::Item => "item",
            Var::Remaining => "remaining",
            Var::Capacity => "capacity",
            Var::Fill => "fill",
            Var::Index => "index",
            Var::BinsOpen => "bins_open",
            Var::Dist => "dist",
            Var::Demand => "demand",
            Var::DistDepotC => "dist_depot_c",
            Var::DistPDepot => "dist_p_depot",
            Var::Unserved => "unserved",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        ALL_VARS.iter().copied().find(|v| v.name() == name)
    }

    pub fn slot(self) -> usize {
        self as usize
    }
}

/// The variables a program of the given kind may reference.
pub fn binding_set(kind: ProblemKind) -> &'static [Var] {
    match kind {
        ProblemKind::Obpp => &[Var::Item, Var::Remaining, Var::Capacity, Var::Fill, Var::Index, Var::BinsOpen],
        ProblemKind::Cvrp => &[
            Var::Dist,
            Var::Demand,
            Var::Remaining,
            Var::Capacity,
            Var::DistDepotC,
            Var::DistPDepot,
            Var::Unserved,
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
    SqrtP,
    ExpC,
    LogP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    DivP,
    PowC,
    Min,
    Max,
}

pub const UNARY_OPS: [UnaryOp; 5] = [UnaryOp::Neg, UnaryOp::Abs, UnaryOp::SqrtP, UnaryOp::ExpC, UnaryOp::LogP];
pub const BINARY_OPS: [BinaryOp; 7] =
    [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::DivP, BinaryOp::PowC, BinaryOp::Min, BinaryOp::Max];

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// `if a < b { then } else { otherwise }`
    IfLess(Box<Expr>, Box<Expr>, Box<Expr>, Box<Expr>),
}

#[inline]
fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-VALUE_LIMIT, VALUE_LIMIT)
    }
}

pub fn div_p(a: f64, b: f64) -> f64 {
    if b.abs() >= DIV_EPS {
        a / b
    } else {
        0.0
    }
}

pub fn log_p(x: f64) -> f64 {
    (x.abs() + LOG_EPS).ln()
}

pub fn sqrt_p(x: f64) -> f64 {
    x.abs().sqrt()
}

pub fn exp_c(x: f64) -> f64 {
    x.min(EXP_CAP).exp()
}

/// Sign-preserving power with the exponent clamped to `[-8, 8]`.
pub fn pow_c(a: f64, b: f64) -> f64 {
    let e = b.clamp(-POW_EXP_LIMIT, POW_EXP_LIMIT);
    a.signum() * a.abs().powf(e)
}

impl UnaryOp {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Abs => x.abs(),
            UnaryOp::SqrtP => sqrt_p(x),
            UnaryOp::ExpC => exp_c(x),
            UnaryOp::LogP => log_p(x),
        }
    }

    pub fn function_name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::SqrtP => "sqrt",
            UnaryOp::ExpC => "exp",
            UnaryOp::LogP => "log",
        }
    }
}

impl BinaryOp {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::DivP => div_p(a, b),
            BinaryOp::PowC => pow_c(a, b),
            BinaryOp::Min => a.min(b),
            BinaryOp::Max => a.max(b),
        }
    }

    fn infix(self) -> Option<&'static str> {
        match self {
            BinaryOp::Add => Some("+"),
            BinaryOp::Sub => Some("-"),
            BinaryOp::Mul => Some("*"),
            BinaryOp::DivP => Some("/"),
            _ => None,
        }
    }

    pub fn function_name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::DivP => "div",
            BinaryOp::PowC => "pow",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
        }
    }
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn if_less(a: Expr, b: Expr, then: Expr, otherwise: Expr) -> Expr {
        Expr::IfLess(Box::new(a), Box::new(b), Box::new(then), Box::new(otherwise))
    }

    /// Evaluates with protected operators. Every node's value is finite and
    /// within `[-1e18, 1e18]`, so the result is too.
    pub fn eval(&self, env: &Env) -> f64 {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env[v.slot()],
            Expr::Unary(op, e) => op.apply(e.eval(env)),
            Expr::Binary(op, a, b) => op.apply(a.eval(env), b.eval(env)),
            Expr::IfLess(a, b, t, e) => {
                if a.eval(env) < b.eval(env) {
                    t.eval(env)
                } else {
                    e.eval(env)
                }
            }
        };
        sanitize(v)
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, e) => 1 + e.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
            Expr::IfLess(a, b, t, e) => 1 + a.node_count() + b.node_count() + t.node_count() + e.node_count(),
        }
    }

    /// Depth of the tree; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, e) => 1 + e.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
            Expr::IfLess(a, b, t, e) => 1 + a.depth().max(b.depth()).max(t.depth()).max(e.depth()),
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => vec![],
            Expr::Unary(_, e) => vec![e],
            Expr::Binary(_, a, b) => vec![a, b],
            Expr::IfLess(a, b, t, e) => vec![a, b, t, e],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => vec![],
            Expr::Unary(_, e) => vec![e],
            Expr::Binary(_, a, b) => vec![a, b],
            Expr::IfLess(a, b, t, e) => vec![a, b, t, e],
        }
    }

    /// Variables referenced anywhere in the tree, sorted and deduplicated.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var(v) = e {
                out.push(*v);
            }
        });
        out.sort();
        out.dedup();
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// The `index`-th node in pre-order.
    pub fn subtree(&self, index: usize) -> Option<&Expr> {
        let mut n = index;
        self.find_preorder(&mut n)
    }

    fn find_preorder(&self, remaining: &mut usize) -> Option<&Expr> {
        if *remaining == 0 {
            return Some(self);
        }
        *remaining -= 1;
        for c in self.children() {
            if let Some(found) = c.find_preorder(remaining) {
                return Some(found);
            }
        }
        None
    }

    pub fn subtree_mut(&mut self, index: usize) -> Option<&mut Expr> {
        let mut n = index;
        self.find_preorder_mut(&mut n)
    }

    fn find_preorder_mut(&mut self, remaining: &mut usize) -> Option<&mut Expr> {
        if *remaining == 0 {
            return Some(self);
        }
        *remaining -= 1;
        for c in self.children_mut() {
            if let Some(found) = c.find_preorder_mut(remaining) {
                return Some(found);
            }
        }
        None
    }

    /// Canonical text: fully parenthesized infix, shortest round-trip decimals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        match self {
            Expr::Const(c) => write_number(out, *c),
            Expr::Var(v) => out.push_str(v.name()),
            Expr::Unary(UnaryOp::Neg, e) => {
                out.push_str("(-");
                if matches!(**e, Expr::Const(_)) {
                    // `-1` would read back as a negative literal
                    out.push('(');
                    e.render_into(out);
                    out.push(')');
                } else {
                    e.render_into(out);
                }
                out.push(')');
            }
            Expr::Unary(op, e) => {
                out.push_str(op.function_name());
                out.push('(');
                e.render_into(out);
                out.push(')');
            }
            Expr::Binary(op, a, b) => match op.infix() {
                Some(sym) => {
                    out.push('(');
                    a.render_into(out);
                    let _ = write!(out, " {sym} ");
                    b.render_into(out);
                    out.push(')');
                }
                None => {
                    out.push_str(op.function_name());
                    out.push('(');
                    a.render_into(out);
                    out.push_str(", ");
                    b.render_into(out);
                    out.push(')');
                }
            },
            Expr::IfLess(a, b, t, e) => {
                out.push_str("iflt(");
                a.render_into(out);
                out.push_str(", ");
                b.render_into(out);
                out.push_str(", ");
                t.render_into(out);
                out.push_str(", ");
                e.render_into(out);
                out.push(')');
            }
        }
    }
}

fn write_number(out: &mut String, c: f64) {
    if c == 0.0 {
        out.push('0');
    } else {
        let _ = write!(out, "{c}");
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_with(pairs: &[(Var, f64)]) -> Env {
        let mut env = [0.0; VAR_COUNT];
        for (v, x) in pairs {
            env[v.slot()] = *x;
        }
        env
    }

    #[test]
    fn protected_operators() {
        assert_eq!(div_p(1.0, 0.0), 0.0);
        assert_eq!(div_p(1.0, 1e-10), 0.0);
        assert_eq!(div_p(3.0, 2.0), 1.5);
        assert_eq!(exp_c(1000.0), 50f64.exp());
        assert_eq!(sqrt_p(-4.0), 2.0);
        assert_eq!(log_p(0.0), (1e-9f64).ln());
        assert_eq!(pow_c(-2.0, 3.0), -8.0);
        assert_eq!(pow_c(-2.0, 2.0), -4.0);
        assert_eq!(pow_c(2.0, 100.0), 256.0);
    }

    #[test]
    fn eval_clamps_to_limit() {
        let e = Expr::unary(UnaryOp::ExpC, Expr::constant(1000.0));
        assert_eq!(e.eval(&[0.0; VAR_COUNT]), VALUE_LIMIT);
        let big = Expr::binary(BinaryOp::Mul, Expr::constant(1e300), Expr::constant(1e300));
        assert_eq!(big.eval(&[0.0; VAR_COUNT]), VALUE_LIMIT);
        let zero_pow = Expr::binary(BinaryOp::PowC, Expr::constant(0.0), Expr::constant(-2.0));
        assert!(zero_pow.eval(&[0.0; VAR_COUNT]).is_finite());
    }

    #[test]
    fn best_fit_score() {
        let e = Expr::unary(
            UnaryOp::Neg,
            Expr::binary(BinaryOp::Sub, Expr::var(Var::Remaining), Expr::var(Var::Item)),
        );
        assert_eq!(e.eval(&env_with(&[(Var::Item, 4.0), (Var::Remaining, 5.0)])), -1.0);
        assert_eq!(e.render(), "(-(remaining - item))");
    }

    #[test]
    fn constant_formatting() {
        assert_eq!(Expr::constant(0.5).render(), "0.5");
        assert_eq!(Expr::constant(2.0).render(), "2");
        assert_eq!(Expr::constant(-0.0).render(), "0");
        assert_eq!(Expr::constant(1e-7).render(), "0.0000001");
        assert_eq!(Expr::unary(UnaryOp::Neg, Expr::constant(3.0)).render(), "(-(3))");
    }

    #[test]
    fn if_less_is_lazy_and_correct() {
        let e = Expr::if_less(Expr::var(Var::Dist), Expr::constant(10.0), Expr::constant(1.0), Expr::constant(0.0));
        assert_eq!(e.eval(&env_with(&[(Var::Dist, 3.0)])), 1.0);
        assert_eq!(e.eval(&env_with(&[(Var::Dist, 10.0)])), 0.0);
        assert_eq!(e.render(), "iflt(dist, 10, 1, 0)");
    }

    #[test]
    fn sizes_and_preorder() {
        let e = Expr::binary(
            BinaryOp::Add,
            Expr::unary(UnaryOp::Abs, Expr::var(Var::Item)),
            Expr::constant(1.0),
        );
        assert_eq!(e.node_count(), 4);
        assert_eq!(e.depth(), 3);
        assert_eq!(e.subtree(2), Some(&Expr::var(Var::Item)));
        assert_eq!(e.subtree(3), Some(&Expr::constant(1.0)));
        assert_eq!(e.subtree(4), None);
        assert_eq!(e.variables(), vec![Var::Item]);
    }
}
