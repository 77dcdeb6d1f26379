//! Priority-function programs.
//!
//! Every heuristic, evolved or classical, is a scoring expression evaluated
//! once per candidate decision (an open bin for OBPP, an unvisited customer
//! for CVRP). The evaluation module picks the candidate with the highest score.

mod expr;
mod parse;
pub mod random;
pub mod simplify;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use expr::{
    binding_set, div_p, exp_c, log_p, pow_c, sqrt_p, BinaryOp, Env, Expr, UnaryOp, Var, BINARY_OPS, MAX_DEPTH,
    MAX_NODES, UNARY_OPS, VALUE_LIMIT, VAR_COUNT,
};
pub use parse::{check_budget, parse_expr, ParseError};

use crate::problems::ProblemKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageStep {
    pub operator: String,
    pub parents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicProgram {
    /// First 16 hex digits of SHA-256 over the canonical text.
    pub id: String,
    pub kind: ProblemKind,
    pub expr: Expr,
    pub description: String,
    pub lineage: Vec<LineageStep>,
    pub fitness: Option<f64>,
}

pub fn program_id(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl HeuristicProgram {
    /// Wraps an expression that already satisfies the size budgets and uses
    /// only variables of `kind`.
    pub fn from_expr(kind: ProblemKind, expr: Expr, description: impl Into<String>) -> Self {
        let id = program_id(&expr.render());
        Self { id, kind, expr, description: description.into(), lineage: Vec::new(), fitness: None }
    }

    pub fn with_lineage(mut self, operator: impl Into<String>, parents: Vec<String>) -> Self {
        self.lineage.push(LineageStep { operator: operator.into(), parents });
        self
    }

    pub fn render(&self) -> String {
        self.expr.render()
    }

    /// Fast evaluation against pre-filled variable slots.
    #[inline]
    pub fn score(&self, env: &Env) -> f64 {
        self.expr.eval(env)
    }
}

/// Parses DSL text into a program of the given kind.
pub fn parse(text: &str, kind: ProblemKind) -> Result<HeuristicProgram, ParseError> {
    let expr = parse_expr(text, kind)?;
    Ok(HeuristicProgram::from_expr(kind, expr, ""))
}

pub fn render(program: &HeuristicProgram) -> String {
    program.render()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no binding supplied for variable `{0}`")]
    MissingBinding(&'static str),
}

/// Evaluates a program against named bindings. Total: the result is always
/// finite and within `[-1e18, 1e18]`.
pub fn evaluate_score(program: &HeuristicProgram, bindings: &HashMap<String, f64>) -> Result<f64, EvalError> {
    let mut env = [0.0; VAR_COUNT];
    for v in program.expr.variables() {
        env[v.slot()] = *bindings.get(v.name()).ok_or(EvalError::MissingBinding(v.name()))?;
    }
    Ok(program.score(&env))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    BestFit,
    FirstFit,
    ClosestPriority,
}

impl Builtin {
    pub fn source(self) -> &'static str {
        match self {
            Builtin::BestFit => "-(remaining - item)",
            Builtin::FirstFit => "-index",
            Builtin::ClosestPriority => "-dist",
        }
    }

    pub fn kind(self) -> ProblemKind {
        match self {
            Builtin::BestFit | Builtin::FirstFit => ProblemKind::Obpp,
            Builtin::ClosestPriority => ProblemKind::Cvrp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::BestFit => "best_fit",
            Builtin::FirstFit => "first_fit",
            Builtin::ClosestPriority => "closest_priority",
        }
    }

    fn description(self) -> &'static str {
        match self {
            Builtin::BestFit => "Best Fit: place the item into the feasible bin with the least residual space.",
            Builtin::FirstFit => "First Fit: place the item into the lowest-indexed feasible bin.",
            Builtin::ClosestPriority => "Closest Priority: visit the nearest customer that still fits the vehicle.",
        }
    }

    /// The classical baseline for a problem kind.
    pub fn baseline(kind: ProblemKind) -> Builtin {
        match kind {
            ProblemKind::Obpp => Builtin::BestFit,
            ProblemKind::Cvrp => Builtin::ClosestPriority,
        }
    }

    pub fn program(self) -> HeuristicProgram {
        let expr = parse_expr(self.source(), self.kind()).expect("builtin sources parse");
        HeuristicProgram::from_expr(self.kind(), expr, self.description()).with_lineage("builtin", vec![])
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown builtin heuristic `{0}` (expected best_fit, first_fit or closest_priority)")]
pub struct UnknownBuiltin(pub String);

pub fn builtin(name: &str) -> Result<HeuristicProgram, UnknownBuiltin> {
    let b = match name {
        "best_fit" => Builtin::BestFit,
        "first_fit" => Builtin::FirstFit,
        "closest_priority" => Builtin::ClosestPriority,
        other => return Err(UnknownBuiltin(other.to_string())),
    };
    Ok(b.program())
}

/// Grammar and variable documentation shown to language models and users.
pub fn grammar_summary() -> &'static str {
    "expr    := term ((\"+\" | \"-\") term)*\n\
     term    := unary ((\"*\" | \"/\") unary)*\n\
     unary   := \"-\" unary | primary\n\
     primary := NUMBER | VARIABLE | FUNC \"(\" expr (\",\" expr)* \")\" | \"(\" expr \")\"\n\
     Functions: abs(x), sqrt(x) = sqrt(|x|), exp(x) = e^min(x, 50), log(x) = ln(|x| + 1e-9),\n\
     min(a, b), max(a, b), pow(a, b) = sign(a) * |a|^clamp(b, -8, 8), iflt(a, b, then, else).\n\
     Division is protected: a / b = 0 when |b| < 1e-9. Results are clamped to [-1e18, 1e18].\n\
     Limits: at most 512 nodes and depth 24. No loops, assignments or other functions."
}

/// Documentation of the variables available for a problem kind.
pub fn binding_docs(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::Obpp => {
            "The expression scores one candidate bin for the arriving item; the item goes to the \
             feasible bin with the highest score (ties: lowest index). A new bin is opened only \
             when no open bin can hold the item.\n\
             item: weight of the arriving item\n\
             remaining: free space in the candidate bin before placing the item\n\
             capacity: bin capacity\n\
             fill: current load of the candidate bin divided by capacity\n\
             index: 0-based index of the candidate bin (bins are numbered in opening order)\n\
             bins_open: number of bins opened so far"
        }
        ProblemKind::Cvrp => {
            "The expression scores one unvisited customer whose demand fits the vehicle; the vehicle \
             drives to the customer with the highest score (ties: lowest index). When no customer \
             fits, the vehicle returns to the depot and a new route starts with full capacity.\n\
             dist: Euclidean distance from the current position to the candidate\n\
             demand: demand of the candidate\n\
             remaining: free capacity of the vehicle\n\
             capacity: vehicle capacity\n\
             dist_depot_c: distance from the depot to the candidate\n\
             dist_p_depot: distance from the current position to the depot\n\
             unserved: number of customers not yet visited"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_render_canonically() {
        assert_eq!(builtin("best_fit").unwrap().render(), "(-(remaining - item))");
        assert_eq!(builtin("first_fit").unwrap().render(), "(-index)");
        assert_eq!(builtin("closest_priority").unwrap().render(), "(-dist)");
        assert_eq!(builtin("worst_fit"), Err(UnknownBuiltin("worst_fit".into())));
    }

    #[test]
    fn id_is_hash_of_canonical_text() {
        let a = parse("-(remaining-item)", ProblemKind::Obpp).unwrap();
        let b = builtin("best_fit").unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(a.id.len(), 16);
        assert_eq!(a.id, program_id("(-(remaining - item))"));
    }

    #[test]
    fn evaluate_named_bindings() {
        let p = builtin("best_fit").unwrap();
        let mut b = HashMap::new();
        b.insert("item".to_string(), 4.0);
        b.insert("remaining".to_string(), 5.0);
        assert_eq!(evaluate_score(&p, &b), Ok(-1.0));
        b.remove("item");
        assert_eq!(evaluate_score(&p, &b), Err(EvalError::MissingBinding("item")));

        let d = parse("1 / 0", ProblemKind::Obpp).unwrap();
        assert_eq!(evaluate_score(&d, &HashMap::new()), Ok(0.0));
        let e = parse("exp(1000)", ProblemKind::Obpp).unwrap();
        assert_eq!(evaluate_score(&e, &HashMap::new()), Ok(VALUE_LIMIT));
    }

    #[test]
    fn kind_restricts_variables() {
        assert!(parse("dist", ProblemKind::Obpp).is_err());
        assert!(parse("index", ProblemKind::Cvrp).is_err());
        assert!(parse("remaining + capacity", ProblemKind::Cvrp).is_ok());
    }
}
