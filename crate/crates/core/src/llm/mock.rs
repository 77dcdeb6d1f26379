//! Offline stand-in for a language model.
//!
//! Replies depend only on the seed and the message contents. Generation
//! prompts are answered by applying a syntactic version of the requested
//! operator to the parent expressions embedded in the prompt; selection
//! prompts are answered with the first candidate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::{check_messages, ChatMessage, ChatReply, LlmClient, LlmError, OperatorKind, Role};
use crate::heuristics::random::random_expr;
use crate::heuristics::simplify::{prune, simplify};
use crate::heuristics::{check_budget, parse_expr, BinaryOp, Expr};
use crate::problems::ProblemKind;

const GARBAGE: [&str; 5] = [
    "I am not sure which heuristic would work best here.",
    "```\nmax(item, \n```",
    "Sorry, I cannot help with that request.",
    "```\nfoo_bar + baz\n```",
    "The answer depends on the instance distribution.",
];

const TRIES: usize = 20;

#[derive(Debug, Clone)]
pub struct MockLlm {
    seed: u64,
    failure_rate: f64,
}

enum Prompt {
    Init(ProblemKind),
    Generate(ProblemKind, OperatorKind, Vec<Expr>),
    Select,
    Unknown,
}

impl MockLlm {
    pub fn new(seed: u64, failure_rate: f64) -> Result<Self, LlmError> {
        if !(0.0..1.0).contains(&failure_rate) {
            return Err(LlmError::Config(format!("failure rate must be in [0, 1), got {failure_rate}")));
        }
        Ok(Self { seed, failure_rate })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng_for(&self, messages: &[ChatMessage]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for m in messages {
            let role: u8 = match m.role {
                Role::System => 0,
                Role::User => 1,
                Role::Assistant => 2,
            };
            h.update([role]);
            h.update((m.content.len() as u64).to_le_bytes());
            h.update(m.content.as_bytes());
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// Reply text for a conversation.
    pub fn reply(&self, messages: &[ChatMessage]) -> String {
        let mut rng = self.rng_for(messages);
        if rng.gen_bool(self.failure_rate) {
            return GARBAGE[rng.gen_range(0..GARBAGE.len())].to_string();
        }
        match recognize(messages) {
            Prompt::Select => "1".to_string(),
            Prompt::Init(kind) => {
                let e = random_expr(kind, 4, &mut rng);
                format!("A fresh priority rule for this subclass.\n```\n{e}\n```\n")
            }
            Prompt::Generate(kind, op, parents) => {
                let e = apply_operator(op, kind, &parents, &mut rng);
                format!("{}\n```\n{e}\n```\n", idea(op))
            }
            Prompt::Unknown => GARBAGE[rng.gen_range(0..GARBAGE.len())].to_string(),
        }
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply, LlmError> {
        check_messages(messages)?;
        let text = self.reply(messages);
        let prompt_chars: usize = messages.iter().map(|m| m.content.len()).sum();
        Ok(ChatReply { prompt_tokens: (prompt_chars / 4) as u64, completion_tokens: (text.len() / 4) as u64, text })
    }
}

fn idea(op: OperatorKind) -> &'static str {
    match op {
        OperatorKind::E1 => "Recombine a component of the second parent into the first.",
        OperatorKind::E2 => "Keep the top-level rule of the first parent and borrow a term from the second.",
        OperatorKind::M1 => "Rework one part of the rule.",
        OperatorKind::M2 => "Retune the numeric parameters.",
        OperatorKind::M3 => "Drop redundant parts of the rule.",
    }
}

fn header<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.trim().strip_prefix(name)).map(str::trim)
}

fn fenced_blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Option<Vec<&str>> = None;
    for l in text.lines() {
        if l.trim_start().starts_with("```") {
            match cur.take() {
                Some(lines) => out.push(lines.join("\n")),
                None => cur = Some(Vec::new()),
            }
        } else if let Some(lines) = cur.as_mut() {
            lines.push(l);
        }
    }
    out
}

fn recognize(messages: &[ChatMessage]) -> Prompt {
    let Some(first) = messages.iter().find(|m| m.role == Role::User) else {
        return Prompt::Unknown;
    };
    let text = &first.content;
    if header(text, "Task:") == Some("select") {
        return Prompt::Select;
    }
    let Some(kind) = header(text, "Problem:").and_then(|k| k.parse::<ProblemKind>().ok()) else {
        return Prompt::Unknown;
    };
    match header(text, "Operator:") {
        Some("init") => Prompt::Init(kind),
        Some(tag) => match tag.parse::<OperatorKind>() {
            Ok(op) => {
                let parents: Option<Vec<Expr>> =
                    fenced_blocks(text).iter().map(|b| parse_expr(b.trim(), kind).ok()).collect();
                match parents {
                    Some(p) if p.len() == op.arity() => Prompt::Generate(kind, op, p),
                    _ => Prompt::Unknown,
                }
            }
            Err(_) => Prompt::Unknown,
        },
        None => Prompt::Unknown,
    }
}

fn pick_subtree<'a, R: Rng + ?Sized>(e: &'a Expr, rng: &mut R) -> (usize, &'a Expr) {
    let i = rng.gen_range(0..e.node_count());
    (i, e.subtree(i).expect("index below node count"))
}

fn replaced(e: &Expr, index: usize, with: Expr) -> Expr {
    let mut out = e.clone();
    *out.subtree_mut(index).expect("valid index") = with;
    out
}

fn acceptable(child: &Expr, parents: &[Expr]) -> bool {
    let text = child.render();
    check_budget(child).is_ok() && parents.iter().all(|p| p.render() != text)
}

fn round3(v: f64) -> f64 {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Syntactic counterpart of each operator. The result always satisfies the
/// size budgets.
pub(crate) fn apply_operator<R: Rng + ?Sized>(op: OperatorKind, kind: ProblemKind, parents: &[Expr], rng: &mut R) -> Expr {
    let fallback = |rng: &mut R| random_expr(kind, 3, rng);
    match op {
        OperatorKind::E1 => {
            let (a, b) = (&parents[0], &parents[1]);
            for _ in 0..TRIES {
                let (i, _) = pick_subtree(a, rng);
                let (_, donor) = pick_subtree(b, rng);
                let child = replaced(a, i, donor.clone());
                if acceptable(&child, parents) {
                    return child;
                }
            }
            let joined = Expr::binary(BinaryOp::Max, a.clone(), b.clone());
            if acceptable(&joined, parents) {
                joined
            } else {
                fallback(rng)
            }
        }
        OperatorKind::E2 => {
            let (a, b) = (&parents[0], &parents[1]);
            let arity = a.children().len();
            if arity == 0 {
                return apply_operator(OperatorKind::E1, kind, parents, rng);
            }
            for _ in 0..TRIES {
                let slot = rng.gen_range(0..arity);
                let (_, donor) = pick_subtree(b, rng);
                let mut child = a.clone();
                *child.children_mut().swap_remove(slot) = donor.clone();
                if acceptable(&child, parents) {
                    return child;
                }
            }
            apply_operator(OperatorKind::E1, kind, parents, rng)
        }
        OperatorKind::M1 => {
            let a = &parents[0];
            for _ in 0..TRIES {
                let (i, _) = pick_subtree(a, rng);
                let child = replaced(a, i, random_expr(kind, 3, rng));
                if acceptable(&child, parents) {
                    return child;
                }
            }
            fallback(rng)
        }
        OperatorKind::M2 => jitter_constants(&parents[0], rng),
        OperatorKind::M3 => {
            let a = &parents[0];
            let s = simplify(a);
            if s.node_count() < a.node_count() {
                s
            } else {
                prune(a, rng)
            }
        }
    }
}

/// Gaussian jitter of every non-zero constant with sigma = 20% of its
/// magnitude. A tree without such constants gets one multiplicative
/// constant injected at a variable leaf instead.
fn jitter_constants<R: Rng + ?Sized>(a: &Expr, rng: &mut R) -> Expr {
    let mut out = a.clone();
    let mut changed = false;
    for i in 0..out.node_count() {
        if let Some(Expr::Const(c)) = out.subtree_mut(i) {
            if *c != 0.0 {
                let sigma = 0.2 * c.abs();
                let v = round3(Normal::new(*c, sigma).expect("finite sigma").sample(rng));
                changed |= v != *c;
                *c = v;
            }
        }
    }
    if changed {
        return out;
    }
    let mut factor = round3(Normal::new(1.0, 0.2).expect("finite sigma").sample(rng));
    if factor == 1.0 || factor == 0.0 {
        factor = 1.1;
    }
    let var_leaves: Vec<usize> = (0..a.node_count()).filter(|&i| matches!(a.subtree(i), Some(Expr::Var(_)))).collect();
    let child = if var_leaves.is_empty() {
        Expr::binary(BinaryOp::Mul, a.clone(), Expr::constant(factor))
    } else {
        let i = var_leaves[rng.gen_range(0..var_leaves.len())];
        let leaf = a.subtree(i).expect("leaf index").clone();
        replaced(a, i, Expr::binary(BinaryOp::Mul, leaf, Expr::constant(factor)))
    };
    if check_budget(&child).is_ok() {
        child
    } else {
        a.clone()
    }
}
