//! Prompt templates and tolerant parsing of model replies.

use thiserror::Error;

use super::{ChatMessage, OperatorKind};
use crate::heuristics::{binding_docs, grammar_summary, parse_expr, HeuristicProgram, ParseError};
use crate::problems::{LocationDistribution, ProblemKind, SequenceType, SubclassKey, WeightDistribution};

const SYSTEM: &str = include_str!("../../prompts/system.txt");
const SELECTION_SYSTEM: &str = include_str!("../../prompts/selection_system.txt");
const GENERATION: &str = include_str!("../../prompts/generation.txt");
const INIT: &str = include_str!("../../prompts/init.txt");
const SELECTION: &str = include_str!("../../prompts/selection.txt");
const CANDIDATE: &str = include_str!("../../prompts/candidate.txt");
const OPERATORS: &str = include_str!("../../prompts/operators.txt");
const RETRY: &str = include_str!("../../prompts/retry.txt");
const SELECTION_RETRY: &str = include_str!("../../prompts/selection_retry.txt");

pub const MAX_SELECTION_CANDIDATES: usize = 16;

/// Substitutes `{name}` placeholders in a single left-to-right pass, so
/// substituted text is never expanded again.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}').and_then(|end| vars.iter().find(|(k, _)| *k == &after[..end]).map(|(_, v)| (end, v))) {
            Some((end, value)) => {
                out.push_str(value);
                rest = &after[end + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn operator_instruction(op: OperatorKind) -> &'static str {
    OPERATORS
        .lines()
        .find_map(|l| l.strip_prefix(op.tag()).and_then(|r| r.strip_prefix(':')))
        .map(str::trim)
        .expect("every operator has an instruction line")
}

fn weight_phrase(d: WeightDistribution) -> &'static str {
    match d {
        WeightDistribution::Uniform => "a uniform distribution",
        WeightDistribution::Gaussian => "a Gaussian distribution",
        WeightDistribution::Weibull => "a right-skewed Weibull distribution",
    }
}

/// Fixed natural-language rendering of a subclass key.
pub fn describe_subclass(key: &SubclassKey) -> String {
    match key {
        SubclassKey::Obpp(k) => {
            let order = match k.sequence {
                SequenceType::Random => "Items come in random arrival order.",
                SequenceType::NonDecreasing => "Items arrive sorted by non-decreasing weight.",
                SequenceType::NonIncreasing => "Items arrive sorted by non-increasing weight.",
            };
            format!(
                "Online bin packing with {} items that arrive one at a time and must be packed immediately. \
                 Item weights follow {}. {} Every bin has capacity {}, and the mean item weight is {} of \
                 the capacity (capacity ratio {}).",
                k.num_items,
                weight_phrase(k.weight_dist),
                order,
                k.capacity,
                k.capacity_ratio,
                k.capacity_ratio
            )
        }
        SubclassKey::Cvrp(k) => {
            let layout = match k.location_dist {
                LocationDistribution::Uniform => "scattered uniformly over the square",
                LocationDistribution::Gaussian => "clustered around the centre (Gaussian spread)",
                LocationDistribution::Grid => "placed on a regular grid",
            };
            format!(
                "Capacitated vehicle routing with {} customers in a 100 by 100 square, served from a depot \
                 at its centre. Customers are {}. Demands follow {}. Each vehicle carries {} units, and the \
                 mean demand is {} of the vehicle capacity (capacity ratio {}).",
                k.num_customers,
                layout,
                weight_phrase(k.demand_dist),
                k.vehicle_capacity,
                k.capacity_ratio,
                k.capacity_ratio
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("operator {operator} takes {expected} parent(s), got {actual}")]
pub struct ArityMismatch {
    pub operator: OperatorKind,
    pub expected: usize,
    pub actual: usize,
}

fn sanitize_line(s: &str) -> String {
    s.replace('`', "'").replace('\n', " ")
}

fn render_parents(parents: &[HeuristicProgram]) -> String {
    let mut out = String::new();
    for (i, p) in parents.iter().enumerate() {
        out.push_str(&format!("Parent heuristic {}", i + 1));
        if let Some(f) = p.fitness {
            out.push_str(&format!(" (fitness {f})"));
        }
        out.push(':');
        if !p.description.is_empty() {
            out.push(' ');
            out.push_str(&sanitize_line(&p.description));
        }
        out.push_str(&format!("\n```\n{}\n```\n\n", p.render()));
    }
    out
}

/// Messages asking for an offspring of `parents` under `operator`.
pub fn render_generation_prompt(
    operator: OperatorKind,
    parents: &[HeuristicProgram],
    subclass_description: &str,
    kind: ProblemKind,
) -> Result<Vec<ChatMessage>, ArityMismatch> {
    if parents.len() != operator.arity() {
        return Err(ArityMismatch { operator, expected: operator.arity(), actual: parents.len() });
    }
    let user = fill(
        GENERATION,
        &[
            ("kind", kind.as_str()),
            ("operator", operator.tag()),
            ("subclass", subclass_description),
            ("bindings", binding_docs(kind)),
            ("grammar", grammar_summary()),
            ("parents", &render_parents(parents)),
            ("instruction", operator_instruction(operator)),
        ],
    );
    Ok(vec![ChatMessage::system(SYSTEM.trim()), ChatMessage::user(user)])
}

/// Messages asking for a fresh program when seeding the population.
pub fn render_init_prompt(subclass_description: &str, kind: ProblemKind) -> Vec<ChatMessage> {
    let user = fill(
        INIT,
        &[
            ("kind", kind.as_str()),
            ("subclass", subclass_description),
            ("bindings", binding_docs(kind)),
            ("grammar", grammar_summary()),
        ],
    );
    vec![ChatMessage::system(SYSTEM.trim()), ChatMessage::user(user)]
}

/// Follow-up message after an unusable reply.
pub fn render_retry_message(error: &str) -> ChatMessage {
    ChatMessage::user(fill(RETRY, &[("error", &sanitize_line(error))]).trim_end().to_string())
}

/// Follow-up message after an unusable selection answer.
pub fn render_selection_retry_message(error: &str, count: usize) -> ChatMessage {
    let text = fill(SELECTION_RETRY, &[("error", &sanitize_line(error)), ("count", &count.to_string())]);
    ChatMessage::user(text.trim_end().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntry {
    pub subclass_description: String,
    pub program_text: String,
    pub fitness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("selection needs between 1 and {MAX_SELECTION_CANDIDATES} candidates, got {0}")]
pub struct CandidateCount(pub usize);

/// Messages asking the model to choose one of `candidates` (listed with
/// 1-based indices, in the given order).
pub fn render_selection_prompt(
    instance_description: &str,
    candidates: &[CandidateEntry],
) -> Result<Vec<ChatMessage>, CandidateCount> {
    if candidates.is_empty() || candidates.len() > MAX_SELECTION_CANDIDATES {
        return Err(CandidateCount(candidates.len()));
    }
    let mut listing = String::new();
    for (i, c) in candidates.iter().enumerate() {
        let fitness = c.fitness.map(|f| f.to_string()).unwrap_or_else(|| "unknown".into());
        listing.push_str(&fill(
            CANDIDATE,
            &[
                ("index", &(i + 1).to_string()),
                ("subclass", &sanitize_line(&c.subclass_description)),
                ("program", &c.program_text),
                ("fitness", &fitness),
            ],
        ));
        listing.push('\n');
    }
    let user = fill(
        SELECTION,
        &[("instance", instance_description), ("candidates", &listing), ("count", &candidates.len().to_string())],
    );
    Ok(vec![ChatMessage::system(SELECTION_SYSTEM.trim()), ChatMessage::user(user)])
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramResponseError {
    #[error("reply is empty")]
    Empty,
    #[error("no parsable expression in reply: {0}")]
    Unparsable(ParseError),
}

struct Extracted<'a> {
    body: Vec<&'a str>,
    prose_before: Option<&'a str>,
}

/// The last fenced block (an unterminated final fence runs to the end), or
/// the whole text when there is none.
fn extract_block(text: &str) -> Extracted<'_> {
    let lines: Vec<&str> = text.lines().collect();
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, l) in lines.iter().enumerate() {
        if l.trim_start().starts_with("```") {
            match open.take() {
                Some(start) => blocks.push((start, i)),
                None => open = Some(i),
            }
        }
    }
    if let Some(start) = open {
        blocks.push((start, lines.len()));
    }
    match blocks.last() {
        Some(&(start, end)) => {
            let prose_before = lines[..start]
                .iter()
                .rev()
                .map(|l| l.trim())
                .find(|l| !l.is_empty() && !l.starts_with("```"));
            Extracted { body: lines[start + 1..end].to_vec(), prose_before }
        }
        None => Extracted { body: lines, prose_before: None },
    }
}

fn strip_decorations(line: &str) -> &str {
    let mut s = line.trim().trim_matches('`').trim();
    for prefix in ["return ", "score =", "priority =", "score:", "priority:", "expression:"] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.trim();
        }
    }
    s.trim_end_matches(';').trim()
}

fn truncate_chars(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

/// Extracts a program from free-form model output.
pub fn parse_program_response(text: &str, kind: ProblemKind) -> Result<HeuristicProgram, ProgramResponseError> {
    if text.trim().is_empty() {
        return Err(ProgramResponseError::Empty);
    }
    let ex = extract_block(text);
    let whole = ex.body.join("\n");
    let first_err = match parse_expr(strip_decorations(&whole), kind) {
        Ok(expr) => return Ok(finish(kind, expr, ex.prose_before)),
        Err(e) => e,
    };
    for line in ex.body.iter().rev() {
        let candidate = strip_decorations(line);
        if candidate.is_empty() {
            continue;
        }
        if let Ok(expr) = parse_expr(candidate, kind) {
            return Ok(finish(kind, expr, ex.prose_before));
        }
    }
    Err(ProgramResponseError::Unparsable(first_err))
}

fn finish(kind: ProblemKind, expr: crate::heuristics::Expr, prose: Option<&str>) -> HeuristicProgram {
    let description = prose.map(|p| truncate_chars(&sanitize_line(p), 300)).unwrap_or_default();
    HeuristicProgram::from_expr(kind, expr, description)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionResponseError {
    #[error("reply contains no integer")]
    NoInteger,
    #[error("index {value} is outside 1..={k}")]
    OutOfRange { value: String, k: usize },
}

/// First standalone integer in the reply, accepted only when in `1..=k`.
pub fn parse_selection_response(text: &str, k: usize) -> Result<usize, SelectionResponseError> {
    let chars: Vec<char> = text.chars().collect();
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let before_ok = start == 0 || !(is_word(chars[start - 1]) || chars[start - 1] == '.');
        let after_ok = i == chars.len()
            || !(is_word(chars[i]) || (chars[i] == '.' && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())));
        if !(before_ok && after_ok) {
            continue;
        }
        let digits: String = chars[start..i].iter().collect();
        return match digits.parse::<usize>() {
            Ok(v) if (1..=k).contains(&v) => Ok(v),
            _ => Err(SelectionResponseError::OutOfRange { value: digits, k }),
        };
    }
    Err(SelectionResponseError::NoInteger)
}
