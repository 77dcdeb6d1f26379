//! Recursive-descent parser for the priority-function language.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" NUMBER | "-" unary | primary
//! primary := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! `-` directly before a number literal yields a negative constant; before
//! anything else it is negation. Functions: `min max pow` (2 args),
//! `abs sqrt exp log` (1 arg), `iflt` (4 args). `/` is protected division.

use thiserror::Error;

use super::expr::{binding_set, BinaryOp, Expr, UnaryOp, Var, MAX_DEPTH, MAX_NODES};
use crate::problems::ProblemKind;

/// Parenthesis / call nesting allowed while reading, independent of tree depth.
const MAX_NESTING: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("expression exceeds the {what} budget ({actual} > {limit})")]
    Budget { what: &'static str, limit: usize, actual: usize },
}

impl ParseError {
    fn syntax(offset: usize, message: impl Into<String>) -> Self {
        ParseError::Syntax { offset, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let literal = &text[start..i];
                let value: f64 = literal
                    .parse()
                    .map_err(|_| ParseError::syntax(start, format!("malformed number `{literal}`")))?;
                if !value.is_finite() {
                    return Err(ParseError::syntax(start, format!("number `{literal}` is not finite")));
                }
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError::syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    nesting: usize,
    nodes: usize,
    allowed: &'a [Var],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::syntax(self.offset(), format!("expected {what}")))
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(ParseError::Budget { what: "nesting", limit: MAX_NESTING, actual: self.nesting });
        }
        Ok(())
    }

    // Counting while building keeps pathological inputs from producing trees
    // deep enough to overflow the stack in later recursive passes.
    fn node(&mut self, e: Expr) -> Result<Expr, ParseError> {
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(ParseError::Budget { what: "node", limit: MAX_NODES, actual: self.nodes });
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = self.node(Expr::binary(op, lhs, rhs))?;
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::DivP,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = self.node(Expr::binary(op, lhs, rhs))?;
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            if let Tok::Num(v) = *self.peek() {
                self.bump();
                return self.node(Expr::constant(-v));
            }
            self.enter()?;
            let inner = self.unary()?;
            self.nesting -= 1;
            return self.node(Expr::unary(UnaryOp::Neg, inner));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.bump() {
            Tok::Num(v) => self.node(Expr::constant(v)),
            Tok::LParen => {
                self.enter()?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                self.nesting -= 1;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.call(name, offset)
                } else {
                    match Var::from_name(&name) {
                        Some(v) if self.allowed.contains(&v) => self.node(Expr::var(v)),
                        _ => Err(ParseError::UnknownIdentifier { name, offset }),
                    }
                }
            }
            Tok::End => Err(ParseError::syntax(offset, "unexpected end of input")),
            other => Err(ParseError::syntax(offset, format!("unexpected token {other:?}"))),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        enum Callee {
            Unary(UnaryOp),
            Binary(BinaryOp),
            IfLess,
        }
        let callee = match name.as_str() {
            "abs" => Callee::Unary(UnaryOp::Abs),
            "sqrt" => Callee::Unary(UnaryOp::SqrtP),
            "exp" => Callee::Unary(UnaryOp::ExpC),
            "log" => Callee::Unary(UnaryOp::LogP),
            "neg" => Callee::Unary(UnaryOp::Neg),
            "min" => Callee::Binary(BinaryOp::Min),
            "max" => Callee::Binary(BinaryOp::Max),
            "pow" => Callee::Binary(BinaryOp::PowC),
            "iflt" => Callee::IfLess,
            _ => return Err(ParseError::UnknownIdentifier { name, offset }),
        };
        self.expect(Tok::LParen, "`(`")?;
        self.enter()?;
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        self.nesting -= 1;
        let want = match callee {
            Callee::Unary(_) => 1,
            Callee::Binary(_) => 2,
            Callee::IfLess => 4,
        };
        if args.len() != want {
            return Err(ParseError::syntax(offset, format!("`{name}` takes {want} argument(s), got {}", args.len())));
        }
        let mut args = args.into_iter();
        let mut next = || args.next().expect("arity checked");
        let e = match callee {
            Callee::Unary(op) => Expr::unary(op, next()),
            Callee::Binary(op) => {
                let a = next();
                Expr::binary(op, a, next())
            }
            Callee::IfLess => {
                let (a, b, t) = (next(), next(), next());
                Expr::if_less(a, b, t, next())
            }
        };
        self.node(e)
    }
}

/// Parses DSL text into an expression over the binding set of `kind`.
pub fn parse_expr(text: &str, kind: ProblemKind) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0, nesting: 0, nodes: 0, allowed: binding_set(kind) };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(ParseError::syntax(p.offset(), "unexpected trailing input"));
    }
    check_budget(&e)?;
    Ok(e)
}

pub fn check_budget(e: &Expr) -> Result<(), ParseError> {
    let nodes = e.node_count();
    if nodes > MAX_NODES {
        return Err(ParseError::Budget { what: "node", limit: MAX_NODES, actual: nodes });
    }
    let depth = e.depth();
    if depth > MAX_DEPTH {
        return Err(ParseError::Budget { what: "depth", limit: MAX_DEPTH, actual: depth });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obpp(text: &str) -> Result<Expr, ParseError> {
        parse_expr(text, ProblemKind::Obpp)
    }

    #[test]
    fn negated_difference() {
        let e = obpp("-(remaining - item)").unwrap();
        assert_eq!(
            e,
            Expr::unary(UnaryOp::Neg, Expr::binary(BinaryOp::Sub, Expr::var(Var::Remaining), Expr::var(Var::Item)))
        );
    }

    #[test]
    fn iflt_call() {
        let e = parse_expr("iflt(dist, 10, 1, 0)", ProblemKind::Cvrp).unwrap();
        assert_eq!(
            e,
            Expr::if_less(Expr::var(Var::Dist), Expr::constant(10.0), Expr::constant(1.0), Expr::constant(0.0))
        );
    }

    #[test]
    fn dangling_operator_reports_offset() {
        assert_eq!(
            obpp("remaining - "),
            Err(ParseError::Syntax { offset: 12, message: "unexpected end of input".into() })
        );
    }

    #[test]
    fn precedence_and_whitespace() {
        let a = obpp("item+remaining*2").unwrap();
        let b = obpp("  item +\n (remaining * 2) ").unwrap();
        assert_eq!(a, b);
        let e = obpp("item - remaining - 1").unwrap();
        assert_eq!(e.render(), "((item - remaining) - 1)");
    }

    #[test]
    fn negative_literals_and_negation() {
        assert_eq!(obpp("-0.5").unwrap(), Expr::constant(-0.5));
        assert_eq!(obpp("-(0.5)").unwrap(), Expr::unary(UnaryOp::Neg, Expr::constant(0.5)));
        assert_eq!(obpp("- index").unwrap(), Expr::unary(UnaryOp::Neg, Expr::var(Var::Index)));
        assert_eq!(obpp("1e-3").unwrap(), Expr::constant(0.001));
    }

    #[test]
    fn distinct_error_kinds() {
        assert!(matches!(obpp("dist"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(obpp("foo(item)"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(obpp("min(item)"), Err(ParseError::Syntax { .. })));
        assert!(matches!(obpp("item $ 2"), Err(ParseError::Syntax { offset: 5, .. })));
        assert!(matches!(obpp("1e999"), Err(ParseError::Syntax { .. })));
        let deep = format!("{}item{}", "abs(".repeat(30), ")".repeat(30));
        assert!(matches!(obpp(&deep), Err(ParseError::Budget { what: "depth", .. })));
        let wide = vec!["item"; 300].join(" + ");
        assert!(matches!(obpp(&wide), Err(ParseError::Budget { what: "node", .. })));
        let nested = format!("{}item{}", "(".repeat(100_000), ")".repeat(100_000));
        assert!(matches!(obpp(&nested), Err(ParseError::Budget { what: "nesting", .. })));
        let long = vec!["item"; 100_000].join("+");
        assert!(matches!(obpp(&long), Err(ParseError::Budget { what: "node", .. })));
        let negs = format!("{}item", "-".repeat(100_000));
        assert!(matches!(obpp(&negs), Err(ParseError::Budget { .. })));
    }

    #[test]
    fn non_ascii_input_is_a_syntax_error() {
        assert!(matches!(obpp("item × 2"), Err(ParseError::Syntax { offset: 5, .. })));
    }
}
