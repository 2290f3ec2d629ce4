//! Measurement formula language.
//!
//! A formula is a small arithmetic expression over numeric literals and
//! identifiers with the four binary operators, unary minus, parentheses and a
//! fixed set of aggregate calls:
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | primary
//! primary := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Identifiers are bound at evaluation time to either a scalar or a numeric
//! series. Arithmetic between a series and a scalar is applied elementwise;
//! aggregates (`mean`, `sum`, `count`, `min`, `max`) reduce a series to a
//! scalar and `norm(x, d)` divides elementwise.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominators with a smaller magnitude are treated as zero.
pub const DIVISION_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Function {
    Mean,
    Sum,
    Count,
    Min,
    Max,
    Norm,
}

impl Function {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "mean" => Function::Mean,
            "sum" => Function::Sum,
            "count" => Function::Count,
            "min" => Function::Min,
            "max" => Function::Max,
            "norm" => Function::Norm,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Mean => "mean",
            Function::Sum => "sum",
            Function::Count => "count",
            Function::Min => "min",
            Function::Max => "max",
            Function::Norm => "norm",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Function::Norm => 2,
            _ => 1,
        }
    }
}

/// Parsed formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum FormulaExpr {
    Number { value: f64 },
    Ident { name: String },
    Neg { operand: Box<FormulaExpr> },
    Binary { op: BinaryOp, lhs: Box<FormulaExpr>, rhs: Box<FormulaExpr> },
    Call { function: Function, args: Vec<FormulaExpr> },
}

impl FormulaExpr {
    /// Identifiers referenced by the expression, sorted and deduplicated.
    pub fn identifiers(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_identifiers(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_identifiers(&self, out: &mut Vec<String>) {
        match self {
            FormulaExpr::Number { .. } => {}
            FormulaExpr::Ident { name } => out.push(name.clone()),
            FormulaExpr::Neg { operand } => operand.collect_identifiers(out),
            FormulaExpr::Binary { lhs, rhs, .. } => {
                lhs.collect_identifiers(out);
                rhs.collect_identifiers(out);
            }
            FormulaExpr::Call { args, .. } => args.iter().for_each(|a| a.collect_identifiers(out)),
        }
    }

    /// Number of binary nodes with the given operator.
    pub fn count_ops(&self, wanted: BinaryOp) -> usize {
        match self {
            FormulaExpr::Number { .. } | FormulaExpr::Ident { .. } => 0,
            FormulaExpr::Neg { operand } => operand.count_ops(wanted),
            FormulaExpr::Binary { op, lhs, rhs } => usize::from(*op == wanted) + lhs.count_ops(wanted) + rhs.count_ops(wanted),
            FormulaExpr::Call { args, .. } => args.iter().map(|a| a.count_ops(wanted)).sum(),
        }
    }
}

impl fmt::Display for FormulaExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormulaExpr::Number { value } => write!(f, "{value}"),
            FormulaExpr::Ident { name } => f.write_str(name),
            FormulaExpr::Neg { operand } => write!(f, "(-{operand})"),
            FormulaExpr::Binary { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            FormulaExpr::Call { function, args } => {
                write!(f, "{}(", function.name())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{arg}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at offset {position}: expected {}", expected.join(" or "))]
pub struct ParseError {
    /// Byte offset into the source.
    pub position: usize,
    pub expected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
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

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let simple = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(Token::Plus),
            b'-' => Some(Token::Minus),
            b'*' => Some(Token::Star),
            b'/' => Some(Token::Slash),
            b'(' => Some(Token::LParen),
            b')' => Some(Token::RParen),
            b',' => Some(Token::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            tokens.push((start, tok));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
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
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| ParseError { position: start, expected: vec!["number".into()] })?;
            tokens.push((start, Token::Number(value)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push((start, Token::Ident(src[start..i].to_string())));
            continue;
        }
        return Err(ParseError { position: start, expected: vec!["operator".into(), "operand".into()] });
    }
    tokens.push((src.len(), Token::End));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].1.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(ParseError { position: self.offset(), expected: expected.iter().map(|s| s.to_string()).collect() })
    }

    fn expr(&mut self) -> Result<FormulaExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinaryOp::Add,
                Token::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = FormulaExpr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn term(&mut self) -> Result<FormulaExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinaryOp::Mul,
                Token::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = FormulaExpr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn unary(&mut self) -> Result<FormulaExpr, ParseError> {
        if *self.peek() == Token::Minus {
            self.bump();
            let operand = self.unary()?;
            return Ok(FormulaExpr::Neg { operand: Box::new(operand) });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<FormulaExpr, ParseError> {
        let start = self.offset();
        match self.bump() {
            Token::Number(value) => Ok(FormulaExpr::Number { value }),
            Token::LParen => {
                let inner = self.expr()?;
                if *self.peek() != Token::RParen {
                    return self.fail(&[")", "operator"]);
                }
                self.bump();
                Ok(inner)
            }
            Token::Ident(name) => {
                if *self.peek() != Token::LParen {
                    return Ok(FormulaExpr::Ident { name });
                }
                let Some(function) = Function::from_name(&name) else {
                    return Err(ParseError {
                        position: start,
                        expected: ["mean", "sum", "count", "min", "max", "norm"].iter().map(|s| s.to_string()).collect(),
                    });
                };
                self.bump();
                let mut args = vec![self.expr()?];
                while *self.peek() == Token::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                if *self.peek() != Token::RParen {
                    return self.fail(&[")", ","]);
                }
                if args.len() != function.arity() {
                    return Err(ParseError {
                        position: self.offset(),
                        expected: vec![format!("{} argument(s) to {}", function.arity(), function.name())],
                    });
                }
                self.bump();
                Ok(FormulaExpr::Call { function, args })
            }
            _ => Err(ParseError { position: start, expected: vec!["number".into(), "identifier".into(), "(".into(), "-".into()] }),
        }
    }
}

pub fn parse_formula(src: &str) -> Result<FormulaExpr, ParseError> {
    let mut parser = Parser { tokens: tokenize(src)?, pos: 0 };
    let expr = parser.expr()?;
    if *parser.peek() != Token::End {
        return parser.fail(&["operator", "end of input"]);
    }
    Ok(expr)
}

/// Value bound to an identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Binding {
    Scalar(f64),
    Series(Vec<f64>),
}

impl From<f64> for Binding {
    fn from(v: f64) -> Self {
        Binding::Scalar(v)
    }
}

impl From<Vec<f64>> for Binding {
    fn from(v: Vec<f64>) -> Self {
        Binding::Series(v)
    }
}

pub type Bindings = BTreeMap<String, Binding>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    UnboundIdentifier(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("aggregate `{0}` applied to an empty series")]
    EmptySeriesAggregate(&'static str),
    #[error("series length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("formula evaluates to a series, not a scalar")]
    NotScalar,
    #[error("formula result is not finite")]
    NonFinite,
}

pub fn evaluate(expr: &FormulaExpr, bindings: &Bindings) -> Result<f64, EvalError> {
    match eval_value(expr, bindings)? {
        Binding::Scalar(v) if v.is_finite() => Ok(v),
        Binding::Scalar(_) => Err(EvalError::NonFinite),
        Binding::Series(_) => Err(EvalError::NotScalar),
    }
}

fn eval_value(expr: &FormulaExpr, bindings: &Bindings) -> Result<Binding, EvalError> {
    match expr {
        FormulaExpr::Number { value } => Ok(Binding::Scalar(*value)),
        FormulaExpr::Ident { name } => bindings.get(name).cloned().ok_or_else(|| EvalError::UnboundIdentifier(name.clone())),
        FormulaExpr::Neg { operand } => Ok(match eval_value(operand, bindings)? {
            Binding::Scalar(v) => Binding::Scalar(-v),
            Binding::Series(v) => Binding::Series(v.into_iter().map(|x| -x).collect()),
        }),
        FormulaExpr::Binary { op, lhs, rhs } => {
            let lhs = eval_value(lhs, bindings)?;
            let rhs = eval_value(rhs, bindings)?;
            elementwise(lhs, rhs, |a, b| apply(*op, a, b))
        }
        FormulaExpr::Call { function, args } => {
            let first = eval_value(&args[0], bindings)?;
            if *function == Function::Norm {
                let denom = eval_value(&args[1], bindings)?;
                return elementwise(first, denom, |a, b| apply(BinaryOp::Div, a, b));
            }
            let values = match first {
                Binding::Scalar(v) => vec![v],
                Binding::Series(v) => v,
            };
            if values.is_empty() {
                return Err(EvalError::EmptySeriesAggregate(function.name()));
            }
            let n = values.len() as f64;
            let out = match function {
                Function::Mean => values.iter().sum::<f64>() / n,
                Function::Sum => values.iter().sum(),
                Function::Count => n,
                Function::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
                Function::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Function::Norm => unreachable!("handled above"),
            };
            Ok(Binding::Scalar(out))
        }
    }
}

fn apply(op: BinaryOp, a: f64, b: f64) -> Result<f64, EvalError> {
    Ok(match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b.abs() < DIVISION_EPSILON {
                return Err(EvalError::DivisionByZero);
            }
            a / b
        }
    })
}

fn elementwise(lhs: Binding, rhs: Binding, f: impl Fn(f64, f64) -> Result<f64, EvalError>) -> Result<Binding, EvalError> {
    match (lhs, rhs) {
        (Binding::Scalar(a), Binding::Scalar(b)) => f(a, b).map(Binding::Scalar),
        (Binding::Series(a), Binding::Scalar(b)) => a.into_iter().map(|x| f(x, b)).collect::<Result<_, _>>().map(Binding::Series),
        (Binding::Scalar(a), Binding::Series(b)) => b.into_iter().map(|y| f(a, y)).collect::<Result<_, _>>().map(Binding::Series),
        (Binding::Series(a), Binding::Series(b)) => {
            if a.len() != b.len() {
                return Err(EvalError::LengthMismatch(a.len(), b.len()));
            }
            a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect::<Result<_, _>>().map(Binding::Series)
        }
    }
}
