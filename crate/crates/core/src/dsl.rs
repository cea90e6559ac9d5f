//! A tiny expression language for metric components and test fields, and
//! the TOML loader for user-defined metrics.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | x1..x4 | pi | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | sqrt | log
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-2^2`
//! is `-4` and `2^-1` is `0.5`.

use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::cartan::ChartBox;
use crate::gca::Mat4;
use crate::riemann::{MetricSpec, Provenance, P4};

/// Byte range `[start, end)` in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Sin, Func::Cos, Func::Exp, Func::Sqrt, Func::Log];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Num(f64),
    Var(usize),
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Expression tree. Equality compares structure only, not source spans.
#[derive(Debug, Clone)]
pub struct Expr {
    pub node: Node,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.node, &other.node) {
            (Node::Num(a), Node::Num(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Pi, Node::Pi) => true,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Bin(o1, a1, b1), Node::Bin(o2, a2, b2)) => o1 == o2 && a1 == a2 && b1 == b2,
            (Node::Call(f1, a1), Node::Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

/// Fully parenthesized rendering that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Pi => write!(f, "pi"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at offset {offset}: expected {}, found {found}", .expected.join(" | "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at {}..{}", .0.start, .0.end)]
    DivisionByZero(Span),
    #[error("log of non-positive value {value} at {}..{}", .span.start, .span.end)]
    LogDomain { span: Span, value: f64 },
    #[error("sqrt of negative value {value} at {}..{}", .span.start, .span.end)]
    SqrtDomain { span: Span, value: f64 },
    #[error("non-finite result at {}..{}", .0.start, .0.end)]
    NonFinite(Span),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Op(c) => format!("'{c}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = if c.is_ascii_digit() || c == b'.' {
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
            match src[start..i].parse::<f64>() {
                Ok(v) if v.is_finite() => Tok::Num(v),
                _ => {
                    return Err(ParseError {
                        offset: start,
                        expected: vec!["number"],
                        found: format!("malformed literal '{}'", &src[start..i]),
                    })
                }
            }
        } else if c.is_ascii_alphabetic() {
            while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                i += 1;
            }
            Tok::Ident(src[start..i].to_string())
        } else {
            i += 1;
            match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('?');
                    return Err(ParseError {
                        offset: start,
                        expected: vec!["operator", "operand"],
                        found: format!("character '{ch}'"),
                    });
                }
            }
        };
        out.push((tok, Span { start, end: i }));
    }
    out.push((
        Tok::End,
        Span {
            start: src.len(),
            end: src.len(),
        },
    ));
    Ok(out)
}

const OPERAND: [&str; 5] = ["number", "x1..x4", "pi", "function call", "'('"];

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        ParseError {
            offset: self.span().start,
            expected: expected.to_vec(),
            found: self.peek().describe(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            let (_, s) = self.bump();
            let inner = self.unary()?;
            let span = Span {
                start: s.start,
                end: inner.span.end,
            };
            return Ok(Expr {
                node: Node::Neg(Box::new(inner)),
                span,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, span) = self.toks[self.pos].clone();
        match tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr {
                    node: Node::Num(v),
                    span,
                })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                let close = self.expect_rparen()?;
                Ok(Expr {
                    node: inner.node,
                    span: Span {
                        start: span.start,
                        end: close.end,
                    },
                })
            }
            Tok::Ident(name) => {
                if let Some(i) = variable_index(&name) {
                    self.bump();
                    return Ok(Expr {
                        node: Node::Var(i),
                        span,
                    });
                }
                if name == "pi" {
                    self.bump();
                    return Ok(Expr {
                        node: Node::Pi,
                        span,
                    });
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError {
                        offset: span.start,
                        expected: OPERAND.to_vec(),
                        found: format!("unknown identifier '{name}'"),
                    });
                };
                self.bump();
                if *self.peek() != Tok::LParen {
                    return Err(self.error(&["'('"]));
                }
                self.bump();
                let arg = self.expr()?;
                let close = self.expect_rparen()?;
                Ok(Expr {
                    node: Node::Call(func, Box::new(arg)),
                    span: Span {
                        start: span.start,
                        end: close.end,
                    },
                })
            }
            _ => Err(self.error(&OPERAND)),
        }
    }

    fn expect_rparen(&mut self) -> Result<Span, ParseError> {
        if *self.peek() == Tok::RParen {
            Ok(self.bump().1)
        } else {
            Err(self.error(&["')'", "operator"]))
        }
    }
}

fn variable_index(name: &str) -> Option<usize> {
    match name {
        "x1" => Some(0),
        "x2" => Some(1),
        "x3" => Some(2),
        "x4" => Some(3),
        _ => None,
    }
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    let span = Span {
        start: a.span.start,
        end: b.span.end,
    };
    Expr {
        node: Node::Bin(op, Box::new(a), Box::new(b)),
        span,
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(e)
}

impl Expr {
    pub fn eval(&self, p: &[f64; 4]) -> Result<f64, EvalError> {
        let v = match &self.node {
            Node::Num(v) => *v,
            Node::Var(i) => p[*i],
            Node::Pi => std::f64::consts::PI,
            Node::Neg(a) => -a.eval(p)?,
            Node::Bin(op, a, b) => {
                let (x, y) = (a.eval(p)?, b.eval(p)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::DivisionByZero(self.span));
                        }
                        x / y
                    }
                    BinOp::Pow => x.powf(y),
                }
            }
            Node::Call(func, a) => {
                let x = a.eval(p)?;
                match func {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(EvalError::SqrtDomain {
                                span: self.span,
                                value: x,
                            });
                        }
                        x.sqrt()
                    }
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(EvalError::LogDomain {
                                span: self.span,
                                value: x,
                            });
                        }
                        x.ln()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(self.span))
        }
    }
}

/// Convert a byte offset into a 1-based `(line, column)` pair.
pub fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |nl| offset - nl - 1) + 1;
    (line, col)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("{origin}:{line}:{col}: {message}")]
    Config {
        origin: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{origin}: metric '{name}' is not positive definite at probe point {point:?}")]
    Indefinite {
        origin: String,
        name: String,
        point: [f64; 4],
    },
    #[error("{origin}: metric '{name}' cannot be evaluated at probe point {point:?}: {source}")]
    ProbeEval {
        origin: String,
        name: String,
        point: [f64; 4],
        source: EvalError,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Component keys in upper-triangular order.
pub const COMPONENT_KEYS: [&str; 10] = [
    "g11", "g12", "g13", "g14", "g22", "g23", "g24", "g33", "g34", "g44",
];

const INDEX_PAIRS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// A parsed `[[metric]]` table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    pub name: String,
    pub domain: (f64, f64),
    /// Upper-triangular components in the order of [`COMPONENT_KEYS`].
    pub components: [Expr; 10],
}

impl MetricConfig {
    /// Symmetric completion at `p`.
    pub fn evaluate(&self, p: &[f64; 4]) -> Result<Mat4, EvalError> {
        let mut g = Mat4::zeros();
        for (e, &(i, j)) in self.components.iter().zip(&INDEX_PAIRS) {
            let v = e.eval(p)?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        Ok(g)
    }

    /// Sixteen points at ¼ and ¾ along each axis of the domain box.
    pub fn probe_points(&self) -> Vec<[f64; 4]> {
        let (lo, hi) = self.domain;
        let at = |bit: usize| lo + (hi - lo) * if bit == 0 { 0.25 } else { 0.75 };
        (0..16)
            .map(|k| {
                [
                    at(k & 1),
                    at((k >> 1) & 1),
                    at((k >> 2) & 1),
                    at((k >> 3) & 1),
                ]
            })
            .collect()
    }
}

/// Parse a TOML document holding one or more `[[metric]]` tables.
pub fn parse_config(src: &str, origin: &str) -> Result<Vec<MetricConfig>, DslError> {
    let cfg_err = |offset: usize, message: String| {
        let (line, col) = line_col(src, offset);
        DslError::Config {
            origin: origin.to_string(),
            line,
            col,
            message,
        }
    };
    let file: SpannedFile = toml::from_str(src).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        cfg_err(offset, e.message().to_string())
    })?;
    if file.metric.is_empty() {
        return Err(cfg_err(0, "no [[metric]] tables found".into()));
    }
    let mut out = Vec::new();
    for table in file.metric {
        let table_start = table.span().start;
        let table = table.into_inner();
        if let Some(key) = table.other.keys().next() {
            // Spans do not survive `serde(flatten)`; find the key in the text.
            return Err(cfg_err(
                key_offset(src, table_start, key),
                format!("unknown key '{key}'"),
            ));
        }
        let components = table.components();
        let name = table
            .name
            .ok_or_else(|| cfg_err(table_start, "missing key 'name'".into()))?
            .into_inner();
        let domain = table.domain.ok_or_else(|| {
            cfg_err(
                table_start,
                format!("metric '{name}': missing key 'domain'"),
            )
        })?;
        let dspan = domain.span().start;
        let d = domain.into_inner();
        if d.len() != 2 || !(d[0] < d[1]) || !d[0].is_finite() || !d[1].is_finite() {
            return Err(cfg_err(
                dspan,
                format!("metric '{name}': domain must be [lo, hi] with lo < hi"),
            ));
        }
        let mut comps = Vec::with_capacity(10);
        for (key, value) in COMPONENT_KEYS.iter().zip(components) {
            let Some(v) = value else {
                return Err(cfg_err(
                    table_start,
                    format!("metric '{name}': missing component '{key}'"),
                ));
            };
            // +1 skips the opening quote of a basic string.
            let base = v.span().start + 1;
            let text = v.into_inner();
            let e = parse(&text).map_err(|pe| cfg_err(base + pe.offset, format!("{key}: {pe}")))?;
            comps.push(e);
        }
        let components: [Expr; 10] = comps.try_into().expect("ten components");
        out.push(MetricConfig {
            name,
            domain: (d[0], d[1]),
            components,
        });
    }
    Ok(out)
}

/// Offset of the first line at or after `from` that assigns `key`.
fn key_offset(src: &str, from: usize, key: &str) -> usize {
    let mut offset = from;
    for line in src[from..].split_inclusive('\n') {
        let body = line.trim_start();
        if let Some(rest) = body.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return offset + (line.len() - body.len());
            }
        }
        offset += line.len();
    }
    from
}

#[derive(Debug, Deserialize)]
struct SpannedFile {
    #[serde(default)]
    metric: Vec<toml::Spanned<SpannedTable>>,
}

#[derive(Debug, Deserialize)]
struct SpannedTable {
    name: Option<toml::Spanned<String>>,
    domain: Option<toml::Spanned<Vec<f64>>>,
    g11: Option<toml::Spanned<String>>,
    g12: Option<toml::Spanned<String>>,
    g13: Option<toml::Spanned<String>>,
    g14: Option<toml::Spanned<String>>,
    g22: Option<toml::Spanned<String>>,
    g23: Option<toml::Spanned<String>>,
    g24: Option<toml::Spanned<String>>,
    g33: Option<toml::Spanned<String>>,
    g34: Option<toml::Spanned<String>>,
    g44: Option<toml::Spanned<String>>,
    #[serde(flatten)]
    other: std::collections::BTreeMap<String, toml::Value>,
}

impl SpannedTable {
    fn components(&self) -> [Option<toml::Spanned<String>>; 10] {
        [
            self.g11.clone(),
            self.g12.clone(),
            self.g13.clone(),
            self.g14.clone(),
            self.g22.clone(),
            self.g23.clone(),
            self.g24.clone(),
            self.g33.clone(),
            self.g34.clone(),
            self.g44.clone(),
        ]
    }
}

/// Build a metric from a config, enforcing positive definiteness at the probe points.
pub fn load_metric(cfg: &MetricConfig, origin: &str) -> Result<MetricSpec, DslError> {
    for point in cfg.probe_points() {
        let g = cfg.evaluate(&point).map_err(|source| DslError::ProbeEval {
            origin: origin.to_string(),
            name: cfg.name.clone(),
            point,
            source,
        })?;
        if g.cholesky().is_none() {
            return Err(DslError::Indefinite {
                origin: origin.to_string(),
                name: cfg.name.clone(),
                point,
            });
        }
    }
    let owned = cfg.clone();
    let (lo, hi) = cfg.domain;
    Ok(MetricSpec::new(
        cfg.name.clone(),
        ChartBox::uniform(lo, hi),
        move |p: &P4| {
            owned
                .evaluate(&[p[0], p[1], p[2], p[3]])
                .unwrap_or_else(|_| Mat4::from_element(f64::NAN))
        },
        Provenance::Dsl {
            source: origin.to_string(),
        },
    ))
}

pub fn load_metric_str(src: &str, origin: &str) -> Result<Vec<MetricSpec>, DslError> {
    parse_config(src, origin)?
        .iter()
        .map(|c| load_metric(c, origin))
        .collect()
}

pub fn load_metric_file(path: &Path) -> Result<Vec<MetricSpec>, DslError> {
    let src = std::fs::read_to_string(path).map_err(|e| DslError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_metric_str(&src, &path.display().to_string())
}
