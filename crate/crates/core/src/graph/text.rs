//! Canonical text form.
//!
//! ```text
//! expr := op_name "(" expr {"," expr} ")" | "x" | "0" | "1" | "p" index "(" expr ")"
//! ```
//!
//! Printing emits no whitespace except one space after each comma.

use std::fmt;

use super::{ActivationGraph, Expr, GraphError, OperatorKind, MAX_NODES, MAX_PARAMS};

/// What the parser accepts beyond plain syntax.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ParseLimits {
    /// Maximum number of parameter sites; `None` for no limit.
    pub max_params: Option<usize>,
    /// Maximum number of operator nodes; `None` for no limit.
    pub max_nodes: Option<usize>,
    /// Whether several sites may share one parameter index.
    pub shared_params: bool,
    /// Whether indices may have more than one digit.
    pub multi_digit: bool,
}

impl ParseLimits {
    pub fn genotype() -> Self {
        ParseLimits {
            max_params: Some(MAX_PARAMS),
            max_nodes: Some(MAX_NODES),
            shared_params: false,
            multi_digit: false,
        }
    }

    pub fn unbounded() -> Self {
        ParseLimits {
            max_params: None,
            max_nodes: None,
            shared_params: true,
            multi_digit: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnknownOperator,
    ArityMismatch,
    TooManyParams,
    TooManyNodes,
    InvalidParam,
    Syntax,
    Structure,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
    pub detail: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ParseErrorKind::UnknownOperator => "unknown operator",
            ParseErrorKind::ArityMismatch => "arity mismatch",
            ParseErrorKind::TooManyParams => "too many parameters",
            ParseErrorKind::TooManyNodes => "too many nodes",
            ParseErrorKind::InvalidParam => "invalid parameter",
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::Structure => "invalid graph",
        };
        write!(f, "{what} at offset {} ({})", self.offset, self.detail)
    }
}

impl std::error::Error for ParseError {}

pub fn print(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Input => out.push('x'),
        Expr::Zero => out.push('0'),
        Expr::One => out.push('1'),
        Expr::Param(i, a) => {
            out.push('p');
            out.push_str(&i.to_string());
            out.push('(');
            write_expr(a, out);
            out.push(')');
        }
        Expr::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            write_expr(a, out);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            out.push_str(op.name());
            out.push('(');
            write_expr(a, out);
            out.push_str(", ");
            write_expr(b, out);
            out.push(')');
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    limits: ParseLimits,
    sites: Vec<(usize, usize)>,
}

fn err(kind: ParseErrorKind, offset: usize, detail: impl Into<String>) -> ParseError {
    ParseError {
        kind,
        offset,
        detail: detail.into(),
    }
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        match self.peek() {
            Some(got) if got == c => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => Err(err(
                ParseErrorKind::Syntax,
                self.pos,
                format!("expected `{}`, found `{}`", c as char, got as char),
            )),
            None => Err(err(
                ParseErrorKind::Syntax,
                self.pos,
                format!("expected `{}`, found end of input", c as char),
            )),
        }
    }

    fn word(&mut self) -> (usize, &str) {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        // The slice holds only ASCII bytes, so it is valid UTF-8.
        let w = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        (start, w)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let (start, w) = self.word();
        if w.is_empty() {
            return Err(match self.peek() {
                Some(c) => err(ParseErrorKind::Syntax, start, format!("unexpected `{}`", c as char)),
                None => err(ParseErrorKind::Syntax, start, "unexpected end of input"),
            });
        }
        match w {
            "x" => return Ok(Expr::Input),
            "0" => return Ok(Expr::Zero),
            "1" => return Ok(Expr::One),
            _ => {}
        }
        if let Some(index) = param_index(w) {
            let w = w.to_owned();
            return self.param(start, &w, index);
        }
        let w = w.to_owned();
        let op: OperatorKind = w
            .parse()
            .map_err(|()| err(ParseErrorKind::UnknownOperator, start, format!("`{w}`")))?;
        self.expect(b'(')?;
        let mut args = vec![self.expr()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            args.push(self.expr()?);
        }
        let close = self.pos;
        self.expect(b')').map_err(|e| {
            if e.detail.contains("end of input") {
                e
            } else {
                err(ParseErrorKind::Syntax, close, e.detail)
            }
        })?;
        if args.len() != op.arity() {
            return Err(err(
                ParseErrorKind::ArityMismatch,
                start,
                format!("{w} expects {} argument(s), found {}", op.arity(), args.len()),
            ));
        }
        let mut args = args.into_iter();
        let first = args.next().unwrap_or(Expr::Input);
        Ok(match op {
            OperatorKind::Unary(u) => Expr::unary(u, first),
            OperatorKind::Binary(b) => Expr::binary(b, first, args.next().unwrap_or(Expr::Input)),
        })
    }

    fn param(&mut self, start: usize, w: &str, index: usize) -> Result<Expr, ParseError> {
        if !self.limits.multi_digit && w.len() > 2 {
            return Err(err(
                ParseErrorKind::InvalidParam,
                start,
                format!("`{w}`: parameter indices are single digits"),
            ));
        }
        if !self.limits.shared_params && self.sites.iter().any(|&(_, i)| i == index) {
            return Err(err(
                ParseErrorKind::InvalidParam,
                start,
                format!("`{w}` appears more than once"),
            ));
        }
        self.sites.push((start, index));
        if let Some(max) = self.limits.max_params {
            if self.sites.len() > max {
                return Err(err(
                    ParseErrorKind::TooManyParams,
                    start,
                    format!("at most {max} parameter sites are allowed"),
                ));
            }
        }
        self.expect(b'(')?;
        let inner = self.expr()?;
        self.expect(b')')?;
        if matches!(inner, Expr::Param(..)) {
            return Err(err(
                ParseErrorKind::InvalidParam,
                start,
                "an edge carries at most one parameter",
            ));
        }
        Ok(Expr::param(index, inner))
    }
}

fn param_index(w: &str) -> Option<usize> {
    let digits = w.strip_prefix('p')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

pub fn parse(s: &str, limits: ParseLimits) -> Result<ActivationGraph, ParseError> {
    let mut p = Parser {
        src: s.as_bytes(),
        pos: 0,
        limits,
        sites: Vec::new(),
    };
    let root = p.expr()?;
    if let Some(c) = p.peek() {
        return Err(err(
            ParseErrorKind::Syntax,
            p.pos,
            format!("trailing input starting with `{}`", c as char),
        ));
    }
    if let Some(max) = limits.max_nodes {
        let n = root.node_count();
        if n > max {
            return Err(err(
                ParseErrorKind::TooManyNodes,
                0,
                format!("{n} nodes, at most {max} allowed"),
            ));
        }
    }
    ActivationGraph::new(root).map_err(|e| {
        let offset = match e {
            GraphError::ParamIndexGap(_) => p.sites.first().map_or(0, |s| s.0),
            _ => 0,
        };
        err(ParseErrorKind::Structure, offset, e.to_string())
    })
}
