//! Arithmetic expressions over carrier coordinates.
//!
//! Grammar, whitespace-insensitive:
//!
//! ```text
//! expr    := term (("+"|"-") term)* ;
//! term    := factor (("*"|"/") factor)* ;
//! factor  := unary ("^" factor)? ;
//! unary   := "-" unary | atom ;
//! atom    := NUMBER | VAR | FUNC "(" expr ("," expr)* ")" | "(" expr ")" ;
//! VAR     := "x" DIGIT ; FUNC := "abs" | "min" | "max" ;
//! ```
//!
//! A minus sign written directly in front of a number literal is folded into
//! a negative constant, so `-2` is `Const(-2)` while `-(2)` is `Neg(Const(2))`.
//! Because `^` binds looser than unary minus both read the same: `-2^2 = 4`.
//!
//! The exponent of `^` must be free of variables. `min` and `max` accept two
//! or more arguments and fold to the left.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::space::Point;

/// Highest variable index the grammar can express (`x9`).
pub const MAX_VARIABLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, e) => e.max_var(),
            Expr::Binary(_, l, r) => match (l.max_var(), r.max_var()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
        }
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    /// Replaces every `Var(i)` by `args[i]`.
    pub fn substitute(&self, args: &[Expr]) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => args[*i].clone(),
            Expr::Unary(op, e) => Expr::unary(*op, e.substitute(args)),
            Expr::Binary(op, l, r) => Expr::binary(*op, l.substitute(args), r.substitute(args)),
        }
    }

    /// Evaluates at `vars`; `vars.len()` must exceed every variable index.
    pub fn eval(&self, vars: &[f64]) -> std::result::Result<f64, EvalFault> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *vars.get(*i).ok_or(EvalFault::UnboundVariable(*i))?,
            Expr::Unary(op, e) => {
                let v = e.eval(vars)?;
                match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Abs => v.abs(),
                }
            }
            Expr::Binary(op, l, r) => {
                let a = l.eval(vars)?;
                let b = r.eval(vars)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalFault::DivisionByZero);
                        }
                        a / b
                    }
                    BinaryOp::Pow => power(a, b),
                    BinaryOp::Min => a.min(b),
                    BinaryOp::Max => a.max(b),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalFault::NonFinite)
        }
    }
}

fn power(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalFault {
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite intermediate result")]
    NonFinite,
    #[error("variable x{0} is not bound")]
    UnboundVariable(usize),
}

/// An evaluation fault attributed to one output coordinate of a map.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("evaluation fault in output coordinate {coordinate} at {at}: {fault}")]
pub struct EvalError {
    pub coordinate: usize,
    pub at: Point,
    pub fault: EvalFault,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("expected {expected}, found {found}")]
    UnexpectedToken { expected: String, found: String },
    #[error("invalid number literal {0:?}")]
    InvalidNumber(String),
    #[error("unknown identifier {0:?}")]
    UnknownIdentifier(String),
    #[error("{func} takes {expected} argument(s), found {found}")]
    Arity {
        func: String,
        expected: String,
        found: usize,
    },
    #[error("exponent must not depend on variables")]
    NonConstantExponent,
    #[error("variable x{index} is out of range for input dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },
}

/// A syntax error at a 0-based byte offset into the source text.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at offset {offset} (column {}): {kind}", self.column())]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    /// 1-based column, as editors show it.
    pub fn column(&self) -> usize {
        self.offset + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Var(usize),
    Func(Func),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Abs,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Var(i) => write!(f, "variable x{i}"),
            Tok::Func(func) => write!(f, "function {}", func.name()),
            Tok::Plus => f.write_str("'+'"),
            Tok::Minus => f.write_str("'-'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Slash => f.write_str("'/'"),
            Tok::Caret => f.write_str("'^'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str, var_limit: usize) -> std::result::Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let simple = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push((tok, start));
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
            let lit = &text[start..i];
            let valid_shape = lit.bytes().filter(|&b| b == b'.').count() <= 1
                && lit.bytes().take_while(|b| *b != b'e' && *b != b'E').any(|b| b.is_ascii_digit());
            let value = lit
                .parse::<f64>()
                .ok()
                .filter(|v| valid_shape && v.is_finite())
                .ok_or_else(|| ParseError {
                    offset: start,
                    kind: ParseErrorKind::InvalidNumber(lit.to_string()),
                })?;
            out.push((Tok::Num(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let ident = &text[start..i];
            let tok = match ident {
                "abs" => Tok::Func(Func::Abs),
                "min" => Tok::Func(Func::Min),
                "max" => Tok::Func(Func::Max),
                _ if ident.len() == 2 && ident.as_bytes()[0] == b'x' && ident.as_bytes()[1].is_ascii_digit() => {
                    let index = (ident.as_bytes()[1] - b'0') as usize;
                    if index >= var_limit {
                        return Err(ParseError {
                            offset: start,
                            kind: ParseErrorKind::VariableOutOfRange {
                                index,
                                dim: var_limit,
                            },
                        });
                    }
                    Tok::Var(index)
                }
                _ => {
                    return Err(ParseError {
                        offset: start,
                        kind: ParseErrorKind::UnknownIdentifier(ident.to_string()),
                    })
                }
            };
            out.push((tok, start));
            continue;
        }
        let ch = text[start..].chars().next().expect("in bounds");
        return Err(ParseError {
            offset: start,
            kind: ParseErrorKind::UnexpectedChar(ch),
        });
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

type PResult<T> = std::result::Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind: ParseErrorKind::UnexpectedToken {
                expected: expected.to_string(),
                found: self.peek().to_string(),
            },
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        let base = self.unary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let at = self.offset();
        let exponent = self.factor()?;
        if !exponent.is_constant() {
            return Err(ParseError {
                offset: at,
                kind: ParseErrorKind::NonConstantExponent,
            });
        }
        Ok(Expr::binary(BinaryOp::Pow, base, exponent))
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() != Tok::Minus {
            return self.atom();
        }
        self.bump();
        if let Tok::Num(v) = *self.peek() {
            self.bump();
            return Ok(Expr::Const(-v));
        }
        Ok(Expr::unary(UnaryOp::Neg, self.unary()?))
    }

    fn atom(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Var(i) => {
                self.bump();
                Ok(Expr::Var(i))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Func(func) => {
                let at = self.offset();
                self.bump();
                self.expect(Tok::LParen, "'('")?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, "',' or ')'")?;
                build_call(func, args, at)
            }
            _ => Err(self.unexpected("a number, variable, function or '('")),
        }
    }
}

fn build_call(func: Func, args: Vec<Expr>, at: usize) -> PResult<Expr> {
    let arity = |expected: &str| ParseError {
        offset: at,
        kind: ParseErrorKind::Arity {
            func: func.name().to_string(),
            expected: expected.to_string(),
            found: args.len(),
        },
    };
    match func {
        Func::Abs => {
            if args.len() != 1 {
                return Err(arity("1"));
            }
            Ok(Expr::unary(UnaryOp::Abs, args.into_iter().next().expect("one arg")))
        }
        Func::Min | Func::Max => {
            if args.len() < 2 {
                return Err(arity("at least 2"));
            }
            let op = if func == Func::Min { BinaryOp::Min } else { BinaryOp::Max };
            let mut it = args.into_iter();
            let first = it.next().expect("two args");
            Ok(it.fold(first, |acc, e| Expr::binary(op, acc, e)))
        }
    }
}

/// Parses `text`, allowing variables `x0..x9`.
pub fn parse(text: &str) -> std::result::Result<Expr, ParseError> {
    parse_with_dim(text, MAX_VARIABLES)
}

/// Parses `text`, rejecting variables with index `>= dim`.
pub fn parse_with_dim(text: &str, dim: usize) -> std::result::Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(text, dim.min(MAX_VARIABLES))?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("an operator or end of input"));
    }
    Ok(e)
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_POW: u8 = 3;
const PREC_UNARY: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => PREC_UNARY,
        Expr::Const(_) | Expr::Var(_) => PREC_ATOM,
        Expr::Unary(UnaryOp::Neg, _) => PREC_UNARY,
        Expr::Unary(UnaryOp::Abs, _) => PREC_ATOM,
        Expr::Binary(op, ..) => match op {
            BinaryOp::Add | BinaryOp::Sub => PREC_ADD,
            BinaryOp::Mul | BinaryOp::Div => PREC_MUL,
            BinaryOp::Pow => PREC_POW,
            BinaryOp::Min | BinaryOp::Max => PREC_ATOM,
        },
    }
}

fn write_const(out: &mut String, c: f64) {
    use std::fmt::Write;
    let mag = c.abs();
    if mag != 0.0 && !(1e-4..1e15).contains(&mag) {
        write!(out, "{c:e}").expect("write to string");
    } else {
        write!(out, "{c}").expect("write to string");
    }
}

fn write_wrapped(out: &mut String, e: &Expr, parens: bool) {
    if parens {
        out.push('(');
    }
    write_expr(out, e);
    if parens {
        out.push(')');
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Const(c) => write_const(out, *c),
        Expr::Var(i) => {
            out.push('x');
            out.push_str(&i.to_string());
        }
        Expr::Unary(UnaryOp::Abs, inner) => {
            out.push_str("abs(");
            write_expr(out, inner);
            out.push(')');
        }
        Expr::Unary(UnaryOp::Neg, inner) => {
            out.push('-');
            // `-` directly before a literal would fold into a negative constant.
            let literal = matches!(**inner, Expr::Const(c) if !c.is_sign_negative());
            write_wrapped(out, inner, literal || precedence(inner) < PREC_UNARY);
        }
        Expr::Binary(op @ (BinaryOp::Min | BinaryOp::Max), l, r) => {
            out.push_str(if *op == BinaryOp::Min { "min(" } else { "max(" });
            write_expr(out, l);
            out.push_str(", ");
            write_expr(out, r);
            out.push(')');
        }
        Expr::Binary(BinaryOp::Pow, l, r) => {
            write_wrapped(out, l, precedence(l) <= PREC_POW);
            out.push('^');
            write_wrapped(out, r, precedence(r) < PREC_POW);
        }
        Expr::Binary(op, l, r) => {
            let (p, sym) = match op {
                BinaryOp::Add => (PREC_ADD, " + "),
                BinaryOp::Sub => (PREC_ADD, " - "),
                BinaryOp::Mul => (PREC_MUL, "*"),
                BinaryOp::Div => (PREC_MUL, "/"),
                _ => unreachable!("handled above"),
            };
            write_wrapped(out, l, precedence(l) < p);
            out.push_str(sym);
            write_wrapped(out, r, precedence(r) <= p);
        }
    }
}

/// Renders `e` with the fewest parentheses that still parse back to `e`.
pub fn format(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format(self))
    }
}

/// A map `ℝ^in_dim → ℝ^out_dim`, one expression per output coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    outputs: Vec<Expr>,
    in_dim: usize,
}

impl MapSpec {
    pub fn new(outputs: Vec<Expr>, in_dim: usize) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::Problem("a map needs at least one output".into()));
        }
        for e in &outputs {
            if let Some(i) = e.max_var().filter(|&i| i >= in_dim) {
                return Err(Error::Problem(format!(
                    "expression {e} uses x{i} but the input dimension is {in_dim}"
                )));
            }
        }
        Ok(Self { outputs, in_dim })
    }

    /// Parses one expression per output coordinate.
    pub fn parse<S: AsRef<str>>(texts: &[S], in_dim: usize) -> std::result::Result<Self, MapParseError> {
        let outputs = texts
            .iter()
            .enumerate()
            .map(|(coordinate, t)| {
                parse_with_dim(t.as_ref(), in_dim).map_err(|error| MapParseError { coordinate, error })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if outputs.is_empty() {
            return Err(MapParseError {
                coordinate: 0,
                error: ParseError {
                    offset: 0,
                    kind: ParseErrorKind::UnexpectedToken {
                        expected: "at least one output expression".into(),
                        found: "none".into(),
                    },
                },
            });
        }
        Ok(Self { outputs, in_dim })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            outputs: (0..dim).map(Expr::Var).collect(),
            in_dim: dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[Expr] {
        &self.outputs
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &MapSpec) -> Result<MapSpec> {
        if inner.out_dim() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                found: inner.out_dim(),
            });
        }
        Ok(MapSpec {
            outputs: self.outputs.iter().map(|e| e.substitute(&inner.outputs)).collect(),
            in_dim: inner.in_dim,
        })
    }

    pub fn eval_coords(&self, input: &[f64]) -> std::result::Result<Vec<f64>, EvalError> {
        self.outputs
            .iter()
            .enumerate()
            .map(|(coordinate, e)| {
                e.eval(input).map_err(|fault| EvalError {
                    coordinate,
                    at: Point(input.to_vec()),
                    fault,
                })
            })
            .collect()
    }

    pub fn eval(&self, p: &Point) -> Result<Point> {
        p.check_dim(self.in_dim)?;
        Ok(Point(self.eval_coords(p.coords())?))
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.outputs.iter().map(format).collect()
    }
}

impl Serialize for MapSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_strings().serialize(s)
    }
}

/// Parse failure in one output coordinate of a map.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("output {coordinate}: {error}")]
pub struct MapParseError {
    pub coordinate: usize,
    pub error: ParseError,
}

impl From<MapParseError> for Error {
    fn from(e: MapParseError) -> Self {
        Error::Parse(e.error)
    }
}
