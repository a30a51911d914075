//! A tiny deterministic expression language for functions and exponent
//! fields.
//!
//! Grammar (precedence low to high): `+ -`, `* /`, unary `-`, `^`
//! (right-associative). No implicit multiplication. Variables are `x`, `y`
//! in 1-D (aliases `x1`, `y1`) and `x1, x2, y1, y2` in 2-D; using `x` in
//! 2-D is a parse-time error because the seminorm integrand needs both
//! points unambiguously. Functions: `sin cos exp log abs sqrt` (one
//! argument), `min max` (two). Constants: `pi`, `e`.
//!
//! Evaluation is total on its declared domain: division by zero, `log` of a
//! non-positive value, `sqrt` of a negative value, and overflow are
//! structured errors, never silent NaN/Inf.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarGroup {
    /// The x-point of the integrand (or the only point for one-point fields).
    X,
    /// The y-point of the seminorm integrand.
    Y,
}

/// A variable reference: group plus 0-based axis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    pub group: VarGroup,
    pub axis: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedConst {
    Pi,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(NamedConst),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    EmptyInput,
    UnexpectedChar,
    InvalidNumber,
    UnbalancedParens,
    UnknownIdentifier,
    /// Variable name exists but not in this dimension (e.g. `x` in 2-D).
    DimensionMismatch,
    ArityMismatch,
    TrailingTokens,
    /// Generic expected-token mismatch.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    /// 1-based byte offset into the source.
    pub offset: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    MissingVariable,
    DomainError,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("evaluation error: {message}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub message: String,
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Num(f64),
    Ident(&'a str),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

#[derive(Debug, Clone, Copy)]
struct Spanned<'a> {
    tok: Tok<'a>,
    /// 1-based byte offset of the token start (end+1 for Eof).
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned<'_>>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i + 1; // 1-based
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
            }
            b'+' => {
                toks.push(Spanned { tok: Tok::Plus, offset: start });
                i += 1;
            }
            b'-' => {
                toks.push(Spanned { tok: Tok::Minus, offset: start });
                i += 1;
            }
            b'*' => {
                toks.push(Spanned { tok: Tok::Star, offset: start });
                i += 1;
            }
            b'/' => {
                toks.push(Spanned { tok: Tok::Slash, offset: start });
                i += 1;
            }
            b'^' => {
                toks.push(Spanned { tok: Tok::Caret, offset: start });
                i += 1;
            }
            b'(' => {
                toks.push(Spanned { tok: Tok::LParen, offset: start });
                i += 1;
            }
            b')' => {
                toks.push(Spanned { tok: Tok::RParen, offset: start });
                i += 1;
            }
            b',' => {
                toks.push(Spanned { tok: Tok::Comma, offset: start });
                i += 1;
            }
            b'0'..=b'9' => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        j = k + 1;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let text = &src[i..j];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::InvalidNumber,
                    message: format!("invalid number literal `{text}`"),
                })?;
                toks.push(Spanned { tok: Tok::Num(value), offset: start });
                i = j;
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_alphanumeric() {
                    j += 1;
                }
                toks.push(Spanned { tok: Tok::Ident(&src[i..j]), offset: start });
                i = j;
            }
            _ => {
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::UnexpectedChar,
                    message: format!("unexpected character `{}`", &src[i..i + 1]),
                });
            }
        }
    }
    toks.push(Spanned { tok: Tok::Eof, offset: bytes.len() + 1 });
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser<'a> {
    toks: Vec<Spanned<'a>>,
    pos: usize,
    dim: usize,
}

/// Parse `src` as an expression over `dim`-dimensional points.
///
/// `dim` decides the variable vocabulary: `x`/`y` (aliases `x1`/`y1`) in
/// 1-D; `x1 x2 y1 y2` in 2-D, where bare `x`/`y` are rejected at parse time.
pub fn parse(src: &str, dim: usize) -> Result<Expr, ParseError> {
    assert!(dim == 1 || dim == 2, "dimension must be 1 or 2");
    if src.trim().is_empty() {
        return Err(ParseError {
            offset: 1,
            kind: ParseErrorKind::EmptyInput,
            message: "empty expression".into(),
        });
    }
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, dim };
    let e = p.expr()?;
    let t = p.peek();
    if t.tok != Tok::Eof {
        let kind = if t.tok == Tok::RParen {
            ParseErrorKind::UnbalancedParens
        } else {
            ParseErrorKind::TrailingTokens
        };
        return Err(ParseError {
            offset: t.offset,
            kind,
            message: format!("unexpected {} after a complete expression", describe(t.tok)),
        });
    }
    Ok(e)
}

fn describe(tok: Tok<'_>) -> String {
    match tok {
        Tok::Num(v) => format!("number `{v:?}`"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Eof => "end of input".into(),
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Spanned<'a> {
        self.toks[self.pos]
    }

    fn bump(&mut self) -> Spanned<'a> {
        let t = self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    /// factor := '-' factor | power. Unary minus binds looser than `^`.
    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    /// power := atom ('^' factor)?  (right-associative via the factor tail)
    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            let exponent = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                let close = self.bump();
                if close.tok != Tok::RParen {
                    return Err(ParseError {
                        offset: close.offset,
                        kind: ParseErrorKind::UnbalancedParens,
                        message: format!("expected `)`, found {}", describe(close.tok)),
                    });
                }
                Ok(inner)
            }
            Tok::Ident(name) => self.ident(name, t.offset),
            other => Err(ParseError {
                offset: t.offset,
                kind: ParseErrorKind::Expected,
                message: format!(
                    "expected a number, variable, function or `(`, found {}",
                    describe(other)
                ),
            }),
        }
    }

    fn ident(&mut self, name: &str, offset: usize) -> Result<Expr, ParseError> {
        if let Some(f) = Func::from_name(name) {
            let open = self.bump();
            if open.tok != Tok::LParen {
                return Err(ParseError {
                    offset: open.offset,
                    kind: ParseErrorKind::Expected,
                    message: format!("expected `(` after function `{name}`"),
                });
            }
            let mut args = vec![self.expr()?];
            while self.peek().tok == Tok::Comma {
                self.bump();
                args.push(self.expr()?);
            }
            let close = self.bump();
            if close.tok != Tok::RParen {
                return Err(ParseError {
                    offset: close.offset,
                    kind: ParseErrorKind::UnbalancedParens,
                    message: format!("expected `)` closing call to `{name}`"),
                });
            }
            if args.len() != f.arity() {
                return Err(ParseError {
                    offset,
                    kind: ParseErrorKind::ArityMismatch,
                    message: format!(
                        "`{name}` takes {} argument{}, got {}",
                        f.arity(),
                        if f.arity() == 1 { "" } else { "s" },
                        args.len()
                    ),
                });
            }
            return Ok(Expr::Call(f, args));
        }
        match name {
            "pi" => return Ok(Expr::Const(NamedConst::Pi)),
            "e" => return Ok(Expr::Const(NamedConst::E)),
            _ => {}
        }
        self.variable(name, offset)
    }

    fn variable(&self, name: &str, offset: usize) -> Result<Expr, ParseError> {
        let bytes = name.as_bytes();
        let group = match bytes[0] {
            b'x' => VarGroup::X,
            b'y' => VarGroup::Y,
            _ => {
                return Err(ParseError {
                    offset,
                    kind: ParseErrorKind::UnknownIdentifier,
                    message: format!("unknown identifier `{name}`"),
                });
            }
        };
        if bytes.len() == 1 {
            // Bare `x`/`y`: only valid in 1-D.
            if self.dim != 1 {
                return Err(ParseError {
                    offset,
                    kind: ParseErrorKind::DimensionMismatch,
                    message: format!(
                        "`{name}` is ambiguous in {}-D; use `{name}1`..`{name}{}`",
                        self.dim, self.dim
                    ),
                });
            }
            return Ok(Expr::Var(Var { group, axis: 0 }));
        }
        let suffix = &name[1..];
        if !suffix.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError {
                offset,
                kind: ParseErrorKind::UnknownIdentifier,
                message: format!("unknown identifier `{name}`"),
            });
        }
        match suffix.parse::<usize>() {
            Ok(k) if k >= 1 && k <= self.dim => Ok(Expr::Var(Var { group, axis: k - 1 })),
            Ok(k) => Err(ParseError {
                offset,
                kind: ParseErrorKind::DimensionMismatch,
                message: format!("variable `{name}` needs dimension {k}, space is {}-D", self.dim),
            }),
            Err(_) => Err(ParseError {
                offset,
                kind: ParseErrorKind::UnknownIdentifier,
                message: format!("unknown identifier `{name}`"),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

fn domain_err(message: String) -> EvalError {
    EvalError { kind: EvalErrorKind::DomainError, message }
}

/// Integer power by repeated squaring. Bit-deterministic and exactly even in
/// the base for even exponents, which `powf` does not guarantee.
fn pow_int(base: f64, k: i64) -> f64 {
    let mut r = 1.0f64;
    let mut b = base;
    let mut e = k.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            r *= b;
        }
        b *= b;
        e >>= 1;
    }
    if k < 0 { 1.0 / r } else { r }
}

impl Expr {
    /// Evaluate at the x-point `x` and, for two-point integrands, the
    /// y-point `y`.
    pub fn eval(&self, x: &[f64], y: Option<&[f64]>) -> Result<f64, EvalError> {
        let v = self.eval_inner(x, y)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError {
                kind: EvalErrorKind::NonFinite,
                message: format!("non-finite result {v} from `{self}`"),
            })
        }
    }

    fn eval_inner(&self, x: &[f64], y: Option<&[f64]>) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Const(NamedConst::Pi) => Ok(std::f64::consts::PI),
            Expr::Const(NamedConst::E) => Ok(std::f64::consts::E),
            Expr::Var(var) => {
                let slot = match var.group {
                    VarGroup::X => x.get(var.axis),
                    VarGroup::Y => y.and_then(|y| y.get(var.axis)),
                };
                slot.copied().ok_or_else(|| EvalError {
                    kind: EvalErrorKind::MissingVariable,
                    message: format!("no binding for `{}`", var_name(*var)),
                })
            }
            Expr::Neg(inner) => Ok(-inner.eval_inner(x, y)?),
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.eval_inner(x, y)?;
                let b = rhs.eval_inner(x, y)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(domain_err(format!("division by zero in `{self}`")))
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => {
                        if b.fract() == 0.0 && b.abs() <= 64.0 {
                            if a == 0.0 && b < 0.0 {
                                return Err(domain_err(format!(
                                    "zero base with negative exponent in `{self}`"
                                )));
                            }
                            Ok(pow_int(a, b as i64))
                        } else if a < 0.0 {
                            Err(domain_err(format!(
                                "negative base with non-integer exponent in `{self}`"
                            )))
                        } else if a == 0.0 && b < 0.0 {
                            Err(domain_err(format!(
                                "zero base with negative exponent in `{self}`"
                            )))
                        } else {
                            Ok(a.powf(b))
                        }
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_inner(x, y)?;
                match f {
                    Func::Sin => Ok(a.sin()),
                    Func::Cos => Ok(a.cos()),
                    Func::Exp => Ok(a.exp()),
                    Func::Abs => Ok(a.abs()),
                    Func::Log => {
                        if a <= 0.0 {
                            Err(domain_err(format!("log of non-positive value {a}")))
                        } else {
                            Ok(a.ln())
                        }
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            Err(domain_err(format!("sqrt of negative value {a}")))
                        } else {
                            Ok(a.sqrt())
                        }
                    }
                    Func::Min | Func::Max => {
                        let b = args[1].eval_inner(x, y)?;
                        Ok(if *f == Func::Min { a.min(b) } else { a.max(b) })
                    }
                }
            }
        }
    }

    /// True if the expression references any y-group variable.
    pub fn uses_y(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Const(_) => false,
            Expr::Var(v) => v.group == VarGroup::Y,
            Expr::Neg(e) => e.uses_y(),
            Expr::Bin(_, a, b) => a.uses_y() || b.uses_y(),
            Expr::Call(_, args) => args.iter().any(|a| a.uses_y()),
        }
    }
}

fn var_name(v: Var) -> String {
    let g = match v.group {
        VarGroup::X => "x",
        VarGroup::Y => "y",
    };
    format!("{}{}", g, v.axis + 1)
}

// ---------------------------------------------------------------------------
// Canonical printer

// Precedence levels used by the printer: Add/Sub 1, Mul/Div 2, Neg 3, Pow 4,
// atoms 5. `^` takes an atom on the left, so any non-atom left operand is
// parenthesized; its right side is a factor (unary minus allowed).
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Bin(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

fn write_prec(e: &Expr, min: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(e);
    if p < min {
        write!(out, "(")?;
        write_prec(e, 0, out)?;
        return write!(out, ")");
    }
    match e {
        Expr::Num(v) => write!(out, "{v:?}"),
        Expr::Const(NamedConst::Pi) => write!(out, "pi"),
        Expr::Const(NamedConst::E) => write!(out, "e"),
        Expr::Var(v) => write!(out, "{}", var_name(*v)),
        Expr::Neg(inner) => {
            write!(out, "-")?;
            write_prec(inner, 3, out)
        }
        Expr::Bin(op, lhs, rhs) => {
            let (sym, lmin, rmin) = match op {
                BinOp::Add => ("+", 1, 2),
                BinOp::Sub => ("-", 1, 2),
                BinOp::Mul => ("*", 2, 3),
                BinOp::Div => ("/", 2, 3),
                BinOp::Pow => ("^", 5, 3),
            };
            write_prec(lhs, lmin, out)?;
            write!(out, "{sym}")?;
            write_prec(rhs, rmin, out)
        }
        Expr::Call(f, args) => {
            write!(out, "{}(", f.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(out, ",")?;
                }
                write_prec(a, 0, out)?;
            }
            write!(out, ")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_prec(self, 0, f)
    }
}
