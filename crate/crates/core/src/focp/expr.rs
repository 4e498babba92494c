//! Scalar expressions in `t`, `x` and `u`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          right-associative, binds tighter than '-'
//! atom    := number | var | func '(' expr ')' | '(' expr ')'
//! var     := 't' | 'x' | 'u'
//! func    := sin | cos | exp | ln | sqrt | abs | gamma | sign | digamma | trigamma
//! ```
//!
//! `sign`, `digamma` and `trigamma` appear in derivatives of `abs` and
//! `gamma`; they are accepted by the parser so printed derivatives re-parse.

use std::fmt;

use thiserror::Error;

use crate::fracops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    U,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::U => "u",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Gamma,
    Sign,
    Digamma,
    Trigamma,
}

impl Func {
    const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Ln,
        Func::Sqrt,
        Func::Abs,
        Func::Gamma,
        Func::Sign,
        Func::Digamma,
        Func::Trigamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Gamma => "gamma",
            Func::Sign => "sign",
            Func::Digamma => "digamma",
            Func::Trigamma => "trigamma",
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain error in `{subexpr}`: {reason}")]
pub struct EvalError {
    pub subexpr: String,
    pub reason: &'static str,
}

/// Values of the three free variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub t: f64,
    pub x: f64,
    pub u: f64,
}

impl Point {
    pub fn new(t: f64, x: f64, u: f64) -> Self {
        Self { t, x, u }
    }

    fn get(&self, v: Var) -> f64 {
        match v {
            Var::T => self.t,
            Var::X => self.x,
            Var::U => self.u,
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, only when followed by digits
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
            let lexeme = &text[start..i];
            let value = lexeme.parse::<f64>().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{lexeme}`"),
            })?;
            out.push((start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    // report the char, not a byte, for non-ASCII input
                    let ch = text[start..].chars().next().unwrap_or(c);
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            out.push((start, tok));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { offset: self.offset(), message: message.into() })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            None => self.syntax("unexpected end of input"),
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "t" => return Ok(Expr::Var(Var::T)),
                    "x" => return Ok(Expr::Var(Var::X)),
                    "u" => return Ok(Expr::Var(Var::U)),
                    _ => {}
                }
                let func = Func::lookup(&name)
                    .ok_or(ParseError::UnknownIdentifier { offset, name: name.clone() })?;
                if self.peek() != Some(&Tok::LParen) {
                    return self.syntax(format!("expected `(` after `{name}`"));
                }
                self.pos += 1;
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Some(Tok::RParen) => self.syntax("unexpected `)`"),
            Some(Tok::Op(c)) => self.syntax(format!("unexpected operator `{c}`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            self.syntax("expected `)`")
        }
    }
}

/// Parse expression text.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser { toks, pos: 0, end: text.len() };
    let expr = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return parser.syntax("unexpected trailing input");
    }
    Ok(expr)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

// ---------------------------------------------------------------------------
// Evaluation

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    /// Whether `v` occurs anywhere in the tree.
    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(v),
            Expr::Bin(_, a, b) => a.depends_on(v) || b.depends_on(v),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    pub fn eval(&self, t: f64, x: f64, u: f64) -> Result<f64, EvalError> {
        self.eval_at(&Point::new(t, x, u))
    }

    pub fn eval_at(&self, pt: &Point) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => pt.get(*v),
            Expr::Neg(a) => -a.eval_at(pt)?,
            Expr::Bin(op, a, b) => {
                let (l, r) = (a.eval_at(pt)?, b.eval_at(pt)?);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        l / r
                    }
                    BinOp::Pow => {
                        if l < 0.0 && r.fract() != 0.0 {
                            return Err(self.domain("negative base with non-integer exponent"));
                        }
                        if l == 0.0 && r < 0.0 {
                            return Err(self.domain("zero raised to a negative power"));
                        }
                        pow(l, r)
                    }
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_at(pt)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Ln => {
                        if v <= 0.0 {
                            return Err(self.domain("logarithm of a non-positive number"));
                        }
                        v.ln()
                    }
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(self.domain("square root of a negative number"));
                        }
                        v.sqrt()
                    }
                    Func::Abs => v.abs(),
                    Func::Sign => {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Gamma => fracops::gamma(v).map_err(|_| self.domain("gamma pole"))?,
                    Func::Digamma => fracops::digamma(v).map_err(|_| self.domain("digamma pole"))?,
                    Func::Trigamma => fracops::trigamma(v).map_err(|_| self.domain("trigamma pole"))?,
                }
            }
        };
        if !value.is_finite() {
            return Err(self.domain("non-finite result"));
        }
        Ok(value)
    }

    fn domain(&self, reason: &'static str) -> EvalError {
        EvalError { subexpr: self.to_string(), reason }
    }
}

// Integer exponents go through powi so that e.g. (-2)^3 and u^2 are exact.
fn pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

// ---------------------------------------------------------------------------
// Symbolic differentiation

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x + y),
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x - y),
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x * y),
        _ if a.is_zero() || b.is_zero() => num(0.0),
        (Expr::Num(v), _) if *v == 1.0 => b,
        (_, Expr::Num(v)) if *v == 1.0 => a,
        (Expr::Num(v), _) if *v == -1.0 => neg(b),
        (_, Expr::Num(v)) if *v == -1.0 => neg(a),
        _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if a.is_zero() => num(0.0),
        (_, Expr::Num(v)) if *v == 1.0 => a,
        _ => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

fn powe(a: Expr, b: Expr) -> Expr {
    match &b {
        Expr::Num(v) if *v == 1.0 => a,
        Expr::Num(v) if *v == 0.0 => num(1.0),
        _ => Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("cannot differentiate `{0}` symbolically")]
    NonDifferentiable(String),
    #[error("derivatives are taken with respect to x or u, not t")]
    UnsupportedVariable,
}

/// Partial derivative with respect to `x` or `u`.
///
/// `abs` differentiates to `sign`, i.e. the subgradient 0 at the kink.
pub fn diff_expr(e: &Expr, var: Var) -> Result<Expr, DiffError> {
    if var == Var::T {
        return Err(DiffError::UnsupportedVariable);
    }
    derivative(e, var)
}

fn derivative(e: &Expr, var: Var) -> Result<Expr, DiffError> {
    if !e.depends_on(var) {
        return Ok(num(0.0));
    }
    Ok(match e {
        Expr::Num(_) => num(0.0),
        Expr::Var(v) => num(if *v == var { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(derivative(a, var)?),
        Expr::Bin(op, a, b) => {
            let (a, b) = (a.as_ref(), b.as_ref());
            match op {
                BinOp::Add => add(derivative(a, var)?, derivative(b, var)?),
                BinOp::Sub => sub(derivative(a, var)?, derivative(b, var)?),
                BinOp::Mul => add(
                    mul(derivative(a, var)?, b.clone()),
                    mul(a.clone(), derivative(b, var)?),
                ),
                BinOp::Div => {
                    // (a' b - a b') / b^2
                    let da = derivative(a, var)?;
                    let db = derivative(b, var)?;
                    if db.is_zero() {
                        div(da, b.clone())
                    } else {
                        div(
                            sub(mul(da, b.clone()), mul(a.clone(), db)),
                            powe(b.clone(), num(2.0)),
                        )
                    }
                }
                BinOp::Pow => {
                    if !b.depends_on(var) {
                        // b a^(b-1) a'
                        let reduced = match b {
                            Expr::Num(v) => num(v - 1.0),
                            _ => sub(b.clone(), num(1.0)),
                        };
                        mul(mul(b.clone(), powe(a.clone(), reduced)), derivative(a, var)?)
                    } else {
                        // a^b (b' ln a + b a' / a)
                        let da = derivative(a, var)?;
                        let db = derivative(b, var)?;
                        let inner = add(
                            mul(db, call(Func::Ln, a.clone())),
                            div(mul(b.clone(), da), a.clone()),
                        );
                        mul(e.clone(), inner)
                    }
                }
            }
        }
        Expr::Call(f, a) => {
            let da = derivative(a, var)?;
            let a = a.as_ref().clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, a),
                Func::Cos => neg(call(Func::Sin, a)),
                Func::Exp => call(Func::Exp, a),
                Func::Ln => div(num(1.0), a),
                Func::Sqrt => div(num(0.5), call(Func::Sqrt, a)),
                Func::Abs => call(Func::Sign, a),
                Func::Sign => num(0.0),
                Func::Gamma => mul(call(Func::Gamma, a.clone()), call(Func::Digamma, a)),
                Func::Digamma => call(Func::Trigamma, a),
                Func::Trigamma => return Err(DiffError::NonDifferentiable(e.to_string())),
            };
            mul(outer, da)
        }
    })
}

// ---------------------------------------------------------------------------
// Printing

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Bin(BinOp::Pow, ..) => 4,
        Expr::Num(v) if *v < 0.0 => 3,
        _ => 5,
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    // Debug gives the shortest round-tripping form, e.g. `2.5`, `1e-7`
    let s = format!("{:?}", v.abs());
    if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        write!(f, "-{s}")
    } else {
        write!(f, "{s}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if precedence(e) < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => write_num(f, *v),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, a, b) => {
                let (lmin, rmin) = match op {
                    BinOp::Add => (1, 2),
                    BinOp::Sub => (1, 2),
                    BinOp::Mul => (2, 3),
                    BinOp::Div => (2, 3),
                    // base must be an atom; exponent may be a unary chain
                    BinOp::Pow => (5, 3),
                };
                wrap(f, a, lmin)?;
                write!(f, " {} ", op.symbol())?;
                wrap(f, b, rmin)
            }
        }
    }
}
