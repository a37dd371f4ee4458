//! Scalar-field expressions in `x1, x2, x3`.
//!
//! Scenes carry their constraint coefficients, path functions and weights as
//! strings. This module parses them into an immutable [`Expr`] tree and
//! evaluates it either on plain `f64` or on [`Dual3`] to obtain exact first
//! derivatives.
//!
//! Precedence, loosest to tightest: `+ -`, `* /`, unary `-`, `^`. The power
//! operator is right-associative and its exponent must fold to a constant.

use std::fmt;

use thiserror::Error;

use crate::dual::Dual3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown identifier `{name}` at byte {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Coordinate `x1`, `x2` or `x3` (stored zero-based).
    Var(usize),
    Num(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Atan2(Box<Expr>, Box<Expr>),
}

/// Numeric carrier for evaluation: plain reals or dual numbers.
pub trait Scalar:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn variable(axis: usize, v: f64) -> Self;
    fn value(&self) -> f64;
    fn apply(self, f: Func) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, n: f64) -> Self;
    fn atan2(self, x: Self) -> Self;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn variable(_: usize, v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn apply(self, f: Func) -> Self {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Tan => self.tan(),
            Func::Exp => self.exp(),
            Func::Ln => self.ln(),
            Func::Sqrt => self.sqrt(),
        }
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, n: f64) -> Self {
        f64::powf(self, n)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

impl Scalar for Dual3 {
    fn constant(v: f64) -> Self {
        Dual3::constant(v)
    }
    fn variable(axis: usize, v: f64) -> Self {
        Dual3::variable(axis, v)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn apply(self, f: Func) -> Self {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Tan => self.tan(),
            Func::Exp => self.exp(),
            Func::Ln => self.ln(),
            Func::Sqrt => self.sqrt(),
        }
    }
    fn powi(self, n: i32) -> Self {
        Dual3::powi(self, n)
    }
    fn powf(self, n: f64) -> Self {
        Dual3::powf(self, n)
    }
    fn atan2(self, x: Self) -> Self {
        Dual3::atan2(self, x)
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ExprError> {
        Parser::new(text)?.parse_all()
    }

    /// Parses with additional named variables bound to slots `3, 4, ...`.
    pub fn parse_with(text: &str, symbols: &[&str]) -> Result<Expr, ExprError> {
        let mut p = Parser::new(text)?;
        p.symbols = symbols.iter().map(|s| s.to_string()).collect();
        p.parse_all()
    }

    /// True when variable slot `i` occurs in the tree.
    pub fn uses_var(&self, i: usize) -> bool {
        match self {
            Expr::Var(j) => *j == i,
            Expr::Num(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Atan2(a, b) => {
                a.uses_var(i) || b.uses_var(i)
            }
            Expr::Pow(a, _) | Expr::Neg(a) | Expr::Call(_, a) => a.uses_var(i),
        }
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// Value at `p`.
    pub fn eval(&self, p: [f64; 3]) -> Result<f64, ExprError> {
        self.eval_with::<f64>(&p)
    }

    /// Value and exact gradient at `p`.
    pub fn eval_grad(&self, p: [f64; 3]) -> Result<(f64, [f64; 3]), ExprError> {
        let vars = [Dual3::variable(0, p[0]), Dual3::variable(1, p[1]), Dual3::variable(2, p[2])];
        let d = self.eval_with::<Dual3>(&vars)?;
        Ok((d.value, d.partials))
    }

    /// Evaluates over any [`Scalar`]; `vars` holds `x1, x2, x3` followed by
    /// any extra symbols bound through [`Expr::parse_with`].
    pub fn eval_with<S: Scalar>(&self, vars: &[S]) -> Result<S, ExprError> {
        Ok(match self {
            Expr::Var(i) => vars[*i],
            Expr::Num(v) => S::constant(*v),
            Expr::Add(a, b) => a.eval_with(vars)? + b.eval_with(vars)?,
            Expr::Sub(a, b) => a.eval_with(vars)? - b.eval_with(vars)?,
            Expr::Mul(a, b) => a.eval_with(vars)? * b.eval_with(vars)?,
            Expr::Div(a, b) => {
                let num = a.eval_with(vars)?;
                let den = b.eval_with(vars)?;
                if den.value() == 0.0 {
                    return Err(ExprError::Domain("division by zero".into()));
                }
                num / den
            }
            Expr::Pow(a, n) => {
                let base = a.eval_with(vars)?;
                let b = base.value();
                if n.fract() == 0.0 && n.abs() <= i32::MAX as f64 {
                    if b == 0.0 && *n < 0.0 {
                        return Err(ExprError::Domain("zero raised to a negative power".into()));
                    }
                    base.powi(*n as i32)
                } else {
                    if b < 0.0 {
                        return Err(ExprError::Domain(format!("negative base {b} raised to non-integer power {n}")));
                    }
                    if b == 0.0 && *n < 0.0 {
                        return Err(ExprError::Domain("zero raised to a negative power".into()));
                    }
                    base.powf(*n)
                }
            }
            Expr::Neg(a) => -a.eval_with(vars)?,
            Expr::Call(f, a) => {
                let arg = a.eval_with(vars)?;
                let v = arg.value();
                match f {
                    Func::Ln if v <= 0.0 => return Err(ExprError::Domain(format!("ln of non-positive value {v}"))),
                    Func::Sqrt if v < 0.0 => return Err(ExprError::Domain(format!("sqrt of negative value {v}"))),
                    _ => arg.apply(*f),
                }
            }
            Expr::Atan2(y, x) => {
                let yv = y.eval_with(vars)?;
                let xv = x.eval_with(vars)?;
                yv.atan2(xv)
            }
        })
    }

    /// True when no variable occurs in the tree.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Var(_) => false,
            Expr::Num(_) => true,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Atan2(a, b) => {
                a.is_constant() && b.is_constant()
            }
            Expr::Pow(a, _) | Expr::Neg(a) | Expr::Call(_, a) => a.is_constant(),
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesised form; parsing it yields a structurally equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, n) => write!(f, "({a} ^ ({n:?}))"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Atan2(y, x) => write!(f, "atan2({y}, {x})"),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
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
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    symbols: Vec<String>,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
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
            b'^' => Tok::Caret,
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
                let lit = &text[start..i];
                let v: f64 =
                    lit.parse().map_err(|_| ExprError::Syntax { position: start, expected: "a number".into() })?;
                out.push((Tok::Num(v), start));
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
                return Err(ExprError::Syntax {
                    position: start,
                    expected: "an operator, number, identifier or parenthesis".into(),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

// Binding powers.
const ADD_BP: u8 = 10;
const MUL_BP: u8 = 20;
const NEG_BP: u8 = 30;
const POW_BP: u8 = 40;

impl Parser {
    fn new(text: &str) -> Result<Self, ExprError> {
        Ok(Self { toks: lex(text)?, pos: 0, symbols: Vec::new() })
    }

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

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(what))
        }
    }

    fn syntax(&self, expected: &str) -> ExprError {
        ExprError::Syntax { position: self.offset(), expected: expected.to_string() }
    }

    fn parse_all(mut self) -> Result<Expr, ExprError> {
        let e = self.expr(0)?;
        if *self.peek() != Tok::End {
            return Err(self.syntax("an operator or end of input"));
        }
        Ok(e)
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.prefix()?;
        loop {
            let (bp, right_bp) = match self.peek() {
                Tok::Plus | Tok::Minus => (ADD_BP, ADD_BP + 1),
                Tok::Star | Tok::Slash => (MUL_BP, MUL_BP + 1),
                // right-associative, and binds tighter than a unary minus on its right
                Tok::Caret => (POW_BP, NEG_BP),
                _ => break,
            };
            if bp < min_bp {
                break;
            }
            let op_pos = self.offset();
            let op = self.bump();
            let rhs = self.expr(right_bp)?;
            lhs = match op {
                Tok::Plus => Expr::Add(Box::new(lhs), Box::new(rhs)),
                Tok::Minus => Expr::Sub(Box::new(lhs), Box::new(rhs)),
                Tok::Star => Expr::Mul(Box::new(lhs), Box::new(rhs)),
                Tok::Slash => Expr::Div(Box::new(lhs), Box::new(rhs)),
                Tok::Caret => {
                    let n = if rhs.is_constant() { rhs.eval([0.0; 3]).ok() } else { None };
                    match n {
                        Some(n) if n.is_finite() => Expr::Pow(Box::new(lhs), n),
                        _ => {
                            return Err(ExprError::Syntax {
                                position: op_pos + 1,
                                expected: "a finite numeric exponent".into(),
                            })
                        }
                    }
                }
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ExprError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Minus => Ok(Expr::Neg(Box::new(self.expr(NEG_BP)?))),
            Tok::Plus => self.expr(NEG_BP),
            Tok::LParen => {
                let e = self.expr(0)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.identifier(name, at),
            _ => Err(ExprError::Syntax { position: at, expected: "an operand".into() }),
        }
    }

    fn identifier(&mut self, name: String, at: usize) -> Result<Expr, ExprError> {
        match name.as_str() {
            "x1" => return Ok(Expr::Var(0)),
            "x2" => return Ok(Expr::Var(1)),
            "x3" => return Ok(Expr::Var(2)),
            "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
            _ => {}
        }
        if let Some(i) = self.symbols.iter().position(|s| *s == name) {
            return Ok(Expr::Var(3 + i));
        }
        if name == "atan2" {
            self.expect(Tok::LParen, "`(` after atan2")?;
            let y = self.expr(0)?;
            self.expect(Tok::Comma, "`,` between atan2 arguments")?;
            let x = self.expr(0)?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Expr::Atan2(Box::new(y), Box::new(x)));
        }
        if let Some(func) = Func::from_name(&name) {
            self.expect(Tok::LParen, "`(` after function name")?;
            let arg = self.expr(0)?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        Err(ExprError::UnknownIdentifier { name, position: at })
    }
}
