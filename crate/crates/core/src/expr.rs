//! Integrand and density expressions.
//!
//! The grammar is LL(1) and has no implicit multiplication:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 't' | 'x1'..'x9' | 'pi' | 'e'
//!        | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | tan | exp | log | sqrt | abs | step
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-2^2`
//! is `-(2^2)` and `2^3^2` is `2^(3^2)`. The variable `t` is an alias for
//! `x1`. `step(u)` is 0 for `u < 0` and 1 for `u >= 0`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// A syntax error with the character offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at position {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

/// Failure while evaluating an expression at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable {name} needs a point of dimension {needed}, got {dimension}")]
    VariableOutOfRange {
        name: String,
        needed: usize,
        dimension: usize,
    },
    #[error("{function}({argument}) is undefined")]
    Domain {
        function: &'static str,
        argument: f64,
    },
    #[error("division by zero")]
    DivisionByZero,
    #[error("negative base {base} raised to non-integer power {exponent}")]
    NegativeBase { base: f64, exponent: f64 },
    #[error("non-finite result from {operation}")]
    NonFinite { operation: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// `t`, the first coordinate.
    T,
    /// `x1`..`x9`, one-based.
    X(u8),
}

impl Var {
    /// Zero-based coordinate index.
    pub fn index(self) -> usize {
        match self {
            Var::T => 0,
            Var::X(k) => usize::from(k) - 1,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => f.write_str("t"),
            Var::X(k) => write!(f, "x{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Const {
    Pi,
    E,
}

impl Const {
    pub fn value(self) -> f64 {
        match self {
            Const::Pi => std::f64::consts::PI,
            Const::E => std::f64::consts::E,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Step,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Step,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Step => "step",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, u: f64) -> Result<f64, EvalError> {
        let v = match self {
            Func::Sin => u.sin(),
            Func::Cos => u.cos(),
            Func::Tan => u.tan(),
            Func::Exp => u.exp(),
            Func::Log => {
                if u <= 0.0 {
                    return Err(EvalError::Domain {
                        function: "log",
                        argument: u,
                    });
                }
                u.ln()
            }
            Func::Sqrt => {
                if u < 0.0 {
                    return Err(EvalError::Domain {
                        function: "sqrt",
                        argument: u,
                    });
                }
                u.sqrt()
            }
            Func::Abs => u.abs(),
            Func::Step => {
                if u < 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        };
        finite(v, self.name())
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
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }

    fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        match self {
            BinOp::Add => finite(a + b, "+"),
            BinOp::Sub => finite(a - b, "-"),
            BinOp::Mul => finite(a * b, "*"),
            BinOp::Div => {
                if b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                finite(a / b, "/")
            }
            BinOp::Pow => {
                if a < 0.0 && b.fract() != 0.0 {
                    return Err(EvalError::NegativeBase {
                        base: a,
                        exponent: b,
                    });
                }
                if a == 0.0 && b < 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                finite(a.powf(b), "^")
            }
        }
    }
}

fn finite(v: f64, operation: &'static str) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite { operation })
    }
}

/// Parsed expression tree. Immutable once built; evaluation is pure.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(Const),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        Parser::new(src)?.parse_all()
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, Box::new(arg))
    }

    pub fn negate(inner: Expr) -> Expr {
        Expr::Neg(Box::new(inner))
    }

    /// Number of coordinates a point must carry to evaluate this expression.
    pub fn required_dimension(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Const(_) => 0,
            Expr::Var(v) => v.index() + 1,
            Expr::Neg(e) | Expr::Call(_, e) => e.required_dimension(),
            Expr::Binary(_, a, b) => a.required_dimension().max(b.required_dimension()),
        }
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Const(c) => Ok(c.value()),
            Expr::Var(v) => {
                point
                    .get(v.index())
                    .copied()
                    .ok_or_else(|| EvalError::VariableOutOfRange {
                        name: v.to_string(),
                        needed: v.index() + 1,
                        dimension: point.len(),
                    })
            }
            Expr::Neg(e) => Ok(-e.eval(point)?),
            Expr::Binary(op, a, b) => op.apply(a.eval(point)?, b.eval(point)?),
            Expr::Call(func, e) => func.apply(e.eval(point)?),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Neg(_) => 3,
            Expr::Binary(op, _, _) => op.precedence(),
            _ => 5,
        }
    }
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

/// Prints with the minimum parentheses needed for the parser to rebuild a
/// tree that evaluates identically, including operand order of `+` and `*`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 is the shortest string that round-trips.
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Const(Const::Pi) => f.write_str("pi"),
            Expr::Const(Const::E) => f.write_str("e"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_paren, right_paren) = if *op == BinOp::Pow {
                    (a.precedence() <= p, b.precedence() < 3)
                } else {
                    (a.precedence() < p, b.precedence() <= p)
                };
                write_child(f, a, left_paren)?;
                f.write_str(op.symbol())?;
                write_child(f, b, right_paren)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(v) => format!("number {v}"),
            Token::Ident(s) => format!("identifier '{s}'"),
            Token::Plus => "'+'".into(),
            Token::Minus => "'-'".into(),
            Token::Star => "'*'".into(),
            Token::Slash => "'/'".into(),
            Token::Caret => "'^'".into(),
            Token::LParen => "'('".into(),
            Token::RParen => "')'".into(),
            Token::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '+' => tokens.push((start, Token::Plus)),
            '-' => tokens.push((start, Token::Minus)),
            '*' => tokens.push((start, Token::Star)),
            '/' => tokens.push((start, Token::Slash)),
            '^' => tokens.push((start, Token::Caret)),
            '(' => tokens.push((start, Token::LParen)),
            ')' => tokens.push((start, Token::RParen)),
            c if c.is_ascii_digit() || c == '.' => {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                // Exponent only when digits follow, so "2e" stays "2" then "e".
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value: f64 = text.parse().map_err(|_| ParseError {
                    position: start,
                    message: format!("malformed number '{text}'"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError {
                        position: start,
                        message: format!("number '{text}' is out of range"),
                    });
                }
                tokens.push((start, Token::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push((start, Token::Ident(chars[start..i].iter().collect())));
                continue;
            }
            other => {
                return Err(ParseError {
                    position: start,
                    message: format!("unexpected character '{other}'"),
                })
            }
        }
        i += 1;
    }
    tokens.push((chars.len(), Token::End));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    /// Last valid character offset; errors at end of input point here.
    last_char: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            tokens: tokenize(src)?,
            pos: 0,
            last_char: src.chars().count().saturating_sub(1),
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            position: self.tokens[self.pos].0.min(self.last_char),
            message: message.into(),
        }
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].1.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn parse_all(mut self) -> Result<Expr, ParseError> {
        let e = self.expr()?;
        match self.peek() {
            Token::End => Ok(e),
            Token::RParen => Err(self.error("unbalanced ')'")),
            tok => Err(self.error(format!("unexpected trailing {}", tok.describe()))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinOp::Add,
                Token::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinOp::Mul,
                Token::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Token::Minus {
            self.advance();
            return Ok(Expr::negate(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Token::Caret {
            self.advance();
            return Ok(Expr::binary(BinOp::Pow, base, self.unary()?));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        match self.advance() {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => self.identifier(start, &name),
            tok => {
                self.pos = start;
                Err(self.error(format!("expected a value, found {}", tok.describe())))
            }
        }
    }

    fn identifier(&mut self, start: usize, name: &str) -> Result<Expr, ParseError> {
        if let Some(func) = Func::from_name(name) {
            if *self.peek() != Token::LParen {
                return Err(self.error(format!("expected '(' after function '{name}'")));
            }
            self.advance();
            let arg = self.expr()?;
            self.expect_rparen()?;
            return Ok(Expr::call(func, arg));
        }
        match name {
            "t" => Ok(Expr::Var(Var::T)),
            "pi" => Ok(Expr::Const(Const::Pi)),
            "e" => Ok(Expr::Const(Const::E)),
            _ => {
                let bytes = name.as_bytes();
                if bytes.len() == 2 && bytes[0] == b'x' && (b'1'..=b'9').contains(&bytes[1]) {
                    Ok(Expr::Var(Var::X(bytes[1] - b'0')))
                } else {
                    self.pos = start;
                    Err(self.error(format!("unknown identifier '{name}'")))
                }
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Token::RParen => {
                self.advance();
                Ok(())
            }
            Token::End => Err(self.error("unbalanced '(': missing ')'")),
            tok => Err(self.error(format!("expected ')', found {}", tok.describe()))),
        }
    }
}
