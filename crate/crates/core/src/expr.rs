//! Closed-form coefficient expressions.
//!
//! A small complex-valued arithmetic language in the variable `x`:
//! `+ - * / ^`, unary minus, parentheses, the functions `sin cos exp sqrt`,
//! the constants `i` and `pi`, and decimal literals. A literal directly
//! followed by a name or a parenthesis multiplies it (`3i`, `2x`, `4(x+1)`).

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    fn apply(self, z: Complex64) -> Complex64 {
        match self {
            Func::Sin => z.sin(),
            Func::Cos => z.cos(),
            Func::Exp => z.exp(),
            Func::Sqrt => z.sqrt(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(Complex64),
    X,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> Complex64 {
        match self {
            Node::Const(c) => *c,
            Node::X => Complex64::new(x, 0.0),
            // 0 - v rather than -v so a zero imaginary part stays +0 for sqrt
            Node::Neg(a) => Complex64::new(0.0, 0.0) - a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, b) => pow(a.eval(x), b.eval(x)),
            Node::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    fn has_x(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::X => true,
            Node::Neg(a) | Node::Call(_, a) => a.has_x(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.has_x() || b.has_x()
            }
        }
    }

    /// Folds every x-free subtree into a constant.
    fn fold(self) -> Node {
        if !self.has_x() {
            return Node::Const(self.eval(0.0));
        }
        match self {
            Node::Neg(a) => Node::Neg(Box::new(a.fold())),
            Node::Add(a, b) => Node::Add(Box::new(a.fold()), Box::new(b.fold())),
            Node::Sub(a, b) => Node::Sub(Box::new(a.fold()), Box::new(b.fold())),
            Node::Mul(a, b) => Node::Mul(Box::new(a.fold()), Box::new(b.fold())),
            Node::Div(a, b) => Node::Div(Box::new(a.fold()), Box::new(b.fold())),
            Node::Pow(a, b) => Node::Pow(Box::new(a.fold()), Box::new(b.fold())),
            Node::Call(f, a) => Node::Call(f, Box::new(a.fold())),
            other => other,
        }
    }
}

// Integer exponents are applied by repeated multiplication so that `x^2`
// stays exact for negative real bases.
fn pow(base: Complex64, exponent: Complex64) -> Complex64 {
    if exponent.im == 0.0 && exponent.re.fract() == 0.0 && exponent.re.abs() <= 64.0 {
        base.powi(exponent.re as i32)
    } else {
        base.powc(exponent)
    }
}

/// A parsed expression in `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            source_len: source.len(),
        };
        let root = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(Error::Parse {
                offset: tok.offset,
                token: tok.text.clone(),
                message: "unexpected trailing input".into(),
            });
        }
        Ok(Expr {
            source: source.to_string(),
            root: root.fold(),
        })
    }

    /// A constant expression.
    pub fn constant(value: Complex64) -> Self {
        Expr {
            source: format!("{}", value),
            root: Node::Const(value),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> Complex64 {
        self.root.eval(x)
    }

    pub fn is_constant(&self) -> bool {
        !self.root.has_x()
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Token {
    kind: TokKind,
    text: String,
    offset: usize,
}

fn tokenize(source: &str) -> Result<Vec<Token>> {
    let bytes = source.as_bytes();
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
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, e.g. 1e-3
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &source[start..i];
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                offset: start,
                token: text.to_string(),
                message: "malformed number".into(),
            })?;
            out.push(Token {
                kind: TokKind::Num(value),
                text: text.to_string(),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let text = &source[start..i];
            out.push(Token {
                kind: TokKind::Ident(text.to_string()),
                text: text.to_string(),
                offset: start,
            });
        } else {
            let kind = match c {
                '+' | '-' | '*' | '/' | '^' => TokKind::Op(c),
                '(' => TokKind::LParen,
                ')' => TokKind::RParen,
                _ => {
                    // report the full (possibly multi-byte) character
                    let ch = source[start..].chars().next().unwrap_or(c);
                    return Err(Error::Parse {
                        offset: start,
                        token: ch.to_string(),
                        message: "unexpected character".into(),
                    });
                }
            };
            i += 1;
            out.push(Token {
                kind,
                text: c.to_string(),
                offset: start,
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    source_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn eof_error(&self, message: &str) -> Error {
        Error::Parse {
            offset: self.source_len,
            token: "<end>".into(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(tok) = self.peek() {
            match tok.kind {
                TokKind::Op('+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                TokKind::Op('-') => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(tok) = self.peek() {
            match tok.kind {
                TokKind::Op('*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                TokKind::Op('/') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek().map(|t| &t.kind) {
            Some(TokKind::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(TokKind::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.implicit_product()?;
        if let Some(TokKind::Op('^')) = self.peek().map(|t| &t.kind) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn implicit_product(&mut self) -> Result<Node> {
        let first = self.atom()?;
        let is_number = matches!(first, Node::Const(_));
        if is_number {
            if let Some(tok) = self.peek() {
                if matches!(tok.kind, TokKind::Ident(_) | TokKind::LParen) {
                    let rhs = self.power()?;
                    return Ok(Node::Mul(Box::new(first), Box::new(rhs)));
                }
            }
        }
        Ok(first)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self.next().ok_or_else(|| self.eof_error("expected an operand"))?;
        match &tok.kind {
            TokKind::Num(v) => Ok(Node::Const(Complex64::new(*v, 0.0))),
            TokKind::LParen => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token {
                        kind: TokKind::RParen, ..
                    }) => Ok(inner),
                    Some(other) => Err(Error::Parse {
                        offset: other.offset,
                        token: other.text.clone(),
                        message: "expected `)`".into(),
                    }),
                    None => Err(self.eof_error("unclosed parenthesis")),
                }
            }
            TokKind::Ident(name) => match name.as_str() {
                "x" => Ok(Node::X),
                "i" => Ok(Node::Const(Complex64::new(0.0, 1.0))),
                "pi" => Ok(Node::Const(Complex64::new(std::f64::consts::PI, 0.0))),
                _ => {
                    let func = Func::from_name(name).ok_or_else(|| Error::Parse {
                        offset: tok.offset,
                        token: name.clone(),
                        message: "unknown identifier".into(),
                    })?;
                    match self.next() {
                        Some(Token {
                            kind: TokKind::LParen, ..
                        }) => {}
                        Some(other) => {
                            return Err(Error::Parse {
                                offset: other.offset,
                                token: other.text.clone(),
                                message: format!("expected `(` after `{}`", func.name()),
                            })
                        }
                        None => return Err(self.eof_error("expected `(`")),
                    }
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Token {
                            kind: TokKind::RParen, ..
                        }) => Ok(Node::Call(func, Box::new(arg))),
                        Some(other) => Err(Error::Parse {
                            offset: other.offset,
                            token: other.text.clone(),
                            message: "expected `)`".into(),
                        }),
                        None => Err(self.eof_error("unclosed function call")),
                    }
                }
            },
            TokKind::Op(_) | TokKind::RParen => Err(Error::Parse {
                offset: tok.offset,
                token: tok.text.clone(),
                message: "expected an operand".into(),
            }),
        }
    }
}
