//! Small arithmetic expression language used for user-supplied model functions.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! var     := 't' | 'lam' | 'x'
//! func    := abs/1 | exp/1 | max/2 | min/2
//! ```
//!
//! Expressions print in a fully parenthesized canonical form that parses back
//! to the identical tree, constants included bit for bit.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FiapError, Result};

/// Free variables an expression may refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Time.
    T,
    /// Current intensity of the node.
    Lam,
    /// Generic argument (aggregate for `f`, integer state for discrete maps).
    X,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::Lam => "lam",
            Var::X => "x",
        }
    }
}

/// Variable bindings for evaluation. Unused variables can stay at zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct Vars {
    pub t: f64,
    pub lam: f64,
    pub x: f64,
}

impl Vars {
    pub fn t(t: f64) -> Self {
        Self { t, ..Self::default() }
    }

    pub fn t_lam(t: f64, lam: f64) -> Self {
        Self { t, lam, x: 0.0 }
    }

    pub fn x(x: f64) -> Self {
        Self { x, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Exp(Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(FiapError::Expr(format!(
                "unexpected trailing input in `{src}` at token {}",
                p.pos
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, v: Vars) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::T) => v.t,
            Expr::Var(Var::Lam) => v.lam,
            Expr::Var(Var::X) => v.x,
            Expr::Neg(a) => -a.eval(v),
            Expr::Add(a, b) => a.eval(v) + b.eval(v),
            Expr::Sub(a, b) => a.eval(v) - b.eval(v),
            Expr::Mul(a, b) => a.eval(v) * b.eval(v),
            Expr::Div(a, b) => a.eval(v) / b.eval(v),
            Expr::Abs(a) => a.eval(v).abs(),
            Expr::Exp(a) => a.eval(v).exp(),
            Expr::Max(a, b) => a.eval(v).max(b.eval(v)),
            Expr::Min(a, b) => a.eval(v).min(b.eval(v)),
        }
    }

    /// True when the expression mentions `var`.
    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Abs(a) | Expr::Exp(a) => a.uses(var),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Max(a, b)
            | Expr::Min(a, b) => a.uses(var) || b.uses(var),
        }
    }

    pub fn is_constant(&self) -> bool {
        !self.uses(Var::T) && !self.uses(Var::Lam) && !self.uses(Var::X)
    }

    /// Returns `(a, c)` with `self == a + c * var` identically, or `None` when
    /// the expression depends on another variable or is not affine in `var`.
    pub fn affine_in(&self, var: Var) -> Option<(f64, f64)> {
        match self {
            Expr::Const(c) => Some((*c, 0.0)),
            Expr::Var(v) => (*v == var).then_some((0.0, 1.0)),
            Expr::Neg(a) => a.affine_in(var).map(|(a, c)| (-a, -c)),
            Expr::Add(a, b) => {
                let (a1, c1) = a.affine_in(var)?;
                let (a2, c2) = b.affine_in(var)?;
                Some((a1 + a2, c1 + c2))
            }
            Expr::Sub(a, b) => {
                let (a1, c1) = a.affine_in(var)?;
                let (a2, c2) = b.affine_in(var)?;
                Some((a1 - a2, c1 - c2))
            }
            Expr::Mul(a, b) => {
                let (a1, c1) = a.affine_in(var)?;
                let (a2, c2) = b.affine_in(var)?;
                if c1 == 0.0 {
                    Some((a1 * a2, a1 * c2))
                } else if c2 == 0.0 {
                    Some((a1 * a2, c1 * a2))
                } else {
                    None
                }
            }
            Expr::Div(a, b) => {
                let (a1, c1) = a.affine_in(var)?;
                let (a2, c2) = b.affine_in(var)?;
                (c2 == 0.0 && a2 != 0.0).then(|| (a1 / a2, c1 / a2))
            }
            Expr::Abs(a) | Expr::Exp(a) => {
                let (a1, c1) = a.affine_in(var)?;
                (c1 == 0.0).then(|| (self.eval(Vars::default()), 0.0)).filter(|_| a1.is_finite())
            }
            Expr::Max(a, b) | Expr::Min(a, b) => {
                let (_, c1) = a.affine_in(var)?;
                let (_, c2) = b.affine_in(var)?;
                (c1 == 0.0 && c2 == 0.0).then(|| (self.eval(Vars::default()), 0.0))
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(v) => f.write_str(v.name()),
            // `-<literal>` parses as a negative constant, so keep negated constants wrapped.
            Expr::Neg(a) if matches!(**a, Expr::Const(_)) => write!(f, "(-({a}))"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Abs(a) => write!(f, "abs({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        Expr::parse(&src).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let lexeme: String = chars[start..i].iter().collect();
            let v: f64 = lexeme
                .parse()
                .map_err(|_| FiapError::Expr(format!("bad number `{lexeme}` in `{src}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/(),".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(FiapError::Expr(format!("unexpected character `{c}` in `{src}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(FiapError::Expr(format!("expected `{op}` at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            // A negated literal is a negative constant.
            if let Some(Tok::Num(v)) = self.peek().cloned() {
                self.pos += 1;
                return Ok(Expr::Const(-v));
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "t" => Ok(Expr::Var(Var::T)),
                    "lam" => Ok(Expr::Var(Var::Lam)),
                    "x" => Ok(Expr::Var(Var::X)),
                    "abs" | "exp" => {
                        self.expect('(')?;
                        let a = Box::new(self.expr()?);
                        self.expect(')')?;
                        Ok(if name == "abs" { Expr::Abs(a) } else { Expr::Exp(a) })
                    }
                    "max" | "min" => {
                        self.expect('(')?;
                        let a = Box::new(self.expr()?);
                        self.expect(',')?;
                        let b = Box::new(self.expr()?);
                        self.expect(')')?;
                        Ok(if name == "max" { Expr::Max(a, b) } else { Expr::Min(a, b) })
                    }
                    other => Err(FiapError::Expr(format!("unknown identifier `{other}`"))),
                }
            }
            other => Err(FiapError::Expr(format!("unexpected token {other:?} at {}", self.pos))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn precedence_and_evaluation() {
        let e = Expr::parse("1 + 2 * lam - max(0, t) / 4").unwrap();
        assert_eq!(e.eval(Vars::t_lam(8.0, 3.0)), 1.0 + 6.0 - 2.0);
        let e = Expr::parse("-abs(x) + exp(0)").unwrap();
        assert_eq!(e.eval(Vars::x(-2.5)), -1.5);
        assert_eq!(Expr::parse("min(x, 5)").unwrap().eval(Vars::x(7.0)), 5.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("max(1)").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("x $ 2").is_err());
    }

    #[test]
    fn affine_detection() {
        let gl_tau = Expr::parse("lam + (1.5 - lam) / 2").unwrap();
        assert_eq!(gl_tau.affine_in(Var::Lam), Some((0.75, 0.5)));
        assert_eq!(Expr::parse("3").unwrap().affine_in(Var::Lam), Some((3.0, 0.0)));
        assert_eq!(Expr::parse("lam * lam").unwrap().affine_in(Var::Lam), None);
        assert_eq!(Expr::parse("abs(lam)").unwrap().affine_in(Var::Lam), None);
        assert_eq!(Expr::parse("lam + t").unwrap().affine_in(Var::Lam), None);
        assert_eq!(Expr::parse("max(1, 2) * lam").unwrap().affine_in(Var::Lam), Some((0.0, 2.0)));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(Expr::Const),
            Just(Expr::Var(Var::T)),
            Just(Expr::Var(Var::Lam)),
            Just(Expr::Var(Var::X)),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                inner.clone().prop_map(|a| Expr::Abs(Box::new(a))),
                inner.clone().prop_map(|a| Expr::Exp(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Max(Box::new(a), Box::new(b))),
                (inner.clone(), inner).prop_map(|(a, b)| Expr::Min(Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let back = Expr::parse(&printed).unwrap();
            prop_assert_eq!(back.to_string(), printed);
            prop_assert_eq!(back, e);
        }
    }
}
