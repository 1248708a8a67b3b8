//! Arithmetic expressions for symbols and observables.
//!
//! Grammar:
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := atom ("^" unary)?
//! atom    := number | name | name "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Names: `x`, `k`, `p` (first component) and `x1..x3`, `k1..k3`, `p1..p3`;
//! `t` for scalar functions; constants `pi`, `e` and any user parameters
//! (conventionally `hbar` and `m`). Functions:
//! `sqrt exp ln log abs sin cos tan tanh sinh cosh` and the binary
//! `min max pow`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::MAX_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X(usize),
    K(usize),
    P(usize),
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sqrt,
    Exp,
    Ln,
    Abs,
    Sin,
    Cos,
    Tan,
    Tanh,
    Sinh,
    Cosh,
    Min,
    Max,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sqrt" => (Func::Sqrt, 1),
            "exp" => (Func::Exp, 1),
            "ln" | "log" => (Func::Ln, 1),
            "abs" => (Func::Abs, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "tanh" => (Func::Tanh, 1),
            "sinh" => (Func::Sinh, 1),
            "cosh" => (Func::Cosh, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "pow" => (Func::Pow, 2),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression with constants folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    consts: &'a BTreeMap<String, f64>,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Expression {
            offset,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(op @ ('+' | '-')) => {
                    self.pos += 1;
                    lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(op @ ('*' | '/')) => {
                    self.pos += 1;
                    lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let start = match self.peek() {
            None => return self.err(self.pos, "unexpected end of expression"),
            Some(_) => self.pos,
        };
        let rest = &self.src[start..];
        let c = rest.chars().next().unwrap_or(' ');
        if c == '(' {
            self.pos += 1;
            let inner = self.expr()?;
            if !self.eat(')') {
                return self.err(self.pos, "expected `)`");
            }
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == '.' {
            let mut end = 0;
            let bytes = rest.as_bytes();
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut j = end + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    end = j;
                }
            }
            let text = &rest[..end];
            self.pos += end;
            return match text.parse::<f64>() {
                Ok(v) => Ok(Node::Num(v)),
                Err(_) => self.err(start, format!("invalid number `{text}`")),
            };
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let end = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            let name = &rest[..end];
            self.pos += end;
            if self.peek() == Some('(') {
                let Some((func, arity)) = Func::lookup(name) else {
                    return self.err(start, format!("unknown function `{name}`"));
                };
                self.pos += 1;
                let mut args = vec![self.expr()?];
                while self.eat(',') {
                    args.push(self.expr()?);
                }
                if !self.eat(')') {
                    return self.err(self.pos, "expected `)` or `,`");
                }
                if args.len() != arity {
                    return self.err(start, format!("`{name}` takes {arity} argument(s), got {}", args.len()));
                }
                return Ok(Node::Call(func, args));
            }
            return self.name(start, name);
        }
        self.err(start, format!("unexpected character `{c}`"))
    }

    fn name(&self, start: usize, name: &str) -> Result<Node> {
        if let Some(v) = self.consts.get(name) {
            return Ok(Node::Num(*v));
        }
        match name {
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "e" => return Ok(Node::Num(std::f64::consts::E)),
            "t" => return Ok(Node::Var(Var::T)),
            _ => {}
        }
        let (head, tail) = name.split_at(1);
        let index = if tail.is_empty() {
            Some(0)
        } else {
            tail.parse::<usize>().ok().filter(|i| (1..=MAX_DIM).contains(i)).map(|i| i - 1)
        };
        match (head, index) {
            ("x", Some(i)) => Ok(Node::Var(Var::X(i))),
            ("k", Some(i)) => Ok(Node::Var(Var::K(i))),
            ("p", Some(i)) => Ok(Node::Var(Var::P(i))),
            _ => self.err(start, format!("unknown name `{name}`")),
        }
    }
}

fn fold(node: Node) -> Node {
    match node {
        Node::Neg(a) => match fold(*a) {
            Node::Num(v) => Node::Num(-v),
            other => Node::Neg(Box::new(other)),
        },
        Node::Bin(op, a, b) => {
            let (a, b) = (fold(*a), fold(*b));
            match (&a, &b) {
                (Node::Num(x), Node::Num(y)) => Node::Num(binary(op, *x, *y)),
                _ => Node::Bin(op, Box::new(a), Box::new(b)),
            }
        }
        Node::Call(f, args) => {
            let args: Vec<Node> = args.into_iter().map(fold).collect();
            if args.iter().all(|a| matches!(a, Node::Num(_))) {
                let vals: Vec<f64> = args
                    .iter()
                    .map(|a| match a {
                        Node::Num(v) => *v,
                        _ => unreachable!(),
                    })
                    .collect();
                Node::Num(call(f, &vals))
            } else {
                Node::Call(f, args)
            }
        }
        other => other,
    }
}

fn binary(op: char, a: f64, b: f64) -> f64 {
    match op {
        '+' => a + b,
        '-' => a - b,
        '*' => a * b,
        '/' => a / b,
        _ => {
            if b == 2.0 {
                a * a
            } else if b.fract() == 0.0 && b.abs() <= 64.0 {
                a.powi(b as i32)
            } else {
                a.powf(b)
            }
        }
    }
}

fn call(f: Func, v: &[f64]) -> f64 {
    match f {
        Func::Sqrt => v[0].sqrt(),
        Func::Exp => v[0].exp(),
        Func::Ln => v[0].ln(),
        Func::Abs => v[0].abs(),
        Func::Sin => v[0].sin(),
        Func::Cos => v[0].cos(),
        Func::Tan => v[0].tan(),
        Func::Tanh => v[0].tanh(),
        Func::Sinh => v[0].sinh(),
        Func::Cosh => v[0].cosh(),
        Func::Min => v[0].min(v[1]),
        Func::Max => v[0].max(v[1]),
        Func::Pow => binary('^', v[0], v[1]),
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        Self::parse_with(src, &BTreeMap::new())
    }

    /// Parses with named constants; they shadow the built-in names.
    pub fn parse_with(src: &str, consts: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Parser { src, pos: 0, consts };
        let root = p.expr()?;
        if p.peek().is_some() {
            return p.err(p.pos, "trailing input");
        }
        Ok(Expr {
            source: src.to_string(),
            root: fold(root),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates with the given coordinates; missing components read as 0.
    pub fn eval(&self, x: &[f64], k: &[f64], p: &[f64]) -> f64 {
        eval(&self.root, x, k, p)
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        collect(&self.root, &mut out);
        out.sort_by_key(|v| match v {
            Var::X(i) => *i,
            Var::K(i) => 10 + i,
            Var::P(i) => 20 + i,
            Var::T => 30,
        });
        out.dedup();
        out
    }

    pub fn uses_position(&self) -> bool {
        self.vars().iter().any(|v| matches!(v, Var::X(_)))
    }

    pub fn uses_momentum(&self) -> bool {
        self.vars().iter().any(|v| matches!(v, Var::K(_) | Var::P(_)))
    }

    /// Fails if a component index exceeds `dim`.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        for v in self.vars() {
            let (Var::X(i) | Var::K(i) | Var::P(i)) = v else {
                return Err(Error::Expression {
                    offset: 0,
                    message: "`t` is only available in scalar functions".into(),
                });
            };
            if i >= dim {
                return Err(Error::Expression {
                    offset: 0,
                    message: format!("component {} used in a {dim}-dimensional run", i + 1),
                });
            }
        }
        Ok(())
    }

    /// Scalar function of `t`; fails on any phase-space name.
    pub fn parse_scalar(src: &str, consts: &BTreeMap<String, f64>) -> Result<Self> {
        let e = Self::parse_with(src, consts)?;
        if e.vars().iter().any(|v| *v != Var::T) {
            return Err(Error::Expression {
                offset: 0,
                message: "scalar functions may only use `t`".into(),
            });
        }
        Ok(e)
    }

    pub fn eval_scalar(&self, t: f64) -> f64 {
        eval(&self.root, &[t], &[], &[])
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }
}

fn eval(node: &Node, x: &[f64], k: &[f64], p: &[f64]) -> f64 {
    let get = |s: &[f64], i: usize| s.get(i).copied().unwrap_or(0.0);
    match node {
        Node::Num(v) => *v,
        Node::Var(Var::X(i)) => get(x, *i),
        Node::Var(Var::K(i)) => get(k, *i),
        Node::Var(Var::P(i)) => get(p, *i),
        Node::Var(Var::T) => get(x, 0),
        Node::Neg(a) => -eval(a, x, k, p),
        Node::Bin(op, a, b) => binary(*op, eval(a, x, k, p), eval(b, x, k, p)),
        Node::Call(f, args) => {
            let mut v = [0.0; 2];
            for (slot, a) in v.iter_mut().zip(args) {
                *slot = eval(a, x, k, p);
            }
            call(*f, &v[..args.len()])
        }
    }
}

fn collect(node: &Node, out: &mut Vec<Var>) {
    match node {
        Node::Var(v) => out.push(*v),
        Node::Neg(a) => collect(a, out),
        Node::Bin(_, a, b) => {
            collect(a, out);
            collect(b, out);
        }
        Node::Call(_, args) => args.iter().for_each(|a| collect(a, out)),
        Node::Num(_) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, k: f64) -> f64 {
        Expr::parse(s).unwrap().eval(&[x], &[k], &[k])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(ev("1 - 2 - 3", 0.0, 0.0), -4.0);
        assert_eq!(ev("1.5e1 + 2E-1", 0.0, 0.0), 15.2);
    }

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(ev("p^2/2 + x^2/2", 1.0, 2.0), 2.5);
        let h = ev("(p - tanh(x))^2 / 2", 0.3, 1.1);
        assert!((h - 0.5 * (1.1 - 0.3f64.tanh()).powi(2)).abs() < 1e-15);
        assert_eq!(ev("(x^2 - 1)^2", 1.0, 0.0), 0.0);
        assert_eq!(ev("min(x, k) + max(x, k)", 2.0, 5.0), 7.0);
        assert!((ev("exp(-k^2)/(1+x^2)", 1.0, 0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn components_and_constants() {
        let e = Expr::parse("x1*k2 + p3 + pi").unwrap();
        assert_eq!(e.eval(&[2.0, 0.0, 0.0], &[0.0, 3.0, 0.0], &[0.0, 0.0, 1.0]), 7.0 + std::f64::consts::PI);
        assert!(e.check_dim(3).is_ok());
        assert!(e.check_dim(2).is_err());
        let mut c = BTreeMap::new();
        c.insert("omega".to_string(), 2.0);
        c.insert("m".to_string(), 0.5);
        let e = Expr::parse_with("m*omega^2*x^2/2", &c).unwrap();
        assert_eq!(e.eval(&[1.0], &[], &[]), 1.0);
        assert!(e.uses_position() && !e.uses_momentum());
        assert_eq!(Expr::parse("2*pi").unwrap().constant_value(), Some(2.0 * std::f64::consts::PI));
    }

    #[test]
    fn scalar_functions() {
        let f = Expr::parse_scalar("exp(t) - t^2", &BTreeMap::new()).unwrap();
        assert_eq!(f.eval_scalar(0.0), 1.0);
        assert!(Expr::parse_scalar("t + x", &BTreeMap::new()).is_err());
    }

    #[test]
    fn errors_carry_offsets() {
        let cases = [("x +", 3), ("foo(x)", 0), ("x ** 2", 3), ("(x", 2), ("sqrt(x, 1)", 0), ("x y", 2), ("q", 0)];
        for (src, off) in cases {
            match Expr::parse(src) {
                Err(Error::Expression { offset, .. }) => assert_eq!(offset, off, "{src}"),
                other => panic!("{src}: {other:?}"),
            }
        }
    }
}
