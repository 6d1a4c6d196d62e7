//! Scalar expressions in a parameter `t`, evaluated with forward-mode
//! derivatives so that families get exact tangents.

use crate::error::{PwxError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Value and `d/dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    fn c(v: f64) -> Dual {
        Dual { v, d: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    T,
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Parsed expression such as `"1/(0.5 + t)"` or `"0.01*sin(2*pi*t)"`.
#[derive(Debug, Clone, PartialEq)]
pub struct TExpr {
    src: String,
    node: Node,
}

impl fmt::Display for TExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> PwxError {
        PwxError::Schema(format!("t-expression at byte {}: {msg}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op as char, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op as char, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() {
                    let c = self.s[self.pos];
                    let exp_sign = (c == b'+' || c == b'-')
                        && self.pos > start
                        && matches!(self.s[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                text.parse::<f64>().map(Node::Num).map_err(|_| self.err("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                let func = match name {
                    "t" => return Ok(Node::T),
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "tan" => Func::Tan,
                    "exp" => Func::Exp,
                    "ln" => Func::Ln,
                    "sqrt" => Func::Sqrt,
                    _ => return Err(self.err(&format!("unknown name '{name}'"))),
                };
                if self.peek() != Some(b'(') {
                    return Err(self.err("expected '(' after function name"));
                }
                let arg = self.atom()?;
                Ok(Node::Call(func, Box::new(arg)))
            }
            _ => Err(self.err("unexpected token")),
        }
    }
}

fn eval(n: &Node, t: f64) -> Dual {
    match n {
        Node::Num(v) => Dual::c(*v),
        Node::T => Dual { v: t, d: 1.0 },
        Node::Neg(a) => {
            let a = eval(a, t);
            Dual { v: -a.v, d: -a.d }
        }
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, t), eval(b, t));
            match op {
                '+' => Dual { v: a.v + b.v, d: a.d + b.d },
                '-' => Dual { v: a.v - b.v, d: a.d - b.d },
                '*' => Dual { v: a.v * b.v, d: a.d * b.v + a.v * b.d },
                '/' => Dual { v: a.v / b.v, d: (a.d * b.v - a.v * b.d) / (b.v * b.v) },
                _ => {
                    let v = a.v.powf(b.v);
                    let mut d = 0.0;
                    if a.d != 0.0 {
                        d += b.v * a.v.powf(b.v - 1.0) * a.d;
                    }
                    if b.d != 0.0 {
                        d += v * a.v.ln() * b.d;
                    }
                    Dual { v, d }
                }
            }
        }
        Node::Call(func, a) => {
            let a = eval(a, t);
            let (v, dv) = match func {
                Func::Sin => (a.v.sin(), a.v.cos()),
                Func::Cos => (a.v.cos(), -a.v.sin()),
                Func::Tan => (a.v.tan(), 1.0 / (a.v.cos() * a.v.cos())),
                Func::Exp => (a.v.exp(), a.v.exp()),
                Func::Ln => (a.v.ln(), 1.0 / a.v),
                Func::Sqrt => (a.v.sqrt(), 0.5 / a.v.sqrt()),
            };
            Dual { v, d: dv * a.d }
        }
    }
}

fn depends_on_t(n: &Node) -> bool {
    match n {
        Node::Num(_) => false,
        Node::T => true,
        Node::Neg(a) | Node::Call(_, a) => depends_on_t(a),
        Node::Bin(_, a, b) => depends_on_t(a) || depends_on_t(b),
    }
}

impl TExpr {
    pub fn parse(src: &str) -> Result<TExpr> {
        let mut p = Parser { s: src.as_bytes(), pos: 0 };
        let node = p.expr()?;
        if p.peek().is_some() {
            return Err(p.err("trailing input"));
        }
        Ok(TExpr { src: src.to_string(), node })
    }

    pub fn constant(v: f64) -> TExpr {
        TExpr { src: format!("{v:?}"), node: Node::Num(v) }
    }

    pub fn eval(&self, t: f64) -> Dual {
        eval(&self.node, t)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).v
    }

    pub fn is_constant(&self) -> bool {
        !depends_on_t(&self.node)
    }
}

/// A JSON coefficient: a plain number or a string in `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeff {
    Num(f64),
    Text(String),
}

impl Coeff {
    pub fn compile(&self) -> Result<TExpr> {
        match self {
            Coeff::Num(v) if v.is_finite() => Ok(TExpr::constant(*v)),
            Coeff::Num(_) => Err(PwxError::Schema("non-finite coefficient".into())),
            Coeff::Text(s) => TExpr::parse(s),
        }
    }
}
