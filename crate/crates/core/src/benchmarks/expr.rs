//! Minimal arithmetic expressions over point coordinates, used for
//! user-defined source and boundary terms on box domains.
//!
//! Grammar: numbers, `pi`, coordinates `x0 … x{d−1}`, `+ − * / ^`, unary minus,
//! parentheses and the functions `sin`, `cos`, `exp`.
//! Example: `2*x0^2 - sin(2*pi*x1) + x2*x3`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Expr {
    /// Parses `src`, rejecting coordinate indices `≥ dim`.
    pub fn parse(src: &str, dim: usize) -> Result<Expr> {
        let mut p = Parser { src: src.as_bytes(), pos: 0, dim };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Coord(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => {
                let base = a.eval(x);
                match b.as_ref() {
                    Expr::Const(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(*e as i32),
                    other => base.powf(other.eval(x)),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Expression { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'-' || self.src[self.pos] == b'+') {
                self.pos += 1;
            }
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Const).map_err(|_| Error::Expression {
            pos: start,
            msg: format!("bad number `{text}`"),
        })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let func = match word {
            "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            w if w.starts_with('x') && w.len() > 1 && w[1..].bytes().all(|b| b.is_ascii_digit()) => {
                let i: usize = w[1..].parse().map_err(|_| self.err("bad coordinate index"))?;
                if i >= self.dim {
                    return Err(Error::Expression {
                        pos: start,
                        msg: format!("coordinate x{i} out of range for dimension {}", self.dim),
                    });
                }
                return Ok(Expr::Coord(i));
            }
            w => {
                return Err(Error::Expression { pos: start, msg: format!("unknown identifier `{w}`") });
            }
        };
        if !self.eat(b'(') {
            return Err(self.err("expected `(` after function name"));
        }
        let arg = self.expr()?;
        if !self.eat(b')') {
            return Err(self.err("expected `)`"));
        }
        Ok(Expr::Call(func, Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_polynomials_and_trig() {
        let e = Expr::parse("2*x0^2 - sin(2*pi*x1) + x2*x3 / 4", 4).unwrap();
        let x = [0.5, 0.25, 2.0, 3.0];
        let expected = 2.0 * 0.25 - (std::f64::consts::PI * 0.5).sin() + 1.5;
        assert!((e.eval(&x) - expected).abs() < 1e-15);
        assert_eq!(Expr::parse("-x1^2", 2).unwrap().eval(&[0.0, 3.0]), -9.0);
        assert_eq!(Expr::parse("1.5e1 + exp(0)", 2).unwrap().eval(&[0.0, 0.0]), 16.0);
    }

    #[test]
    fn reports_errors_with_position() {
        assert!(matches!(Expr::parse("x2", 2), Err(Error::Expression { pos: 0, .. })));
        assert!(matches!(Expr::parse("sin(x0", 2), Err(Error::Expression { .. })));
        assert!(matches!(Expr::parse("x0 + tan(x1)", 2), Err(Error::Expression { pos: 5, .. })));
        assert!(Expr::parse("x0 x1", 2).is_err());
    }
}
