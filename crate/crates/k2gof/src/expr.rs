//! Arithmetic expressions over coordinates `x1..xd` and parameters `b1..bp`.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'pi' | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func  := exp | log | pow
//! ```

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X(usize),
    B(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: {}", self.pos, self.message)
    }
}

impl std::error::Error for ParseError {}

impl Expr {
    /// Parses `src`, accepting coordinates `x1..x{d}` and parameters `b1..b{p}`.
    pub fn parse(src: &str, d: usize, p: usize) -> Result<Expr, ParseError> {
        let mut parser = Parser { src: src.as_bytes(), pos: 0, d, p };
        let e = parser.expr()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], b: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X(k) => x[*k],
            Expr::B(k) => b[*k],
            Expr::Neg(e) => -e.eval(x, b),
            Expr::Add(l, r) => l.eval(x, b) + r.eval(x, b),
            Expr::Sub(l, r) => l.eval(x, b) - r.eval(x, b),
            Expr::Mul(l, r) => l.eval(x, b) * r.eval(x, b),
            Expr::Div(l, r) => l.eval(x, b) / r.eval(x, b),
            Expr::Pow(l, r) => l.eval(x, b).powf(r.eval(x, b)),
            Expr::Exp(e) => e.eval(x, b).exp(),
            Expr::Log(e) => e.eval(x, b).ln(),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    d: usize,
    p: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { pos: self.pos, message: message.into() }
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

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
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

    fn term(&mut self) -> Result<Expr, ParseError> {
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

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(c) => Err(self.error(format!("unexpected '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let s = self.src;
        let digits = |pos: &mut usize| {
            while *pos < s.len() && s[*pos].is_ascii_digit() {
                *pos += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < s.len() && s[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut q = self.pos + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if q < s.len() && s[q].is_ascii_digit() {
                self.pos = q;
                digits(&mut self.pos);
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Num).map_err(|_| ParseError { pos: start, message: format!("bad number '{text}'") })
    }

    fn name(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match name {
            "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
            "exp" | "log" | "pow" => return self.call(name, start),
            _ => {}
        }
        let index = |prefix: &str, limit: usize| -> Option<Result<usize, ParseError>> {
            let k: usize = name.strip_prefix(prefix)?.parse().ok()?;
            Some(if (1..=limit).contains(&k) {
                Ok(k - 1)
            } else {
                Err(ParseError { pos: start, message: format!("{name} out of range 1..={limit}") })
            })
        };
        if let Some(k) = index("x", self.d) {
            return k.map(Expr::X);
        }
        if let Some(k) = index("b", self.p) {
            return k.map(Expr::B);
        }
        Err(ParseError { pos: start, message: format!("unknown name '{name}'") })
    }

    fn call(&mut self, name: &str, start: usize) -> Result<Expr, ParseError> {
        self.expect(b'(')?;
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        self.expect(b')')?;
        let arity = if name == "pow" { 2 } else { 1 };
        if args.len() != arity {
            return Err(ParseError { pos: start, message: format!("{name} takes {arity} argument(s)") });
        }
        let mut it = args.into_iter().map(Box::new);
        let a = it.next().expect("arity checked");
        Ok(match name {
            "exp" => Expr::Exp(a),
            "log" => Expr::Log(a),
            _ => Expr::Pow(a, it.next().expect("arity checked")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str) -> f64 {
        Expr::parse(src, 2, 3).unwrap().eval(&[2.0, 3.0], &[0.5, 4.0, -1.0])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3"), 7.0);
        assert_eq!(ev("(1 + 2) * 3"), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2"), 512.0);
        assert_eq!(ev("-2 ^ 2"), -4.0);
        assert_eq!(ev("8 / 4 / 2"), 1.0);
        assert_eq!(ev("1 - 2 - 3"), -4.0);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(ev("x1 * b2 + x2"), 11.0);
        assert_eq!(ev("pow(x1, b3)"), 0.5);
        assert!((ev("exp(log(x2))") - 3.0).abs() < 1e-15);
        assert_eq!(ev("2.5e1 + .5"), 25.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expr::parse("x3", 2, 3).is_err());
        assert!(Expr::parse("b4", 2, 3).is_err());
        assert!(Expr::parse("sin(x1)", 2, 3).is_err());
        assert!(Expr::parse("pow(x1)", 2, 3).is_err());
        assert!(Expr::parse("1 +", 2, 3).is_err());
        assert!(Expr::parse("(1", 2, 3).is_err());
        assert!(Expr::parse("1 2", 2, 3).is_err());
    }
}
