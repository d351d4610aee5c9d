//! A minimal arithmetic expression language for user-defined problems.
//!
//! Variables are `x1..xn` and `t`; operators `+ - * / ^`; functions
//! `sin`, `cos`, `exp`, `sqrt`; the constant `pi`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X(usize),
    T,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Parses `src` allowing the variables `x1..x{n_vars}` and `t`.
    pub fn parse(src: &str, n_vars: usize) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, n_vars };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!("unexpected trailing input in '{src}'")));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X(i) => x[*i],
            Expr::T => t,
            Expr::Neg(a) => -a.eval(x, t),
            Expr::Add(a, b) => a.eval(x, t) + b.eval(x, t),
            Expr::Sub(a, b) => a.eval(x, t) - b.eval(x, t),
            Expr::Mul(a, b) => a.eval(x, t) * b.eval(x, t),
            Expr::Div(a, b) => a.eval(x, t) / b.eval(x, t),
            Expr::Pow(a, b) => {
                let base = a.eval(x, t);
                match **b {
                    Expr::Const(c) if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 => base.powi(c as i32),
                    _ => base.powf(b.eval(x, t)),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(x, t);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }
}

impl Expr {
    pub fn depends_on_t(&self) -> bool {
        match self {
            Expr::T => true,
            Expr::Const(_) | Expr::X(_) => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on_t(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on_t() || b.depends_on_t()
            }
        }
    }

    /// Symbolic partial derivative with respect to `t`.
    ///
    /// Exponents must not depend on `t` (there is no logarithm in the language).
    pub fn diff_t(&self) -> Result<Expr> {
        use Expr::*;
        let bx = Box::new;
        Ok(match self {
            Const(_) | X(_) => Const(0.0),
            T => Const(1.0),
            Neg(a) => Neg(bx(a.diff_t()?)),
            Add(a, b) => Add(bx(a.diff_t()?), bx(b.diff_t()?)),
            Sub(a, b) => Sub(bx(a.diff_t()?), bx(b.diff_t()?)),
            Mul(a, b) => Add(
                bx(Mul(bx(a.diff_t()?), b.clone())),
                bx(Mul(a.clone(), bx(b.diff_t()?))),
            ),
            Div(a, b) => Div(
                bx(Sub(
                    bx(Mul(bx(a.diff_t()?), b.clone())),
                    bx(Mul(a.clone(), bx(b.diff_t()?))),
                )),
                bx(Pow(b.clone(), bx(Const(2.0)))),
            ),
            Pow(a, b) => {
                if b.depends_on_t() {
                    return Err(Error::Expression("t-dependent exponents cannot be differentiated".into()));
                }
                let lowered = Pow(a.clone(), bx(Sub(b.clone(), bx(Const(1.0)))));
                Mul(bx(Mul(b.clone(), bx(lowered))), bx(a.diff_t()?))
            }
            Call(f, a) => {
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(bx(Call(Func::Sin, a.clone()))),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Sqrt => Div(bx(Const(0.5)), bx(Call(Func::Sqrt, a.clone()))),
                };
                Mul(bx(outer), bx(a.diff_t()?))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
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
            // exponent part: 1e-3, 2.5E+4
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number '{s}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
    n_vars: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // right associative; binds tighter than unary minus on its left
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(Error::Expression("missing ')'".into())),
                }
            }
            Some(Tok::Ident(name)) => self.ident(name),
            Some(tok) => Err(Error::Expression(format!("unexpected token {tok:?}"))),
            None => Err(Error::Expression("unexpected end of expression".into())),
        }
    }

    fn ident(&mut self, name: String) -> Result<Expr> {
        let func = match name.as_str() {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        };
        if let Some(f) = func {
            if self.next() != Some(Tok::LParen) {
                return Err(Error::Expression(format!("'{name}' must be called with parentheses")));
            }
            let arg = self.expr()?;
            if self.next() != Some(Tok::RParen) {
                return Err(Error::Expression("missing ')'".into()));
            }
            return Ok(Expr::Call(f, Box::new(arg)));
        }
        match name.as_str() {
            "t" => Ok(Expr::T),
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            _ => {
                let idx = name
                    .strip_prefix('x')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&k| k >= 1 && k <= self.n_vars)
                    .ok_or_else(|| Error::Expression(format!("unknown identifier '{name}'")))?;
                Ok(Expr::X(idx - 1))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64], t: f64) -> f64 {
        Expr::parse(src, x.len()).unwrap().eval(x, t)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", &[], 0.0), 7.0);
        assert_eq!(ev("-2^2", &[], 0.0), -4.0);
        assert_eq!(ev("2^3^2", &[], 0.0), 512.0);
        assert_eq!(ev("(1 + 2) * 3", &[], 0.0), 9.0);
        assert_eq!(ev("8 / 4 / 2", &[], 0.0), 1.0);
        assert_eq!(ev("2^-1", &[], 0.0), 0.5);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(ev("x1^3 - t*x2", &[2.0, 3.0], 0.5), 6.5);
        assert_eq!(ev("sqrt(x1) + exp(0) + cos(0) + sin(0)", &[4.0], 0.0), 4.0);
        assert!((ev("sin(pi/2)", &[], 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ev("1e-3 * 2E+3", &[], 0.0), 2.0);
    }

    #[test]
    fn t_derivative_matches_difference() {
        for src in ["t", "3*t^2 - 2", "sin(2*t) * exp(-t)", "t / (1 + t^2)", "sqrt(1 + t^2)", "cos(t)^3", "x1 * t"] {
            let e = Expr::parse(src, 1).unwrap();
            let d = e.diff_t().unwrap();
            for &t in &[-0.7, 0.1, 1.3] {
                let h = 1e-5;
                let fd = (e.eval(&[0.4], t + h) - e.eval(&[0.4], t - h)) / (2.0 * h);
                assert!((d.eval(&[0.4], t) - fd).abs() < 1e-8, "{src} at {t}");
            }
        }
        assert!(Expr::parse("2^t", 0).unwrap().diff_t().is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expr::parse("x3", 2).is_err());
        assert!(Expr::parse("x0", 2).is_err());
        assert!(Expr::parse("tan(t)", 0).is_err());
        assert!(Expr::parse("1 +", 0).is_err());
        assert!(Expr::parse("(1", 0).is_err());
        assert!(Expr::parse("1 2", 0).is_err());
        assert!(Expr::parse("2 $ 3", 0).is_err());
    }
}
