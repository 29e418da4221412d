//! A small arithmetic expression language for coefficient fields.
//!
//! Expressions are built from the variables `x`, `y`, decimal literals, the
//! operators `+ - * / ^`, parentheses, and the functions `exp`, `log`,
//! `sqrt`.  Parsing is total on accepted strings: any parsed expression
//! pretty-prints to a string that parses back to an equivalent evaluator.
//!
//! ```
//! use probelab::expr::Expr;
//! let e = Expr::parse("1 + 0.2*x").unwrap();
//! assert_eq!(e.eval(0.5, 0.5).unwrap(), 1.1);
//! ```

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        Self::parse_with(src, false)
    }

    /// Parse a radial profile in the single variable `r` (bound to the first
    /// argument of [`Expr::eval`]).
    pub fn parse_radial(src: &str) -> Result<Expr> {
        Self::parse_with(src, true)
    }

    fn parse_with(src: &str, radial: bool) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            radial,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::ExprParse(format!(
                "unexpected trailing input near token {}",
                p.pos
            )));
        }
        Ok(e)
    }

    /// Evaluate at a point.  Domain violations (log of a nonpositive value,
    /// square root of a negative, division by zero, non-finite result) are
    /// reported with the offending point.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let fail = |reason: &str| Error::ExprDomain {
            x,
            y,
            reason: reason.to_string(),
        };
        let v = match self {
            Expr::Num(c) => *c,
            Expr::X => x,
            Expr::Y => y,
            Expr::Add(a, b) => a.eval(x, y)? + b.eval(x, y)?,
            Expr::Sub(a, b) => a.eval(x, y)? - b.eval(x, y)?,
            Expr::Mul(a, b) => a.eval(x, y)? * b.eval(x, y)?,
            Expr::Div(a, b) => {
                let d = b.eval(x, y)?;
                if d == 0.0 {
                    return Err(fail("division by zero"));
                }
                a.eval(x, y)? / d
            }
            Expr::Pow(a, b) => a.eval(x, y)?.powf(b.eval(x, y)?),
            Expr::Neg(a) => -a.eval(x, y)?,
            Expr::Exp(a) => a.eval(x, y)?.exp(),
            Expr::Log(a) => {
                let v = a.eval(x, y)?;
                if v <= 0.0 {
                    return Err(fail("log of nonpositive value"));
                }
                v.ln()
            }
            Expr::Sqrt(a) => {
                let v = a.eval(x, y)?;
                if v < 0.0 {
                    return Err(fail("sqrt of negative value"));
                }
                v.sqrt()
            }
        };
        if !v.is_finite() {
            return Err(fail("non-finite result"));
        }
        Ok(v)
    }

    /// Render the expression.  `parse(pretty()) == self` up to structural
    /// equality of the evaluation.
    pub fn pretty(&self) -> String {
        match self {
            Expr::Num(c) => {
                if *c < 0.0 {
                    format!("({})", c)
                } else {
                    format!("{}", c)
                }
            }
            Expr::X => "x".into(),
            Expr::Y => "y".into(),
            Expr::Add(a, b) => format!("({} + {})", a.pretty(), b.pretty()),
            Expr::Sub(a, b) => format!("({} - {})", a.pretty(), b.pretty()),
            Expr::Mul(a, b) => format!("({} * {})", a.pretty(), b.pretty()),
            Expr::Div(a, b) => format!("({} / {})", a.pretty(), b.pretty()),
            Expr::Pow(a, b) => format!("({} ^ {})", a.pretty(), b.pretty()),
            Expr::Neg(a) => format!("(-{})", a.pretty()),
            Expr::Exp(a) => format!("exp({})", a.pretty()),
            Expr::Log(a) => format!("log({})", a.pretty()),
            Expr::Sqrt(a) => format!("sqrt({})", a.pretty()),
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
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == '.'
                        || bytes[i] == 'e'
                        || bytes[i] == 'E'
                        || ((bytes[i] == '+' || bytes[i] == '-')
                            && i > start
                            && (bytes[i - 1] == 'e' || bytes[i - 1] == 'E')))
                {
                    i += 1;
                }
                let s: String = bytes[start..i].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::ExprParse(format!("bad number literal '{s}'")))?;
                out.push(Token::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(bytes[start..i].iter().collect()));
            }
            other => {
                return Err(Error::ExprParse(format!("unexpected character '{other}'")));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Radial mode: the only variable is `r`, carried in the `X` slot.
    radial: bool,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Minus) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // Right-associative: 2^3^2 == 2^(3^2).
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(Error::ExprParse("missing closing parenthesis".into())),
                }
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "x" if !self.radial => Ok(Expr::X),
                "y" if !self.radial => Ok(Expr::Y),
                "r" if self.radial => Ok(Expr::X),
                "exp" | "log" | "sqrt" => {
                    match self.bump() {
                        Some(Token::LParen) => {}
                        _ => {
                            return Err(Error::ExprParse(format!(
                                "function '{name}' needs a parenthesized argument"
                            )))
                        }
                    }
                    let arg = Box::new(self.expr()?);
                    match self.bump() {
                        Some(Token::RParen) => {}
                        _ => return Err(Error::ExprParse("missing closing parenthesis".into())),
                    }
                    Ok(match name.as_str() {
                        "exp" => Expr::Exp(arg),
                        "log" => Expr::Log(arg),
                        _ => Expr::Sqrt(arg),
                    })
                }
                other => Err(Error::ExprParse(format!("unknown identifier '{other}'"))),
            },
            other => Err(Error::ExprParse(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates_linear() {
        let e = Expr::parse("1 + 0.2*x").unwrap();
        assert!((e.eval(0.5, 0.5).unwrap() - 1.1).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_power() {
        let e = Expr::parse("2 + 3 * 2 ^ 2").unwrap();
        assert_eq!(e.eval(0.0, 0.0).unwrap(), 14.0);
        let e = Expr::parse("2 ^ 3 ^ 2").unwrap();
        assert_eq!(e.eval(0.0, 0.0).unwrap(), 512.0);
    }

    #[test]
    fn unary_minus_and_functions() {
        let e = Expr::parse("exp(-x) + sqrt(y)").unwrap();
        let v = e.eval(0.0, 4.0).unwrap();
        assert!((v - 3.0).abs() < 1e-15);
    }

    #[test]
    fn log_of_nonpositive_reports_point() {
        let e = Expr::parse("log(x)").unwrap();
        match e.eval(-1.0, 0.25) {
            Err(Error::ExprDomain { x, y, .. }) => {
                assert_eq!(x, -1.0);
                assert_eq!(y, 0.25);
            }
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn pretty_roundtrip_matches_on_random_points() {
        let sources = [
            "1 + 0.2*x",
            "exp(x*y) - sqrt(x^2 + y^2 + 1)",
            "-x / (y + 2) + 3.5e-1",
            "(x + y)^2 / (1 + x*x)",
        ];
        for src in sources {
            let a = Expr::parse(src).unwrap();
            let b = Expr::parse(&a.pretty()).unwrap();
            let mut state = 0x9e3779b97f4a7c15u64;
            for _ in 0..100 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                let x = ((state >> 12) as f64 / (1u64 << 52) as f64) * 2.0 - 1.0;
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                let y = ((state >> 12) as f64 / (1u64 << 52) as f64) * 2.0 - 1.0;
                let va = a.eval(x, y);
                let vb = b.eval(x, y);
                match (va, vb) {
                    (Ok(va), Ok(vb)) => {
                        let scale = va.abs().max(1.0);
                        assert!(
                            (va - vb).abs() <= 1e-15 * scale,
                            "roundtrip mismatch for '{src}' at ({x},{y}): {va} vs {vb}"
                        );
                    }
                    (Err(_), Err(_)) => {}
                    other => panic!("roundtrip changed error behavior: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(2)").is_err());
        assert!(Expr::parse("1 ) 2").is_err());
        assert!(Expr::parse("x ? y").is_err());
    }
}
