//! Coefficient expression language: tokenizer, precedence-climbing parser and
//! a direct scalar evaluator. The grammar is documented in `docs/expr.md`.

use std::fmt;

use super::ExprError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    /// Heaviside step, `1` for non-negative arguments. Used for piecewise
    /// boundary data; its jet carries no derivative information.
    Step,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "step" => Func::Step,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Step => "step",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Step => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Parsed expression tree. Variables are zero-based (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Evaluates at a point. Invalid operations follow IEEE semantics (NaN/inf).
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(k) => x[*k],
            Expr::Neg(a) => -a.eval(x),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => {
                        if b.fract() == 0.0 && b.abs() < 1024.0 {
                            a.powi(b as i32)
                        } else {
                            a.powf(b)
                        }
                    }
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    /// Value if the expression contains no variables.
    pub fn constant_value(&self) -> Option<f64> {
        if self.max_variable().is_none() {
            Some(self.eval(&[]))
        } else {
            None
        }
    }

    /// True when the expression is the literal constant zero (or folds to it).
    pub fn is_zero(&self) -> bool {
        self.constant_value() == Some(0.0)
    }

    /// Largest zero-based variable index referenced.
    pub fn max_variable(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(k) => Some(*k),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_variable(),
            Expr::Binary(_, a, b) => match (a.max_variable(), b.max_variable()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(k) => write!(f, "x{}", k + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a}{s}{b})")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(text: &'a str) -> Result<Vec<(Tok, usize)>, ExprError> {
        let mut lx = Lexer { src: text.as_bytes(), pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let done = tok == Tok::End;
            out.push((tok, at));
            if done {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self
                .src
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
            {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
            return Ok((Tok::Ident(name), start));
        }
        self.pos += 1;
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                return Err(ExprError::Syntax {
                    position: start,
                    message: format!("unexpected character '{}'", c as char),
                })
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ExprError> {
        let digits = |lx: &mut Lexer| {
            while lx.src.get(lx.pos).is_some_and(u8::is_ascii_digit) {
                lx.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
            } else {
                // `2e` followed by something else: not an exponent.
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(|v| (Tok::Num(v), start))
            .map_err(|_| ExprError::Syntax {
                position: start,
                message: format!("malformed number '{text}'"),
            })
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn offset(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax { position: self.offset(), message: message.into() })
    }

    fn additive(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.peek() == &Tok::Op('^') {
            self.bump();
            // Right associative, and the exponent may carry its own sign.
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.additive()?;
                if self.peek() != &Tok::RParen {
                    return self.syntax("expected ')'");
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek() == &Tok::LParen {
                    return self.call(name, at);
                }
                self.identifier(&name, at)
            }
            Tok::End => Err(ExprError::Syntax {
                position: at,
                message: "unexpected end of input".into(),
            }),
            other => Err(ExprError::Syntax {
                position: at,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn identifier(&self, name: &str, at: usize) -> Result<Expr, ExprError> {
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        let index = match name {
            "x" => Some(0),
            "y" => Some(1),
            "z" => Some(2),
            _ => name
                .strip_prefix('x')
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| k - 1),
        };
        match index {
            Some(k) if k < self.dim => Ok(Expr::Var(k)),
            _ => Err(ExprError::UnknownIdentifier { name: name.to_string(), position: at }),
        }
    }

    fn call(&mut self, name: String, at: usize) -> Result<Expr, ExprError> {
        let Some(func) = Func::from_name(&name) else {
            return Err(ExprError::UnknownIdentifier { name, position: at });
        };
        self.bump(); // '('
        let mut args = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                args.push(self.additive()?);
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RParen => break,
                    _ => return self.syntax("expected ',' or ')'"),
                }
            }
        }
        self.bump(); // ')'
        if args.len() != 1 {
            return Err(ExprError::ArityMismatch {
                name,
                expected: 1,
                found: args.len(),
                position: at,
            });
        }
        Ok(Expr::Call(func, Box::new(args.pop().unwrap())))
    }
}

/// Parses `text` as an expression in the variables `x1..x{dim}`.
pub fn parse(text: &str, dim: usize) -> Result<Expr, ExprError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, at: 0, dim };
    let e = p.additive()?;
    if p.peek() != &Tok::End {
        return p.syntax("unexpected trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_term_sum() {
        let e = parse("1+x1+x2", 2).unwrap();
        match &e {
            Expr::Binary(BinOp::Add, lhs, rhs) => {
                assert!(matches!(**rhs, Expr::Var(1)));
                assert!(matches!(**lhs, Expr::Binary(BinOp::Add, _, _)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
        assert_eq!(e.eval(&[2.0, 3.0]), 6.0);
    }

    #[test]
    fn sine_vanishes_at_origin() {
        let e = parse("sin(pi*(x1+x2))", 2).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]), 0.0);
        assert!((e.eval(&[0.25, 0.25]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dangling_power_reports_offset() {
        match parse("x1^", 1) {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn precedence_rules() {
        let x = [3.0, 2.0];
        // ^ binds tighter than unary minus, which binds tighter than * /.
        assert_eq!(parse("-x1^2", 2).unwrap().eval(&x), -9.0);
        assert_eq!(parse("2^3^2", 2).unwrap().eval(&x), 512.0);
        assert_eq!(parse("2*x1-x2/4", 2).unwrap().eval(&x), 5.5);
        assert_eq!(parse("x1^-1", 2).unwrap().eval(&x), 1.0 / 3.0);
        assert_eq!(parse("5e-3*x", 2).unwrap().eval(&x), 0.015);
        assert_eq!(parse("(1+x1)*(1-x2)", 2).unwrap().eval(&x), -4.0);
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(parse("x3", 2), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(parse("foo(x1)", 2), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(
            parse("sin(x1, x2)", 2),
            Err(ExprError::ArityMismatch { found: 2, .. })
        ));
        assert!(matches!(parse("(x1", 2), Err(ExprError::Syntax { position: 3, .. })));
        assert!(matches!(parse("x1 x2", 2), Err(ExprError::Syntax { position: 3, .. })));
        assert!(matches!(parse("x1 $", 2), Err(ExprError::Syntax { position: 3, .. })));
    }

    #[test]
    fn constant_folding_helpers() {
        assert!(parse("0", 2).unwrap().is_zero());
        assert!(parse("2*0", 2).unwrap().is_zero());
        assert!(!parse("x1*0", 2).unwrap().is_zero());
        assert_eq!(parse("step(1/3 - x1)", 2).unwrap().eval(&[0.2, 0.0]), 1.0);
        assert_eq!(parse("step(1/3 - x1)", 2).unwrap().eval(&[0.5, 0.0]), 0.0);
    }

    #[test]
    fn display_round_trips() {
        let src = "exp(x1)*sin(x2)/(2+cos(x1*x2))-x1^3";
        let e = parse(src, 2).unwrap();
        let again = parse(&e.to_string(), 2).unwrap();
        let p = [0.3, -0.7];
        assert_eq!(e.eval(&p), again.eval(&p));
    }
}
