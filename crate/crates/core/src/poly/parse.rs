//! Recursive-descent parser for the textual polynomial syntax:
//! integer/decimal/rational literals, variables (optionally primed, `x1'`),
//! `+ - * / ^` and parentheses. Division is only allowed by nonzero constants.

use std::sync::Arc;

use num::traits::{One, Zero};

use super::rational::parse_decimal;
use super::{PolyError, Polynomial, Rational, Vars};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(Rational),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, PolyError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent only when followed by a digit (optionally signed)
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value = parse_decimal(text)
                .ok_or_else(|| PolyError::Parse { column: start + 1, message: format!("malformed number `{text}`") })?;
            out.push((start, Token::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'\'' {
                i += 1;
            }
            out.push((start, Token::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Token::Op(c)));
            i += 1;
        } else {
            return Err(PolyError::Parse { column: i + 1, message: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    len: usize,
    vars: Vars,
    /// When false, unknown identifiers are errors; otherwise they are appended.
    auto: bool,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn column(&self) -> usize {
        self.tokens.get(self.pos).map(|(c, _)| c + 1).unwrap_or(self.len + 1)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, PolyError> {
        Err(PolyError::Parse { column: self.column(), message: message.into() })
    }

    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some((_, Token::Op(c))) => Some(*c),
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == '+' { acc.add(&rhs) } else { acc.sub(&rhs) };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            if op == '*' {
                acc = acc.mul(&rhs);
            } else {
                if rhs.total_degree() > 0 {
                    return self.err("division by a non-constant polynomial");
                }
                let c = rhs.coefficient(&super::Monomial::one());
                if c.is_zero() {
                    return self.err("division by zero");
                }
                acc = acc.scale(&(Rational::one() / c));
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = match self.tokens.get(self.pos) {
                Some((_, Token::Num(n))) if n.is_integer() && *n >= Rational::zero() => n.to_integer(),
                _ => return self.err("exponent must be a non-negative integer literal"),
            };
            self.pos += 1;
            let exp: u32 = match exp.try_into() {
                Ok(e) if e <= 1000 => e,
                _ => return self.err("exponent too large"),
            };
            return Ok(base.pow(exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        let Some((_, tok)) = self.tokens.get(self.pos).cloned() else {
            return self.err(format!("unexpected end of input in `{}`", self.src));
        };
        match tok {
            Token::Num(n) => {
                self.pos += 1;
                Ok(Polynomial::constant(self.vars.clone(), n))
            }
            Token::Ident(name) => {
                let idx = match self.vars.iter().position(|v| *v == name) {
                    Some(i) => i,
                    None if self.auto => {
                        let mut v = self.vars.as_ref().clone();
                        v.push(name.clone());
                        self.vars = Arc::new(v);
                        self.vars.len() - 1
                    }
                    None => return self.err(format!("unknown variable `{name}`")),
                };
                self.pos += 1;
                Ok(Polynomial::var(self.vars.clone(), idx))
            }
            Token::Op('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek_op() != Some(')') {
                    return self.err("expected `)`");
                }
                self.pos += 1;
                Ok(inner)
            }
            Token::Op(c) => self.err(format!("unexpected `{c}`")),
        }
    }
}

fn run(src: &str, vars: Vars, auto: bool) -> Result<Polynomial, PolyError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens, pos: 0, len: src.len(), vars, auto, src };
    if parser.tokens.is_empty() {
        return parser.err("empty polynomial");
    }
    let p = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return parser.err("unexpected trailing input");
    }
    Ok(p.with_vars(&parser.vars))
}

/// Parses `src` over a declared variable list; unknown identifiers are errors.
pub fn parse_poly(src: &str, vars: &Vars) -> Result<Polynomial, PolyError> {
    run(src, vars.clone(), false)
}

/// Parses `src`, collecting variables in order of first appearance.
pub fn parse_poly_auto(src: &str) -> Result<Polynomial, PolyError> {
    run(src, Arc::new(Vec::new()), true)
}
