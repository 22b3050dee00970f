//! Parser for the vector-field description language.
//!
//! ```text
//! dim 2;
//! X1 = exp(x2)*D1;
//! X2 = exp(2*x2)*D1;
//! X3 = x1*D2;
//! step 2
//! ```
//!
//! Each field is a sum of `coefficient * D<i>` terms. Numeric literals are
//! read as exact rationals. `#` starts a comment that runs to end of line.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{Expr, Func, Rational};
use crate::system::{VectorField, VectorFieldSystem};

const MAX_DEPTH: usize = 200;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownFunction(String),
    VariableOutOfRange { index: u64, dim: usize },
    DirectionOutOfRange { index: u64, dim: usize },
}

/// A parse failure located at a 1-based line and column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::Syntax(msg) => f.write_str(msg),
            ParseErrorKind::UnknownFunction(name) => write!(f, "unknown function `{name}`"),
            ParseErrorKind::VariableOutOfRange { index, dim } => {
                write!(f, "variable x{index} out of range for dimension {dim}")
            }
            ParseErrorKind::DirectionOutOfRange { index, dim } => {
                write!(f, "direction D{index} out of range for dimension {dim}")
            }
        }
    }
}

impl core::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Rational),
    Int(u64),
    Var(u64),
    Dir(u64),
    Ident(String),
    Dim,
    Step,
    Func(Func),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eq,
    Semi,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
    ParseError { line, col, kind: ParseErrorKind::Syntax(msg.into()) }
}

fn parse_u64(digits: &str) -> Option<u64> {
    let mut v: u64 = 0;
    for b in digits.bytes() {
        v = v.checked_mul(10)?.checked_add(u64::from(b - b'0'))?;
    }
    Some(v)
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '=' => Some(Tok::Eq),
            ';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, line: tl, col: tc });
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let int_part: String = chars[start..i].iter().collect();
            let mut frac_part = String::new();
            let mut is_decimal = false;
            if i < chars.len() && chars[i] == '.' {
                is_decimal = true;
                i += 1;
                let fs = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                frac_part = chars[fs..i].iter().collect();
            }
            col += i - start;
            let overflow = || syntax(tl, tc, "numeric literal too large");
            let tok = if is_decimal {
                let digits = format!("{int_part}{frac_part}");
                let numer = parse_u64(&digits).filter(|v| *v <= i64::MAX as u64).ok_or_else(overflow)?;
                let denom = 10i64.checked_pow(frac_part.len() as u32).ok_or_else(overflow)?;
                Tok::Num(Rational::new(numer as i64, denom))
            } else {
                Tok::Int(parse_u64(&int_part).ok_or_else(overflow)?)
            };
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            let word: String = chars[start..i].iter().collect();
            let indexed = |prefix: char| -> Option<Option<u64>> {
                let rest = word.strip_prefix(prefix)?;
                if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                    Some(parse_u64(rest))
                } else {
                    None
                }
            };
            let tok = if word == "dim" {
                Tok::Dim
            } else if word == "step" {
                Tok::Step
            } else if let Some(f) = Func::from_name(&word) {
                Tok::Func(f)
            } else if let Some(idx) = indexed('x') {
                Tok::Var(idx.unwrap_or(u64::MAX))
            } else if let Some(idx) = indexed('D') {
                Tok::Dir(idx.unwrap_or(u64::MAX))
            } else {
                Tok::Ident(word)
            };
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        return Err(syntax(tl, tc, format!("unexpected character `{c}`")));
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

/// Value of a parsed subterm: either a scalar coefficient or a field.
#[derive(Clone)]
enum Val {
    Scalar(Expr),
    Field(Vec<Expr>),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dim: usize,
    depth: usize,
    allow_fields: bool,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, ParseError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(t.line, t.col, format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn expect_int(&mut self, what: &str) -> Result<u64, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Int(v) => Ok(v),
            other => Err(syntax(t.line, t.col, format!("expected {what}, found {}", describe(&other)))),
        }
    }

    fn enter(&mut self, at: &Token) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(syntax(at.line, at.col, "expression nested too deeply"));
        }
        Ok(())
    }

    fn sum(&mut self) -> Result<(Val, Token), ParseError> {
        let first = self.peek().clone();
        let mut acc = self.term()?;
        loop {
            let op = self.peek().clone();
            let negate = match op.tok {
                Tok::Plus => false,
                Tok::Minus => true,
                _ => break,
            };
            self.next();
            let rhs = self.term()?;
            let rhs = if negate { neg(rhs) } else { rhs };
            acc = add(acc, rhs, &op)?;
        }
        Ok((acc, first))
    }

    fn term(&mut self) -> Result<Val, ParseError> {
        let mut acc = self.unary()?;
        loop {
            let op = self.peek().clone();
            match op.tok {
                Tok::Star => {
                    self.next();
                    let rhs = self.unary()?;
                    acc = mul(acc, rhs, &op)?;
                }
                Tok::Slash => {
                    self.next();
                    let rhs = self.unary()?;
                    acc = div(acc, rhs, &op)?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Val, ParseError> {
        let t = self.peek().clone();
        if t.tok == Tok::Minus {
            self.next();
            self.enter(&t)?;
            let v = self.unary()?;
            self.depth -= 1;
            return Ok(neg(v));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Val, ParseError> {
        let mut base = self.primary()?;
        while self.peek().tok == Tok::Caret {
            let caret = self.next();
            let negative = if self.peek().tok == Tok::Minus {
                self.next();
                true
            } else {
                false
            };
            let k = self.expect_int("an integer exponent")?;
            let k = i32::try_from(k)
                .map_err(|_| syntax(caret.line, caret.col, "exponent too large"))?;
            let k = if negative { -k } else { k };
            base = match base {
                Val::Scalar(e) => Val::Scalar(Expr::powi(e, k)),
                Val::Field(_) => {
                    return Err(syntax(caret.line, caret.col, "cannot raise a direction to a power"))
                }
            };
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Val, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Int(v) => {
                let v = i64::try_from(v).map_err(|_| syntax(t.line, t.col, "numeric literal too large"))?;
                Ok(Val::Scalar(Expr::int(v)))
            }
            Tok::Num(r) => Ok(Val::Scalar(Expr::constant(r))),
            Tok::Var(i) => {
                if i == 0 || i > self.dim as u64 {
                    return Err(ParseError {
                        line: t.line,
                        col: t.col,
                        kind: ParseErrorKind::VariableOutOfRange { index: i, dim: self.dim },
                    });
                }
                Ok(Val::Scalar(Expr::var(i as usize - 1)))
            }
            Tok::Dir(i) => {
                if !self.allow_fields {
                    return Err(syntax(t.line, t.col, "direction symbols are not allowed here"));
                }
                if i == 0 || i > self.dim as u64 {
                    return Err(ParseError {
                        line: t.line,
                        col: t.col,
                        kind: ParseErrorKind::DirectionOutOfRange { index: i, dim: self.dim },
                    });
                }
                let mut v: Vec<Expr> = (0..self.dim).map(|_| Expr::zero()).collect();
                v[i as usize - 1] = Expr::one();
                Ok(Val::Field(v))
            }
            Tok::Func(f) => {
                self.expect(Tok::LParen, "`(`")?;
                self.enter(&t)?;
                let (arg, at) = self.sum()?;
                self.depth -= 1;
                self.expect(Tok::RParen, "`)`")?;
                match arg {
                    Val::Scalar(e) => Ok(Val::Scalar(Expr::func(f, e))),
                    Val::Field(_) => Err(syntax(at.line, at.col, "function argument must be scalar")),
                }
            }
            Tok::LParen => {
                self.enter(&t)?;
                let (v, _) = self.sum()?;
                self.depth -= 1;
                self.expect(Tok::RParen, "`)`")?;
                Ok(v)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    Err(ParseError { line: t.line, col: t.col, kind: ParseErrorKind::UnknownFunction(name) })
                } else {
                    Err(syntax(t.line, t.col, format!("unknown identifier `{name}`")))
                }
            }
            other => Err(syntax(t.line, t.col, format!("expected an operand, found {}", describe(&other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(r) => format!("number {r}"),
        Tok::Int(v) => format!("integer {v}"),
        Tok::Var(i) => format!("variable x{i}"),
        Tok::Dir(i) => format!("direction D{i}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Dim => "`dim`".to_string(),
        Tok::Step => "`step`".to_string(),
        Tok::Func(f) => format!("`{}`", f.name()),
        Tok::Plus => "`+`".to_string(),
        Tok::Minus => "`-`".to_string(),
        Tok::Star => "`*`".to_string(),
        Tok::Slash => "`/`".to_string(),
        Tok::Caret => "`^`".to_string(),
        Tok::LParen => "`(`".to_string(),
        Tok::RParen => "`)`".to_string(),
        Tok::Eq => "`=`".to_string(),
        Tok::Semi => "`;`".to_string(),
        Tok::Eof => "end of input".to_string(),
    }
}

fn neg(v: Val) -> Val {
    match v {
        Val::Scalar(e) => Val::Scalar(Expr::neg(e)),
        Val::Field(c) => Val::Field(c.into_iter().map(Expr::neg).collect()),
    }
}

fn add(a: Val, b: Val, at: &Token) -> Result<Val, ParseError> {
    match (a, b) {
        (Val::Scalar(x), Val::Scalar(y)) => Ok(Val::Scalar(Expr::add(x, y))),
        (Val::Field(x), Val::Field(y)) => {
            Ok(Val::Field(x.into_iter().zip(y).map(|(p, q)| Expr::add(p, q)).collect()))
        }
        _ => Err(syntax(at.line, at.col, "cannot add a scalar to a direction term")),
    }
}

fn mul(a: Val, b: Val, at: &Token) -> Result<Val, ParseError> {
    match (a, b) {
        (Val::Scalar(x), Val::Scalar(y)) => Ok(Val::Scalar(Expr::mul(x, y))),
        (Val::Scalar(s), Val::Field(v)) => {
            Ok(Val::Field(v.into_iter().map(|c| Expr::mul(s.clone(), c)).collect()))
        }
        (Val::Field(v), Val::Scalar(s)) => {
            Ok(Val::Field(v.into_iter().map(|c| Expr::mul(c, s.clone())).collect()))
        }
        (Val::Field(_), Val::Field(_)) => {
            Err(syntax(at.line, at.col, "cannot multiply two direction terms"))
        }
    }
}

fn div(a: Val, b: Val, at: &Token) -> Result<Val, ParseError> {
    match (a, b) {
        (Val::Scalar(x), Val::Scalar(y)) => Ok(Val::Scalar(Expr::div(x, y))),
        (Val::Field(v), Val::Scalar(s)) => {
            Ok(Val::Field(v.into_iter().map(|c| Expr::div(c, s.clone())).collect()))
        }
        _ => Err(syntax(at.line, at.col, "cannot divide by a direction term")),
    }
}

/// Parses a complete system description.
pub fn parse_system(source: &str) -> Result<VectorFieldSystem, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, dim: 0, depth: 0, allow_fields: true };
    p.expect(Tok::Dim, "`dim`")?;
    let dim_tok = p.peek().clone();
    let n = p.expect_int("the dimension")?;
    if !(2..=16).contains(&n) {
        return Err(syntax(dim_tok.line, dim_tok.col, "dimension must be between 2 and 16"));
    }
    p.dim = n as usize;
    p.expect(Tok::Semi, "`;` after the dimension")?;

    let mut names: Vec<String> = Vec::new();
    let mut fields = Vec::new();
    let mut step = None;
    loop {
        let t = p.next();
        match t.tok {
            Tok::Ident(ref name) => {
                if names.iter().any(|n| n == name) {
                    return Err(syntax(t.line, t.col, format!("field `{name}` defined twice")));
                }
                p.expect(Tok::Eq, "`=`")?;
                let (v, at) = p.sum()?;
                let coeffs = match v {
                    Val::Field(c) => c,
                    Val::Scalar(e) if e.is_zero() => (0..p.dim).map(|_| Expr::zero()).collect(),
                    Val::Scalar(_) => {
                        return Err(syntax(at.line, at.col, "a field must be a sum of coefficient*D<i> terms"))
                    }
                };
                names.push(name.clone());
                fields.push(VectorField::new(coeffs));
            }
            Tok::Step if !fields.is_empty() => {
                let st = p.peek().clone();
                let s = p.expect_int("the step")?;
                if s == 0 || s > 64 {
                    return Err(syntax(st.line, st.col, "step must be between 1 and 64"));
                }
                step = Some(s as usize);
                if p.peek().tok == Tok::Semi {
                    p.next();
                }
                let end = p.next();
                if end.tok != Tok::Eof {
                    return Err(syntax(end.line, end.col, "`step` must be the last declaration"));
                }
                break;
            }
            Tok::Eof if !fields.is_empty() => break,
            other => {
                let what = if fields.is_empty() { "a field definition" } else { "a field definition or `step`" };
                return Err(syntax(t.line, t.col, format!("expected {what}, found {}", describe(&other))));
            }
        }
        let t = p.next();
        match t.tok {
            Tok::Semi => {}
            Tok::Eof => break,
            other => return Err(syntax(t.line, t.col, format!("expected `;`, found {}", describe(&other)))),
        }
    }
    VectorFieldSystem::new(p.dim, names, fields, step)
        .map_err(|e| syntax(1, 1, e.to_string()))
}

/// Parses a scalar expression in the variables `x1..x{dim}`.
pub fn parse_expr(source: &str, dim: usize) -> Result<Expr, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, dim, depth: 0, allow_fields: false };
    let (v, at) = p.sum()?;
    let end = p.next();
    if end.tok != Tok::Eof {
        return Err(syntax(end.line, end.col, format!("unexpected {}", describe(&end.tok))));
    }
    match v {
        Val::Scalar(e) => Ok(e),
        Val::Field(_) => Err(syntax(at.line, at.col, "expected a scalar expression")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_are_exact() {
        let e = parse_expr("0.25*x1", 2).unwrap();
        assert_eq!(format!("{e}"), "((1/4)*x1)");
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = parse_expr("-x1^2", 2).unwrap();
        assert_eq!(e.evaluate(&[3.0, 0.0]).unwrap(), -9.0);
    }

    #[test]
    fn errors_are_located() {
        let err = parse_system("dim 2;\nX1 = D1;\nX2 = foo(x1)*D2").unwrap_err();
        assert_eq!((err.line, err.col), (3, 6));
        assert_eq!(err.kind, ParseErrorKind::UnknownFunction("foo".into()));
        let err = parse_system("dim 2; X1 = x3*D1").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::VariableOutOfRange { index: 3, dim: 2 });
        let err = parse_system("dim 2; X1 = D1 + x1").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn step_and_trailing_semicolon() {
        let s = parse_system("dim 2; X1 = D1; X2 = x1*D2; step 2;").unwrap();
        assert_eq!(s.step_hint(), Some(2));
        let s = parse_system("dim 2; X1 = D1; X2 = D2;").unwrap();
        assert_eq!(s.count(), 2);
    }
}
