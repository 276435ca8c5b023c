//! Recursive-descent parser for the expression DSL.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" unary)?          exponent must be a rational constant
//! primary := number | ident | ident "(" expr ")" | "(" expr ")"
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so `-x^2` is
//! `-(x^2)` and `a^2^3` is `a^(2^3)`.

use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Zero};
use thiserror::Error;

use super::{checked_powi, BinOp, Expression, Func, Node, Rational, FUNCTION_NAMES};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("column {column}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        column: usize,
        found: String,
        expected: Vec<&'static str>,
    },
    #[error("column {column}: unknown identifier `{name}`")]
    UnknownIdentifier { column: usize, name: String },
    #[error("column {column}: malformed number `{text}`")]
    MalformedNumber { column: usize, text: String },
    #[error("column {column}: exponent must be a rational constant")]
    NonConstantExponent { column: usize },
    #[error("invalid variable list: {0}")]
    InvalidVariables(String),
}

impl ParseError {
    /// One-based column of the offending token, when there is one.
    pub fn column(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { column, .. }
            | ParseError::UnknownIdentifier { column, .. }
            | ParseError::MalformedNumber { column, .. }
            | ParseError::NonConstantExponent { column } => Some(*column),
            ParseError::InvalidVariables(_) => None,
        }
    }

    /// Shifts the reported column, for sources embedded in a longer line.
    pub fn offset_columns(mut self, by: usize) -> Self {
        match &mut self {
            ParseError::Syntax { column, .. }
            | ParseError::UnknownIdentifier { column, .. }
            | ParseError::MalformedNumber { column, .. }
            | ParseError::NonConstantExponent { column } => *column += by,
            ParseError::InvalidVariables(_) => {}
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(Rational),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Number(_) => "number".into(),
            Tok::Ident(name) => format!("`{name}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn column(&self, byte: usize) -> usize {
        self.src[..byte].chars().count() + 1
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Returns the next token and the byte offset it starts at.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            let len = number_len(rest);
            let text = &rest[..len];
            self.pos += len;
            let value = parse_number(text).ok_or_else(|| ParseError::MalformedNumber {
                column: self.column(start),
                text: text.to_string(),
            })?;
            return Ok((Tok::Number(value), start));
        }
        if c.is_alphabetic() || c == '_' {
            let len = rest
                .char_indices()
                .find(|(_, ch)| !(ch.is_alphanumeric() || *ch == '_'))
                .map_or(rest.len(), |(i, _)| i);
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        }
        self.pos += c.len_utf8();
        Ok((Tok::Sym(c), start))
    }
}

/// Length of the longest prefix that looks like a numeric literal, including
/// trailing alphanumerics so that `2x` or `1e` are reported as malformed.
fn number_len(s: &str) -> usize {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let exp_sign = (b == b'+' || b == b'-') && i > 0 && matches!(bytes[i - 1], b'e' | b'E');
        if b.is_ascii_alphanumeric() || b == b'.' || b == b'_' || exp_sign {
            i += 1;
        } else {
            break;
        }
    }
    i
}

/// Exact conversion of `digits[.digits][(e|E)[+-]digits]` to a rational.
fn parse_number(text: &str) -> Option<Rational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int_part.is_empty()
        || !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
        || (mantissa.contains('.') && frac_part.is_empty())
    {
        return None;
    }
    let digits: i64 = format!("{int_part}{frac_part}").parse().ok()?;
    let scale = exponent.checked_sub(i32::try_from(frac_part.len()).ok()?)?;
    let ten = Rational::from_integer(10);
    let factor = checked_powi(&ten, i64::from(scale))?;
    Rational::from_integer(digits).checked_mul(&factor)
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    tok_start: usize,
    vars: &'a [&'a str],
}

/// Parses `source` over the variable list `vars` (variable `i` is `Var(i)`).
pub fn parse<S: AsRef<str>>(source: &str, vars: &[S]) -> Result<Expression, ParseError> {
    let names: Vec<&str> = vars.iter().map(AsRef::as_ref).collect();
    validate_vars(&names)?;
    let mut parser = Parser {
        lexer: Lexer {
            src: source,
            pos: 0,
        },
        tok: Tok::End,
        tok_start: 0,
        vars: &names,
    };
    parser.advance()?;
    let e = parser.expr()?;
    if parser.tok != Tok::End {
        return Err(parser.unexpected(vec!["operator", "end of input"]));
    }
    Ok(e)
}

fn validate_vars(names: &[&str]) -> Result<(), ParseError> {
    if names.is_empty() {
        return Err(ParseError::InvalidVariables("no variables declared".into()));
    }
    for (i, name) in names.iter().enumerate() {
        let valid = name
            .chars()
            .next()
            .is_some_and(|c| c.is_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_alphanumeric() || c == '_');
        if !valid {
            return Err(ParseError::InvalidVariables(format!(
                "`{name}` is not an identifier"
            )));
        }
        if FUNCTION_NAMES.contains(name) {
            return Err(ParseError::InvalidVariables(format!(
                "`{name}` is a function name"
            )));
        }
        if names[..i].contains(name) {
            return Err(ParseError::InvalidVariables(format!(
                "`{name}` declared twice"
            )));
        }
    }
    Ok(())
}

impl Parser<'_> {
    fn advance(&mut self) -> Result<(), ParseError> {
        let (tok, start) = self.lexer.next()?;
        self.tok = tok;
        self.tok_start = start;
        Ok(())
    }

    fn column(&self) -> usize {
        self.lexer.column(self.tok_start)
    }

    fn unexpected(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError::Syntax {
            column: self.column(),
            found: self.tok.describe(),
            expected,
        }
    }

    fn eat(&mut self, c: char) -> Result<bool, ParseError> {
        if self.tok == Tok::Sym(c) {
            self.advance()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+')? {
                BinOp::Add
            } else if self.eat('-')? {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expression::from_node(Node::Binary(op, lhs, rhs));
        }
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*')? {
                BinOp::Mul
            } else if self.eat('/')? {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expression::from_node(Node::Binary(op, lhs, rhs));
        }
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if self.eat('-')? {
            let inner = self.unary()?;
            return Ok(Expression::from_node(Node::Neg(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let base = self.primary()?;
        if !self.eat('^')? {
            return Ok(base);
        }
        let column = self.column();
        let exponent = self.unary()?;
        let q = fold_constant(&exponent).ok_or(ParseError::NonConstantExponent { column })?;
        Ok(Expression::from_node(Node::Pow(base, q)))
    }

    fn primary(&mut self) -> Result<Expression, ParseError> {
        match self.tok.clone() {
            Tok::Number(value) => {
                self.advance()?;
                Ok(Expression::constant(value))
            }
            Tok::Ident(name) => {
                let column = self.column();
                self.advance()?;
                if let Some(func) = Func::from_name(&name) {
                    if !self.eat('(')? {
                        return Err(self.unexpected(vec!["`(`"]));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')')? {
                        return Err(self.unexpected(vec!["`)`"]));
                    }
                    return Ok(Expression::from_node(Node::Call(func, arg)));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Expression::var(i)),
                    None => Err(ParseError::UnknownIdentifier { column, name }),
                }
            }
            Tok::Sym('(') => {
                self.advance()?;
                let inner = self.expr()?;
                if !self.eat(')')? {
                    return Err(self.unexpected(vec!["`)`", "operator"]));
                }
                Ok(inner)
            }
            _ => Err(self.unexpected(vec!["number", "identifier", "`(`", "`-`"])),
        }
    }
}

/// Exact value of a variable-free arithmetic tree, if it has one.
fn fold_constant(e: &Expression) -> Option<Rational> {
    match e.node() {
        Node::Const(c) => Some(*c),
        Node::Var(_) | Node::Call(..) => None,
        Node::Neg(a) => Some(-fold_constant(a)?),
        Node::Binary(op, a, b) => {
            let (x, y) = (fold_constant(a)?, fold_constant(b)?);
            match op {
                BinOp::Add => x.checked_add(&y),
                BinOp::Sub => x.checked_sub(&y),
                BinOp::Mul => x.checked_mul(&y),
                BinOp::Div if y.is_zero() => None,
                BinOp::Div => x.checked_div(&y),
            }
        }
        Node::Pow(a, q) if q.is_integer() => checked_powi(&fold_constant(a)?, *q.numer()),
        Node::Pow(..) => None,
    }
}
