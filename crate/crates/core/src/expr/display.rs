use std::fmt::{self, Write};

use num_traits::{Signed, Zero};

use super::{BinOp, Expression, Node, Rational};

// Binding strength, loosest first. Mirrors the parser's grammar levels.
const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POWER: u8 = 4;
const PREC_ATOM: u8 = 5;

/// Display adaptor that prints variables with caller-supplied names.
pub struct Named<'a, S: AsRef<str>> {
    expr: &'a Expression,
    names: &'a [S],
}

impl Expression {
    /// Prints the expression with the given variable names, in the DSL syntax.
    pub fn display<'a, S: AsRef<str>>(&'a self, names: &'a [S]) -> Named<'a, S> {
        Named { expr: self, names }
    }
}

impl<S: AsRef<str>> fmt::Display for Named<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.expr, &|f, i| match self.names.get(i) {
            Some(name) => f.write_str(name.as_ref()),
            None => write!(f, "x{}", i + 1),
        })
    }
}

/// Default rendering names variable `i` as `x{i+1}`.
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, &|f, i| write!(f, "x{}", i + 1))
    }
}

type VarWriter<'v> = dyn Fn(&mut fmt::Formatter<'_>, usize) -> fmt::Result + 'v;

fn precedence(e: &Expression) -> u8 {
    match e.node() {
        Node::Const(c) if c.is_negative() || !is_decimal(c) => PREC_SUM,
        Node::Const(_) | Node::Var(_) | Node::Call(..) => PREC_ATOM,
        Node::Neg(_) => PREC_UNARY,
        Node::Pow(..) => PREC_POWER,
        Node::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_SUM,
        Node::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_PRODUCT,
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expression, var: &VarWriter<'_>) -> fmt::Result {
    match e.node() {
        Node::Const(c) => write_const(f, c),
        Node::Var(i) => var(f, *i),
        Node::Neg(a) => {
            f.write_char('-')?;
            // `--x` is legal but `-(-x)` reads better
            let wrap = precedence(a) < PREC_UNARY
                || matches!(a.node(), Node::Neg(_))
                || a.as_const().is_some_and(|c| c.is_negative());
            write_child(f, a, wrap, var)
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a, var)?;
            f.write_char(')')
        }
        Node::Binary(op, a, b) => {
            let prec = match op {
                BinOp::Add | BinOp::Sub => PREC_SUM,
                BinOp::Mul | BinOp::Div => PREC_PRODUCT,
            };
            write_child(f, a, precedence(a) < prec, var)?;
            f.write_char(op.symbol())?;
            write_child(f, b, precedence(b) <= prec, var)
        }
        Node::Pow(a, q) => {
            write_child(f, a, precedence(a) <= PREC_POWER, var)?;
            f.write_char('^')?;
            if q.is_negative() || !is_decimal(q) {
                f.write_char('(')?;
                write_const(f, q)?;
                f.write_char(')')
            } else {
                write_const(f, q)
            }
        }
    }
}

fn write_child(
    f: &mut fmt::Formatter<'_>,
    e: &Expression,
    wrap: bool,
    var: &VarWriter<'_>,
) -> fmt::Result {
    if wrap {
        f.write_char('(')?;
        write_expr(f, e, var)?;
        f.write_char(')')
    } else {
        write_expr(f, e, var)
    }
}

/// True when the rational has a finite decimal expansion.
fn is_decimal(c: &Rational) -> bool {
    let mut d = *c.denom();
    while d % 2 == 0 {
        d /= 2;
    }
    while d % 5 == 0 {
        d /= 5;
    }
    d == 1
}

fn write_const(f: &mut fmt::Formatter<'_>, c: &Rational) -> fmt::Result {
    if c.is_negative() {
        f.write_char('-')?;
    }
    let magnitude = c.abs();
    if magnitude.is_integer() {
        return write!(f, "{}", magnitude.numer());
    }
    if !is_decimal(&magnitude) {
        return write!(f, "{}/{}", magnitude.numer(), magnitude.denom());
    }
    let (num, den) = (*magnitude.numer() as i128, *magnitude.denom() as i128);
    let mut digits = 0u32;
    let mut scale: i128 = 1;
    while (num * scale) % den != 0 {
        scale *= 10;
        digits += 1;
    }
    let scaled = num * scale / den;
    let divisor = 10i128.pow(digits);
    let (int_part, frac_part) = (scaled / divisor, scaled % divisor);
    if frac_part.is_zero() {
        write!(f, "{int_part}")
    } else {
        write!(f, "{int_part}.{frac_part:0width$}", width = digits as usize)
    }
}
