//! Scalar expression DSL shared by every other module.
//!
//! An [`Expression`] is an immutable tree over positional variables and exact
//! rational constants. Trees are cheap to clone (nodes are reference counted)
//! and safe to share between threads.
//!
//! Construction through the arithmetic operators and the helper constructors
//! applies a small set of local rewrites (constant folding, `0*e -> 0`,
//! `1*e -> e`, `e+0 -> e`, ...). The parser builds trees verbatim so that a
//! printed expression parses back to the same structure.

mod diff;
mod display;
mod parser;

use std::fmt;
use std::ops::{Add, Deref, Div, Mul, Neg, Sub};
use std::sync::Arc;

use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use diff::check_derivative_numerically;
pub use display::Named;
pub use parser::{parse, ParseError};

/// Exact rational constant.
pub type Rational = num_rational::Rational64;

/// Names of the built-in unary functions.
pub const FUNCTION_NAMES: [&str; 6] = ["sin", "cos", "exp", "ln", "sqrt", "abs"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// One node of an expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(Rational),
    /// Zero-based index into the owning variable list.
    Var(usize),
    Neg(Expression),
    Call(Func, Expression),
    Binary(BinOp, Expression, Expression),
    /// Power with a constant rational exponent.
    Pow(Expression, Rational),
}

/// Immutable symbolic scalar expression.
#[derive(Clone, PartialEq)]
pub struct Expression(Arc<Node>);

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&*self.0, f)
    }
}

/// Why evaluation failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainViolation {
    #[error("division by zero in `{node}`")]
    DivisionByZero { node: String },
    #[error("logarithm of non-positive value {value} in `{node}`")]
    LogNonPositive { node: String, value: f64 },
    #[error("square root of negative value {value} in `{node}`")]
    SqrtNegative { node: String, value: f64 },
    #[error("power of negative base {value} with even-denominator exponent in `{node}`")]
    NegativeBaseRoot { node: String, value: f64 },
    #[error("non-finite result in `{node}`")]
    NonFinite { node: String },
    #[error("point has {got} coordinates but expression references variable {index}")]
    MissingCoordinate { index: usize, got: usize },
}

/// Evaluation failure: which node failed, and at which point.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain violation at {point:?}: {violation}")]
pub struct EvalError {
    pub violation: DomainViolation,
    pub point: Vec<f64>,
}

/// A finite coordinate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

#[derive(Debug, Clone, PartialEq, Error)]
#[error("point coordinate {index} is not finite ({value})")]
pub struct NonFinitePoint {
    pub index: usize,
    pub value: f64,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, NonFinitePoint> {
        if let Some((index, &value)) = coords.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(NonFinitePoint { index, value });
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn checked_powi(base: &Rational, exp: i64) -> Option<Rational> {
    if (exp < 0 && base.is_zero()) || exp.unsigned_abs() > 64 {
        return None;
    }
    let mut acc = Rational::one();
    for _ in 0..exp.unsigned_abs() {
        acc = acc.checked_mul(base)?;
    }
    if exp < 0 {
        Rational::one().checked_div(&acc)
    } else {
        Some(acc)
    }
}

impl Expression {
    /// Wraps a node without any rewriting.
    pub fn from_node(node: Node) -> Self {
        Expression(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: Rational) -> Self {
        Self::from_node(Node::Const(value))
    }

    pub fn integer(value: i64) -> Self {
        Self::constant(Rational::from_integer(value))
    }

    pub fn zero() -> Self {
        Self::integer(0)
    }

    pub fn one() -> Self {
        Self::integer(1)
    }

    pub fn var(index: usize) -> Self {
        Self::from_node(Node::Var(index))
    }

    pub fn as_const(&self) -> Option<Rational> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_one())
    }

    /// Function application with constant folding at the trivial points.
    pub fn call(func: Func, arg: Expression) -> Self {
        if let Some(c) = arg.as_const() {
            let folded = match func {
                Func::Sin | Func::Sqrt if c.is_zero() => Some(Rational::zero()),
                Func::Cos | Func::Exp if c.is_zero() => Some(Rational::one()),
                Func::Ln | Func::Sqrt if c.is_one() => {
                    Some(Rational::from_integer(if func == Func::Ln { 0 } else { 1 }))
                }
                Func::Abs => Some(c.abs()),
                _ => None,
            };
            if let Some(v) = folded {
                return Self::constant(v);
            }
        }
        Self::from_node(Node::Call(func, arg))
    }

    pub fn sin(self) -> Self {
        Self::call(Func::Sin, self)
    }

    pub fn cos(self) -> Self {
        Self::call(Func::Cos, self)
    }

    pub fn exp(self) -> Self {
        Self::call(Func::Exp, self)
    }

    pub fn ln(self) -> Self {
        Self::call(Func::Ln, self)
    }

    pub fn sqrt(self) -> Self {
        Self::call(Func::Sqrt, self)
    }

    pub fn abs(self) -> Self {
        Self::call(Func::Abs, self)
    }

    /// `self ^ exponent` with folding of trivial exponents and constant bases.
    pub fn pow(self, exponent: Rational) -> Self {
        if exponent.is_zero() {
            return Self::one();
        }
        if exponent.is_one() {
            return self;
        }
        if let (Some(c), true) = (self.as_const(), exponent.is_integer()) {
            if let Some(v) = checked_powi(&c, *exponent.numer()) {
                return Self::constant(v);
            }
        }
        Self::from_node(Node::Pow(self, exponent))
    }

    pub fn powi(self, exponent: i64) -> Self {
        self.pow(Rational::from_integer(exponent))
    }

    fn binary(op: BinOp, lhs: Expression, rhs: Expression) -> Self {
        if let (Some(a), Some(b)) = (lhs.as_const(), rhs.as_const()) {
            let folded = match op {
                BinOp::Add => a.checked_add(&b),
                BinOp::Sub => a.checked_sub(&b),
                BinOp::Mul => a.checked_mul(&b),
                BinOp::Div if !b.is_zero() => a.checked_div(&b),
                BinOp::Div => None,
            };
            if let Some(v) = folded {
                return Self::constant(v);
            }
        }
        // constants are collected to the left of products: c1*(c2*e) -> (c1*c2)*e
        match (op, lhs.as_const(), rhs.as_const()) {
            (BinOp::Mul, None, Some(_)) => return Self::binary(op, rhs, lhs),
            (BinOp::Div, None, Some(c)) if !c.is_zero() => {
                if let Some(inv) = Rational::one().checked_div(&c) {
                    return Self::binary(BinOp::Mul, Self::constant(inv), lhs);
                }
            }
            (BinOp::Mul, Some(a), None) => {
                if let Node::Binary(BinOp::Mul, inner, e) = rhs.node() {
                    if let Some(prod) = inner.as_const().and_then(|b| a.checked_mul(&b)) {
                        return Self::binary(BinOp::Mul, Self::constant(prod), e.clone());
                    }
                }
            }
            _ => {}
        }
        match op {
            BinOp::Add if lhs.is_zero() => return rhs,
            BinOp::Add | BinOp::Sub if rhs.is_zero() => return lhs,
            BinOp::Sub if lhs.is_zero() => return -rhs,
            BinOp::Mul if lhs.is_zero() || rhs.is_zero() => return Self::zero(),
            BinOp::Mul if lhs.is_one() => return rhs,
            BinOp::Mul | BinOp::Div if rhs.is_one() => return lhs,
            BinOp::Mul if lhs.as_const() == Some(-Rational::one()) => return -rhs,
            BinOp::Div if lhs.is_zero() && !rhs.is_zero() => return Self::zero(),
            _ => {}
        }
        Self::from_node(Node::Binary(op, lhs, rhs))
    }

    /// Rebuilds the tree bottom-up through the simplifying constructors.
    pub fn simplify(&self) -> Self {
        match self.node() {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Neg(a) => -a.simplify(),
            Node::Call(f, a) => Self::call(*f, a.simplify()),
            Node::Binary(op, a, b) => Self::binary(*op, a.simplify(), b.simplify()),
            Node::Pow(a, q) => a.simplify().pow(*q),
        }
    }

    /// Replaces every `Var(i)` by `values[i]`, simplifying on the way up.
    ///
    /// Panics if the expression references an index outside `values`.
    pub fn substitute(&self, values: &[Expression]) -> Self {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(i) => values[*i].clone(),
            Node::Neg(a) => -a.substitute(values),
            Node::Call(f, a) => Self::call(*f, a.substitute(values)),
            Node::Binary(op, a, b) => Self::binary(*op, a.substitute(values), b.substitute(values)),
            Node::Pow(a, q) => a.substitute(values).pow(*q),
        }
    }

    /// Largest referenced variable index, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self.node() {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Call(_, a) | Node::Pow(a, _) => a.max_var(),
            Node::Binary(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    pub fn uses_var(&self, index: usize) -> bool {
        match self.node() {
            Node::Const(_) => false,
            Node::Var(i) => *i == index,
            Node::Neg(a) | Node::Call(_, a) | Node::Pow(a, _) => a.uses_var(index),
            Node::Binary(_, a, b) => a.uses_var(index) || b.uses_var(index),
        }
    }

    /// True when no variable occurs in the tree.
    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    /// Double-precision evaluation at `point`.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, EvalError> {
        self.eval_node(point).map_err(|violation| EvalError {
            violation,
            point: point.to_vec(),
        })
    }

    fn eval_node(&self, p: &[f64]) -> Result<f64, DomainViolation> {
        let value = match self.node() {
            Node::Const(c) => rational_to_f64(c),
            Node::Var(i) => *p.get(*i).ok_or(DomainViolation::MissingCoordinate {
                index: *i,
                got: p.len(),
            })?,
            Node::Neg(a) => -a.eval_node(p)?,
            Node::Call(func, a) => {
                let x = a.eval_node(p)?;
                match func {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Ln if x <= 0.0 => {
                        return Err(DomainViolation::LogNonPositive {
                            node: self.to_string(),
                            value: x,
                        })
                    }
                    Func::Ln => x.ln(),
                    Func::Sqrt if x < 0.0 => {
                        return Err(DomainViolation::SqrtNegative {
                            node: self.to_string(),
                            value: x,
                        })
                    }
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                }
            }
            Node::Binary(op, a, b) => {
                let x = a.eval_node(p)?;
                let y = b.eval_node(p)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div if y == 0.0 => {
                        return Err(DomainViolation::DivisionByZero {
                            node: self.to_string(),
                        })
                    }
                    BinOp::Div => x / y,
                }
            }
            Node::Pow(a, q) => {
                let x = a.eval_node(p)?;
                eval_pow(x, q).ok_or_else(|| {
                    if x == 0.0 {
                        DomainViolation::DivisionByZero {
                            node: self.to_string(),
                        }
                    } else {
                        DomainViolation::NegativeBaseRoot {
                            node: self.to_string(),
                            value: x,
                        }
                    }
                })?
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(DomainViolation::NonFinite {
                node: self.to_string(),
            })
        }
    }
}

fn eval_pow(x: f64, q: &Rational) -> Option<f64> {
    let (num, den) = (*q.numer(), *q.denom());
    if x == 0.0 && num < 0 {
        return None;
    }
    if den == 1 {
        return Some(match i32::try_from(num) {
            Ok(k) => x.powi(k),
            Err(_) => x.powf(num as f64),
        });
    }
    let e = rational_to_f64(q);
    if x >= 0.0 {
        Some(x.powf(e))
    } else if den % 2 == 1 {
        let magnitude = (-x).powf(e);
        Some(if num % 2 == 0 { magnitude } else { -magnitude })
    } else {
        None
    }
}

impl Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        match self.node() {
            Node::Const(c) => Expression::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expression::from_node(Node::Neg(self)),
        }
    }
}

impl Neg for &Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        -self.clone()
    }
}

macro_rules! binary_ops {
    ($($trait:ident, $method:ident, $op:expr);*) => {$(
        impl $trait for Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                Expression::binary($op, self, rhs)
            }
        }
        impl $trait<&Expression> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                Expression::binary($op, self.clone(), rhs.clone())
            }
        }
        impl $trait<&Expression> for Expression {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                Expression::binary($op, self, rhs.clone())
            }
        }
        impl $trait<Expression> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                Expression::binary($op, self.clone(), rhs)
            }
        }
    )*};
}

binary_ops!(Add, add, BinOp::Add; Sub, sub, BinOp::Sub; Mul, mul, BinOp::Mul; Div, div, BinOp::Div);

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str, vars: &[&str]) -> Expression {
        parse(src, vars).unwrap()
    }

    #[test]
    fn evaluates_example_hamiltonian() {
        let h = p("(x1^2 + x2^2)/2", &["x1", "x2"]);
        assert_eq!(h.evaluate(&[1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn constant_zero_evaluates_to_zero() {
        assert_eq!(Expression::zero().evaluate(&[3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn division_by_zero_is_reported_with_point() {
        let e = p("1/x1", &["x1", "x2"]);
        let err = e.evaluate(&[0.0, 1.0]).unwrap_err();
        assert_eq!(err.point, vec![0.0, 1.0]);
        assert!(matches!(
            err.violation,
            DomainViolation::DivisionByZero { .. }
        ));
    }

    #[test]
    fn ln_and_sqrt_domains() {
        let vars = ["x"];
        assert!(matches!(
            p("ln(x)", &vars).evaluate(&[0.0]).unwrap_err().violation,
            DomainViolation::LogNonPositive { .. }
        ));
        assert!(matches!(
            p("sqrt(x)", &vars).evaluate(&[-1.0]).unwrap_err().violation,
            DomainViolation::SqrtNegative { .. }
        ));
        assert!(matches!(
            p("x^0.5", &vars).evaluate(&[-1.0]).unwrap_err().violation,
            DomainViolation::NegativeBaseRoot { .. }
        ));
        assert!(matches!(
            p("x^(-2)", &vars).evaluate(&[0.0]).unwrap_err().violation,
            DomainViolation::DivisionByZero { .. }
        ));
    }

    #[test]
    fn odd_root_of_negative_base_is_real() {
        let e = p("x^(1/3)", &["x"]);
        assert!((e.evaluate(&[-8.0]).unwrap() + 2.0).abs() < 1e-12);
        let e = p("x^(2/3)", &["x"]);
        assert!((e.evaluate(&[-8.0]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn overflow_is_a_domain_violation() {
        let e = p("exp(x)", &["x"]);
        assert!(matches!(
            e.evaluate(&[1000.0]).unwrap_err().violation,
            DomainViolation::NonFinite { .. }
        ));
    }

    #[test]
    fn local_rewrites() {
        let x = Expression::var(0);
        assert_eq!(&x * Expression::zero(), Expression::zero());
        assert_eq!(Expression::one() * &x, x);
        assert_eq!(&x + Expression::zero(), x);
        assert_eq!(&x - Expression::zero(), x);
        assert_eq!(-(-x.clone()), x);
        assert_eq!(x.clone().powi(1), x);
        assert_eq!(x.clone().powi(0), Expression::one());
        assert_eq!(
            Expression::integer(2) * Expression::integer(3) + Expression::integer(1),
            Expression::integer(7)
        );
        assert_eq!(
            Expression::integer(1) / Expression::integer(3),
            Expression::constant(Rational::new(1, 3))
        );
        // division by a zero constant is left for evaluation to reject
        let q = Expression::integer(1) / Expression::integer(0);
        assert!(q.evaluate(&[]).is_err());
    }

    #[test]
    fn substitute_replaces_variables() {
        let phi = p("z1*z2^2", &["z1", "z2"]);
        let h = p("x1^2/2 + x2^2", &["x1", "x2", "x3"]);
        let c = p("(x1^2+x2^2+x3^2)/2", &["x1", "x2", "x3"]);
        let hstar = phi.substitute(&[h.clone(), c.clone()]);
        let pt = [0.7, 1.1, 1.9];
        let expected = h.evaluate(&pt).unwrap() * c.evaluate(&pt).unwrap().powi(2);
        assert!((hstar.evaluate(&pt).unwrap() - expected).abs() < 1e-14 * expected);
    }

    #[test]
    fn var_queries() {
        let e = p("x1 + sin(x3)", &["x1", "x2", "x3"]);
        assert_eq!(e.max_var(), Some(2));
        assert!(e.uses_var(0) && !e.uses_var(1));
        assert!(p("2^3", &["x"]).is_constant());
    }

    #[test]
    fn point_rejects_non_finite() {
        assert!(Point::new(vec![1.0, f64::NAN]).is_err());
        assert_eq!(Point::new(vec![1.0, 2.5]).unwrap().to_string(), "1,2.5");
    }
}
