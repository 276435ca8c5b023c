use num_traits::One;

use super::{BinOp, EvalError, Expression, Func, Node, Rational};

impl Expression {
    /// Exact partial derivative with respect to variable `var`.
    pub fn differentiate(&self, var: usize) -> Expression {
        match self.node() {
            Node::Const(_) => Expression::zero(),
            Node::Var(i) if *i == var => Expression::one(),
            Node::Var(_) => Expression::zero(),
            Node::Neg(a) => -a.differentiate(var),
            Node::Binary(op, a, b) => {
                let (da, db) = (a.differentiate(var), b.differentiate(var));
                match op {
                    BinOp::Add => da + db,
                    BinOp::Sub => da - db,
                    BinOp::Mul => da * b + a * db,
                    BinOp::Div => (da * b - a * db) / b.clone().powi(2),
                }
            }
            Node::Pow(a, q) => {
                let da = a.differentiate(var);
                if da.is_zero() {
                    return Expression::zero();
                }
                Expression::constant(*q) * a.clone().pow(q - Rational::one()) * da
            }
            Node::Call(func, a) => {
                let da = a.differentiate(var);
                if da.is_zero() {
                    return Expression::zero();
                }
                let outer = match func {
                    Func::Sin => a.clone().cos(),
                    Func::Cos => -a.clone().sin(),
                    Func::Exp => a.clone().exp(),
                    Func::Ln => return da / a,
                    Func::Sqrt => return da / (Expression::integer(2) * a.clone().sqrt()),
                    Func::Abs => a / a.clone().abs(),
                };
                outer * da
            }
        }
    }

    /// Partial derivatives with respect to variables `0..n`.
    pub fn gradient(&self, n: usize) -> Vec<Expression> {
        (0..n).map(|i| self.differentiate(i)).collect()
    }
}

/// |symbolic derivative - central difference| at `point`, step `h` along `var`.
pub fn check_derivative_numerically(
    e: &Expression,
    var: usize,
    point: &[f64],
    h: f64,
) -> Result<f64, EvalError> {
    let symbolic = e.differentiate(var).evaluate(point)?;
    let mut shifted = point.to_vec();
    shifted[var] = point[var] + h;
    let forward = e.evaluate(&shifted)?;
    shifted[var] = point[var] - h;
    let backward = e.evaluate(&shifted)?;
    Ok((symbolic - (forward - backward) / (2.0 * h)).abs())
}
