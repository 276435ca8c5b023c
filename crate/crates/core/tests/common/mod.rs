#![allow(dead_code)]

use poisson_ntt::expr::{parse, Expression, Rational};
use poisson_ntt::poisson::{Domain, PoissonSystem, SamplePlan, StructureMatrix};
use rand::Rng;

pub const XY: [&str; 2] = ["x1", "x2"];
pub const XYZ: [&str; 3] = ["x1", "x2", "x3"];

pub fn e(src: &str, vars: &[&str]) -> Expression {
    parse(src, vars).unwrap_or_else(|err| panic!("{src}: {err}"))
}

pub fn names(vars: &[&str]) -> Vec<String> {
    vars.iter().map(|s| s.to_string()).collect()
}

pub fn oscillator_with(h: &str) -> PoissonSystem {
    PoissonSystem::new(
        names(&XY),
        StructureMatrix::canonical(2).unwrap(),
        e(h, &XY),
        vec![],
        2,
    )
    .unwrap()
}

pub fn oscillator() -> PoissonSystem {
    oscillator_with("(x1^2 + x2^2)/2")
}

/// `[-2, 2]²` with both axes cut out.
pub fn oscillator_plan() -> SamplePlan {
    let domain = Domain::cube(2, -2.0, 2.0)
        .unwrap()
        .exclude(e("x1", &XY))
        .unwrap()
        .exclude(e("x2", &XY))
        .unwrap()
        .with_epsilon(0.05)
        .unwrap();
    SamplePlan::new(domain)
}

pub fn so3() -> StructureMatrix {
    StructureMatrix::from_entries(
        3,
        [
            (0, 1, e("x3", &XYZ)),
            (0, 2, e("-x2", &XYZ)),
            (1, 2, e("x1", &XYZ)),
        ],
    )
    .unwrap()
}

pub fn lotka_volterra() -> StructureMatrix {
    StructureMatrix::from_entries(
        3,
        [
            (0, 1, e("x1*x2", &XYZ)),
            (0, 2, e("-x1*x3", &XYZ)),
            (1, 2, e("x2*x3", &XYZ)),
        ],
    )
    .unwrap()
}

pub fn constant_skew() -> StructureMatrix {
    StructureMatrix::from_entries(
        3,
        [
            (0, 1, e("2", &XYZ)),
            (0, 2, e("-1/2", &XYZ)),
            (1, 2, e("3", &XYZ)),
        ],
    )
    .unwrap()
}

pub fn rigid_body() -> PoissonSystem {
    PoissonSystem::new(
        names(&XYZ),
        so3(),
        e("x1^2/2 + x2^2", &XYZ),
        vec![e("(x1^2+x2^2+x3^2)/2", &XYZ)],
        2,
    )
    .unwrap()
}

pub fn rigid_body_plan() -> SamplePlan {
    SamplePlan::new(Domain::cube(3, 0.5, 2.0).unwrap())
}

pub fn cube_plan(dim: usize, lo: f64, hi: f64) -> SamplePlan {
    SamplePlan::new(Domain::cube(dim, lo, hi).unwrap())
}

/// Sources covering every grammar production and printing corner.
pub const CORPUS: &[&str] = &[
    "x1",
    "42",
    "0.125",
    "1e-3",
    "2.5e2",
    "x1+x2*x3",
    "(x1+x2)*x3",
    "x1-(x2-x3)",
    "x1-x2-x3",
    "x1/(x2*x3)",
    "x1/x2/x3",
    "x1^2^3",
    "(x1^2)^3",
    "-x1^2",
    "(-x1)^2",
    "-(x1*x2)",
    "x1*-x2",
    "--x1",
    "x1^(-2)",
    "x1^(1/3)",
    "x1^0.5",
    "x1^-1",
    "sin(x1)*cos(x2)",
    "exp(-x1^2/2)",
    "ln(1+x1^2)",
    "sqrt(abs(x3))",
    "(x1^2+x2^2)/2",
    "x1^2/2 + x2^2",
    "(x1^2+x2^2+x3^2)/2",
    "exp(x1^2+x2^2)",
    "(x1^2+x2^2)^2",
    "x1*((x1^2+x2^2+x3^2)/2)^2",
    "(x1^2/2+x2^2)*((x1^2+x2^2+x3^2)/2)^4",
    "x1*x2 - x1*x3 + x2*x3",
    "1/(2*x1)",
    "3*x1 - 2*(x2 - 1/4)",
    "-(x1+x2)^3/7",
    "sin(cos(exp(x1)))",
    "x1*(x2*(x3*(x1+1)))",
    "((x1))",
    "2^3*x1",
    "x1 - -x2",
];

fn leaf<R: Rng>(rng: &mut R, n: usize) -> Expression {
    if rng.random_bool(0.65) {
        Expression::var(rng.random_range(0..n))
    } else {
        let choices = [(1, 1), (-1, 1), (1, 2), (-2, 3), (1, 3), (3, 4)];
        let (p, q) = choices[rng.random_range(0..choices.len())];
        Expression::constant(Rational::new(p, q))
    }
}

/// Random smooth expression of depth at most `depth`, defined everywhere.
/// Singular operations are guarded (`ln(1+a²)`, `b/(1+a²)`, ...) so any
/// point is valid; constants are unit-scale so derivatives stay moderate
/// on the unit box and a difference quotient remains a usable oracle.
pub fn random_expression<R: Rng>(rng: &mut R, n: usize, depth: usize) -> Expression {
    if depth <= 1 || rng.random_bool(0.2) {
        return leaf(rng, n);
    }
    let d = depth - 1;
    let one = Expression::one();
    match rng.random_range(0..11) {
        0 => random_expression(rng, n, d) + random_expression(rng, n, d),
        1 => random_expression(rng, n, d) - random_expression(rng, n, d),
        2 | 3 => random_expression(rng, n, d) * random_expression(rng, n, d),
        4 => {
            let den = random_expression(rng, n, d.saturating_sub(1).max(1)).powi(2);
            random_expression(rng, n, d) / (one + den)
        }
        5 => random_expression(rng, n, d).sin(),
        6 => random_expression(rng, n, d).cos(),
        7 => random_expression(rng, n, d).sin().exp(),
        8 => (one + random_expression(rng, n, d).powi(2)).ln(),
        9 => {
            let exps = [
                Rational::new(1, 2),
                Rational::new(-1, 2),
                Rational::new(-1, 3),
            ];
            let q = exps[rng.random_range(0..exps.len())];
            (one + random_expression(rng, n, d).powi(2)).pow(q)
        }
        _ => random_expression(rng, n, d).powi(rng.random_range(2..=3)),
    }
}

fn small_rational<R: Rng>(rng: &mut R) -> Rational {
    Rational::new(rng.random_range(-8..=8), rng.random_range(1..=4))
}

/// Random polynomial of total degree at most `degree` in `n` variables.
pub fn random_polynomial<R: Rng>(rng: &mut R, n: usize, degree: u32) -> Expression {
    let mut sum = Expression::constant(small_rational(rng));
    for exps in monomials(n, degree) {
        if exps.iter().all(|&k| k == 0) || rng.random_bool(0.4) {
            continue;
        }
        sum = sum + Expression::constant(small_rational(rng)) * monomial(&exps);
    }
    sum
}

/// Random polynomial `Φ(z1, z2, …)` of degree ≤ `degree` with `∂Φ/∂z1 ≥ 1/2`
/// whenever every argument is positive.
pub fn random_phi<R: Rng>(rng: &mut R, arity: usize, degree: u32) -> Expression {
    let mut sum = Expression::zero();
    for exps in monomials(arity, degree) {
        let coeff = if exps[0] == 1 && exps[1..].iter().all(|&k| k == 0) {
            Rational::new(rng.random_range(2..=8), 4)
        } else if rng.random_bool(0.5) {
            continue;
        } else if exps[0] > 0 {
            Rational::new(rng.random_range(0..=8), 4)
        } else {
            small_rational(rng)
        };
        sum = sum + Expression::constant(coeff) * monomial(&exps);
    }
    sum
}

fn monomial(exps: &[u32]) -> Expression {
    exps.iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .fold(Expression::one(), |acc, (i, &k)| {
            acc * Expression::var(i).powi(k as i64)
        })
}

fn monomials(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|m: Vec<u32>| {
                let used: u32 = m.iter().sum();
                (0..=degree - used).map(move |k| {
                    let mut next = m.clone();
                    next.push(k);
                    next
                })
            })
            .collect();
    }
    out
}

/// Fourth-order central difference of `e` along `var`.
pub fn central_difference(e: &Expression, var: usize, p: &[f64], h: f64) -> Option<f64> {
    let at = |s: f64| {
        let mut q = p.to_vec();
        q[var] += s * h;
        e.evaluate(&q).ok()
    };
    Some((at(-2.0)? - 8.0 * at(-1.0)? + 8.0 * at(1.0)? - at(2.0)?) / (12.0 * h))
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}
