//! Poisson-system data model and sampled verification of its defining
//! properties: skew-symmetry, the Jacobi identity, Casimir invariance,
//! Casimir independence and constant rank.
//!
//! Every "for all x in the domain" statement is decided on a [`SamplePlan`].
//! A failure comes with a concrete witness point; a pass means no violation
//! was found at any accepted sample.

mod matrix;
mod report;
mod sampling;

use thiserror::Error;

use crate::expr::{EvalError, Expression, Point};

pub use matrix::{numerical_rank, MatrixError, StructureMatrix};
pub(crate) use report::ResidualTracker;
pub use report::{CheckResult, Verdict, VerificationReport};
pub use sampling::{Domain, DomainError, SampleError, SamplePlan, Sweep, Tolerances};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("declared rank {0} must be a positive even integer")]
    BadRank(usize),
    #[error("declared rank {rank} exceeds the dimension {n}")]
    RankTooLarge { rank: usize, n: usize },
    #[error("rank {rank} in dimension {n} requires {} Casimir invariants, {k} supplied", n - rank)]
    CasimirCount { rank: usize, n: usize, k: usize },
    #[error("structure matrix is {got}x{got} but {n} variables are declared")]
    DimensionMismatch { n: usize, got: usize },
    #[error("{what} references variable index {index} but only {n} variables are declared")]
    UndeclaredVariable {
        what: String,
        index: usize,
        n: usize,
    },
    #[error("no variables declared")]
    NoVariables,
}

/// `dx/dt = J(x)·∇H(x)` together with its declared Casimirs and rank.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSystem {
    vars: Vec<String>,
    structure: StructureMatrix,
    hamiltonian: Expression,
    casimirs: Vec<Expression>,
    rank: usize,
}

impl PoissonSystem {
    pub fn new(
        vars: Vec<String>,
        structure: StructureMatrix,
        hamiltonian: Expression,
        casimirs: Vec<Expression>,
        rank: usize,
    ) -> Result<Self, SystemError> {
        let n = vars.len();
        if n == 0 {
            return Err(SystemError::NoVariables);
        }
        if structure.dim() != n {
            return Err(SystemError::DimensionMismatch {
                n,
                got: structure.dim(),
            });
        }
        if rank == 0 || !rank.is_multiple_of(2) {
            return Err(SystemError::BadRank(rank));
        }
        if rank > n {
            return Err(SystemError::RankTooLarge { rank, n });
        }
        if casimirs.len() != n - rank {
            return Err(SystemError::CasimirCount {
                rank,
                n,
                k: casimirs.len(),
            });
        }
        let check = |what: String, index: Option<usize>| match index {
            Some(index) if index >= n => Err(SystemError::UndeclaredVariable { what, index, n }),
            _ => Ok(()),
        };
        check("structure matrix".into(), structure.max_var())?;
        check("Hamiltonian".into(), hamiltonian.max_var())?;
        for (i, c) in casimirs.iter().enumerate() {
            check(format!("Casimir {}", i + 1), c.max_var())?;
        }
        Ok(PoissonSystem {
            vars,
            structure,
            hamiltonian,
            casimirs,
            rank,
        })
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn structure(&self) -> &StructureMatrix {
        &self.structure
    }

    pub fn hamiltonian(&self) -> &Expression {
        &self.hamiltonian
    }

    pub fn casimirs(&self) -> &[Expression] {
        &self.casimirs
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_symplectic(&self) -> bool {
        self.rank == self.dim()
    }

    /// Symbolic right-hand side `J·∇H`.
    pub fn vector_field(&self) -> Vec<Expression> {
        self.structure.apply(&self.hamiltonian.gradient(self.dim()))
    }

    /// Runs every defining check: skew-symmetry, Jacobi, each Casimir,
    /// Casimir independence and rank constancy.
    pub fn verify(&self, plan: &SamplePlan) -> Result<VerificationReport, SampleError> {
        let mut report = VerificationReport::new(plan.tol);
        report.push(
            CheckResult {
                name: "skew".into(),
                verdict: Verdict::Pass,
                residual: 0.0,
                witness: None,
                points: 0,
                discarded: 0,
                note: None,
            }
            .with_note("structural"),
        );
        report.extend(check_jacobi(&self.structure, plan)?);
        for (i, c) in self.casimirs.iter().enumerate() {
            let mut r = check_casimir(c, &self.structure, plan)?;
            if self.casimirs.len() > 1 {
                for check in &mut r.checks {
                    check.name = format!("casimir{}", i + 1);
                }
            }
            report.extend(r);
        }
        report.extend(check_casimir_independence(
            &self.casimirs,
            self.dim(),
            plan,
        )?);
        report.extend(check_rank_constant(&self.structure, self.rank, plan)?);
        Ok(report)
    }
}

/// Poisson bracket `{f, g} = Σ_ij ∂_i f · J_ij · ∂_j g`.
pub fn bracket(f: &Expression, g: &Expression, j: &StructureMatrix) -> Expression {
    let n = j.dim();
    let (df, dg) = (f.gradient(n), g.gradient(n));
    j.upper_entries()
        .fold(Expression::zero(), |acc, (a, b, jab)| {
            acc + jab * (&df[a] * &dg[b] - &df[b] * &dg[a])
        })
}

/// Sampled check of the Jacobi identity
/// `Σ_l J_li ∂_l J_jk + J_lj ∂_l J_ki + J_lk ∂_l J_ij = 0` for all `i < j < k`.
pub fn check_jacobi(
    j: &StructureMatrix,
    plan: &SamplePlan,
) -> Result<VerificationReport, SampleError> {
    let n = j.dim();
    if n < 3 {
        let skipped = CheckResult {
            name: "jacobi".into(),
            verdict: Verdict::Pass,
            residual: 0.0,
            witness: None,
            points: 0,
            discarded: 0,
            note: Some("no index triples: holds identically by skew-symmetry".into()),
        };
        return Ok(VerificationReport::single(skipped, plan.tol));
    }
    // derivs[l] holds ∂_l J as a structure matrix
    let derivs: Vec<StructureMatrix> = (0..n)
        .map(|l| {
            StructureMatrix::from_entries(
                n,
                j.upper_entries()
                    .map(|(a, b, e)| (a, b, e.differentiate(l))),
            )
            .expect("indices come from an existing matrix")
        })
        .collect();
    let sweep = plan.sweep(|p| {
        let m = j.evaluate(p)?;
        let d = derivs
            .iter()
            .map(|dl| dl.evaluate(p))
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(jacobi_worst(&m, &d, plan.tol))
    })?;
    let mut tracker = ResidualTracker::new(plan.tol);
    for (p, (residual, scale)) in &sweep.samples {
        tracker.observe(p, *residual, *scale);
    }
    Ok(VerificationReport::single(
        tracker.finish("jacobi", sweep.samples.len(), sweep.discarded),
        plan.tol,
    ))
}

/// Jacobi residual of every triple at one point; returns the triple whose
/// residual is largest relative to its own threshold as `(residual, scale)`.
pub fn jacobi_residuals(m: &[Vec<f64>], d: &[Vec<Vec<f64>>]) -> Vec<(f64, f64)> {
    let n = m.len();
    let mut out = Vec::new();
    for i in 0..n {
        for jj in i + 1..n {
            for k in jj + 1..n {
                let mut sum = 0.0;
                let mut scale = 0.0f64;
                for l in 0..n {
                    for term in [
                        m[l][i] * d[l][jj][k],
                        m[l][jj] * d[l][k][i],
                        m[l][k] * d[l][i][jj],
                    ] {
                        sum += term;
                        scale = scale.max(term.abs());
                    }
                }
                out.push((sum.abs(), scale));
            }
        }
    }
    out
}

fn jacobi_worst(m: &[Vec<f64>], d: &[Vec<Vec<f64>>], tol: Tolerances) -> (f64, f64) {
    jacobi_residuals(m, d)
        .into_iter()
        .max_by(|a, b| {
            let ra = a.0 / tol.threshold(a.1);
            let rb = b.0 / tol.threshold(b.1);
            ra.total_cmp(&rb)
        })
        .unwrap_or((0.0, 0.0))
}

/// Sampled check of `J·∇C = 0`.
pub fn check_casimir(
    c: &Expression,
    j: &StructureMatrix,
    plan: &SamplePlan,
) -> Result<VerificationReport, SampleError> {
    let n = j.dim();
    let grad = c.gradient(n);
    let sweep = plan.sweep(|p| {
        let m = j.evaluate(p)?;
        let g = grad
            .iter()
            .map(|e| e.evaluate(p))
            .collect::<Result<Vec<_>, _>>()?;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for row in &m {
            let mut sum = 0.0;
            for (a, b) in row.iter().zip(&g) {
                sum += a * b;
                scale = scale.max((a * b).abs());
            }
            worst = worst.max(sum.abs());
        }
        Ok((worst, scale))
    })?;
    let mut tracker = ResidualTracker::new(plan.tol);
    for (p, (r, s)) in &sweep.samples {
        tracker.observe(p, *r, *s);
    }
    Ok(VerificationReport::single(
        tracker.finish("casimir", sweep.samples.len(), sweep.discarded),
        plan.tol,
    ))
}

/// Numerical rank of `J(p)`.
pub fn rank_at(j: &StructureMatrix, p: &[f64], pivot_rel: f64) -> Result<usize, EvalError> {
    Ok(numerical_rank(j.evaluate(p)?, pivot_rel))
}

fn rank_report(
    name: &str,
    expected: usize,
    plan: &SamplePlan,
    rank_of: impl Fn(&Point) -> Result<usize, EvalError>,
) -> Result<VerificationReport, SampleError> {
    let sweep = plan.sweep(|p| rank_of(p))?;
    let first_bad = sweep.samples.iter().find(|(_, r)| *r != expected);
    let (verdict, residual, witness, note) = match first_bad {
        Some((p, r)) => (
            Verdict::Fail,
            r.abs_diff(expected) as f64,
            Some(p.clone()),
            format!("rank {r} where {expected} was expected"),
        ),
        None => (
            Verdict::Pass,
            0.0,
            None,
            format!("rank {expected} at every point"),
        ),
    };
    Ok(VerificationReport::single(
        CheckResult {
            name: name.into(),
            verdict,
            residual,
            witness,
            points: sweep.samples.len(),
            discarded: sweep.discarded,
            note: Some(note),
        },
        plan.tol,
    ))
}

/// Passes iff `rank J(p) = r` at every accepted point.
pub fn check_rank_constant(
    j: &StructureMatrix,
    r: usize,
    plan: &SamplePlan,
) -> Result<VerificationReport, SampleError> {
    rank_report("rank", r, plan, |p| rank_at(j, p, plan.tol.pivot_rel))
}

/// Jacobian rows `∇f_i(p)`.
pub fn jacobian_at(fs: &[Expression], n: usize, p: &[f64]) -> Result<Vec<Vec<f64>>, EvalError> {
    fs.iter()
        .map(|f| f.gradient(n).iter().map(|d| d.evaluate(p)).collect())
        .collect()
}

/// Passes iff the `k×n` Jacobian of the Casimirs has rank `k` everywhere.
pub fn check_casimir_independence(
    casimirs: &[Expression],
    n: usize,
    plan: &SamplePlan,
) -> Result<VerificationReport, SampleError> {
    if casimirs.is_empty() {
        return Ok(VerificationReport::single(
            CheckResult::skipped("independence", "no Casimirs declared"),
            plan.tol,
        ));
    }
    let grads: Vec<Vec<Expression>> = casimirs.iter().map(|c| c.gradient(n)).collect();
    rank_report("independence", casimirs.len(), plan, |p| {
        let rows = grads
            .iter()
            .map(|g| g.iter().map(|d| d.evaluate(p)).collect())
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        Ok(numerical_rank(rows, plan.tol.pivot_rel))
    })
}
