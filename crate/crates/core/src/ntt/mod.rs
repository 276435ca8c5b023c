//! New-time transformations `dτ = dt/η(x)` and whether they keep the
//! original structure matrix.
//!
//! The reparametrized field `η·J·∇H` is again of the form `J·∇H*` exactly
//! when `η` is functionally dependent on `H` and the Casimirs. For a
//! symplectic `J` this reduces to the curl condition on `η·∇H`. This module
//! provides both sampled criteria, the constructive direction (`H*` from a
//! primitive `Φ`), the implicit direction (`η = -∂₁F/∂₂F` from a relation
//! `F(H, H*, C…) = 0`) and the classification of rescaled structure
//! matrices `J* = η₀J`, `C·J`, `c·J`.
//!
//! `Φ` and `F` are written over reserved symbols: for `Φ`, `z1` stands for
//! `H` and `z2..z{k+1}` for the Casimirs; for `F`, `z1` is `H`, `z2` is `H*`
//! and `z3..z{k+2}` are the Casimirs.

use std::fmt;

use thiserror::Error;

use crate::expr::{EvalError, Expression, Point, Rational};
use crate::poisson::{
    check_casimir, check_jacobi, numerical_rank, CheckResult, PoissonSystem, ResidualTracker,
    SampleError, SamplePlan, StructureMatrix, Verdict, VerificationReport,
};

/// `["z1", ..., "z{count}"]`
pub fn reserved_names(count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("z{i}")).collect()
}

/// True for names of the form `z<digits>`.
pub fn is_reserved_name(name: &str) -> bool {
    name.strip_prefix('z')
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// How the time transformation is given.
#[derive(Debug, Clone, PartialEq)]
pub enum NttSpec {
    /// `η` directly, over the system variables.
    Explicit { eta: Expression },
    /// Primitive `Φ(z1 = H, z2.. = C..)`; `H* = Φ`, `η = ∂Φ/∂z1`.
    Constructive { phi: Expression },
    /// Relation `F(z1 = H, z2 = H*, z3.. = C..) = 0`, optionally with a
    /// closed form for `H*` over the system variables.
    Implicit {
        relation: Expression,
        hstar_hint: Option<Expression>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preservation {
    Yes,
    No,
    Inconclusive,
}

impl fmt::Display for Preservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preservation::Yes => "yes",
            Preservation::No => "no",
            Preservation::Inconclusive => "inconclusive",
        })
    }
}

/// Which rescaled-structure case a classification matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureCase {
    /// `J* = η₀·J` for arbitrary nonvanishing `η₀`; needs rank 2.
    RankTwo,
    /// `J* = C·J` for a nonvanishing Casimir `C`; rank at least 4.
    CasimirFactor,
    /// `J* = c·J` for a nonzero constant; symplectic `J`.
    Symplectic,
}

impl StructureCase {
    pub fn tag(self) -> &'static str {
        match self {
            StructureCase::RankTwo => "r=2",
            StructureCase::CasimirFactor => "r>=4",
            StructureCase::Symplectic => "symplectic",
        }
    }
}

/// Factor of the rescaled structure matrix in [`classify`].
#[derive(Debug, Clone, PartialEq)]
pub enum StructureFactor {
    Eta0(Expression),
    Casimir(Expression),
    Constant(Rational),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NttVerdict {
    pub preserves: Preservation,
    /// Human-readable name of the deciding criterion.
    pub criterion: String,
    pub eta: Option<Expression>,
    /// Variable names for printing `eta`; one longer than the system when
    /// `eta` still depends on the unknown `H*` (shown as `z2`).
    pub eta_vars: Vec<String>,
    /// `eta` references the unknown `H*` (the trailing `z2` in `eta_vars`).
    pub eta_depends_on_hstar: bool,
    pub hstar: Option<Expression>,
    /// Rescaled structure matrix, for classifications.
    pub structure: Option<StructureMatrix>,
    pub case: Option<StructureCase>,
    pub report: VerificationReport,
}

impl NttVerdict {
    /// Failed checks whose name starts with `premise`.
    pub fn premise_failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.report
            .checks
            .iter()
            .filter(|c| c.name.starts_with("premise") && c.verdict == Verdict::Fail)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NttError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("{what} vanishes at ({point}): |value| = {value:e} is below the minimum {min:e}")]
    Vanishes {
        what: String,
        point: Point,
        value: f64,
        min: f64,
    },
    #[error("{what} uses {got} reserved symbols but only {allowed} are defined for this system")]
    Arity {
        what: &'static str,
        allowed: usize,
        got: usize,
    },
}

/// Sampled `min |f|`; fails when it drops below `plan.tol.min_eta`.
pub fn check_nonvanishing(
    name: &str,
    f: &Expression,
    plan: &SamplePlan,
) -> Result<CheckResult, SampleError> {
    let sweep = plan.sweep(|p| f.evaluate(p))?;
    let worst = sweep
        .samples
        .iter()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
    let (residual, witness) = match worst {
        Some((p, v)) => (v.abs(), Some(p.clone())),
        None => (f64::INFINITY, None),
    };
    Ok(CheckResult {
        name: name.to_string(),
        verdict: if residual < plan.tol.min_eta {
            Verdict::Fail
        } else {
            Verdict::Pass
        },
        residual,
        witness,
        points: sweep.samples.len(),
        discarded: sweep.discarded,
        note: Some("residual is min |value|".into()),
    })
}

fn require_nonvanishing(
    check_name: &str,
    what: &str,
    f: &Expression,
    plan: &SamplePlan,
    report: &mut VerificationReport,
) -> Result<(), NttError> {
    let check = check_nonvanishing(check_name, f, plan)?;
    if check.verdict == Verdict::Fail {
        return Err(NttError::Vanishes {
            what: what.to_string(),
            point: check.witness.expect("failing check has a witness"),
            value: check.residual,
            min: plan.tol.min_eta,
        });
    }
    report.push(check);
    Ok(())
}

/// Curl components `∂_i(η ∂_j H) - ∂_j(η ∂_i H)`, `i < j`, in symbolic form.
#[derive(Debug, Clone)]
pub struct CurlField {
    n: usize,
    /// `d[i][j] = ∂_i (η ∂_j H)`
    d: Vec<Vec<Expression>>,
}

impl CurlField {
    pub fn new(eta: &Expression, h: &Expression, n: usize) -> Self {
        let v: Vec<Expression> = h.gradient(n).iter().map(|g| eta * g).collect();
        let d = (0..n)
            .map(|i| v.iter().map(|vj| vj.differentiate(i)).collect())
            .collect();
        CurlField { n, d }
    }

    /// Signed residuals for `i < j` in row-major order, each with its scale.
    pub fn residuals(&self, p: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                let a = self.d[i][j].evaluate(p)?;
                let b = self.d[j][i].evaluate(p)?;
                out.push((a - b, a.abs().max(b.abs())));
            }
        }
        Ok(out)
    }
}

/// Sampled test that `η·∇H` is a gradient (all curl components vanish).
pub fn gradient_test(
    eta: &Expression,
    h: &Expression,
    n: usize,
    plan: &SamplePlan,
) -> Result<VerificationReport, SampleError> {
    let curl = CurlField::new(eta, h, n);
    let sweep = plan.sweep(|p| curl.residuals(p))?;
    let mut tracker = ResidualTracker::new(plan.tol);
    for (p, residuals) in &sweep.samples {
        for &(r, scale) in residuals {
            tracker.observe(p, r.abs(), scale);
        }
        if residuals.is_empty() {
            tracker.observe(p, 0.0, 0.0);
        }
    }
    Ok(VerificationReport::single(
        tracker.finish("gradient", sweep.samples.len(), sweep.discarded),
        plan.tol,
    ))
}

fn normalized(mut row: Vec<f64>) -> Vec<f64> {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.iter_mut().for_each(|v| *v /= norm);
    }
    row
}

/// Norm of the part of `v` orthogonal to the span of `basis_rows`.
fn orthogonal_remainder(v: &[f64], basis_rows: &[Vec<f64>], pivot_rel: f64) -> f64 {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for row in basis_rows {
        let mut w = row.clone();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > pivot_rel {
            basis.push(w.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut r = v.to_vec();
    for _ in 0..2 {
        for b in &basis {
            let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Share of sample points with a rank-deficient `(H, C…)` Jacobian above
/// which a dependence verdict becomes inconclusive.
pub const MAX_DEFICIENT_FRACTION: f64 = 0.10;

/// Sampled test that `η` is a function of `H` and the Casimirs: the Jacobian
/// of `(η, H, C…)` must have the same rank as that of `(H, C…)` everywhere.
///
/// Rows are normalized before ranking. The reported residual is the norm of
/// the component of `∇η/|∇η|` orthogonal to the span of the other gradients.
pub fn functional_dependence_test(
    eta: &Expression,
    h: &Expression,
    casimirs: &[Expression],
    n: usize,
    plan: &SamplePlan,
) -> Result<VerificationReport, SampleError> {
    let base: Vec<Vec<Expression>> = std::iter::once(h)
        .chain(casimirs)
        .map(|f| f.gradient(n))
        .collect();
    let eta_grad = eta.gradient(n);
    let pivot = plan.tol.pivot_rel;
    struct Sample {
        deficient: bool,
        dependent: bool,
        residual: f64,
    }
    let sweep = plan.sweep(|p| {
        let rows = base
            .iter()
            .map(|g| {
                g.iter()
                    .map(|d| d.evaluate(p))
                    .collect::<Result<Vec<f64>, _>>()
                    .map(normalized)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let eta_row = normalized(
            eta_grad
                .iter()
                .map(|d| d.evaluate(p))
                .collect::<Result<Vec<f64>, _>>()?,
        );
        let base_rank = numerical_rank(rows.clone(), pivot);
        let mut augmented = rows.clone();
        augmented.push(eta_row.clone());
        let aug_rank = numerical_rank(augmented, pivot);
        Ok(Sample {
            deficient: base_rank < rows.len(),
            dependent: aug_rank == base_rank,
            residual: orthogonal_remainder(&eta_row, &rows, pivot),
        })
    })?;

    let total = sweep.samples.len();
    let deficient = sweep.samples.iter().filter(|(_, s)| s.deficient).count();
    let usable = sweep.samples.iter().filter(|(_, s)| !s.deficient);
    let worst_independent = usable
        .clone()
        .filter(|(_, s)| !s.dependent)
        .max_by(|a, b| a.1.residual.total_cmp(&b.1.residual));
    let worst_any = usable.max_by(|a, b| a.1.residual.total_cmp(&b.1.residual));

    let fraction = if total == 0 {
        0.0
    } else {
        deficient as f64 / total as f64
    };
    let (verdict, pick) = if fraction > MAX_DEFICIENT_FRACTION {
        (Verdict::Inconclusive, worst_any)
    } else if worst_independent.is_some() {
        (Verdict::Fail, worst_independent)
    } else {
        (Verdict::Pass, worst_any)
    };
    let mut note = format!(
        "rank comparison with pivot_rel={pivot:e}; residual is |component of grad eta outside span|"
    );
    if deficient > 0 {
        note.push_str(&format!(
            "; {deficient} of {total} points excluded: Jacobian of (H, C...) is rank deficient"
        ));
    }
    Ok(VerificationReport::single(
        CheckResult {
            name: "dependence".into(),
            verdict,
            residual: pick.map_or(0.0, |(_, s)| s.residual),
            witness: pick.map(|(p, _)| p.clone()),
            points: total,
            discarded: sweep.discarded,
            note: Some(note),
        },
        plan.tol,
    ))
}

/// Sampled check of `lhs = rhs` componentwise; the scale of each point is the
/// largest component magnitude on either side.
pub fn identity_check(
    name: &str,
    lhs: &[Expression],
    rhs: &[Expression],
    plan: &SamplePlan,
) -> Result<CheckResult, SampleError> {
    let sweep = plan.sweep(|p| {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for (a, b) in lhs.iter().zip(rhs) {
            let (x, y) = (a.evaluate(p)?, b.evaluate(p)?);
            worst = worst.max((x - y).abs());
            scale = scale.max(x.abs()).max(y.abs());
        }
        Ok((worst, scale))
    })?;
    let mut tracker = ResidualTracker::new(plan.tol);
    for (p, (r, s)) in &sweep.samples {
        tracker.observe(p, *r, *s);
    }
    Ok(tracker.finish(name, sweep.samples.len(), sweep.discarded))
}

/// `‖η·J·∇H − J·∇H*‖∞` at the sample points.
fn rescaling_identity(
    system: &PoissonSystem,
    eta: &Expression,
    hstar: &Expression,
    plan: &SamplePlan,
) -> Result<CheckResult, SampleError> {
    let lhs: Vec<Expression> = system.vector_field().iter().map(|f| eta * f).collect();
    let rhs = system.structure().apply(&hstar.gradient(system.dim()));
    identity_check("identity", &lhs, &rhs, plan)
}

fn verdict_of(report: &VerificationReport) -> Preservation {
    if report.failed() {
        Preservation::No
    } else if report.passed() {
        Preservation::Yes
    } else {
        Preservation::Inconclusive
    }
}

fn check_arity(what: &'static str, e: &Expression, allowed: usize) -> Result<(), NttError> {
    match e.max_var() {
        Some(i) if i >= allowed => Err(NttError::Arity {
            what,
            allowed,
            got: i + 1,
        }),
        _ => Ok(()),
    }
}

/// Decides whether an explicit `η` keeps the structure matrix.
///
/// Symplectic systems use the gradient test on `η·∇H`; degenerate ones use
/// the functional-dependence test against `H` and the Casimirs.
pub fn analyze(
    system: &PoissonSystem,
    eta: &Expression,
    plan: &SamplePlan,
) -> Result<NttVerdict, NttError> {
    let n = system.dim();
    let mut report = VerificationReport::new(plan.tol);
    require_nonvanishing("eta-nonvanishing", "eta", eta, plan, &mut report)?;
    let (criterion, decisive) = if system.is_symplectic() {
        (
            "gradient test (sampled)",
            gradient_test(eta, system.hamiltonian(), n, plan)?,
        )
    } else {
        (
            "functional dependence (sampled)",
            functional_dependence_test(eta, system.hamiltonian(), system.casimirs(), n, plan)?,
        )
    };
    report.extend(decisive);
    Ok(NttVerdict {
        preserves: verdict_of(&report),
        criterion: criterion.into(),
        eta: Some(eta.clone()),
        eta_vars: system.vars().to_vec(),
        eta_depends_on_hstar: false,
        hstar: None,
        structure: None,
        case: None,
        report,
    })
}

fn hamiltonian_and_casimirs(system: &PoissonSystem) -> Vec<Expression> {
    std::iter::once(system.hamiltonian().clone())
        .chain(system.casimirs().iter().cloned())
        .collect()
}

/// Builds `H* = Φ(H, C…)` and `η = ∂Φ/∂z1 (H, C…)` and verifies
/// `η·J·∇H = J·∇H*` at the sample points.
pub fn rescale(
    system: &PoissonSystem,
    phi: &Expression,
    plan: &SamplePlan,
) -> Result<NttVerdict, NttError> {
    let k = system.casimirs().len();
    check_arity("Phi", phi, k + 1)?;
    let subs = hamiltonian_and_casimirs(system);
    let hstar = phi.substitute(&subs);
    let eta = phi.differentiate(0).substitute(&subs);
    let mut report = VerificationReport::new(plan.tol);
    require_nonvanishing("eta-nonvanishing", "eta", &eta, plan, &mut report)?;
    report.push(rescaling_identity(system, &eta, &hstar, plan)?);
    Ok(NttVerdict {
        preserves: verdict_of(&report),
        criterion: "constructive rescaling".into(),
        eta: Some(eta),
        eta_vars: system.vars().to_vec(),
        eta_depends_on_hstar: false,
        hstar: Some(hstar),
        structure: None,
        case: None,
        report,
    })
}

/// `η = -(∂F/∂z1)/(∂F/∂z2)` for a relation `F(H, H*, C…) = 0`.
///
/// With a hint for `H*` everything is evaluated and `F(H, H*, C…) ≈ 0` plus
/// the rescaling identity are verified. Without one, `H*` is solved for when
/// `F` is affine in `z2`; otherwise `η` may still depend on `H*`, it is
/// returned over the system variables plus a trailing `z2` and the verdict
/// is inconclusive.
pub fn implicit_eta(
    system: &PoissonSystem,
    relation: &Expression,
    hstar_hint: Option<&Expression>,
    plan: &SamplePlan,
) -> Result<NttVerdict, NttError> {
    let n = system.dim();
    let k = system.casimirs().len();
    check_arity("F", relation, k + 2)?;
    if let Some(hint) = hstar_hint {
        check_arity("Hstar", hint, n)?;
    }
    let solved = match hstar_hint {
        Some(_) => None,
        None => solve_affine_hstar(system, relation),
    };
    let hstar_hint = hstar_hint.or(solved.as_ref());
    let hstar_slot = match hstar_hint {
        Some(hint) => hint.clone(),
        None => Expression::var(n),
    };
    let mut subs = vec![system.hamiltonian().clone(), hstar_slot];
    subs.extend(system.casimirs().iter().cloned());

    let d_h = relation.differentiate(0).substitute(&subs);
    let d_hstar = relation.differentiate(1).substitute(&subs);
    let eta = -(relation.differentiate(0)) / relation.differentiate(1);
    let eta = eta.substitute(&subs);

    let mut eta_vars = system.vars().to_vec();
    let mut report = VerificationReport::new(plan.tol);
    let free = hstar_hint.is_none() && (eta.uses_var(n) || d_hstar.uses_var(n) || d_h.uses_var(n));
    if free {
        eta_vars.push("z2".into());
        report.push(CheckResult::skipped(
            "premise-dF/dz2-nonvanishing",
            "depends on the unknown H*",
        ));
        report.push(CheckResult::skipped(
            "premise-dF/dz1-nonvanishing",
            "depends on the unknown H*",
        ));
    } else {
        require_nonvanishing(
            "premise-dF/dz2-nonvanishing",
            "dF/dz2",
            &d_hstar,
            plan,
            &mut report,
        )?;
        require_nonvanishing(
            "premise-dF/dz1-nonvanishing",
            "dF/dz1 (hence eta)",
            &d_h,
            plan,
            &mut report,
        )?;
    }

    let mut preserves = Preservation::Inconclusive;
    if let Some(hint) = hstar_hint {
        let residual = relation.substitute(&subs);
        let scale_terms = subs.clone();
        let sweep = plan.sweep(|p| {
            let r = residual.evaluate(p)?.abs();
            let scale = scale_terms
                .iter()
                .map(|e| e.evaluate(p).map(f64::abs))
                .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))?;
            Ok((r, scale))
        })?;
        let mut tracker = ResidualTracker::new(plan.tol);
        for (p, (r, s)) in &sweep.samples {
            tracker.observe(p, *r, *s);
        }
        report.push(tracker.finish("relation", sweep.samples.len(), sweep.discarded));
        report.push(rescaling_identity(system, &eta, hint, plan)?);
        preserves = verdict_of(&report);
    }
    Ok(NttVerdict {
        preserves,
        criterion: "implicit relation".into(),
        eta: Some(eta),
        eta_vars,
        eta_depends_on_hstar: free,
        hstar: hstar_hint.cloned(),
        structure: None,
        case: None,
        report,
    })
}

/// `H* = -b/a` when `F = a·z2 + b` with `a`, `b` free of `z2`.
fn solve_affine_hstar(system: &PoissonSystem, relation: &Expression) -> Option<Expression> {
    let a = relation.differentiate(1);
    if a.uses_var(1) || a.is_zero() {
        return None;
    }
    let k = system.casimirs().len();
    let mut at_zero: Vec<Expression> = (0..k + 2).map(Expression::var).collect();
    at_zero[1] = Expression::zero();
    let b = relation.substitute(&at_zero);
    let mut subs = vec![system.hamiltonian().clone(), Expression::zero()];
    subs.extend(system.casimirs().iter().cloned());
    Some((-b / a).substitute(&subs))
}

fn premise(name: &str, ok: bool, note: String) -> CheckResult {
    CheckResult {
        name: format!("premise-{name}"),
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        residual: 0.0,
        witness: None,
        points: 0,
        discarded: 0,
        note: Some(note),
    }
}

fn as_premise(mut check: CheckResult) -> CheckResult {
    check.name = format!("premise-{}", check.name);
    check
}

/// Validates a rescaled structure `J* = factor·J` together with `H* = Φ(H, C…)`.
///
/// Premises are reported as `premise-*` checks. The rescaled matrix must
/// satisfy the Jacobi identity and `J*·∇H* = η·J·∇H` must hold with
/// `η = factor·∂Φ/∂z1`.
pub fn classify(
    system: &PoissonSystem,
    phi: &Expression,
    factor: &StructureFactor,
    plan: &SamplePlan,
) -> Result<NttVerdict, NttError> {
    let n = system.dim();
    let r = system.rank();
    let k = system.casimirs().len();
    check_arity("Phi", phi, k + 1)?;
    let subs = hamiltonian_and_casimirs(system);
    let hstar = phi.substitute(&subs);
    let d_phi = phi.differentiate(0).substitute(&subs);
    let mut report = VerificationReport::new(plan.tol);

    let (case, factor_expr) = match factor {
        StructureFactor::Eta0(eta0) => {
            check_arity("eta0", eta0, n)?;
            report.push(premise(
                "rank",
                r == 2,
                format!("requires rank 2, system has rank {r}"),
            ));
            report.push(as_premise(check_nonvanishing(
                "eta0-nonvanishing",
                eta0,
                plan,
            )?));
            (StructureCase::RankTwo, eta0.clone())
        }
        StructureFactor::Casimir(c) => {
            check_arity("casimir_factor", c, n)?;
            report.push(premise(
                "rank",
                r >= 4,
                format!("requires rank >= 4, system has rank {r}"),
            ));
            let mut is_casimir = check_casimir(c, system.structure(), plan)?.checks.remove(0);
            is_casimir.name = "casimir-factor".into();
            report.push(as_premise(is_casimir));
            report.push(as_premise(check_nonvanishing(
                "casimir-factor-nonvanishing",
                c,
                plan,
            )?));
            (StructureCase::CasimirFactor, c.clone())
        }
        StructureFactor::Constant(c) => {
            report.push(premise(
                "c-nonzero",
                *c != Rational::from_integer(0),
                format!("c = {c}"),
            ));
            report.push(premise(
                "symplectic",
                system.is_symplectic(),
                format!("requires rank = n = {n}, system has rank {r}"),
            ));
            (StructureCase::Symplectic, Expression::constant(*c))
        }
    };
    report.push(as_premise(check_nonvanishing(
        "dPhi/dz1-nonvanishing",
        &d_phi,
        plan,
    )?));

    let rescaled = system.structure().scaled(&factor_expr);
    let mut jacobi = check_jacobi(&rescaled, plan)?;
    for c in &mut jacobi.checks {
        c.name = "jacobi-rescaled".into();
    }
    report.extend(jacobi);

    let eta = &factor_expr * &d_phi;
    let lhs = rescaled.apply(&hstar.gradient(n));
    let rhs: Vec<Expression> = system.vector_field().iter().map(|f| &eta * f).collect();
    report.push(identity_check("identity", &lhs, &rhs, plan)?);

    Ok(NttVerdict {
        preserves: verdict_of(&report),
        criterion: format!("rescaled structure ({})", case.tag()),
        eta: Some(eta),
        eta_vars: system.vars().to_vec(),
        eta_depends_on_hstar: false,
        hstar: Some(hstar),
        structure: Some(rescaled),
        case: Some(case),
        report,
    })
}
