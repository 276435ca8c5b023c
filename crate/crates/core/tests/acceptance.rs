//! Runs every acceptance criterion and prints one pass/fail line each.
//! Exits non-zero when any criterion fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;

use common::*;
use poisson_ntt::dynamics::{integrate, invariant_drift};
use poisson_ntt::expr::{parse, Expression, Point};
use poisson_ntt::ntt::{analyze, implicit_eta, rescale, CurlField, Preservation};
use poisson_ntt::poisson::{check_jacobi, SamplePlan, StructureMatrix, Tolerances, Verdict};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn strict(plan: SamplePlan, atol: f64) -> SamplePlan {
    plan.with_tolerances(Tolerances {
        atol,
        rtol: 0.0,
        ..Tolerances::default()
    })
}

fn max_gap(a: &Expression, b: &Expression, points: &[Point]) -> f64 {
    points
        .iter()
        .map(|p| relative_gap(a.evaluate(p).unwrap(), b.evaluate(p).unwrap()))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let sys = oscillator();
    let plan = oscillator_plan();
    for src in ["1", "x1^2+x2^2", "(x1^2+x2^2)^2", "exp(x1^2+x2^2)"] {
        let v = analyze(&sys, &e(src, &XY), &plan).map_err(|err| err.to_string())?;
        ensure(v.preserves == Preservation::Yes, || {
            format!("eta = {src}: {}", v.preserves)
        })?;
    }
    let points = plan.accepted_points().unwrap();
    let mut worst = 0.0f64;
    for src in ["x1", "x2", "x1*x2"] {
        let eta = e(src, &XY);
        let v = analyze(&sys, &eta, &plan).map_err(|err| err.to_string())?;
        ensure(v.preserves == Preservation::No, || {
            format!("eta = {src}: {}", v.preserves)
        })?;
        let characteristic =
            Expression::var(1) * eta.differentiate(0) - Expression::var(0) * eta.differentiate(1);
        let curl = CurlField::new(&eta, sys.hamiltonian(), 2);
        for p in &points {
            let residual = curl.residuals(p).unwrap()[0].0;
            let expected = characteristic.evaluate(p).unwrap();
            let gap = (residual - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(gap);
        }
    }
    ensure(worst <= 1e-12, || {
        format!("curl vs characteristic PDE gap {worst:e}")
    })?;
    Ok(format!(
        "4 yes / 3 no verdicts; curl matches x2*d1(eta) - x1*d2(eta) to {worst:.1e} relative at {} points",
        points.len()
    ))
}

fn criterion_2() -> Outcome {
    let sys = rigid_body();
    let plan = rigid_body_plan();
    let points = plan.accepted_points().unwrap();
    let v = rescale(&sys, &e("z1*z2^2", &["z1", "z2"]), &plan).map_err(|err| err.to_string())?;
    ensure(v.preserves == Preservation::Yes, || {
        format!("rescale: {}", v.preserves)
    })?;
    let (hstar, eta) = (v.hstar.unwrap(), v.eta.unwrap());
    let c = &sys.casimirs()[0];
    let hc2 = sys.hamiltonian().clone() * c.clone().powi(2);
    ensure(max_gap(&hstar, &hc2, &points) <= 1e-14, || {
        format!("H* = {hstar}")
    })?;
    ensure(max_gap(&eta, &c.clone().powi(2), &points) <= 1e-14, || {
        format!("eta = {eta}")
    })?;

    let lhs: Vec<Expression> = sys
        .vector_field()
        .into_iter()
        .map(|f| eta.clone() * f)
        .collect();
    let rhs = sys.structure().apply(&hstar.gradient(3));
    let mut worst = 0.0f64;
    for p in &points {
        for (a, b) in lhs.iter().zip(&rhs) {
            worst = worst.max((a.evaluate(p).unwrap() - b.evaluate(p).unwrap()).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("|eta J dH - J dH*| = {worst:e}"))?;

    let no = analyze(&sys, &e("x1*((x1^2+x2^2+x3^2)/2)^2", &XYZ), &plan)
        .map_err(|err| err.to_string())?;
    ensure(no.preserves == Preservation::No, || {
        format!("eta = x1*C^2: {}", no.preserves)
    })?;
    let yes = analyze(
        &sys,
        &e("(x1^2/2+x2^2)*((x1^2+x2^2+x3^2)/2)^4", &XYZ),
        &plan,
    )
    .map_err(|err| err.to_string())?;
    ensure(yes.preserves == Preservation::Yes, || {
        format!("eta = H*C^4: {}", yes.preserves)
    })?;
    Ok(format!(
        "H* = H*C^2, eta = C^2, identity residual {worst:.1e}; x1*C^2 no, H*C^4 yes"
    ))
}

fn criterion_3() -> Outcome {
    let sys = rigid_body();
    let plan = rigid_body_plan();
    let points = plan.accepted_points().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let phi = random_phi(&mut rng, 2, 3);
        let relation =
            Expression::var(1) - phi.substitute(&[Expression::var(0), Expression::var(2)]);
        let explicit = rescale(&sys, &phi, &plan).map_err(|err| err.to_string())?;
        let implicit = implicit_eta(&sys, &relation, None, &plan).map_err(|err| err.to_string())?;
        let (a, b) = (explicit.eta.unwrap(), implicit.eta.unwrap());
        for p in &points {
            let (x, y) = (a.evaluate(p).unwrap(), b.evaluate(p).unwrap());
            worst = worst.max((x - y).abs() / x.abs().max(y.abs()));
        }
    }
    ensure(worst <= 1e-12, || {
        format!("implicit vs rescale gap {worst:e}")
    })?;
    Ok(format!(
        "10 random Phi, implicit eta = rescale eta to {worst:.1e} relative"
    ))
}

fn criterion_4() -> Outcome {
    let plan = strict(cube_plan(3, -2.0, 2.0), 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for (name, j) in [
        ("so(3)", so3()),
        ("Lotka-Volterra", lotka_volterra()),
        ("constant", constant_skew()),
    ] {
        for _ in 0..20 {
            let eta = random_polynomial(&mut rng, 3, 3);
            let report = check_jacobi(&j.scaled(&eta), &plan).unwrap();
            ensure(report.passed(), || format!("{name}, eta = {eta}: {report}"))?;
            worst = worst.max(report.checks[0].residual);
        }
    }
    Ok(format!(
        "60 rescaled 3x3 structures pass Jacobi, residual <= {worst:.1e}"
    ))
}

fn criterion_5() -> Outcome {
    let vars = ["x1", "x2", "x3", "x4"];
    let j0 = StructureMatrix::canonical(4).unwrap();
    let plan = cube_plan(4, 0.5, 2.0);
    let mut weakest = f64::INFINITY;
    for src in ["x1", "x1+x2^2", "exp(x1)"] {
        let report = check_jacobi(&j0.scaled(&e(src, &vars)), &plan).unwrap();
        let check = &report.checks[0];
        ensure(
            check.verdict == Verdict::Fail && check.witness.is_some(),
            || format!("eta = {src} not refuted"),
        )?;
        ensure(check.residual >= 1e-3, || {
            format!("eta = {src}: residual {:e}", check.residual)
        })?;
        weakest = weakest.min(check.residual);
    }
    let seven = check_jacobi(&j0.scaled(&e("7", &vars)), &plan).unwrap();
    ensure(seven.passed(), || format!("eta = 7: {seven}"))?;
    Ok(format!(
        "3 non-constant factors refuted (witness residual >= {weakest:.3}); eta = 7 passes"
    ))
}

fn criterion_6() -> Outcome {
    let sys = rigid_body();
    let report = check_jacobi(
        &sys.structure().scaled(&sys.casimirs()[0]),
        &strict(rigid_body_plan(), 1e-9),
    )
    .unwrap();
    ensure(report.passed(), || report.to_string())?;
    Ok(format!(
        "C*J passes Jacobi, residual {:.1e}",
        report.checks[0].residual
    ))
}

fn criterion_7() -> Outcome {
    let tol = Tolerances::default();
    let osc = oscillator();
    let x0 = Point::new(vec![1.0, 0.0]).unwrap();
    let period = integrate(&osc, None, &x0, 2.0 * PI, 1e-3, &tol).map_err(|err| err.to_string())?;
    let miss = period
        .end()
        .iter()
        .zip([1.0, 0.0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(miss <= 1e-6, || format!("period endpoint off by {miss:e}"))?;

    let r2 = "(x1^2+x2^2)";
    let planar = [
        ("1".to_string(), format!("{r2}/2")),
        (r2.to_string(), format!("({r2}/2)^2")),
        (format!("{r2}^2"), format!("4*({r2}/2)^3/3")),
        (format!("exp{r2}"), format!("exp{r2}/2")),
    ];
    let mut worst = 0.0f64;
    for (eta, hstar) in &planar {
        let traj = integrate(&osc, Some(&e(eta, &XY)), &x0, 10.0, 1e-3, &tol)
            .map_err(|err| err.to_string())?;
        let drift = invariant_drift(&traj, &[osc.hamiltonian().clone(), e(hstar, &XY)]).unwrap();
        worst = drift.iter().fold(worst, |w, d| w.max(*d));
    }
    let body = rigid_body();
    let x0 = Point::new(vec![1.0, 0.8, 1.2]).unwrap();
    let (h, c) = ("(x1^2/2+x2^2)", "((x1^2+x2^2+x3^2)/2)");
    let spatial = [
        (format!("{c}^2"), format!("{h}*{c}^2")),
        (format!("{h}*{c}^4"), format!("{h}^2*{c}^4/2")),
    ];
    for (eta, hstar) in &spatial {
        let traj = integrate(&body, Some(&e(eta, &XYZ)), &x0, 10.0, 1e-3, &tol)
            .map_err(|err| err.to_string())?;
        let invariants = [
            body.hamiltonian().clone(),
            body.casimirs()[0].clone(),
            e(hstar, &XYZ),
        ];
        let drift = invariant_drift(&traj, &invariants).unwrap();
        worst = drift.iter().fold(worst, |w, d| w.max(*d));
    }
    ensure(worst <= 1e-6, || format!("invariant drift {worst:e}"))?;

    let x0 = Point::new(vec![1.0, 0.0]).unwrap();
    let error = |steps: f64| -> Result<f64, String> {
        let traj = integrate(&osc, None, &x0, 2.0 * PI, 2.0 * PI / steps, &tol)
            .map_err(|err| err.to_string())?;
        Ok(traj
            .end()
            .iter()
            .zip([1.0, 0.0])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    };
    let ratio = error(64.0)? / error(128.0)?;
    ensure(ratio >= 12.0, || {
        format!("halving dt reduced the error by only {ratio:.2}")
    })?;
    Ok(format!(
        "period endpoint within {miss:.1e}; H, C, H* drift <= {worst:.1e} for 6 yes-etas; halving dt cuts error {ratio:.1}x"
    ))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let points = cube_plan(3, -1.0, 1.0)
        .with_points(100)
        .with_seed(8)
        .accepted_points()
        .unwrap();
    let mut worst = 0.0f64;
    let mut comparisons = 0;
    for i in 0..100 {
        let f = random_expression(&mut rng, 3, 1 + i % 6);
        for p in &points {
            for var in 0..3 {
                let symbolic = f.differentiate(var).evaluate(p).unwrap();
                let numeric = central_difference(&f, var, p, 2.5e-4).unwrap();
                let gap = (symbolic - numeric).abs() / (1.0 + symbolic.abs());
                ensure(gap <= 1e-6, || {
                    format!("d/dx{} of {f} at {p}: {symbolic} vs {numeric}", var + 1)
                })?;
                worst = worst.max(gap);
                comparisons += 1;
            }
        }
    }
    for src in CORPUS {
        let first = parse(src, &XYZ).map_err(|err| format!("{src}: {err}"))?;
        let printed = first.display(&XYZ).to_string();
        let second = parse(&printed, &XYZ).map_err(|err| format!("{printed}: {err}"))?;
        ensure(first == second, || {
            format!("{src} printed as {printed} reparses differently")
        })?;
    }
    Ok(format!(
        "{comparisons} derivative comparisons within {worst:.1e}; {} corpus strings round-trip",
        CORPUS.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failures = 0;
    for (n, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {n}: PASS  {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n}: FAIL  {detail}");
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
