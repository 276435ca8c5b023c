//! Front end for `poisson-ntt`: reads system files, runs checks and renders
//! reports. Every command returns an exit code and the text to print, so the
//! binary stays a thin wrapper.

pub mod file;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use poisson_ntt::dynamics::{integrate, orbit_coincidence, IntegrationError, Trajectory};
use poisson_ntt::expr::{Expression, Point};
use poisson_ntt::ntt::{self, NttError, NttSpec, NttVerdict, Preservation};
use poisson_ntt::poisson::{CheckResult, SamplePlan, Verdict, VerificationReport};

pub use file::{FileError, NttSection, SystemFile};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_PREMISE: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;
pub const EXIT_ABORT: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "poisson-ntt",
    version,
    about = "Verify Poisson systems and new-time transformations"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// Number of sample points (overrides [sample] points)
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Sampling seed (overrides [sample] seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Absolute tolerance
    #[arg(long, global = true)]
    pub atol: Option<f64>,
    /// Relative tolerance
    #[arg(long, global = true)]
    pub rtol: Option<f64>,
    /// Smallest admissible |eta| (overrides [ntt] min_eta)
    #[arg(long, global = true)]
    pub min_eta: Option<f64>,
    /// Write key=value check lines to this file
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Write simulated trajectories as delimited text
    #[arg(long, global = true, value_name = "PATH")]
    pub export_trajectory: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Skew, Jacobi, Casimir, independence and rank checks
    Validate { file: PathBuf },
    /// Decide whether the explicit eta preserves the structure
    AnalyzeNtt { file: PathBuf },
    /// Build H* and eta from Phi and verify the rescaling
    Rescale { file: PathBuf },
    /// Derive eta from a relation F(H, H*, C...) = 0
    Implicit { file: PathBuf },
    /// Check a rescaled structure matrix J* and its Hamiltonian
    Classify { file: PathBuf },
    /// Integrate the original and/or reparametrized flow
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    pub file: PathBuf,
    /// Initial point, comma separated
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        required = true
    )]
    pub x0: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, value_enum, default_value_t = FlowChoice::T)]
    pub flow: FlowChoice,
    /// Largest admissible invariant drift
    #[arg(long, default_value_t = 1e-6)]
    pub drift_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlowChoice {
    T,
    Tau,
    Both,
}

/// Result of one command: exit code and text for standard output.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: u8,
    pub output: String,
}

impl Outcome {
    fn new(code: u8, output: String) -> Self {
        Outcome { code, output }
    }

    fn input(message: impl std::fmt::Display) -> Self {
        Outcome::new(EXIT_INPUT, format!("error: {message}\n"))
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let opts = &cli.global;
    match &cli.command {
        Command::Validate { file } => with_file(file, opts, validate),
        Command::AnalyzeNtt { file } => with_file(file, opts, analyze_ntt),
        Command::Rescale { file } => with_file(file, opts, rescale),
        Command::Implicit { file } => with_file(file, opts, implicit),
        Command::Classify { file } => with_file(file, opts, classify),
        Command::Simulate(args) => {
            with_file(&args.file, opts, |f, plan, o| simulate(f, plan, o, args))
        }
    }
}

fn with_file(
    path: &Path,
    opts: &GlobalOpts,
    command: impl FnOnce(&SystemFile, &SamplePlan, &GlobalOpts) -> Outcome,
) -> Outcome {
    let file = match SystemFile::load(path) {
        Ok(f) => f,
        Err(err) => return Outcome::input(format_args!("{}: {err}", path.display())),
    };
    let plan = match effective_plan(&file, opts) {
        Ok(p) => p,
        Err(msg) => return Outcome::input(msg),
    };
    command(&file, &plan, opts)
}

/// The file's plan with command-line overrides applied.
fn effective_plan(file: &SystemFile, opts: &GlobalOpts) -> Result<SamplePlan, String> {
    let mut plan = file.plan.clone();
    if let Some(points) = opts.points {
        if points == 0 {
            return Err("--points must be positive".into());
        }
        plan = plan.with_points(points);
    }
    if let Some(seed) = opts.seed {
        plan = plan.with_seed(seed);
    }
    let mut tol = plan.tol;
    let nonneg = |v: f64, flag: &str| {
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{flag} must be a non-negative number, got {v}"))
        }
    };
    if let Some(a) = opts.atol {
        tol.atol = nonneg(a, "--atol")?;
    }
    if let Some(r) = opts.rtol {
        tol.rtol = nonneg(r, "--rtol")?;
    }
    if let Some(m) = file.ntt.as_ref().and_then(|n| n.min_eta) {
        tol.min_eta = m;
    }
    if let Some(m) = opts.min_eta {
        tol.min_eta = nonneg(m, "--min-eta")?;
    }
    Ok(plan.with_tolerances(tol))
}

fn write_report(
    opts: &GlobalOpts,
    report: &VerificationReport,
    out: &mut String,
) -> Result<(), Outcome> {
    if let Some(path) = &opts.report {
        std::fs::write(path, report.to_key_value()).map_err(|err| {
            Outcome::new(
                EXIT_ABORT,
                format!(
                    "{out}error: cannot write report {}: {err}\n",
                    path.display()
                ),
            )
        })?;
    }
    Ok(())
}

fn finish(code: u8, mut out: String, report: &VerificationReport, opts: &GlobalOpts) -> Outcome {
    match write_report(opts, report, &mut out) {
        Ok(()) => Outcome::new(code, out),
        Err(outcome) => outcome,
    }
}

pub fn validate(file: &SystemFile, plan: &SamplePlan, opts: &GlobalOpts) -> Outcome {
    let report = match file.system.verify(plan) {
        Ok(r) => r,
        Err(err) => return Outcome::input(err),
    };
    let code = if report.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    };
    let verdict = if report.passed() {
        "valid Poisson system (sampled)"
    } else {
        "NOT a valid Poisson system"
    };
    let out = format!("{report}\n{verdict}\n");
    finish(code, out, &report, opts)
}

/// Validation that gates every transformation command; a failing system
/// breaks the premise of the transformation results.
fn premise_validation(
    file: &SystemFile,
    plan: &SamplePlan,
    opts: &GlobalOpts,
) -> Result<VerificationReport, Outcome> {
    let report = file.system.verify(plan).map_err(Outcome::input)?;
    if report.passed() {
        return Ok(report);
    }
    let out = format!("{report}\npremise violated: the system does not pass validation\n");
    Err(finish(EXIT_PREMISE, out, &report, opts))
}

fn ntt_section<'a>(file: &'a SystemFile, command: &str) -> Result<&'a NttSection, Outcome> {
    file.ntt
        .as_ref()
        .ok_or_else(|| Outcome::input(format!("{command} needs an [ntt] section")))
}

fn ntt_error(err: NttError) -> Outcome {
    match err {
        NttError::Vanishes { .. } => {
            Outcome::new(EXIT_PREMISE, format!("premise violated: {err}\n"))
        }
        NttError::Sample(_) | NttError::Arity { .. } => Outcome::input(err),
    }
}

fn verdict_code(v: &NttVerdict) -> u8 {
    if v.premise_failures().next().is_some() {
        return EXIT_PREMISE;
    }
    match v.preserves {
        Preservation::Yes => EXIT_PASS,
        Preservation::No => EXIT_FAIL,
        Preservation::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn render_verdict(
    file: &SystemFile,
    v: &NttVerdict,
    validation: VerificationReport,
    opts: &GlobalOpts,
) -> Outcome {
    let vars = file.system.vars();
    let mut out = String::new();
    if let Some(hstar) = &v.hstar {
        let _ = writeln!(out, "H* = {}", hstar.display(vars));
    }
    if let Some(eta) = &v.eta {
        let _ = writeln!(out, "eta = {}", eta.display(&v.eta_vars));
        if v.eta_depends_on_hstar {
            out.push_str("note: eta depends on z2 = H*; supply Hstar to verify\n");
        }
    }
    if let Some(j) = &v.structure {
        let _ = writeln!(out, "J* ({}):", v.case.map_or("?", |c| c.tag()));
        let _ = writeln!(out, "{}", j.display(vars));
    }
    let mut report = validation;
    report.extend(v.report.clone());
    let _ = writeln!(out, "{report}");
    let _ = writeln!(out, "verdict: {} (criterion: {})", v.preserves, v.criterion);
    for failed in v.premise_failures() {
        let _ = writeln!(out, "premise violated: {}", failed.name);
    }
    finish(verdict_code(v), out, &report, opts)
}

pub fn analyze_ntt(file: &SystemFile, plan: &SamplePlan, opts: &GlobalOpts) -> Outcome {
    let run = || -> Result<Outcome, Outcome> {
        let section = ntt_section(file, "analyze-ntt")?;
        let NttSpec::Explicit { eta } = &section.spec else {
            return Err(Outcome::input("analyze-ntt needs 'eta = ...' in [ntt]"));
        };
        let validation = premise_validation(file, plan, opts)?;
        let v = ntt::analyze(&file.system, eta, plan).map_err(ntt_error)?;
        Ok(render_verdict(file, &v, validation, opts))
    };
    run().unwrap_or_else(|o| o)
}

pub fn rescale(file: &SystemFile, plan: &SamplePlan, opts: &GlobalOpts) -> Outcome {
    let run = || -> Result<Outcome, Outcome> {
        let section = ntt_section(file, "rescale")?;
        let NttSpec::Constructive { phi } = &section.spec else {
            return Err(Outcome::input("rescale needs 'Phi = ...' in [ntt]"));
        };
        let validation = premise_validation(file, plan, opts)?;
        let v = ntt::rescale(&file.system, phi, plan).map_err(ntt_error)?;
        Ok(render_verdict(file, &v, validation, opts))
    };
    run().unwrap_or_else(|o| o)
}

pub fn implicit(file: &SystemFile, plan: &SamplePlan, opts: &GlobalOpts) -> Outcome {
    let run = || -> Result<Outcome, Outcome> {
        let section = ntt_section(file, "implicit")?;
        let NttSpec::Implicit {
            relation,
            hstar_hint,
        } = &section.spec
        else {
            return Err(Outcome::input("implicit needs 'F = ...' in [ntt]"));
        };
        let validation = premise_validation(file, plan, opts)?;
        let v = ntt::implicit_eta(&file.system, relation, hstar_hint.as_ref(), plan)
            .map_err(ntt_error)?;
        Ok(render_verdict(file, &v, validation, opts))
    };
    run().unwrap_or_else(|o| o)
}

pub fn classify(file: &SystemFile, plan: &SamplePlan, opts: &GlobalOpts) -> Outcome {
    let run = || -> Result<Outcome, Outcome> {
        let section = ntt_section(file, "classify")?;
        let NttSpec::Constructive { phi } = &section.spec else {
            return Err(Outcome::input("classify needs 'Phi = ...' in [ntt]"));
        };
        let factor = section.factor.as_ref().ok_or_else(|| {
            Outcome::input("classify needs one of 'eta0', 'c' or 'casimir_factor' in [ntt]")
        })?;
        let validation = premise_validation(file, plan, opts)?;
        let v = ntt::classify(&file.system, phi, factor, plan).map_err(ntt_error)?;
        Ok(render_verdict(file, &v, validation, opts))
    };
    run().unwrap_or_else(|o| o)
}

/// `η` and, when derivable, `H*` for the reparametrized flow.
fn flow_eta(
    file: &SystemFile,
    plan: &SamplePlan,
) -> Result<(Expression, Option<Expression>), Outcome> {
    let section = file.ntt.as_ref().ok_or_else(|| {
        Outcome::input("the tau-flow needs an [ntt] section with eta, Phi or F with Hstar")
    })?;
    match &section.spec {
        NttSpec::Explicit { eta } => Ok((eta.clone(), section.hstar.clone())),
        NttSpec::Constructive { phi } => {
            let v = ntt::rescale(&file.system, phi, plan).map_err(ntt_error)?;
            Ok((v.eta.expect("rescale yields eta"), v.hstar))
        }
        NttSpec::Implicit {
            relation,
            hstar_hint,
        } => {
            let v = ntt::implicit_eta(&file.system, relation, hstar_hint.as_ref(), plan)
                .map_err(ntt_error)?;
            if v.eta_depends_on_hstar {
                return Err(Outcome::input(
                    "eta from F depends on H*; supply Hstar to simulate the tau-flow",
                ));
            }
            Ok((v.eta.expect("implicit yields eta"), v.hstar))
        }
    }
}

fn drift_check(
    name: String,
    traj: &Trajectory,
    invariant: &Expression,
    tol: f64,
) -> Result<CheckResult, Outcome> {
    let eval = |p: &Point| {
        invariant
            .evaluate(p)
            .map_err(|err| Outcome::new(EXIT_ABORT, format!("error: {err}\n")))
    };
    let level = eval(traj.start())?;
    let mut worst = 0.0f64;
    let mut witness = traj.start().clone();
    for (_, p) in &traj.samples {
        let d = (eval(p)? - level).abs();
        if d > worst {
            worst = d;
            witness = p.clone();
        }
    }
    Ok(CheckResult {
        name,
        verdict: if worst <= tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        residual: worst,
        witness: Some(witness),
        points: traj.len(),
        discarded: 0,
        note: None,
    })
}

fn export_path(base: &Path, flow: &str, both: bool) -> PathBuf {
    if !both {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{flow}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{flow}"),
    };
    base.with_file_name(name)
}

pub fn simulate(
    file: &SystemFile,
    plan: &SamplePlan,
    opts: &GlobalOpts,
    args: &SimulateArgs,
) -> Outcome {
    let run = || -> Result<Outcome, Outcome> {
        let system = &file.system;
        let x0 = Point::new(args.x0.clone()).map_err(|_| Outcome::input("--x0 must be finite"))?;
        if x0.dim() != system.dim() {
            return Err(Outcome::input(format!(
                "--x0 has {} coordinates, the system has {}",
                x0.dim(),
                system.dim()
            )));
        }
        if !plan.domain.accepts(&x0) {
            return Err(Outcome::input(format!("x0 = ({x0}) is outside the domain")));
        }
        if args.drift_tol.is_nan() || args.drift_tol < 0.0 {
            return Err(Outcome::input("--drift-tol must be non-negative"));
        }
        let wants_tau = args.flow != FlowChoice::T;
        let (eta, hstar) = if wants_tau {
            let (eta, hstar) = flow_eta(file, plan)?;
            (Some(eta), hstar)
        } else {
            (None, None)
        };

        let mut names = vec!["H".to_string()];
        let mut invariants = vec![system.hamiltonian().clone()];
        let k = system.casimirs().len();
        for (i, c) in system.casimirs().iter().enumerate() {
            names.push(if k == 1 {
                "C".into()
            } else {
                format!("C{}", i + 1)
            });
            invariants.push(c.clone());
        }

        let mut flows: Vec<(&str, Option<&Expression>)> = Vec::new();
        if args.flow != FlowChoice::Tau {
            flows.push(("t", None));
        }
        if let Some(eta) = &eta {
            flows.push(("tau", Some(eta)));
        }

        let mut out = String::new();
        let mut report = VerificationReport::new(plan.tol);
        let mut trajectories = Vec::new();
        for (label, flow_eta) in flows {
            let traj = match integrate(system, flow_eta, &x0, args.t_end, args.dt, &plan.tol) {
                Ok(t) => t,
                Err(err) => {
                    return Err(integration_failure(
                        err,
                        label,
                        opts,
                        &mut out,
                        args.flow == FlowChoice::Both,
                        system.vars(),
                    ))
                }
            };
            let _ = writeln!(
                out,
                "{}: {} steps of {} up to {} = {}",
                traj.flow,
                traj.len() - 1,
                traj.integrator,
                label,
                traj.end_time()
            );
            if let Some(t) = traj.first_exit(&plan.domain) {
                let _ = writeln!(
                    out,
                    "note: {} left the domain box at {label} = {t} (truncation, not a failure)",
                    traj.flow
                );
            }
            let mut flow_invariants: Vec<(String, &Expression)> =
                names.iter().cloned().zip(invariants.iter()).collect();
            if let (Some(h), Some(_)) = (&hstar, flow_eta) {
                flow_invariants.push(("H*".into(), h));
            }
            for (name, inv) in flow_invariants {
                report.push(drift_check(
                    format!("drift-{label}-{name}"),
                    &traj,
                    inv,
                    args.drift_tol,
                )?);
            }
            if let Some(path) = &opts.export_trajectory {
                let path = export_path(path, label, args.flow == FlowChoice::Both);
                export(&traj, &path, system.vars())
                    .map_err(|msg| Outcome::new(EXIT_ABORT, format!("{out}{msg}")))?;
                let _ = writeln!(out, "trajectory written to {}", path.display());
            }
            trajectories.push(traj);
        }
        if let [a, b] = trajectories.as_slice() {
            let coincidence = orbit_coincidence(a, b, &invariants, &names, args.drift_tol)
                .map_err(|err| Outcome::new(EXIT_ABORT, format!("error: {err}\n")))?;
            report.extend(coincidence);
        }
        let code = if report.passed() {
            EXIT_PASS
        } else {
            EXIT_FAIL
        };
        let _ = writeln!(out, "{report}");
        let _ = writeln!(
            out,
            "{}",
            if report.passed() {
                format!("all drifts within {:e}", args.drift_tol)
            } else {
                format!("drift exceeds {:e}", args.drift_tol)
            }
        );
        Ok(finish(code, out, &report, opts))
    };
    run().unwrap_or_else(|o| o)
}

fn export(traj: &Trajectory, path: &Path, vars: &[String]) -> Result<(), String> {
    let f = std::fs::File::create(path)
        .map_err(|err| format!("error: cannot write {}: {err}\n", path.display()))?;
    traj.write_delimited(std::io::BufWriter::new(f), vars)
        .map_err(|err| format!("error: cannot write {}: {err}\n", path.display()))
}

fn integration_failure(
    err: IntegrationError,
    label: &str,
    opts: &GlobalOpts,
    out: &mut String,
    both: bool,
    vars: &[String],
) -> Outcome {
    let code = match &err {
        IntegrationError::BadStep(_)
        | IntegrationError::BadEndTime(_)
        | IntegrationError::Dimension { .. } => {
            return Outcome::new(EXIT_INPUT, format!("{out}error: {err}\n"));
        }
        IntegrationError::EtaDegenerate { .. } => EXIT_PREMISE,
        _ => EXIT_ABORT,
    };
    let _ = writeln!(out, "aborted: {err}");
    if let Some(partial) = err.partial() {
        let _ = writeln!(
            out,
            "partial {}: {} samples up to {label} = {}, last point ({})",
            partial.flow,
            partial.len(),
            partial.end_time(),
            partial.end()
        );
        if let Some(path) = &opts.export_trajectory {
            let path = export_path(path, label, both);
            match export(partial, &path, vars) {
                Ok(()) => {
                    let _ = writeln!(out, "partial trajectory written to {}", path.display());
                }
                Err(msg) => out.push_str(&msg),
            }
        }
    }
    Outcome::new(code, std::mem::take(out))
}
