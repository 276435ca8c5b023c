//! Numerical cross-validation of the original flow `dx/dt = J·∇H` and the
//! reparametrized flow `dx/dτ = η·J·∇H` with a fixed-step classical RK4.
//!
//! Orbit identity is certified through shared invariant level sets: both
//! trajectories must keep `H` and every Casimir at their initial values.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::expr::{EvalError, Expression, Point};
use crate::poisson::{CheckResult, Domain, PoissonSystem, Tolerances, Verdict, VerificationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    /// `dx/dt = J·∇H`
    Original,
    /// `dx/dτ = η·J·∇H`
    Reparametrized,
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flow::Original => "t-flow",
            Flow::Reparametrized => "tau-flow",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub flow: Flow,
    pub step: f64,
    pub integrator: &'static str,
    /// `(time, state)` with strictly increasing times.
    pub samples: Vec<(f64, Point)>,
}

impl Trajectory {
    pub fn start(&self) -> &Point {
        &self.samples[0].1
    }

    pub fn end(&self) -> &Point {
        &self.samples.last().expect("trajectory holds x0").1
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First time at which the state leaves the box of `domain`.
    pub fn first_exit(&self, domain: &Domain) -> Option<f64> {
        self.samples
            .iter()
            .find(|(_, p)| !domain.in_box(p))
            .map(|(t, _)| *t)
    }

    /// Delimited text: a header `t,<names…>` then one row per sample.
    pub fn write_delimited<W: Write, S: AsRef<str>>(
        &self,
        mut w: W,
        names: &[S],
    ) -> io::Result<()> {
        write!(w, "t")?;
        for name in names {
            write!(w, ",{}", name.as_ref())?;
        }
        writeln!(w)?;
        for (t, p) in &self.samples {
            write!(w, "{t}")?;
            for x in p.iter() {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("end time must be non-negative and finite, got {0}")]
    BadEndTime(f64),
    #[error("initial point has {got} coordinates, system has {n}")]
    Dimension { n: usize, got: usize },
    #[error("vector field undefined at t = {time}: {source}")]
    Domain {
        time: f64,
        source: EvalError,
        partial: Box<Trajectory>,
    },
    #[error("|eta| = {value:e} fell below {min:e} at t = {time} (point {point}); the time change degenerates")]
    EtaDegenerate {
        time: f64,
        value: f64,
        min: f64,
        point: Point,
        partial: Box<Trajectory>,
    },
    #[error("state became non-finite at t = {time}")]
    Blowup { time: f64, partial: Box<Trajectory> },
}

impl IntegrationError {
    /// Trajectory computed before a mid-run abort.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            IntegrationError::Domain { partial, .. }
            | IntegrationError::EtaDegenerate { partial, .. }
            | IntegrationError::Blowup { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

enum StageError {
    Eval(EvalError),
    Eta { value: f64, point: Vec<f64> },
}

struct Field {
    components: Vec<Expression>,
    eta: Option<Expression>,
    min_eta: f64,
}

impl Field {
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, StageError> {
        let scale = match &self.eta {
            Some(eta) => {
                let v = eta.evaluate(x).map_err(StageError::Eval)?;
                if v.is_nan() || v.abs() < self.min_eta {
                    return Err(StageError::Eta {
                        value: v,
                        point: x.to_vec(),
                    });
                }
                v
            }
            None => 1.0,
        };
        self.components
            .iter()
            .map(|c| c.evaluate(x).map(|v| scale * v).map_err(StageError::Eval))
            .collect()
    }

    fn rk4_step(&self, x: &[f64], h: f64) -> Result<Vec<f64>, StageError> {
        let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> {
            a.iter().zip(k).map(|(x, k)| x + s * k).collect()
        };
        let k1 = self.eval(x)?;
        let k2 = self.eval(&axpy(x, &k1, 0.5 * h))?;
        let k3 = self.eval(&axpy(x, &k2, 0.5 * h))?;
        let k4 = self.eval(&axpy(x, &k3, h))?;
        Ok((0..x.len())
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    }
}

/// Integrates the original flow (`eta = None`) or the reparametrized one
/// from `x0` up to `t_end` with fixed step `dt`; the last step is shortened
/// to land on `t_end` exactly.
pub fn integrate(
    system: &PoissonSystem,
    eta: Option<&Expression>,
    x0: &Point,
    t_end: f64,
    dt: f64,
    tol: &Tolerances,
) -> Result<Trajectory, IntegrationError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IntegrationError::BadStep(dt));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(IntegrationError::BadEndTime(t_end));
    }
    if x0.dim() != system.dim() {
        return Err(IntegrationError::Dimension {
            n: system.dim(),
            got: x0.dim(),
        });
    }
    let field = Field {
        components: system.vector_field(),
        eta: eta.cloned(),
        min_eta: tol.min_eta,
    };
    let mut traj = Trajectory {
        flow: if eta.is_some() {
            Flow::Reparametrized
        } else {
            Flow::Original
        },
        step: dt,
        integrator: "rk4",
        samples: vec![(0.0, x0.clone())],
    };
    // treat t_end within a few ulps of a whole number of steps as exact
    let ratio = t_end / dt;
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
        ratio.round() as u64
    } else {
        ratio.ceil() as u64
    };
    let mut x: Vec<f64> = x0.to_vec();
    let mut t = 0.0;
    for i in 1..=steps {
        let t_next = if i == steps { t_end } else { i as f64 * dt };
        let h = t_next - t;
        match field.rk4_step(&x, h) {
            Ok(next) => x = next,
            Err(StageError::Eval(source)) => {
                return Err(IntegrationError::Domain {
                    time: t,
                    source,
                    partial: Box::new(traj),
                })
            }
            Err(StageError::Eta { value, point }) => {
                return Err(IntegrationError::EtaDegenerate {
                    time: t,
                    value,
                    min: tol.min_eta,
                    point: Point::new(point).unwrap_or_else(|_| x0.clone()),
                    partial: Box::new(traj),
                })
            }
        }
        match Point::new(x.clone()) {
            Ok(p) => traj.samples.push((t_next, p)),
            Err(_) => {
                return Err(IntegrationError::Blowup {
                    time: t_next,
                    partial: Box::new(traj),
                })
            }
        }
        t = t_next;
    }
    Ok(traj)
}

/// Per invariant, `max |I(x) - I(x0)|` along the trajectory.
pub fn invariant_drift(
    traj: &Trajectory,
    invariants: &[Expression],
) -> Result<Vec<f64>, EvalError> {
    invariants
        .iter()
        .map(|inv| {
            let initial = inv.evaluate(traj.start())?;
            traj.samples.iter().try_fold(0.0f64, |worst, (_, p)| {
                Ok(worst.max((inv.evaluate(p)? - initial).abs()))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoincidenceError {
    #[error("trajectories start at different points ({0}) and ({1})")]
    DifferentStart(Point, Point),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Certifies that two trajectories from the same `x0` lie on the same joint
/// level set of `invariants`, to within the absolute tolerance `tol`.
///
/// One check per invariant (named by `names`), with the residual being the
/// largest deviation on either trajectory and the witness where it occurs.
pub fn orbit_coincidence<S: AsRef<str>>(
    a: &Trajectory,
    b: &Trajectory,
    invariants: &[Expression],
    names: &[S],
    tol: f64,
) -> Result<VerificationReport, CoincidenceError> {
    if a.start() != b.start() {
        return Err(CoincidenceError::DifferentStart(
            a.start().clone(),
            b.start().clone(),
        ));
    }
    let tolerances = Tolerances {
        atol: tol,
        rtol: 0.0,
        ..Tolerances::default()
    };
    let mut report = VerificationReport::new(tolerances);
    for (i, inv) in invariants.iter().enumerate() {
        let level = inv.evaluate(a.start())?;
        let mut worst = 0.0f64;
        let mut witness = a.start().clone();
        for (_, p) in a.samples.iter().chain(&b.samples) {
            let d = (inv.evaluate(p)? - level).abs();
            if d > worst {
                worst = d;
                witness = p.clone();
            }
        }
        let name = names
            .get(i)
            .map_or_else(|| format!("invariant{}", i + 1), |s| s.as_ref().to_string());
        report.push(CheckResult {
            name: format!("level-set-{name}"),
            verdict: if worst <= tol {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            residual: worst,
            witness: Some(witness),
            points: a.len() + b.len(),
            discarded: 0,
            note: Some(format!("level {level}")),
        });
    }
    Ok(report)
}
