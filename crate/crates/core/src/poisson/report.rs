use std::fmt;

use crate::expr::Point;

use super::sampling::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    Skipped,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Skipped => "skipped",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one named check over a sample plan.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub verdict: Verdict,
    /// Residual at the witness point.
    pub residual: f64,
    /// Point where the residual is worst relative to its threshold.
    pub witness: Option<Point>,
    pub points: usize,
    pub discarded: usize,
    pub note: Option<String>,
}

impl CheckResult {
    pub fn skipped(name: impl Into<String>, note: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            verdict: Verdict::Skipped,
            residual: 0.0,
            witness: None,
            points: 0,
            discarded: 0,
            note: Some(note.into()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Pass | Verdict::Skipped)
    }

    /// `check=<name> verdict=<v> residual=<r> witness=<x1,..,xn>`
    pub fn key_value_line(&self) -> String {
        let witness = self
            .witness
            .as_ref()
            .map(ToString::to_string)
            .unwrap_or_else(|| "none".into());
        format!(
            "check={} verdict={} residual={:e} witness={}",
            self.name, self.verdict, self.residual, witness
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub tolerances: Tolerances,
}

impl VerificationReport {
    pub fn new(tolerances: Tolerances) -> Self {
        VerificationReport {
            checks: Vec::new(),
            tolerances,
        }
    }

    pub fn single(check: CheckResult, tolerances: Tolerances) -> Self {
        VerificationReport {
            checks: vec![check],
            tolerances,
        }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }

    /// Every check passed or was skipped.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Verdict::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Machine-readable form, one check per line.
    pub fn to_key_value(&self) -> String {
        self.checks
            .iter()
            .map(|c| c.key_value_line() + "\n")
            .collect()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let label = match c.verdict {
                Verdict::Pass => "pass (sampled)",
                other => other.as_str(),
            };
            write!(f, "{:<width$}  {:<14}", c.name, label)?;
            if c.verdict != Verdict::Skipped {
                write!(f, "  residual {:.3e}", c.residual)?;
                if let Some(w) = &c.witness {
                    write!(f, " at ({w})")?;
                }
                write!(f, "  [{} points", c.points)?;
                if c.discarded > 0 {
                    write!(f, ", {} discarded", c.discarded)?;
                }
                f.write_str("]")?;
            }
            if let Some(note) = &c.note {
                write!(f, "  {note}")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "tolerances: atol={:e} rtol={:e} pivot_rel={:e}",
            self.tolerances.atol, self.tolerances.rtol, self.tolerances.pivot_rel
        )
    }
}

/// Keeps the worst residual (relative to its threshold) seen during a sweep.
#[derive(Debug, Clone)]
pub(crate) struct ResidualTracker {
    tol: Tolerances,
    worst_ratio: f64,
    residual: f64,
    witness: Option<Point>,
    failed: bool,
}

impl ResidualTracker {
    pub(crate) fn new(tol: Tolerances) -> Self {
        ResidualTracker {
            tol,
            worst_ratio: -1.0,
            residual: 0.0,
            witness: None,
            failed: false,
        }
    }

    pub(crate) fn observe(&mut self, p: &Point, residual: f64, scale: f64) {
        let threshold = self.tol.threshold(scale);
        let ratio = if threshold > 0.0 {
            residual / threshold
        } else if residual > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if residual > threshold || residual.is_nan() {
            self.failed = true;
        }
        if ratio > self.worst_ratio || residual.is_nan() && !self.residual.is_nan() {
            self.worst_ratio = ratio;
            self.residual = residual;
            self.witness = Some(p.clone());
        }
    }

    pub(crate) fn finish(self, name: &str, points: usize, discarded: usize) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            verdict: if self.failed {
                Verdict::Fail
            } else {
                Verdict::Pass
            },
            residual: self.residual,
            witness: self.witness,
            points,
            discarded,
            note: None,
        }
    }
}
