//! Deterministic point clouds over an axis-aligned box.
//!
//! "Holds everywhere in the domain" is decided on a finite sample: the box
//! centre followed by a Halton sequence with a seeded Cranley-Patterson
//! rotation. Points closer than `epsilon_exclude` to the zero set of any
//! exclusion expression are skipped.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{EvalError, Expression, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
    /// Pivot threshold relative to the infinity norm of the matrix.
    pub pivot_rel: f64,
    /// Smallest admissible |η| for a time transformation.
    pub min_eta: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            atol: 1e-9,
            rtol: 1e-9,
            pivot_rel: 1e-10,
            min_eta: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn threshold(&self, scale: f64) -> f64 {
        self.atol + self.rtol * scale
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("empty variable range {index}: [{lo}, {hi}]")]
    EmptyRange { index: usize, lo: f64, hi: f64 },
    #[error("non-finite bound in range {index}")]
    NonFinite { index: usize },
    #[error("exclusion predicate references variable {index} outside the {dim}-dimensional box")]
    ExclusionOutOfRange { index: usize, dim: usize },
    #[error("epsilon_exclude must be non-negative, got {0}")]
    NegativeEpsilon(f64),
}

/// Box `Π [lo_i, hi_i]` minus the neighbourhoods of exclusion zero sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
    exclusions: Vec<Expression>,
    epsilon_exclude: f64,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, DomainError> {
        for (index, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(DomainError::NonFinite { index });
            }
            if lo > hi {
                return Err(DomainError::EmptyRange { index, lo, hi });
            }
        }
        Ok(Domain {
            bounds,
            exclusions: Vec::new(),
            epsilon_exclude: 1e-6,
        })
    }

    /// Same interval on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self, DomainError> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn exclude(mut self, predicate: Expression) -> Result<Self, DomainError> {
        if let Some(index) = predicate.max_var().filter(|&i| i >= self.dim()) {
            return Err(DomainError::ExclusionOutOfRange {
                index,
                dim: self.dim(),
            });
        }
        self.exclusions.push(predicate);
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self, DomainError> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(DomainError::NegativeEpsilon(epsilon));
        }
        self.epsilon_exclude = epsilon;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn exclusions(&self) -> &[Expression] {
        &self.exclusions
    }

    pub fn epsilon_exclude(&self) -> f64 {
        self.epsilon_exclude
    }

    pub fn in_box(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(&self.bounds)
                .all(|(x, &(lo, hi))| (lo..=hi).contains(x))
    }

    /// Box membership and every exclusion satisfied. A predicate that cannot
    /// be evaluated at `p` rejects it.
    pub fn accepts(&self, p: &[f64]) -> bool {
        self.in_box(p)
            && self
                .exclusions
                .iter()
                .all(|e| e.evaluate(p).is_ok_and(|v| v.abs() >= self.epsilon_exclude))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error(
        "could only collect {accepted} of {wanted} valid points after {attempts} candidates \
         ({discarded} discarded for domain violations){}",
        last_error.as_ref().map(|e| format!("; last: {e}")).unwrap_or_default()
    )]
    Exhausted {
        wanted: usize,
        accepted: usize,
        discarded: usize,
        attempts: usize,
        last_error: Option<EvalError>,
    },
    #[error("sample plan asks for zero points")]
    NoPoints,
}

/// Points that survived a sweep, with the value computed at each.
#[derive(Debug, Clone)]
pub struct Sweep<T> {
    pub samples: Vec<(Point, T)>,
    /// Candidates dropped because the swept computation hit a domain violation.
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub points: usize,
    pub seed: u64,
    pub domain: Domain,
    pub tol: Tolerances,
}

impl SamplePlan {
    pub const DEFAULT_POINTS: usize = 200;
    pub const DEFAULT_SEED: u64 = 42;

    pub fn new(domain: Domain) -> Self {
        SamplePlan {
            points: Self::DEFAULT_POINTS,
            seed: Self::DEFAULT_SEED,
            domain,
            tol: Tolerances::default(),
        }
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points = points;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Unfiltered candidate stream: box centre, then the rotated Halton sequence.
    pub fn candidates(&self) -> impl Iterator<Item = Point> + '_ {
        let dim = self.dim();
        let bases = first_primes(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let bounds = &self.domain.bounds;
        let centre = std::iter::once(bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
        let lattice = (1u64..).map(move |i| {
            bounds
                .iter()
                .zip(&bases)
                .zip(&shift)
                .map(|((&(lo, hi), &base), &s)| {
                    let u = (radical_inverse(i, base) + s).fract();
                    lo + u * (hi - lo)
                })
                .collect::<Vec<f64>>()
        });
        centre
            .chain(lattice)
            .map(|coords| Point::new(coords).expect("box bounds are finite"))
    }

    fn max_attempts(&self) -> usize {
        self.points.saturating_mul(50).saturating_add(1000)
    }

    /// The first `points` candidates the domain accepts.
    pub fn accepted_points(&self) -> Result<Vec<Point>, SampleError> {
        Ok(self
            .sweep(|_| Ok::<(), EvalError>(()))?
            .samples
            .into_iter()
            .map(|(p, ())| p)
            .collect())
    }

    /// Applies `f` at accepted points until `points` evaluations succeed.
    ///
    /// A point where `f` reports a domain violation is discarded, logged and
    /// replaced by the next candidate.
    pub fn sweep<T, F>(&self, mut f: F) -> Result<Sweep<T>, SampleError>
    where
        F: FnMut(&Point) -> Result<T, EvalError>,
    {
        if self.points == 0 {
            return Err(SampleError::NoPoints);
        }
        let mut samples = Vec::with_capacity(self.points);
        let mut discarded = 0;
        let mut last_error = None;
        let limit = self.max_attempts();
        for (attempt, p) in self.candidates().enumerate() {
            if samples.len() == self.points {
                break;
            }
            if attempt >= limit {
                return Err(SampleError::Exhausted {
                    wanted: self.points,
                    accepted: samples.len(),
                    discarded,
                    attempts: attempt,
                    last_error,
                });
            }
            if !self.domain.accepts(&p) {
                continue;
            }
            match f(&p) {
                Ok(value) => samples.push((p, value)),
                Err(err) => {
                    warn!("discarding sample point {p}: {err}");
                    discarded += 1;
                    last_error = Some(err);
                }
            }
        }
        Ok(Sweep { samples, discarded })
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    while i > 0 {
        acc += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    acc
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| !candidate.is_multiple_of(p))
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}
