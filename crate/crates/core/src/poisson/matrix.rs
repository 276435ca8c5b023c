use std::fmt;

use thiserror::Error;

use crate::expr::{EvalError, Expression};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("entry ({i}, {j}) is not strictly upper triangular (need i < j)")]
    NotUpper { i: usize, j: usize },
    #[error("entry ({i}, {j}) is outside a {n}x{n} matrix")]
    OutOfRange { i: usize, j: usize, n: usize },
    #[error("canonical symplectic matrix needs an even dimension, got {0}")]
    OddDimension(usize),
}

/// Skew-symmetric matrix of expressions, stored as its strict upper triangle.
///
/// The lower triangle and diagonal are implied, so the type cannot hold a
/// matrix that is not skew.
#[derive(Clone, PartialEq)]
pub struct StructureMatrix {
    n: usize,
    upper: Vec<Expression>,
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl StructureMatrix {
    pub fn zeros(n: usize) -> Self {
        StructureMatrix {
            n,
            upper: vec![Expression::zero(); n * n.saturating_sub(1) / 2],
        }
    }

    /// Builds from `(i, j, J_ij)` triples with zero-based `i < j`.
    pub fn from_entries(
        n: usize,
        entries: impl IntoIterator<Item = (usize, usize, Expression)>,
    ) -> Result<Self, MatrixError> {
        let mut m = Self::zeros(n);
        for (i, j, e) in entries {
            m.set(i, j, e)?;
        }
        Ok(m)
    }

    /// Canonical symplectic matrix `[[0, I], [-I, 0]]`.
    pub fn canonical(n: usize) -> Result<Self, MatrixError> {
        if !n.is_multiple_of(2) {
            return Err(MatrixError::OddDimension(n));
        }
        let half = n / 2;
        Self::from_entries(n, (0..half).map(|i| (i, i + half, Expression::one())))
    }

    pub fn set(&mut self, i: usize, j: usize, e: Expression) -> Result<(), MatrixError> {
        if i >= self.n || j >= self.n {
            return Err(MatrixError::OutOfRange { i, j, n: self.n });
        }
        if i >= j {
            return Err(MatrixError::NotUpper { i, j });
        }
        self.upper[upper_index(self.n, i, j)] = e;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `J_ij` for any `i, j`; the lower triangle is the negated upper one.
    pub fn entry(&self, i: usize, j: usize) -> Expression {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.upper[upper_index(self.n, i, j)].clone(),
            std::cmp::Ordering::Greater => -&self.upper[upper_index(self.n, j, i)],
            std::cmp::Ordering::Equal => Expression::zero(),
        }
    }

    /// Stored entries `(i, j, J_ij)` with `i < j`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, &Expression)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, &self.upper[upper_index(n, i, j)])))
    }

    /// Largest variable index referenced by any entry.
    pub fn max_var(&self) -> Option<usize> {
        self.upper.iter().filter_map(Expression::max_var).max()
    }

    /// Entry-wise product `factor · J`.
    pub fn scaled(&self, factor: &Expression) -> Self {
        StructureMatrix {
            n: self.n,
            upper: self.upper.iter().map(|e| factor * e).collect(),
        }
    }

    /// Dense evaluation; `M[j][i] = -M[i][j]` holds exactly.
    pub fn evaluate(&self, p: &[f64]) -> Result<Vec<Vec<f64>>, EvalError> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (i, j, e) in self.upper_entries() {
            let v = e.evaluate(p)?;
            m[i][j] = v;
            m[j][i] = -v;
        }
        Ok(m)
    }

    /// Symbolic `J·v`.
    pub fn apply(&self, v: &[Expression]) -> Vec<Expression> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .filter(|&j| j != i)
                    .fold(Expression::zero(), |acc, j| acc + self.entry(i, j) * &v[j])
            })
            .collect()
    }

    /// Prints the upper triangle as `J i j = <expr>` lines (one-based indices).
    pub fn display<'a, S: AsRef<str>>(&'a self, names: &'a [S]) -> impl fmt::Display + 'a {
        struct D<'a, S>(&'a StructureMatrix, &'a [S]);
        impl<S: AsRef<str>> fmt::Display for D<'_, S> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                for (i, j, e) in self.0.upper_entries() {
                    if !e.is_zero() {
                        writeln!(f, "J {} {} = {}", i + 1, j + 1, e.display(self.1))?;
                    }
                }
                Ok(())
            }
        }
        D(self, names)
    }
}

impl fmt::Debug for StructureMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_map();
        for (i, j, e) in self.upper_entries() {
            list.entry(&(i, j), &e.to_string());
        }
        list.finish()
    }
}

/// Numerical rank by Gaussian elimination with full pivoting.
///
/// A pivot counts when its magnitude exceeds `pivot_rel · ‖M‖∞`.
pub fn numerical_rank(mut rows: Vec<Vec<f64>>, pivot_rel: f64) -> usize {
    let norm = rows
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let tol = pivot_rel * norm;
    let (m, n) = (rows.len(), rows.first().map_or(0, Vec::len));
    let mut rank = 0;
    while rank < m.min(n) {
        let mut best = (rank, rank, 0.0f64);
        for (r, row) in rows.iter().enumerate().skip(rank) {
            for (c, v) in row.iter().enumerate().skip(rank) {
                if v.abs() > best.2 {
                    best = (r, c, v.abs());
                }
            }
        }
        if best.2.is_nan() || best.2 <= tol {
            break;
        }
        rows.swap(rank, best.0);
        for row in &mut rows {
            row.swap(rank, best.1);
        }
        let pivot_row = rows[rank].clone();
        for row in rows.iter_mut().skip(rank + 1) {
            let factor = row[rank] / pivot_row[rank];
            for (x, &p) in row.iter_mut().zip(&pivot_row).skip(rank) {
                *x -= factor * p;
            }
        }
        rank += 1;
    }
    rank
}
