//! Structure-preserving new-time transformations of Poisson systems.
//!
//! A finite-dimensional Poisson system `dx/dt = J(x)·∇H(x)` is described by a
//! skew-symmetric structure matrix `J` satisfying the Jacobi identity, a
//! Hamiltonian `H` and a set of Casimir invariants. A new-time transformation
//! `dτ = dt/η(x)` multiplies the vector field by `η`. This crate decides,
//! over a sampled domain, whether the reparametrized field can be written as
//! `J·∇H*` with the *same* `J`, and builds `H*` when it can.
//!
//! * [`expr`]: expression DSL with exact symbolic differentiation
//! * [`poisson`]: system model plus skew/Jacobi/Casimir/rank checks
//! * [`ntt`]: gradient and functional-dependence criteria, rescaling,
//!   implicit relations and classification of rescaled structures
//! * [`dynamics`]: fixed-step RK4 cross-validation of both flows

pub mod dynamics;
pub mod expr;
pub mod ntt;
pub mod poisson;

pub use expr::{parse, Expression, Point};
pub use poisson::{PoissonSystem, SamplePlan, StructureMatrix, VerificationReport};
