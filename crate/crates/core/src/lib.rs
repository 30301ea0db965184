//! Optimal control in the coefficients of a degenerate elliptic equation.
//!
//! The state equation is
//!
//! ```text
//! -div(ρ ∇y) + y = f   in Ω
//!              y = 0   on Γ_D
//!       ρ ∂y/∂ν = 0   on Γ_N
//! ```
//!
//! and the control is the weight ρ itself, restricted to an admissible set of
//! cellwise bounds `ξ₁ ≤ ρ ≤ ξ₂` with prescribed mass `∫ρ = m`. The cost is
//!
//! ```text
//! I(ρ, y) = ∫|y - y_d|² + ∫ρ|∇y|² + ∫|Dρ|
//! ```
//!
//! The crate discretizes Ω by a structured triangulation ([`mesh`]), uses
//! piecewise-constant weights with an exact jump-based total variation
//! ([`control`]), conforming P1 elements for the state ([`solver`]), an adjoint
//! for the reduced gradient ([`objective`]) and projected gradient descent
//! ([`optimizer`]). [`diagnostics`] reports convergence of weight sequences in
//! the variable spaces `L²(Ω, ρ_k dx)`.
//!
//! The `degenopt` binary is a thin wrapper around [`cli`]; see the crate's
//! `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod config;
pub mod control;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod io;
pub mod mesh;
pub mod objective;
pub mod optimizer;
pub mod solver;

pub use control::{AdmissibleSet, WeightField};
pub use error::{Error, Result};
pub use mesh::{BoundarySpec, BoundaryTag, Mesh, Rect};
pub use objective::{CostBreakdown, CostWeights};
pub use optimizer::{OptimizeConfig, OptimizeTrace};
pub use solver::{NodalField, SolveReport};
