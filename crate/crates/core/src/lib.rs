//! Radially symmetric equilibria of the aggregation equation
//! ρ_t − ∇·(ρ∇K∗ρ) = 0 with Newtonian repulsion and attraction |x|^q/q.
//!
//! - [`model`]: parameters, geometric constants, grids and profiles.
//! - [`kernels`]: angular kernels and product-integration weights.
//! - [`equilibrium`]: the eigenvalue problem T₁ρ̄₁ = λρ̄₁ and mass-M steady states.
//! - [`dynamics`]: radial evolution along characteristics with RK4.
//! - [`asymptotics`]: large-q and small-ε approximations.

pub mod asymptotics;
pub mod dynamics;
pub mod equilibrium;
pub mod kernels;
pub mod model;
pub mod quadrature;

pub use kernels::KernelError;
pub use model::{mass, GeometryConstants, ModelError, ModelParams, RadialGrid, RadialProfile, Regime};
