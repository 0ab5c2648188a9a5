//! Numerical laboratory for a local-nonlocal elliptic transmission problem.
//!
//! On one side of an interface `Γ` a function satisfies a second-order
//! elliptic equation; on the other side a fractional-order nonlocal one, with
//! a nonlocal transmission term coupling the two across `Γ`. This crate
//! computes the explicit analytic quantities attached to that problem and
//! checks them against discrete solutions:
//!
//! * [`specfun`] — the 1D kernel symbol `q(s, α)`, the transverse kernel mass
//!   `A(n, s)`, Beta-type tail integrals, and principal-value quadrature.
//! * [`coeffs`] — spherical averages and moments of anisotropic kernels,
//!   conormal ratios, the critical exponent `α₀`, the transmission constant
//!   `M₀`, and the compatibility predicate.
//! * [`homog`] — construction and evaluation of the homogeneous interface
//!   profile `Φ`, plus residual checks of the two one-sided equations.
//! * [`fracops`] — pointwise evaluation of the nonlocal operators on explicit
//!   and grid functions in the dimension-reduced form.
//! * [`solver`] — Galerkin discretization of the variational problem on
//!   truncated 1D/2D domains with exterior Dirichlet data, interface
//!   flattening, reflection extension, and localization.
//! * [`analysis`] — boundary exponent fitting, transmission-ratio estimation,
//!   and oscillation-decay diagnostics on computed fields.
//! * [`cli`] — config-driven experiment runner behind the `translab` binary.
//!
//! Each capability has a runnable demo under `examples/`.

pub mod analysis;
pub mod cli;
pub mod coeffs;
pub mod fracops;
pub mod homog;
pub mod quad;
pub mod solver;
pub mod specfun;

pub use quad::QuadratureConfig;
