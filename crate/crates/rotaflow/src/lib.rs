//! rotaflow: a numerical laboratory for long-time asymptotics of periodic
//! ODE flows X′ = b(X) on the d-torus.
//!
//! The crate integrates lattice-equivariant flows with exact winding
//! bookkeeping, estimates rotation vectors ζ = lim X(t,x)/t and Herman
//! rotation sets, builds occupation measures and checks the divergence-curl
//! characterization of invariant measures, solves the periodic conductivity
//! cell problem (homogenized matrix A* and electric fields b_λ = DU·λ), and
//! reproduces the transport-homogenization limit u_ε → u₀(x + tζ).
//!
//! Entry points by capability:
//! - [`fields`]: the analytic catalog b = ρΦ, periodic/harmonic means.
//! - [`integrate`]: adaptive embedded 4(5) integration on the lifted space.
//! - [`rotation`]: rotation vectors, rotation-set classification, sweeps.
//! - [`measures`]: occupation histograms and divergence-curl residuals.
//! - [`elliptic`]: spectral cell-problem solver and A*.
//! - [`homogenize`]: method-of-characteristics transport experiments.
//! - [`cli`]: the reproducible experiment runner behind the `rotaflow` binary.
//!
//! Each major capability has a runnable example under `examples/`.

pub mod cli;
pub mod elliptic;
pub mod fields;
pub mod homogenize;
pub mod integrate;
pub mod measures;
pub mod rotation;
pub mod torus;

pub use fields::{catalog_build, catalog_list, FieldSpec};
pub use torus::{torus_distance, LiftedState, TorusPoint};
