//! Numerical laboratory for a two-patch, two-species neutral metacommunity.
//!
//! The discrete model alternates a deterministic exchange between two patches
//! of capacities `N1 >= N2` with independent Wright-Fisher resampling inside
//! each patch. The crate provides
//!
//! * [`model`]: parameters, the exchange map, the binomial kernel and the
//!   closed-form functions (entropy, lower bounds, barriers);
//! * [`montecarlo`]: seeded, order-independent trajectory simulation;
//! * [`exact`]: the dense transition matrix, expected extinction times and the
//!   discrete semigroup;
//! * [`pde`]: a monotone finite-difference discretization of the limiting
//!   degenerate generator with elliptic, parabolic and 1-D solvers;
//! * [`analysis`]: comparison reports, convergence studies and parameter
//!   sweeps built on the modules above.

pub mod analysis;
pub mod error;
pub mod exact;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod pde;
mod sum;

pub use error::{Error, Result};
pub use model::{ExchangeMatrix, Field, GridState, ModelParams};
