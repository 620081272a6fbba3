//! Monotone finite-difference discretization of the limiting generator
//!
//! ```text
//! L_d u = x1(1-x1)/2 u_{x1x1} + x2(1-x2)/(2d) u_{x2x2} - kappa M x . grad u,   M = [[d, -d], [-1, 1]]
//! ```
//!
//! on a uniform `(n+1) x (n+1)` grid of `[0, 1]^2`. Diffusion uses central
//! second differences, drift is upwinded per node and axis, and only the
//! corners `(0, 0)` and `(1, 1)` carry Dirichlet data. Every other boundary
//! node is an unknown governed by the degenerate operator itself. The
//! assembled `-L_d` is certified to be an M-matrix, the discrete form of the
//! comparison principle.

mod banded;
mod operator;
mod single_patch;
mod solve;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use banded::BandedLu;
pub use operator::{discretize_ld, DiscreteOperator, MMatrixCertificate, SparseMatrix};
pub use single_patch::{solve_single_patch, SinglePatchSolution};
pub use solve::{
    solve_elliptic, solve_parabolic, EllipticSolution, ParabolicSolution, ParabolicSolver, ELLIPTIC_BACKWARD_TOL,
    ELLIPTIC_RESIDUAL_TOL,
};

/// Uniform grid with spacing `h = 1 / n` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct PdeGrid {
    n: usize,
}

impl PdeGrid {
    pub const MIN_N: usize = 4;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_N {
            return Err(Error::InvalidGrid(format!("need n >= {}, got {n}", Self::MIN_N)));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn n_nodes(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn index(&self, i: usize, k: usize) -> usize {
        i * (self.n + 1) + k
    }

    /// True for the two Dirichlet corners.
    pub fn is_dirichlet(&self, i: usize, k: usize) -> bool {
        (i == 0 && k == 0) || (i == self.n && k == self.n)
    }
}

impl TryFrom<usize> for PdeGrid {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        Self::new(n)
    }
}

impl From<PdeGrid> for usize {
    fn from(g: PdeGrid) -> usize {
        g.n
    }
}

pub(crate) fn check_coefficients(d: f64, kappa: f64) -> Result<()> {
    if !(d > 0.0 && d <= 1.0) {
        return Err(Error::InvalidParams(format!("distortion must lie in (0, 1], got {d}")));
    }
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::InvalidParams(format!("kappa must be finite and nonnegative, got {kappa}")));
    }
    Ok(())
}
