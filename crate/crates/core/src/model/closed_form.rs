use serde::Serialize;

use super::ModelParams;
use crate::{Error, Result};

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Single-patch fixation time of the diffusion limit,
/// `H(x) = -2 (x ln x + (1 - x) ln(1 - x))`, with `0 ln 0 = 0`.
///
/// Solves `-(x (1 - x) / 2) H'' = 1` on `(0, 1)` with `H(0) = H(1) = 0`.
pub fn entropy_h(x: f64) -> f64 {
    -2.0 * (xlnx(x) + xlnx(1.0 - x))
}

/// Fixation time of a single pooled patch of capacity `N1 + N2` started at
/// the averaged density `z = (x1 + d x2) / (1 + d)`: `(1 + d) H(z)`.
pub fn tau_lower(x: [f64; 2], d: f64) -> f64 {
    let z = (x[0] + d * x[1]) / (1.0 + d);
    (1.0 + d) * entropy_h(z.clamp(0.0, 1.0))
}

/// Small-exchange barrier `(x1 (1 - x2) + x2 (1 - x1)) / (12 kappa)`.
pub fn barrier_v(x: [f64; 2], kappa: f64) -> f64 {
    (x[0] * (1.0 - x[1]) + x[1] * (1.0 - x[0])) / (12.0 * kappa)
}

/// Small-distortion envelope `2 d (H(x2) + x1 x2^d + (1 - x1)(1 - x2)^d)`.
pub fn sandwich_width(x: [f64; 2], d: f64) -> f64 {
    let dd = x[0] * x[1].powf(d) + (1.0 - x[0]) * (1.0 - x[1]).powf(d);
    2.0 * d * (entropy_h(x[1]) + dd)
}

/// Difference between the two sides of
/// `(x1 (1 - x1) + d x2 (1 - x2)) / ((1 + d) z (1 - z)) = 1 - d (x1 - x2)^2 / ((1 + d)^2 z (1 - z))`.
/// Undefined (`None`) where `z (1 - z) = 0`.
pub fn identity_residual(x: [f64; 2], d: f64) -> Option<f64> {
    let z = (x[0] + d * x[1]) / (1.0 + d);
    let zz = z * (1.0 - z);
    if zz <= 0.0 {
        return None;
    }
    let lhs = (x[0] * (1.0 - x[0]) + d * x[1] * (1.0 - x[1])) / ((1.0 + d) * zz);
    let rhs = 1.0 - d * (x[0] - x[1]).powi(2) / ((1.0 + d).powi(2) * zz);
    Some(lhs - rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticBounds {
    /// Barrier `V`, a lower bound for the extinction time that blows up as
    /// `kappa -> 0`.
    pub barrier: f64,
    /// Width `2 d (H2 + D)` of the small-`d` envelope around `tau_lower`.
    pub sandwich_width: f64,
    /// Residual of the subsolution identity; `None` at `z in {0, 1}`.
    pub identity_residual: Option<f64>,
}

impl AnalyticBounds {
    pub fn evaluate(x: [f64; 2], d: f64, kappa: f64) -> Result<Self> {
        if kappa.is_nan() || kappa <= 0.0 {
            return Err(Error::InvalidParams(format!("the barrier needs kappa > 0, got {kappa}")));
        }
        Ok(Self {
            barrier: barrier_v(x, kappa),
            sandwich_width: sandwich_width(x, d),
            identity_residual: identity_residual(x, d),
        })
    }
}

pub fn analytic_bounds(x: [f64; 2], params: &ModelParams) -> Result<AnalyticBounds> {
    AnalyticBounds::evaluate(x, params.d(), params.kappa())
}
