//! Parameters, the exchange map, the Wright-Fisher kernel and the
//! closed-form functions of the two-patch model.

mod binomial;
mod closed_form;
mod field;
mod kernel;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use binomial::{wf_sample, BinomialTable};
pub use closed_form::{
    analytic_bounds, barrier_v, entropy_h, identity_residual, sandwich_width, tau_lower, AnalyticBounds,
};
pub use field::Field;
pub use kernel::{bernstein_moments, generator_apply, step, BernsteinMoments, Kernel};

/// Patch capacities and exchange speed.
///
/// The distortion `d = N2 / N1` and time step `dt = 1 / N1` are derived, never
/// supplied, so `d * N1` is always an integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    n1: usize,
    n2: usize,
    kappa: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    n1: usize,
    n2: usize,
    kappa: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        Self::new(raw.n1, raw.n2, raw.kappa)
    }
}

impl ModelParams {
    pub fn new(n1: usize, n2: usize, kappa: f64) -> Result<Self> {
        if n2 == 0 {
            return Err(Error::InvalidParams("N2 must be at least 1".into()));
        }
        if n2 > n1 {
            return Err(Error::InvalidParams(format!(
                "patch 1 must be the larger patch (N2 = {n2} > N1 = {n1}, so d > 1)"
            )));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::InvalidParams(format!("kappa must be finite and nonnegative, got {kappa}")));
        }
        if kappa / n1 as f64 > 1.0 {
            return Err(Error::InvalidParams(format!(
                "kappa * dt = {} exceeds 1; the exchange matrix would have negative entries",
                kappa / n1 as f64
            )));
        }
        Ok(Self { n1, n2, kappa })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Distortion `N2 / N1`, in `(0, 1]`.
    pub fn d(&self) -> f64 {
        self.n2 as f64 / self.n1 as f64
    }

    /// Time represented by one step of the chain, `1 / N1`.
    pub fn dt(&self) -> f64 {
        1.0 / self.n1 as f64
    }

    /// Number of states `(N1 + 1)(N2 + 1)`.
    pub fn n_states(&self) -> usize {
        (self.n1 + 1) * (self.n2 + 1)
    }

    /// Row-major state index `j1 * (N2 + 1) + j2`.
    pub fn state_index(&self, s: GridState) -> usize {
        s.j1 * (self.n2 + 1) + s.j2
    }

    pub fn state_at(&self, index: usize) -> GridState {
        GridState { j1: index / (self.n2 + 1), j2: index % (self.n2 + 1) }
    }

    pub fn states(&self) -> impl Iterator<Item = GridState> + '_ {
        (0..self.n_states()).map(|i| self.state_at(i))
    }
}

/// Abundances of species alpha in each patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub j1: usize,
    pub j2: usize,
}

impl GridState {
    pub fn new(j1: usize, j2: usize, params: &ModelParams) -> Result<Self> {
        if j1 > params.n1 || j2 > params.n2 {
            return Err(Error::StateOutOfRange { j1, j2, n1: params.n1, n2: params.n2 });
        }
        Ok(Self { j1, j2 })
    }

    pub fn density(&self, params: &ModelParams) -> [f64; 2] {
        [self.j1 as f64 / params.n1 as f64, self.j2 as f64 / params.n2 as f64]
    }

    /// True at `(0, 0)` and `(N1, N2)`, where one species has taken over.
    pub fn is_absorbing(&self, params: &ModelParams) -> bool {
        (self.j1 == 0 && self.j2 == 0) || (self.j1 == params.n1 && self.j2 == params.n2)
    }

    /// Relabels the two species: `(j1, j2) -> (N1 - j1, N2 - j2)`.
    pub fn species_swapped(&self, params: &ModelParams) -> Self {
        Self { j1: params.n1 - self.j1, j2: params.n2 - self.j2 }
    }

    /// Exchanges the patches; only meaningful when `N1 == N2`.
    pub fn patches_swapped(&self) -> Self {
        Self { j1: self.j2, j2: self.j1 }
    }
}

/// Row-stochastic 2x2 exchange matrix `A = I - kappa * dt * M` with
/// `M = [[d, -d], [-1, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExchangeMatrix {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    d: f64,
}

impl ExchangeMatrix {
    /// Applies the exchange to a density pair.
    ///
    /// Evaluated as `x - kappa dt M x` so that equal densities are returned
    /// bit-for-bit and `x1 + d x2` is preserved to rounding.
    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let diff = x[0] - x[1];
        [(x[0] - self.a12 * diff).clamp(0.0, 1.0), (x[1] + self.a21 * diff).clamp(0.0, 1.0)]
    }

    /// Distortion this matrix was built with.
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a21, self.a22]]
    }
}

pub fn build_exchange_matrix(params: &ModelParams) -> Result<ExchangeMatrix> {
    let rate = params.kappa * params.dt();
    if rate > 1.0 {
        return Err(Error::InvalidParams(format!("kappa * dt = {rate} exceeds 1")));
    }
    let d = params.d();
    Ok(ExchangeMatrix { a11: 1.0 - rate * d, a12: rate * d, a21: rate, a22: 1.0 - rate, d })
}

/// Free-function form of [`ExchangeMatrix::apply`].
pub fn apply_exchange(x: [f64; 2], a: &ExchangeMatrix) -> [f64; 2] {
    a.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_parameters() {
        assert!(ModelParams::new(4, 0, 1.0).is_err());
        assert!(ModelParams::new(2, 4, 1.0).is_err());
        assert!(ModelParams::new(4, 2, -0.1).is_err());
        assert!(ModelParams::new(4, 2, f64::NAN).is_err());
        assert!(ModelParams::new(4, 2, 4.5).is_err());
        assert!(ModelParams::new(4, 2, 4.0).is_ok());
    }

    #[test]
    fn derived_quantities() {
        let p = ModelParams::new(4, 2, 1.0).unwrap();
        assert_eq!(p.d(), 0.5);
        assert_eq!(p.dt(), 0.25);
        assert_eq!(p.n_states(), 15);
        let s = GridState::new(3, 1, &p).unwrap();
        assert_eq!(p.state_at(p.state_index(s)), s);
        assert!(GridState::new(5, 0, &p).is_err());
    }

    #[test]
    fn exchange_matrix_small_case() {
        let p = ModelParams::new(4, 2, 1.0).unwrap();
        let a = build_exchange_matrix(&p).unwrap();
        assert_eq!(a.rows(), [[0.875, 0.125], [0.25, 0.75]]);
        assert_eq!(apply_exchange([1.0, 0.0], &a), [0.875, 0.25]);
    }

    #[test]
    fn exchange_fixes_pure_states() {
        let p = ModelParams::new(7, 3, 2.5).unwrap();
        let a = build_exchange_matrix(&p).unwrap();
        assert_eq!(a.apply([0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(a.apply([1.0, 1.0]), [1.0, 1.0]);
    }

    #[test]
    fn zero_kappa_is_identity() {
        let p = ModelParams::new(5, 5, 0.0).unwrap();
        let a = build_exchange_matrix(&p).unwrap();
        assert_eq!(a.rows(), [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn absorbing_and_mirrors() {
        let p = ModelParams::new(4, 2, 1.0).unwrap();
        assert!(GridState { j1: 0, j2: 0 }.is_absorbing(&p));
        assert!(GridState { j1: 4, j2: 2 }.is_absorbing(&p));
        assert!(!GridState { j1: 4, j2: 0 }.is_absorbing(&p));
        assert_eq!(GridState { j1: 1, j2: 2 }.species_swapped(&p), GridState { j1: 3, j2: 0 });
    }

    #[test]
    fn params_json_rejects_unknown_keys_and_bad_values() {
        let ok: ModelParams = serde_json::from_str(r#"{"n1":4,"n2":2,"kappa":1.0}"#).unwrap();
        assert_eq!(ok.d(), 0.5);
        assert!(serde_json::from_str::<ModelParams>(r#"{"n1":4,"n2":2,"kappa":1.0,"x":1}"#).is_err());
        assert!(serde_json::from_str::<ModelParams>(r#"{"n1":2,"n2":4,"kappa":1.0}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = ModelParams> {
            (1usize..200, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(n1, frac, k)| {
                let n2 = ((n1 as f64 * frac).round() as usize).clamp(1, n1);
                ModelParams::new(n1, n2, k * n1 as f64).unwrap()
            })
        }

        proptest! {
            #[test]
            fn exchange_is_stochastic_and_conservative(p in params(), x1 in 0.0f64..=1.0, x2 in 0.0f64..=1.0) {
                let a = build_exchange_matrix(&p).unwrap();
                for row in a.rows() {
                    prop_assert!((row[0] + row[1] - 1.0).abs() <= 2.0 * f64::EPSILON);
                    prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
                }
                let y = a.apply([x1, x2]);
                prop_assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
                let before = x1 + p.d() * x2;
                let after = y[0] + p.d() * y[1];
                prop_assert!((before - after).abs() <= 4.0 * f64::EPSILON);
            }
        }
    }
}
