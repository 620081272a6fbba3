use serde::Serialize;

use crate::model::entropy_h;
use crate::{Error, Result};

/// Numerical solution of `-(z(1-z) / (2(1+d))) g'' = 1`, `g(0) = g(1) = 0`,
/// next to the closed form `(1+d) H(z)`.
#[derive(Debug, Clone, Serialize)]
pub struct SinglePatchSolution {
    pub n: usize,
    pub d: f64,
    pub values: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub max_error: f64,
    /// Max error over nodes with `min(z, 1-z) >= 0.1`.
    pub interior_max_error: f64,
}

impl SinglePatchSolution {
    pub fn z(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }
}

pub fn solve_single_patch(d: f64, n: usize) -> Result<SinglePatchSolution> {
    super::check_coefficients(d, 0.0)?;
    if n < super::PdeGrid::MIN_N {
        return Err(Error::InvalidGrid(format!("need n >= {}, got {n}", super::PdeGrid::MIN_N)));
    }
    let h = 1.0 / n as f64;
    // Interior unknowns 1..n-1; Thomas algorithm on the symmetric stencil.
    let m = n - 1;
    let coef: Vec<f64> = (1..n)
        .map(|i| {
            let z = i as f64 * h;
            z * (1.0 - z) / (2.0 * (1.0 + d) * h * h)
        })
        .collect();
    let mut diag: Vec<f64> = coef.iter().map(|c| 2.0 * c).collect();
    let mut rhs = vec![1.0; m];
    for j in 1..m {
        let l = -coef[j] / diag[j - 1];
        // Super-diagonal of row j-1 is -coef[j-1].
        diag[j] -= l * -coef[j - 1];
        rhs[j] -= l * rhs[j - 1];
    }
    let mut g = vec![0.0; n + 1];
    g[m] = rhs[m - 1] / diag[m - 1];
    for j in (0..m - 1).rev() {
        g[j + 1] = (rhs[j] + coef[j] * g[j + 2]) / diag[j];
    }
    let closed_form: Vec<f64> = (0..=n).map(|i| (1.0 + d) * entropy_h(i as f64 * h)).collect();
    let mut max_error: f64 = 0.0;
    let mut interior_max_error: f64 = 0.0;
    for i in 0..=n {
        let e = (g[i] - closed_form[i]).abs();
        max_error = max_error.max(e);
        let z = i as f64 * h;
        if z.min(1.0 - z) >= 0.1 - 1e-12 {
            interior_max_error = interior_max_error.max(e);
        }
    }
    Ok(SinglePatchSolution { n, d, values: g, closed_form, max_error, interior_max_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_values_and_midpoint() {
        let s = solve_single_patch(1.0, 256).unwrap();
        assert_eq!(s.values[0], 0.0);
        assert_eq!(s.values[256], 0.0);
        let mid = s.values[128];
        assert!((mid - 4.0 * 2f64.ln()).abs() < 0.01, "{mid}");
        let coarse = solve_single_patch(1.0, 64).unwrap();
        let e_coarse = (coarse.values[32] - 4.0 * 2f64.ln()).abs();
        assert!((mid - 4.0 * 2f64.ln()).abs() < e_coarse);
    }

    #[test]
    fn discrete_equation_holds() {
        let (d, n) = (0.3, 50);
        let s = solve_single_patch(d, n).unwrap();
        let h = 1.0 / n as f64;
        for i in 1..n {
            let z = i as f64 * h;
            let g = &s.values;
            let lhs = -z * (1.0 - z) / (2.0 * (1.0 + d)) * (g[i - 1] - 2.0 * g[i] + g[i + 1]) / (h * h);
            assert!((lhs - 1.0).abs() < 1e-9, "i={i}: {lhs}");
        }
    }

    #[test]
    fn interior_error_halves() {
        let a = solve_single_patch(0.5, 128).unwrap().interior_max_error;
        let b = solve_single_patch(0.5, 256).unwrap().interior_max_error;
        assert!(a / b >= 1.5, "{a} {b}");
    }
}
