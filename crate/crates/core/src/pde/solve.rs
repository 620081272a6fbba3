use serde::Serialize;

use super::{BandedLu, DiscreteOperator};
use crate::model::Field;
use crate::{Error, Result};

/// Absolute residual target for the elliptic solve.
pub const ELLIPTIC_RESIDUAL_TOL: f64 = 1e-10;
/// Normwise backward error accepted when the absolute target sits below the
/// floating-point floor of a badly scaled system.
pub const ELLIPTIC_BACKWARD_TOL: f64 = 1e-14;

const MAX_REFINEMENTS: usize = 4;

#[derive(Debug, Clone, Serialize)]
pub struct EllipticSolution {
    #[serde(skip)]
    pub tau: Field,
    /// `max |1 - (-L_h tau)|` over non-Dirichlet nodes.
    pub residual: f64,
    /// `|r| / (|A| |tau| + |b|)` in the infinity norm.
    pub backward_error: f64,
    pub refinements: usize,
    pub min_interior: f64,
    pub max_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParabolicSolution {
    #[serde(skip)]
    pub u: Field,
    pub dt: f64,
    pub steps: usize,
    /// Minimum over all nodes and time levels.
    pub min_value: f64,
    /// `|u(t_m)|_inf` for `m = 0..=steps`.
    pub sup_norms: Vec<f64>,
    pub max_step_residual: f64,
}

fn residual_of(op: &DiscreteOperator, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = op.matrix().mul_vec(x);
    b.iter().zip(ax).map(|(b, a)| b - a).collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `-L_h tau = 1` with `tau = 0` at the corners.
pub fn solve_elliptic(op: &DiscreteOperator) -> Result<EllipticSolution> {
    let cert = op.certificate();
    if !cert.nonsingular {
        return Err(Error::Singular(format!(
            "elliptic problem at d={}, kappa={} has {} nodes cut off from the corners",
            op.d(),
            op.kappa(),
            cert.zero_rows
        )));
    }
    let grid = op.grid();
    let n = grid.n();
    let nodes = grid.n_nodes();
    let lu = BandedLu::factor(nodes, n + 1, op.matrix().entries())?;
    let mut b = vec![1.0; nodes];
    b[0] = 0.0;
    b[nodes - 1] = 0.0;
    let mut x = b.clone();
    lu.solve_in_place(&mut x);
    let norm_a = op.matrix().norm_inf();
    let mut refinements = 0;
    let (residual, backward) = loop {
        let r = residual_of(op, &x, &b);
        let res = sup(&r);
        let backward = res / (norm_a * sup(&x) + sup(&b));
        let ok = res <= ELLIPTIC_RESIDUAL_TOL || backward <= ELLIPTIC_BACKWARD_TOL;
        if ok && refinements > 0 {
            break (res, backward);
        }
        if refinements == MAX_REFINEMENTS {
            if ok {
                break (res, backward);
            }
            return Err(Error::SolveFailed {
                residual: res,
                tolerance: ELLIPTIC_RESIDUAL_TOL,
                context: format!("elliptic solve, backward error {backward:e}"),
            });
        }
        let mut dx = r;
        lu.solve_in_place(&mut dx);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
        refinements += 1;
    };
    let tau = Field::from_values(n, n, x)?;
    let min_interior = (1..nodes - 1).map(|p| tau.values()[p]).fold(f64::INFINITY, f64::min);
    let max_value = tau.max();
    Ok(EllipticSolution { tau, residual, backward_error: backward, refinements, min_interior, max_value })
}

/// Implicit Euler for `u_t = L_h u` with one factorization of
/// `I + dt (-L_h)` shared by every initial field.
#[derive(Debug, Clone)]
pub struct ParabolicSolver<'a> {
    op: &'a DiscreteOperator,
    lu: BandedLu,
    dt: f64,
    nt: usize,
    /// `|I + dt (-L_h)|_inf`
    step_norm: f64,
}

impl<'a> ParabolicSolver<'a> {
    pub fn new(op: &'a DiscreteOperator, t_final: f64, nt: usize) -> Result<Self> {
        if nt == 0 || !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidParams(format!("need nt >= 1 and T > 0, got nt={nt}, T={t_final}")));
        }
        let nodes = op.grid().n_nodes();
        let dt = t_final / nt as f64;
        let last = nodes - 1;
        // Corner rows stay identity: the field is frozen there.
        let entries = op.matrix().entries().map(|(r, c, v)| {
            if r == 0 || r == last {
                (r, c, v)
            } else if r == c {
                (r, c, 1.0 + dt * v)
            } else {
                (r, c, dt * v)
            }
        });
        let lu = BandedLu::factor(nodes, op.grid().n() + 1, entries)?;
        let step_norm = 1.0 + dt * op.matrix().norm_inf();
        Ok(Self { op, lu, dt, nt, step_norm })
    }

    pub fn run(&self, f: &Field) -> Result<ParabolicSolution> {
        let op = self.op;
        op.check_field(f)?;
        let nodes = op.grid().n_nodes();
        let last = nodes - 1;
        let corners = [f.values()[0], f.values()[last]];
        if corners.iter().any(|c| *c != 0.0) {
            return Err(Error::InvalidParams(format!("initial field must vanish at both corners, got {corners:?}")));
        }
        let dt = self.dt;
        let mut u = f.values().to_vec();
        let mut min_value = f.min();
        let mut sup_norms = Vec::with_capacity(self.nt + 1);
        sup_norms.push(f.sup_norm());
        let mut max_step_residual: f64 = 0.0;
        for step in 0..self.nt {
            let prev = u.clone();
            self.lu.solve_in_place(&mut u);
            // Residual of (I + dt A) u = prev on the free rows.
            let au = op.matrix().mul_vec(&u);
            let res = (1..last).map(|p| (u[p] + dt * au[p] - prev[p]).abs()).fold(0.0, f64::max);
            // Normwise backward error, as for the elliptic solve.
            let tol = ELLIPTIC_BACKWARD_TOL * (self.step_norm * sup(&u) + sup(&prev));
            if res.is_nan() || res > tol {
                return Err(Error::SolveFailed {
                    residual: res,
                    tolerance: tol,
                    context: format!("implicit Euler step {}", step + 1),
                });
            }
            max_step_residual = max_step_residual.max(res);
            min_value = u.iter().copied().fold(min_value, f64::min);
            sup_norms.push(sup(&u));
        }
        let n = op.grid().n();
        Ok(ParabolicSolution {
            u: Field::from_values(n, n, u)?,
            dt,
            steps: self.nt,
            min_value,
            sup_norms,
            max_step_residual,
        })
    }
}

/// Implicit Euler for `u_t = L_h u` up to `t_final` in `nt` equal steps.
pub fn solve_parabolic(op: &DiscreteOperator, f: &Field, t_final: f64, nt: usize) -> Result<ParabolicSolution> {
    op.check_field(f)?;
    ParabolicSolver::new(op, t_final, nt)?.run(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{discretize_ld, PdeGrid};
    use proptest::prelude::*;

    fn op(n: usize, d: f64, kappa: f64) -> DiscreteOperator {
        discretize_ld(PdeGrid::new(n).unwrap(), d, kappa).unwrap()
    }

    #[test]
    fn elliptic_corners_symmetry_positivity() {
        for (d, kappa) in [(1.0, 1.0), (0.5, 2.0), (0.25, 0.5)] {
            let n = 32;
            let s = solve_elliptic(&op(n, d, kappa)).unwrap();
            assert!(s.residual <= ELLIPTIC_RESIDUAL_TOL);
            assert_eq!(s.tau.get(0, 0), 0.0);
            assert_eq!(s.tau.get(n, n), 0.0);
            assert!(s.min_interior > 0.0);
            for i in 0..=n {
                for k in 0..=n {
                    let a = s.tau.get(i, k);
                    let b = s.tau.get(n - i, n - k);
                    assert!((a - b).abs() <= 5e-9, "({i},{k}) {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn elliptic_refuses_disconnected_operator() {
        assert!(matches!(solve_elliptic(&op(8, 0.5, 0.0)), Err(Error::Singular(_))));
    }

    #[test]
    fn parabolic_zero_stays_zero() {
        let o = op(16, 0.5, 1.0);
        let s = solve_parabolic(&o, &Field::zeros(16, 16), 1.0, 10).unwrap();
        assert_eq!(s.u.sup_norm(), 0.0);
    }

    #[test]
    fn parabolic_contracts_sup_norm() {
        for kappa in [0.0, 1.0, 4.0] {
            let o = op(32, 0.5, kappa);
            let f = Field::from_fn(32, 32, |x1, _| x1 * (1.0 - x1));
            let s = solve_parabolic(&o, &f, 2.0, 40).unwrap();
            assert!(s.min_value >= -1e-10);
            for w in s.sup_norms.windows(2) {
                assert!(w[1] <= w[0] + 1e-14, "{w:?}");
            }
        }
    }

    #[test]
    fn parabolic_rejects_corner_data() {
        let o = op(8, 1.0, 1.0);
        let f = Field::from_fn(8, 8, |x1, x2| x1 + x2);
        assert!(solve_parabolic(&o, &f, 1.0, 4).is_err());
        assert!(solve_parabolic(&o, &Field::zeros(8, 8), 1.0, 0).is_err());
        assert!(solve_parabolic(&o, &Field::zeros(9, 9), 1.0, 1).is_err());
    }

    #[test]
    fn long_time_parabolic_tends_to_zero() {
        // Only the corners absorb, and their data is zero.
        let o = op(16, 1.0, 1.0);
        let f = Field::from_fn(16, 16, |x1, x2| x1 * (1.0 - x2));
        let s = solve_parabolic(&o, &f, 60.0, 300).unwrap();
        assert!(s.u.sup_norm() < 1e-3, "{}", s.u.sup_norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn discrete_comparison_principle(
            seed in prop::collection::vec(0.0f64..1.0, 81),
            d in 0.05f64..=1.0,
            kappa in 0.01f64..5.0,
        ) {
            // Build rhs backward from w >= 0, then solve A v = rhs and check v >= 0.
            let o = op(8, d, kappa);
            let w = Field::from_values(8, 8, seed).unwrap();
            let rhs = o.matrix().mul_vec(w.values());
            let mut v = rhs.clone();
            let lu = BandedLu::factor(81, 9, o.matrix().entries()).unwrap();
            lu.solve_in_place(&mut v);
            let scale = w.sup_norm().max(1.0);
            for (a, b) in v.iter().zip(w.values()) {
                prop_assert!(*a >= -1e-9 * scale);
                prop_assert!((a - b).abs() <= 1e-8 * scale);
            }
        }

        #[test]
        fn parabolic_preserves_sign(
            seed in prop::collection::vec(0.0f64..1.0, 81),
            d in 0.05f64..=1.0,
            kappa in 0.0f64..5.0,
            nt in 1usize..20,
        ) {
            let o = op(8, d, kappa);
            let mut f = Field::from_values(8, 8, seed).unwrap();
            f.set(0, 0, 0.0);
            f.set(8, 8, 0.0);
            let s = solve_parabolic(&o, &f, 1.0, nt).unwrap();
            prop_assert!(s.min_value >= -1e-10);
            prop_assert!(s.sup_norms.last().unwrap() <= &(f.sup_norm() + 1e-12));
        }
    }
}
