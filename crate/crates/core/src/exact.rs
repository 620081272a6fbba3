//! Dense transition matrix of the split-step chain, exact expected
//! extinction times and the discrete semigroup.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{Field, GridState, Kernel, ModelParams};
use crate::{Error, Result};

/// Default cap on `(N1 + 1)(N2 + 1)` for dense construction.
pub const DEFAULT_STATE_CAP: usize = 20_000;

/// Residual tolerance of the hitting-time system, in time units.
pub const HITTING_RESIDUAL_TOL: f64 = 1e-10;

/// Row-major dense transition matrix over states `j1 * (N2 + 1) + j2`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    params: ModelParams,
    n_states: usize,
    data: Vec<f64>,
    renormalized_rows: usize,
    max_pmf_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixStats {
    pub n1: usize,
    pub n2: usize,
    pub kappa: f64,
    pub n_states: usize,
    pub min_entry: f64,
    pub max_row_sum_deviation: f64,
    /// Rows whose binomial factors were rescaled because their sum was off by
    /// more than `1e-12`.
    pub renormalized_rows: usize,
    pub max_pmf_deviation: f64,
}

pub fn build_transition_matrix(params: &ModelParams) -> Result<TransitionMatrix> {
    build_transition_matrix_with_cap(params, DEFAULT_STATE_CAP)
}

pub fn build_transition_matrix_with_cap(params: &ModelParams, cap: usize) -> Result<TransitionMatrix> {
    let n_states = params.n_states();
    if n_states > cap {
        return Err(Error::StateCapExceeded { states: n_states, cap });
    }
    let kernel = Kernel::new(params)?;
    let (n1, n2) = (params.n1(), params.n2());
    let mut data = vec![0.0; n_states * n_states];
    let deviations: Vec<f64> = data
        .par_chunks_mut(n_states)
        .enumerate()
        .map_init(
            || (vec![0.0; n1 + 1], vec![0.0; n2 + 1]),
            |(m1, m2), (idx, row)| {
                let dev = kernel.marginals_into(params.state_at(idx), m1, m2);
                for (j1, w1) in m1.iter().enumerate() {
                    let out = &mut row[j1 * (n2 + 1)..(j1 + 1) * (n2 + 1)];
                    for (slot, w2) in out.iter_mut().zip(m2.iter()) {
                        *slot = w1 * w2;
                    }
                }
                dev
            },
        )
        .collect();
    Ok(TransitionMatrix {
        params: *params,
        n_states,
        data,
        renormalized_rows: deviations.iter().filter(|d| **d > 1e-12).count(),
        max_pmf_deviation: deviations.iter().copied().fold(0.0, f64::max),
    })
}

impl TransitionMatrix {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.n_states..(from + 1) * self.n_states]
    }

    pub fn get(&self, from: GridState, to: GridState) -> f64 {
        self.row(self.params.state_index(from))[self.params.state_index(to)]
    }

    /// `E(x' | x = s)` computed from the stored row.
    pub fn conditional_mean(&self, s: GridState) -> [f64; 2] {
        let row = self.row(self.params.state_index(s));
        let mut mean = [0.0, 0.0];
        for (idx, w) in row.iter().enumerate() {
            let x = self.params.state_at(idx).density(&self.params);
            mean[0] += w * x[0];
            mean[1] += w * x[1];
        }
        mean
    }

    /// `E(|x' - x|^2 | x = s)`.
    pub fn conditional_second_moment(&self, s: GridState) -> f64 {
        let x = s.density(&self.params);
        self.row(self.params.state_index(s))
            .iter()
            .enumerate()
            .map(|(idx, w)| {
                let y = self.params.state_at(idx).density(&self.params);
                w * ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2))
            })
            .sum()
    }

    /// One kernel application `(K f)(s) = sum_t P(s, t) f(t)`.
    pub fn apply(&self, f: &Field) -> Result<Field> {
        self.check_field(f)?;
        let values = self
            .data
            .par_chunks(self.n_states)
            .map(|row| row.iter().zip(f.values()).map(|(p, v)| p * v).sum())
            .collect();
        Field::from_values(self.params.n1(), self.params.n2(), values)
    }

    /// `K^n f`.
    pub fn iterate(&self, f: &Field, n: usize) -> Result<Field> {
        self.check_field(f)?;
        let mut u = f.clone();
        for _ in 0..n {
            u = self.apply(&u)?;
        }
        Ok(u)
    }

    pub fn stats(&self) -> MatrixStats {
        let mut min_entry = f64::INFINITY;
        let mut max_dev: f64 = 0.0;
        for row in self.data.chunks(self.n_states) {
            min_entry = row.iter().copied().fold(min_entry, f64::min);
            max_dev = max_dev.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        MatrixStats {
            n1: self.params.n1(),
            n2: self.params.n2(),
            kappa: self.params.kappa(),
            n_states: self.n_states,
            min_entry,
            max_row_sum_deviation: max_dev,
            renormalized_rows: self.renormalized_rows,
            max_pmf_deviation: self.max_pmf_deviation,
        }
    }

    fn check_field(&self, f: &Field) -> Result<()> {
        if f.n1() != self.params.n1() || f.n2() != self.params.n2() {
            return Err(Error::GridMismatch(f.n1() + 1, f.n2() + 1, self.params.n1() + 1, self.params.n2() + 1));
        }
        Ok(())
    }
}

/// Expected extinction times `E_x(Theta_N)` on the chain grid, in time units.
#[derive(Debug, Clone, Serialize)]
pub struct HittingTimeTable {
    pub params: ModelParams,
    pub times: Field,
    /// Infinity norm of `N (I - P~) T - 1` after refinement.
    pub residual: f64,
}

impl HittingTimeTable {
    pub fn at(&self, s: GridState) -> f64 {
        self.times.get(s.j1, s.j2)
    }

    /// CSV with header `j1,j2,x1,x2,T`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.times.write_csv(w, ["j1", "j2", "x1", "x2", "T"])
    }
}

pub fn solve_hitting_times(params: &ModelParams) -> Result<HittingTimeTable> {
    if params.kappa() == 0.0 {
        return Err(Error::NoAbsorptionPath { n1: params.n1(), n2: params.n2() });
    }
    let matrix = build_transition_matrix(params)?;
    solve_hitting_times_from(&matrix)
}

/// Solves `N (I - P~) T = 1` over the transient states, `P~` being the
/// restriction of the matrix to everything but `(0, 0)` and `(N1, N2)`.
pub fn solve_hitting_times_from(matrix: &TransitionMatrix) -> Result<HittingTimeTable> {
    let params = *matrix.params();
    if params.kappa() == 0.0 {
        return Err(Error::NoAbsorptionPath { n1: params.n1(), n2: params.n2() });
    }
    let n_states = matrix.n_states();
    // Transient states are exactly the indices 1..n_states-1.
    let m = n_states - 2;
    let mut times = Field::zeros(params.n1(), params.n2());
    if m == 0 {
        return Ok(HittingTimeTable { params, times, residual: 0.0 });
    }
    let scale = params.n1() as f64;
    let system = DMatrix::from_fn(m, m, |r, c| {
        let p = matrix.row(r + 1)[c + 1];
        scale * (if r == c { 1.0 - p } else { -p })
    });
    let rhs = DVector::from_element(m, 1.0);
    let lu = system.clone().lu();
    let mut t =
        lu.solve(&rhs).ok_or_else(|| Error::Singular("hitting-time system N(I - P~) has a zero pivot".into()))?;
    let correction = lu.solve(&(&rhs - &system * &t)).expect("factorization already succeeded");
    t += correction;
    let residual = (&rhs - &system * &t).amax();
    if residual.is_nan() || residual > HITTING_RESIDUAL_TOL {
        return Err(Error::SolveFailed {
            residual,
            tolerance: HITTING_RESIDUAL_TOL,
            context: format!("hitting times for N1={}, N2={}, kappa={}", params.n1(), params.n2(), params.kappa()),
        });
    }
    times.values_mut()[1..n_states - 1].copy_from_slice(t.as_slice());
    Ok(HittingTimeTable { params, times, residual })
}

/// Discrete semigroup `(K^n f)(x) = E(f(x^n) | x^0 = x)`.
pub fn iterate_semigroup(f: &Field, n: usize, params: &ModelParams) -> Result<Field> {
    build_transition_matrix(params)?.iterate(f, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_exchange_matrix;

    #[test]
    fn tiny_chain_rows() {
        let p = ModelParams::new(1, 1, 0.5).unwrap();
        let m = build_transition_matrix(&p).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.row(3), &[0.0, 0.0, 0.0, 1.0]);
        for r in [1, 2] {
            for v in m.row(r) {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tiny_chain_hitting_time() {
        let p = ModelParams::new(1, 1, 0.5).unwrap();
        let t = solve_hitting_times(&p).unwrap();
        assert_eq!(t.times.get(0, 0), 0.0);
        assert_eq!(t.times.get(1, 1), 0.0);
        assert!((t.times.get(0, 1) - 2.0).abs() < 1e-12);
        assert!((t.times.get(1, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_kappa_is_rejected_for_hitting_times() {
        let p = ModelParams::new(4, 4, 0.0).unwrap();
        let err = solve_hitting_times(&p).unwrap_err();
        assert!(matches!(err, Error::NoAbsorptionPath { .. }));
        assert!(err.to_string().contains("kappa = 0"));
    }

    #[test]
    fn state_cap_enforced() {
        let p = ModelParams::new(200, 200, 1.0).unwrap();
        assert!(matches!(build_transition_matrix(&p), Err(Error::StateCapExceeded { states: 40401, cap: 20000 })));
        assert!(matches!(
            build_transition_matrix_with_cap(&ModelParams::new(4, 4, 1.0).unwrap(), 10),
            Err(Error::StateCapExceeded { .. })
        ));
    }

    #[test]
    fn rows_are_probability_vectors_with_mean_ax() {
        let p = ModelParams::new(9, 6, 2.0).unwrap();
        let m = build_transition_matrix(&p).unwrap();
        let stats = m.stats();
        assert!(stats.min_entry >= 0.0);
        assert!(stats.max_row_sum_deviation < 1e-12);
        let a = build_exchange_matrix(&p).unwrap();
        for s in p.states() {
            let mean = m.conditional_mean(s);
            let target = a.apply(s.density(&p));
            assert!((mean[0] - target[0]).abs() < 1e-12 && (mean[1] - target[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn hitting_time_symmetries() {
        for (n1, n2, k) in [(6, 6, 1.0), (8, 4, 0.7), (5, 3, 3.0)] {
            let p = ModelParams::new(n1, n2, k).unwrap();
            let t = solve_hitting_times(&p).unwrap();
            assert!(t.residual <= HITTING_RESIDUAL_TOL);
            for s in p.states() {
                let m = s.species_swapped(&p);
                assert!((t.at(s) - t.at(m)).abs() < 1e-9);
                if n1 == n2 {
                    assert!((t.at(s) - t.at(s.patches_swapped())).abs() < 1e-9);
                }
                assert!(t.at(s) >= 0.0);
            }
        }
    }

    #[test]
    fn semigroup_identity_positivity_and_conservation() {
        let p = ModelParams::new(6, 3, 1.5).unwrap();
        let m = build_transition_matrix(&p).unwrap();
        let f = Field::from_fn(6, 3, |x1, x2| (x1 - 0.3).powi(2) + x2);
        assert_eq!(m.iterate(&f, 0).unwrap(), f);
        let mut u = f.clone();
        let mut sup = f.sup_norm();
        for _ in 0..40 {
            u = m.apply(&u).unwrap();
            assert!(u.min() >= 0.0);
            assert!(u.sup_norm() <= sup + 1e-15);
            sup = u.sup_norm();
        }
        let d = p.d();
        let lin = Field::from_fn(6, 3, |x1, x2| x1 + d * x2);
        let out = iterate_semigroup(&lin, 25, &p).unwrap();
        for (a, b) in out.values().iter().zip(lin.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hitting_table_csv() {
        let p = ModelParams::new(1, 1, 0.5).unwrap();
        let mut buf = Vec::new();
        solve_hitting_times(&p).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("j1,j2,x1,x2,T\n"));
        let t: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(t.len(), 4);
        assert!((t[1] - 2.0).abs() < 1e-12 && (t[2] - 2.0).abs() < 1e-12);
    }
}
