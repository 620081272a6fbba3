use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use super::{check_coefficients, PdeGrid};
use crate::model::Field;
use crate::{Error, Result};

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).into_par_iter().map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Infinity norm `max_r sum_c |a_rc|`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn diagonal(&self, r: usize) -> f64 {
        self.row(r).find(|(c, _)| *c == r).map_or(0.0, |(_, v)| v)
    }
}

/// Sign and dominance facts about the assembled matrix of `-L_d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MMatrixCertificate {
    /// All off-diagonal entries are `<= 0`.
    pub nonpositive_offdiagonal: bool,
    /// All diagonal entries are `>= 0`.
    pub nonnegative_diagonal: bool,
    /// All diagonal entries are `> 0`; fails only where the operator is
    /// identically zero (e.g. the corners `(0, 1)`, `(1, 0)` when `kappa = 0`).
    pub positive_diagonal: bool,
    /// Every row sum is `>= -1e-12` times its diagonal.
    pub weak_row_dominance: bool,
    pub min_diagonal: f64,
    pub max_offdiagonal: f64,
    pub min_row_sum: f64,
    pub max_row_sum: f64,
    pub zero_rows: usize,
    /// Every node is linked to a Dirichlet corner through nonzero
    /// off-diagonals, which with weak dominance makes the matrix nonsingular.
    pub reaches_dirichlet: bool,
    /// Z-matrix with nonnegative diagonal and row sums: an M-matrix.
    pub is_m_matrix: bool,
    pub nonsingular: bool,
}

/// Assembled `-L_d` with identity rows at the two Dirichlet corners.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: PdeGrid,
    d: f64,
    kappa: f64,
    matrix: SparseMatrix,
    certificate: MMatrixCertificate,
}

/// Stencil slots: centre, (i-1), (i+1), (k-1), (k+1).
fn stencil(grid: &PdeGrid, d: f64, kappa: f64, i: usize, k: usize) -> [f64; 5] {
    let n = grid.n();
    let h = grid.h();
    let (x1, x2) = (i as f64 * h, k as f64 * h);
    let a1 = x1 * (1.0 - x1) / 2.0;
    let a2 = x2 * (1.0 - x2) / (2.0 * d);
    // Velocity -kappa M x.
    let b1 = -kappa * d * (x1 - x2);
    let b2 = kappa * (x1 - x2);
    let mut s = [0.0; 5];
    let h2 = h * h;
    if a1 > 0.0 {
        s[1] -= a1 / h2;
        s[2] -= a1 / h2;
        s[0] += 2.0 * a1 / h2;
    }
    if a2 > 0.0 {
        s[3] -= a2 / h2;
        s[4] -= a2 / h2;
        s[0] += 2.0 * a2 / h2;
    }
    // Upwinding: the velocity always points into the square on the edges,
    // so the chosen neighbour exists.
    if b1 > 0.0 && i < n {
        s[2] -= b1 / h;
        s[0] += b1 / h;
    } else if b1 < 0.0 && i > 0 {
        s[1] += b1 / h;
        s[0] -= b1 / h;
    }
    if b2 > 0.0 && k < n {
        s[4] -= b2 / h;
        s[0] += b2 / h;
    } else if b2 < 0.0 && k > 0 {
        s[3] += b2 / h;
        s[0] -= b2 / h;
    }
    s
}

pub fn discretize_ld(grid: PdeGrid, d: f64, kappa: f64) -> Result<DiscreteOperator> {
    check_coefficients(d, kappa)?;
    let n = grid.n();
    let rows: Vec<Vec<(usize, f64)>> = (0..grid.n_nodes())
        .into_par_iter()
        .map(|p| {
            let (i, k) = (p / (n + 1), p % (n + 1));
            if grid.is_dirichlet(i, k) {
                return vec![(p, 1.0)];
            }
            let s = stencil(&grid, d, kappa, i, k);
            let mut row = Vec::with_capacity(5);
            let neighbours = [
                (i > 0).then(|| grid.index(i - 1, k)),
                (k > 0).then(|| grid.index(i, k - 1)),
                Some(p),
                (k < n).then(|| grid.index(i, k + 1)),
                (i < n).then(|| grid.index(i + 1, k)),
            ];
            let weights = [s[1], s[3], s[0], s[4], s[2]];
            for (col, w) in neighbours.into_iter().zip(weights) {
                if let Some(c) = col {
                    if w != 0.0 || c == p {
                        row.push((c, w));
                    }
                }
            }
            row
        })
        .collect();
    let mut row_ptr = Vec::with_capacity(rows.len() + 1);
    let (mut cols, mut vals) = (Vec::new(), Vec::new());
    row_ptr.push(0);
    for row in &rows {
        for &(c, v) in row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    let matrix = SparseMatrix { n: rows.len(), row_ptr, cols, vals };
    let certificate = certify(&grid, &matrix);
    if !certificate.is_m_matrix {
        return Err(Error::MMatrixViolation(format!(
            "d={d}, kappa={kappa}, n={n}: min diagonal {:e}, max off-diagonal {:e}, min row sum {:e}",
            certificate.min_diagonal, certificate.max_offdiagonal, certificate.min_row_sum
        )));
    }
    Ok(DiscreteOperator { grid, d, kappa, matrix, certificate })
}

fn certify(grid: &PdeGrid, m: &SparseMatrix) -> MMatrixCertificate {
    let mut min_diag = f64::INFINITY;
    let mut max_off = f64::NEG_INFINITY;
    let (mut min_sum, mut max_sum) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut dominance = true;
    let mut zero_rows = 0;
    for r in 0..m.dim() {
        let diag = m.diagonal(r);
        let mut sum = 0.0;
        let mut nonzero = false;
        for (c, v) in m.row(r) {
            sum += v;
            nonzero |= v != 0.0;
            if c != r {
                max_off = max_off.max(v);
            }
        }
        min_diag = min_diag.min(diag);
        min_sum = min_sum.min(sum);
        max_sum = max_sum.max(sum);
        if sum < -1e-12 * diag.abs().max(1.0) {
            dominance = false;
        }
        if !nonzero {
            zero_rows += 1;
        }
    }
    if max_off == f64::NEG_INFINITY {
        max_off = 0.0;
    }
    let reaches = reaches_dirichlet(grid, m);
    let nonpositive_offdiagonal = max_off <= 0.0;
    let nonnegative_diagonal = min_diag >= 0.0;
    let is_m_matrix = nonpositive_offdiagonal && nonnegative_diagonal && dominance;
    MMatrixCertificate {
        nonpositive_offdiagonal,
        nonnegative_diagonal,
        positive_diagonal: min_diag > 0.0,
        weak_row_dominance: dominance,
        min_diagonal: min_diag,
        max_offdiagonal: max_off,
        min_row_sum: min_sum,
        max_row_sum: max_sum,
        zero_rows,
        reaches_dirichlet: reaches,
        is_m_matrix,
        nonsingular: is_m_matrix && reaches && min_diag > 0.0,
    }
}

/// Breadth-first search backwards from the corners along `r -> c` whenever
/// row `r` has a nonzero entry in column `c`.
fn reaches_dirichlet(grid: &PdeGrid, m: &SparseMatrix) -> bool {
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); m.dim()];
    for (r, c, v) in m.entries() {
        if r != c && v != 0.0 {
            incoming[c].push(r);
        }
    }
    let mut seen = vec![false; m.dim()];
    let mut queue: VecDeque<usize> = [0, grid.n_nodes() - 1].into_iter().collect();
    for &q in &queue {
        seen[q] = true;
    }
    while let Some(c) = queue.pop_front() {
        for &r in &incoming[c] {
            if !seen[r] {
                seen[r] = true;
                queue.push_back(r);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

impl DiscreteOperator {
    pub fn grid(&self) -> PdeGrid {
        self.grid
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn certificate(&self) -> &MMatrixCertificate {
        &self.certificate
    }

    /// `-L_h u` at every non-Dirichlet node; the two corners are reported as 0.
    pub fn apply_neg_generator(&self, u: &Field) -> Result<Field> {
        self.check_field(u)?;
        let mut out = self.matrix.mul_vec(u.values());
        let last = out.len() - 1;
        out[0] = 0.0;
        out[last] = 0.0;
        Field::from_values(self.grid.n(), self.grid.n(), out)
    }

    pub(crate) fn check_field(&self, u: &Field) -> Result<()> {
        let n = self.grid.n();
        if u.n1() != n || u.n2() != n {
            return Err(Error::GridMismatch(u.n1() + 1, u.n2() + 1, n + 1, n + 1));
        }
        Ok(())
    }
}
