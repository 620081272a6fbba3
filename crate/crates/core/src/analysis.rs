//! Numerical experiments built from the chain, Monte Carlo and PDE layers:
//! nodewise comparisons, convergence tables and the small-distortion sweep.
//!
//! Every inequality carries an explicit slack `eps_h = c h`, where `c` comes
//! from the 1-D single-patch problem, whose exact solution is known.

use serde::Serialize;

use crate::exact::{solve_hitting_times, HittingTimeTable};
use crate::model::{sandwich_width, tau_lower, Field, ModelParams};
use crate::pde::{discretize_ld, solve_elliptic, solve_single_patch, EllipticSolution, PdeGrid};
use crate::{Error, Result};

/// Outcome of checking `lower <= upper` nodewise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub name: String,
    /// `min (upper - lower)`; negative values are violations.
    pub min_margin: f64,
    pub node_of_min: [usize; 2],
    pub coords_of_min: [f64; 2],
    pub tolerance: f64,
    pub passed: bool,
}

pub fn compare_fields(name: &str, lower: &Field, upper: &Field, tolerance: f64) -> Result<ComparisonReport> {
    lower.check_shape(upper)?;
    let mut best = (f64::INFINITY, 0);
    for (idx, (l, u)) in lower.values().iter().zip(upper.values()).enumerate() {
        let m = u - l;
        if m < best.0 {
            best = (m, idx);
        }
    }
    let (i, k) = (best.1 / (lower.n2() + 1), best.1 % (lower.n2() + 1));
    Ok(ComparisonReport {
        name: name.to_string(),
        min_margin: best.0,
        node_of_min: [i, k],
        coords_of_min: lower.coords(i, k),
        tolerance,
        passed: best.0 >= -tolerance,
    })
}

/// `eps_h = c h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackPolicy {
    pub c: f64,
    pub calibration_n: usize,
    pub calibration_d: f64,
    /// Max nodal error of the 1-D solve used for calibration.
    pub calibration_error: f64,
}

impl SlackPolicy {
    pub const CALIBRATION_N: usize = 128;
    pub const CALIBRATION_D: f64 = 1.0;

    /// `c = n * max_z |g_h(z) - (1+d) H(z)|` at the calibration point.
    pub fn calibrate() -> Result<Self> {
        let s = solve_single_patch(Self::CALIBRATION_D, Self::CALIBRATION_N)?;
        Ok(Self {
            c: s.max_error * Self::CALIBRATION_N as f64,
            calibration_n: Self::CALIBRATION_N,
            calibration_d: Self::CALIBRATION_D,
            calibration_error: s.max_error,
        })
    }

    pub fn eps(&self, h: f64) -> f64 {
        self.c * h
    }

    pub fn eps_grid(&self, grid: PdeGrid) -> f64 {
        self.eps(grid.h())
    }
}

/// Elliptic extinction time on an `n x n` grid.
pub fn elliptic_tau(d: f64, kappa: f64, n: usize) -> Result<EllipticSolution> {
    solve_elliptic(&discretize_ld(PdeGrid::new(n)?, d, kappa)?)
}

/// `max |tau_N - tau_pde|` over the chain nodes and where it is attained.
pub fn sup_error_on_chain_nodes(tau_pde: &Field, table: &HittingTimeTable) -> Result<(f64, [usize; 2])> {
    let coarse = tau_pde.restrict_to(table.times.n1(), table.times.n2())?;
    let mut best = (0.0, [0, 0]);
    for (i, k, _, _, v) in table.times.nodes() {
        let e = (v - coarse.get(i, k)).abs();
        if e > best.0 {
            best = (e, [i, k]);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n1: usize,
    pub n2: usize,
    pub kappa: f64,
    pub sup_error: f64,
    pub node_of_max: [usize; 2],
    pub hitting_residual: f64,
}

/// Exact hitting times for each parameter set against one PDE reference
/// whose grid contains every chain grid.
pub fn convergence_study(params_list: &[ModelParams], reference: &Field) -> Result<Vec<ConvergenceRow>> {
    params_list
        .iter()
        .map(|p| {
            let table = solve_hitting_times(p)?;
            let (sup_error, node_of_max) = sup_error_on_chain_nodes(reference, &table)?;
            Ok(ConvergenceRow {
                n1: p.n1(),
                n2: p.n2(),
                kappa: p.kappa(),
                sup_error,
                node_of_max,
                hitting_residual: table.residual,
            })
        })
        .collect()
}

/// True when every entry is strictly below its predecessor.
pub fn strictly_decreasing(errors: &[f64]) -> bool {
    errors.windows(2).all(|w| w[1] < w[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DLimitRow {
    pub d: f64,
    /// `max (tau - tau_lower)`.
    pub max_gap: f64,
    pub max_gap_node: [usize; 2],
    pub min_gap: f64,
    /// `min (2d(H2 + D) + eps_h - (tau - tau_lower))`.
    pub min_upper_margin: f64,
    pub upper_margin_node: [usize; 2],
    /// Nodes where the upper inequality fails.
    pub upper_violations: usize,
    pub center_gap: f64,
    pub center_width: f64,
    pub lower_ok: bool,
    pub bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DLimitReport {
    pub kappa: f64,
    pub n: usize,
    pub eps_h: f64,
    pub slack: SlackPolicy,
    pub rows: Vec<DLimitRow>,
    /// Largest tested `d` at and below which the sandwich held for every
    /// tested value; `None` if it fails at the smallest.
    pub d_star: Option<f64>,
    /// `max_gap` decreases along the (decreasing) `d` list.
    pub gap_decreasing: bool,
}

/// Checks `-eps_h <= tau - tau_lower <= 2d(H2 + D) + eps_h` nodewise for each `d`.
pub fn d_limit_check(kappa: f64, d_list: &[f64], grid: PdeGrid, slack: &SlackPolicy) -> Result<DLimitReport> {
    if d_list.is_empty() {
        return Err(Error::InvalidParams("empty distortion list".into()));
    }
    let n = grid.n();
    let eps = slack.eps_grid(grid);
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let tau = solve_elliptic(&discretize_ld(grid, d, kappa)?)?.tau;
        let mut row = DLimitRow {
            d,
            max_gap: f64::NEG_INFINITY,
            max_gap_node: [0, 0],
            min_gap: f64::INFINITY,
            min_upper_margin: f64::INFINITY,
            upper_margin_node: [0, 0],
            upper_violations: 0,
            center_gap: 0.0,
            center_width: 0.0,
            lower_ok: false,
            bound_ok: false,
        };
        for (i, k, x1, x2, t) in tau.nodes() {
            let gap = t - tau_lower([x1, x2], d);
            let width = sandwich_width([x1, x2], d);
            let margin = width + eps - gap;
            if gap > row.max_gap {
                row.max_gap = gap;
                row.max_gap_node = [i, k];
            }
            row.min_gap = row.min_gap.min(gap);
            if margin < row.min_upper_margin {
                row.min_upper_margin = margin;
                row.upper_margin_node = [i, k];
            }
            if margin < 0.0 {
                row.upper_violations += 1;
            }
            if 2 * i == n && 2 * k == n {
                row.center_gap = gap;
                row.center_width = width;
            }
        }
        row.lower_ok = row.min_gap >= -eps;
        row.bound_ok = row.lower_ok && row.upper_violations == 0;
        rows.push(row);
    }
    let mut by_d: Vec<&DLimitRow> = rows.iter().collect();
    by_d.sort_by(|a, b| a.d.total_cmp(&b.d));
    let d_star = by_d.iter().take_while(|r| r.bound_ok).last().map(|r| r.d);
    let gap_decreasing = rows.windows(2).all(|w| w[1].d < w[0].d && w[1].max_gap < w[0].max_gap);
    Ok(DLimitReport { kappa, n, eps_h: eps, slack: *slack, rows, d_star, gap_decreasing })
}
