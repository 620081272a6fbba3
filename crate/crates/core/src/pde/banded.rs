use crate::{Error, Result};

/// In-place LU factorization of a banded matrix without pivoting.
///
/// Only valid for matrices whose Gaussian elimination has nonzero pivots,
/// which holds for nonsingular M-matrices; the elimination then keeps every
/// pivot positive. Fill-in stays inside the band.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    w: usize,
    band: Vec<f64>,
}

impl BandedLu {
    /// `entries` yields `(row, col, value)`; all `|row - col| <= w`.
    pub fn factor(n: usize, w: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let width = 2 * w + 1;
        let mut band = vec![0.0; n * width];
        for (r, c, v) in entries {
            assert!(r.abs_diff(c) <= w, "entry ({r}, {c}) outside half-bandwidth {w}");
            band[r * width + c + w - r] += v;
        }
        for k in 0..n {
            let pivot = band[k * width + w];
            if !pivot.is_finite() || pivot <= 0.0 {
                return Err(Error::Singular(format!("nonpositive pivot {pivot:e} at row {k}")));
            }
            let last = (k + w).min(n - 1);
            let (head, tail) = band.split_at_mut((k + 1) * width);
            let row_k = &head[k * width + w + 1..k * width + w + 1 + (last - k)];
            for i in k + 1..=last {
                let row_i = &mut tail[(i - k - 1) * width..(i - k) * width];
                let lik = row_i[k + w - i];
                if lik == 0.0 {
                    continue;
                }
                let l = lik / pivot;
                row_i[k + w - i] = l;
                let start = k + 1 + w - i;
                for (a, u) in row_i[start..start + (last - k)].iter_mut().zip(row_k) {
                    *a -= l * u;
                }
            }
        }
        Ok(Self { n, w, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, w, width) = (self.n, self.w, 2 * self.w + 1);
        for i in 0..n {
            let lo = i.saturating_sub(w);
            let row = &self.band[i * width..(i + 1) * width];
            let s: f64 = (lo..i).map(|j| row[j + w - i] * b[j]).sum();
            b[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = (i + w).min(n - 1);
            let row = &self.band[i * width..(i + 1) * width];
            let s: f64 = (i + 1..=hi).map(|j| row[j + w - i] * b[j]).sum();
            b[i] = (b[i] - s) / row[w];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_m_matrix() {
        // -u'' on 6 unknowns with h = 1: [2 -1; -1 2 -1; ...] u = 1.
        let n = 6;
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, 2.0));
            if i > 0 {
                entries.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                entries.push((i, i + 1, -1.0));
            }
        }
        let lu = BandedLu::factor(n, 1, entries).unwrap();
        let mut b = vec![1.0; n];
        lu.solve_in_place(&mut b);
        // Exact: u_i = (i+1)(n-i)/2.
        for (i, v) in b.iter().enumerate() {
            assert!((v - ((i + 1) * (n - i)) as f64 / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn wide_band_matches_dense_solve() {
        // Diagonally dominant Z-matrix with half-bandwidth 3.
        let n = 12;
        let w = 3;
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut off = 0.0;
            for j in i.saturating_sub(w)..=(i + w).min(n - 1) {
                if j != i {
                    let v = -(((i * 7 + j * 3) % 5) as f64) * 0.1;
                    dense[i][j] = v;
                    off += v.abs();
                }
            }
            dense[i][i] = off + 0.5;
        }
        let entries: Vec<_> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| dense[i][j] != 0.0)
            .map(|(i, j)| (i, j, dense[i][j]))
            .collect();
        let lu = BandedLu::factor(n, w, entries).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b: Vec<f64> = dense.iter().map(|row| row.iter().zip(&x_true).map(|(a, x)| a * x).sum()).collect();
        lu.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let err = BandedLu::factor(2, 1, vec![(0, 0, 0.0), (1, 1, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }
}
