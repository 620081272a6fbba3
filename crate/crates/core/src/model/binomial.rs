use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::{Error, Result};

/// Largest trial count sampled by sequential inversion; above it the BTPE
/// rejection sampler from `rand_distr` is used.
const INVERSION_MAX_N: usize = 64;

/// Draws one Wright-Fisher offspring count, i.e. an exact `Binomial(n, p)`
/// variate.
pub fn wf_sample<R: Rng + ?Sized>(p: f64, n: usize, rng: &mut R) -> Result<usize> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(sample_binomial(p, n, rng))
}

/// Infallible sampler for callers that already guarantee `p` in `[0, 1]`.
pub(crate) fn sample_binomial<R: Rng + ?Sized>(p: f64, n: usize, rng: &mut R) -> usize {
    if p <= 0.0 || n == 0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n <= INVERSION_MAX_N {
        // Work with p <= 1/2 so that q^n cannot underflow for n <= 64.
        let (flipped, p) = if p > 0.5 { (true, 1.0 - p) } else { (false, p) };
        let q = 1.0 - p;
        let s = p / q;
        let a = (n + 1) as f64 * s;
        let mut r = q.powi(n as i32);
        let mut u: f64 = rng.random();
        let mut x = 0;
        while u > r && x < n {
            u -= r;
            x += 1;
            r *= a / x as f64 - s;
        }
        if flipped {
            n - x
        } else {
            x
        }
    } else {
        Binomial::new(n as u64, p).expect("p checked to lie in (0, 1)").sample(rng) as usize
    }
}

/// Binomial probability mass functions for a fixed trial count, evaluated in
/// log space from a table of `ln C(n, k)`.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    n: usize,
    ln_choose: Vec<f64>,
}

impl BinomialTable {
    pub fn new(n: usize) -> Self {
        let mut ln_fact = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        ln_fact.push(0.0);
        for k in 1..=n {
            acc += (k as f64).ln();
            ln_fact.push(acc);
        }
        let ln_choose = (0..=n).map(|k| ln_fact[n] - ln_fact[k] - ln_fact[n - k]).collect();
        Self { n, ln_choose }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Fills `out[k] = P(Binomial(n, p) = k)` for `k = 0..=n`.
    ///
    /// Returns the deviation `|sum - 1|` observed before renormalization; the
    /// row is rescaled only when that deviation exceeds `1e-12`.
    pub fn pmf_into(&self, p: f64, out: &mut [f64]) -> f64 {
        debug_assert_eq!(out.len(), self.n + 1);
        out.iter_mut().for_each(|v| *v = 0.0);
        if p <= 0.0 {
            out[0] = 1.0;
            return 0.0;
        }
        if p >= 1.0 {
            out[self.n] = 1.0;
            return 0.0;
        }
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        let mut total = 0.0;
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = (self.ln_choose[k] + k as f64 * lp + (self.n - k) as f64 * lq).exp();
            total += *slot;
        }
        let deviation = (total - 1.0).abs();
        if deviation > 1e-12 {
            out.iter_mut().for_each(|v| *v /= total);
        }
        deviation
    }

    pub fn pmf(&self, p: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 1];
        self.pmf_into(p, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 16, 64, 65, 500] {
            for _ in 0..100 {
                assert_eq!(wf_sample(0.0, n, &mut rng).unwrap(), 0);
                assert_eq!(wf_sample(1.0, n, &mut rng).unwrap(), n);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(wf_sample(-0.1, 4, &mut rng).is_err());
        assert!(wf_sample(1.5, 4, &mut rng).is_err());
        assert!(wf_sample(f64::NAN, 4, &mut rng).is_err());
    }

    #[test]
    fn mean_of_many_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (n, p, draws) = (16, 0.3, 1_000_000);
        let total: usize = (0..draws).map(|_| wf_sample(p, n, &mut rng).unwrap()).sum();
        let mean = total as f64 / draws as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt() / 1e3;
        assert!((mean - 4.8).abs() < 4.0 * sigma, "mean {mean}");
    }

    /// Pearson chi-square of sampled frequencies against the pmf, on both
    /// sides of the inversion/rejection switch.
    #[test]
    fn sampled_frequencies_match_pmf() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for &(n, p) in &[(5usize, 0.37), (40, 0.8), (64, 0.05), (120, 0.45)] {
            let pmf = BinomialTable::new(n).pmf(p);
            let draws = 200_000;
            let mut counts = vec![0usize; n + 1];
            for _ in 0..draws {
                counts[sample_binomial(p, n, &mut rng)] += 1;
            }
            let (mut chi2, mut dof) = (0.0, 0usize);
            for (c, q) in counts.iter().zip(&pmf) {
                let expected = q * draws as f64;
                if expected >= 5.0 {
                    chi2 += (*c as f64 - expected).powi(2) / expected;
                    dof += 1;
                }
            }
            // 99.9% quantile of chi-square is below dof + 4.5 sqrt(2 dof) + 10 for these sizes.
            let limit = dof as f64 + 4.5 * (2.0 * dof as f64).sqrt() + 10.0;
            assert!(chi2 < limit, "n={n} p={p}: chi2 {chi2} over {dof} cells");
        }
    }

    #[test]
    fn pmf_matches_direct_products() {
        let t = BinomialTable::new(6);
        let pmf = t.pmf(0.3);
        let direct = [1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0]
            .iter()
            .enumerate()
            .map(|(k, c)| c * 0.3f64.powi(k as i32) * 0.7f64.powi(6 - k as i32));
        for (a, b) in pmf.iter().zip(direct) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(t.pmf(0.0)[0], 1.0);
        assert_eq!(t.pmf(1.0)[6], 1.0);
    }
}
