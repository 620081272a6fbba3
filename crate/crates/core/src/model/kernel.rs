use rand::Rng;
use serde::Serialize;

use super::binomial::{sample_binomial, BinomialTable};
use super::{build_exchange_matrix, ExchangeMatrix, Field, GridState, ModelParams};
use crate::sum::CompensatedSum;
use crate::{Error, Result};

/// One split-step move: exchange `x -> A x`, then independent binomial
/// resampling of both patches with the exchanged densities as parameters.
/// Absorbing states are returned unchanged.
pub fn step<R: Rng + ?Sized>(s: GridState, params: &ModelParams, rng: &mut R) -> GridState {
    if s.is_absorbing(params) {
        return s;
    }
    let a = build_exchange_matrix(params).expect("validated parameters");
    let p = a.apply(s.density(params));
    GridState { j1: sample_binomial(p[0], params.n1(), rng), j2: sample_binomial(p[1], params.n2(), rng) }
}

/// Exact one-step transition law of the chain, factored into the two
/// independent binomial marginals.
#[derive(Debug, Clone)]
pub struct Kernel {
    params: ModelParams,
    exchange: ExchangeMatrix,
    patch1: BinomialTable,
    patch2: BinomialTable,
}

impl Kernel {
    pub fn new(params: &ModelParams) -> Result<Self> {
        Ok(Self {
            params: *params,
            exchange: build_exchange_matrix(params)?,
            patch1: BinomialTable::new(params.n1()),
            patch2: BinomialTable::new(params.n2()),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn exchange(&self) -> &ExchangeMatrix {
        &self.exchange
    }

    /// Writes the marginal laws of `j1'` and `j2'` from state `s` into the
    /// buffers (lengths `N1 + 1` and `N2 + 1`) and returns the largest
    /// normalization deviation. Absorbing states get exact point masses.
    pub fn marginals_into(&self, s: GridState, m1: &mut [f64], m2: &mut [f64]) -> f64 {
        if s.is_absorbing(&self.params) {
            m1.iter_mut().for_each(|v| *v = 0.0);
            m2.iter_mut().for_each(|v| *v = 0.0);
            m1[s.j1] = 1.0;
            m2[s.j2] = 1.0;
            return 0.0;
        }
        let p = self.exchange.apply(s.density(&self.params));
        let d1 = self.patch1.pmf_into(p[0], m1);
        let d2 = self.patch2.pmf_into(p[1], m2);
        d1.max(d2)
    }

    /// `E(f(x') | x = s)` for a field on the chain grid.
    pub fn expect(&self, f: &Field, s: GridState, m1: &mut [f64], m2: &mut [f64]) -> f64 {
        self.marginals_into(s, m1, m2);
        let mut total = 0.0;
        for (j1, w1) in m1.iter().enumerate() {
            if *w1 == 0.0 {
                continue;
            }
            let row = &f.values()[j1 * (self.params.n2() + 1)..(j1 + 1) * (self.params.n2() + 1)];
            let inner: f64 = row.iter().zip(m2.iter()).map(|(v, w2)| v * w2).sum();
            total += w1 * inner;
        }
        total
    }

    /// `E(f(x') - f(x) | x = s)`, summing the increments directly so that
    /// fields the kernel preserves give (near) zero without cancellation.
    pub fn expect_increment(&self, f: &Field, s: GridState, m1: &mut [f64], m2: &mut [f64]) -> f64 {
        self.marginals_into(s, m1, m2);
        let n2 = self.params.n2() + 1;
        let base = f.values()[s.j1 * n2 + s.j2];
        let mut total = CompensatedSum::default();
        for (j1, w1) in m1.iter().enumerate() {
            if *w1 == 0.0 {
                continue;
            }
            let row = &f.values()[j1 * n2..(j1 + 1) * n2];
            let inner: CompensatedSum = row.iter().zip(m2.iter()).map(|(v, w2)| (v - base) * w2).collect();
            total.add(w1 * inner.value());
        }
        total.value()
    }

    /// Applies the kernel to a whole field: `(K f)(s)` at every state.
    pub fn apply(&self, f: &Field) -> Field {
        let mut m1 = vec![0.0; self.params.n1() + 1];
        let mut m2 = vec![0.0; self.params.n2() + 1];
        let values = self.params.states().map(|s| self.expect(f, s, &mut m1, &mut m2)).collect();
        Field::from_values(self.params.n1(), self.params.n2(), values).expect("kernel image of a finite field")
    }
}

fn check_chain_field(f: &Field, params: &ModelParams) -> Result<()> {
    if f.n1() != params.n1() || f.n2() != params.n2() {
        return Err(Error::GridMismatch(f.n1() + 1, f.n2() + 1, params.n1() + 1, params.n2() + 1));
    }
    Ok(())
}

/// Discrete generator `N (K f - f)` evaluated exactly through the binomial
/// product kernel, where `K` is one exchange + resampling step and `N = N1`.
pub fn generator_apply(f: &Field, params: &ModelParams) -> Result<Field> {
    check_chain_field(f, params)?;
    let kernel = Kernel::new(params)?;
    let n = params.n1() as f64;
    let mut m1 = vec![0.0; params.n1() + 1];
    let mut m2 = vec![0.0; params.n2() + 1];
    let values = params.states().map(|s| n * kernel.expect_increment(f, s, &mut m1, &mut m2)).collect();
    Field::from_values(params.n1(), params.n2(), values)
}

/// Raw moments `E[(X/N)^r]`, `r = 0..=4`, of `X ~ Binomial(N, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinMoments {
    pub n: usize,
    pub x: f64,
    pub m: [f64; 5],
}

impl BernsteinMoments {
    /// `E[(X/N - x)^4]`, expanded from the raw moments.
    pub fn centered_fourth(&self) -> f64 {
        let [_, m1, m2, m3, m4] = self.m;
        let x = self.x;
        m4 - 4.0 * x * m3 + 6.0 * x * x * m2 - 4.0 * x.powi(3) * m1 + x.powi(4)
    }
}

pub fn bernstein_moments(n: usize, x: f64) -> Result<BernsteinMoments> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::ProbabilityOutOfRange(x));
    }
    if n == 0 {
        return Err(Error::InvalidParams("Bernstein degree must be positive".into()));
    }
    let pmf = BinomialTable::new(n).pmf(x);
    let mut m = [0.0; 5];
    for (k, w) in pmf.iter().enumerate() {
        let z = k as f64 / n as f64;
        let mut pow = 1.0;
        for slot in m.iter_mut() {
            *slot += w * pow;
            pow *= z;
        }
    }
    Ok(BernsteinMoments { n, x, m })
}
