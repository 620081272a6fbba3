//! Seeded Monte Carlo simulation of the split-step chain.
//!
//! Replicate `r` draws from the ChaCha8 stream `r` of the generator seeded
//! with `seed`, so every statistic is a pure function of
//! `(params, start, seed, replicates, max_steps)` regardless of thread count
//! or scheduling.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{step, GridState, ModelParams};
use crate::sum::CompensatedSum;
use crate::{Error, Result};

/// Default censoring horizon, in multiples of `N1` steps (i.e. time units).
pub const DEFAULT_HORIZON_TIME: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub replicates: usize,
    pub seed: u64,
    pub max_steps: usize,
    pub start: GridState,
    #[serde(default)]
    pub keep_raw: bool,
}

impl McConfig {
    /// Config with the default horizon of `200 * N1` steps.
    pub fn new(params: &ModelParams, start: GridState, replicates: usize, seed: u64) -> Self {
        Self { replicates, seed, max_steps: DEFAULT_HORIZON_TIME * params.n1(), start, keep_raw: false }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_raw(mut self, keep_raw: bool) -> Self {
        self.keep_raw = keep_raw;
        self
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParams("replicates must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParams("max_steps must be at least 1".into()));
        }
        GridState::new(self.start.j1, self.start.j2, params).map(|_| ())
    }
}

/// Random stream of one replicate.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Absorbed { steps: usize },
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    pub outcome: Outcome,
    /// Steps taken: the absorption step, or `max_steps` when censored.
    pub steps: usize,
    pub terminal: GridState,
}

/// Runs the chain from `start` until absorption or `max_steps` steps.
pub fn simulate_trajectory<R: rand::Rng + ?Sized>(
    params: &ModelParams,
    start: GridState,
    rng: &mut R,
    max_steps: usize,
) -> Trajectory {
    let mut s = start;
    for n in 0..max_steps {
        if s.is_absorbing(params) {
            return Trajectory { outcome: Outcome::Absorbed { steps: n }, steps: n, terminal: s };
        }
        s = step(s, params, rng);
    }
    if s.is_absorbing(params) {
        Trajectory { outcome: Outcome::Absorbed { steps: max_steps }, steps: max_steps, terminal: s }
    } else {
        Trajectory { outcome: Outcome::Censored, steps: max_steps, terminal: s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub steps: usize,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    /// Mean absorption time in time units; censored replicates contribute
    /// the horizon, which makes it a lower bound when any are censored.
    pub mean_time: f64,
    pub stderr: f64,
    pub censored_fraction: f64,
    pub lower_bound: bool,
    pub replicates: usize,
    pub raw: Option<Vec<ReplicateRecord>>,
}

impl McResult {
    pub fn raw_times(&self, params: &ModelParams) -> Option<Vec<f64>> {
        self.raw.as_ref().map(|r| r.iter().map(|rec| rec.steps as f64 * params.dt()).collect())
    }

    /// CSV `replicate_index,steps,censored_flag`; empty body when raw
    /// records were not kept.
    pub fn write_raw_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "replicate_index,steps,censored_flag")?;
        for rec in self.raw.iter().flatten() {
            writeln!(w, "{},{},{}", rec.replicate, rec.steps, u8::from(rec.censored))?;
        }
        Ok(())
    }
}

fn run_replicates(params: &ModelParams, cfg: &McConfig) -> Vec<ReplicateRecord> {
    (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(cfg.seed, r);
            let t = simulate_trajectory(params, cfg.start, &mut rng, cfg.max_steps);
            ReplicateRecord { replicate: r, steps: t.steps, censored: t.outcome == Outcome::Censored }
        })
        .collect()
}

fn parallel_sum(xs: &[f64]) -> f64 {
    xs.par_iter()
        .fold(CompensatedSum::default, |mut acc, &x| {
            acc.add(x);
            acc
        })
        .reduce(CompensatedSum::default, CompensatedSum::merge)
        .value()
}

/// Mean and standard error of the two-pass sample estimator.
pub(crate) fn mean_and_stderr(times: &[f64]) -> (f64, f64) {
    let n = times.len() as f64;
    let mean = parallel_sum(times) / n;
    if times.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = times.iter().map(|t| (t - mean).powi(2)).collect();
    let var = parallel_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates `E_x(Theta_N)` from `cfg.replicates` independent trajectories.
pub fn estimate_extinction_time(params: &ModelParams, cfg: &McConfig) -> Result<McResult> {
    cfg.validate(params)?;
    let records = run_replicates(params, cfg);
    let times: Vec<f64> = records.iter().map(|r| r.steps as f64 * params.dt()).collect();
    let (mean_time, stderr) = mean_and_stderr(&times);
    let censored = records.iter().filter(|r| r.censored).count();
    let censored_fraction = censored as f64 / cfg.replicates as f64;
    Ok(McResult {
        mean_time,
        stderr,
        censored_fraction,
        lower_bound: censored > 0,
        replicates: cfg.replicates,
        raw: cfg.keep_raw.then_some(records),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub lag: usize,
    /// `E|x^lag - x^0|^2`
    pub p2: f64,
    /// `E|x^lag - x^0|^4`
    pub p4: f64,
    /// `p2 * N / lag` (0 at lag 0)
    pub p2_scaled: f64,
    /// `p4 * N^2 / lag^2` (0 at lag 0)
    pub p4_scaled: f64,
}

/// Empirical second and fourth moments of the displacement after `lag`
/// steps, for every lag in `0..=horizon`, with `N = N1`.
pub fn moment_check(
    params: &ModelParams,
    start: GridState,
    horizon: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<MomentRow>> {
    GridState::new(start.j1, start.j2, params)?;
    if replicates == 0 {
        return Err(Error::InvalidParams("replicates must be at least 1".into()));
    }
    let x0 = start.density(params);
    let zero = || vec![(CompensatedSum::default(), CompensatedSum::default()); horizon + 1];
    let sums = (0..replicates as u64)
        .into_par_iter()
        .fold(zero, |mut acc, r| {
            let mut rng = replicate_rng(seed, r);
            let mut s = start;
            for slot in acc.iter_mut().skip(1) {
                s = step(s, params, &mut rng);
                let x = s.density(params);
                let sq = (x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2);
                slot.0.add(sq);
                slot.1.add(sq * sq);
            }
            acc
        })
        .reduce(zero, |a, b| a.into_iter().zip(b).map(|(x, y)| (x.0.merge(y.0), x.1.merge(y.1))).collect());
    let n = params.n1() as f64;
    let reps = replicates as f64;
    Ok(sums
        .iter()
        .enumerate()
        .map(|(lag, (s2, s4))| {
            let (p2, p4) = (s2.value() / reps, s4.value() / reps);
            let l = lag as f64;
            MomentRow {
                lag,
                p2,
                p4,
                p2_scaled: if lag == 0 { 0.0 } else { p2 * n / l },
                p4_scaled: if lag == 0 { 0.0 } else { p4 * n * n / (l * l) },
            }
        })
        .collect())
}
