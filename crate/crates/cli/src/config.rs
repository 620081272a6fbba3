//! Run configuration: defaults < JSON file < command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "METACOMM_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    ExactHitting,
    PdeElliptic,
    PdeParabolic,
    Compare,
    Sweep,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::ExactHitting => "exact-hitting",
            Self::PdeElliptic => "pde-elliptic",
            Self::PdeParabolic => "pde-parabolic",
            Self::Compare => "compare",
            Self::Sweep => "sweep",
            Self::Validate => "validate",
        }
    }
}

/// Initial data for `pde-parabolic`; all vanish at both corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Initial {
    /// `x1 (1 - x1)`
    Logistic,
    /// `x1 (1 - x2)`
    Mixed,
    /// `(x1 - x2)^2`
    Spread,
}

impl Initial {
    pub fn eval(self, x1: f64, x2: f64) -> f64 {
        match self {
            Self::Logistic => x1 * (1.0 - x1),
            Self::Mixed => x1 * (1.0 - x2),
            Self::Spread => (x1 - x2).powi(2),
        }
    }
}

/// Lower bound checked against the elliptic extinction time by `compare`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// `(1 + d) H(z)`
    Pooled,
    /// `(x1 (1 - x2) + x2 (1 - x1)) / (12 kappa)`
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Exact hitting times against the elliptic solution for increasing N.
    Convergence,
    /// The small-distortion sandwich for a decreasing list of d.
    DLimit,
}

/// Every configurable value. Used both as the JSON file schema and, after
/// merging, as the effective configuration echoed into reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Must match the subcommand when given in a file.
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// Capacity of patch 1.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
    /// Capacity of patch 2 (at most n1).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n2: Option<usize>,
    /// Exchange rate.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Distortion for PDE runs; defaults to n2/n1 when both are given.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Master seed.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Monte Carlo replicates.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    /// Step cap per trajectory; defaults to 200 * n1.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    /// Starting count in patch 1; defaults to n1 / 2.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j1: Option<usize>,
    /// Starting count in patch 2; defaults to n2 / 2.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j2: Option<usize>,
    /// Also write one CSV row per replicate.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_raw: Option<bool>,
    /// PDE grid: n intervals per axis.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    /// Parabolic time horizon.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// Parabolic time steps.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nt: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Initial>,
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<Bound>,
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    /// Patch-1 capacities for the convergence study.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1_list: Option<Vec<usize>>,
    /// Distortions for the d-limit study, decreasing.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_list: Option<Vec<f64>>,
    /// Output directory; defaults to $METACOMM_OUTPUT_DIR, then ./out.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &Settings) -> Self {
        overlay!(
            self, top, command, n1, n2, kappa, d, seed, replicates, max_steps, j1, j2, keep_raw, grid_n, t_final, nt,
            initial, bound, study, n1_list, d_list, output_dir
        );
        self
    }

    pub fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, String> {
        value.clone().ok_or_else(|| format!("missing required setting --{flag}"))
    }

    /// Resolves the output directory: flag/file, then the environment, then `./out`.
    pub fn resolve_output_dir(&mut self) {
        if self.output_dir.is_none() {
            let from_env = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty());
            self.output_dir = Some(from_env.map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)));
        }
    }

    /// `d` from the flag, else `n2 / n1`.
    pub fn distortion(&self) -> Result<f64, String> {
        match (self.d, self.n1, self.n2) {
            (Some(d), _, _) => Ok(d),
            (None, Some(n1), Some(n2)) if n1 > 0 => Ok(n2 as f64 / n1 as f64),
            _ => Err("missing required setting --d (or both --n1 and --n2)".into()),
        }
    }
}
