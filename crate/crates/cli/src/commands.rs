//! Subcommand bodies. Each computes everything in memory and returns the
//! artifacts; nothing touches the disk until all computation succeeded.

use serde::Serialize;
use serde_json::{json, Value};

use metacomm_core::analysis::{
    compare_fields, convergence_study, d_limit_check, strictly_decreasing, ComparisonReport, SlackPolicy,
};
use metacomm_core::exact::{build_transition_matrix, solve_hitting_times_from};
use metacomm_core::io::fmt_f64;
use metacomm_core::model::{barrier_v, generator_apply, tau_lower};
use metacomm_core::montecarlo::{estimate_extinction_time, McConfig};
use metacomm_core::pde::{discretize_ld, solve_elliptic, solve_parabolic, PdeGrid};
use metacomm_core::{Field, GridState, ModelParams};

use crate::config::{Bound, Command, Initial, Settings, Study};

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration.
    Usage(String),
    /// A computation refused its input or failed to converge.
    Core(metacomm_core::Error),
}

impl From<metacomm_core::Error> for CliError {
    fn from(e: metacomm_core::Error) -> Self {
        Self::Core(e)
    }
}

impl From<String> for CliError {
    fn from(e: String) -> Self {
        Self::Usage(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "configuration error: {m}"),
            Self::Core(e) => write!(f, "{e}"),
        }
    }
}

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// False when a theorem-level check failed.
    pub passed: bool,
    /// Small digest for the stdout summary line.
    pub summary: Value,
}

const DEFAULT_REPLICATES: usize = 1000;
const DEFAULT_VALIDATE_REPLICATES: usize = 4000;
const DEFAULT_GRID_N: usize = 64;
const DEFAULT_COMPARE_GRID_N: usize = 128;

fn report_json(cmd: Command, settings: &Settings, passed: bool, result: Value) -> Result<Artifact, CliError> {
    // The destination is not part of the experiment; leaving it out keeps
    // reports byte-identical across output directories.
    let echoed = Settings { output_dir: None, ..settings.clone() };
    let doc = json!({
        "command": cmd.name(),
        "config": echoed,
        "passed": passed,
        "result": result,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(metacomm_core::Error::from)?;
    bytes.push(b'\n');
    Ok(Artifact { name: format!("{}.json", cmd.name().replace('-', "_")), bytes })
}

fn field_csv(name: &str, field: &Field, header: [&str; 5]) -> Artifact {
    let mut bytes = Vec::new();
    field.write_csv(&mut bytes, header).expect("writing to memory");
    Artifact { name: name.to_string(), bytes }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Core(e.into()))
}

fn model_params(s: &Settings) -> Result<ModelParams, CliError> {
    let n1 = Settings::require(&s.n1, "n1")?;
    let n2 = Settings::require(&s.n2, "n2")?;
    let kappa = Settings::require(&s.kappa, "kappa")?;
    Ok(ModelParams::new(n1, n2, kappa)?)
}

fn start_state(s: &Settings, p: &ModelParams) -> Result<GridState, CliError> {
    let j1 = s.j1.unwrap_or(p.n1() / 2);
    let j2 = s.j2.unwrap_or(p.n2() / 2);
    Ok(GridState::new(j1, j2, p)?)
}

fn grid(s: &Settings, default: usize) -> Result<PdeGrid, CliError> {
    Ok(PdeGrid::new(s.grid_n.unwrap_or(default))?)
}

/// Fills every defaulted setting so the echoed config is complete, then runs.
pub fn run(cmd: Command, settings: &mut Settings) -> Result<Outcome, CliError> {
    match cmd {
        Command::Simulate => simulate(settings),
        Command::ExactHitting => exact_hitting(settings),
        Command::PdeElliptic => pde_elliptic(settings),
        Command::PdeParabolic => pde_parabolic(settings),
        Command::Compare => compare(settings),
        Command::Sweep => sweep(settings),
        Command::Validate => validate(settings),
    }
}

fn simulate(s: &mut Settings) -> Result<Outcome, CliError> {
    let p = model_params(s)?;
    let start = start_state(s, &p)?;
    s.j1 = Some(start.j1);
    s.j2 = Some(start.j2);
    let seed = *s.seed.get_or_insert(0);
    let reps = *s.replicates.get_or_insert(DEFAULT_REPLICATES);
    let keep_raw = *s.keep_raw.get_or_insert(false);
    let mut cfg = McConfig::new(&p, start, reps, seed).with_raw(keep_raw);
    cfg = cfg.with_max_steps(*s.max_steps.get_or_insert(cfg.max_steps));
    let r = estimate_extinction_time(&p, &cfg)?;
    let mut artifacts = Vec::new();
    if keep_raw {
        let mut bytes = Vec::new();
        r.write_raw_csv(&mut bytes).expect("writing to memory");
        artifacts.push(Artifact { name: "simulate_raw.csv".into(), bytes });
    }
    let mut result = to_value(&r)?;
    result.as_object_mut().expect("struct").remove("raw");
    let summary = json!({ "mean_time": r.mean_time, "stderr": r.stderr, "censored_fraction": r.censored_fraction });
    artifacts.insert(0, report_json(Command::Simulate, s, true, result)?);
    Ok(Outcome { artifacts, passed: true, summary })
}

fn exact_hitting(s: &mut Settings) -> Result<Outcome, CliError> {
    let p = model_params(s)?;
    let matrix = build_transition_matrix(&p)?;
    let table = solve_hitting_times_from(&matrix)?;
    let max_time = table.times.max();
    let result = json!({
        "residual": table.residual,
        "max_time": max_time,
        "matrix": to_value(&matrix.stats())?,
    });
    let mut csv = Vec::new();
    table.write_csv(&mut csv).expect("writing to memory");
    Ok(Outcome {
        artifacts: vec![
            report_json(Command::ExactHitting, s, true, result)?,
            Artifact { name: "hitting_times.csv".into(), bytes: csv },
        ],
        passed: true,
        summary: json!({ "residual": table.residual, "max_time": max_time }),
    })
}

fn pde_setup(s: &mut Settings, default_n: usize) -> Result<(f64, f64, PdeGrid), CliError> {
    let d = s.distortion()?;
    let kappa = Settings::require(&s.kappa, "kappa")?;
    let g = grid(s, default_n)?;
    s.d = Some(d);
    s.grid_n = Some(g.n());
    Ok((d, kappa, g))
}

fn pde_elliptic(s: &mut Settings) -> Result<Outcome, CliError> {
    let (d, kappa, g) = pde_setup(s, DEFAULT_GRID_N)?;
    let op = discretize_ld(g, d, kappa)?;
    let sol = solve_elliptic(&op)?;
    let n = g.n();
    let passed = sol.min_interior > 0.0;
    let center = (n % 2 == 0).then(|| sol.tau.get(n / 2, n / 2));
    let result = json!({
        "certificate": to_value(op.certificate())?,
        "solution": to_value(&sol)?,
        "center": center,
    });
    Ok(Outcome {
        artifacts: vec![
            report_json(Command::PdeElliptic, s, passed, result)?,
            field_csv("tau.csv", &sol.tau, ["i", "k", "x1", "x2", "tau"]),
        ],
        passed,
        summary: json!({ "residual": sol.residual, "max_tau": sol.max_value, "center": center }),
    })
}

fn pde_parabolic(s: &mut Settings) -> Result<Outcome, CliError> {
    let (d, kappa, g) = pde_setup(s, DEFAULT_GRID_N)?;
    let t_final = *s.t_final.get_or_insert(1.0);
    let nt = *s.nt.get_or_insert(100);
    let initial = *s.initial.get_or_insert(Initial::Logistic);
    let op = discretize_ld(g, d, kappa)?;
    let f = Field::from_fn(g.n(), g.n(), |x1, x2| initial.eval(x1, x2));
    let sol = solve_parabolic(&op, &f, t_final, nt)?;
    let positive = sol.min_value >= -1e-10;
    let contracting = sol.sup_norms.iter().all(|v| *v <= f.sup_norm() + 1e-12);
    let passed = positive && contracting;
    let result = json!({
        "certificate": to_value(op.certificate())?,
        "solution": to_value(&sol)?,
        "positivity_ok": positive,
        "contraction_ok": contracting,
    });
    Ok(Outcome {
        artifacts: vec![
            report_json(Command::PdeParabolic, s, passed, result)?,
            field_csv("u.csv", &sol.u, ["i", "k", "x1", "x2", "u"]),
        ],
        passed,
        summary: json!({ "min_value": sol.min_value, "final_sup_norm": sol.sup_norms.last() }),
    })
}

fn compare(s: &mut Settings) -> Result<Outcome, CliError> {
    let (d, kappa, g) = pde_setup(s, DEFAULT_COMPARE_GRID_N)?;
    let bound = *s.bound.get_or_insert(Bound::Pooled);
    let n = g.n();
    let lower = match bound {
        Bound::Pooled => Field::from_fn(n, n, |x1, x2| tau_lower([x1, x2], d)),
        Bound::Barrier => {
            if kappa.is_nan() || kappa <= 0.0 {
                return Err(CliError::Usage("the barrier bound needs kappa > 0".into()));
            }
            Field::from_fn(n, n, |x1, x2| barrier_v([x1, x2], kappa))
        }
    };
    let slack = SlackPolicy::calibrate()?;
    let eps = slack.eps_grid(g);
    let tau = solve_elliptic(&discretize_ld(g, d, kappa)?)?.tau;
    let name = match bound {
        Bound::Pooled => "tau >= (1+d) H(z)",
        Bound::Barrier => "tau >= V",
    };
    let report = compare_fields(name, &lower, &tau, eps)?;
    let margin = Field::from_values(n, n, tau.values().iter().zip(lower.values()).map(|(t, l)| t - l).collect())?;
    let result = json!({ "slack": to_value(&slack)?, "eps_h": eps, "report": to_value(&report)? });
    Ok(Outcome {
        artifacts: vec![
            report_json(Command::Compare, s, report.passed, result)?,
            field_csv("compare_margin.csv", &margin, ["i", "k", "x1", "x2", "margin"]),
        ],
        passed: report.passed,
        summary: json!({ "min_margin": report.min_margin, "tolerance": eps }),
    })
}

fn sweep(s: &mut Settings) -> Result<Outcome, CliError> {
    let study = Settings::require(&s.study, "study")?;
    match study {
        Study::Convergence => sweep_convergence(s),
        Study::DLimit => sweep_d_limit(s),
    }
}

fn sweep_convergence(s: &mut Settings) -> Result<Outcome, CliError> {
    let d = s.distortion()?;
    let kappa = Settings::require(&s.kappa, "kappa")?;
    let n1_list = s.n1_list.get_or_insert_with(|| vec![8, 16, 32]).clone();
    let g = grid(s, 128)?;
    s.d = Some(d);
    s.grid_n = Some(g.n());
    let mut params = Vec::with_capacity(n1_list.len());
    for &n1 in &n1_list {
        let n2f = d * n1 as f64;
        let n2 = n2f.round() as usize;
        if (n2f - n2 as f64).abs() > 1e-9 {
            return Err(CliError::Usage(format!("d * n1 must be an integer, got {d} * {n1}")));
        }
        if g.n() % n1 != 0 || n2 == 0 || g.n() % n2 != 0 {
            return Err(CliError::Usage(format!("grid_n = {} must be a multiple of n1 = {n1} and n2 = {n2}", g.n())));
        }
        params.push(ModelParams::new(n1, n2, kappa)?);
    }
    let tau = solve_elliptic(&discretize_ld(g, d, kappa)?)?.tau;
    let rows = convergence_study(&params, &tau)?;
    let errors: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
    let passed = strictly_decreasing(&errors);
    let mut csv = String::from("n1,n2,kappa,sup_error\n");
    for r in &rows {
        csv += &format!("{},{},{},{}\n", r.n1, r.n2, fmt_f64(r.kappa), fmt_f64(r.sup_error));
    }
    let result = json!({ "study": "convergence", "rows": to_value(&rows)?, "strictly_decreasing": passed });
    Ok(Outcome {
        artifacts: vec![
            report_json(Command::Sweep, s, passed, result)?,
            Artifact { name: "sweep_convergence.csv".into(), bytes: csv.into_bytes() },
        ],
        passed,
        summary: json!({ "sup_errors": errors }),
    })
}

fn sweep_d_limit(s: &mut Settings) -> Result<Outcome, CliError> {
    let kappa = Settings::require(&s.kappa, "kappa")?;
    let d_list = s.d_list.get_or_insert_with(|| vec![0.1, 0.05, 0.02]).clone();
    let g = grid(s, 128)?;
    s.grid_n = Some(g.n());
    let slack = SlackPolicy::calibrate()?;
    let report = d_limit_check(kappa, &d_list, g, &slack)?;
    // The upper half is only claimed below an unknown threshold, reported as d_star.
    let passed = report.rows.iter().all(|r| r.lower_ok);
    let mut csv = String::from("d,max_gap,min_gap,min_upper_margin,upper_violations,lower_ok,bound_ok\n");
    for r in &report.rows {
        csv += &format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(r.d),
            fmt_f64(r.max_gap),
            fmt_f64(r.min_gap),
            fmt_f64(r.min_upper_margin),
            r.upper_violations,
            r.lower_ok,
            r.bound_ok
        );
    }
    let summary = json!({ "d_star": report.d_star, "gap_decreasing": report.gap_decreasing });
    let result = json!({ "study": "d-limit", "report": to_value(&report)? });
    Ok(Outcome {
        artifacts: vec![
            report_json(Command::Sweep, s, passed, result)?,
            Artifact { name: "sweep_d_limit.csv".into(), bytes: csv.into_bytes() },
        ],
        passed,
        summary,
    })
}

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    passed: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self { name, value, tolerance, passed: value <= tolerance }
    }
}

fn validate(s: &mut Settings) -> Result<Outcome, CliError> {
    let p = model_params(s)?;
    if p.kappa() <= 0.0 {
        return Err(CliError::Usage("validate needs kappa > 0 so that extinction times are finite".into()));
    }
    let seed = *s.seed.get_or_insert(0);
    let reps = *s.replicates.get_or_insert(DEFAULT_VALIDATE_REPLICATES);
    let start = start_state(s, &p)?;
    s.j1 = Some(start.j1);
    s.j2 = Some(start.j2);
    let g = grid(s, 32)?;
    s.grid_n = Some(g.n());
    let (d, kappa) = (p.d(), p.kappa());
    let mut checks = Vec::new();

    let matrix = build_transition_matrix(&p)?;
    let stats = matrix.stats();
    checks.push(Check::at_most("kernel rows sum to one", stats.max_row_sum_deviation, 1e-12));
    let a = metacomm_core::model::build_exchange_matrix(&p)?;
    let mut mean_err: f64 = 0.0;
    for st in p.states() {
        let x = st.density(&p);
        let ax = if st.is_absorbing(&p) { x } else { a.apply(x) };
        let m = matrix.conditional_mean(st);
        mean_err = mean_err.max((m[0] - ax[0]).abs()).max((m[1] - ax[1]).abs());
    }
    checks.push(Check::at_most("one-step mean equals A x", mean_err, 1e-12));
    let conserved = Field::from_fn(p.n1(), p.n2(), |x1, x2| x1 + d * x2);
    let gen = generator_apply(&conserved, &p)?;
    checks.push(Check::at_most("generator annihilates x1 + d x2", gen.sup_norm(), 1e-10));

    let table = solve_hitting_times_from(&matrix)?;
    checks.push(Check::at_most("hitting-time residual", table.residual, 1e-10));
    let mut species: f64 = 0.0;
    let mut patches: f64 = 0.0;
    for st in p.states() {
        species = species.max((table.at(st) - table.at(st.species_swapped(&p))).abs());
        if p.n1() == p.n2() {
            patches = patches.max((table.at(st) - table.at(st.patches_swapped())).abs());
        }
    }
    checks.push(Check::at_most("species-swap symmetry (exact)", species, 5e-9));
    if p.n1() == p.n2() {
        checks.push(Check::at_most("patch-swap symmetry (exact)", patches, 5e-9));
    }
    let mc = estimate_extinction_time(&p, &McConfig::new(&p, start, reps, seed))?;
    let z = if mc.stderr > 0.0 { (mc.mean_time - table.at(start)).abs() / mc.stderr } else { 0.0 };
    checks.push(Check::at_most("Monte Carlo mean within 4 stderr of exact", z, 4.0));

    let op = discretize_ld(g, d, kappa)?;
    let cert = op.certificate();
    checks.push(Check {
        name: "M-matrix certificate",
        value: cert.max_offdiagonal,
        tolerance: 0.0,
        passed: cert.is_m_matrix && cert.nonsingular,
    });
    let sol = solve_elliptic(&op)?;
    let n = g.n();
    let sym = sol.tau.nodes().map(|(i, k, _, _, v)| (v - sol.tau.get(n - i, n - k)).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("species-swap symmetry (PDE)", sym, 5e-9));
    checks.push(Check {
        name: "elliptic solution positive",
        value: sol.min_interior,
        tolerance: 0.0,
        passed: sol.min_interior > 0.0,
    });
    let slack = SlackPolicy::calibrate()?;
    let lower = Field::from_fn(n, n, |x1, x2| tau_lower([x1, x2], d));
    let cmp: ComparisonReport = compare_fields("tau >= (1+d) H(z)", &lower, &sol.tau, slack.eps_grid(g))?;
    checks.push(Check::at_most("pooled-patch lower bound violation", -cmp.min_margin, cmp.tolerance));
    let f = Field::from_fn(n, n, |x1, x2| Initial::Logistic.eval(x1, x2));
    let par = solve_parabolic(&op, &f, 1.0, 20)?;
    checks.push(Check::at_most("parabolic positivity (negated minimum)", -par.min_value, 1e-10));

    let passed = checks.iter().all(|c| c.passed);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let result = json!({ "checks": to_value(&checks)?, "slack": to_value(&slack)? });
    Ok(Outcome {
        artifacts: vec![report_json(Command::Validate, s, passed, result)?],
        passed,
        summary: json!({ "checks": checks.len(), "failed": failed }),
    })
}
