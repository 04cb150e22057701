//! Command-line front end: argument parsing, dispatch and serialization.
//!
//! Tables (`sweep`, `quench`) default to CSV, everything else to JSON.
//! Floats are always written with 17 significant digits. Exit codes: 0 on
//! success, 1 for usage errors, 2 when a numerical flag is raised under
//! `--strict` or a fit cannot be produced.

pub mod output;

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use vqcs_core::coherent::{AngleSchedule, CircuitAmplitude, InitialState};
use vqcs_core::experiments::{self, CollapseSide, Regime, SweepOptions, SweepRow};
use vqcs_core::model::ground_energy_density_inf;
use vqcs_core::observables::{self, DEFAULT_NODES};
use vqcs_core::optimizer::{self, BfgsOptions, OptimizationResult};
use vqcs_core::oracle::{self, Observable};
use vqcs_core::{Error, Field};

use output::{csv_text, json_text, read_sweep_csv, sweep_table, Cell, Table};

#[derive(Debug, Parser)]
#[command(
    name = "vqcs",
    version,
    about = "Coherent-state evaluation of Ising-chain variational circuits"
)]
pub struct Cli {
    /// Exit with status 2 when any convergence or accuracy flag is raised.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Output format; tables default to csv, single results to json.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads (RAYON_NUM_THREADS is honoured when absent).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Init {
    Zero,
    Plus,
}

impl From<Init> for InitialState {
    fn from(i: Init) -> Self {
        match i {
            Init::Zero => InitialState::AllZero,
            Init::Plus => InitialState::AllPlus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum RegimeArg {
    Sub,
    Critical,
    Super,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SideArg {
    Below,
    Above,
    Both,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Angles {
    /// X-layer angles, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "betas"
    )]
    pub gammas: Option<Vec<f64>>,
    /// ZZ-layer angles, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "gammas"
    )]
    pub betas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Optimize the circuit angles at one field and depth.
    Optimize {
        #[arg(long)]
        h: f64,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, value_enum, default_value_t = Init::Zero)]
        init: Init,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Reach depth p by continuation from p = 1.
        #[arg(long)]
        continuation: bool,
    },
    /// Energy, overlap, m_X, m_XX and m_Z of given or optimized angles.
    Observables {
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        angles: Angles,
        /// Depth to optimize when no angles are given.
        #[arg(long, required_unless_present = "gammas")]
        p: Option<usize>,
        #[arg(long, required_unless_present = "gammas")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, value_enum, default_value_t = Init::Zero)]
        init: Init,
        /// Sites for the finite-size energy and overlap (default 4p).
        #[arg(long = "L")]
        sites: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        ells: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
        #[arg(long)]
        no_mz: bool,
    },
    /// Optimized observables on an h × p grid.
    Sweep {
        #[arg(long, requires_all = ["h_max", "h_steps"], conflicts_with = "h_list")]
        h_min: Option<f64>,
        #[arg(long)]
        h_max: Option<f64>,
        #[arg(long)]
        h_steps: Option<usize>,
        /// Explicit fields, visited in the order given.
        #[arg(long, value_delimiter = ',', required_unless_present = "h_min")]
        h_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', required = true)]
        p_list: Vec<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, value_enum, default_value_t = Init::Zero)]
        init: Init,
        #[arg(long)]
        no_mz: bool,
        #[arg(long)]
        no_chi: bool,
        #[arg(long, default_value_t = 1e-3)]
        delta_h: f64,
        #[arg(long, default_value_t = DEFAULT_NODES)]
        nodes: usize,
    },
    /// Fit residual energy against depth.
    EnergyScaling {
        /// Sweep CSV to read residuals from; computed by continuation otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Field to select (required when the input holds several).
        #[arg(long, required_unless_present = "input")]
        h: Option<f64>,
        /// Defaults to sub / critical / super from h.
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        #[arg(long, default_value_t = 1)]
        p_min: usize,
        #[arg(long, required_unless_present = "input")]
        p_max: Option<usize>,
        #[arg(long, required_unless_present = "input")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, value_enum, default_value_t = Init::Zero)]
        init: Init,
    },
    /// Finite-depth scaling collapse of m_Z curves from a sweep CSV.
    Collapse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        hc: f64,
        #[arg(long, value_enum, default_value_t = SideArg::Below)]
        side: SideArg,
        /// Optimize h_c as well, starting from --hc.
        #[arg(long)]
        free_hc: bool,
    },
    /// Distinct optima reached from random starts.
    Branches {
        #[arg(long)]
        h: f64,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Init::Zero)]
        init: Init,
        #[arg(long)]
        no_mz: bool,
    },
    /// m_Z(t) after a sudden change of field h0 → h.
    Quench {
        #[arg(long)]
        h0: f64,
        #[arg(long)]
        h: f64,
        #[arg(long, conflicts_with = "times")]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 11)]
        t_steps: usize,
        #[arg(long, value_delimiter = ',', required_unless_present = "t_max")]
        times: Option<Vec<f64>>,
    },
    /// Depth-L/2 circuit that reproduces the L-site ground state.
    PrepareExact {
        #[arg(long = "L")]
        sites: usize,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        starts: usize,
    },
    /// Closed-form finite-size values against the dense statevector.
    OracleCheck {
        #[arg(long = "L")]
        sites: usize,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        angles: Angles,
        #[arg(long, required_unless_present = "gammas")]
        p: Option<usize>,
        #[arg(long, required_unless_present = "gammas")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, value_enum, default_value_t = Init::Zero)]
        init: Init,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        ells: Vec<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Optimize { .. } => "optimize",
            Command::Observables { .. } => "observables",
            Command::Sweep { .. } => "sweep",
            Command::EnergyScaling { .. } => "energy-scaling",
            Command::Collapse { .. } => "collapse",
            Command::Branches { .. } => "branches",
            Command::Quench { .. } => "quench",
            Command::PrepareExact { .. } => "prepare-exact",
            Command::OracleCheck { .. } => "oracle-check",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Optimize { seed, .. }
            | Command::Sweep { seed, .. }
            | Command::Branches { seed, .. }
            | Command::PrepareExact { seed, .. } => Some(*seed),
            Command::Observables { seed, .. }
            | Command::EnergyScaling { seed, .. }
            | Command::OracleCheck { seed, .. } => *seed,
            Command::Collapse { .. } | Command::Quench { .. } => None,
        }
    }

    fn tabular(&self) -> bool {
        matches!(self, Command::Sweep { .. } | Command::Quench { .. })
    }
}

/// Maximum tolerated deviation in `oracle-check`.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Fit(_) | Error::RegimeMismatch { .. } | Error::DegenerateWindow(_) => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

/// A command's result before formatting.
struct Outcome {
    json: Value,
    table: Table,
    flags: Vec<String>,
}

impl Outcome {
    fn single(json: Value, flags: Vec<String>) -> Self {
        let table = Table::from_json(&json);
        Self { json, table, flags }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize to JSON")
}

fn field(h: f64) -> Result<Field, Failure> {
    Ok(Field::new(h)?)
}

fn schedule_from(angles: &Angles) -> Result<Option<AngleSchedule>, Failure> {
    match (&angles.gammas, &angles.betas) {
        (Some(g), Some(b)) => {
            if g.len() != b.len() || g.is_empty() {
                return Err(Failure::Usage(format!(
                    "need equally many gammas and betas, got {} and {}",
                    g.len(),
                    b.len()
                )));
            }
            Ok(Some(AngleSchedule::new(g.clone(), b.clone())))
        }
        _ => Ok(None),
    }
}

fn optimized_schedule(
    h: Field,
    p: Option<usize>,
    seed: Option<u64>,
    restarts: usize,
    init: InitialState,
) -> Result<OptimizationResult, Failure> {
    let p = p.ok_or_else(|| Failure::Usage("--p is required without angles".into()))?;
    let seed = seed.ok_or_else(|| Failure::Usage("--seed is required without angles".into()))?;
    Ok(optimizer::minimize(h, p, init, seed, restarts)?)
}

fn optimize_json(r: &OptimizationResult) -> Value {
    let mut v = to_value(r);
    let h = Field::new(r.field).expect("optimizer fields are valid");
    v["residual"] = json!(r.energy - ground_energy_density_inf(h));
    v["canonical_time"] = json!(optimizer::total_time(&r.schedule).1);
    v
}

fn run_optimize(
    h: f64,
    p: usize,
    seed: u64,
    restarts: usize,
    init: Init,
    max_iterations: Option<usize>,
    continuation: bool,
) -> Result<Outcome, Failure> {
    let h = field(h)?;
    let mut opts = BfgsOptions::default();
    if let Some(m) = max_iterations {
        opts.max_iterations = m;
    }
    let r = if continuation {
        optimizer::depth_continuation_with(h, p, init.into(), seed, restarts, &opts)?
            .pop()
            .expect("continuation returns one result per depth")
    } else {
        optimizer::minimize_with(h, p, init.into(), seed, restarts, &opts)?
    };
    let flags = if r.converged {
        vec![]
    } else {
        vec!["optimizer".to_string()]
    };
    Ok(Outcome::single(optimize_json(&r), flags))
}

#[allow(clippy::too_many_arguments)]
fn run_observables(
    h: f64,
    angles: &Angles,
    p: Option<usize>,
    seed: Option<u64>,
    restarts: usize,
    init: Init,
    sites: Option<usize>,
    ells: &[usize],
    nodes: usize,
    no_mz: bool,
) -> Result<Outcome, Failure> {
    let h = field(h)?;
    let init: InitialState = init.into();
    let schedule = match schedule_from(angles)? {
        Some(s) => s,
        None => optimized_schedule(h, p, seed, restarts, init)?.schedule,
    };
    let l = sites.unwrap_or_else(|| optimizer::light_cone_sites(schedule.depth()));
    if l < 2 || l % 2 != 0 {
        return Err(Error::InvalidSize(l).into());
    }
    let seq = schedule.to_sequence();
    let rep = observables::report(&seq, h, l, init, ells, nodes, !no_mz);
    let mut flags = Vec::new();
    if !rep.m_x_converged {
        flags.push("m_x_grid".to_string());
    }
    if !rep.m_xx_converged {
        flags.push("m_xx_grid".to_string());
    }
    if !rep.m_z_converged {
        flags.push("m_z_grid".to_string());
    }
    if rep.m_z_singular {
        flags.push("m_z_singular".to_string());
    }
    let mut v = to_value(&rep);
    v["schedule"] = to_value(&schedule);
    v["overlap_modulus"] = json!(rep.overlap.norm());
    Ok(Outcome::single(v, flags))
}

fn h_grid(
    h_min: Option<f64>,
    h_max: Option<f64>,
    h_steps: Option<usize>,
    h_list: &Option<Vec<f64>>,
) -> Result<Vec<f64>, Failure> {
    if let Some(list) = h_list {
        return Ok(list.clone());
    }
    match (h_min, h_max, h_steps) {
        (Some(a), Some(b), Some(n)) if n >= 2 => Ok((0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()),
        (Some(a), Some(_), Some(1)) => Ok(vec![a]),
        _ => Err(Failure::Usage(
            "give --h-list or --h-min/--h-max/--h-steps (steps >= 1)".into(),
        )),
    }
}

fn row_flags(rows: &[SweepRow]) -> Vec<String> {
    rows.iter()
        .filter(|r| r.status != "ok")
        .map(|r| format!("h={} p={}: {}", output::fmt_f64(r.h), r.p, r.status))
        .collect()
}

fn read_input(path: &PathBuf) -> Result<Vec<SweepRow>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    read_sweep_csv(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn regime_for(h: f64, arg: Option<RegimeArg>) -> Regime {
    match arg {
        Some(RegimeArg::Sub) => Regime::Sub,
        Some(RegimeArg::Critical) => Regime::Critical,
        Some(RegimeArg::Super) => Regime::Super,
        None if (h - 1.0).abs() < 1e-12 => Regime::Critical,
        None if h < 1.0 => Regime::Sub,
        None => Regime::Super,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_energy_scaling(
    input: &Option<PathBuf>,
    h: Option<f64>,
    regime: Option<RegimeArg>,
    p_min: usize,
    p_max: Option<usize>,
    seed: Option<u64>,
    restarts: usize,
    init: Init,
) -> Result<Outcome, Failure> {
    let (h, series): (f64, Vec<(usize, f64)>) = match input {
        Some(path) => {
            let rows = read_input(path)?;
            let mut fields: Vec<f64> = rows.iter().map(|r| r.h).collect();
            fields.sort_by(f64::total_cmp);
            fields.dedup();
            let h = match h {
                Some(h) => h,
                None if fields.len() == 1 => fields[0],
                None => {
                    return Err(Failure::Usage(
                        "input holds several fields; pass --h".into(),
                    ))
                }
            };
            let series = rows
                .iter()
                .filter(|r| (r.h - h).abs() <= 1e-12 && r.residual.is_finite())
                .filter(|r| r.p >= p_min && p_max.is_none_or(|m| r.p <= m))
                .map(|r| (r.p, r.residual))
                .collect();
            (h, series)
        }
        None => {
            let (h, p_max, seed) = match (h, p_max, seed) {
                (Some(h), Some(p), Some(s)) => (h, p, s),
                _ => {
                    return Err(Failure::Usage(
                        "compute mode needs --h, --p-max and --seed".into(),
                    ))
                }
            };
            let fh = field(h)?;
            let e0 = ground_energy_density_inf(fh);
            let runs = optimizer::depth_continuation(fh, p_max, init.into(), seed, restarts)?;
            let series = runs
                .iter()
                .filter(|r| r.depth >= p_min)
                .map(|r| (r.depth, r.energy - e0))
                .collect();
            (h, series)
        }
    };
    let fit = experiments::fit_energy_scaling(&series, regime_for(h, regime))?;
    let mut v = to_value(&fit);
    v["field"] = json!(h);
    v["series"] = to_value(&series);
    Ok(Outcome::single(v, vec![]))
}

fn run_collapse(
    input: &PathBuf,
    hc: f64,
    side: SideArg,
    free_hc: bool,
) -> Result<Outcome, Failure> {
    let rows = read_input(input)?;
    let curves = experiments::curves_from_rows(&rows);
    let side = match side {
        SideArg::Below => CollapseSide::Below,
        SideArg::Above => CollapseSide::Above,
        SideArg::Both => CollapseSide::Both,
    };
    let fit = if free_hc {
        experiments::collapse_fit_free_hc(&curves, hc, side)?
    } else {
        experiments::collapse_fit(&curves, hc, side)?
    };
    Ok(Outcome::single(to_value(&fit), vec![]))
}

fn run_branches(
    h: f64,
    p: usize,
    samples: usize,
    seed: u64,
    init: Init,
    no_mz: bool,
) -> Result<Outcome, Failure> {
    let census =
        optimizer::enumerate_branches_with(field(h)?, p, init.into(), samples, seed, !no_mz)?;
    let mut v = to_value(&census);
    v["branch_count"] = json!(census.branches.len());
    v["energy_spread"] = json!(census.energy_spread());
    v["m_x_spread"] = json!(census.m_x_spread());
    v["m_z_spread"] = json!(census.m_z_spread());
    v["mean_total_time"] = json!(census.mean_total_time());
    let mut table = Table::new(&[
        "branch_key",
        "count",
        "energy",
        "m_x",
        "m_z",
        "total_time",
        "gammas",
        "betas",
    ]);
    let join = |xs: &[f64]| {
        xs.iter()
            .map(|&x| output::fmt_f64(x))
            .collect::<Vec<_>>()
            .join(";")
    };
    for b in &census.branches {
        table.push(vec![
            b.branch_key.into(),
            b.count.into(),
            b.energy.into(),
            b.m_x.into(),
            b.m_z.into(),
            b.total_time.into(),
            Cell::Text(join(&b.schedule.gammas)),
            Cell::Text(join(&b.schedule.betas)),
        ]);
    }
    Ok(Outcome {
        json: v,
        table,
        flags: vec![],
    })
}

fn run_quench(
    h0: f64,
    h: f64,
    t_max: Option<f64>,
    t_steps: usize,
    times: &Option<Vec<f64>>,
) -> Result<Outcome, Failure> {
    let times: Vec<f64> = match (times, t_max) {
        (Some(t), _) => t.clone(),
        (None, Some(tm)) if t_steps >= 2 => (0..t_steps)
            .map(|i| tm * i as f64 / (t_steps - 1) as f64)
            .collect(),
        (None, Some(tm)) if t_steps == 1 => vec![tm],
        _ => {
            return Err(Failure::Usage(
                "give --times or --t-max with --t-steps >= 1".into(),
            ))
        }
    };
    let mz = experiments::quench_magnetization(field(h0)?, field(h)?, &times)?;
    let mut table = Table::new(&["t", "m_z", "phase", "nodes", "converged", "singular"]);
    let mut flags = Vec::new();
    for (&t, m) in times.iter().zip(&mz) {
        if !m.converged {
            flags.push(format!("t={}: m_z_grid", output::fmt_f64(t)));
        }
        if m.singular {
            flags.push(format!("t={}: m_z_singular", output::fmt_f64(t)));
        }
        table.push(vec![
            t.into(),
            m.value.into(),
            m.phase.into(),
            m.nodes.into(),
            m.converged.into(),
            m.singular.into(),
        ]);
    }
    let points: Vec<Value> = times
        .iter()
        .zip(&mz)
        .map(|(&t, m)| {
            let mut v = to_value(m);
            v["t"] = json!(t);
            v
        })
        .collect();
    let json = json!({ "h0": h0, "h": h, "points": points });
    Ok(Outcome { json, table, flags })
}

fn run_prepare(sites: usize, h: f64, seed: u64, starts: usize) -> Result<Outcome, Failure> {
    let prep = experiments::solve_exact_preparation(sites, field(h)?, seed, starts)?;
    let flags = if prep.success {
        vec![]
    } else {
        vec!["no exact preparation found".to_string()]
    };
    Ok(Outcome::single(to_value(&prep), flags))
}

#[allow(clippy::too_many_arguments)]
fn run_oracle_check(
    sites: usize,
    h: f64,
    angles: &Angles,
    p: Option<usize>,
    seed: Option<u64>,
    restarts: usize,
    init: Init,
    ells: &[usize],
) -> Result<Outcome, Failure> {
    if sites < 2 || sites % 2 != 0 {
        return Err(Error::InvalidSize(sites).into());
    }
    let fh = field(h)?;
    let init: InitialState = init.into();
    let schedule = match schedule_from(angles)? {
        Some(s) => s,
        None => optimized_schedule(fh, p, seed, restarts, init)?.schedule,
    };
    let seq = schedule.to_sequence();
    let state = oracle::simulate(sites, &seq, init)?;
    let lf = sites as f64;
    let mut dev: BTreeMap<String, f64> = BTreeMap::new();

    let e = observables::energy_density(&seq, fh, sites, init);
    dev.insert(
        "energy".into(),
        (e - oracle::expectation(&state, Observable::Energy(h)) / lf).abs(),
    );

    let mx = observables::magnetization_x_finite(&seq, sites, init);
    let mx_oracle = oracle::expectation(&state, Observable::X);
    dev.insert("m_x".into(), (mx - mx_oracle).abs());

    for &ell in ells {
        let c = observables::correlation_xx_finite(&seq, ell, sites, init);
        let c_oracle = oracle::expectation(&state, Observable::XX(ell)) - mx_oracle * mx_oracle;
        dev.insert(format!("m_xx_{ell}"), (c - c_oracle).abs());
    }

    if sites <= oracle::MAX_EIGEN_SITES {
        let gs = oracle::ground_state(sites, h)?;
        let ov = observables::overlap(&seq, fh, sites, init, false).norm();
        dev.insert("overlap".into(), (ov - gs.even.inner(&state).norm()).abs());
    }

    // The infinite-size m_X converges to the finite one only for L ≥ 2p; it is
    // reported for reference and not checked.
    let src = CircuitAmplitude::new(&seq, init);
    let mx_inf = observables::magnetization_x(&src, DEFAULT_NODES).value;

    let max = dev.values().copied().fold(0.0, f64::max);
    let flags: Vec<String> = dev
        .iter()
        .filter(|(_, &d)| !(d < ORACLE_TOLERANCE))
        .map(|(k, d)| format!("{k}: deviation {}", output::fmt_f64(*d)))
        .collect();
    let json = json!({
        "sites": sites,
        "field": h,
        "schedule": to_value(&schedule),
        "deviations": dev,
        "max_deviation": max,
        "tolerance": ORACLE_TOLERANCE,
        "passed": flags.is_empty(),
        "m_x_infinite": mx_inf,
    });
    Ok(Outcome::single(json, flags))
}

fn dispatch(cmd: &Command) -> Result<Outcome, Failure> {
    match cmd {
        Command::Optimize {
            h,
            p,
            seed,
            restarts,
            init,
            max_iterations,
            continuation,
        } => run_optimize(
            *h,
            *p,
            *seed,
            *restarts,
            *init,
            *max_iterations,
            *continuation,
        ),
        Command::Observables {
            h,
            angles,
            p,
            seed,
            restarts,
            init,
            sites,
            ells,
            nodes,
            no_mz,
        } => run_observables(
            *h, angles, *p, *seed, *restarts, *init, *sites, ells, *nodes, *no_mz,
        ),
        Command::Sweep {
            h_min,
            h_max,
            h_steps,
            h_list,
            p_list,
            seed,
            restarts,
            init,
            no_mz,
            no_chi,
            delta_h,
            nodes,
        } => {
            let grid = h_grid(*h_min, *h_max, *h_steps, h_list)?;
            let opts = SweepOptions {
                restarts: *restarts,
                with_mz: !no_mz,
                with_chi: !no_chi,
                delta_h: *delta_h,
                nodes: *nodes,
            };
            let table = experiments::sweep(&grid, p_list, (*init).into(), *seed, &opts)?;
            let flags = row_flags(&table.rows);
            Ok(Outcome {
                json: to_value(&table),
                table: sweep_table(&table.rows),
                flags,
            })
        }
        Command::EnergyScaling {
            input,
            h,
            regime,
            p_min,
            p_max,
            seed,
            restarts,
            init,
        } => run_energy_scaling(input, *h, *regime, *p_min, *p_max, *seed, *restarts, *init),
        Command::Collapse {
            input,
            hc,
            side,
            free_hc,
        } => run_collapse(input, *hc, *side, *free_hc),
        Command::Branches {
            h,
            p,
            samples,
            seed,
            init,
            no_mz,
        } => run_branches(*h, *p, *samples, *seed, *init, *no_mz),
        Command::Quench {
            h0,
            h,
            t_max,
            t_steps,
            times,
        } => run_quench(*h0, *h, *t_max, *t_steps, times),
        Command::PrepareExact {
            sites,
            h,
            seed,
            starts,
        } => run_prepare(*sites, *h, *seed, *starts),
        Command::OracleCheck {
            sites,
            h,
            angles,
            p,
            seed,
            restarts,
            init,
            ells,
        } => run_oracle_check(*sites, *h, angles, *p, *seed, *restarts, *init, ells),
    }
}

/// FNV-1a of the command's canonical JSON; output location and format are
/// not part of it.
pub fn config_hash(cmd: &Command) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(
        serde_json::to_string(cmd)
            .expect("commands serialize")
            .as_bytes(),
    );
    h.finish()
}

fn render(cli: &Cli, outcome: &Outcome) -> Result<String, Failure> {
    let format = cli.format.unwrap_or(if cli.command.tabular() {
        Format::Csv
    } else {
        Format::Json
    });
    let seed = cli
        .command
        .seed()
        .map_or_else(|| "none".to_string(), |s| s.to_string());
    let hash = format!("{:016x}", config_hash(&cli.command));
    let text = match format {
        Format::Json => {
            let mut v = outcome.json.clone();
            if let Value::Object(map) = &mut v {
                map.insert("flags".into(), json!(outcome.flags));
                map.insert(
                    "provenance".into(),
                    json!({
                        "version": env!("CARGO_PKG_VERSION"),
                        "command": cli.command.name(),
                        "seed": cli.command.seed(),
                        "config_hash": hash,
                    }),
                );
            }
            json_text(&v)
        }
        Format::Csv => {
            let mut prov = vec![
                ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
                ("command".to_string(), cli.command.name().to_string()),
                ("seed".to_string(), seed),
                ("config_hash".to_string(), hash),
            ];
            for f in &outcome.flags {
                prov.push(("flag".to_string(), f.clone()));
            }
            csv_text(&prov, &outcome.table)
        }
    };
    text.map_err(|e| Failure::Usage(e.to_string()))
}

fn execute(cli: &Cli) -> Result<Vec<String>, Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
    }
    let outcome = dispatch(&cli.command)?;
    let text = render(cli, &outcome)?;
    match &cli.output {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => print!("{text}"),
    }
    Ok(outcome.flags)
}

/// Parse `argv` (program name first), run the command and return the exit
/// status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(flags) => {
            for f in &flags {
                eprintln!("warning: {f}");
            }
            if cli.strict && !flags.is_empty() {
                2
            } else {
                0
            }
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}
