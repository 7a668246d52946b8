//! Command-line driver: loads an experiment config, runs one of the analysis
//! modes and writes `results.csv`, `manifest.json` and, per mode, `trace.csv`
//! or `sim_stats.csv`.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use mecmfg::des::{replicate, SimConfig};
use mecmfg::mfg::{deploy, mf_from_policies, solve_mfe, EquilibriumResult, InitialState};
use mecmfg::models::{
    busy_fractions, evaluate_finite, evaluate_meanfield, CostBreakdown, MeanField, Policy,
    TaskClass,
};

pub use config::{Diagnostic, ExperimentConfig, Mode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
/// Runtime failures that are neither config errors nor non-convergence.
pub const EXIT_RUNTIME: i32 = 1;

pub const RESULT_COLUMNS: [&str; 18] = [
    "sweep_param",
    "sweep_value",
    "type_id",
    "p_r",
    "p_y",
    "p_g",
    "mu0",
    "rho_r",
    "rho_y",
    "rho_g",
    "aoi_r",
    "aoi_y",
    "aoi_g",
    "power",
    "cost",
    "converged",
    "outer_iters",
    "wall_ms",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Aoi,
    Simulate,
    Solve,
    Sweep,
    Validate,
}

#[derive(Debug, Parser)]
#[command(
    name = "mecmfg",
    version,
    about = "Age-of-Information analysis and mean-field offloading equilibria"
)]
pub struct Args {
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `--set system.es_rate=12`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for replications and independent sweep points.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    pub type_id: usize,
    pub p_r: f64,
    pub p_y: f64,
    pub p_g: f64,
    pub mu0: f64,
    pub rho_r: f64,
    pub rho_y: f64,
    pub rho_g: f64,
    pub aoi_r: f64,
    pub aoi_y: f64,
    pub aoi_g: f64,
    pub power: f64,
    pub cost: f64,
    pub converged: bool,
    pub outer_iters: usize,
    pub wall_ms: f64,
}

impl ResultRow {
    fn new(type_id: usize, policy: &Policy, rho: &MeanField, eval: &CostBreakdown) -> Self {
        Self {
            sweep_param: String::new(),
            sweep_value: None,
            type_id,
            p_r: policy.p.red,
            p_y: policy.p.yellow,
            p_g: policy.p.green,
            mu0: policy.mu0,
            rho_r: rho.rho.red,
            rho_y: rho.rho.yellow,
            rho_g: rho.rho.green,
            aoi_r: eval.aoi.per_class.red,
            aoi_y: eval.aoi.per_class.yellow,
            aoi_g: eval.aoi.per_class.green,
            power: eval.power,
            cost: eval.cost,
            converged: true,
            outer_iters: 0,
            wall_ms: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub sweep_value: Option<f64>,
    pub iteration: usize,
    pub type_id: usize,
    pub rho_r: f64,
    pub rho_y: f64,
    pub rho_g: f64,
    pub p_r: f64,
    pub p_y: f64,
    pub p_g: f64,
    pub mu0: f64,
    pub cost: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimRow {
    pub sweep_value: Option<f64>,
    pub ue: usize,
    pub type_id: usize,
    pub class: TaskClass,
    pub aoi: f64,
    pub aoi_std_error: f64,
    pub aoi_analytic: f64,
    pub busy: f64,
    pub busy_std_error: f64,
    pub busy_formula: f64,
    pub delivered: u64,
    pub preempted: u64,
    pub blocked: u64,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<ResultRow>,
    pub trace: Vec<TraceRow>,
    pub sim: Vec<SimRow>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    mode: Mode,
    seed: u64,
    overrides: &'a [String],
    source: String,
    resolved_config: &'a ExperimentConfig,
}

#[derive(Debug)]
pub enum RunError {
    Config(Vec<Diagnostic>),
    Runtime(String),
}

impl From<mecmfg::Error> for RunError {
    fn from(e: mecmfg::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

fn eval_policies(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, RunError> {
    let sys = &cfg.system;
    let deployment = deploy(sys, &cfg.policies);
    let types = sys.assign_types();
    let rho = mf_from_policies(&cfg.policies, &sys.profiles, sys.es_rate);
    let mut rows = Vec::new();
    for (t, policy) in cfg.policies.iter().enumerate() {
        let Some(ue) = types.iter().position(|&x| x == t) else {
            continue;
        };
        let eval = evaluate_finite(&deployment, ue, sys)?;
        rows.push(ResultRow::new(t, policy, &rho, &eval));
    }
    Ok(rows)
}

fn sim_config(cfg: &ExperimentConfig) -> SimConfig {
    let types = cfg.system.assign_types();
    SimConfig {
        system: cfg.system.clone(),
        policies: types.iter().map(|&t| cfg.policies[t]).collect(),
        stop: cfg.sim.stop,
        warmup_fraction: cfg.sim.warmup_fraction,
        rng_seed: cfg.seed,
        batches: cfg.sim.batches,
        confidence: cfg.sim.confidence,
    }
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let started = Instant::now();
    let sys = &cfg.system;
    let sc = sim_config(cfg);
    let rep = replicate(&sc, cfg.sim.replications)?;
    let types = sys.assign_types();
    let deployment = deploy(sys, &cfg.policies);
    let rho = mf_from_policies(&cfg.policies, &sys.profiles, sys.es_rate);
    let mut out = Outcome::default();
    for (t, policy) in cfg.policies.iter().enumerate() {
        let members: Vec<usize> = (0..types.len()).filter(|&i| types[i] == t).collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let aoi = |c: TaskClass| {
            rep.estimate(|s| {
                members
                    .iter()
                    .map(|&i| s.ues[i].classes[c].aoi)
                    .sum::<f64>()
                    / m
            })
            .mean
        };
        let power = rep
            .estimate(|s| members.iter().map(|&i| s.ues[i].power).sum::<f64>() / m)
            .mean;
        let per_class = mecmfg::models::ClassMap::from_fn(aoi);
        let weighted = TaskClass::ALL
            .iter()
            .map(|&c| sys.aoi_weights[c] * per_class[c])
            .sum::<f64>();
        let eval = CostBreakdown {
            power,
            aoi: mecmfg::models::AoiBreakdown {
                per_class,
                weighted,
            },
            cost: power + sys.scalarization * weighted,
        };
        out.rows.push(ResultRow::new(t, policy, &rho, &eval));
    }
    for (ue, &t) in types.iter().enumerate() {
        let analytic = evaluate_finite(&deployment, ue, sys)?;
        let formula = busy_fractions(&deployment[ue].0, &deployment[ue].1);
        for c in TaskClass::ALL {
            out.sim.push(SimRow {
                sweep_value: None,
                ue,
                type_id: t,
                class: c,
                aoi: rep.aoi[ue][c].mean,
                aoi_std_error: rep.aoi[ue][c].std_error,
                aoi_analytic: analytic.aoi.per_class[c],
                busy: rep.busy[ue][c].mean,
                busy_std_error: rep.busy[ue][c].std_error,
                busy_formula: formula[c],
                delivered: rep
                    .runs
                    .iter()
                    .map(|s| s.ues[ue].classes[c].delivered)
                    .sum(),
                preempted: rep
                    .runs
                    .iter()
                    .map(|s| s.ues[ue].classes[c].preempted)
                    .sum(),
                blocked: rep.runs.iter().map(|s| s.ues[ue].classes[c].blocked).sum(),
            });
        }
    }
    let ms = started.elapsed().as_secs_f64() * 1e3;
    for r in &mut out.rows {
        r.wall_ms = ms;
    }
    Ok(out)
}

fn solve_rows(
    cfg: &ExperimentConfig,
    res: &EquilibriumResult,
    wall_ms: f64,
) -> Result<Outcome, RunError> {
    let mut out = Outcome::default();
    for (t, policy) in res.policies.iter().enumerate() {
        let eval = evaluate_meanfield(
            policy,
            &res.mean_field,
            &cfg.system.profiles[t],
            &cfg.system,
        )?;
        let mut row = ResultRow::new(t, policy, &res.mean_field, &eval);
        row.converged = res.converged;
        row.outer_iters = res.outer_iterations;
        row.wall_ms = wall_ms;
        out.rows.push(row);
    }
    for entry in &res.trace {
        for (t, p) in entry.policies.iter().enumerate() {
            out.trace.push(TraceRow {
                sweep_value: None,
                iteration: entry.iteration,
                type_id: t,
                rho_r: entry.rho.rho.red,
                rho_y: entry.rho.rho.yellow,
                rho_g: entry.rho.rho.green,
                p_r: p.p.red,
                p_y: p.p.yellow,
                p_g: p.p.green,
                mu0: p.mu0,
                cost: entry.costs[t],
                step: entry.step,
            });
        }
    }
    Ok(out)
}

fn run_solve(
    cfg: &ExperimentConfig,
    init: Option<InitialState>,
) -> Result<(Outcome, EquilibriumResult), RunError> {
    let started = Instant::now();
    let init = init.unwrap_or_else(|| InitialState {
        mean_field: mf_from_policies(&cfg.policies, &cfg.system.profiles, cfg.system.es_rate),
        policies: cfg.policies.clone(),
    });
    let res = solve_mfe(&cfg.system, &cfg.solver, &init)?;
    let out = solve_rows(cfg, &res, started.elapsed().as_secs_f64() * 1e3)?;
    Ok((out, res))
}

fn run_single(cfg: &ExperimentConfig, mode: Mode) -> Result<Outcome, RunError> {
    match mode {
        Mode::Aoi => {
            let started = Instant::now();
            let mut rows = eval_policies(cfg)?;
            let ms = started.elapsed().as_secs_f64() * 1e3;
            rows.iter_mut().for_each(|r| r.wall_ms = ms);
            Ok(Outcome {
                rows,
                ..Default::default()
            })
        }
        Mode::Simulate => run_simulate(cfg),
        Mode::Solve => Ok(run_solve(cfg, None)?.0),
        Mode::Sweep => unreachable!("nested sweep rejected by validation"),
    }
}

fn tag(out: &mut Outcome, param: &str, value: f64) {
    for r in &mut out.rows {
        r.sweep_param = param.to_string();
        r.sweep_value = Some(value);
    }
    out.trace
        .iter_mut()
        .for_each(|r| r.sweep_value = Some(value));
    out.sim.iter_mut().for_each(|r| r.sweep_value = Some(value));
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    use rayon::prelude::*;
    let sw = cfg.sweep.as_ref().expect("validated");
    let points: Vec<ExperimentConfig> = sw
        .values
        .iter()
        .map(|&v| config::at_sweep_point(cfg, &sw.param, v))
        .collect::<Result<_, _>>()
        .map_err(|d| RunError::Config(vec![d]))?;
    for (i, p) in points.iter().enumerate() {
        let diags = config::validate(p, sw.mode);
        if !diags.is_empty() {
            return Err(RunError::Config(
                diags
                    .into_iter()
                    .map(|d| Diagnostic {
                        path: d.path,
                        message: format!("{} (at sweep.values[{i}])", d.message),
                    })
                    .collect(),
            ));
        }
    }
    let mut outs: Vec<Outcome> = if sw.mode == Mode::Solve && sw.warm_start {
        let mut outs = Vec::new();
        let mut warm: Option<InitialState> = None;
        for p in &points {
            let (out, res) = run_solve(p, warm.take())?;
            warm = Some(InitialState {
                mean_field: res.mean_field,
                policies: res.policies,
            });
            outs.push(out);
        }
        outs
    } else {
        points
            .par_iter()
            .map(|p| run_single(p, sw.mode))
            .collect::<Result<_, _>>()?
    };
    let mut all = Outcome::default();
    for (out, &v) in outs.iter_mut().zip(&sw.values) {
        tag(out, &sw.param, v);
        all.rows.append(&mut out.rows);
        all.trace.append(&mut out.trace);
        all.sim.append(&mut out.sim);
    }
    Ok(all)
}

/// Runs `mode` on a validated config.
pub fn execute(cfg: &ExperimentConfig, mode: Mode) -> Result<Outcome, RunError> {
    let diags = config::validate(cfg, mode);
    if !diags.is_empty() {
        return Err(RunError::Config(diags));
    }
    match mode {
        Mode::Sweep => run_sweep(cfg),
        m => run_single(cfg, m),
    }
}

fn write_csv<T: Serialize>(
    path: &Path,
    rows: &[T],
    header: Option<&[&str]>,
) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(header.is_none())
        .from_path(path)?;
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn write_outputs(
    dir: &Path,
    mode: Mode,
    out: &Outcome,
    manifest_json: &str,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &out.rows, Some(&RESULT_COLUMNS))?;
    let inner = if mode == Mode::Sweep {
        None
    } else {
        Some(mode)
    };
    if matches!(inner, Some(Mode::Solve)) || !out.trace.is_empty() {
        write_csv(&dir.join("trace.csv"), &out.trace, None)?;
    }
    if matches!(inner, Some(Mode::Simulate)) || !out.sim.is_empty() {
        write_csv(&dir.join("sim_stats.csv"), &out.sim, None)?;
    }
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    f.write_all(manifest_json.as_bytes())?;
    f.write_all(b"\n")
}

fn print_diagnostics(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("error: {d}");
    }
}

fn report(mode: Mode, out: &Outcome) {
    for r in &out.rows {
        let sweep = r
            .sweep_value
            .map_or(String::new(), |v| format!("{}={v} ", r.sweep_param));
        println!(
            "{sweep}type {}: p=({}, {}, {}) mu0={} aoi_r={} aoi_y={} aoi_g={} power={} cost={}{}",
            r.type_id,
            r.p_r,
            r.p_y,
            r.p_g,
            r.mu0,
            r.aoi_r,
            r.aoi_y,
            r.aoi_g,
            r.power,
            r.cost,
            if matches!(mode, Mode::Solve | Mode::Sweep) {
                format!(" converged={} outer_iters={}", r.converged, r.outer_iters)
            } else {
                String::new()
            }
        );
    }
}

/// Parses `argv` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    run(&args)
}

pub fn run(args: &Args) -> i32 {
    let mut overrides = args.overrides.clone();
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    let loaded = match config::load(&args.config, &overrides) {
        Ok(l) => l,
        Err(config::LoadError::Io(e)) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        Err(config::LoadError::Diagnostics(d)) => {
            print_diagnostics(&d);
            return EXIT_CONFIG;
        }
    };
    let mut cfg = loaded.config;
    let mode = match args.command {
        Command::Validate => {
            let mode = cfg.mode.unwrap_or(if cfg.sweep.is_some() {
                Mode::Sweep
            } else {
                Mode::Solve
            });
            let d = config::validate(&cfg, mode);
            if d.is_empty() {
                println!("valid");
                return EXIT_OK;
            }
            print_diagnostics(&d);
            return EXIT_CONFIG;
        }
        Command::Aoi => Mode::Aoi,
        Command::Simulate => Mode::Simulate,
        Command::Solve => Mode::Solve,
        Command::Sweep => Mode::Sweep,
    };
    cfg.mode = Some(mode);
    cfg.solver.rng_seed = cfg.seed;
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let result = pool.install(|| execute(&cfg, mode));
    let out = match result {
        Ok(o) => o,
        Err(RunError::Config(d)) => {
            print_diagnostics(&d);
            return EXIT_CONFIG;
        }
        Err(RunError::Runtime(e)) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let manifest = Manifest {
        tool: "mecmfg",
        version: env!("CARGO_PKG_VERSION"),
        mode,
        seed: cfg.seed,
        overrides: &loaded.overrides,
        source: args.config.display().to_string(),
        resolved_config: &cfg,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if let Err(e) = write_outputs(&args.out, mode, &out, &json) {
        eprintln!("error: writing {}: {e}", args.out.display());
        return EXIT_RUNTIME;
    }
    report(mode, &out);
    if out.rows.iter().any(|r| !r.converged) {
        eprintln!("warning: equilibrium solver did not converge; results are flagged");
        return EXIT_NOT_CONVERGED;
    }
    EXIT_OK
}
