//! Command-line front end: configuration loading, scenario runs, the
//! validation suite and parameter sweeps.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{metrics_report, MetricsReport};
use crate::cost::CostTerms;
use crate::error::OiftError;
use crate::potential::{formation_cost, formation_gradient, formation_hessian, FormationSpec, HessianMode};
use crate::projection::{Curve, FeedbackGains};
use crate::pronto::{solve, Problem, SolveResult, SolveStatus, SolverOptions};
use crate::cost::CostWeights;
use crate::scenarios::{scenario_by_name, scenario_names, Scenario, TrajectoryGenerator};

pub const OUT_DIR_ENV: &str = "OIFT_OUT_DIR";

/// Parameters that may be overridden from the command line or a config file.
pub const OVERRIDE_NAMES: [&str; 11] = [
    "dt",
    "max_iter",
    "epsilon",
    "seed",
    "q_p",
    "q_v",
    "r_a",
    "k_r",
    "k_a",
    "k_f",
    "safe_hessian",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub max_iter: Option<usize>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub q_p: Option<f64>,
    pub q_v: Option<f64>,
    pub r_a: Option<f64>,
    pub k_r: Option<f64>,
    pub k_a: Option<f64>,
    #[serde(alias = "k_F")]
    pub k_f: Option<f64>,
    pub safe_hessian: Option<bool>,
}

fn parse_switch(value: &str) -> anyhow::Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => bail!("expected on or off, got {value:?}"),
    }
}

impl Overrides {
    /// Sets one override by name from its textual value.
    pub fn set(&mut self, name: &str, value: &str) -> anyhow::Result<()> {
        let num = |v: &str| -> anyhow::Result<f64> {
            v.trim().parse::<f64>().with_context(|| format!("invalid value {v:?} for {name}"))
        };
        let int = |v: &str| -> anyhow::Result<u64> {
            v.trim().parse::<u64>().with_context(|| format!("invalid value {v:?} for {name}"))
        };
        match name {
            "dt" => self.dt = Some(num(value)?),
            "max_iter" => self.max_iter = Some(int(value)? as usize),
            "epsilon" => self.epsilon = Some(num(value)?),
            "seed" => self.seed = Some(int(value)?),
            "q_p" => self.q_p = Some(num(value)?),
            "q_v" => self.q_v = Some(num(value)?),
            "r_a" => self.r_a = Some(num(value)?),
            "k_r" => self.k_r = Some(num(value)?),
            "k_a" => self.k_a = Some(num(value)?),
            "k_f" | "k_F" => self.k_f = Some(num(value)?),
            "safe_hessian" => self.safe_hessian = Some(parse_switch(value)?),
            _ => bail!(
                "unknown parameter {name:?}; expected one of {}",
                OVERRIDE_NAMES.join(", ")
            ),
        }
        Ok(())
    }

    /// Later values win.
    pub fn merged(&self, later: &Overrides) -> Overrides {
        Overrides {
            dt: later.dt.or(self.dt),
            max_iter: later.max_iter.or(self.max_iter),
            epsilon: later.epsilon.or(self.epsilon),
            seed: later.seed.or(self.seed),
            q_p: later.q_p.or(self.q_p),
            q_v: later.q_v.or(self.q_v),
            r_a: later.r_a.or(self.r_a),
            k_r: later.k_r.or(self.k_r),
            k_a: later.k_a.or(self.k_a),
            k_f: later.k_f.or(self.k_f),
            safe_hessian: later.safe_hessian.or(self.safe_hessian),
        }
    }

    /// Applies the overrides and re-validates the scenario.
    pub fn apply(&self, scenario: &mut Scenario) -> crate::Result<()> {
        if let Some(v) = self.dt {
            scenario.dt = v;
        }
        if let Some(v) = self.max_iter {
            scenario.options.max_iter = v;
        }
        if let Some(v) = self.epsilon {
            scenario.options.epsilon = v;
        }
        if let Some(v) = self.seed {
            scenario.seed = v;
        }
        if let Some(v) = self.safe_hessian {
            scenario.options.safe_hessian = v;
        }
        let w = &mut scenario.weights;
        for (slot, v) in [
            (&mut w.q_p, self.q_p),
            (&mut w.q_v, self.q_v),
            (&mut w.r_a, self.r_a),
            (&mut w.k_f, self.k_f),
            (&mut w.potential.k_r, self.k_r),
            (&mut w.potential.k_a, self.k_a),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        scenario.validate()
    }
}

/// Scenario given by catalog name, by path to a scenario file, or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Name(String),
    Inline(Box<Scenario>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioRef,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn named(name: &str) -> Self {
        Self {
            scenario: ScenarioRef::Name(name.to_string()),
            overrides: Overrides::default(),
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).context("malformed run configuration")
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// A catalog name, or else a path to a run configuration file.
    pub fn from_target(target: &str) -> anyhow::Result<Self> {
        if scenario_by_name(target).is_ok() {
            return Ok(Self::named(target));
        }
        let path = Path::new(target);
        if path.is_file() {
            let mut cfg = Self::load(path)?;
            // Relative scenario paths are taken relative to the config file.
            if let ScenarioRef::Name(name) = &cfg.scenario {
                if scenario_by_name(name).is_err() {
                    if let Some(dir) = path.parent() {
                        let candidate = dir.join(name);
                        if candidate.is_file() {
                            cfg.scenario = ScenarioRef::Name(candidate.to_string_lossy().into_owned());
                        }
                    }
                }
            }
            return Ok(cfg);
        }
        Err(unknown_scenario(target))
    }

    /// Resolved scenario with the overrides applied and validated.
    pub fn scenario(&self) -> anyhow::Result<Scenario> {
        let mut scenario = match &self.scenario {
            ScenarioRef::Inline(s) => (**s).clone(),
            ScenarioRef::Name(name) => match scenario_by_name(name) {
                Ok(s) => s,
                Err(_) if Path::new(name).is_file() => {
                    let text = fs::read_to_string(name).with_context(|| format!("cannot read {name}"))?;
                    serde_json::from_str(&text).with_context(|| format!("malformed scenario file {name}"))?
                }
                Err(_) => return Err(unknown_scenario(name)),
            },
        };
        self.overrides
            .apply(&mut scenario)
            .map_err(|e| anyhow!(e).context("invalid overrides"))?;
        Ok(scenario)
    }
}

fn unknown_scenario(name: &str) -> anyhow::Error {
    anyhow!(
        "{}; known scenarios: {}",
        OiftError::UnknownScenario(name.to_string()),
        scenario_names().join(", ")
    )
}

/// A solved scenario with its metrics.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub problem: Problem,
    pub result: SolveResult,
    pub metrics: MetricsReport,
}

pub fn run_scenario(scenario: &Scenario) -> crate::Result<RunOutcome> {
    let problem = scenario.problem()?;
    let result = solve(&problem, &scenario.options)?;
    let metrics = metrics_report(&problem, &result.xi_star, scenario.subspace.as_deref())?;
    Ok(RunOutcome {
        scenario: scenario.clone(),
        problem,
        result,
        metrics,
    })
}

#[derive(Debug, Serialize)]
struct Provenance<'a> {
    version: &'static str,
    seed: u64,
    dt: f64,
    horizon: f64,
    agents: usize,
    dim: usize,
    weights: &'a CostWeights,
    options: &'a SolverOptions,
    gains: &'a FeedbackGains,
    formation: &'a FormationSpec,
    desired: &'a TrajectoryGenerator,
    integration: &'static str,
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    scenario: &'a str,
    status: SolveStatus,
    iterations: usize,
    final_cost: f64,
    max_defect: f64,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
    provenance: Provenance<'a>,
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn trajectory_header(n: usize, m: usize) -> Vec<String> {
    let per_agent = |prefix: &str| -> Vec<String> {
        (1..=n)
            .flat_map(|i| AXES[..m].iter().map(move |a| format!("{prefix}_{i}{a}")))
            .collect()
    };
    let mut cols = vec!["t".to_string()];
    cols.extend(per_agent("p"));
    cols.extend(per_agent("v"));
    cols.extend(per_agent("u"));
    cols.extend(AXES[..m].iter().map(|a| format!("pB_{a}")));
    cols.extend(AXES[..m].iter().map(|a| format!("pB_des_{a}")));
    cols
}

fn csv_writer(path: &Path, comment: Option<&str>) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    Ok(csv::Writer::from_writer(out))
}

/// Writes trajectory.csv, iterations.csv, cost_terms.csv and metrics.json into `dir`.
pub fn write_artifacts(outcome: &RunOutcome, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let p = &outcome.problem;
    let (n, m) = (p.sys.spec.agents(), p.sys.spec.dim());
    let xi = &outcome.result.xi_star;

    let comment = format!(
        "t [s]; p_<agent><axis> positions [m]; v_<agent><axis> velocities [m/s]; \
         u_<agent><axis> inputs [m/s^2]; pB_<axis> barycenter [m]; pB_des_<axis> desired barycenter [m]; \
         {n} agents in {m}D, {} nodes",
        p.grid.nodes()
    );
    let mut w = csv_writer(&dir.join("trajectory.csv"), Some(&comment))?;
    w.write_record(trajectory_header(n, m))?;
    for (k, (x, u)) in xi.states().iter().zip(xi.inputs()).enumerate() {
        let xb = p.sys.barycenter(x)?;
        let des = p.desired.node(k);
        let row = std::iter::once(p.grid.time(k))
            .chain(x.iter().copied())
            .chain(u.iter().copied())
            .chain(xb.iter().take(m).copied())
            .chain(des.iter().take(m).copied());
        w.write_record(row.map(|v| v.to_string()))?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("iterations.csv"), None)?;
    for rec in &outcome.result.history {
        w.serialize(rec)?;
    }
    if outcome.result.history.is_empty() {
        w.write_record(["k", "g", "dg", "gamma", "backtracks"])?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("cost_terms.csv"), None)?;
    w.write_record(["t", "tracking", "input", "formation", "total"])?;
    for (k, c) in outcome.metrics.cost_terms.iter().enumerate() {
        let CostTerms {
            tracking,
            input,
            formation,
        } = *c;
        w.write_record(
            [p.grid.time(k), tracking, input, formation, c.total()].map(|v| v.to_string()),
        )?;
    }
    w.flush()?;

    let s = &outcome.scenario;
    let report = RunReport {
        scenario: &s.name,
        status: outcome.result.status,
        iterations: outcome.result.iterations(),
        final_cost: outcome.result.final_cost,
        max_defect: xi.max_defect(&p.sys),
        metrics: &outcome.metrics,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION"),
            seed: s.seed,
            dt: s.dt,
            horizon: s.horizon,
            agents: n,
            dim: m,
            weights: &s.weights,
            options: &s.options,
            gains: &s.gains,
            formation: &s.formation,
            desired: &s.desired,
            integration: "rk4_linear_input",
        },
    };
    let file = File::create(dir.join("metrics.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &report)?;
    Ok(())
}

fn output_dir(flag: Option<&Path>, cfg: &RunConfig, name: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return p.clone();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(base) if !base.is_empty() => PathBuf::from(base).join(name),
        _ => PathBuf::from("out").join(name),
    }
}

/// Solves and writes artifacts. Errors on solver failure, including a failed line search.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> anyhow::Result<RunOutcome> {
    let scenario = cfg.scenario()?;
    let outcome = run_scenario(&scenario).with_context(|| format!("solving {}", scenario.name))?;
    write_artifacts(&outcome, out)?;
    if outcome.result.status == SolveStatus::LineSearchFailed {
        let last = outcome.result.history.last();
        bail!(
            "line search failed at iteration {} (dg = {:.3e}); partial results written to {}",
            last.map_or(0, |r| r.k),
            last.map_or(f64::NAN, |r| r.dg),
            out.display()
        );
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Failure that the configuration predicts, e.g. an indefinite exact Hessian.
    ExpectedFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, ok: bool, measured: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            measured,
            tolerance,
            detail,
        }
    }
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(h.clone()).eigenvalues.min()
}

/// Gradient, Hessian, PSD, projection and directional-derivative checks at
/// the zero-input trajectory of `scenario`.
pub fn validation_suite(scenario: &Scenario) -> crate::Result<Vec<CheckResult>> {
    let problem = scenario.problem()?;
    let nn = problem.sys.config_dim();
    let w = &problem.weights;
    let f = &problem.formation;
    let p0 = problem.x0.rows(0, nn).into_owned();
    let mut out = Vec::new();

    let step = 1e-6;
    let grad = formation_gradient(p0.as_view(), f, w.k_f, &w.potential)?;
    let scale = grad.amax().max(1e-8);
    let mut worst: f64 = 0.0;
    for i in 0..nn {
        let mut hi = p0.clone();
        let mut lo = p0.clone();
        hi[i] += step;
        lo[i] -= step;
        let fd = (formation_cost(hi.as_view(), f, w.k_f, &w.potential)?
            - formation_cost(lo.as_view(), f, w.k_f, &w.potential)?)
            / (2.0 * step);
        worst = worst.max((fd - grad[i]).abs() / scale);
    }
    out.push(CheckResult::new("gradient", worst < 1e-5, worst, 1e-5, "formation gradient vs central differences".into()));

    let hess = formation_hessian(p0.as_view(), f, w.k_f, &w.potential, HessianMode::Exact)?;
    let hscale = hess.amax().max(1e-8);
    let mut worst: f64 = 0.0;
    for i in 0..nn {
        let mut hi = p0.clone();
        let mut lo = p0.clone();
        hi[i] += step;
        lo[i] -= step;
        let col = (formation_gradient(hi.as_view(), f, w.k_f, &w.potential)?
            - formation_gradient(lo.as_view(), f, w.k_f, &w.potential)?)
            / (2.0 * step);
        worst = worst.max((col - hess.column(i)).amax() / hscale);
    }
    out.push(CheckResult::new("hessian", worst < 1e-4, worst, 1e-4, "exact formation Hessian vs differenced gradient".into()));

    let xi0 = problem.initial_trajectory()?;
    let mode = scenario.options.hessian_mode();
    let lq = problem.lq_data(&xi0, mode)?;
    let (node, lowest) = lq
        .q_o
        .iter()
        .map(min_eigenvalue)
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, e)| if e < acc.1 { (k, e) } else { acc });
    let psd_ok = lowest >= -1e-8;
    let mut psd = CheckResult::new(
        "psd",
        psd_ok,
        lowest,
        -1e-8,
        format!("min eigenvalue of Q_o ({mode:?} Hessian) at node {node}"),
    );
    if !psd_ok && mode == HessianMode::Exact {
        psd.status = CheckStatus::ExpectedFailure;
        psd.detail.push_str("; the exact Hessian is indefinite for repelling pairs");
    }
    out.push(psd);

    let once = problem.project(&xi0.to_curve())?;
    let twice = problem.project(&once.to_curve())?;
    let idem = twice.distance(&once);
    out.push(CheckResult::new("projection", idem < 1e-6, idem, 1e-6, "sup-norm |P(P(xi)) - P(xi)|".into()));
    let defect = once.max_defect(&problem.sys);
    out.push(CheckResult::new("defect", defect < 1e-9, defect, 1e-9, "RK4 defect of the projected trajectory".into()));

    // The directional derivative always uses the safe model; only a and b matter here.
    let zeta = problem.direction(&xi0, HessianMode::Safe)?;
    let g0 = problem.cost(&xi0)?;
    let probe = 1e-4 / zeta.z.iter().chain(&zeta.v).map(|v| v.amax()).fold(1e-12, f64::max);
    let shifted = |gamma: f64| -> crate::Result<f64> {
        problem.cost(&problem.project(&Curve::offset(&xi0, gamma, &zeta.z, &zeta.v))?)
    };
    let fd = (shifted(probe)? - shifted(-probe)?) / (2.0 * probe);
    let err = rel_err(fd, zeta.dg, 1e-12 * g0.abs().max(1.0));
    out.push(CheckResult::new(
        "directional_derivative",
        err < 1e-4,
        err,
        1e-4,
        format!("dg = {:.6e} vs central difference {:.6e}", zeta.dg, fd),
    ));
    Ok(out)
}

pub fn suite_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.status != CheckStatus::Fail)
}

/// One row of a sweep summary.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: String,
    pub status: String,
    pub final_cost: f64,
    pub iterations: usize,
    pub phi_c: String,
    pub phi_c_value: f64,
    pub terminal_tracking_error: f64,
    pub output_dir: String,
}

pub fn cmd_sweep(cfg: &RunConfig, parameter: &str, values: &[String], out: &Path) -> anyhow::Result<Vec<SweepRow>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    // Validate every value before running anything.
    let configs: Vec<(String, RunConfig)> = values
        .iter()
        .map(|v| {
            let mut single = Overrides::default();
            single.set(parameter, v)?;
            let mut c = cfg.clone();
            c.overrides = cfg.overrides.merged(&single);
            c.scenario()?;
            Ok((v.trim().to_string(), c))
        })
        .collect::<anyhow::Result<_>>()?;
    fs::create_dir_all(out)?;
    let rows: Vec<SweepRow> = configs
        .par_iter()
        .map(|(value, c)| {
            let dir = out.join(format!("{parameter}={value}"));
            let scenario = c.scenario()?;
            let outcome = run_scenario(&scenario).with_context(|| format!("{parameter} = {value}"))?;
            write_artifacts(&outcome, &dir)?;
            Ok(SweepRow {
                parameter: parameter.to_string(),
                value: value.clone(),
                status: serde_json::to_value(outcome.result.status)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                final_cost: outcome.result.final_cost,
                iterations: outcome.result.iterations(),
                phi_c: outcome.metrics.phi_c.to_string(),
                phi_c_value: outcome.metrics.phi_c_value,
                terminal_tracking_error: outcome.metrics.terminal_tracking_error,
                output_dir: dir.to_string_lossy().into_owned(),
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let mut w = csv_writer(&out.join("summary.csv"), None)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Debug, Parser)]
#[command(name = "oift", version, about = "Optimal formation tracking for double-integrator swarms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a scenario and write its artifacts.
    Run {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the derivative, PSD and projection checks at the initial trajectory.
    Check {
        #[command(flatten)]
        target: TargetArgs,
    },
    /// Solve once per value of one parameter.
    Sweep {
        #[command(flatten)]
        target: TargetArgs,
        /// Parameter to vary (dt, max_iter, epsilon, seed, q_p, q_v, r_a, k_r, k_a, k_f, safe_hessian).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Catalog scenario name or path to a JSON run configuration.
    pub scenario: String,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub q_p: Option<f64>,
    #[arg(long)]
    pub q_v: Option<f64>,
    #[arg(long)]
    pub r_a: Option<f64>,
    #[arg(long)]
    pub k_r: Option<f64>,
    #[arg(long)]
    pub k_a: Option<f64>,
    #[arg(long)]
    pub k_f: Option<f64>,
    /// on or off.
    #[arg(long, value_parser = parse_switch_arg)]
    pub safe_hessian: Option<bool>,
}

fn parse_switch_arg(s: &str) -> Result<bool, String> {
    parse_switch(s).map_err(|e| e.to_string())
}

impl TargetArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            dt: self.dt,
            max_iter: self.max_iter,
            epsilon: self.epsilon,
            seed: self.seed,
            q_p: self.q_p,
            q_v: self.q_v,
            r_a: self.r_a,
            k_r: self.k_r,
            k_a: self.k_a,
            k_f: self.k_f,
            safe_hessian: self.safe_hessian,
        }
    }

    /// Config from the target with command-line overrides on top; validated.
    pub fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::from_target(&self.scenario)?;
        cfg.overrides = cfg.overrides.merged(&self.overrides());
        cfg.scenario()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { target, out } => {
            let cfg = target.config()?;
            let name = cfg.scenario()?.name;
            let dir = output_dir(out.as_deref(), &cfg, &name);
            let o = cmd_run(&cfg, &dir)?;
            let status = serde_json::to_value(o.result.status)?;
            println!("scenario            {name}");
            println!("status              {}", status.as_str().unwrap_or_default());
            println!("iterations          {}", o.result.iterations());
            println!("final cost          {:.10e}", o.result.final_cost);
            println!("phi_c               {} ({:.3})", o.metrics.phi_c, o.metrics.phi_c_value);
            println!("terminal tracking   {:.4e} m", o.metrics.terminal_tracking_error);
            if let Some(r) = o.metrics.subspace_residual {
                println!("subspace residual   {r:.3e} m");
            }
            println!("artifacts           {}", dir.display());
            Ok(true)
        }
        Command::Check { target } => {
            let cfg = target.config()?;
            let scenario = cfg.scenario()?;
            let results = validation_suite(&scenario)?;
            for r in &results {
                let tag = match r.status {
                    CheckStatus::Pass => "PASS",
                    CheckStatus::Fail => "FAIL",
                    CheckStatus::ExpectedFailure => "XFAIL",
                };
                println!("{tag:5} {:24} measured {:.3e} (tol {:.0e})  {}", r.name, r.measured, r.tolerance, r.detail);
            }
            let ok = suite_passed(&results);
            println!("{}", if ok { "suite passed" } else { "suite FAILED" });
            Ok(ok)
        }
        Command::Sweep {
            target,
            param,
            values,
            out,
        } => {
            let cfg = target.config()?;
            let name = cfg.scenario()?.name;
            let dir = output_dir(out.as_deref(), &cfg, &format!("{name}-sweep-{param}"));
            let rows = cmd_sweep(&cfg, &param, &values, &dir)?;
            for r in &rows {
                println!(
                    "{}={:<10} {:18} g={:.6e} iters={:3} phi_c={} terminal_tracking={:.4e}",
                    r.parameter, r.value, r.status, r.final_cost, r.iterations, r.phi_c, r.terminal_tracking_error
                );
            }
            println!("summary             {}", dir.join("summary.csv").display());
            Ok(true)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
