//! Scenario files, scenario runs and the random-instance equivalence suite.
//!
//! A scenario is a TOML document with `schema_version` and `kind`. Two kinds
//! exist: `edge-agreement` (a generic problem instance) and `battery-mpc`.
//! Agent and node ids in files are 1-based.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::admm::{
    default_init, fmt_f64, run, AdmmSettings, AgentInit, DualStepMode, Penalties, ProblemSpec, RunOptions,
    DEFAULT_EPS_ABS, DEFAULT_EPS_REL,
};
use crate::battery::{
    mpc_loop_with, BatteryNetwork, BatteryNode, DemandProfile, MpcParams, SimulationLog, Sinusoid,
};
use crate::error::{Error, Result};
use crate::graph::{stack, stack_operators, unstack, EdgeAgreement, Graph, RANK_TOLERANCE};
use crate::oracle::{lyapunov_series, solve_centralized, CentralState, CentralizedAdmm, INEQUALITY_SLACK};
use crate::sets::ConvexSet;
use crate::subproblem::{ExpSum, LocalObjective, Quadratic};

pub const SCHEMA_VERSION: u32 = 1;

/// Four agents in the plane, one smooth non-quadratic objective.
pub const FOUR_AGENT_EXAMPLE: &str = include_str!("../scenarios/four_agents.toml");
/// Six storage nodes on a ring tracking a two-tone demand.
pub const BATTERY_EXAMPLE: &str = include_str!("../scenarios/battery_ring.toml");

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Deserialize)]
struct Header {
    schema_version: u32,
    kind: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DualStepConfig {
    #[default]
    Mixed,
    Penalty,
    Literal,
}

impl From<DualStepConfig> for DualStepMode {
    fn from(d: DualStepConfig) -> Self {
        match d {
            DualStepConfig::Mixed => DualStepMode::Mixed,
            DualStepConfig::Penalty => DualStepMode::Penalty,
            DualStepConfig::Literal => DualStepMode::Literal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    /// Separate penalty on the edge terms; defaults to `rho`.
    pub rho_edge: Option<f64>,
    pub max_iters: usize,
    #[serde(default = "default_eps_abs")]
    pub eps_abs: f64,
    #[serde(default = "default_eps_rel")]
    pub eps_rel: f64,
    #[serde(default)]
    pub dual_step: DualStepConfig,
    #[serde(default = "yes")]
    pub stop_on_tolerance: bool,
}

fn default_eps_abs() -> f64 {
    DEFAULT_EPS_ABS
}

fn default_eps_rel() -> f64 {
    DEFAULT_EPS_REL
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    /// `x^T Q x + q^T x + c`; `q` and `c` default to zero.
    Quadratic { q_mat: Vec<Vec<f64>>, q: Option<Vec<f64>>, c: Option<f64> },
    /// `sum_k exp(x_k)`.
    ExpSum,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub from: usize,
    pub to: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitConfig {
    /// `x = z = proj(0)`, zero multipliers.
    #[default]
    ProjectedZero,
    /// `x = z` drawn uniformly from the agent's box with the scenario seed.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeScenario {
    pub schema_version: u32,
    pub kind: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub agents: usize,
    pub dim: usize,
    pub solver: SolverConfig,
    #[serde(default)]
    pub init: InitConfig,
    pub objectives: Vec<ObjectiveConfig>,
    pub boxes: Vec<BoxConfig>,
    #[serde(default)]
    pub edges: Vec<EdgeConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub q_max: f64,
    pub s_lower: f64,
    pub s_upper: f64,
    pub s0: f64,
    pub u_lower: f64,
    pub u_upper: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidConfig {
    pub amplitude: f64,
    /// Angular frequency in rad/s.
    pub omega: Option<f64>,
    /// Angular frequency as a multiple of pi rad/s.
    pub omega_pi: Option<f64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DemandConfig {
    Sinusoids { terms: Vec<SinusoidConfig> },
    Samples { dt: f64, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryScenario {
    pub schema_version: u32,
    pub kind: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub horizon: usize,
    pub dt: f64,
    pub steps: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub iterations: usize,
    #[serde(default)]
    pub dual_step: DualStepConfig,
    #[serde(default)]
    pub warm_start: bool,
    /// Allowed per-step tracking error as a fraction of `max |demand|`.
    #[serde(default = "default_tracking")]
    pub tracking_tolerance: f64,
    pub edges: Vec<[usize; 2]>,
    pub nodes: Vec<NodeConfig>,
    pub demand: DemandConfig,
}

fn default_tracking() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    EdgeAgreement(EdgeScenario),
    Battery(BatteryScenario),
}

fn config_err(origin: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{origin}: {msg}"))
}

/// Parses a scenario document; `origin` names it in error messages.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let header: Header = toml::from_str(text).map_err(|e| config_err(origin, e))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(config_err(
            origin,
            format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", header.schema_version),
        ));
    }
    let sc = match header.kind.as_str() {
        "edge-agreement" => Scenario::EdgeAgreement(toml::from_str(text).map_err(|e| config_err(origin, e))?),
        "battery-mpc" => Scenario::Battery(toml::from_str(text).map_err(|e| config_err(origin, e))?),
        other => {
            return Err(config_err(
                origin,
                format!("unknown kind {other:?} (expected \"edge-agreement\" or \"battery-mpc\")"),
            ))
        }
    };
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e))?;
    parse_scenario(&text, &path.display().to_string())
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("{what}: expected rows of length {cols}")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn vector(v: &[f64], len: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::Config(format!("{what}: expected {len} entries, found {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

impl EdgeScenario {
    /// The problem this file describes, with the CLI overrides applied.
    pub fn build(&self, flags: &RunFlags) -> Result<ProblemSpec> {
        let (m, n) = (self.agents, self.dim);
        if m == 0 || n == 0 {
            return Err(Error::Config("agents and dim must be positive".into()));
        }
        if self.objectives.len() != m || self.boxes.len() != m {
            return Err(Error::Config(format!(
                "{m} agents need {m} objectives and {m} boxes (found {} and {})",
                self.objectives.len(),
                self.boxes.len()
            )));
        }
        let objectives = self
            .objectives
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let what = format!("objective of agent {}", i + 1);
                Ok(match o {
                    ObjectiveConfig::Quadratic { q_mat, q, c } => {
                        let qm = matrix(q_mat, n, &what)?;
                        if qm.nrows() != n {
                            return Err(Error::Config(format!("{what}: q_mat must be {n} x {n}")));
                        }
                        let q = match q {
                            Some(q) => vector(q, n, &what)?,
                            None => DVector::zeros(n),
                        };
                        LocalObjective::Quadratic(
                            Quadratic::new(qm, q, c.unwrap_or(0.0))
                                .map_err(|e| Error::Config(format!("{what}: {e}")))?,
                        )
                    }
                    ObjectiveConfig::ExpSum => LocalObjective::smooth(ExpSum { n }),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sets = self
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let what = format!("box of agent {}", i + 1);
                ConvexSet::boxed(vector(&b.lower, n, &what)?, vector(&b.upper, n, &what)?)
                    .map_err(|e| Error::Config(format!("{what}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.from, e.to)).collect();
        let graph = Graph::from_one_based(m, &pairs).map_err(|e| Error::Config(e.to_string()))?;
        let agreements = self
            .edges
            .iter()
            .map(|e| {
                let what = format!("edge ({}, {})", e.from, e.to);
                let a = matrix(&e.a, n, &what)?;
                let b = vector(&e.b, a.nrows(), &what)?;
                EdgeAgreement::new(e.from - 1, e.to - 1, a, b).map_err(|err| Error::Config(format!("{what}: {err}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let s = &self.solver;
        let rho_edge = s.rho_edge.unwrap_or(s.rho);
        let mut settings = AdmmSettings::new(Penalties::split(s.rho, rho_edge), flags.max_iters.unwrap_or(s.max_iters));
        settings.eps_abs = s.eps_abs;
        settings.eps_rel = s.eps_rel;
        settings.stop_on_tolerance = s.stop_on_tolerance;
        settings.dual_step = if flags.literal_dual_step { DualStepMode::Literal } else { s.dual_step.into() };
        ProblemSpec::new(graph, agreements, objectives, sets, settings).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn initial_values(&self, spec: &ProblemSpec) -> Result<Vec<AgentInit>> {
        match self.init {
            InitConfig::ProjectedZero => default_init(spec),
            InitConfig::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                spec.sets
                    .iter()
                    .map(|s| {
                        let b = s
                            .bounding_box()
                            .filter(|b| b.lower().iter().chain(b.upper().iter()).all(|v| v.is_finite()))
                            .ok_or_else(|| Error::Config("uniform init needs finite boxes".into()))?;
                        let v = DVector::from_fn(spec.dim(), |k, _| {
                            let (lo, hi) = (b.lower()[k], b.upper()[k]);
                            if hi > lo {
                                rng.gen_range(lo..hi)
                            } else {
                                lo
                            }
                        });
                        Ok(AgentInit::primal(v))
                    })
                    .collect()
            }
        }
    }
}

impl BatteryScenario {
    pub fn build(&self, flags: &RunFlags) -> Result<(BatteryNetwork, DemandProfile)> {
        let m = self.nodes.len();
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let graph = Graph::from_one_based(m, &edges).map_err(|e| Error::Config(e.to_string()))?;
        let nodes = self
            .nodes
            .iter()
            .map(|n| BatteryNode {
                q_max: n.q_max,
                s_lower: n.s_lower,
                s_upper: n.s_upper,
                s0: n.s0,
                u_lower: n.u_lower,
                u_upper: n.u_upper,
                eta_c: n.eta_c,
                eta_d: n.eta_d,
                r: n.r,
            })
            .collect();
        let params = MpcParams {
            horizon: self.horizon,
            dt: self.dt,
            rho1: self.rho1,
            rho2: self.rho2,
            max_iters: flags.max_iters.unwrap_or(self.iterations),
            dual_step: if flags.literal_dual_step { DualStepMode::Literal } else { self.dual_step.into() },
            warm_start: self.warm_start,
            parallel: true,
        };
        let network = BatteryNetwork::new(nodes, graph, params).map_err(|e| Error::Config(e.to_string()))?;
        let demand = match &self.demand {
            DemandConfig::Sinusoids { terms } => DemandProfile::Sinusoids(
                terms
                    .iter()
                    .map(|t| {
                        let omega = match (t.omega, t.omega_pi) {
                            (Some(w), None) => w,
                            (None, Some(w)) => w * std::f64::consts::PI,
                            _ => return Err(Error::Config("each sinusoid needs exactly one of omega, omega_pi".into())),
                        };
                        Ok(Sinusoid { amplitude: t.amplitude, omega, phase: t.phase })
                    })
                    .collect::<Result<_>>()?,
            ),
            DemandConfig::Samples { dt, values } => {
                if !(*dt > 0.0) || values.is_empty() {
                    return Err(Error::Config("sampled demand needs dt > 0 and at least one value".into()));
                }
                DemandProfile::Samples { dt: *dt, values: values.clone() }
            }
        };
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.tracking_tolerance >= 0.0) {
            return Err(Error::Config("tracking_tolerance must be non-negative".into()));
        }
        Ok((network, demand))
    }
}

/// Command-line overrides shared by `run` and `validate`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFlags {
    pub out: PathBuf,
    pub literal_dual_step: bool,
    pub max_iters: Option<usize>,
    pub quiet: bool,
    /// Fill the `millis` trace column.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeSummary {
    pub name: String,
    pub kind: String,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub w1: f64,
    /// `||x - x*||^2` against the centralized solution, when available.
    pub w2: Option<f64>,
    pub objective: f64,
    pub oracle_objective: Option<f64>,
    pub max_coordinate_gap: Option<f64>,
    pub dual_step: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatterySummary {
    pub name: String,
    pub kind: String,
    pub steps: usize,
    pub max_tracking_error: f64,
    pub max_abs_demand: f64,
    pub tracking_ok: bool,
    pub soc_within_bounds: bool,
    pub controls_within_bounds: bool,
    pub final_soc: Vec<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioOutcome {
    Edge(EdgeSummary),
    Battery(BatterySummary),
}

impl ScenarioOutcome {
    pub fn succeeded(&self) -> bool {
        match self {
            ScenarioOutcome::Edge(s) => s.converged,
            ScenarioOutcome::Battery(s) => s.tracking_ok && s.soc_within_bounds && s.controls_within_bounds,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.succeeded() {
            EXIT_CONVERGED
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

/// Exit code for an error: configuration and feasibility problems give 1,
/// solver breakdowns give 2.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NotConverged { .. } | Error::NonFiniteIterate { .. } | Error::SingularSystem => EXIT_NOT_CONVERGED,
        Error::MpcStep { source, .. } => exit_code_for(source),
        _ => EXIT_CONFIG,
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_summary<T: Serialize>(dir: &Path, summary: &T) -> Result<()> {
    let text = toml::to_string(summary).map_err(|e| Error::Config(format!("summary: {e}")))?;
    fs::write(dir.join("summary.toml"), text).map_err(|e| Error::Config(format!("cannot write summary: {e}")))
}

/// Checks a scenario without running it.
pub fn validate(path: &Path, flags: &RunFlags) -> Result<Scenario> {
    let sc = load_scenario(path)?;
    match &sc {
        Scenario::EdgeAgreement(e) => {
            e.build(flags)?;
        }
        Scenario::Battery(b) => {
            b.build(flags)?;
        }
    }
    Ok(sc)
}

/// Loads, runs and writes the outputs of a scenario into `flags.out`.
pub fn run_scenario(path: &Path, flags: &RunFlags) -> Result<ScenarioOutcome> {
    run_loaded(&load_scenario(path)?, flags)
}

pub fn run_loaded(sc: &Scenario, flags: &RunFlags) -> Result<ScenarioOutcome> {
    fs::create_dir_all(&flags.out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", flags.out.display())))?;
    match sc {
        Scenario::EdgeAgreement(e) => run_edge(e, flags).map(ScenarioOutcome::Edge),
        Scenario::Battery(b) => run_battery(b, flags).map(ScenarioOutcome::Battery),
    }
}

fn run_edge(sc: &EdgeScenario, flags: &RunFlags) -> Result<EdgeSummary> {
    let start = Instant::now();
    let spec = sc.build(flags)?;
    let n = spec.dim();
    let oracle = match solve_centralized(&spec) {
        Ok(c) => Some(c),
        Err(e @ Error::Infeasible { .. }) => return Err(e),
        Err(e) => {
            if !flags.quiet {
                eprintln!("warning: centralized reference unavailable ({e}); W2 left empty");
            }
            None
        }
    };
    let init = sc.initial_values(&spec)?;
    let reference = oracle.as_ref().map(|c| unstack(&c.x, n));
    let out = run(&spec, RunOptions { init: Some(init), reference: reference.clone() })?;

    out.trace.write_csv(create(&flags.out, "trace.csv")?, flags.timing)?;
    let mut w = csv::Writer::from_writer(create(&flags.out, "solution.csv")?);
    let io = |e: csv::Error| Error::Config(format!("solution.csv: {e}"));
    w.write_record(["agent", "coordinate", "x", "z"]).map_err(io)?;
    for (i, s) in out.states.iter().enumerate() {
        for k in 0..n {
            w.write_record([(i + 1).to_string(), (k + 1).to_string(), fmt_f64(s.x[k]), fmt_f64(s.z[k])])
                .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Config(format!("solution.csv: {e}")))?;
    if let Some(c) = &oracle {
        c.write_csv(create(&flags.out, "certificate.csv")?, n)?;
    }

    let last = out.trace.last().copied();
    let z = stack(&out.z());
    let summary = EdgeSummary {
        name: sc.name.clone(),
        kind: sc.kind.clone(),
        converged: out.converged,
        iterations: out.iterations,
        primal_residual: last.map_or(f64::NAN, |r| r.primal_residual),
        w1: last.map_or(f64::NAN, |r| r.w1),
        w2: last.and_then(|r| r.w2),
        objective: spec.objective(&out.z()),
        oracle_objective: oracle.as_ref().map(|c| c.objective),
        max_coordinate_gap: oracle.as_ref().map(|c| (&z - &c.x).amax()),
        dual_step: format!("{:?}", spec.settings.dual_step).to_lowercase(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_summary(&flags.out, &summary)?;
    if !flags.quiet {
        println!(
            "{}: {} after {} iterations, W1 = {:.3e}, objective = {:.9}",
            if sc.name.is_empty() { "scenario" } else { &sc.name },
            if out.converged { "converged" } else { "not converged" },
            out.iterations,
            summary.w1,
            summary.objective
        );
    }
    Ok(summary)
}

/// Largest violation of the SoC and control boxes over a simulation.
pub fn bound_violations(log: &SimulationLog, network: &BatteryNetwork) -> (f64, f64) {
    let mut soc = 0.0f64;
    let mut ctrl = 0.0f64;
    let mut check_soc = |node: &BatteryNode, s: f64| {
        soc = soc.max(node.s_lower - s).max(s - node.s_upper);
    };
    for r in &log.rows {
        let node = &network.nodes[r.node - 1];
        check_soc(node, r.soc);
        ctrl = ctrl
            .max(-r.u_c)
            .max(r.u_c - node.u_upper)
            .max(r.u_d)
            .max(node.u_lower - r.u_d);
    }
    for (node, &s) in network.nodes.iter().zip(&log.final_soc) {
        check_soc(node, s);
    }
    (soc.max(0.0), ctrl.max(0.0))
}

/// Slack for the bound checks on simulated trajectories.
pub const BOUND_TOLERANCE: f64 = 1e-6;

fn run_battery(sc: &BatteryScenario, flags: &RunFlags) -> Result<BatterySummary> {
    let start = Instant::now();
    let (network, demand) = sc.build(flags)?;
    let quiet = flags.quiet;
    let log = mpc_loop_with(&network, &demand, sc.steps, |k, rows| {
        if !quiet && (k + 1) % 20 == 0 {
            let r = rows[0];
            eprintln!(
                "step {:>4}/{}  t = {:>7.1}  demand = {:>8.2}  delivered = {:>8.2}",
                k + 1,
                sc.steps,
                r.t,
                r.demand,
                r.delivered
            );
        }
    })?;
    log.write_csv(create(&flags.out, "simulation.csv")?)?;
    let (soc_v, ctrl_v) = bound_violations(&log, &network);
    let err = log.max_tracking_error();
    let peak = log.max_abs_demand();
    let summary = BatterySummary {
        name: sc.name.clone(),
        kind: sc.kind.clone(),
        steps: sc.steps,
        max_tracking_error: err,
        max_abs_demand: peak,
        tracking_ok: err <= sc.tracking_tolerance * peak,
        soc_within_bounds: soc_v <= BOUND_TOLERANCE,
        controls_within_bounds: ctrl_v <= BOUND_TOLERANCE,
        final_soc: log.final_soc.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_summary(&flags.out, &summary)?;
    if !quiet {
        println!(
            "{}: {} steps, max tracking error {:.3e} ({:.4}% of peak demand), SoC {} bounds, controls {} bounds",
            if sc.name.is_empty() { "scenario" } else { &sc.name },
            sc.steps,
            err,
            100.0 * err / peak.max(f64::MIN_POSITIVE),
            if summary.soc_within_bounds { "within" } else { "OUTSIDE" },
            if summary.controls_within_bounds { "within" } else { "OUTSIDE" },
        );
    }
    Ok(summary)
}

/// A random feasible instance and the point it was built around.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub spec: ProblemSpec,
    pub target: DVector<f64>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `m` agents of dimension `n`: a random spanning tree plus extra edges with
/// probability 0.4, random full-row-rank `A_ij` with `b_ij = A_ij (x_i - x_j)`
/// for a random target `x`, quadratics `G^T G / n + 0.1 I`, and boxes
/// containing the target with margins in `[0.05, 1]`.
pub fn random_instance(rng: &mut ChaCha8Rng, m: usize, n: usize, settings: AdmmSettings) -> Result<RandomInstance> {
    let mut edges: Vec<(usize, usize)> = (1..m).map(|i| (i, rng.gen_range(0..i))).collect();
    for i in 0..m {
        for j in i + 1..m {
            if !edges.contains(&(j, i)) && rng.gen_bool(0.4) {
                edges.push((i, j));
            }
        }
    }
    let target: Vec<DVector<f64>> = (0..m).map(|_| DVector::from_fn(n, |_, _| normal(rng))).collect();
    let mut agreements = Vec::with_capacity(edges.len());
    for &(i, j) in &edges {
        // redraw the rare ill-conditioned matrix
        let ag = loop {
            let rows = rng.gen_range(1..=n);
            let a = DMatrix::from_fn(rows, n, |_, _| normal(rng));
            let b = &a * (&target[i] - &target[j]);
            if let Ok(ag) = EdgeAgreement::new(i, j, a, b) {
                break ag;
            }
        };
        agreements.push(ag);
    }
    let objectives = (0..m)
        .map(|_| {
            let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
            let mut q = g.transpose() * &g / n as f64;
            for k in 0..n {
                q[(k, k)] += 0.1;
            }
            let lin = DVector::from_fn(n, |_, _| 3.0 * normal(rng));
            Ok(LocalObjective::Quadratic(Quadratic::new(q, lin, 0.0)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let sets = target
        .iter()
        .map(|t| {
            let lo = DVector::from_fn(n, |k, _| t[k] - rng.gen_range(0.05..1.0));
            let hi = DVector::from_fn(n, |k, _| t[k] + rng.gen_range(0.05..1.0));
            ConvexSet::boxed(lo, hi)
        })
        .collect::<Result<Vec<_>>>()?;
    let graph = Graph::new(m, edges)?;
    let spec = ProblemSpec::new(graph, agreements, objectives, sets, settings)?;
    Ok(RandomInstance { spec, target: stack(&target) })
}

/// KKT residual below which the oracle point serves as the saddle point.
pub const CERTIFICATE_KKT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapThresholds {
    /// Bound on `max |z_i - x*_i|`.
    pub coordinate: f64,
    /// Bound on `|f(z) - f*| / (1 + |f*|)`.
    pub objective: f64,
    /// Slack on the bound and descent inequalities.
    pub inequality: f64,
}

impl Default for GapThresholds {
    fn default() -> Self {
        Self { coordinate: 1e-4, objective: 1e-6, inequality: INEQUALITY_SLACK }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub count: usize,
    pub seed: u64,
    pub thresholds: GapThresholds,
    pub rho: f64,
    pub max_iters: usize,
    pub dual_step: DualStepMode,
    /// Centralized-ADMM steps along which the bound and descent inequalities are checked.
    pub trajectory_steps: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            count: 50,
            seed: 0,
            thresholds: GapThresholds::default(),
            rho: 5.0,
            // a small nonzero eigenvalue of L can stretch convergence past a million steps
            max_iters: 2_000_000,
            dual_step: DualStepMode::default(),
            trajectory_steps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub instance: usize,
    pub agents: usize,
    pub dim: usize,
    pub edges: usize,
    pub iterations: usize,
    pub converged: bool,
    pub coordinate_gap: f64,
    pub objective_gap: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub descent: f64,
    pub passed: bool,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub const HEADER: [&'static str; 13] = [
        "instance",
        "agents",
        "dim",
        "edges",
        "iterations",
        "converged",
        "coordinate_gap",
        "objective_gap",
        "lower_bound_violation",
        "upper_bound_violation",
        "descent_violation",
        "passed",
        "error",
    ];

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.passed).count()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Config(format!("suite csv: {e}"));
        w.write_record(Self::HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.instance.to_string(),
                r.agents.to_string(),
                r.dim.to_string(),
                r.edges.to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
                fmt_f64(r.coordinate_gap),
                fmt_f64(r.objective_gap),
                fmt_f64(r.lower_bound),
                fmt_f64(r.upper_bound),
                fmt_f64(r.descent),
                r.passed.to_string(),
                r.error.clone(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(format!("suite csv: {e}")))
    }
}

/// Compares the distributed solution of one instance with the centralized one
/// and checks the bound and descent inequalities along a centralized ADMM trajectory.
pub fn check_instance(index: usize, inst: &RandomInstance, opts: &SuiteOptions) -> SuiteRow {
    let spec = &inst.spec;
    let mut row = SuiteRow {
        instance: index,
        agents: spec.agent_count(),
        dim: spec.dim(),
        edges: spec.graph.edge_count(),
        iterations: 0,
        converged: false,
        coordinate_gap: f64::NAN,
        objective_gap: f64::NAN,
        lower_bound: f64::NAN,
        upper_bound: f64::NAN,
        descent: f64::NAN,
        passed: false,
        error: String::new(),
    };
    let result = (|| -> Result<()> {
        let oracle = solve_centralized(spec)?;
        let out = run(spec, RunOptions::default())?;
        row.iterations = out.iterations;
        row.converged = out.converged;
        let z = out.z();
        row.coordinate_gap = (stack(&z) - &oracle.x).amax();
        row.objective_gap = (spec.objective(&z) - oracle.objective).abs() / (1.0 + oracle.objective.abs());

        let cadmm = CentralizedAdmm::new(spec, opts.rho)?;
        // centralized ADMM itself can need millions of steps when L has a small
        // nonzero eigenvalue, so it only refines an oracle point that fails KKT
        let cert = if oracle.kkt.feasibility <= CERTIFICATE_KKT && oracle.kkt.stationarity <= CERTIFICATE_KKT {
            oracle.clone()
        } else {
            let start = CentralState { x: oracle.x.clone(), z: oracle.z.clone(), y: oracle.y.clone() };
            cadmm.certificate_from(start, 1e-12, 200_000)?
        };
        let hist = cadmm.trajectory(cadmm.initial_state()?, opts.trajectory_steps)?;
        let rep = lyapunov_series(&hist, &cert, &cadmm.problem, opts.rho);
        row.lower_bound = rep.max_lower_bound();
        row.upper_bound = rep.max_upper_bound();
        row.descent = rep.max_descent();
        Ok(())
    })();
    if let Err(e) = result {
        row.error = e.to_string();
    }
    let t = &opts.thresholds;
    row.passed = row.error.is_empty()
        && row.converged
        && row.coordinate_gap < t.coordinate
        && row.objective_gap < t.objective
        && row.lower_bound <= t.inequality
        && row.upper_bound <= t.inequality
        && row.descent <= t.inequality;
    row
}

/// Settings used for suite instances.
pub fn suite_settings(opts: &SuiteOptions) -> AdmmSettings {
    let mut s = AdmmSettings::new(Penalties::single(opts.rho), opts.max_iters);
    s.eps_abs = 1e-10;
    s.eps_rel = 1e-10;
    s.dual_step = opts.dual_step;
    // thread hand-off costs more than a four-agent iteration
    s.parallel = false;
    s
}

/// Smallest nonzero eigenvalue of `L` relative to its largest.
pub fn agreement_spectral_gap(spec: &ProblemSpec) -> Result<f64> {
    let l = stack_operators(&spec.graph, &spec.agreements, spec.dim())?.laplacian();
    let eig = l.symmetric_eigen().eigenvalues;
    let max = eig.amax();
    if max == 0.0 {
        return Ok(1.0);
    }
    let min = eig.iter().copied().filter(|&e| e > RANK_TOLERANCE * max).fold(f64::INFINITY, f64::min);
    Ok(min / max)
}

/// Suite instances redraw below this [`agreement_spectral_gap`]; ADMM needs
/// roughly its inverse in iterations.
pub const MIN_SPECTRAL_GAP: f64 = 1e-5;

/// Instance `k` of a suite; instances are independent of `count`.
pub fn suite_instance(opts: &SuiteOptions, k: usize) -> Result<RandomInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(k as u64);
    let m = rng.gen_range(2..=4);
    let n = rng.gen_range(1..=3);
    for _ in 0..100 {
        let inst = random_instance(&mut rng, m, n, suite_settings(opts))?;
        if agreement_spectral_gap(&inst.spec)? >= MIN_SPECTRAL_GAP {
            return Ok(inst);
        }
    }
    Err(Error::InvalidParameter(format!("no well-conditioned instance drawn for index {k}")))
}

pub fn run_oracle_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    if opts.count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let rows = (0..opts.count)
        .map(|k| match suite_instance(opts, k) {
            Ok(inst) => check_instance(k, &inst, opts),
            Err(e) => SuiteRow {
                instance: k,
                agents: 0,
                dim: 0,
                edges: 0,
                iterations: 0,
                converged: false,
                coordinate_gap: f64::NAN,
                objective_gap: f64::NAN,
                lower_bound: f64::NAN,
                upper_bound: f64::NAN,
                descent: f64::NAN,
                passed: false,
                error: e.to_string(),
            },
        })
        .collect();
    Ok(SuiteReport { rows })
}
