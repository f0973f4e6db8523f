//! The distributed iteration: per-agent x/z/dual updates with a synchronous
//! neighbor exchange, stopping rule and trace recording.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{edge_residual_w1, EdgeAgreement, Graph};
use crate::sets::ConvexSet;
use crate::subproblem::{
    solve_x_update, LocalObjective, NeighborTerm, QuadraticSystem, SubproblemData,
};

pub const DEFAULT_EPS_ABS: f64 = 1e-8;
pub const DEFAULT_EPS_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties {
    /// Weight on the `x - z` coupling (`rho`, or `rho1` in the two-penalty form).
    pub rho_z: f64,
    /// Weight on the edge terms (`rho`, or `rho2`).
    pub rho_edge: f64,
}

impl Penalties {
    pub fn single(rho: f64) -> Self {
        Self { rho_z: rho, rho_edge: rho }
    }

    pub fn split(rho1: f64, rho2: f64) -> Self {
        Self { rho_z: rho1, rho_edge: rho2 }
    }
}

/// Step sizes of the two dual ascent updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualStepMode {
    /// `lambda` step `rho_z`, edge multiplier step 1.
    #[default]
    Mixed,
    /// Both steps equal their penalty (`rho_z`, `rho_edge`).
    Penalty,
    /// Unit steps on both.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSteps {
    pub lambda: f64,
    pub mu: f64,
}

impl DualStepMode {
    pub fn steps(self, p: Penalties) -> DualSteps {
        match self {
            DualStepMode::Mixed => DualSteps { lambda: p.rho_z, mu: 1.0 },
            DualStepMode::Penalty => DualSteps { lambda: p.rho_z, mu: p.rho_edge },
            DualStepMode::Literal => DualSteps { lambda: 1.0, mu: 1.0 },
        }
    }
}

/// Which multiplier enters agent i's x-update through each edge term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MultiplierCoupling {
    /// Per-edge multipliers `nu_ij` with `mu_i = sum_j nu_ij`.
    #[default]
    EdgeWise,
    /// The aggregate `mu_i` on every edge term, i.e. `(sum_j P_ij) mu_i`.
    /// Its fixed point is biased whenever agents have different degrees.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmSettings {
    pub penalties: Penalties,
    pub max_iters: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// When false, always run `max_iters` iterations.
    pub stop_on_tolerance: bool,
    /// Also require the change in `z` between iterations to be below the primal threshold.
    pub check_drift: bool,
    pub dual_step: DualStepMode,
    pub coupling: MultiplierCoupling,
    pub parallel: bool,
}

impl AdmmSettings {
    pub fn new(penalties: Penalties, max_iters: usize) -> Self {
        Self {
            penalties,
            max_iters,
            eps_abs: DEFAULT_EPS_ABS,
            eps_rel: DEFAULT_EPS_REL,
            stop_on_tolerance: true,
            check_drift: true,
            dual_step: DualStepMode::default(),
            coupling: MultiplierCoupling::default(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub graph: Graph,
    /// One agreement per graph edge, in edge order and orientation.
    pub agreements: Vec<EdgeAgreement>,
    pub objectives: Vec<LocalObjective>,
    pub sets: Vec<ConvexSet>,
    pub settings: AdmmSettings,
}

impl ProblemSpec {
    pub fn new(
        graph: Graph,
        agreements: Vec<EdgeAgreement>,
        objectives: Vec<LocalObjective>,
        sets: Vec<ConvexSet>,
        settings: AdmmSettings,
    ) -> Result<Self> {
        let m = graph.agent_count();
        if m == 0 {
            return Err(Error::InvalidGraph("no agents".into()));
        }
        if objectives.len() != m || sets.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} agents, {} objectives, {} sets",
                objectives.len(),
                sets.len()
            )));
        }
        if agreements.len() != graph.edge_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} agreements for {} edges",
                agreements.len(),
                graph.edge_count()
            )));
        }
        let n = objectives[0].dim();
        for (l, (ag, &e)) in agreements.iter().zip(graph.edges()).enumerate() {
            if ag.edge() != e || ag.dim() != n {
                return Err(Error::DimensionMismatch(format!(
                    "agreement {l} does not match edge {e:?} with dimension {n}"
                )));
            }
        }
        if objectives.iter().any(|f| f.dim() != n) || sets.iter().any(|s| s.dim() != n) {
            return Err(Error::DimensionMismatch("agent dimensions disagree".into()));
        }
        let p = settings.penalties;
        if !(p.rho_z > 0.0 && p.rho_edge > 0.0) {
            return Err(Error::InvalidParameter("penalties must be positive".into()));
        }
        if !(settings.eps_abs >= 0.0 && settings.eps_rel >= 0.0) {
            return Err(Error::InvalidParameter("tolerances must be nonnegative".into()));
        }
        Ok(Self { graph, agreements, objectives, sets, settings })
    }

    pub fn agent_count(&self) -> usize {
        self.graph.agent_count()
    }

    pub fn dim(&self) -> usize {
        self.objectives[0].dim()
    }

    /// `sum of d_ij`.
    pub fn constraint_rows(&self) -> usize {
        self.agreements.iter().map(|a| a.rows()).sum()
    }

    pub fn objective(&self, x: &[DVector<f64>]) -> f64 {
        self.objectives.iter().zip(x).map(|(f, xi)| f.value(xi)).sum()
    }
}

/// Agent i's view of one incident edge.
#[derive(Debug, Clone)]
struct Link {
    peer: usize,
    edge: usize,
    b_bar: DVector<f64>,
}

/// One agent's iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
    /// One multiplier per neighbor, in [`Graph::neighbors`] order.
    pub edge_multipliers: Vec<DVector<f64>>,
    /// Last received `x_j`, in [`Graph::neighbors`] order.
    pub neighbor_x: Vec<DVector<f64>>,
}

/// Initial values for one agent. Empty `edge_multipliers` means zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentInit {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub edge_multipliers: Vec<DVector<f64>>,
}

impl AgentInit {
    pub fn primal(x: DVector<f64>) -> Self {
        let n = x.len();
        Self { z: x.clone(), x, lambda: DVector::zeros(n), edge_multipliers: vec![] }
    }
}

/// `x = z = proj(0)`, zero duals.
pub fn default_init(spec: &ProblemSpec) -> Result<Vec<AgentInit>> {
    let n = spec.dim();
    spec.sets
        .iter()
        .map(|s| Ok(AgentInit::primal(s.project(&DVector::zeros(n))?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// `||x_k - z_k||` over all agents.
    pub primal_residual: f64,
    pub w1: f64,
    /// `sum_i f_i(x_i,k)`.
    pub objective: f64,
    /// `||x_k - x*||^2` when a reference solution was supplied.
    pub w2: Option<f64>,
    pub lyapunov: Option<f64>,
    pub millis: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<TraceRecord>,
}

impl IterationTrace {
    pub const HEADER: [&'static str; 7] =
        ["k", "primal_residual", "W1", "objective", "W2", "V", "millis"];

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// CSV with a fixed header. Optional columns and, unless `timing`, the
    /// `millis` column are written empty so identical runs give identical bytes.
    pub fn write_csv<W: Write>(&self, out: W, timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv output: {e}"));
        w.write_record(Self::HEADER).map_err(io)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                fmt_f64(r.primal_residual),
                fmt_f64(r.w1),
                fmt_f64(r.objective),
                opt(r.w2),
                opt(r.lyapunov),
                if timing { format!("{:.3}", r.millis) } else { String::new() },
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidParameter(format!("csv output: {e}")))
    }

    /// True when every window of `window` records after `from` ends no higher than it starts.
    pub fn w1_monotone_windows(&self, from: usize, window: usize) -> bool {
        let w1: Vec<f64> = self.records.iter().filter(|r| r.k >= from).map(|r| r.w1).collect();
        w1.windows(window + 1).all(|w| w[window] <= w[0])
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub states: Vec<AgentState>,
    pub trace: IterationTrace,
    pub converged: bool,
    pub iterations: usize,
}

impl RunOutput {
    /// The feasible solution: every agent's `z`.
    pub fn z(&self) -> Vec<DVector<f64>> {
        self.states.iter().map(|s| s.z.clone()).collect()
    }

    pub fn x(&self) -> Vec<DVector<f64>> {
        self.states.iter().map(|s| s.x.clone()).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub init: Option<Vec<AgentInit>>,
    /// Stacked per-agent optimum used for the `W2` column.
    pub reference: Option<Vec<DVector<f64>>>,
}

/// `lambda + s_lambda (x - z)` and `mu + s_mu sum_j P_ij (x - x_j - b_bar_ij)`.
pub fn dual_updates(
    lambda: &DVector<f64>,
    mu: &DVector<f64>,
    x_new: &DVector<f64>,
    z_new: &DVector<f64>,
    neighbors: &[(&EdgeAgreement, &DVector<f64>)],
    steps: DualSteps,
) -> (DVector<f64>, DVector<f64>) {
    let lam = lambda + steps.lambda * (x_new - z_new);
    let mut m = mu.clone();
    for (ag, xj) in neighbors {
        m += steps.mu * (ag.p() * (x_new - *xj - ag.b_bar()));
    }
    (lam, m)
}

/// Residual-based stopping rule. With `z_prev`, the change in `z` over the last
/// iteration must also be below the primal threshold.
pub fn stop_check(
    x: &[DVector<f64>],
    z: &[DVector<f64>],
    z_prev: Option<&[DVector<f64>]>,
    w1: f64,
    spec: &ProblemSpec,
) -> bool {
    let s = &spec.settings;
    let mn = x.iter().map(|v| v.len()).sum::<usize>() as f64;
    let xn = x.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    let zn = z.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    let primal = x.iter().zip(z).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
    let d = spec.constraint_rows() as f64;
    let tol_primal = mn.sqrt() * s.eps_abs + s.eps_rel * xn.max(zn);
    let tol_edge = d.sqrt() * s.eps_abs + s.eps_rel * xn;
    let drift = z_prev.map_or(0.0, |zp| {
        z.iter().zip(zp).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt()
    });
    // huge finite iterates overflow the norms; inf <= inf must not count as converged
    if !(primal.is_finite() && w1.is_finite() && drift.is_finite()) {
        return false;
    }
    // written so that infinite tolerances always pass
    !(primal > tol_primal) && !(w1.sqrt() > tol_edge) && !(drift > tol_primal)
}

enum LocalSolver {
    Quadratic(QuadraticSystem),
    Smooth,
}

/// Runs the distributed iteration until the stopping rule or the iteration cap.
pub fn run(spec: &ProblemSpec, options: RunOptions) -> Result<RunOutput> {
    let m = spec.agent_count();
    let n = spec.dim();
    let settings = spec.settings;
    let pen = settings.penalties;
    let steps = settings.dual_step.steps(pen);

    let links: Vec<Vec<Link>> = (0..m)
        .map(|i| {
            spec.graph
                .neighbors(i)
                .iter()
                .map(|&j| {
                    let edge = spec
                        .graph
                        .edges()
                        .iter()
                        .position(|&e| e == (i, j) || e == (j, i))
                        .expect("neighbor has an edge");
                    let ag = &spec.agreements[edge];
                    let b_bar = if ag.edge().0 == i { ag.b_bar().clone() } else { -ag.b_bar() };
                    Link { peer: j, edge, b_bar }
                })
                .collect()
        })
        .collect();

    let solvers: Vec<LocalSolver> = (0..m)
        .map(|i| match &spec.objectives[i] {
            LocalObjective::Quadratic(f) => {
                let ps: Vec<_> = links[i].iter().map(|l| spec.agreements[l.edge].p()).collect();
                Ok(LocalSolver::Quadratic(QuadraticSystem::new(f, &ps, pen.rho_z, pen.rho_edge)?))
            }
            LocalObjective::Smooth(_) => Ok(LocalSolver::Smooth),
        })
        .collect::<Result<_>>()?;

    let init = match options.init {
        Some(init) => init,
        None => default_init(spec)?,
    };
    if init.len() != m {
        return Err(Error::DimensionMismatch(format!("{} initial values for {m} agents", init.len())));
    }
    let mut states: Vec<AgentState> = init
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let deg = links[i].len();
            let edge_multipliers =
                if a.edge_multipliers.is_empty() { vec![DVector::zeros(n); deg] } else { a.edge_multipliers };
            if a.x.len() != n || a.z.len() != n || a.lambda.len() != n || edge_multipliers.len() != deg {
                return Err(Error::DimensionMismatch(format!("initial values of agent {i}")));
            }
            let mu = edge_multipliers.iter().fold(DVector::zeros(n), |acc, v| acc + v);
            Ok(AgentState {
                x: a.x,
                z: a.z,
                lambda: a.lambda,
                mu,
                edge_multipliers,
                neighbor_x: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;
    for (i, st) in states.iter().enumerate() {
        let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !(finite(&st.x) && finite(&st.z) && finite(&st.lambda)) {
            return Err(Error::NonFiniteIterate { iteration: 0, agent: i });
        }
    }
    exchange(&mut states, &links);
    let mut last_z: Vec<DVector<f64>> = states.iter().map(|s| s.z.clone()).collect();

    let start = Instant::now();
    let mut trace = IterationTrace::default();
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=settings.max_iters {
        // x, z, lambda: each agent reads only its own state and its neighbor cache
        let update = |i: usize, st: &mut AgentState| -> Result<()> {
            let multipliers: Vec<&DVector<f64>> = match settings.coupling {
                MultiplierCoupling::EdgeWise => st.edge_multipliers.iter().collect(),
                MultiplierCoupling::Literal => vec![&st.mu; links[i].len()],
            };
            let neighbors = links[i]
                .iter()
                .zip(&st.neighbor_x)
                .zip(multipliers)
                .map(|((l, xj), mult)| NeighborTerm {
                    p: spec.agreements[l.edge].p(),
                    b_bar: &l.b_bar,
                    x_j: xj,
                    multiplier: mult,
                })
                .collect();
            let data = SubproblemData {
                objective: &spec.objectives[i],
                z: &st.z,
                lambda: &st.lambda,
                neighbors,
                rho_z: pen.rho_z,
                rho_edge: pen.rho_edge,
            };
            let x = match &solvers[i] {
                LocalSolver::Quadratic(sys) => sys.solve(&data),
                LocalSolver::Smooth => solve_x_update(&data, Some(&st.x))?,
            };
            let z = spec.sets[i].project(&(&x + &st.lambda / pen.rho_z))?;
            st.lambda += steps.lambda * (&x - &z);
            st.x = x;
            st.z = z;
            Ok(())
        };
        if settings.parallel {
            states.par_iter_mut().enumerate().try_for_each(|(i, st)| update(i, st))?;
        } else {
            states.iter_mut().enumerate().try_for_each(|(i, st)| update(i, st))?;
        }

        exchange(&mut states, &links);

        let edge_update = |i: usize, st: &mut AgentState| {
            for (slot, l) in links[i].iter().enumerate() {
                let p = spec.agreements[l.edge].p();
                let r = p * (&st.x - &st.neighbor_x[slot] - &l.b_bar);
                st.edge_multipliers[slot] += steps.mu * &r;
                st.mu += steps.mu * r;
            }
        };
        if settings.parallel {
            states.par_iter_mut().enumerate().for_each(|(i, st)| edge_update(i, st));
        } else {
            states.iter_mut().enumerate().for_each(|(i, st)| edge_update(i, st));
        }

        for (i, st) in states.iter().enumerate() {
            let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
            if !(finite(&st.x) && finite(&st.z) && finite(&st.lambda) && finite(&st.mu)) {
                return Err(Error::NonFiniteIterate { iteration: k, agent: i });
            }
        }

        let x: Vec<DVector<f64>> = states.iter().map(|s| s.x.clone()).collect();
        let z: Vec<DVector<f64>> = states.iter().map(|s| s.z.clone()).collect();
        let z_prev = std::mem::replace(&mut last_z, z.clone());
        let w1 = edge_residual_w1(&x, &spec.agreements);
        let primal = x.iter().zip(&z).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        let w2 = options
            .reference
            .as_ref()
            .map(|r| x.iter().zip(r).map(|(a, b)| (a - b).norm_squared()).sum::<f64>());
        trace.records.push(TraceRecord {
            k,
            primal_residual: primal,
            w1,
            objective: spec.objective(&x),
            w2,
            lyapunov: None,
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        iterations = k;
        let drift = settings.check_drift.then_some(z_prev.as_slice());
        if settings.stop_on_tolerance && stop_check(&x, &z, drift, w1, spec) {
            converged = true;
            break;
        }
    }

    Ok(RunOutput { states, trace, converged, iterations })
}

/// Barrier step: every agent's cache receives the neighbors' current `x`.
fn exchange(states: &mut [AgentState], links: &[Vec<Link>]) {
    let xs: Vec<DVector<f64>> = states.iter().map(|s| s.x.clone()).collect();
    for (st, ls) in states.iter_mut().zip(links) {
        st.neighbor_x = ls.iter().map(|l| xs[l.peer].clone()).collect();
    }
}
