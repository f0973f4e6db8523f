//! Distributed MPC for a network of lithium-ion battery storage nodes that
//! jointly meet a power demand.
//!
//! Node i's decision vector is `xi_i = [x; u]` with `x` the predicted SoC at
//! steps `1..=T` and `u` holding, for each step `l`, node i's copy of every
//! node's control pair `(u_c, u_d)`: node j's pair for step `l` sits at offset
//! `T + 2m l + 2j`. Charging is `u_c >= 0`, discharging `u_d <= 0`, and the
//! network delivers `-sum_j (u_c + u_d)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::admm::{
    fmt_f64, run, AdmmSettings, AgentInit, AgentState, DualStepMode, Penalties, ProblemSpec,
    RunOptions,
};
use crate::error::{Error, Result};
use crate::graph::{EdgeAgreement, Graph};
use crate::sets::{ConvexSet, SliceMethod};
use crate::subproblem::{LocalObjective, Quadratic};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryNode {
    /// Capacity in kWh.
    pub q_max: f64,
    /// SoC bounds and initial SoC, in percent.
    pub s_lower: f64,
    pub s_upper: f64,
    pub s0: f64,
    /// Power bounds in kW, `u_lower < 0 < u_upper`.
    pub u_lower: f64,
    pub u_upper: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    /// Control cost weight.
    pub r: f64,
}

impl BatteryNode {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.q_max > 0.0) {
            return bad("q_max must be positive");
        }
        if !(self.s_lower < self.s_upper) {
            return bad("s_lower must be below s_upper");
        }
        if !(self.u_lower < 0.0 && 0.0 < self.u_upper) {
            return bad("need u_lower < 0 < u_upper");
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0 && self.eta_d >= 1.0 && self.eta_d.is_finite()) {
            return bad("need 0 < eta_c <= 1 <= eta_d");
        }
        if !(self.s_lower <= self.s0 && self.s0 <= self.s_upper) {
            return bad("s0 outside the SoC bounds");
        }
        if !(self.r > 0.0) {
            return bad("cost weight r must be positive");
        }
        Ok(())
    }

    /// `dt / (3600 q_max)`.
    pub fn alpha(&self, dt: f64) -> f64 {
        dt / (3600.0 * self.q_max)
    }

    /// Next SoC under control `(u_c, u_d)` held for one step.
    pub fn advance(&self, soc: f64, u_c: f64, u_d: f64, dt: f64) -> f64 {
        soc + self.alpha(dt) * (self.eta_c * u_c + self.eta_d * u_d)
    }
}

/// `amplitude * sin(omega t + phase)`, `omega` in rad/s, `phase` in rad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandProfile {
    Sinusoids(Vec<Sinusoid>),
    /// Zero-order hold of `values[k]` on `[k dt, (k+1) dt)`; the last value is held afterwards.
    Samples { dt: f64, values: Vec<f64> },
}

impl DemandProfile {
    /// `300 sin(0.005 pi t) + 250 sin(0.003 pi t + 20)`.
    pub fn reference() -> Self {
        DemandProfile::Sinusoids(vec![
            Sinusoid { amplitude: 300.0, omega: 0.005 * PI, phase: 0.0 },
            Sinusoid { amplitude: 250.0, omega: 0.003 * PI, phase: 20.0 },
        ])
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            DemandProfile::Sinusoids(terms) => {
                terms.iter().map(|s| s.amplitude * (s.omega * t + s.phase).sin()).sum()
            }
            DemandProfile::Samples { dt, values } => {
                if values.is_empty() {
                    return 0.0;
                }
                let k = (t / dt).floor().max(0.0) as usize;
                values[k.min(values.len() - 1)]
            }
        }
    }

    /// `[P(t), P(t + dt), ..., P(t + (T-1) dt)]`.
    pub fn window(&self, t: f64, dt: f64, horizon: usize) -> DVector<f64> {
        DVector::from_fn(horizon, |l, _| self.at(t + l as f64 * dt))
    }
}

/// Index arithmetic for the stacked decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub m: usize,
    pub horizon: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        (2 * self.m + 1) * self.horizon
    }

    pub fn block(&self) -> usize {
        2 * self.m
    }

    /// Offset of node j's `(u_c, u_d)` at step `l`.
    pub fn control(&self, j: usize, l: usize) -> usize {
        self.horizon + self.block() * l + 2 * j
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcParams {
    pub horizon: usize,
    /// Sampling period in seconds.
    pub dt: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// Fixed ADMM budget per MPC step.
    pub max_iters: usize,
    pub dual_step: DualStepMode,
    pub warm_start: bool,
    pub parallel: bool,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 5.0,
            rho1: 12.0,
            rho2: 30.0,
            max_iters: 150,
            dual_step: DualStepMode::default(),
            warm_start: false,
            parallel: true,
        }
    }
}

/// Nodes, communication graph and the time-invariant edge data.
#[derive(Debug, Clone)]
pub struct BatteryNetwork {
    pub nodes: Vec<BatteryNode>,
    pub graph: Graph,
    pub params: MpcParams,
    agreements: Vec<EdgeAgreement>,
}

impl BatteryNetwork {
    pub fn new(nodes: Vec<BatteryNode>, graph: Graph, params: MpcParams) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != graph.agent_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} nodes for a graph of {} agents",
                nodes.len(),
                graph.agent_count()
            )));
        }
        for (i, n) in nodes.iter().enumerate() {
            n.validate().map_err(|e| Error::InvalidParameter(format!("node {}: {e}", i + 1)))?;
        }
        if params.horizon == 0 || !(params.dt > 0.0) || !(params.rho1 > 0.0 && params.rho2 > 0.0) {
            return Err(Error::InvalidParameter("horizon, dt and penalties must be positive".into()));
        }
        let layout = Layout { m: nodes.len(), horizon: params.horizon };
        let agreements = graph
            .edges()
            .iter()
            .map(|&(i, j)| {
                let (k, d) = (layout.block() * layout.horizon, layout.dim());
                let mut a = DMatrix::zeros(k, d);
                a.view_mut((0, layout.horizon), (k, k)).fill_with_identity();
                EdgeAgreement::new(i, j, a, DVector::zeros(k))
            })
            .collect::<Result<_>>()?;
        Ok(Self { nodes, graph, params, agreements })
    }

    pub fn layout(&self) -> Layout {
        Layout { m: self.nodes.len(), horizon: self.params.horizon }
    }

    pub fn initial_soc(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.s0).collect()
    }

    /// Sum of discharge limits, the largest demand the network can serve.
    pub fn max_discharge(&self) -> f64 {
        -self.nodes.iter().map(|n| n.u_lower).sum::<f64>()
    }
}

/// `[[A_i, B_i], [0, E]]` and `[C_i; P]` for node i.
pub fn constraint_system(
    network: &BatteryNetwork,
    i: usize,
    s_current: f64,
    demand: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let lay = network.layout();
    let t = lay.horizon;
    let node = &network.nodes[i];
    let alpha = node.alpha(network.params.dt);
    let mut a = DMatrix::zeros(2 * t, lay.dim());
    let mut rhs = DVector::zeros(2 * t);
    for l in 0..t {
        a[(l, l)] = 1.0;
        if l > 0 {
            a[(l, l - 1)] = -1.0;
        }
        let c = lay.control(i, l);
        a[(l, c)] = -alpha * node.eta_c;
        a[(l, c + 1)] = -alpha * node.eta_d;
        for k in 0..lay.block() {
            a[(t + l, t + lay.block() * l + k)] = -1.0;
        }
        rhs[t + l] = demand[l];
    }
    rhs[0] = s_current;
    (a, rhs)
}

/// `diag(0_T, I_T (x) diag(r_1, r_1, ..., r_m, r_m))`.
pub fn cost_matrix(network: &BatteryNetwork) -> DMatrix<f64> {
    let lay = network.layout();
    let mut r = DMatrix::zeros(lay.dim(), lay.dim());
    for l in 0..lay.horizon {
        for (j, node) in network.nodes.iter().enumerate() {
            let c = lay.control(j, l);
            r[(c, c)] = node.r;
            r[(c + 1, c + 1)] = node.r;
        }
    }
    r
}

/// SoC and control box shared by every node's decision vector.
pub fn decision_box(network: &BatteryNetwork, i: usize) -> Result<ConvexSet> {
    let lay = network.layout();
    let mut lo = DVector::zeros(lay.dim());
    let mut hi = DVector::zeros(lay.dim());
    let own = &network.nodes[i];
    for l in 0..lay.horizon {
        lo[l] = own.s_lower;
        hi[l] = own.s_upper;
        for (j, node) in network.nodes.iter().enumerate() {
            let c = lay.control(j, l);
            hi[c] = node.u_upper;
            lo[c + 1] = node.u_lower;
        }
    }
    ConvexSet::boxed(lo, hi)
}

#[derive(Debug, Clone)]
pub struct MpcInstance {
    pub spec: ProblemSpec,
    pub demand: DVector<f64>,
    pub s_current: Vec<f64>,
    pub layout: Layout,
}

pub fn build_mpc_instance(
    network: &BatteryNetwork,
    s_current: &[f64],
    demand: &DemandProfile,
    t_now: f64,
) -> Result<MpcInstance> {
    let lay = network.layout();
    if s_current.len() != lay.m {
        return Err(Error::DimensionMismatch(format!("{} SoC values for {} nodes", s_current.len(), lay.m)));
    }
    for (i, (&s, node)) in s_current.iter().zip(&network.nodes).enumerate() {
        if !(node.s_lower - 1e-9 <= s && s <= node.s_upper + 1e-9) {
            return Err(Error::InvalidParameter(format!("SoC {s} of node {} is outside its bounds", i + 1)));
        }
    }
    let p = demand.window(t_now, network.params.dt, lay.horizon);
    let r = cost_matrix(network);
    let objective = LocalObjective::Quadratic(Quadratic::new(r, DVector::zeros(lay.dim()), 0.0)?);
    let sets = (0..lay.m)
        .map(|i| {
            let (a, b) = constraint_system(network, i, s_current[i], &p);
            ConvexSet::affine_slice_with(decision_box(network, i)?, a, b, SliceMethod::InteriorPoint)
                .map_err(|e| match e {
                    Error::EmptySlice { residual } => Error::InfeasibleDemand { node: i, residual },
                    other => other,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut settings = AdmmSettings::new(Penalties::split(network.params.rho1, network.params.rho2), network.params.max_iters);
    settings.stop_on_tolerance = false;
    settings.dual_step = network.params.dual_step;
    settings.parallel = network.params.parallel;
    let spec = ProblemSpec::new(
        network.graph.clone(),
        network.agreements.clone(),
        vec![objective; lay.m],
        sets,
        settings,
    )?;
    Ok(MpcInstance { spec, demand: p, s_current: s_current.to_vec(), layout: lay })
}

/// Node i alone covers the demand through its own control copy; every other
/// copy is zero and the SoC is forward-propagated with clamping.
pub fn cold_start(network: &BatteryNetwork, i: usize, s_current: f64, demand: &DVector<f64>) -> AgentInit {
    let lay = network.layout();
    let node = &network.nodes[i];
    let mut xi = DVector::zeros(lay.dim());
    let mut soc = s_current;
    for l in 0..lay.horizon {
        let p = demand[l];
        let (u_c, u_d) = if p >= 0.0 { (0.0, (-p).max(node.u_lower)) } else { ((-p).min(node.u_upper), 0.0) };
        let c = lay.control(i, l);
        xi[c] = u_c;
        xi[c + 1] = u_d;
        soc = node.advance(soc, u_c, u_d, network.params.dt).clamp(node.s_lower, node.s_upper);
        xi[l] = soc;
    }
    AgentInit::primal(xi)
}

/// Moves every horizon block one step forward and repeats the last one.
pub fn shift_horizon(v: &DVector<f64>, lay: Layout) -> DVector<f64> {
    let t = lay.horizon;
    let b = lay.block();
    let mut out = v.clone();
    for l in 0..t {
        let from = (l + 1).min(t - 1);
        out[l] = v[from];
        out.rows_mut(t + b * l, b).copy_from(&v.rows(t + b * from, b));
    }
    out
}

/// Initial values from the previous step's final state, shifted one step.
pub fn warm_start(previous: &AgentState, lay: Layout) -> AgentInit {
    AgentInit {
        x: shift_horizon(&previous.x, lay),
        z: shift_horizon(&previous.z, lay),
        lambda: shift_horizon(&previous.lambda, lay),
        edge_multipliers: previous.edge_multipliers.iter().map(|v| shift_horizon(v, lay)).collect(),
    }
}

/// Node i's own `(u_c, u_d)` for every horizon step.
pub fn parse_own_controls(z: &DVector<f64>, i: usize, m: usize, horizon: usize) -> Result<Vec<(f64, f64)>> {
    let lay = Layout { m, horizon };
    if z.len() != lay.dim() || i >= m {
        return Err(Error::DimensionMismatch(format!(
            "decision vector of length {} for node {i} of {m} with horizon {horizon}",
            z.len()
        )));
    }
    Ok((0..horizon).map(|l| (z[lay.control(i, l)], z[lay.control(i, l) + 1])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    /// 1-based node id.
    pub node: usize,
    /// SoC at the start of the step.
    pub soc: f64,
    pub u_c: f64,
    pub u_d: f64,
    /// Network total `-sum (u_c + u_d)` over the step.
    pub delivered: f64,
    pub demand: f64,
    /// Edge residual `W1` after the step's ADMM run.
    pub step_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationLog {
    pub rows: Vec<LogRow>,
    /// SoC after the last step.
    pub final_soc: Vec<f64>,
}

impl SimulationLog {
    pub const HEADER: [&'static str; 8] =
        ["t", "node", "soc", "u_c", "u_d", "delivered_power", "demand", "step_residual"];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv output: {e}"));
        w.write_record(Self::HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                fmt_f64(r.t),
                r.node.to_string(),
                fmt_f64(r.soc),
                fmt_f64(r.u_c),
                fmt_f64(r.u_d),
                fmt_f64(r.delivered),
                fmt_f64(r.demand),
                fmt_f64(r.step_residual),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidParameter(format!("csv output: {e}")))
    }

    /// Largest `|delivered - demand|` over all steps.
    pub fn max_tracking_error(&self) -> f64 {
        self.rows.iter().map(|r| (r.delivered - r.demand).abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_demand(&self) -> f64 {
        self.rows.iter().map(|r| r.demand.abs()).fold(0.0, f64::max)
    }
}

/// Receding-horizon loop over `steps` plant steps starting at `t = 0`.
pub fn mpc_loop(network: &BatteryNetwork, demand: &DemandProfile, steps: usize) -> Result<SimulationLog> {
    mpc_loop_with(network, demand, steps, |_, _| {})
}

/// [`mpc_loop`] with a callback after every plant step.
pub fn mpc_loop_with(
    network: &BatteryNetwork,
    demand: &DemandProfile,
    steps: usize,
    mut on_step: impl FnMut(usize, &[LogRow]),
) -> Result<SimulationLog> {
    let lay = network.layout();
    let dt = network.params.dt;
    let mut soc = network.initial_soc();
    let mut log = SimulationLog::default();
    let mut previous: Option<Vec<AgentState>> = None;
    for step in 0..steps {
        let wrap = |e: Error| Error::MpcStep { step, source: Box::new(e) };
        let t = step as f64 * dt;
        let inst = build_mpc_instance(network, &soc, demand, t).map_err(wrap)?;
        let init: Vec<AgentInit> = match (&previous, network.params.warm_start) {
            (Some(prev), true) => prev.iter().map(|s| warm_start(s, lay)).collect(),
            _ => (0..lay.m).map(|i| cold_start(network, i, soc[i], &inst.demand)).collect(),
        };
        let out = run(&inst.spec, RunOptions { init: Some(init), reference: None }).map_err(wrap)?;
        let residual = out.trace.last().map_or(0.0, |r| r.w1);
        let controls: Vec<(f64, f64)> = out
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| parse_own_controls(&s.z, i, lay.m, lay.horizon).map(|c| c[0]))
            .collect::<Result<_>>()
            .map_err(wrap)?;
        let delivered = -controls.iter().map(|(c, d)| c + d).sum::<f64>();
        let first = log.rows.len();
        for (i, (&(u_c, u_d), node)) in controls.iter().zip(&network.nodes).enumerate() {
            log.rows.push(LogRow {
                t,
                node: i + 1,
                soc: soc[i],
                u_c,
                u_d,
                delivered,
                demand: inst.demand[0],
                step_residual: residual,
            });
            soc[i] = node.advance(soc[i], u_c, u_d, dt);
        }
        on_step(step, &log.rows[first..]);
        previous = Some(out.states);
    }
    log.final_soc = soc;
    Ok(log)
}

/// The six-node network with the reference parameter table on a ring.
pub fn reference_network(params: MpcParams) -> Result<BatteryNetwork> {
    let table = [
        (125.0, 80.0, 30.0, 50.0, 110.0, 1.0),
        (100.0, 90.0, 20.0, 70.0, 100.0, 0.9),
        (80.0, 90.0, 20.0, 80.0, 70.0, 0.5),
        (90.0, 80.0, 30.0, 80.0, 85.0, 0.8),
        (75.0, 90.0, 20.0, 75.0, 60.0, 0.5),
        (200.0, 80.0, 30.0, 40.0, 180.0, 2.0),
    ];
    let nodes = table
        .iter()
        .map(|&(q_max, s_upper, s_lower, s0, u, r)| BatteryNode {
            q_max,
            s_lower,
            s_upper,
            s0,
            u_lower: -u,
            u_upper: u,
            eta_c: 0.9,
            eta_d: 1.1,
            r,
        })
        .collect();
    BatteryNetwork::new(nodes, Graph::ring(6)?, params)
}
