//! Execution planning. All planners share one contract: given a task graph,
//! the registry and a system-state snapshot they return [`ExecutionPlan`]s
//! scored by the same multi-objective [`plan_cost`].

mod baselines;
mod denoise;
mod priors;

pub use baselines::{cloud_centric_plan, fixed_graph_plan};
pub use denoise::{denoise, init_prior, select_plan, DenoiseSchedule, Denoised, PlanDistribution, SelectionPolicy};
pub use priors::{update_priors, PriorTable};

use crate::prompt::{topological_layers, NodeId, TaskGraph};
use crate::registry::{AgentId, AgentRegistry, HostId, SystemState};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no feasible agent for node {0}")]
    NoFeasibleAgent(NodeId),
    #[error("no feasible plan")]
    NoFeasiblePlan,
    #[error("invalid assignment at node {0}")]
    InvalidAssignment(NodeId),
    #[error("order is not a topological order of the graph")]
    InvalidOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    Parallel,
    Hybrid,
}

impl ExecMode {
    pub fn of(graph: &TaskGraph) -> Self {
        let layers = topological_layers(graph);
        if layers.iter().all(|l| l.len() <= 1) {
            ExecMode::Sequential
        } else if layers.len() == 1 {
            ExecMode::Parallel
        } else {
            ExecMode::Hybrid
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub makespan_ms: f64,
    pub energy_j: f64,
    pub utility: f64,
    pub penalty: f64,
    pub total: f64,
}

/// Weights of the plan objective. With `normalize` set, makespan and
/// energy enter as fractions of the deadline and energy budget (penalties
/// likewise); otherwise they enter in raw ms and J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub w_latency: f64,
    pub w_energy: f64,
    pub w_utility: f64,
    pub p_deadline: f64,
    pub p_energy: f64,
    /// Charged once per transfer that has no usable route.
    pub p_disconnect: f64,
    pub normalize: bool,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_latency: 1.0,
            w_energy: 1.0,
            w_utility: 0.5,
            p_deadline: 10.0,
            p_energy: 10.0,
            p_disconnect: 10.0,
            normalize: true,
        }
    }
}

impl CostWeights {
    pub fn raw(w_latency: f64, w_energy: f64, w_utility: f64) -> Self {
        Self { w_latency, w_energy, w_utility, normalize: false, ..Self::default() }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            w_latency: self.w_latency * factor,
            w_energy: self.w_energy * factor,
            w_utility: self.w_utility * factor,
            p_deadline: self.p_deadline * factor,
            p_energy: self.p_energy * factor,
            p_disconnect: self.p_disconnect * factor,
            normalize: self.normalize,
        }
    }

    fn scales(&self, deadline_ms: f64, budget_j: f64) -> (f64, f64) {
        if self.normalize {
            (deadline_ms.max(f64::MIN_POSITIVE), budget_j.max(f64::MIN_POSITIVE))
        } else {
            (1.0, 1.0)
        }
    }

    /// Builds the breakdown from its physical components.
    pub fn breakdown(
        &self,
        makespan_ms: f64,
        energy_j: f64,
        utility: f64,
        disconnects: usize,
        deadline_ms: f64,
        budget_j: f64,
    ) -> CostBreakdown {
        let (ls, es) = self.scales(deadline_ms, budget_j);
        let penalty = self.p_deadline * (makespan_ms - deadline_ms).max(0.0) / ls
            + self.p_energy * (energy_j - budget_j).max(0.0) / es
            + self.p_disconnect * disconnects as f64;
        let total = self.w_latency * makespan_ms / ls
            + self.w_energy * energy_j / es
            + self.w_utility * (1.0 - utility)
            + penalty;
        CostBreakdown { makespan_ms, energy_j, utility, penalty, total }
    }

    /// Recomputes `total` from the other fields of a breakdown.
    pub fn total_of(&self, c: &CostBreakdown, deadline_ms: f64, budget_j: f64) -> f64 {
        let (ls, es) = self.scales(deadline_ms, budget_j);
        self.w_latency * c.makespan_ms / ls
            + self.w_energy * c.energy_j / es
            + self.w_utility * (1.0 - c.utility)
            + c.penalty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub assignment: BTreeMap<NodeId, AgentId>,
    pub order: Vec<NodeId>,
    pub mode_tag: ExecMode,
    pub est_cost: CostBreakdown,
}

impl ExecutionPlan {
    /// Checks the two structural invariants against a graph and registry.
    pub fn validate(&self, graph: &TaskGraph, registry: &AgentRegistry) -> Result<(), PlanError> {
        if self.assignment.len() != graph.len() {
            let missing = graph.nodes().iter().find(|n| !self.assignment.contains_key(&n.node_id));
            return Err(PlanError::InvalidAssignment(missing.map_or(NodeId(usize::MAX), |n| n.node_id)));
        }
        for node in graph.nodes() {
            let agent = self.assignment.get(&node.node_id).ok_or(PlanError::InvalidAssignment(node.node_id))?;
            match registry.profile(*agent) {
                Some(p) if p.serves(node) => {}
                _ => return Err(PlanError::InvalidAssignment(node.node_id)),
            }
        }
        let mut seen = BTreeSet::new();
        if self.order.len() != graph.len() {
            return Err(PlanError::InvalidOrder);
        }
        for id in &self.order {
            let i = graph.position(*id).ok_or(PlanError::InvalidOrder)?;
            if graph.preds_of(i).iter().any(|&p| !seen.contains(&graph.nodes()[p].node_id)) {
                return Err(PlanError::InvalidOrder);
            }
            if !seen.insert(*id) {
                return Err(PlanError::InvalidOrder);
            }
        }
        Ok(())
    }
}

/// Data a node consumes that was produced outside the graph being planned
/// (completed work during a re-plan).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalInput {
    pub site: HostId,
    /// Availability time relative to planning time.
    pub ready_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanContext {
    /// Host where mission input originates and cloud results are returned.
    pub origin: HostId,
    pub external_inputs: BTreeMap<NodeId, Vec<ExternalInput>>,
    pub tx_j_per_mb: f64,
    pub cloud_result_mb: f64,
}

impl PlanContext {
    pub fn at(origin: HostId) -> Self {
        Self { origin, external_inputs: BTreeMap::new(), tx_j_per_mb: 0.5, cloud_result_mb: 0.1 }
    }
}

/// Everything a planner needs, borrowed for the duration of one call.
#[derive(Debug, Clone, Copy)]
pub struct PlanningProblem<'a> {
    pub graph: &'a TaskGraph,
    pub registry: &'a AgentRegistry,
    pub state: &'a SystemState,
    pub context: &'a PlanContext,
    pub weights: CostWeights,
}

impl<'a> PlanningProblem<'a> {
    /// Hosts connected to the origin or to an external input site through
    /// links that are currently up. The cloud is a destination only, never
    /// a stepping stone between edge hosts.
    pub fn reachable_hosts(&self) -> BTreeSet<HostId> {
        let n = self.state.nodes.len();
        let mut seen: BTreeSet<HostId> = BTreeSet::new();
        let mut stack: Vec<HostId> = std::iter::once(self.context.origin)
            .chain(self.context.external_inputs.values().flatten().map(|e| e.site))
            .collect();
        while let Some(h) = stack.pop() {
            if h >= n || !seen.insert(h) || self.state.cloud == Some(h) {
                continue;
            }
            stack.extend((0..n).filter(|&to| !seen.contains(&to) && self.state.link(h, to).up));
        }
        seen
    }

    /// Feasible agents per node position, as ranked by the registry. Agents
    /// on hosts the mission data cannot reach are dropped.
    pub fn candidates(&self, exclude: &BTreeMap<NodeId, BTreeSet<AgentId>>) -> Vec<Vec<AgentId>> {
        let reachable = self.reachable_hosts();
        self.graph
            .nodes()
            .iter()
            .map(|node| {
                let banned = exclude.get(&node.node_id);
                self.registry
                    .match_agents(node, self.state)
                    .into_iter()
                    .map(|(a, _)| a)
                    .filter(|a| banned.is_none_or(|b| !b.contains(a)))
                    .filter(|a| self.registry.profile(*a).is_some_and(|p| reachable.contains(&p.host)))
                    .collect()
            })
            .collect()
    }

    fn agent_ref(&self, pos: usize, agent: AgentId) -> Option<AgentRef> {
        let node = &self.graph.nodes()[pos];
        let p = self.registry.profile(agent)?;
        if !p.serves(node) {
            return None;
        }
        let h = self.registry.history(agent)?;
        Some(AgentRef {
            host: p.host,
            latency_ms: h.ema_latency_ms_per_gflop * node.spec.workload_gflop,
            energy_j: p.energy_j_per_gflop * node.spec.workload_gflop,
            confidence: p.accuracy * h.ema_success,
        })
    }
}

/// Per-(node, agent) quantities the evaluator needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AgentRef {
    pub host: HostId,
    pub latency_ms: f64,
    pub energy_j: f64,
    pub confidence: f64,
}

/// Critical-path estimate of one assignment; nodes sharing a host run one
/// after another in topological order.
pub(crate) struct Evaluator<'a> {
    problem: PlanningProblem<'a>,
    topo: Vec<usize>,
}

pub(crate) struct Estimate {
    pub cost: CostBreakdown,
    pub start_ms: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: PlanningProblem<'a>) -> Self {
        let g = problem.graph;
        let topo = g.topological_order().into_iter().map(|id| g.position(id).expect("own id")).collect();
        Self { problem, topo }
    }

    pub fn evaluate(&self, refs: &[AgentRef]) -> Estimate {
        let g = self.problem.graph;
        let state = self.problem.state;
        let ctx = self.problem.context;
        let n = g.len();
        let mut finish = vec![0.0f64; n];
        let mut start = vec![0.0f64; n];
        let mut site = vec![0usize; n];
        let mut energy = 0.0;
        let mut utility = 1.0;
        let mut disconnects = 0usize;
        // hosts run one compute at a time, so nodes sharing a host queue up
        let mut free_at: BTreeMap<HostId, f64> = BTreeMap::new();

        let mut transfer = |from: HostId, to: HostId, mb: f64, energy: &mut f64| -> f64 {
            let link = state.link(from, to);
            match link.transfer_estimate_ms(mb) {
                Some(t) => {
                    *energy += ctx.tx_j_per_mb * mb * f64::from(link.hops);
                    t
                }
                None => {
                    disconnects += 1;
                    0.0
                }
            }
        };

        for &i in &self.topo {
            let node = &g.nodes()[i];
            let r = refs[i];
            let mb = node.spec.payload_mb;
            let mut ready: f64 = 0.0;
            let preds = g.preds_of(i);
            let external = ctx.external_inputs.get(&node.node_id);
            if preds.is_empty() && external.is_none_or(Vec::is_empty) {
                ready = transfer(ctx.origin, r.host, mb, &mut energy);
            }
            for &p in preds {
                ready = ready.max(finish[p] + transfer(site[p], r.host, mb, &mut energy));
            }
            for ext in external.into_iter().flatten() {
                ready = ready.max(ext.ready_ms.max(0.0) + transfer(ext.site, r.host, mb, &mut energy));
            }
            let free = free_at.entry(r.host).or_insert(state.node(r.host).backlog_ms);
            start[i] = ready.max(*free);
            *free = start[i] + r.latency_ms;
            let mut done = start[i] + r.latency_ms;
            energy += r.energy_j;
            utility *= r.confidence;
            if state.cloud == Some(r.host) {
                done += transfer(r.host, ctx.origin, ctx.cloud_result_mb, &mut energy);
                site[i] = ctx.origin;
            } else {
                site[i] = r.host;
            }
            finish[i] = done;
        }
        let makespan = finish.iter().copied().fold(0.0, f64::max);
        let c = g.constraints();
        let cost = self.problem.weights.breakdown(
            makespan,
            energy,
            utility,
            disconnects,
            c.deadline_ms as f64,
            c.energy_budget_j,
        );
        Estimate { cost, start_ms: start }
    }

    /// Kahn's algorithm keyed by estimated start, then pair preference,
    /// then node id.
    pub fn derive_order(&self, start_ms: &[f64], preference: Option<&[f64]>) -> Vec<NodeId> {
        let g = self.problem.graph;
        let n = g.len();
        let mut indeg: Vec<usize> = (0..n).map(|i| g.preds_of(i).len()).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while !ready.is_empty() {
            let pref = |i: usize| -> f64 { preference.map_or(0.0, |w| ready.iter().map(|&j| w[i * n + j]).sum()) };
            let (k, _) = ready
                .iter()
                .enumerate()
                .min_by(|(_, &a), (_, &b)| {
                    start_ms[a]
                        .total_cmp(&start_ms[b])
                        .then(pref(b).total_cmp(&pref(a)))
                        .then(g.nodes()[a].node_id.cmp(&g.nodes()[b].node_id))
                })
                .expect("nonempty");
            let v = ready.swap_remove(k);
            order.push(g.nodes()[v].node_id);
            for &s in g.succs_of(v) {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(s);
                }
            }
        }
        order
    }
}

/// Scores a plan under the shared objective.
pub fn plan_cost(plan: &ExecutionPlan, problem: &PlanningProblem) -> Result<CostBreakdown, PlanError> {
    let refs = assignment_refs(&plan.assignment, problem)?;
    Ok(Evaluator::new(*problem).evaluate(&refs).cost)
}

pub(crate) fn assignment_refs(
    assignment: &BTreeMap<NodeId, AgentId>,
    problem: &PlanningProblem,
) -> Result<Vec<AgentRef>, PlanError> {
    problem
        .graph
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let agent = assignment.get(&node.node_id).ok_or(PlanError::InvalidAssignment(node.node_id))?;
            problem.agent_ref(i, *agent).ok_or(PlanError::InvalidAssignment(node.node_id))
        })
        .collect()
}

/// Completes an assignment into a plan: estimated cost plus derived order.
pub fn build_plan(
    assignment: BTreeMap<NodeId, AgentId>,
    problem: &PlanningProblem,
) -> Result<ExecutionPlan, PlanError> {
    let refs = assignment_refs(&assignment, problem)?;
    let ev = Evaluator::new(*problem);
    let est = ev.evaluate(&refs);
    let order = ev.derive_order(&est.start_ms, None);
    Ok(ExecutionPlan { assignment, order, mode_tag: ExecMode::of(problem.graph), est_cost: est.cost })
}
