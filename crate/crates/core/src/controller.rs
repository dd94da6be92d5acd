//! Mission execution inside the simulated world.
//!
//! A [`Controller`] drives any number of concurrent missions off the shared
//! world event queue. Nodes are dispatched once every predecessor has
//! finished; inputs are shipped from wherever the producing node left its
//! output, compute is queued FIFO on the agent's host, and each attempt ends
//! in a seeded Bernoulli draw. Failures either abort the mission or, when
//! substitution is enabled, trigger a local re-plan of the unexecuted part
//! of the graph.

use crate::planner::{
    denoise, init_prior, select_plan, update_priors, CostWeights, DenoiseSchedule, ExecutionPlan, ExternalInput,
    PlanContext, PlanningProblem, PriorTable, SelectionPolicy,
};
use crate::prompt::{ConstraintSet, NodeId, SubtaskKind, TaskGraph};
use crate::registry::{AgentId, AgentRegistry, HostId, SystemState};
use crate::sim::{stream_seed, Event, EventKind, World};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

/// One agent invocation as observed by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub node_id: NodeId,
    pub kind: SubtaskKind,
    pub agent_id: AgentId,
    pub host: HostId,
    pub workload_gflop: f64,
    /// Queueing plus compute time on the host.
    pub latency_ms: f64,
    /// Compute energy drawn from the host.
    pub energy_j: f64,
    /// Success probability used for the draw.
    pub confidence: f64,
    /// Time spent moving inputs to the host.
    pub comm_delay_ms: f64,
    pub outcome: Outcome,
    /// Absolute simulation time the attempt ended.
    pub finished_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    DeadlineExceeded,
    EnergyExhausted,
    NoFeasibleAgent,
    Disconnected,
    /// A node failed and the method does not substitute.
    AgentFailed,
}

/// Arrival of one input at a node's host.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    /// Producing node, or `None` for mission input from the origin.
    pub from: Option<NodeId>,
    pub site: HostId,
    pub sent_ms: f64,
    pub transfer_ms: f64,
    pub arrival_ms: f64,
}

/// Latest attempt of one node. Times are absolute simulation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: NodeId,
    pub agent_id: AgentId,
    pub host: HostId,
    pub start_ms: f64,
    pub finish_ms: f64,
    pub succeeded: bool,
    pub substituted_from: Option<AgentId>,
    pub inputs: Vec<InputRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub mission_id: u64,
    pub origin: HostId,
    pub dispatch_ms: f64,
    pub deadline_ms: u64,
    pub deadline_abs_ms: f64,
    pub energy_budget_j: f64,
    /// Ordered by node id; nodes that never started compute are absent.
    pub records: Vec<NodeRecord>,
    pub completion: bool,
    /// Makespan relative to dispatch, when every node finished.
    pub completion_time_ms: Option<f64>,
    pub abort_reason: Option<AbortReason>,
    pub telemetry: Vec<TelemetryRecord>,
    pub energy_j: f64,
    pub substitutions: usize,
    pub failures: usize,
}

impl ExecutionTrace {
    pub fn record(&self, node: NodeId) -> Option<&NodeRecord> {
        self.records.iter().find(|r| r.node_id == node)
    }

    /// Checks that no node started before every input arrived and no input
    /// left before its producer finished.
    pub fn check_dependencies(&self, graph: &TaskGraph) -> Result<(), String> {
        for rec in &self.records {
            let i = graph.position(rec.node_id).ok_or_else(|| format!("unknown node {}", rec.node_id))?;
            for &p in graph.preds_of(i) {
                let pid = graph.nodes()[p].node_id;
                let pred = self.record(pid).ok_or_else(|| format!("{} ran without predecessor {pid}", rec.node_id))?;
                if !pred.succeeded {
                    return Err(format!("{} ran after failed predecessor {pid}", rec.node_id));
                }
                let input = rec
                    .inputs
                    .iter()
                    .find(|x| x.from == Some(pid))
                    .ok_or_else(|| format!("{} has no input from {pid}", rec.node_id))?;
                if input.sent_ms < pred.finish_ms || input.arrival_ms < input.sent_ms + input.transfer_ms {
                    return Err(format!("input {pid} -> {} sent before it existed", rec.node_id));
                }
                if rec.start_ms < input.arrival_ms {
                    return Err(format!("{} started before input from {pid} arrived", rec.node_id));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QosDecision {
    Continue,
    Abort(AbortReason),
}

/// Deadline and budget check for a running mission. `elapsed_ms` is
/// measured from dispatch.
pub fn enforce_qos(elapsed_ms: f64, energy_j: f64, constraints: &ConstraintSet) -> QosDecision {
    if elapsed_ms > constraints.deadline_ms as f64 {
        QosDecision::Abort(AbortReason::DeadlineExceeded)
    } else if energy_j > constraints.energy_budget_j {
        QosDecision::Abort(AbortReason::EnergyExhausted)
    } else {
        QosDecision::Continue
    }
}

/// Planner settings used to re-plan after a failure.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubstitutionConfig {
    pub schedule: DenoiseSchedule,
    pub weights: CostWeights,
    pub selection: SelectionPolicy,
}

/// Inputs of one local re-plan.
#[derive(Debug, Clone, Copy)]
pub struct Replan<'a> {
    pub graph: &'a TaskGraph,
    /// Nodes whose assignment may change; everything else is fixed.
    pub unexecuted: &'a BTreeSet<NodeId>,
    pub external_inputs: &'a BTreeMap<NodeId, Vec<ExternalInput>>,
    pub banned: &'a BTreeMap<NodeId, BTreeSet<AgentId>>,
    pub state: &'a SystemState,
    pub registry: &'a AgentRegistry,
    pub priors: &'a PriorTable,
    pub origin: HostId,
    pub tx_j_per_mb: f64,
    pub cloud_result_mb: f64,
    /// Deadline and budget left for the remainder of the mission.
    pub constraints: ConstraintSet,
    pub config: &'a SubstitutionConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubstituteError {
    #[error("no feasible agent for node {0}")]
    NoFeasibleAgent(NodeId),
}

/// Re-plans the unexecuted subgraph with the banned agents excluded and
/// returns the new assignment of those nodes.
pub fn substitute(r: &Replan) -> Result<ExecutionPlan, SubstituteError> {
    let sub = r.graph.subgraph(r.unexecuted, r.constraints);
    let context = PlanContext {
        origin: r.origin,
        external_inputs: r.external_inputs.clone(),
        tx_j_per_mb: r.tx_j_per_mb,
        cloud_result_mb: r.cloud_result_mb,
    };
    let problem = PlanningProblem {
        graph: &sub,
        registry: r.registry,
        state: r.state,
        context: &context,
        weights: r.config.weights,
    };
    let candidates = problem.candidates(r.banned);
    if let Some(pos) = candidates.iter().position(Vec::is_empty) {
        return Err(SubstituteError::NoFeasibleAgent(sub.nodes()[pos].node_id));
    }
    let no_agent = |_| SubstituteError::NoFeasibleAgent(sub.nodes()[0].node_id);
    let dist = init_prior(&sub, &candidates, r.priors, &r.config.schedule).map_err(no_agent)?;
    let out = denoise(&dist, &problem, &r.config.schedule, r.seed).map_err(no_agent)?;
    select_plan(&out.ranked, r.config.selection, stream_seed(r.seed, 1)).map_err(no_agent)
}

/// Payload of the world events this module schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimEvent {
    /// Workload arrival, handled by the driver.
    Arrival(usize),
    /// `key` tells this mission's events apart from stale ones left in the
    /// world by missions of an earlier controller.
    Mission { slot: usize, key: u64, step: MissionStep },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissionStep {
    InputsReady { node: usize, attempt: u32 },
    ComputeDone { node: usize, attempt: u32 },
    ResultDelivered { node: usize, attempt: u32 },
    Deadline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pending,
    Transferring,
    Running,
    Delivering,
    Done,
    /// Waiting for a gateway that will never come up again.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cause {
    AgentFailure,
    HostLost,
    Unreachable,
    DataLost,
}

/// Shared references a controller needs while handling an event.
pub struct Env<'a> {
    pub world: &'a mut World<SimEvent>,
    pub registry: &'a AgentRegistry,
    pub priors: &'a PriorTable,
}

#[derive(Debug, Clone)]
struct Mission {
    id: u64,
    key: u64,
    graph: TaskGraph,
    assignment: Vec<AgentId>,
    order: Vec<usize>,
    origin: HostId,
    seed: u64,
    dispatch_ms: f64,
    status: Vec<Status>,
    attempt: Vec<u32>,
    output_site: Vec<HostId>,
    eta_ms: Vec<f64>,
    ready_ms: Vec<f64>,
    comm_ms: Vec<f64>,
    compute_j: Vec<f64>,
    inputs: Vec<Vec<InputRecord>>,
    /// Outputs shipped ahead to a successor's host: (pred, dest, record).
    pushed: Vec<Vec<(usize, HostId, InputRecord)>>,
    records: Vec<Option<NodeRecord>>,
    substituted_from: Vec<Option<AgentId>>,
    banned: BTreeMap<NodeId, BTreeSet<AgentId>>,
    telemetry: Vec<TelemetryRecord>,
    energy_j: f64,
    substitutions: usize,
    failures: usize,
    remaining: usize,
}

/// Executes missions on a shared world. Substitution is disabled for the
/// static baselines.
pub struct Controller {
    substitution: Option<SubstitutionConfig>,
    missions: Vec<Option<Mission>>,
    finished: Vec<ExecutionTrace>,
}

impl Controller {
    pub fn new(substitution: Option<SubstitutionConfig>) -> Self {
        Self { substitution, missions: Vec::new(), finished: Vec::new() }
    }

    pub fn active(&self) -> usize {
        self.missions.iter().filter(|m| m.is_some()).count()
    }

    /// Finalized traces in completion order since the last call.
    pub fn drain_finished(&mut self) -> Vec<ExecutionTrace> {
        std::mem::take(&mut self.finished)
    }

    /// Starts a mission at the world's current time.
    pub fn launch(
        &mut self,
        env: &mut Env,
        mission_id: u64,
        graph: &TaskGraph,
        plan: &ExecutionPlan,
        origin: HostId,
        seed: u64,
    ) -> usize {
        let n = graph.len();
        let assignment: Vec<AgentId> = graph.nodes().iter().map(|node| plan.assignment[&node.node_id]).collect();
        let order = plan.order.iter().map(|id| graph.position(*id).expect("plan matches graph")).collect();
        let now = env.world.clock_ms();
        let slot = self.missions.len();
        // the deadline event below takes this sequence number
        let key = env.world.next_seq();
        self.missions.push(Some(Mission {
            id: mission_id,
            key,
            graph: graph.clone(),
            assignment,
            order,
            origin,
            seed,
            dispatch_ms: now,
            status: vec![Status::Pending; n],
            attempt: vec![0; n],
            output_site: vec![origin; n],
            eta_ms: vec![now; n],
            ready_ms: vec![now; n],
            comm_ms: vec![0.0; n],
            compute_j: vec![0.0; n],
            inputs: vec![Vec::new(); n],
            pushed: vec![Vec::new(); n],
            records: vec![None; n],
            substituted_from: vec![None; n],
            banned: BTreeMap::new(),
            telemetry: Vec::new(),
            energy_j: 0.0,
            substitutions: 0,
            failures: 0,
            remaining: n,
        }));
        // strictly past the deadline so work finishing exactly on it counts
        let deadline = now + graph.constraints().deadline_ms as f64;
        env.world.schedule(
            deadline + 1e-6 * deadline.max(1.0),
            SimEvent::Mission { slot, key, step: MissionStep::Deadline },
        );
        if n == 0 {
            self.finish(slot, env.world.clock_ms(), None);
        } else {
            self.dispatch_ready(slot, env);
        }
        slot
    }

    /// Applies one popped world event. Arrival events are ignored.
    pub fn on_event(&mut self, env: &mut Env, event: &Event<SimEvent>) {
        match &event.kind {
            EventKind::User(SimEvent::Mission { slot, key, step }) => {
                if self.mission(*slot).is_some_and(|m| m.key == *key) {
                    self.on_step(*slot, *step, env);
                }
            }
            EventKind::HostFailure(h) => self.on_host_failure(*h, env),
            EventKind::User(SimEvent::Arrival(_)) | EventKind::GatewayToggle => {}
        }
    }

    fn on_host_failure(&mut self, host: HostId, env: &mut Env) {
        for slot in 0..self.missions.len() {
            let victims: Vec<usize> = match &self.missions[slot] {
                Some(m) => (0..m.graph.len())
                    .filter(|&i| {
                        matches!(m.status[i], Status::Transferring | Status::Running)
                            && env.registry.profile(m.assignment[i]).map(|p| p.host) == Some(host)
                    })
                    .collect(),
                None => continue,
            };
            for i in victims {
                if self.missions[slot].is_none() {
                    break;
                }
                self.fail(slot, i, Cause::HostLost, env);
            }
        }
    }

    fn mission(&mut self, slot: usize) -> Option<&mut Mission> {
        self.missions.get_mut(slot).and_then(Option::as_mut)
    }

    fn qos(&mut self, slot: usize, env: &Env) -> bool {
        let now = env.world.clock_ms();
        let Some(m) = self.mission(slot) else { return false };
        match enforce_qos(now - m.dispatch_ms, m.energy_j, m.graph.constraints()) {
            QosDecision::Continue => true,
            QosDecision::Abort(reason) => {
                self.finish(slot, now, Some(reason));
                false
            }
        }
    }

    fn on_step(&mut self, slot: usize, step: MissionStep, env: &mut Env) {
        if self.mission(slot).is_none() || !self.qos(slot, env) {
            return;
        }
        let current =
            |m: &Mission, node: usize, attempt: u32, want: Status| m.attempt[node] == attempt && m.status[node] == want;
        match step {
            MissionStep::Deadline => {}
            MissionStep::InputsReady { node, attempt } => {
                if current(self.mission(slot).unwrap(), node, attempt, Status::Transferring) {
                    self.start_compute(slot, node, env);
                }
            }
            MissionStep::ComputeDone { node, attempt } => {
                if current(self.mission(slot).unwrap(), node, attempt, Status::Running) {
                    self.end_compute(slot, node, env);
                }
            }
            MissionStep::ResultDelivered { node, attempt } => {
                if current(self.mission(slot).unwrap(), node, attempt, Status::Delivering) {
                    let origin = self.mission(slot).unwrap().origin;
                    self.complete(slot, node, origin, env);
                }
            }
        }
    }

    /// Dispatches every pending node whose predecessors are done, in plan
    /// order.
    fn dispatch_ready(&mut self, slot: usize, env: &mut Env) {
        let Some(m) = self.mission(slot) else { return };
        let ready: Vec<usize> = m
            .order
            .iter()
            .copied()
            .filter(|&i| {
                m.status[i] == Status::Pending && m.graph.preds_of(i).iter().all(|&p| m.status[p] == Status::Done)
            })
            .collect();
        for i in ready {
            if self.mission(slot).is_none() {
                return;
            }
            self.dispatch(slot, i, env);
        }
    }

    fn dispatch(&mut self, slot: usize, i: usize, env: &mut Env) {
        let world = &mut *env.world;
        let now = world.clock_ms();
        let tx_price = world.config().energy.tx_j_per_mb;
        let m = self.missions[slot].as_mut().expect("active mission");
        let host = env.registry.profile(m.assignment[i]).expect("registered agent").host;
        if !world.node(host).is_alive() {
            return self.fail(slot, i, Cause::HostLost, env);
        }
        let mb = m.graph.nodes()[i].spec.payload_mb;
        let sources: Vec<(Option<usize>, HostId)> = if m.graph.preds_of(i).is_empty() {
            vec![(None, m.origin)]
        } else {
            m.graph.preds_of(i).iter().map(|&p| (Some(p), m.output_site[p])).collect()
        };
        let mut inputs = Vec::with_capacity(sources.len());
        let mut ready = now;
        let mut stalled = false;
        let mut cause = None;
        for (pred, site) in sources {
            let from = pred.map(|p| m.graph.nodes()[p].node_id);
            if let Some(&(_, _, rec)) =
                pred.and_then(|p| m.pushed[i].iter().find(|(q, dest, _)| *q == p && *dest == host))
            {
                inputs.push(rec);
                ready = ready.max(rec.arrival_ms);
                continue;
            }
            if site == host {
                inputs.push(InputRecord { from, site, sent_ms: now, transfer_ms: 0.0, arrival_ms: now });
                continue;
            }
            if !world.node(site).is_alive() {
                cause = Some(Cause::DataLost);
                break;
            }
            let Some(route) = world.route(site, host) else {
                cause = Some(Cause::Unreachable);
                break;
            };
            let (drawn, ok) = draw(world, site, tx_price * mb * f64::from(route.hops));
            m.energy_j += drawn;
            if !ok {
                cause = Some(Cause::DataLost);
                break;
            }
            let sent = if route.via_gateway { world.gateway_next_up_ms() } else { now };
            if !sent.is_finite() {
                stalled = true;
                continue;
            }
            let dur = world.transfer_time(mb, site, host).expect("route exists");
            inputs.push(InputRecord { from, site, sent_ms: sent, transfer_ms: dur, arrival_ms: sent + dur });
            ready = ready.max(sent + dur);
        }
        if let Some(c) = cause {
            return self.fail(slot, i, c, env);
        }
        let m = self.missions[slot].as_mut().expect("active mission");
        m.inputs[i] = inputs;
        m.comm_ms[i] = ready - now;
        m.ready_ms[i] = ready;
        m.eta_ms[i] = ready;
        if stalled {
            m.status[i] = Status::Stalled;
            return;
        }
        m.status[i] = Status::Transferring;
        let (attempt, key) = (m.attempt[i], m.key);
        env.world.schedule(ready, SimEvent::Mission { slot, key, step: MissionStep::InputsReady { node: i, attempt } });
        self.qos(slot, env);
    }

    fn start_compute(&mut self, slot: usize, i: usize, env: &mut Env) {
        let world = &mut *env.world;
        let m = self.missions[slot].as_mut().expect("active mission");
        let agent = m.assignment[i];
        let p = env.registry.profile(agent).expect("registered agent");
        let w = m.graph.nodes()[i].spec.workload_gflop;
        let now = world.clock_ms();
        let Ok((start, finish)) = world.reserve_compute(p.host, now, p.nominal_latency_ms_per_gflop * w) else {
            return self.fail(slot, i, Cause::HostLost, env);
        };
        let (drawn, ok) = draw(world, p.host, p.energy_j_per_gflop * w);
        m.energy_j += drawn;
        m.compute_j[i] = drawn;
        m.records[i] = Some(NodeRecord {
            node_id: m.graph.nodes()[i].node_id,
            agent_id: agent,
            host: p.host,
            start_ms: start,
            finish_ms: finish,
            succeeded: false,
            substituted_from: m.substituted_from[i],
            inputs: m.inputs[i].clone(),
        });
        if !ok {
            return self.fail(slot, i, Cause::HostLost, env);
        }
        m.status[i] = Status::Running;
        m.eta_ms[i] = finish;
        let (attempt, key) = (m.attempt[i], m.key);
        env.world
            .schedule(finish, SimEvent::Mission { slot, key, step: MissionStep::ComputeDone { node: i, attempt } });
        self.qos(slot, env);
    }

    fn end_compute(&mut self, slot: usize, i: usize, env: &mut Env) {
        let world = &mut *env.world;
        let now = world.clock_ms();
        let m = self.missions[slot].as_mut().expect("active mission");
        let agent = m.assignment[i];
        let p = env.registry.profile(agent).expect("registered agent");
        if !world.node(p.host).is_alive() {
            return self.fail(slot, i, Cause::HostLost, env);
        }
        let prob = (p.accuracy * p.field_reliability).clamp(0.0, 1.0);
        let key = ((i as u64) << 20) | u64::from(m.attempt[i]);
        let u = unit(stream_seed(stream_seed(m.seed, m.id), key));
        let success = u < prob;
        push_telemetry(m, i, p.host, prob, if success { Outcome::Success } else { Outcome::Failure }, now, agent);
        if !success {
            return self.fail(slot, i, Cause::AgentFailure, env);
        }
        if world.is_cloud(p.host) && p.host != m.origin {
            let mb = world.config().link.cloud_result_mb;
            let Some(route) = world.route(p.host, m.origin) else {
                return self.fail(slot, i, Cause::DataLost, env);
            };
            let tx = world.config().energy.tx_j_per_mb * mb * f64::from(route.hops);
            let (drawn, _) = draw(world, p.host, tx);
            m.energy_j += drawn;
            let sent = world.gateway_next_up_ms();
            if !sent.is_finite() {
                m.status[i] = Status::Stalled;
                return;
            }
            let dur = world.transfer_time(mb, p.host, m.origin).expect("route exists");
            m.status[i] = Status::Delivering;
            m.eta_ms[i] = sent + dur;
            let (attempt, key) = (m.attempt[i], m.key);
            world.schedule(
                sent + dur,
                SimEvent::Mission { slot, key, step: MissionStep::ResultDelivered { node: i, attempt } },
            );
            self.qos(slot, env);
        } else {
            self.complete(slot, i, p.host, env);
        }
    }

    fn complete(&mut self, slot: usize, i: usize, site: HostId, env: &mut Env) {
        let now = env.world.clock_ms();
        let m = self.missions[slot].as_mut().expect("active mission");
        m.status[i] = Status::Done;
        m.output_site[i] = site;
        if let Some(r) = m.records[i].as_mut() {
            r.finish_ms = now;
            r.succeeded = true;
        }
        m.remaining -= 1;
        if m.remaining == 0 {
            return self.finish(slot, now, None);
        }
        self.push_output(slot, i, env);
        self.dispatch_ready(slot, env);
    }

    /// Starts shipping a finished output to the hosts of pending successors
    /// so the transfer overlaps with their other inputs. Anything that cannot
    /// be sent now is left for `dispatch` to retry and report.
    fn push_output(&mut self, slot: usize, i: usize, env: &mut Env) {
        let world = &mut *env.world;
        let now = world.clock_ms();
        let tx_price = world.config().energy.tx_j_per_mb;
        let m = self.missions[slot].as_mut().expect("active mission");
        let site = m.output_site[i];
        let from = Some(m.graph.nodes()[i].node_id);
        for &s in m.graph.succs_of(i) {
            if m.status[s] != Status::Pending {
                continue;
            }
            let host = env.registry.profile(m.assignment[s]).expect("registered agent").host;
            if host == site || !world.node(site).is_alive() || !world.node(host).is_alive() {
                continue;
            }
            let Some(route) = world.route(site, host) else { continue };
            let sent = if route.via_gateway { world.gateway_next_up_ms() } else { now };
            if !sent.is_finite() {
                continue;
            }
            let mb = m.graph.nodes()[s].spec.payload_mb;
            let (drawn, ok) = draw(world, site, tx_price * mb * f64::from(route.hops));
            m.energy_j += drawn;
            if !ok {
                continue;
            }
            let dur = world.transfer_time(mb, site, host).expect("route exists");
            m.pushed[s].push((
                i,
                host,
                InputRecord { from, site, sent_ms: sent, transfer_ms: dur, arrival_ms: sent + dur },
            ));
        }
    }

    fn fail(&mut self, slot: usize, i: usize, cause: Cause, env: &mut Env) {
        let now = env.world.clock_ms();
        let m = self.missions[slot].as_mut().expect("active mission");
        let agent = m.assignment[i];
        let host = env.registry.profile(agent).expect("registered agent").host;
        if cause == Cause::HostLost && m.status[i] == Status::Running {
            push_telemetry(m, i, host, 0.0, Outcome::Failure, now, agent);
        }
        m.failures += 1;
        m.status[i] = Status::Pending;
        m.attempt[i] += 1;
        if let Some(r) = m.records[i].as_mut() {
            r.finish_ms = r.finish_ms.min(now.max(r.start_ms));
            r.succeeded = false;
        }
        let reason = match cause {
            Cause::DataLost => Some(AbortReason::Disconnected),
            _ if self.substitution.is_none() => Some(match cause {
                Cause::Unreachable => AbortReason::Disconnected,
                _ => AbortReason::AgentFailed,
            }),
            _ => None,
        };
        if let Some(r) = reason {
            return self.finish(slot, now, Some(r));
        }
        match self.replan(slot, i, agent, env) {
            Ok(()) => {
                if self.qos(slot, env) {
                    self.dispatch_ready(slot, env);
                }
            }
            Err(reason) => self.finish(slot, now, Some(reason)),
        }
    }

    fn replan(&mut self, slot: usize, failed: usize, agent: AgentId, env: &mut Env) -> Result<(), AbortReason> {
        let cfg = self.substitution.expect("substitution enabled");
        let world = &*env.world;
        let now = world.clock_ms();
        let m = self.missions[slot].as_mut().expect("active mission");
        let failed_id = m.graph.nodes()[failed].node_id;
        m.banned.entry(failed_id).or_default().insert(agent);

        let n = m.graph.len();
        let unexecuted: BTreeSet<NodeId> =
            (0..n).filter(|&i| m.status[i] == Status::Pending).map(|i| m.graph.nodes()[i].node_id).collect();
        let mut external: BTreeMap<NodeId, Vec<ExternalInput>> = BTreeMap::new();
        for i in 0..n {
            if m.status[i] != Status::Pending {
                continue;
            }
            for &p in m.graph.preds_of(i) {
                if m.status[p] == Status::Pending {
                    continue;
                }
                let site = m.output_site_after(p, env.registry, world);
                let ready = if m.status[p] == Status::Done { 0.0 } else { (m.eta_ms[p] - now).max(0.0) };
                external.entry(m.graph.nodes()[i].node_id).or_default().push(ExternalInput { site, ready_ms: ready });
            }
        }
        let c = m.graph.constraints();
        let left_ms = (m.dispatch_ms + c.deadline_ms as f64 - now).ceil().max(1.0) as u64;
        let left_j = (c.energy_budget_j - m.energy_j).max(1e-3);
        let constraints = ConstraintSet::new(left_ms, left_j, c.priority).expect("positive remainders");
        let state = world.system_state();
        let seed = stream_seed(stream_seed(m.seed, m.id), 0xC0DE_0000 + m.substitutions as u64);
        let r = Replan {
            graph: &m.graph,
            unexecuted: &unexecuted,
            external_inputs: &external,
            banned: &m.banned,
            state: &state,
            registry: env.registry,
            priors: env.priors,
            origin: m.origin,
            tx_j_per_mb: world.config().energy.tx_j_per_mb,
            cloud_result_mb: world.config().link.cloud_result_mb,
            constraints,
            config: &cfg,
            seed,
        };
        let plan = substitute(&r).map_err(|_| AbortReason::NoFeasibleAgent)?;
        for (id, a) in &plan.assignment {
            let i = m.graph.position(*id).expect("subgraph node");
            m.assignment[i] = *a;
        }
        // ready nodes of the sub-plan go first, in its order
        let mut order: Vec<usize> = plan.order.iter().map(|id| m.graph.position(*id).expect("subgraph node")).collect();
        order.extend(m.order.iter().copied().filter(|i| !unexecuted.contains(&m.graph.nodes()[*i].node_id)));
        m.order = order;
        m.substituted_from[failed] = Some(agent);
        m.substitutions += 1;
        Ok(())
    }

    fn finish(&mut self, slot: usize, now: f64, abort: Option<AbortReason>) {
        let Some(m) = self.missions[slot].take() else { return };
        let c = m.graph.constraints();
        let elapsed = now - m.dispatch_ms;
        let all_done = m.remaining == 0;
        let completion = abort.is_none() && all_done && elapsed <= c.deadline_ms as f64;
        let mut records: Vec<NodeRecord> = m.records.into_iter().flatten().collect();
        records.sort_by_key(|r| r.node_id);
        self.finished.push(ExecutionTrace {
            mission_id: m.id,
            origin: m.origin,
            dispatch_ms: m.dispatch_ms,
            deadline_ms: c.deadline_ms,
            deadline_abs_ms: m.dispatch_ms + c.deadline_ms as f64,
            energy_budget_j: c.energy_budget_j,
            records,
            completion,
            completion_time_ms: all_done.then_some(elapsed),
            abort_reason: if all_done && !completion { Some(AbortReason::DeadlineExceeded) } else { abort },
            telemetry: m.telemetry,
            energy_j: m.energy_j,
            substitutions: m.substitutions,
            failures: m.failures,
        });
    }
}

impl Mission {
    /// Where a started node's output will be available.
    fn output_site_after(&self, i: usize, registry: &AgentRegistry, world: &World<SimEvent>) -> HostId {
        if self.status[i] == Status::Done {
            return self.output_site[i];
        }
        let host = registry.profile(self.assignment[i]).expect("registered agent").host;
        if world.is_cloud(host) {
            self.origin
        } else {
            host
        }
    }
}

fn push_telemetry(m: &mut Mission, i: usize, host: HostId, prob: f64, outcome: Outcome, now: f64, agent: AgentId) {
    let spec = m.graph.nodes()[i].spec;
    m.telemetry.push(TelemetryRecord {
        node_id: m.graph.nodes()[i].node_id,
        kind: spec.kind,
        agent_id: agent,
        host,
        workload_gflop: spec.workload_gflop,
        latency_ms: (now - m.ready_ms[i]).max(0.0),
        energy_j: m.compute_j[i],
        confidence: prob,
        comm_delay_ms: m.comm_ms[i],
        outcome,
        finished_ms: now,
    });
}

/// Draws energy and reports what was actually taken; `false` on overdraw.
fn draw<P>(world: &mut World<P>, host: HostId, joules: f64) -> (f64, bool) {
    let before = world.node(host).consumed_uj();
    let ok = world.consume_energy(host, joules).is_ok();
    ((world.node(host).consumed_uj() - before) as f64 / 1e6, ok)
}

fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Runs one mission to completion on a world nobody else is using.
pub fn execute(
    plan: &ExecutionPlan,
    graph: &TaskGraph,
    world: &mut World<SimEvent>,
    registry: &AgentRegistry,
    origin: HostId,
    seed: u64,
    substitution: Option<SubstitutionConfig>,
) -> ExecutionTrace {
    let priors = PriorTable::new();
    let mut ctl = Controller::new(substitution);
    let mut env = Env { world, registry, priors: &priors };
    ctl.launch(&mut env, 0, graph, plan, origin, seed);
    while ctl.active() > 0 {
        let Some(ev) = env.world.step(f64::INFINITY) else { break };
        ctl.on_event(&mut env, &ev);
    }
    ctl.drain_finished().pop().expect("mission finalized")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeedbackError {
    #[error("trace for mission {0} was already fed back")]
    DuplicateFeedback(u64),
}

/// Closes the loop from finished traces into agent histories and priors,
/// at most once per mission.
#[derive(Debug, Clone, Default)]
pub struct FeedbackLoop {
    seen: BTreeSet<u64>,
    pub beta: f64,
}

impl FeedbackLoop {
    pub fn new(beta: f64) -> Self {
        Self { seen: BTreeSet::new(), beta }
    }

    pub fn feedback(
        &mut self,
        trace: &ExecutionTrace,
        registry: &mut AgentRegistry,
        priors: &PriorTable,
    ) -> Result<PriorTable, FeedbackError> {
        if !self.seen.insert(trace.mission_id) {
            return Err(FeedbackError::DuplicateFeedback(trace.mission_id));
        }
        for t in &trace.telemetry {
            registry.record_outcome(t.agent_id, t).expect("telemetry names registered agents");
        }
        Ok(update_priors(priors, trace, self.beta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::build_plan;
    use crate::prompt::{Modality, Priority, SubtaskSpec, TaskNode};
    use crate::registry::RegistryConfig;
    use crate::sim::{AgentSpec, GatewayMode, NodeGroup, Role, WorldConfig};

    fn agent(name: &str, kind: SubtaskKind, reliability: f64) -> AgentSpec {
        AgentSpec {
            name: name.into(),
            kind,
            input_modality: Modality::Video,
            output_modality: None,
            latency_ms_per_gflop: None,
            energy_j_per_gflop: None,
            accuracy: 1.0,
            field_reliability: reliability,
        }
    }

    /// Three static ground stations 100 m apart; host 0 carries a detector
    /// and a tracker, hosts 1 and 2 a detector each.
    fn world_config(reliability: [f64; 3]) -> WorldConfig {
        let mut cfg: WorldConfig = serde_json::from_str(
            r#"{"groups": [{"name": "g", "role": "ground", "count": 1}], "mobility": {"enabled": false},
                "link": {"base_latency_ms": 10, "gateway": {"mode": "always_up"}}}"#,
        )
        .unwrap();
        let mut groups = Vec::new();
        let kinds =
            [vec![SubtaskKind::Detect, SubtaskKind::Track], vec![SubtaskKind::Detect], vec![SubtaskKind::Detect]];
        for (h, ks) in kinds.iter().enumerate() {
            groups.push(NodeGroup {
                name: format!("g{h}"),
                role: Role::Ground,
                count: 1,
                positions: Some(vec![[100.0 * h as f64, 0.0]]),
                compute_gflops: 10.0,
                battery_j: 2000.0,
                radio_range_m: 600.0,
                bandwidth_mbps: 100.0,
                agents: ks.iter().map(|k| agent(k.as_str(), *k, reliability[h])).collect(),
            });
        }
        cfg.groups = groups;
        assert_eq!(cfg.link.gateway, GatewayMode::AlwaysUp);
        cfg
    }

    fn registry(cfg: &WorldConfig) -> AgentRegistry {
        let mut r = AgentRegistry::new(RegistryConfig::default());
        for p in cfg.roster() {
            r.register_agent(p).unwrap();
        }
        r
    }

    fn chain(deadline: u64, budget: f64) -> TaskGraph {
        let spec = |kind| SubtaskSpec {
            kind,
            input_modality: Modality::Video,
            output_modality: Modality::Video,
            workload_gflop: 5.0,
            payload_mb: 1.0,
        };
        TaskGraph::new(
            vec![
                TaskNode { node_id: NodeId(0), spec: spec(SubtaskKind::Track) },
                TaskNode { node_id: NodeId(1), spec: spec(SubtaskKind::Detect) },
            ],
            vec![(NodeId(0), NodeId(1))],
            ConstraintSet::new(deadline, budget, Priority::Normal).unwrap(),
        )
        .unwrap()
    }

    fn plan_for(graph: &TaskGraph, reg: &AgentRegistry, world: &World<SimEvent>, detect: u32) -> ExecutionPlan {
        let state = world.system_state();
        let ctx = PlanContext::at(0);
        let problem =
            PlanningProblem { graph, registry: reg, state: &state, context: &ctx, weights: CostWeights::default() };
        // agent 1 is the tracker on host 0
        build_plan(BTreeMap::from([(NodeId(0), AgentId(1)), (NodeId(1), AgentId(detect))]), &problem).unwrap()
    }

    #[test]
    fn clean_run_completes() {
        let cfg = world_config([1.0; 3]);
        let reg = registry(&cfg);
        let mut world = World::build(&cfg, 1).unwrap();
        let g = chain(5000, 500.0);
        let plan = plan_for(&g, &reg, &world, 2);
        let t = execute(&plan, &g, &mut world, &reg, 0, 7, Some(SubstitutionConfig::default()));
        assert!(t.completion, "{t:?}");
        assert_eq!(t.substitutions, 0);
        assert_eq!(t.abort_reason, None);
        // 500 ms track, 1 MB over one hop (80 + 10 ms), 500 ms detect
        assert!((t.completion_time_ms.unwrap() - 1090.0).abs() < 1e-9);
        assert_eq!(t.records.len(), 2);
        t.check_dependencies(&g).unwrap();
        assert_eq!(t.telemetry.len(), 2);
        assert!(t.telemetry.iter().all(|r| r.confidence == 1.0 && r.outcome == Outcome::Success));
    }

    #[test]
    fn stale_events_of_an_earlier_mission_are_ignored() {
        let cfg = world_config([1.0; 3]);
        let reg = registry(&cfg);
        let mut world = World::build(&cfg, 1).unwrap();
        // aborts at its 1 ms deadline with the tracker's ComputeDone queued
        let short = chain(1, 500.0);
        let plan = plan_for(&short, &reg, &world, 2);
        let t = execute(&plan, &short, &mut world, &reg, 0, 7, None);
        assert_eq!(t.abort_reason, Some(AbortReason::DeadlineExceeded));
        assert!(world.pending_events() > 0);
        let g = chain(5000, 500.0);
        let plan = plan_for(&g, &reg, &world, 2);
        let t = execute(&plan, &g, &mut world, &reg, 0, 7, None);
        assert!(t.completion, "{t:?}");
        t.check_dependencies(&g).unwrap();
        // the new tracker queues behind the abandoned one (busy until 500 ms)
        let track = t.record(NodeId(0)).unwrap();
        assert!(track.start_ms >= 500.0 - 1e-9);
    }

    #[test]
    fn scripted_failure_is_substituted() {
        // the detector on host 2 never succeeds
        let cfg = world_config([1.0, 1.0, 0.0]);
        let reg = registry(&cfg);
        let mut world = World::build(&cfg, 1).unwrap();
        let g = chain(5000, 500.0);
        let plan = plan_for(&g, &reg, &world, 3);
        let t = execute(&plan, &g, &mut world, &reg, 0, 7, Some(SubstitutionConfig::default()));
        assert!(t.completion, "{t:?}");
        assert_eq!(t.substitutions, 1);
        let r = t.record(NodeId(1)).unwrap();
        assert_eq!(r.substituted_from, Some(AgentId(3)));
        assert_ne!(r.agent_id, AgentId(3));
        assert!(t.record(NodeId(0)).unwrap().substituted_from.is_none());
        t.check_dependencies(&g).unwrap();
    }

    #[test]
    fn static_method_aborts_on_failure() {
        let cfg = world_config([1.0, 1.0, 0.0]);
        let reg = registry(&cfg);
        let mut world = World::build(&cfg, 1).unwrap();
        let g = chain(5000, 500.0);
        let plan = plan_for(&g, &reg, &world, 3);
        let t = execute(&plan, &g, &mut world, &reg, 0, 7, None);
        assert!(!t.completion);
        assert_eq!(t.abort_reason, Some(AbortReason::AgentFailed));
        assert_eq!(t.substitutions, 0);
        assert!(t.records.iter().all(|r| r.substituted_from.is_none()));
    }

    #[test]
    fn exhausted_candidates_abort() {
        let cfg = world_config([0.0; 3]);
        let reg = registry(&cfg);
        let mut world = World::build(&cfg, 1).unwrap();
        let g = chain(50_000, 500.0);
        let plan = plan_for(&g, &reg, &world, 3);
        let t = execute(&plan, &g, &mut world, &reg, 0, 7, Some(SubstitutionConfig::default()));
        assert_eq!(t.abort_reason, Some(AbortReason::NoFeasibleAgent));
        // the only tracker fails first and has no substitute
        assert_eq!(t.failures, 1);
        assert_eq!(t.substitutions, 0);
    }

    #[test]
    fn deadline_passes_mid_mission() {
        let cfg = world_config([1.0; 3]);
        let reg = registry(&cfg);
        let mut world = World::build(&cfg, 1).unwrap();
        let g = chain(700, 500.0);
        let plan = plan_for(&g, &reg, &world, 2);
        let t = execute(&plan, &g, &mut world, &reg, 0, 7, None);
        assert!(!t.completion);
        assert_eq!(t.abort_reason, Some(AbortReason::DeadlineExceeded));
        assert!(t.completion_time_ms.is_none());
    }

    #[test]
    fn budget_overrun_aborts() {
        let cfg = world_config([1.0; 3]);
        let reg = registry(&cfg);
        let mut world = World::build(&cfg, 1).unwrap();
        let g = chain(5000, 6.0);
        let plan = plan_for(&g, &reg, &world, 2);
        let t = execute(&plan, &g, &mut world, &reg, 0, 7, None);
        assert_eq!(t.abort_reason, Some(AbortReason::EnergyExhausted));
    }

    #[test]
    fn qos_boundaries() {
        let c = ConstraintSet::new(5000, 500.0, Priority::Normal).unwrap();
        assert_eq!(enforce_qos(4999.0, 0.0, &c), QosDecision::Continue);
        assert_eq!(enforce_qos(5000.0, 500.0, &c), QosDecision::Continue);
        assert_eq!(enforce_qos(5001.0, 0.0, &c), QosDecision::Abort(AbortReason::DeadlineExceeded));
        assert_eq!(enforce_qos(10.0, 501.0, &c), QosDecision::Abort(AbortReason::EnergyExhausted));
    }

    #[test]
    fn forced_substitute_choice() {
        let cfg = world_config([1.0; 3]);
        let reg = registry(&cfg);
        let world: World<SimEvent> = World::build(&cfg, 1).unwrap();
        let g = chain(5000, 500.0);
        let state = world.system_state();
        let keep = BTreeSet::from([NodeId(1)]);
        let ext = BTreeMap::from([(NodeId(1), vec![ExternalInput { site: 0, ready_ms: 0.0 }])]);
        let banned = BTreeMap::from([(NodeId(1), BTreeSet::from([AgentId(0), AgentId(3)]))]);
        let priors = PriorTable::new();
        let sc = SubstitutionConfig::default();
        let r = Replan {
            graph: &g,
            unexecuted: &keep,
            external_inputs: &ext,
            banned: &banned,
            state: &state,
            registry: &reg,
            priors: &priors,
            origin: 0,
            tx_j_per_mb: 0.5,
            cloud_result_mb: 0.1,
            constraints: *g.constraints(),
            config: &sc,
            seed: 3,
        };
        let plan = substitute(&r).unwrap();
        assert_eq!(plan.assignment, BTreeMap::from([(NodeId(1), AgentId(2))]));
        let banned = BTreeMap::from([(NodeId(1), BTreeSet::from([AgentId(0), AgentId(2), AgentId(3)]))]);
        assert_eq!(substitute(&Replan { banned: &banned, ..r }), Err(SubstituteError::NoFeasibleAgent(NodeId(1))));
    }

    #[test]
    fn feedback_counts_and_guards() {
        let cfg = world_config([1.0, 1.0, 0.0]);
        let mut reg = registry(&cfg);
        let mut world = World::build(&cfg, 1).unwrap();
        let g = chain(5000, 500.0);
        let plan = plan_for(&g, &reg, &world, 3);
        let t = execute(&plan, &g, &mut world, &reg, 0, 7, Some(SubstitutionConfig::default()));
        let outcomes: Vec<(AgentId, Outcome)> = t.telemetry.iter().map(|r| (r.agent_id, r.outcome)).collect();
        let mut fb = FeedbackLoop::new(0.1);
        let priors = fb.feedback(&t, &mut reg, &PriorTable::new()).unwrap();
        for (a, o) in &outcomes {
            let h = reg.history(*a).unwrap();
            assert_eq!(h.observations, 1);
            assert_eq!(h.ema_success, if *o == Outcome::Success { 1.0 } else { 0.0 });
            let r = if *o == Outcome::Success { 0.1 } else { -0.1 };
            assert!((priors.logit(reg.profile(*a).unwrap().kind, *a) - r).abs() < 1e-12);
        }
        assert_eq!(fb.feedback(&t, &mut reg, &priors), Err(FeedbackError::DuplicateFeedback(0)));
    }

    #[test]
    fn identical_inputs_identical_traces() {
        let cfg = world_config([0.7; 3]);
        let reg = registry(&cfg);
        let g = chain(5000, 500.0);
        let run = || {
            let mut world = World::build(&cfg, 4).unwrap();
            let plan = plan_for(&g, &reg, &world, 2);
            execute(&plan, &g, &mut world, &reg, 0, 11, Some(SubstitutionConfig::default()))
        };
        assert_eq!(run(), run());
    }
}
