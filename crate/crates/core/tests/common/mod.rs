//! Generators and independent oracles shared by the integration tests.
//! Nothing here calls into the planner's evaluator or the graph validators;
//! the oracles re-derive everything from the public data structures.
#![allow(dead_code)]

use p2aecf::controller::{ExecutionTrace, Outcome};
use p2aecf::planner::{CostWeights, ExecutionPlan, PlanContext, PlanningProblem};
use p2aecf::prompt::{ConstraintSet, Modality, NodeId, Priority, SubtaskKind, SubtaskSpec, TaskGraph, TaskNode};
use p2aecf::registry::{
    AgentId, AgentProfile, AgentRegistry, HostId, LinkState, NodeState, RegistryConfig, SystemState,
};
use p2aecf::sim::{AgentSpec, CloudConfig, GatewayMode, NodeGroup, Role, WorldConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};

pub const MODALITIES: [Modality; 4] = [Modality::Video, Modality::Telemetry, Modality::Audio, Modality::Fused];

pub fn spec(kind: SubtaskKind, modality: Modality, workload_gflop: f64, payload_mb: f64) -> SubtaskSpec {
    SubtaskSpec { kind, input_modality: modality, output_modality: modality, workload_gflop, payload_mb }
}

pub fn constraints(deadline_ms: u64, budget_j: f64) -> ConstraintSet {
    ConstraintSet::new(deadline_ms, budget_j, Priority::Normal).unwrap()
}

/// Random DAG over `n` nodes with scattered ids. Edges only run forward in a
/// hidden random rank, each present with probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64, specs: &mut dyn FnMut(&mut R) -> SubtaskSpec) -> TaskGraph {
    let mut ids: Vec<usize> = (0..3 * n.max(1)).collect();
    ids.shuffle(rng);
    ids.truncate(n);
    let nodes: Vec<TaskNode> = ids.iter().map(|&id| TaskNode { node_id: NodeId(id), spec: specs(rng) }).collect();
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                edges.push((NodeId(ids[rank[a]]), NodeId(ids[rank[b]])));
            }
        }
    }
    edges.shuffle(rng);
    let deadline = rng.gen_range(500..8000);
    let budget = rng.gen_range(5.0..200.0);
    TaskGraph::new(nodes, edges, constraints(deadline, budget)).expect("forward edges form a DAG")
}

/// Video-modality node with a random kind.
pub fn video_spec<R: Rng>(rng: &mut R) -> SubtaskSpec {
    let kind = SubtaskKind::ALL[rng.gen_range(0..SubtaskKind::ALL.len())];
    spec(kind, Modality::Video, rng.gen_range(1.0..20.0), rng.gen_range(0.0..4.0))
}

/// A self-contained planning instance. Every node has its own
/// (kind, modality) pair, so its candidates are exactly the agents created
/// for it.
pub struct Instance {
    pub graph: TaskGraph,
    pub registry: AgentRegistry,
    pub state: SystemState,
    pub context: PlanContext,
    pub weights: CostWeights,
}

impl Instance {
    pub fn problem(&self) -> PlanningProblem<'_> {
        PlanningProblem {
            graph: &self.graph,
            registry: &self.registry,
            state: &self.state,
            context: &self.context,
            weights: self.weights,
        }
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, max_nodes: usize, max_candidates: usize) -> Instance {
    let hosts = rng.gen_range(2..=5);
    let mut pairs: Vec<(SubtaskKind, Modality)> =
        SubtaskKind::ALL.iter().flat_map(|k| MODALITIES.iter().map(move |m| (*k, *m))).collect();
    pairs.shuffle(rng);
    let n = rng.gen_range(1..=max_nodes);
    let mut next = 0;
    let graph = random_dag(rng, n, 0.4, &mut |r: &mut R| {
        let (k, m) = pairs[next];
        next += 1;
        spec(k, m, r.gen_range(1.0..10.0), r.gen_range(0.0..5.0))
    });
    let mut registry = AgentRegistry::new(RegistryConfig::default());
    let mut id = 0u32;
    for node in graph.nodes() {
        for _ in 0..rng.gen_range(1..=max_candidates) {
            registry
                .register_agent(AgentProfile {
                    agent_id: AgentId(id),
                    name: format!("a{id}"),
                    kind: node.spec.kind,
                    input_modality: node.spec.input_modality,
                    output_modality: node.spec.output_modality,
                    nominal_latency_ms_per_gflop: rng.gen_range(20.0..300.0),
                    energy_j_per_gflop: rng.gen_range(0.1..4.0),
                    accuracy: rng.gen_range(0.6..1.0),
                    host: rng.gen_range(0..hosts),
                    field_reliability: 1.0,
                })
                .unwrap();
            id += 1;
        }
    }
    let mut state = SystemState::uniform(
        hosts,
        NodeState { available_compute_gflops: 10.0, battery_j: 2000.0, queue_length: 0, backlog_ms: 0.0 },
    );
    for h in 0..hosts {
        state.nodes[h].backlog_ms = if rng.gen_bool(0.3) { rng.gen_range(0.0..800.0) } else { 0.0 };
        state.nodes[h].queue_length = rng.gen_range(0..4);
    }
    if hosts > 2 && rng.gen_bool(0.4) {
        state.cloud = Some(hosts - 1);
    }
    for a in 0..hosts {
        for b in 0..hosts {
            if a == b {
                continue;
            }
            let via_cloud = state.cloud == Some(a) || state.cloud == Some(b);
            // the origin reaches every host so no candidate is filtered out
            let up = a == 0 || b == 0 || !rng.gen_bool(0.15);
            *state.link_mut(a, b) = if up {
                LinkState {
                    up: true,
                    latency_ms: rng.gen_range(5.0..400.0),
                    bandwidth_mbps: rng.gen_range(10.0..200.0),
                    hops: if via_cloud { 1 } else { rng.gen_range(1..=2) },
                    wait_ms: if via_cloud { rng.gen_range(0.0..500.0) } else { 0.0 },
                }
            } else {
                LinkState::DOWN
            };
        }
    }
    let context = PlanContext { origin: 0, external_inputs: BTreeMap::new(), tx_j_per_mb: 0.5, cloud_result_mb: 0.1 };
    Instance { graph, registry, state, context, weights: CostWeights::default() }
}

/// Candidate agents per node position, straight from the profiles.
pub fn compatible(graph: &TaskGraph, registry: &AgentRegistry) -> Vec<Vec<AgentId>> {
    graph
        .nodes()
        .iter()
        .map(|n| {
            registry
                .profiles()
                .filter(|p| p.kind == n.spec.kind && p.input_modality == n.spec.input_modality)
                .map(|p| p.agent_id)
                .collect()
        })
        .collect()
}

/// Every combination of one candidate per position.
pub fn enumerate(candidates: &[Vec<AgentId>]) -> Vec<Vec<AgentId>> {
    let mut out: Vec<Vec<AgentId>> = vec![vec![]];
    for cands in candidates {
        out = out.iter().flat_map(|prefix| cands.iter().map(move |a| [prefix.clone(), vec![*a]].concat())).collect();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCost {
    pub makespan_ms: f64,
    pub energy_j: f64,
    pub utility: f64,
    pub disconnects: usize,
    pub total: f64,
}

fn oracle_topo(graph: &TaskGraph) -> Vec<usize> {
    let n = graph.len();
    let pos: BTreeMap<NodeId, usize> = graph.nodes().iter().enumerate().map(|(i, x)| (x.node_id, i)).collect();
    let mut indeg = vec![0usize; n];
    for (_, b) in graph.edges() {
        indeg[pos[b]] += 1;
    }
    let mut done = vec![false; n];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let next =
            (0..n).filter(|&i| !done[i] && indeg[i] == 0).min_by_key(|&i| graph.nodes()[i].node_id).expect("acyclic");
        done[next] = true;
        out.push(next);
        for (a, b) in graph.edges() {
            if pos[a] == next {
                indeg[pos[b]] -= 1;
            }
        }
    }
    out
}

/// Independent re-derivation of the plan objective: list schedule in
/// smallest-id topological order, one job at a time per host, transfers
/// priced per hop, cloud results shipped back to the origin.
pub fn oracle_cost(problem: &PlanningProblem, assignment: &BTreeMap<NodeId, AgentId>) -> OracleCost {
    let g = problem.graph;
    let st = problem.state;
    let ctx = problem.context;
    let pos: BTreeMap<NodeId, usize> = g.nodes().iter().enumerate().map(|(i, x)| (x.node_id, i)).collect();
    let mut preds: Vec<Vec<usize>> = vec![vec![]; g.len()];
    for (a, b) in g.edges() {
        preds[pos[b]].push(pos[a]);
    }
    let mut finish = vec![0.0f64; g.len()];
    let mut site = vec![0usize; g.len()];
    let mut free: BTreeMap<HostId, f64> = BTreeMap::new();
    let (mut energy, mut utility, mut disconnects) = (0.0, 1.0, 0usize);
    let mut ship = |from: HostId, to: HostId, mb: f64, energy: &mut f64| -> f64 {
        if from == to {
            return 0.0;
        }
        let l = st.link(from, to);
        if !l.up {
            disconnects += 1;
            return 0.0;
        }
        *energy += ctx.tx_j_per_mb * mb * f64::from(l.hops);
        l.wait_ms + l.latency_ms + f64::from(l.hops) * mb * 8000.0 / l.bandwidth_mbps
    };
    for i in oracle_topo(g) {
        let node = &g.nodes()[i];
        let agent = assignment[&node.node_id];
        let p = problem.registry.profile(agent).unwrap();
        let h = problem.registry.history(agent).unwrap();
        let mb = node.spec.payload_mb;
        let ext = ctx.external_inputs.get(&node.node_id).cloned().unwrap_or_default();
        let mut ready: f64 = 0.0;
        if preds[i].is_empty() && ext.is_empty() {
            ready = ship(ctx.origin, p.host, mb, &mut energy);
        }
        for &q in &preds[i] {
            ready = ready.max(finish[q] + ship(site[q], p.host, mb, &mut energy));
        }
        for e in &ext {
            ready = ready.max(e.ready_ms.max(0.0) + ship(e.site, p.host, mb, &mut energy));
        }
        let busy = free.entry(p.host).or_insert(st.node(p.host).backlog_ms);
        let start = ready.max(*busy);
        let compute = h.ema_latency_ms_per_gflop * node.spec.workload_gflop;
        *busy = start + compute;
        finish[i] = start + compute;
        energy += p.energy_j_per_gflop * node.spec.workload_gflop;
        utility *= p.accuracy * h.ema_success;
        if st.cloud == Some(p.host) {
            finish[i] += ship(p.host, ctx.origin, ctx.cloud_result_mb, &mut energy);
            site[i] = ctx.origin;
        } else {
            site[i] = p.host;
        }
    }
    let makespan = finish.iter().copied().fold(0.0, f64::max);
    let w = problem.weights;
    let c = g.constraints();
    let (deadline, budget) = (c.deadline_ms as f64, c.energy_budget_j);
    let (ls, es) = if w.normalize { (deadline, budget) } else { (1.0, 1.0) };
    let total = w.w_latency * makespan / ls
        + w.w_energy * energy / es
        + w.w_utility * (1.0 - utility)
        + w.p_deadline * (makespan - deadline).max(0.0) / ls
        + w.p_energy * (energy - budget).max(0.0) / es
        + w.p_disconnect * disconnects as f64;
    OracleCost { makespan_ms: makespan, energy_j: energy, utility, disconnects, total }
}

/// Exhaustive optimum over the given candidate lists.
pub fn brute_force(problem: &PlanningProblem, candidates: &[Vec<AgentId>]) -> (BTreeMap<NodeId, AgentId>, f64) {
    let ids: Vec<NodeId> = problem.graph.nodes().iter().map(|n| n.node_id).collect();
    enumerate(candidates)
        .into_iter()
        .map(|choice| {
            let a: BTreeMap<NodeId, AgentId> = ids.iter().copied().zip(choice).collect();
            let c = oracle_cost(problem, &a).total;
            (a, c)
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("at least one assignment")
}

/// Assignment covers every node exactly once with a compatible registered
/// agent, and the order lists every node once with all predecessors first.
pub fn validate_plan(plan: &ExecutionPlan, graph: &TaskGraph, registry: &AgentRegistry) -> Result<(), String> {
    let ids: BTreeSet<NodeId> = graph.nodes().iter().map(|n| n.node_id).collect();
    let assigned: BTreeSet<NodeId> = plan.assignment.keys().copied().collect();
    if ids != assigned {
        return Err(format!("assignment covers {assigned:?}, graph has {ids:?}"));
    }
    for node in graph.nodes() {
        let a = plan.assignment[&node.node_id];
        let p = registry.profile(a).ok_or_else(|| format!("{a:?} is not registered"))?;
        if p.kind != node.spec.kind || p.input_modality != node.spec.input_modality {
            return Err(format!("{a:?} cannot serve {}", node.node_id));
        }
    }
    let at: BTreeMap<NodeId, usize> = plan.order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    if plan.order.len() != ids.len() || at.len() != ids.len() || at.keys().copied().collect::<BTreeSet<_>>() != ids {
        return Err(format!("order {:?} is not a permutation of the nodes", plan.order));
    }
    for (a, b) in graph.edges() {
        if at[a] >= at[b] {
            return Err(format!("order puts {b} before its predecessor {a}"));
        }
    }
    Ok(())
}

/// No node starts before all its inputs arrived, no input leaves before its
/// producer finished, and a completed trace finished every node in time.
pub fn validate_trace(trace: &ExecutionTrace, graph: &TaskGraph) -> Result<(), String> {
    let rec: BTreeMap<NodeId, _> = trace.records.iter().map(|r| (r.node_id, r)).collect();
    if rec.len() != trace.records.len() {
        return Err("duplicate node records".into());
    }
    for r in &trace.records {
        if graph.node(r.node_id).is_none() {
            return Err(format!("record for unknown node {}", r.node_id));
        }
        if r.start_ms < trace.dispatch_ms || r.finish_ms < r.start_ms {
            return Err(format!("{} has an inverted interval", r.node_id));
        }
    }
    for (a, b) in graph.edges() {
        let Some(succ) = rec.get(b) else { continue };
        let pred = rec.get(a).ok_or_else(|| format!("{b} ran but {a} never did"))?;
        if !pred.succeeded {
            return Err(format!("{b} ran on the output of failed {a}"));
        }
        let input =
            succ.inputs.iter().find(|x| x.from == Some(*a)).ok_or_else(|| format!("{b} lacks its input from {a}"))?;
        if input.sent_ms < pred.finish_ms {
            return Err(format!("{a} -> {b} shipped at {} before {a} finished at {}", input.sent_ms, pred.finish_ms));
        }
        if input.arrival_ms < input.sent_ms + input.transfer_ms || succ.start_ms < input.arrival_ms {
            return Err(format!("{b} started at {} before input from {a} arrived", succ.start_ms));
        }
    }
    for t in &trace.telemetry {
        if t.outcome == Outcome::Success && !rec.contains_key(&t.node_id) {
            return Err(format!("success reported for {} without a record", t.node_id));
        }
    }
    if trace.completion {
        if trace.records.len() != graph.len() || trace.records.iter().any(|r| !r.succeeded) {
            return Err("completed trace with unfinished nodes".into());
        }
        let t = trace.completion_time_ms.ok_or("completed trace without a makespan")?;
        if t > trace.deadline_ms as f64 {
            return Err(format!("completed trace took {t} ms past a {} ms deadline", trace.deadline_ms));
        }
        let last = trace.records.iter().map(|r| r.finish_ms).fold(0.0, f64::max);
        if last > trace.dispatch_ms + t + 1e-9 {
            return Err("a node finished after the reported makespan".into());
        }
    }
    Ok(())
}

fn all_kinds(accuracy: f64, reliability: f64) -> Vec<AgentSpec> {
    SubtaskKind::ALL
        .iter()
        .map(|k| AgentSpec {
            name: k.as_str().into(),
            kind: *k,
            input_modality: Modality::Video,
            output_modality: None,
            latency_ms_per_gflop: None,
            energy_j_per_gflop: None,
            accuracy,
            field_reliability: reliability,
        })
        .collect()
}

/// Mixed fleet where every host serves every kind on video input: four
/// ground stations, six roaming AAVs and an intermittently reachable cloud.
pub fn mission_world(battery_j: f64, reliability: f64) -> WorldConfig {
    let mut cfg: WorldConfig = serde_json::from_str(r#"{"groups": [], "grid_extent_m": 1500}"#).unwrap();
    cfg.groups = vec![
        NodeGroup {
            name: "gs".into(),
            role: Role::Ground,
            count: 4,
            positions: Some(vec![[300.0, 300.0], [1200.0, 300.0], [300.0, 1200.0], [1200.0, 1200.0]]),
            compute_gflops: 20.0,
            battery_j,
            radio_range_m: 1000.0,
            bandwidth_mbps: 100.0,
            agents: all_kinds(0.95, reliability),
        },
        NodeGroup {
            name: "aav".into(),
            role: Role::Aav,
            count: 6,
            positions: None,
            compute_gflops: 8.0,
            battery_j,
            radio_range_m: 700.0,
            bandwidth_mbps: 50.0,
            agents: all_kinds(0.9, reliability),
        },
    ];
    cfg.cloud = Some(CloudConfig { compute_gflops: 50.0, agents: all_kinds(0.97, reliability) });
    cfg.link.gateway = GatewayMode::Intermittent { mean_up_ms: 4000.0, mean_down_ms: 1500.0 };
    cfg.link.base_latency_ms = 20.0;
    cfg.relay = true;
    cfg
}

pub fn registry_for(cfg: &WorldConfig) -> AgentRegistry {
    let mut r = AgentRegistry::new(RegistryConfig::default());
    for p in cfg.roster() {
        r.register_agent(p).unwrap();
    }
    r
}

/// Path to a file under the crate's data directory.
pub fn data(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}
