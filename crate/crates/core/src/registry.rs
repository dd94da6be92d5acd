//! Agent registry: capability profiles, running performance history and
//! the linear matching score used to rank agents for a task node.

use crate::controller::{Outcome, TelemetryRecord};
use crate::prompt::{Modality, SubtaskKind, TaskNode};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Index of a node in the simulated world.
pub type HostId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("agent {0} already registered")]
    DuplicateAgentId(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("invalid profile for agent {0}: {1}")]
    InvalidProfile(AgentId, &'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: AgentId,
    pub name: String,
    pub kind: SubtaskKind,
    pub input_modality: Modality,
    pub output_modality: Modality,
    pub nominal_latency_ms_per_gflop: f64,
    pub energy_j_per_gflop: f64,
    pub accuracy: f64,
    pub host: HostId,
    /// Ground-truth field success factor used only by the simulator when
    /// drawing outcomes. Matching and planning never read it.
    #[serde(default = "one")]
    pub field_reliability: f64,
}

fn one() -> f64 {
    1.0
}

impl AgentProfile {
    pub fn validate(&self) -> Result<(), RegistryError> {
        let id = self.agent_id;
        if !(self.nominal_latency_ms_per_gflop.is_finite() && self.nominal_latency_ms_per_gflop > 0.0) {
            return Err(RegistryError::InvalidProfile(id, "nominal_latency_ms_per_gflop must be > 0"));
        }
        if !(self.energy_j_per_gflop.is_finite() && self.energy_j_per_gflop > 0.0) {
            return Err(RegistryError::InvalidProfile(id, "energy_j_per_gflop must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(RegistryError::InvalidProfile(id, "accuracy must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.field_reliability) {
            return Err(RegistryError::InvalidProfile(id, "field_reliability must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn serves(&self, node: &TaskNode) -> bool {
        self.kind == node.spec.kind && self.input_modality == node.spec.input_modality
    }
}

/// Exponential moving averages of observed behaviour. Latency is tracked
/// per GFLOP of workload so it transfers across nodes of different size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentHistory {
    pub ema_latency_ms_per_gflop: f64,
    pub ema_success: f64,
    pub observations: u64,
}

impl AgentHistory {
    fn uninitialized(profile: &AgentProfile) -> Self {
        Self { ema_latency_ms_per_gflop: profile.nominal_latency_ms_per_gflop, ema_success: 1.0, observations: 0 }
    }

    pub fn is_initialized(&self) -> bool {
        self.observations > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeState {
    pub available_compute_gflops: f64,
    pub battery_j: f64,
    pub queue_length: usize,
    /// Time until the node's compute FIFO drains.
    pub backlog_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub up: bool,
    /// One-way propagation latency summed over hops.
    pub latency_ms: f64,
    pub bandwidth_mbps: f64,
    pub hops: u8,
    /// Expected wait before the link can carry data (gateway outages).
    pub wait_ms: f64,
}

impl LinkState {
    pub const LOCAL: LinkState =
        LinkState { up: true, latency_ms: 0.0, bandwidth_mbps: f64::INFINITY, hops: 0, wait_ms: 0.0 };
    pub const DOWN: LinkState = LinkState { up: false, latency_ms: 0.0, bandwidth_mbps: 0.0, hops: 0, wait_ms: 0.0 };

    pub fn transfer_estimate_ms(&self, payload_mb: f64) -> Option<f64> {
        if !self.up {
            return None;
        }
        if self.hops == 0 {
            return Some(0.0);
        }
        let serialization = payload_mb * 8.0 / self.bandwidth_mbps * 1000.0;
        Some(self.wait_ms + self.latency_ms + f64::from(self.hops) * serialization)
    }
}

/// Snapshot of the resources the matcher and planner reason about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub timestamp_ms: f64,
    pub nodes: Vec<NodeState>,
    /// Dense `nodes.len()²` matrix, row = sender.
    pub links: Vec<LinkState>,
    pub cloud: Option<HostId>,
}

impl SystemState {
    /// Fully connected zero-latency state, handy for tests and oracles.
    pub fn uniform(host_count: usize, node: NodeState) -> Self {
        let mut links = vec![
            LinkState { up: true, latency_ms: 0.0, bandwidth_mbps: 100.0, hops: 1, wait_ms: 0.0 };
            host_count * host_count
        ];
        for h in 0..host_count {
            links[h * host_count + h] = LinkState::LOCAL;
        }
        Self { timestamp_ms: 0.0, nodes: vec![node; host_count], links, cloud: None }
    }

    pub fn link(&self, from: HostId, to: HostId) -> &LinkState {
        if from == to {
            return &LinkState::LOCAL;
        }
        self.links.get(from * self.nodes.len() + to).unwrap_or(&LinkState::DOWN)
    }

    pub fn link_mut(&mut self, from: HostId, to: HostId) -> &mut LinkState {
        let n = self.nodes.len();
        &mut self.links[from * n + to]
    }

    pub fn node(&self, host: HostId) -> NodeState {
        self.nodes.get(host).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    pub w_latency: f64,
    pub w_success: f64,
    pub w_accuracy: f64,
    pub w_queue: f64,
    pub latency_ref_ms: f64,
    pub queue_ref: f64,
    pub epsilon_ms: f64,
    pub ema_alpha: f64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            w_latency: 1.0,
            w_success: 1.0,
            w_accuracy: 1.0,
            w_queue: 0.5,
            latency_ref_ms: 100.0,
            queue_ref: 10.0,
            epsilon_ms: 1.0,
            ema_alpha: 0.2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentRegistry {
    profiles: BTreeMap<AgentId, AgentProfile>,
    history: BTreeMap<AgentId, AgentHistory>,
    config: RegistryConfig,
}

impl AgentRegistry {
    pub fn new(config: RegistryConfig) -> Self {
        Self { profiles: BTreeMap::new(), history: BTreeMap::new(), config }
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn register_agent(&mut self, profile: AgentProfile) -> Result<AgentId, RegistryError> {
        profile.validate()?;
        let id = profile.agent_id;
        if self.profiles.contains_key(&id) {
            return Err(RegistryError::DuplicateAgentId(id));
        }
        self.history.insert(id, AgentHistory::uninitialized(&profile));
        self.profiles.insert(id, profile);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn profile(&self, id: AgentId) -> Option<&AgentProfile> {
        self.profiles.get(&id)
    }

    pub fn history(&self, id: AgentId) -> Option<&AgentHistory> {
        self.history.get(&id)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &AgentProfile> {
        self.profiles.values()
    }

    /// Expected compute latency of `id` on a node of the given workload.
    pub fn expected_latency_ms(&self, id: AgentId, workload_gflop: f64) -> f64 {
        self.history[&id].ema_latency_ms_per_gflop * workload_gflop
    }

    pub fn score(&self, profile: &AgentProfile, node: &TaskNode, state: &SystemState) -> f64 {
        let c = &self.config;
        let h = &self.history[&profile.agent_id];
        let latency = (h.ema_latency_ms_per_gflop * node.spec.workload_gflop).max(c.epsilon_ms);
        let queue = state.node(profile.host).queue_length as f64;
        c.w_latency * (c.latency_ref_ms / latency) + c.w_success * h.ema_success + c.w_accuracy * profile.accuracy
            - c.w_queue * queue / c.queue_ref
    }

    /// Compatible agents on live hosts, best score first, ties by id.
    pub fn match_agents(&self, node: &TaskNode, state: &SystemState) -> Vec<(AgentId, f64)> {
        let mut ranked: Vec<(AgentId, f64)> = self
            .profiles
            .values()
            .filter(|p| p.serves(node) && state.node(p.host).battery_j > 0.0)
            .map(|p| (p.agent_id, self.score(p, node, state)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }

    pub fn record_outcome(&mut self, id: AgentId, telemetry: &TelemetryRecord) -> Result<AgentHistory, RegistryError> {
        let alpha = self.config.ema_alpha;
        let h = self.history.get_mut(&id).ok_or(RegistryError::UnknownAgent(id))?;
        let observed_latency = telemetry.latency_ms / telemetry.workload_gflop.max(f64::MIN_POSITIVE);
        let observed_success = if telemetry.outcome == Outcome::Success { 1.0 } else { 0.0 };
        if h.observations == 0 {
            h.ema_latency_ms_per_gflop = observed_latency;
            h.ema_success = observed_success;
        } else {
            h.ema_latency_ms_per_gflop = (1.0 - alpha) * h.ema_latency_ms_per_gflop + alpha * observed_latency;
            h.ema_success = ((1.0 - alpha) * h.ema_success + alpha * observed_success).clamp(0.0, 1.0);
        }
        h.observations += 1;
        Ok(*h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{NodeId, SubtaskSpec};
    use proptest::prelude::*;

    fn profile(id: u32, kind: SubtaskKind, modality: Modality, host: HostId) -> AgentProfile {
        AgentProfile {
            agent_id: AgentId(id),
            name: format!("agent-{id}"),
            kind,
            input_modality: modality,
            output_modality: modality,
            nominal_latency_ms_per_gflop: 100.0,
            energy_j_per_gflop: 1.0,
            accuracy: 0.9,
            host,
            field_reliability: 1.0,
        }
    }

    fn node(kind: SubtaskKind, modality: Modality, workload: f64) -> TaskNode {
        TaskNode {
            node_id: NodeId(0),
            spec: SubtaskSpec {
                kind,
                input_modality: modality,
                output_modality: modality,
                workload_gflop: workload,
                payload_mb: 1.0,
            },
        }
    }

    fn healthy(hosts: usize) -> SystemState {
        SystemState::uniform(
            hosts,
            NodeState { available_compute_gflops: 10.0, battery_j: 2000.0, queue_length: 0, backlog_ms: 0.0 },
        )
    }

    fn telemetry(latency: f64, outcome: Outcome) -> TelemetryRecord {
        TelemetryRecord {
            node_id: NodeId(0),
            kind: SubtaskKind::Detect,
            agent_id: AgentId(0),
            host: 0,
            workload_gflop: 1.0,
            latency_ms: latency,
            energy_j: 1.0,
            confidence: 0.9,
            comm_delay_ms: 0.0,
            outcome,
            finished_ms: 0.0,
        }
    }

    #[test]
    fn register_and_fetch() {
        let mut reg = AgentRegistry::default();
        let p = profile(1, SubtaskKind::Detect, Modality::Video, 0);
        assert_eq!(reg.register_agent(p.clone()), Ok(AgentId(1)));
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.profile(AgentId(1)), Some(&p));
        assert!(!reg.history(AgentId(1)).unwrap().is_initialized());
        assert_eq!(reg.register_agent(p), Err(RegistryError::DuplicateAgentId(AgentId(1))));
    }

    #[test]
    fn invalid_profile_rejected() {
        let mut p = profile(1, SubtaskKind::Detect, Modality::Video, 0);
        p.accuracy = 1.5;
        assert!(matches!(AgentRegistry::default().register_agent(p), Err(RegistryError::InvalidProfile(..))));
    }

    #[test]
    fn match_filters_modality() {
        let mut reg = AgentRegistry::default();
        reg.register_agent(profile(1, SubtaskKind::Detect, Modality::Video, 0)).unwrap();
        reg.register_agent(profile(2, SubtaskKind::Detect, Modality::Audio, 0)).unwrap();
        let m = reg.match_agents(&node(SubtaskKind::Detect, Modality::Video, 1.0), &healthy(1));
        assert_eq!(m.iter().map(|x| x.0).collect::<Vec<_>>(), vec![AgentId(1)]);
    }

    #[test]
    fn match_excludes_depleted_host() {
        let mut reg = AgentRegistry::default();
        reg.register_agent(profile(1, SubtaskKind::Detect, Modality::Video, 0)).unwrap();
        reg.register_agent(profile(2, SubtaskKind::Detect, Modality::Video, 1)).unwrap();
        let mut state = healthy(2);
        state.nodes[0].battery_j = 0.0;
        let m = reg.match_agents(&node(SubtaskKind::Detect, Modality::Video, 1.0), &state);
        assert_eq!(m.iter().map(|x| x.0).collect::<Vec<_>>(), vec![AgentId(2)]);
    }

    #[test]
    fn score_ranking_matches_hand_arithmetic() {
        // A: ema 40 ms, success 0.9 -> 100/40 + 0.9 + 0.9 = 4.3
        // B: ema 80 ms, success 1.0 -> 100/80 + 1.0 + 0.9 = 3.15
        let mut reg = AgentRegistry::default();
        reg.register_agent(profile(1, SubtaskKind::Detect, Modality::Video, 0)).unwrap();
        reg.register_agent(profile(2, SubtaskKind::Detect, Modality::Video, 0)).unwrap();
        reg.history
            .insert(AgentId(1), AgentHistory { ema_latency_ms_per_gflop: 40.0, ema_success: 0.9, observations: 3 });
        reg.history
            .insert(AgentId(2), AgentHistory { ema_latency_ms_per_gflop: 80.0, ema_success: 1.0, observations: 3 });
        let m = reg.match_agents(&node(SubtaskKind::Detect, Modality::Video, 1.0), &healthy(1));
        assert_eq!(m[0].0, AgentId(1));
        assert!((m[0].1 - 4.3).abs() < 1e-12);
        assert!((m[1].1 - 3.15).abs() < 1e-12);
    }

    #[test]
    fn queue_penalty_and_ties() {
        let mut reg = AgentRegistry::default();
        reg.register_agent(profile(3, SubtaskKind::Detect, Modality::Video, 0)).unwrap();
        reg.register_agent(profile(2, SubtaskKind::Detect, Modality::Video, 1)).unwrap();
        let mut state = healthy(2);
        let n = node(SubtaskKind::Detect, Modality::Video, 1.0);
        let m = reg.match_agents(&n, &state);
        assert_eq!(m[0].0, AgentId(2), "equal scores break ties by id");
        state.nodes[1].queue_length = 4;
        let m = reg.match_agents(&n, &state);
        assert_eq!(m[0].0, AgentId(3));
        assert!((m[0].1 - m[1].1 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ema_arithmetic() {
        let mut reg = AgentRegistry::default();
        reg.register_agent(profile(0, SubtaskKind::Detect, Modality::Video, 0)).unwrap();
        let h = reg.record_outcome(AgentId(0), &telemetry(55.0, Outcome::Success)).unwrap();
        assert_eq!((h.ema_latency_ms_per_gflop, h.ema_success, h.observations), (55.0, 1.0, 1));

        reg.history
            .insert(AgentId(0), AgentHistory { ema_latency_ms_per_gflop: 100.0, ema_success: 1.0, observations: 5 });
        let h = reg.record_outcome(AgentId(0), &telemetry(200.0, Outcome::Failure)).unwrap();
        assert!((h.ema_latency_ms_per_gflop - 120.0).abs() < 1e-12);
        assert!((h.ema_success - 0.8).abs() < 1e-12);
        assert_eq!(h.observations, 6);
    }

    #[test]
    fn unknown_agent_outcome() {
        let mut reg = AgentRegistry::default();
        assert_eq!(
            reg.record_outcome(AgentId(9), &telemetry(1.0, Outcome::Success)),
            Err(RegistryError::UnknownAgent(AgentId(9)))
        );
    }

    proptest! {
        #[test]
        fn ema_success_stays_in_unit_interval(outcomes in proptest::collection::vec(any::<bool>(), 1..200)) {
            let mut reg = AgentRegistry::default();
            reg.register_agent(profile(0, SubtaskKind::Detect, Modality::Video, 0)).unwrap();
            for ok in outcomes {
                let o = if ok { Outcome::Success } else { Outcome::Failure };
                let h = reg.record_outcome(AgentId(0), &telemetry(10.0, o)).unwrap();
                prop_assert!((0.0..=1.0).contains(&h.ema_success));
            }
        }

        #[test]
        fn constant_observations_converge_monotonically(v in 1.0f64..1000.0, start in 1.0f64..1000.0, n in 2usize..60) {
            let mut reg = AgentRegistry::default();
            reg.register_agent(profile(0, SubtaskKind::Detect, Modality::Video, 0)).unwrap();
            reg.history.insert(AgentId(0), AgentHistory { ema_latency_ms_per_gflop: start, ema_success: 0.5, observations: 1 });
            let mut gap = (start - v).abs();
            let mut sgap = 0.5;
            for _ in 0..n {
                let h = reg.record_outcome(AgentId(0), &telemetry(v, Outcome::Success)).unwrap();
                let g = (h.ema_latency_ms_per_gflop - v).abs();
                prop_assert!(g <= gap + 1e-9);
                prop_assert!(1.0 - h.ema_success <= sgap + 1e-12);
                gap = g;
                sgap = 1.0 - h.ema_success;
            }
        }

        #[test]
        fn matches_never_mismatch(
            agents in proptest::collection::vec((0usize..7, 0usize..4, 0usize..3, 0.0f64..1.0), 0..20),
            kind in 0usize..7, modality in 0usize..4,
        ) {
            let modalities = [Modality::Video, Modality::Telemetry, Modality::Audio, Modality::Fused];
            let mut reg = AgentRegistry::default();
            for (i, (k, m, host, acc)) in agents.iter().enumerate() {
                let mut p = profile(i as u32, SubtaskKind::ALL[*k], modalities[*m], *host);
                p.accuracy = *acc;
                reg.register_agent(p).unwrap();
            }
            let mut state = healthy(3);
            state.nodes[2].battery_j = 0.0;
            let n = node(SubtaskKind::ALL[kind], modalities[modality], 2.0);
            let m = reg.match_agents(&n, &state);
            let expected = reg.profiles().filter(|p| p.serves(&n) && p.host != 2).count();
            prop_assert_eq!(m.len(), expected);
            for w in m.windows(2) {
                prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
            }
            for (id, _) in &m {
                let p = reg.profile(*id).unwrap();
                prop_assert!(p.kind == n.spec.kind && p.input_modality == n.spec.input_modality);
            }
            prop_assert_eq!(m, reg.match_agents(&n, &state));
        }
    }
}
