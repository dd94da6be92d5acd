//! Deterministic discrete-event model of a low-altitude network: mobile
//! AAVs and static ground stations on a square grid, range-limited direct
//! links, an optional cloud behind an intermittent gateway, per-node FIFO
//! compute and integer-exact energy accounting.

pub mod events;
pub mod mobility;

pub use events::{Event, EventKind, EventQueue};
pub use mobility::{Vec2, Waypoint};

use crate::prompt::{Modality, SubtaskKind};
use crate::registry::{AgentId, AgentProfile, HostId, LinkState, NodeState, SystemState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRID_EXTENT_M: f64 = 2000.0;
const MICRO: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("host {0} is depleted")]
    HostDepleted(HostId),
    #[error("no route from {0} to {1}")]
    Disconnected(HostId, HostId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Aav,
    Ground,
    Cloud,
}

fn d_grid() -> f64 {
    GRID_EXTENT_M
}
fn d_compute() -> f64 {
    10.0
}
fn d_battery() -> f64 {
    2000.0
}
fn d_range() -> f64 {
    600.0
}
fn d_bandwidth() -> f64 {
    100.0
}
fn d_true() -> bool {
    true
}
fn d_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    pub kind: SubtaskKind,
    pub input_modality: Modality,
    #[serde(default)]
    pub output_modality: Option<Modality>,
    /// Defaults to the host's `1000 / compute_gflops`.
    #[serde(default)]
    pub latency_ms_per_gflop: Option<f64>,
    /// Defaults to the world's compute energy price.
    #[serde(default)]
    pub energy_j_per_gflop: Option<f64>,
    pub accuracy: f64,
    #[serde(default = "d_one")]
    pub field_reliability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeGroup {
    pub name: String,
    pub role: Role,
    pub count: usize,
    /// Explicit positions (one per node); seeded-uniform placement otherwise.
    #[serde(default)]
    pub positions: Option<Vec<[f64; 2]>>,
    #[serde(default = "d_compute")]
    pub compute_gflops: f64,
    #[serde(default = "d_battery")]
    pub battery_j: f64,
    #[serde(default = "d_range")]
    pub radio_range_m: f64,
    #[serde(default = "d_bandwidth")]
    pub bandwidth_mbps: f64,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    #[serde(default = "d_cloud_compute")]
    pub compute_gflops: f64,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
}

fn d_cloud_compute() -> f64 {
    100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub enabled: bool,
    pub min_speed_mps: f64,
    pub max_speed_mps: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self { enabled: true, min_speed_mps: 5.0, max_speed_mps: 15.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GatewayMode {
    Intermittent { mean_up_ms: f64, mean_down_ms: f64 },
    AlwaysUp,
    AlwaysDown,
}

impl Default for GatewayMode {
    fn default() -> Self {
        GatewayMode::Intermittent { mean_up_ms: 10_000.0, mean_down_ms: 2_000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    /// One-way latency added to every hop (the sweep variable).
    pub base_latency_ms: f64,
    pub gateway_bandwidth_mbps: f64,
    pub gateway: GatewayMode,
    /// Size of a cloud result downloaded back to the mission origin.
    pub cloud_result_mb: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            base_latency_ms: 10.0,
            gateway_bandwidth_mbps: 100.0,
            gateway: GatewayMode::default(),
            cloud_result_mb: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyPricing {
    pub compute_j_per_gflop: f64,
    pub tx_j_per_mb: f64,
}

impl Default for EnergyPricing {
    fn default() -> Self {
        Self { compute_j_per_gflop: 1.0, tx_j_per_mb: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostFailureSpec {
    pub host: HostId,
    pub at_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    #[serde(default = "d_grid")]
    pub grid_extent_m: f64,
    pub groups: Vec<NodeGroup>,
    #[serde(default)]
    pub cloud: Option<CloudConfig>,
    #[serde(default)]
    pub mobility: MobilityConfig,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub energy: EnergyPricing,
    /// Allow single-relay routes when no direct link exists.
    #[serde(default)]
    pub relay: bool,
    #[serde(default)]
    pub host_failures: Vec<HostFailureSpec>,
    #[serde(default = "d_true")]
    pub record_log: bool,
}

impl WorldConfig {
    /// Host ids assigned to each group's nodes, in declaration order; the
    /// cloud (if any) follows the last group.
    pub fn host_count(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum::<usize>() + usize::from(self.cloud.is_some())
    }

    pub fn hosts_with_role(&self, role: Role) -> Vec<HostId> {
        let mut out = Vec::new();
        let mut h = 0;
        for g in &self.groups {
            for _ in 0..g.count {
                if g.role == role {
                    out.push(h);
                }
                h += 1;
            }
        }
        if role == Role::Cloud && self.cloud.is_some() {
            out.push(h);
        }
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |s: &str| Err(SimError::Config(s.to_string()));
        if !(self.grid_extent_m.is_finite() && self.grid_extent_m > 0.0) {
            return err("grid_extent_m must be > 0");
        }
        if self.groups.is_empty() {
            return err("groups must not be empty");
        }
        for g in &self.groups {
            if g.role == Role::Cloud {
                return err("cloud nodes are declared in the `cloud` section");
            }
            if let Some(ps) = &g.positions {
                if ps.len() != g.count {
                    return Err(SimError::Config(format!("group `{}`: positions length != count", g.name)));
                }
                if ps.iter().any(|p| !Vec2::new(p[0], p[1]).within(self.grid_extent_m)) {
                    return err("position out of grid");
                }
            }
            for (v, name) in [
                (g.compute_gflops, "compute_gflops"),
                (g.radio_range_m, "radio_range_m"),
                (g.bandwidth_mbps, "bandwidth_mbps"),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(SimError::Config(format!("group `{}`: {name} must be > 0", g.name)));
                }
            }
            if !(g.battery_j.is_finite() && g.battery_j >= 0.0) {
                return Err(SimError::Config(format!("group `{}`: battery_j must be >= 0", g.name)));
            }
        }
        if let Some(c) = &self.cloud {
            if !(c.compute_gflops.is_finite() && c.compute_gflops > 0.0) {
                return err("cloud.compute_gflops must be > 0");
            }
        }
        let m = &self.mobility;
        if !(m.min_speed_mps >= 0.0 && m.max_speed_mps >= m.min_speed_mps && m.max_speed_mps.is_finite()) {
            return err("mobility speeds must satisfy 0 <= min <= max");
        }
        let l = &self.link;
        if !(l.base_latency_ms.is_finite() && l.base_latency_ms >= 0.0) {
            return err("link.base_latency_ms must be >= 0");
        }
        if !(l.gateway_bandwidth_mbps.is_finite() && l.gateway_bandwidth_mbps > 0.0) {
            return err("link.gateway_bandwidth_mbps must be > 0");
        }
        if !(l.cloud_result_mb.is_finite() && l.cloud_result_mb >= 0.0) {
            return err("link.cloud_result_mb must be >= 0");
        }
        if let GatewayMode::Intermittent { mean_up_ms, mean_down_ms } = l.gateway {
            if !(mean_up_ms.is_finite() && mean_up_ms > 0.0 && mean_down_ms.is_finite() && mean_down_ms > 0.0) {
                return err("gateway dwell means must be > 0");
            }
        }
        let e = &self.energy;
        if !(e.compute_j_per_gflop.is_finite()
            && e.compute_j_per_gflop > 0.0
            && e.tx_j_per_mb.is_finite()
            && e.tx_j_per_mb >= 0.0)
        {
            return err("energy pricing must be positive");
        }
        let hosts = self.host_count();
        for f in &self.host_failures {
            if f.host >= hosts || !(f.at_ms.is_finite() && f.at_ms >= 0.0) {
                return err("host_failures entry out of range");
            }
        }
        Ok(())
    }

    /// Agent profiles for every node, ids assigned in declaration order.
    pub fn roster(&self) -> Vec<AgentProfile> {
        let mut out = Vec::new();
        let mut next = 0u32;
        let mut push = |spec: &AgentSpec, host: HostId, gflops: f64, label: String| {
            out.push(AgentProfile {
                agent_id: AgentId(next),
                name: label,
                kind: spec.kind,
                input_modality: spec.input_modality,
                output_modality: spec.output_modality.unwrap_or(spec.input_modality),
                nominal_latency_ms_per_gflop: spec.latency_ms_per_gflop.unwrap_or(1000.0 / gflops),
                energy_j_per_gflop: spec.energy_j_per_gflop.unwrap_or(self.energy.compute_j_per_gflop),
                accuracy: spec.accuracy,
                host,
                field_reliability: spec.field_reliability,
            });
            next += 1;
        };
        let mut host = 0;
        for g in &self.groups {
            for i in 0..g.count {
                for spec in &g.agents {
                    push(spec, host, g.compute_gflops, format!("{}-{}/{}", g.name, i, spec.name));
                }
                host += 1;
            }
        }
        if let Some(c) = &self.cloud {
            for spec in &c.agents {
                push(spec, host, c.compute_gflops, format!("cloud/{}", spec.name));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimNode {
    pub id: HostId,
    pub role: Role,
    pub motion: Waypoint,
    pub compute_gflops: f64,
    pub radio_range_m: f64,
    pub bandwidth_mbps: f64,
    initial_uj: i64,
    battery_uj: i64,
    consumed_uj: i64,
    failed_at_ms: Option<f64>,
    busy_until_ms: f64,
    reservations: Vec<f64>,
}

impl SimNode {
    pub fn position(&self) -> Vec2 {
        self.motion.position
    }

    pub fn battery_j(&self) -> f64 {
        self.battery_uj as f64 / MICRO
    }

    pub fn initial_battery_j(&self) -> f64 {
        self.initial_uj as f64 / MICRO
    }

    pub fn battery_uj(&self) -> i64 {
        self.battery_uj
    }

    pub fn initial_uj(&self) -> i64 {
        self.initial_uj
    }

    /// Sum of every amount actually drawn from this node.
    pub fn consumed_uj(&self) -> i64 {
        self.consumed_uj
    }

    pub fn failed_at_ms(&self) -> Option<f64> {
        self.failed_at_ms
    }

    pub fn is_alive(&self) -> bool {
        self.failed_at_ms.is_none() && self.battery_uj > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time_ms: f64,
    pub seq: u64,
    pub tag: String,
}

#[derive(Debug, Clone)]
struct Gateway {
    mode: GatewayMode,
    up: bool,
    next_toggle_ms: f64,
    rng: ChaCha8Rng,
}

impl Gateway {
    fn dwell(&mut self, up: bool) -> f64 {
        match self.mode {
            GatewayMode::Intermittent { mean_up_ms, mean_down_ms } => {
                let mean = if up { mean_up_ms } else { mean_down_ms };
                let u: f64 = self.rng.gen_range(f64::EPSILON..1.0);
                -mean * u.ln()
            }
            _ => f64::INFINITY,
        }
    }
}

/// Derives an independent stream seed from a base seed and a stream label.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hop sequence between two hosts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Route {
    pub hops: u8,
    pub via_gateway: bool,
    pub bandwidth_mbps: f64,
}

/// Serialization plus propagation time for a payload over one hop.
pub fn transfer_ms(payload_mb: f64, bandwidth_mbps: f64, base_latency_ms: f64) -> f64 {
    payload_mb * 8.0 / bandwidth_mbps * 1000.0 + base_latency_ms
}

pub fn compute_ms(workload_gflop: f64, compute_gflops: f64) -> f64 {
    workload_gflop / compute_gflops * 1000.0
}

pub struct World<P> {
    config: WorldConfig,
    nodes: Vec<SimNode>,
    cloud: Option<HostId>,
    clock_ms: f64,
    moved_to_ms: f64,
    queue: EventQueue<P>,
    gateway: Gateway,
    mobility_rngs: Vec<ChaCha8Rng>,
    log: Vec<LogEntry>,
}

impl<P> World<P> {
    pub fn build(config: &WorldConfig, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let extent = config.grid_extent_m;
        let speeds = (config.mobility.min_speed_mps, config.mobility.max_speed_mps);
        let mut placement = ChaCha8Rng::seed_from_u64(stream_seed(seed, 1));
        let mut nodes = Vec::with_capacity(config.host_count());
        let mut mobility_rngs = Vec::with_capacity(config.host_count());
        for g in &config.groups {
            for i in 0..g.count {
                let id = nodes.len();
                let position = match &g.positions {
                    Some(ps) => Vec2::new(ps[i][0], ps[i][1]),
                    None => Vec2::new(placement.gen_range(0.0..=extent), placement.gen_range(0.0..=extent)),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 1000 + id as u64));
                let mobile = g.role == Role::Aav && config.mobility.enabled;
                let motion = if mobile {
                    Waypoint {
                        position,
                        target: Vec2::new(rng.gen_range(0.0..=extent), rng.gen_range(0.0..=extent)),
                        speed_mps: mobility::draw_speed(speeds, &mut rng),
                    }
                } else {
                    Waypoint { position, target: position, speed_mps: 0.0 }
                };
                let uj = (g.battery_j * MICRO).round() as i64;
                nodes.push(SimNode {
                    id,
                    role: g.role,
                    motion,
                    compute_gflops: g.compute_gflops,
                    radio_range_m: g.radio_range_m,
                    bandwidth_mbps: g.bandwidth_mbps,
                    initial_uj: uj,
                    battery_uj: uj,
                    consumed_uj: 0,
                    failed_at_ms: None,
                    busy_until_ms: 0.0,
                    reservations: Vec::new(),
                });
                mobility_rngs.push(rng);
            }
        }
        let cloud = config.cloud.as_ref().map(|c| {
            let id = nodes.len();
            // effectively unbounded: the cloud is not energy constrained
            let uj = i64::MAX / 4;
            nodes.push(SimNode {
                id,
                role: Role::Cloud,
                motion: Waypoint { position: Vec2::default(), target: Vec2::default(), speed_mps: 0.0 },
                compute_gflops: c.compute_gflops,
                radio_range_m: 0.0,
                bandwidth_mbps: config.link.gateway_bandwidth_mbps,
                initial_uj: uj,
                battery_uj: uj,
                consumed_uj: 0,
                failed_at_ms: None,
                busy_until_ms: 0.0,
                reservations: Vec::new(),
            });
            mobility_rngs.push(ChaCha8Rng::seed_from_u64(stream_seed(seed, 1000 + id as u64)));
            id
        });

        let mut gateway = Gateway {
            mode: config.link.gateway,
            up: !matches!(config.link.gateway, GatewayMode::AlwaysDown),
            next_toggle_ms: f64::INFINITY,
            rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, 2)),
        };
        let mut queue = EventQueue::default();
        if cloud.is_some() {
            let first = gateway.dwell(gateway.up);
            if first.is_finite() {
                gateway.next_toggle_ms = first;
                queue.push(first, EventKind::GatewayToggle);
            }
        }
        let mut failures = config.host_failures.clone();
        failures.sort_by(|a, b| a.at_ms.total_cmp(&b.at_ms).then(a.host.cmp(&b.host)));
        for f in failures {
            queue.push(f.at_ms, EventKind::HostFailure(f.host));
        }

        Ok(Self {
            config: config.clone(),
            nodes,
            cloud,
            clock_ms: 0.0,
            moved_to_ms: 0.0,
            queue,
            gateway,
            mobility_rngs,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn clock_ms(&self) -> f64 {
        self.clock_ms
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn node(&self, h: HostId) -> &SimNode {
        &self.nodes[h]
    }

    pub fn cloud(&self) -> Option<HostId> {
        self.cloud
    }

    pub fn is_cloud(&self, h: HostId) -> bool {
        self.cloud == Some(h)
    }

    pub fn event_log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Sequence number the next scheduled event will receive; unique for
    /// the lifetime of the world.
    pub fn next_seq(&self) -> u64 {
        self.queue.next_seq()
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(&mut self, time_ms: f64, payload: P) -> u64 {
        assert!(time_ms >= self.clock_ms, "cannot schedule into the past");
        self.queue.push(time_ms, EventKind::User(payload))
    }

    /// Pops and applies the next event at or before `until_ms`.
    pub fn step(&mut self, until_ms: f64) -> Option<Event<P>> {
        let t = self.queue.peek_time()?;
        if t > until_ms {
            return None;
        }
        let ev = self.queue.pop()?;
        self.move_to(ev.time_ms);
        self.clock_ms = self.clock_ms.max(ev.time_ms);
        let tag = match &ev.kind {
            EventKind::GatewayToggle => {
                self.gateway.up = !self.gateway.up;
                let dwell = self.gateway.dwell(self.gateway.up);
                self.gateway.next_toggle_ms = ev.time_ms + dwell;
                if dwell.is_finite() {
                    self.queue.push(self.gateway.next_toggle_ms, EventKind::GatewayToggle);
                }
                if self.gateway.up {
                    "gateway_up".to_string()
                } else {
                    "gateway_down".to_string()
                }
            }
            EventKind::HostFailure(h) => {
                if let Some(n) = self.nodes.get_mut(*h) {
                    n.failed_at_ms.get_or_insert(ev.time_ms);
                }
                format!("host_failure:{h}")
            }
            EventKind::User(_) => "user".to_string(),
        };
        if self.config.record_log {
            self.log.push(LogEntry { time_ms: ev.time_ms, seq: ev.seq, tag });
        }
        Some(ev)
    }

    /// Processes every event through `until_ms`, then sets the clock there.
    pub fn advance(&mut self, until_ms: f64) -> Vec<Event<P>> {
        let mut out = Vec::new();
        while let Some(ev) = self.step(until_ms) {
            out.push(ev);
        }
        if until_ms > self.clock_ms {
            self.move_to(until_ms);
            self.clock_ms = until_ms;
        }
        out
    }

    fn move_to(&mut self, t: f64) {
        if t <= self.moved_to_ms {
            return;
        }
        let dt = t - self.moved_to_ms;
        let extent = self.config.grid_extent_m;
        let speeds = (self.config.mobility.min_speed_mps, self.config.mobility.max_speed_mps);
        for (node, rng) in self.nodes.iter_mut().zip(self.mobility_rngs.iter_mut()) {
            if node.role == Role::Aav && node.failed_at_ms.is_none() {
                node.motion.step(dt, extent, speeds, rng);
            }
        }
        self.moved_to_ms = t;
    }

    pub fn gateway_up(&self) -> bool {
        self.gateway.up
    }

    /// Earliest time at or after now when the gateway carries traffic.
    pub fn gateway_next_up_ms(&self) -> f64 {
        if self.gateway.up {
            self.clock_ms
        } else {
            self.gateway.next_toggle_ms
        }
    }

    pub fn distance(&self, a: HostId, b: HostId) -> f64 {
        self.nodes[a].position().distance(self.nodes[b].position())
    }

    /// Direct reachability. Edge pairs use the closed range threshold; the
    /// cloud is reachable from live edge nodes only while the gateway is up.
    pub fn connected(&self, a: HostId, b: HostId) -> bool {
        if a == b {
            return true;
        }
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        if na.failed_at_ms.is_some() || nb.failed_at_ms.is_some() {
            return false;
        }
        match (na.role, nb.role) {
            (Role::Cloud, Role::Cloud) => true,
            (Role::Cloud, _) | (_, Role::Cloud) => self.gateway.up,
            _ => na.position().distance(nb.position()) <= na.radio_range_m.min(nb.radio_range_m),
        }
    }

    /// Route ignoring the gateway's current state (cloud routes may have to
    /// wait for it); `None` when no edge path exists.
    pub fn route(&self, a: HostId, b: HostId) -> Option<Route> {
        if a == b {
            return Some(Route { hops: 0, via_gateway: false, bandwidth_mbps: f64::INFINITY });
        }
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        if na.failed_at_ms.is_some() || nb.failed_at_ms.is_some() {
            return None;
        }
        if na.role == Role::Cloud || nb.role == Role::Cloud {
            if matches!(self.gateway.mode, GatewayMode::AlwaysDown) {
                return None;
            }
            return Some(Route { hops: 1, via_gateway: true, bandwidth_mbps: self.config.link.gateway_bandwidth_mbps });
        }
        if self.connected(a, b) {
            return Some(Route {
                hops: 1,
                via_gateway: false,
                bandwidth_mbps: na.bandwidth_mbps.min(nb.bandwidth_mbps),
            });
        }
        if self.config.relay {
            for r in 0..self.nodes.len() {
                let nr = &self.nodes[r];
                if r == a || r == b || nr.role == Role::Cloud || !nr.is_alive() {
                    continue;
                }
                if self.connected(a, r) && self.connected(r, b) {
                    let bw = na.bandwidth_mbps.min(nb.bandwidth_mbps).min(nr.bandwidth_mbps);
                    return Some(Route { hops: 2, via_gateway: false, bandwidth_mbps: bw });
                }
            }
        }
        None
    }

    /// Transfer duration over the current route (excluding any gateway wait).
    pub fn transfer_time(&self, payload_mb: f64, a: HostId, b: HostId) -> Result<f64, SimError> {
        let route = self.route(a, b).ok_or(SimError::Disconnected(a, b))?;
        if route.hops == 0 {
            return Ok(0.0);
        }
        let base = self.config.link.base_latency_ms;
        Ok(f64::from(route.hops) * transfer_ms(payload_mb, route.bandwidth_mbps, base))
    }

    pub fn compute_time(&self, workload_gflop: f64, h: HostId) -> Result<f64, SimError> {
        let n = &self.nodes[h];
        if !n.is_alive() {
            return Err(SimError::HostDepleted(h));
        }
        Ok(compute_ms(workload_gflop, n.compute_gflops))
    }

    /// Appends a job of `duration_ms` to the node's FIFO starting no earlier
    /// than `ready_ms`; returns (start, finish).
    pub fn reserve_compute(&mut self, h: HostId, ready_ms: f64, duration_ms: f64) -> Result<(f64, f64), SimError> {
        let now = self.clock_ms;
        let n = &mut self.nodes[h];
        if !n.is_alive() {
            return Err(SimError::HostDepleted(h));
        }
        let start = n.busy_until_ms.max(ready_ms).max(now);
        let finish = start + duration_ms;
        n.busy_until_ms = finish;
        n.reservations.retain(|&f| f > now);
        n.reservations.push(finish);
        Ok((start, finish))
    }

    /// Draws `joules` from the node. An overdraw fails, drains the node to
    /// zero and counts only what was actually available.
    pub fn consume_energy(&mut self, h: HostId, joules: f64) -> Result<f64, SimError> {
        assert!(joules >= 0.0 && joules.is_finite(), "energy draw must be finite and >= 0");
        let uj = (joules * MICRO).round() as i64;
        let n = &mut self.nodes[h];
        if uj > n.battery_uj {
            n.consumed_uj += n.battery_uj;
            n.battery_uj = 0;
            return Err(SimError::HostDepleted(h));
        }
        n.battery_uj -= uj;
        n.consumed_uj += uj;
        Ok(n.battery_j())
    }

    pub fn queue_length(&self, h: HostId) -> usize {
        let now = self.clock_ms;
        self.nodes[h].reservations.iter().filter(|&&f| f > now).count()
    }

    pub fn system_state(&self) -> SystemState {
        let now = self.clock_ms;
        let n = self.nodes.len();
        let nodes = self
            .nodes
            .iter()
            .map(|node| {
                let alive = node.is_alive();
                NodeState {
                    available_compute_gflops: if alive { node.compute_gflops } else { 0.0 },
                    battery_j: if alive { node.battery_j() } else { 0.0 },
                    queue_length: self.queue_length(node.id),
                    backlog_ms: (node.busy_until_ms - now).max(0.0),
                }
            })
            .collect();
        let base = self.config.link.base_latency_ms;
        // memoryless outages: a down gateway has a full mean outage ahead; an
        // up one may be down by the time a later transfer needs it
        let expected_wait = match self.gateway.mode {
            GatewayMode::Intermittent { mean_up_ms, mean_down_ms } if self.gateway.up => {
                mean_down_ms * mean_down_ms / (mean_up_ms + mean_down_ms)
            }
            GatewayMode::Intermittent { mean_down_ms, .. } => mean_down_ms,
            _ => 0.0,
        };
        let mut links = vec![LinkState::DOWN; n * n];
        for a in 0..n {
            for b in 0..n {
                links[a * n + b] = match self.route(a, b) {
                    None => LinkState::DOWN,
                    Some(r) if r.hops == 0 => LinkState::LOCAL,
                    Some(r) => LinkState {
                        up: true,
                        latency_ms: f64::from(r.hops) * base,
                        bandwidth_mbps: r.bandwidth_mbps,
                        hops: r.hops,
                        wait_ms: if r.via_gateway { expected_wait } else { 0.0 },
                    },
                };
            }
        }
        SystemState { timestamp_ms: now, nodes, links, cloud: self.cloud }
    }
}
