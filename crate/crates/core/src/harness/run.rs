use super::report::{compute_scores, method_scores, summarize, Counters, MethodScores, MetricsRow, SummaryRow};
use super::{generate_workload, HarnessError, Method, ScenarioConfig};
use crate::controller::{AbortReason, Controller, Env, ExecutionTrace, FeedbackLoop, SimEvent};
use crate::planner::{
    cloud_centric_plan, denoise, fixed_graph_plan, init_prior, select_plan, ExecutionPlan, PlanContext, PlanError,
    PlanningProblem, PriorTable,
};
use crate::prompt::{compile_to_graph, extract_intent, TaskGraph};
use crate::registry::{AgentRegistry, HostId, SystemState};
use crate::sim::{stream_seed, EventKind, GatewayMode, HostFailureSpec, Role, World, WorldConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Outcome of one simulated run of the whole workload.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub counters: Counters,
    /// Finalized traces ordered by mission id (only when requested).
    pub traces: Vec<ExecutionTrace>,
    pub graphs: Vec<TaskGraph>,
    pub plans: Vec<Option<ExecutionPlan>>,
}

/// World config of one run: the sweep latency and, for the stress run,
/// failing AAVs and longer gateway outages.
pub fn world_for(
    config: &ScenarioConfig,
    latency_ms: f64,
    seed: u64,
    perturbed: bool,
    last_arrival_ms: f64,
) -> WorldConfig {
    let mut w = config.world.clone();
    w.link.base_latency_ms = latency_ms;
    if perturbed {
        let p = &config.perturbation;
        let mut aavs = w.hosts_with_role(Role::Aav);
        let k = (p.aav_failure_fraction * aavs.len() as f64 - 1e-9).ceil().max(0.0) as usize;
        aavs.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(seed, 5)));
        let at_ms = p.failure_at_fraction * last_arrival_ms;
        for &host in aavs.iter().take(k) {
            w.host_failures.push(HostFailureSpec { host, at_ms });
        }
        if let GatewayMode::Intermittent { mean_up_ms, mean_down_ms } = w.link.gateway {
            w.link.gateway =
                GatewayMode::Intermittent { mean_up_ms, mean_down_ms: mean_down_ms * p.gateway_downtime_factor };
        }
    }
    w
}

fn plan_mission(
    method: Method,
    config: &ScenarioConfig,
    problem: &PlanningProblem,
    priors: &PriorTable,
    cloud: Option<HostId>,
    seed: u64,
) -> Result<ExecutionPlan, PlanError> {
    match method {
        Method::P2aecf => {
            let cands = problem.candidates(&BTreeMap::new());
            let dist = init_prior(problem.graph, &cands, priors, &config.planner.schedule)?;
            let out = denoise(&dist, problem, &config.planner.schedule, seed)?;
            select_plan(&out.ranked, config.planner.selection, stream_seed(seed, 1))
        }
        Method::FixedGraph => fixed_graph_plan(problem),
        Method::CloudCentric => match cloud {
            Some(c) => cloud_centric_plan(problem, c),
            None => Err(PlanError::NoFeasiblePlan),
        },
    }
}

/// A prompt addressed to a dead host is taken by the nearest live host of
/// the same role (ties by id).
fn live_origin<P>(world: &World<P>, origin: HostId, peers: &[HostId]) -> Option<HostId> {
    if world.node(origin).is_alive() {
        return Some(origin);
    }
    peers
        .iter()
        .copied()
        .filter(|&h| world.node(h).is_alive())
        .min_by(|&a, &b| world.distance(origin, a).total_cmp(&world.distance(origin, b)).then(a.cmp(&b)))
}

fn rejected(mission_id: u64, origin: HostId, now: f64, graph: &TaskGraph, reason: AbortReason) -> ExecutionTrace {
    let c = graph.constraints();
    ExecutionTrace {
        mission_id,
        origin,
        dispatch_ms: now,
        deadline_ms: c.deadline_ms,
        deadline_abs_ms: now + c.deadline_ms as f64,
        energy_budget_j: c.energy_budget_j,
        records: vec![],
        completion: false,
        completion_time_ms: None,
        abort_reason: Some(reason),
        telemetry: vec![],
        energy_j: 0.0,
        substitutions: 0,
        failures: 0,
    }
}

/// Runs the full workload of one seed through one method.
pub fn simulate(
    config: &ScenarioConfig,
    method: Method,
    latency_ms: f64,
    seed: u64,
    perturbed: bool,
    keep_traces: bool,
) -> Result<CellRun, HarnessError> {
    let workload = generate_workload(config, seed)?;
    let lexicon = config.lexicon()?;
    let last = workload.last().map_or(0.0, |p| p.at_ms);
    let wcfg = world_for(config, latency_ms, seed, perturbed, last);
    let mut world: World<SimEvent> = World::build(&wcfg, seed).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut registry = AgentRegistry::new(config.registry_config());
    for p in wcfg.roster() {
        registry.register_agent(p).map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    let hosts = world.nodes().len();
    let peers = wcfg.hosts_with_role(config.workload.origin_role);
    let mut graphs = Vec::with_capacity(workload.len());
    let mut origins = Vec::with_capacity(workload.len());
    for tp in &workload {
        let graph =
            compile_to_graph(&extract_intent(&tp.prompt, &lexicon)).map_err(|e| HarnessError::Config(e.to_string()))?;
        let origin = tp.prompt.parameters.get("origin").and_then(|v| v.as_i64()).unwrap_or(0);
        if origin < 0 || origin as usize >= hosts {
            return Err(HarnessError::Config(format!("mission {}: origin {origin} out of range", tp.prompt.id)));
        }
        graphs.push(graph);
        origins.push(origin as usize);
        world.schedule(tp.at_ms, SimEvent::Arrival(graphs.len() - 1));
    }
    // the static binding is made once against the initial network
    let state_t0: SystemState = world.system_state();
    let mission_seed = stream_seed(seed, 4);
    let substitution = (method == Method::P2aecf).then(|| config.substitution());
    let mut controller = Controller::new(substitution);
    let mut priors = PriorTable::new();
    let mut feedback = FeedbackLoop::new(config.metrics.beta);
    let tx = wcfg.energy.tx_j_per_mb;
    let result_mb = wcfg.link.cloud_result_mb;

    let mut counters = Counters { issued: workload.len(), ..Counters::default() };
    let mut traces = Vec::new();
    let mut plans = vec![None; workload.len()];
    let mut arrived = 0;
    let tally = |t: &ExecutionTrace, counters: &mut Counters| {
        counters.total_energy_j += t.energy_j;
        counters.substitutions += t.substitutions;
        counters.failures += t.failures;
        if t.completion {
            counters.completed_on_time += 1;
            if t.substitutions == 0 && t.failures == 0 {
                counters.clean += 1;
            }
        }
    };

    while arrived < workload.len() || controller.active() > 0 {
        let Some(ev) = world.step(f64::INFINITY) else { break };
        let mut finished = Vec::new();
        if let EventKind::User(SimEvent::Arrival(k)) = ev.kind {
            arrived += 1;
            let graph = &graphs[k];
            let now = world.clock_ms();
            match live_origin(&world, origins[k], &peers) {
                None => finished.push(rejected(k as u64, origins[k], now, graph, AbortReason::Disconnected)),
                Some(origin) => {
                    let live = world.system_state();
                    let state = if method == Method::FixedGraph { &state_t0 } else { &live };
                    let context = PlanContext {
                        origin,
                        external_inputs: BTreeMap::new(),
                        tx_j_per_mb: tx,
                        cloud_result_mb: result_mb,
                    };
                    let problem = PlanningProblem {
                        graph,
                        registry: &registry,
                        state,
                        context: &context,
                        weights: config.metrics.weights,
                    };
                    let seed_k = stream_seed(mission_seed, k as u64);
                    match plan_mission(method, config, &problem, &priors, world.cloud(), seed_k) {
                        Ok(plan) => {
                            let mut env = Env { world: &mut world, registry: &registry, priors: &priors };
                            controller.launch(&mut env, k as u64, graph, &plan, origin, mission_seed);
                            plans[k] = Some(plan);
                        }
                        Err(_) => finished.push(rejected(k as u64, origin, now, graph, AbortReason::NoFeasibleAgent)),
                    }
                }
            }
        } else {
            let mut env = Env { world: &mut world, registry: &registry, priors: &priors };
            controller.on_event(&mut env, &ev);
        }
        finished.extend(controller.drain_finished());
        for t in finished {
            tally(&t, &mut counters);
            if method == Method::P2aecf {
                priors = feedback.feedback(&t, &mut registry, &priors).expect("each mission finishes once");
            }
            if keep_traces {
                traces.push(t);
            }
        }
    }
    traces.sort_by_key(|t| t.mission_id);
    Ok(CellRun { counters, traces, graphs, plans })
}

/// One (method, latency, seed) cell: the plain run plus its perturbed twin.
pub fn run_cell(
    config: &ScenarioConfig,
    method: Method,
    latency_ms: f64,
    seed: u64,
) -> Result<MetricsRow, HarnessError> {
    let base = simulate(config, method, latency_ms, seed, false, false)?;
    let stressed = simulate(config, method, latency_ms, seed, true, false)?;
    let scores = compute_scores(&base.counters, &stressed.counters, &config.metrics);
    Ok(MetricsRow::new(method, latency_ms, seed, &base.counters, &scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<MetricsRow>,
    pub summary: Vec<SummaryRow>,
    pub scores: Vec<MethodScores>,
}

/// Every (method, latency, seed) cell, merged in that order.
pub fn run_sweep(config: &ScenarioConfig, parallel: bool) -> Result<SweepReport, HarnessError> {
    config.validate()?;
    let mut methods = config.sweep.methods.clone();
    methods.sort_unstable();
    let mut seeds = config.sweep.seeds.clone();
    seeds.sort_unstable();
    let mut cells: Vec<(Method, f64, u64)> = Vec::new();
    for &m in &methods {
        for &l in &config.sweep.latency_points_ms {
            cells.extend(seeds.iter().map(|&s| (m, l, s)));
        }
    }
    let run = |&(m, l, s): &(Method, f64, u64)| run_cell(config, m, l, s);
    let rows: Vec<MetricsRow> = if parallel {
        cells.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        cells.iter().map(run).collect::<Result<_, _>>()?
    };
    Ok(SweepReport { summary: summarize(&rows), scores: method_scores(&rows), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Reference efficiency that puts the P2AECF sweep mean on target.
    pub e_ref: f64,
    pub target: f64,
    pub scores: MethodScores,
}

/// Solves for `e_ref` such that the mean P2AECF energy-efficiency score over
/// the sweep equals the configured target.
pub fn calibrate(config: &ScenarioConfig, parallel: bool) -> Result<CalibrationReport, HarnessError> {
    let mut cfg = config.clone();
    cfg.sweep.methods = vec![Method::P2aecf];
    let report = run_sweep(&cfg, parallel)?;
    let ratios: Vec<f64> = report
        .rows
        .iter()
        .map(|r| {
            if r.completed_on_time == 0 {
                0.0
            } else {
                r.completed_on_time as f64 / r.total_energy_j.max(f64::MIN_POSITIVE)
            }
        })
        .collect();
    let target = config.metrics.calibration_target;
    let score = |e: f64| ratios.iter().map(|r| (r / e).min(1.0)).sum::<f64>() / ratios.len() as f64;
    let max = ratios.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(HarnessError::Config("calibration: no mission completed".into()));
    }
    // score(e) falls from 1 toward 0 as e grows
    let (mut lo, mut hi) = (max * 1e-9, max * 1e3);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if score(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e_ref = super::report::q6_sig(hi);
    cfg.metrics.e_ref = e_ref;
    let rows: Vec<MetricsRow> = report
        .rows
        .iter()
        .map(|r| MetricsRow {
            energy_efficiency: super::report::q6(if r.completed_on_time == 0 {
                0.0
            } else {
                (r.completed_on_time as f64 / r.total_energy_j / e_ref).min(1.0)
            }),
            ..r.clone()
        })
        .collect();
    let scores = method_scores(&rows)[0];
    Ok(CalibrationReport { e_ref, target, scores })
}
