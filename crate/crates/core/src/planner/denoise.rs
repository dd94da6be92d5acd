//! Population denoiser over factored per-node categoricals.
//!
//! Sampling starts from a high-entropy prior (uniform, or the softmax of
//! learned logits). Every step draws a population of assignments, in which
//! each node is re-noised with probability `rho_t` and otherwise copies the
//! best assignment seen so far, scores them with the shared cost model and
//! sharpens each categorical toward the elite choices at temperature
//! `tau_t`. Both schedules decrease, so early steps explore and late steps
//! refine.

use super::{AgentRef, Evaluator, ExecMode, ExecutionPlan, PlanError, PlanningProblem, PriorTable};
use crate::prompt::{NodeId, TaskGraph};
use crate::registry::AgentId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseSchedule {
    pub steps: usize,
    pub population: usize,
    pub elite_fraction: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub rho_start: f64,
    pub rho_end: f64,
    /// Number of ranked plans returned.
    pub candidates: usize,
}

impl Default for DenoiseSchedule {
    fn default() -> Self {
        Self {
            steps: 50,
            population: 16,
            elite_fraction: 0.25,
            tau_start: 1.0,
            tau_end: 0.05,
            rho_start: 1.0,
            rho_end: 0.1,
            candidates: 4,
        }
    }
}

impl DenoiseSchedule {
    /// Geometric from `tau_start` to `tau_end` over the steps.
    pub fn temperature(&self, t: usize) -> f64 {
        if self.steps <= 1 {
            return self.tau_start;
        }
        let f = t as f64 / (self.steps - 1) as f64;
        self.tau_start * (self.tau_end / self.tau_start).powf(f)
    }

    /// Linear from `rho_start` to `rho_end` over the steps.
    pub fn resample_fraction(&self, t: usize) -> f64 {
        if self.steps <= 1 {
            return self.rho_start;
        }
        let f = t as f64 / (self.steps - 1) as f64;
        self.rho_start + (self.rho_end - self.rho_start) * f
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.population == 0 || self.candidates == 0 {
            return Err("population and candidates must be >= 1".into());
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err("elite_fraction must lie in (0, 1]".into());
        }
        if !(self.tau_start > 0.0 && self.tau_end > 0.0 && self.tau_end <= self.tau_start) {
            return Err("temperatures must be positive and non-increasing".into());
        }
        if !((0.0..=1.0).contains(&self.rho_end)
            && (0.0..=1.0).contains(&self.rho_start)
            && self.rho_end <= self.rho_start)
        {
            return Err("resample fractions must lie in [0, 1] and be non-increasing".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDistribution {
    pub nodes: Vec<NodeId>,
    pub candidates: Vec<Vec<AgentId>>,
    pub probs: Vec<Vec<f64>>,
    /// Row-major node-pair ordering preferences, used only to break ties
    /// between equally ready nodes.
    pub pair_preference: Vec<f64>,
    pub step_index: usize,
    pub temperature: f64,
}

impl PlanDistribution {
    pub fn probabilities(&self, node: NodeId) -> Option<&[f64]> {
        self.nodes.iter().position(|n| *n == node).map(|i| self.probs[i].as_slice())
    }

    pub fn entropy(&self, pos: usize) -> f64 {
        -self.probs[pos].iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    fn sample<R: Rng>(&self, pos: usize, rng: &mut R) -> u16 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let probs = &self.probs[pos];
        let mut last = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last = i;
                acc += p;
                if u < acc {
                    return i as u16;
                }
            }
        }
        last as u16
    }
}

/// Builds the starting distribution: uniform over each node's candidates,
/// tilted by any learned logits.
pub fn init_prior(
    graph: &TaskGraph,
    candidates: &[Vec<AgentId>],
    priors: &PriorTable,
    schedule: &DenoiseSchedule,
) -> Result<PlanDistribution, PlanError> {
    assert_eq!(candidates.len(), graph.len(), "one candidate list per node");
    let mut probs = Vec::with_capacity(graph.len());
    for (node, cands) in graph.nodes().iter().zip(candidates) {
        if cands.is_empty() {
            return Err(PlanError::NoFeasibleAgent(node.node_id));
        }
        let logits: Vec<f64> = cands.iter().map(|a| priors.logit(node.spec.kind, *a)).collect();
        probs.push(softmax(&logits, 1.0));
    }
    let n = graph.len();
    Ok(PlanDistribution {
        nodes: graph.nodes().iter().map(|n| n.node_id).collect(),
        candidates: candidates.to_vec(),
        probs,
        pair_preference: vec![0.0; n * n],
        step_index: 0,
        temperature: schedule.tau_start,
    })
}

fn softmax(logits: &[f64], tau: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| ((l - max) / tau).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    /// Lowest-cost distinct plans, ascending by total cost.
    pub ranked: Vec<ExecutionPlan>,
    /// Best-so-far total cost after each step.
    pub best_cost_per_step: Vec<f64>,
    pub distribution: PlanDistribution,
}

type Choice = Vec<u16>;

pub fn denoise(
    dist: &PlanDistribution,
    problem: &PlanningProblem,
    schedule: &DenoiseSchedule,
    seed: u64,
) -> Result<Denoised, PlanError> {
    let graph = problem.graph;
    let n = graph.len();
    assert_eq!(dist.nodes.len(), n, "distribution does not belong to this graph");
    let mut refs: Vec<Vec<AgentRef>> = Vec::with_capacity(n);
    for (pos, cands) in dist.candidates.iter().enumerate() {
        if cands.is_empty() {
            return Err(PlanError::NoFeasibleAgent(dist.nodes[pos]));
        }
        let row = cands
            .iter()
            .map(|a| problem.agent_ref(pos, *a).ok_or(PlanError::InvalidAssignment(dist.nodes[pos])))
            .collect::<Result<Vec<_>, _>>()?;
        refs.push(row);
    }
    let eval = Evaluator::new(*problem);
    let cost_of = |choice: &Choice| -> f64 {
        let r: Vec<AgentRef> = choice.iter().enumerate().map(|(pos, &c)| refs[pos][c as usize]).collect();
        eval.evaluate(&r).cost.total
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dist = dist.clone();
    let mut archive: HashMap<Choice, f64> = HashMap::new();
    let mut best: Option<(Choice, f64)> = None;
    let mut history = Vec::with_capacity(schedule.steps);
    let m = schedule.population.max(1);
    let n_elite = ((schedule.elite_fraction * m as f64).ceil() as usize).clamp(1, m);

    let rounds = schedule.steps.max(1);
    for t in 0..rounds {
        let rho = if schedule.steps == 0 { 1.0 } else { schedule.resample_fraction(t) };
        let mut population: Vec<(Choice, f64)> = Vec::with_capacity(m + 1);
        for _ in 0..m {
            let choice: Choice = (0..n)
                .map(|pos| match &best {
                    Some((b, _)) if rng.gen::<f64>() >= rho => b[pos],
                    _ => dist.sample(pos, &mut rng),
                })
                .collect();
            let cost = match archive.get(&choice) {
                Some(&c) => c,
                None => {
                    let c = cost_of(&choice);
                    archive.insert(choice.clone(), c);
                    c
                }
            };
            population.push((choice, cost));
        }
        if schedule.steps == 0 {
            break;
        }
        if let Some(b) = &best {
            if !population.iter().any(|(c, _)| *c == b.0) {
                population.push(b.clone());
            }
        }
        population.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        if best.as_ref().is_none_or(|b| population[0].1 < b.1) {
            best = Some(population[0].clone());
        }
        let tau = schedule.temperature(t);
        let elites = &population[..n_elite.min(population.len())];
        for pos in 0..n {
            let k = dist.probs[pos].len();
            let mut freq = vec![0.0; k];
            for (c, _) in elites {
                freq[c[pos] as usize] += 1.0 / elites.len() as f64;
            }
            let mut w: Vec<f64> = dist.probs[pos].iter().zip(&freq).map(|(p, f)| p * (f / tau).exp()).collect();
            let z: f64 = w.iter().sum();
            if z > 0.0 && z.is_finite() {
                w.iter_mut().for_each(|x| *x /= z);
                dist.probs[pos] = w;
            }
        }
        dist.step_index = t + 1;
        dist.temperature = tau;
        history.push(best.as_ref().map_or(f64::INFINITY, |b| b.1));
    }

    if archive.is_empty() {
        return Err(PlanError::NoFeasiblePlan);
    }
    let mut ranked: Vec<(Choice, f64)> = archive.into_iter().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(schedule.candidates.max(1));

    let mode = ExecMode::of(graph);
    let plans = ranked
        .into_iter()
        .map(|(choice, _)| {
            let r: Vec<AgentRef> = choice.iter().enumerate().map(|(pos, &c)| refs[pos][c as usize]).collect();
            let est = eval.evaluate(&r);
            let order = eval.derive_order(&est.start_ms, Some(&dist.pair_preference));
            let assignment: BTreeMap<NodeId, AgentId> = choice
                .iter()
                .enumerate()
                .map(|(pos, &c)| (dist.nodes[pos], dist.candidates[pos][c as usize]))
                .collect();
            ExecutionPlan { assignment, order, mode_tag: mode, est_cost: est.cost }
        })
        .collect();
    Ok(Denoised { ranked: plans, best_cost_per_step: history, distribution: dist })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionPolicy {
    #[default]
    Greedy,
    Softmax {
        tau: f64,
    },
}

/// Picks one plan from a ranked list: the head, or a Boltzmann draw over
/// total costs.
pub fn select_plan(ranked: &[ExecutionPlan], policy: SelectionPolicy, seed: u64) -> Result<ExecutionPlan, PlanError> {
    let first = ranked.first().ok_or(PlanError::NoFeasiblePlan)?;
    match policy {
        SelectionPolicy::Greedy => Ok(first.clone()),
        SelectionPolicy::Softmax { tau } => {
            let base = ranked.iter().map(|p| p.est_cost.total).fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = ranked.iter().map(|p| (-(p.est_cost.total - base) / tau).exp()).collect();
            let z: f64 = w.iter().sum();
            let mut u = ChaCha8Rng::seed_from_u64(seed).gen::<f64>() * z;
            for (p, wi) in ranked.iter().zip(&w) {
                if u < *wi {
                    return Ok(p.clone());
                }
                u -= wi;
            }
            Ok(ranked[ranked.len() - 1].clone())
        }
    }
}
