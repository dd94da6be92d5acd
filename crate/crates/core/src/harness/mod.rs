//! Experiment driver: scenario configs, workload generation, per-cell
//! simulation of the three methods, scoring and CSV output.

mod report;
mod run;

pub use report::{
    compute_scores, method_scores, parse_results_csv, results_csv, scores_csv, summarize, summary_csv, Counters,
    MethodScores, MetricsRow, Scores, SummaryRow, RESULTS_HEADER,
};
pub use run::{calibrate, run_cell, run_sweep, simulate, world_for, CalibrationReport, CellRun, SweepReport};

use crate::controller::SubstitutionConfig;
use crate::planner::{CostWeights, DenoiseSchedule, SelectionPolicy};
use crate::prompt::{MissionTemplate, Prompt, PromptSource, Scalar, TemplateLexicon};
use crate::registry::RegistryConfig;
use crate::sim::{stream_seed, Role, WorldConfig};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("csv error: {0}")]
    Csv(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError::Config(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    P2aecf,
    FixedGraph,
    CloudCentric,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::P2aecf, Method::FixedGraph, Method::CloudCentric];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::P2aecf => "p2aecf",
            Method::FixedGraph => "fixed_graph",
            Method::CloudCentric => "cloud_centric",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalSchedule {
    Fixed {
        interval_ms: f64,
        #[serde(default)]
        start_ms: f64,
    },
    Poisson {
        mean_interval_ms: f64,
        #[serde(default)]
        start_ms: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixEntry {
    pub template: String,
    pub weight: f64,
    /// Overrides the template's default constraints.
    #[serde(default)]
    pub deadline_ms: Option<u64>,
    #[serde(default)]
    pub energy_budget_j: Option<f64>,
}

fn d_regions() -> Vec<String> {
    ["A1", "B2", "C3", "D4"].iter().map(|s| s.to_string()).collect()
}

fn d_origin_role() -> Role {
    Role::Aav
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub count: usize,
    pub arrival: ArrivalSchedule,
    pub mix: Vec<MixEntry>,
    /// Missions are issued by a uniformly drawn host of this role.
    #[serde(default = "d_origin_role")]
    pub origin_role: Role,
    #[serde(default = "d_regions")]
    pub regions: Vec<String>,
}

fn d_latencies() -> Vec<f64> {
    vec![10.0, 50.0, 100.0, 250.0, 500.0, 1000.0, 1500.0]
}

fn d_seeds() -> Vec<u64> {
    (1..=20).collect()
}

fn d_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "d_latencies")]
    pub latency_points_ms: Vec<f64>,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_methods")]
    pub methods: Vec<Method>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { latency_points_ms: d_latencies(), seeds: d_seeds(), methods: d_methods() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Reference efficiency in on-time missions per joule.
    pub e_ref: f64,
    pub ema_alpha: f64,
    /// Prior learning rate.
    pub beta: f64,
    pub weights: CostWeights,
    /// Energy-efficiency score the `calibrate` verb solves `e_ref` for.
    pub calibration_target: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { e_ref: 0.01, ema_alpha: 0.2, beta: 0.1, weights: CostWeights::default(), calibration_target: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub schedule: DenoiseSchedule,
    pub selection: SelectionPolicy,
}

/// The paired stress run used for adaptability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Share of AAVs (rounded up) that fail.
    pub aav_failure_fraction: f64,
    /// Failure time as a fraction of the last arrival time.
    pub failure_at_fraction: f64,
    pub gateway_downtime_factor: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self { aav_failure_fraction: 0.2, failure_at_fraction: 0.5, gateway_downtime_factor: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub world: WorldConfig,
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    /// Agent matching weights; `ema_alpha` here is replaced by the metrics one.
    #[serde(default)]
    pub registry: RegistryConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    /// Mission templates; the built-in lexicon when absent.
    #[serde(default)]
    pub templates: Option<Vec<MissionTemplate>>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn lexicon(&self) -> Result<TemplateLexicon, HarnessError> {
        match &self.templates {
            None => Ok(TemplateLexicon::builtin()),
            Some(t) => TemplateLexicon::from_templates(t.clone()).map_err(|e| HarnessError::Config(e.to_string())),
        }
    }

    pub fn registry_config(&self) -> RegistryConfig {
        RegistryConfig { ema_alpha: self.metrics.ema_alpha, ..self.registry }
    }

    pub fn substitution(&self) -> SubstitutionConfig {
        SubstitutionConfig {
            schedule: self.planner.schedule,
            weights: self.metrics.weights,
            selection: self.planner.selection,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.world.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let lexicon = self.lexicon()?;
        let w = &self.workload;
        match w.arrival {
            ArrivalSchedule::Fixed { interval_ms, start_ms } => {
                if !(interval_ms.is_finite() && interval_ms >= 0.0 && start_ms.is_finite() && start_ms >= 0.0) {
                    return cfg_err("workload.arrival: times must be finite and >= 0");
                }
            }
            ArrivalSchedule::Poisson { mean_interval_ms, start_ms } => {
                if !(mean_interval_ms.is_finite() && mean_interval_ms > 0.0 && start_ms.is_finite() && start_ms >= 0.0)
                {
                    return cfg_err("workload.arrival: mean interval must be > 0");
                }
            }
        }
        if w.mix.is_empty() {
            return cfg_err("workload.mix must not be empty");
        }
        for m in &w.mix {
            if lexicon.get(&m.template).is_none() {
                return cfg_err(format!("workload.mix: unknown template `{}`", m.template));
            }
            if !(m.weight.is_finite() && m.weight > 0.0) {
                return cfg_err("workload.mix: weights must be > 0");
            }
            if m.deadline_ms == Some(0) || m.energy_budget_j.is_some_and(|b| !(b.is_finite() && b > 0.0)) {
                return cfg_err("workload.mix: constraint overrides must be > 0");
            }
        }
        if w.count > 0 && self.world.hosts_with_role(w.origin_role).is_empty() {
            return cfg_err("workload.origin_role has no hosts");
        }
        if w.regions.is_empty() {
            return cfg_err("workload.regions must not be empty");
        }
        let s = &self.sweep;
        if s.latency_points_ms.is_empty() {
            return cfg_err("sweep.latency_points_ms must not be empty");
        }
        if s.latency_points_ms.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return cfg_err("sweep.latency_points_ms must be positive");
        }
        if s.latency_points_ms.windows(2).any(|p| p[0] >= p[1]) {
            return cfg_err("sweep.latency_points_ms must be sorted ascending");
        }
        if s.seeds.is_empty() {
            return cfg_err("sweep.seeds needs at least one seed");
        }
        let mut seeds = s.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != s.seeds.len() {
            return cfg_err("sweep.seeds must be distinct");
        }
        if s.methods.is_empty() {
            return cfg_err("sweep.methods must not be empty");
        }
        let mut methods = s.methods.clone();
        methods.sort_unstable();
        methods.dedup();
        if methods.len() != s.methods.len() {
            return cfg_err("sweep.methods must be distinct");
        }
        let m = &self.metrics;
        if !(m.e_ref.is_finite() && m.e_ref > 0.0) {
            return cfg_err("metrics.e_ref must be > 0");
        }
        if !(m.ema_alpha > 0.0 && m.ema_alpha <= 1.0) {
            return cfg_err("metrics.ema_alpha must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&m.beta) {
            return cfg_err("metrics.beta must lie in [0, 1]");
        }
        if !(m.calibration_target > 0.0 && m.calibration_target <= 1.0) {
            return cfg_err("metrics.calibration_target must lie in (0, 1]");
        }
        self.planner.schedule.validate().map_err(HarnessError::Config)?;
        if let SelectionPolicy::Softmax { tau } = self.planner.selection {
            if !(tau.is_finite() && tau > 0.0) {
                return cfg_err("planner.selection.tau must be > 0");
            }
        }
        let p = &self.perturbation;
        if !((0.0..=1.0).contains(&p.aav_failure_fraction)
            && (0.0..=1.0).contains(&p.failure_at_fraction)
            && p.gateway_downtime_factor.is_finite()
            && p.gateway_downtime_factor > 0.0)
        {
            return cfg_err("perturbation fractions must lie in [0, 1] and the downtime factor be > 0");
        }
        Ok(())
    }
}

/// A prompt and the simulated time it is issued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedPrompt {
    pub at_ms: f64,
    pub prompt: Prompt,
}

/// Draws the mission stream of one seed.
pub fn generate_workload(config: &ScenarioConfig, seed: u64) -> Result<Vec<TimedPrompt>, HarnessError> {
    let w = &config.workload;
    let lexicon = config.lexicon()?;
    let weights: Vec<f64> = w.mix.iter().map(|m| m.weight).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| HarnessError::Config(format!("workload.mix: {e}")))?;
    let origins = config.world.hosts_with_role(w.origin_role);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 3));
    let mut out = Vec::with_capacity(w.count);
    let mut t = match w.arrival {
        ArrivalSchedule::Fixed { start_ms, .. } | ArrivalSchedule::Poisson { start_ms, .. } => start_ms,
    };
    for k in 0..w.count {
        if k > 0 {
            t += match w.arrival {
                ArrivalSchedule::Fixed { interval_ms, .. } => interval_ms,
                ArrivalSchedule::Poisson { mean_interval_ms, .. } => {
                    -mean_interval_ms * rng.gen_range(f64::EPSILON..1.0f64).ln()
                }
            };
        }
        let entry = &w.mix[pick.sample(&mut rng)];
        let template = lexicon.get(&entry.template).expect("validated template");
        if origins.is_empty() {
            return cfg_err("workload.origin_role has no hosts");
        }
        let origin = origins[rng.gen_range(0..origins.len())];
        let region = w.regions[rng.gen_range(0..w.regions.len())].clone();
        let d = &template.defaults;
        let constraints = crate::prompt::ConstraintSet::new(
            entry.deadline_ms.unwrap_or(d.deadline_ms),
            entry.energy_budget_j.unwrap_or(d.energy_budget_j),
            d.priority,
        )
        .map_err(|e| HarnessError::Config(e.to_string()))?;
        let parameters = BTreeMap::from([
            ("origin".to_string(), Scalar::Int(origin as i64)),
            ("region".to_string(), Scalar::Text(region)),
        ]);
        out.push(TimedPrompt {
            at_ms: t,
            prompt: Prompt {
                id: format!("m{k:05}"),
                source: PromptSource::Operator,
                template_key: template.key.clone(),
                parameters,
                constraints,
            },
        });
    }
    Ok(out)
}
