use crate::controller::{ExecutionTrace, Outcome};
use crate::prompt::SubtaskKind;
use crate::registry::AgentId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Learned sampling logits per (subtask kind, agent). Absent entries are 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    logits: BTreeMap<(SubtaskKind, AgentId), f64>,
}

impl PriorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn logit(&self, kind: SubtaskKind, agent: AgentId) -> f64 {
        self.logits.get(&(kind, agent)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, kind: SubtaskKind, agent: AgentId, logit: f64) {
        assert!(logit.is_finite(), "prior logits must be finite");
        self.logits.insert((kind, agent), logit);
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }
}

/// Moves each executed pair's logit toward +1 (on-time success) or -1
/// (failure or finished past the deadline), one step per execution.
pub fn update_priors(priors: &PriorTable, trace: &ExecutionTrace, beta: f64) -> PriorTable {
    let mut out = priors.clone();
    for t in &trace.telemetry {
        let on_time = t.outcome == Outcome::Success && t.finished_ms <= trace.deadline_abs_ms;
        let r = if on_time { 1.0 } else { -1.0 };
        let old = out.logit(t.kind, t.agent_id);
        out.set(t.kind, t.agent_id, (1.0 - beta) * old + beta * r);
    }
    out
}
