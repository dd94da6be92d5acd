use super::{build_plan, ExecutionPlan, PlanError, PlanningProblem};
use crate::prompt::NodeId;
use crate::registry::{AgentId, HostId};
use std::collections::BTreeMap;

/// Static pipeline: every node bound to its top-scoring agent under the
/// given state, executed in lexicographic topological order.
pub fn fixed_graph_plan(problem: &PlanningProblem) -> Result<ExecutionPlan, PlanError> {
    let mut assignment = BTreeMap::new();
    for node in problem.graph.nodes() {
        let ranked = problem.registry.match_agents(node, problem.state);
        let (agent, _) = ranked.first().ok_or(PlanError::NoFeasibleAgent(node.node_id))?;
        assignment.insert(node.node_id, *agent);
    }
    lexicographic(assignment, problem)
}

/// Remote offloading: every node bound to the cloud-hosted agent of its
/// kind (lowest id when several qualify).
pub fn cloud_centric_plan(problem: &PlanningProblem, cloud: HostId) -> Result<ExecutionPlan, PlanError> {
    let mut assignment = BTreeMap::new();
    for node in problem.graph.nodes() {
        let agent: AgentId = problem
            .registry
            .profiles()
            .filter(|p| p.host == cloud && p.serves(node))
            .map(|p| p.agent_id)
            .min()
            .ok_or(PlanError::NoFeasibleAgent(node.node_id))?;
        assignment.insert(node.node_id, agent);
    }
    lexicographic(assignment, problem)
}

fn lexicographic(assignment: BTreeMap<NodeId, AgentId>, problem: &PlanningProblem) -> Result<ExecutionPlan, PlanError> {
    let mut plan = build_plan(assignment, problem)?;
    plan.order = problem.graph.topological_order();
    Ok(plan)
}
