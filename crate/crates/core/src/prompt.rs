//! Prompt cognition: mission prompts in, model-agnostic task DAGs out.
//!
//! A prompt is either a structured JSON document naming a mission template
//! or a free-text line that is matched against the template lexicon by
//! keyword. Templates expand into subtasks and dependency pairs, which are
//! then compiled into a validated [`TaskGraph`].

use crate::canonical::to_canonical;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

/// Template lexicon shipped with the crate.
pub const DEFAULT_LEXICON: &str = include_str!("../data/templates.json");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("type mismatch for field `{0}`")]
    TypeMismatch(String),
    #[error("invalid value for field `{0}`")]
    InvalidValue(String),
    #[error("malformed document: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("dependency ({0}, {1}) out of range")]
    DependencyOutOfRange(usize, usize),
    #[error("subtask {0} depends on itself")]
    SelfDependency(usize),
    #[error("duplicate dependency ({0}, {1})")]
    DuplicateDependency(usize, usize),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("edge endpoint {0} is not a node")]
    UnknownNode(NodeId),
    #[error("cyclic dependency: {0:?}")]
    CyclicDependency(Vec<NodeId>),
    #[error("invalid subtask {0}: workload must be > 0 and payload >= 0")]
    InvalidSubtask(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSource {
    Operator,
    Sensor,
    Controller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Low,
    Normal,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskKind {
    Preprocess,
    Detect,
    Track,
    Classify,
    Summarize,
    Coordinate,
    Relay,
}

impl SubtaskKind {
    pub const ALL: [SubtaskKind; 7] = [
        SubtaskKind::Preprocess,
        SubtaskKind::Detect,
        SubtaskKind::Track,
        SubtaskKind::Classify,
        SubtaskKind::Summarize,
        SubtaskKind::Coordinate,
        SubtaskKind::Relay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SubtaskKind::Preprocess => "preprocess",
            SubtaskKind::Detect => "detect",
            SubtaskKind::Track => "track",
            SubtaskKind::Classify => "classify",
            SubtaskKind::Summarize => "summarize",
            SubtaskKind::Coordinate => "coordinate",
            SubtaskKind::Relay => "relay",
        }
    }
}

impl fmt::Display for SubtaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Video,
    Telemetry,
    Audio,
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub deadline_ms: u64,
    pub energy_budget_j: f64,
    pub priority: Priority,
}

impl ConstraintSet {
    pub fn new(deadline_ms: u64, energy_budget_j: f64, priority: Priority) -> Result<Self, PromptError> {
        if deadline_ms == 0 {
            return Err(PromptError::InvalidValue("deadline_ms".into()));
        }
        if !(energy_budget_j.is_finite() && energy_budget_j > 0.0) {
            return Err(PromptError::InvalidValue("energy_budget_j".into()));
        }
        Ok(Self { deadline_ms, energy_budget_j, priority })
    }
}

/// Scalar parameter value carried by a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Scalar {
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Scalar::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Scalar::Bool(b) => b.to_string(),
            Scalar::Int(i) => i.to_string(),
            Scalar::Float(x) => crate::canonical::format_float(*x),
            Scalar::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: String,
    pub source: PromptSource,
    pub template_key: String,
    pub parameters: BTreeMap<String, Scalar>,
    pub constraints: ConstraintSet,
}

impl Prompt {
    pub fn canonical(&self) -> String {
        to_canonical(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub kind: SubtaskKind,
    pub input_modality: Modality,
    pub output_modality: Modality,
    pub workload_gflop: f64,
    pub payload_mb: f64,
}

impl SubtaskSpec {
    pub fn is_valid(&self) -> bool {
        self.workload_gflop.is_finite()
            && self.workload_gflop > 0.0
            && self.payload_mb.is_finite()
            && self.payload_mb >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskIntent {
    pub objective: String,
    pub subtasks: Vec<SubtaskSpec>,
    pub dependencies: Vec<(usize, usize)>,
    pub constraints: ConstraintSet,
}

impl TaskIntent {
    pub fn canonical(&self) -> String {
        to_canonical(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub node_id: NodeId,
    pub spec: SubtaskSpec,
}

/// Validated directed acyclic task graph. Nodes carry only *what* to do;
/// agent bindings live in execution plans.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskGraph {
    nodes: Vec<TaskNode>,
    edges: Vec<(NodeId, NodeId)>,
    constraints: ConstraintSet,
    #[serde(skip)]
    preds: Vec<Vec<usize>>,
    #[serde(skip)]
    succs: Vec<Vec<usize>>,
    #[serde(skip)]
    position: BTreeMap<NodeId, usize>,
}

impl TaskGraph {
    /// Builds a graph from arbitrary (not necessarily contiguous) node ids,
    /// rejecting duplicate ids, dangling or duplicate edges and cycles.
    pub fn new(
        nodes: Vec<TaskNode>,
        edges: Vec<(NodeId, NodeId)>,
        constraints: ConstraintSet,
    ) -> Result<Self, GraphError> {
        let mut position = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if !n.spec.is_valid() {
                return Err(GraphError::InvalidSubtask(n.node_id.0));
            }
            if position.insert(n.node_id, i).is_some() {
                return Err(GraphError::DuplicateNode(n.node_id));
            }
        }
        let mut preds = vec![Vec::new(); nodes.len()];
        let mut succs = vec![Vec::new(); nodes.len()];
        let mut seen = BTreeSet::new();
        for &(a, b) in &edges {
            let ia = *position.get(&a).ok_or(GraphError::UnknownNode(a))?;
            let ib = *position.get(&b).ok_or(GraphError::UnknownNode(b))?;
            if a == b {
                return Err(GraphError::SelfDependency(a.0));
            }
            if !seen.insert((a, b)) {
                return Err(GraphError::DuplicateDependency(a.0, b.0));
            }
            succs[ia].push(ib);
            preds[ib].push(ia);
        }
        for list in preds.iter_mut().chain(succs.iter_mut()) {
            list.sort_unstable();
        }
        let graph = Self { nodes, edges, constraints, preds, succs, position };
        if let Some(cycle) = graph.find_cycle() {
            return Err(GraphError::CyclicDependency(cycle));
        }
        Ok(graph)
    }

    pub fn nodes(&self) -> &[TaskNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Dense index of a node id.
    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&TaskNode> {
        self.position(id).map(|i| &self.nodes[i])
    }

    /// Predecessor positions of the node at dense index `i`.
    pub fn preds_of(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    pub fn succs_of(&self, i: usize) -> &[usize] {
        &self.succs[i]
    }

    /// Kahn's algorithm; ties resolved by smallest node id.
    pub fn topological_order(&self) -> Vec<NodeId> {
        let mut indeg: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<(NodeId, usize)> =
            indeg.iter().enumerate().filter(|(_, &d)| d == 0).map(|(i, _)| (self.nodes[i].node_id, i)).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(first) = ready.pop_first() {
            order.push(first.0);
            for &s in &self.succs[first.1] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.insert((self.nodes[s].node_id, s));
                }
            }
        }
        order
    }

    /// Returns one cycle (as node ids, first node repeated at the end) if any.
    fn find_cycle(&self) -> Option<Vec<NodeId>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let n = self.nodes.len();
        let mut color = vec![0u8; n];
        let mut parent = vec![usize::MAX; n];
        for root in 0..n {
            if color[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            color[root] = 1;
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next < self.succs[v].len() {
                    let w = self.succs[v][*next];
                    *next += 1;
                    match color[w] {
                        0 => {
                            color[w] = 1;
                            parent[w] = v;
                            stack.push((w, 0));
                        }
                        1 => {
                            let mut cycle = vec![self.nodes[w].node_id];
                            let mut cur = v;
                            let mut back = vec![];
                            while cur != w {
                                back.push(self.nodes[cur].node_id);
                                cur = parent[cur];
                            }
                            back.reverse();
                            cycle.extend(back);
                            cycle.push(self.nodes[w].node_id);
                            return Some(cycle);
                        }
                        _ => {}
                    }
                } else {
                    color[v] = 2;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Induced subgraph over `keep`, preserving node ids and constraints.
    pub fn subgraph(&self, keep: &BTreeSet<NodeId>, constraints: ConstraintSet) -> TaskGraph {
        let nodes: Vec<TaskNode> = self.nodes.iter().filter(|n| keep.contains(&n.node_id)).copied().collect();
        let edges: Vec<(NodeId, NodeId)> =
            self.edges.iter().filter(|(a, b)| keep.contains(a) && keep.contains(b)).copied().collect();
        TaskGraph::new(nodes, edges, constraints).expect("induced subgraph of a DAG is a DAG")
    }

    pub fn canonical(&self) -> String {
        to_canonical(self)
    }
}

/// Layer k holds exactly the nodes whose longest incoming path has k edges.
pub fn topological_layers(graph: &TaskGraph) -> Vec<Vec<NodeId>> {
    let mut depth = vec![0usize; graph.len()];
    let order = graph.topological_order();
    for id in &order {
        let i = graph.position(*id).expect("id from graph");
        depth[i] = graph.preds_of(i).iter().map(|&p| depth[p] + 1).max().unwrap_or(0);
    }
    let mut layers: Vec<Vec<NodeId>> = Vec::new();
    for (i, node) in graph.nodes().iter().enumerate() {
        if layers.len() <= depth[i] {
            layers.resize(depth[i] + 1, Vec::new());
        }
        layers[depth[i]].push(node.node_id);
    }
    for layer in &mut layers {
        layer.sort();
    }
    layers
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Text,
    Integer,
    Number,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub ty: ParamType,
    #[serde(default)]
    pub default: Option<Scalar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateDefaults {
    pub deadline_ms: u64,
    pub energy_budget_j: f64,
    pub priority: Priority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionTemplate {
    pub key: String,
    pub objective: String,
    pub keywords: Vec<String>,
    #[serde(default)]
    pub parameters: BTreeMap<String, ParamSpec>,
    pub defaults: TemplateDefaults,
    pub subtasks: Vec<SubtaskSpec>,
    pub dependencies: Vec<(usize, usize)>,
}

/// The set of mission templates prompts can refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateLexicon {
    templates: Vec<MissionTemplate>,
}

impl TemplateLexicon {
    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let lex: TemplateLexicon = serde_json::from_str(text).map_err(|e| PromptError::Malformed(e.to_string()))?;
        let mut keys = BTreeSet::new();
        for t in &lex.templates {
            if !keys.insert(t.key.as_str()) {
                return Err(PromptError::Malformed(format!("duplicate template `{}`", t.key)));
            }
            if t.subtasks.is_empty() {
                return Err(PromptError::Malformed(format!("template `{}` has no subtasks", t.key)));
            }
            ConstraintSet::new(t.defaults.deadline_ms, t.defaults.energy_budget_j, t.defaults.priority)?;
            for (name, p) in &t.parameters {
                if let Some(d) = &p.default {
                    if !type_matches(p.ty, d) {
                        return Err(PromptError::TypeMismatch(name.clone()));
                    }
                }
            }
        }
        Ok(lex)
    }

    /// Validates an in-memory template list the same way as a document.
    pub fn from_templates(templates: Vec<MissionTemplate>) -> Result<Self, PromptError> {
        let doc =
            serde_json::to_string(&TemplateLexicon { templates }).map_err(|e| PromptError::Malformed(e.to_string()))?;
        Self::from_json(&doc)
    }

    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_LEXICON).expect("shipped lexicon is valid")
    }

    pub fn get(&self, key: &str) -> Option<&MissionTemplate> {
        self.templates.iter().find(|t| t.key == key)
    }

    pub fn templates(&self) -> &[MissionTemplate] {
        &self.templates
    }

    /// Longest case-insensitive keyword hit; ties go to the template listed first.
    pub fn match_text(&self, text: &str) -> Option<&MissionTemplate> {
        let lower = text.to_lowercase();
        let mut best: Option<(usize, &MissionTemplate)> = None;
        for t in &self.templates {
            for kw in &t.keywords {
                let kw = kw.to_lowercase();
                if !kw.is_empty() && lower.contains(&kw) && best.is_none_or(|(len, _)| kw.len() > len) {
                    best = Some((kw.len(), t));
                }
            }
        }
        best.map(|(_, t)| t)
    }
}

fn type_matches(ty: ParamType, v: &Scalar) -> bool {
    matches!(
        (ty, v),
        (ParamType::Text, Scalar::Text(_))
            | (ParamType::Integer, Scalar::Int(_))
            | (ParamType::Number, Scalar::Float(_))
            | (ParamType::Number, Scalar::Int(_))
            | (ParamType::Bool, Scalar::Bool(_))
    )
}

const RESERVED: [&str; 6] = ["id", "source", "template", "deadline_ms", "energy_budget_j", "priority"];

/// Parses a structured JSON prompt document or, for anything that does not
/// start with `{`, a free-text mission line.
pub fn parse_prompt(document: &str, lexicon: &TemplateLexicon) -> Result<Prompt, PromptError> {
    let trimmed = document.trim();
    if trimmed.starts_with('{') {
        parse_structured(trimmed, lexicon)
    } else {
        parse_free_text(trimmed, lexicon)
    }
}

fn parse_structured(text: &str, lexicon: &TemplateLexicon) -> Result<Prompt, PromptError> {
    let value: Value = serde_json::from_str(text).map_err(|e| PromptError::Malformed(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| PromptError::Malformed("prompt document must be an object".into()))?;

    let template_key = match obj.get("template") {
        None => return Err(PromptError::MissingField("template".into())),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(PromptError::TypeMismatch("template".into())),
    };
    let template = lexicon.get(&template_key).ok_or_else(|| PromptError::UnknownTemplate(template_key.clone()))?;

    let deadline_ms = match obj.get("deadline_ms") {
        None => return Err(PromptError::MissingField("deadline_ms".into())),
        Some(v) => v.as_u64().ok_or_else(|| PromptError::TypeMismatch("deadline_ms".into()))?,
    };
    let energy_budget_j = match obj.get("energy_budget_j") {
        None => return Err(PromptError::MissingField("energy_budget_j".into())),
        Some(v) => v.as_f64().ok_or_else(|| PromptError::TypeMismatch("energy_budget_j".into()))?,
    };
    let priority = match obj.get("priority") {
        None => template.defaults.priority,
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| PromptError::TypeMismatch("priority".into()))?,
    };
    let source = match obj.get("source") {
        None => PromptSource::Operator,
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| PromptError::TypeMismatch("source".into()))?,
    };
    let constraints = ConstraintSet::new(deadline_ms, energy_budget_j, priority)?;

    let mut parameters = BTreeMap::new();
    for (k, v) in obj {
        if RESERVED.contains(&k.as_str()) {
            continue;
        }
        let scalar = json_scalar(v).ok_or_else(|| PromptError::TypeMismatch(k.clone()))?;
        parameters.insert(k.clone(), scalar);
    }
    let parameters = complete_parameters(template, parameters)?;

    let id = match obj.get("id") {
        None => String::new(),
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => return Err(PromptError::TypeMismatch("id".into())),
    };
    Ok(finish(id, source, template_key, parameters, constraints))
}

fn parse_free_text(text: &str, lexicon: &TemplateLexicon) -> Result<Prompt, PromptError> {
    if text.is_empty() {
        return Err(PromptError::Malformed("empty prompt".into()));
    }
    let template = lexicon.match_text(text).ok_or_else(|| PromptError::UnknownTemplate(text.to_string()))?;
    let d = &template.defaults;
    let constraints = ConstraintSet::new(d.deadline_ms, d.energy_budget_j, d.priority)?;
    let parameters = complete_parameters(template, BTreeMap::new())?;
    Ok(finish(String::new(), PromptSource::Operator, template.key.clone(), parameters, constraints))
}

fn complete_parameters(
    template: &MissionTemplate,
    mut given: BTreeMap<String, Scalar>,
) -> Result<BTreeMap<String, Scalar>, PromptError> {
    for (name, spec) in &template.parameters {
        match given.get_mut(name) {
            Some(v) => {
                // integers are acceptable where numbers are expected
                if spec.ty == ParamType::Number {
                    if let Scalar::Int(i) = *v {
                        *v = Scalar::Float(i as f64);
                    }
                }
                if !type_matches(spec.ty, v) {
                    return Err(PromptError::TypeMismatch(name.clone()));
                }
            }
            None => match &spec.default {
                Some(d) => {
                    given.insert(name.clone(), d.clone());
                }
                None => return Err(PromptError::MissingField(name.clone())),
            },
        }
    }
    Ok(given)
}

fn finish(
    id: String,
    source: PromptSource,
    template_key: String,
    parameters: BTreeMap<String, Scalar>,
    constraints: ConstraintSet,
) -> Prompt {
    let mut prompt = Prompt { id, source, template_key, parameters, constraints };
    if prompt.id.is_empty() {
        prompt.id = format!("p-{:016x}", fnv1a(prompt.canonical().as_bytes()));
    }
    prompt
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn json_scalar(v: &Value) -> Option<Scalar> {
    match v {
        Value::Bool(b) => Some(Scalar::Bool(*b)),
        Value::Number(n) => n.as_i64().map(Scalar::Int).or_else(|| n.as_f64().map(Scalar::Float)),
        Value::String(s) => Some(Scalar::Text(s.clone())),
        _ => None,
    }
}

/// Expands the prompt's template into subtasks and dependency pairs.
///
/// Panics if the template is missing from the lexicon; [`parse_prompt`]
/// guarantees it is present for any prompt it returns.
pub fn extract_intent(prompt: &Prompt, lexicon: &TemplateLexicon) -> TaskIntent {
    let template = lexicon
        .get(&prompt.template_key)
        .unwrap_or_else(|| panic!("template `{}` vanished from the lexicon", prompt.template_key));
    let mut objective = template.objective.clone();
    for (k, v) in &prompt.parameters {
        objective = objective.replace(&format!("{{{k}}}"), &v.render());
    }
    TaskIntent {
        objective,
        subtasks: template.subtasks.clone(),
        dependencies: template.dependencies.clone(),
        constraints: prompt.constraints,
    }
}

pub fn compile_to_graph(intent: &TaskIntent) -> Result<TaskGraph, GraphError> {
    let n = intent.subtasks.len();
    let mut seen = BTreeSet::new();
    for &(a, b) in &intent.dependencies {
        if a >= n || b >= n {
            return Err(GraphError::DependencyOutOfRange(a, b));
        }
        if a == b {
            return Err(GraphError::SelfDependency(a));
        }
        if !seen.insert((a, b)) {
            return Err(GraphError::DuplicateDependency(a, b));
        }
    }
    let nodes =
        intent.subtasks.iter().enumerate().map(|(i, spec)| TaskNode { node_id: NodeId(i), spec: *spec }).collect();
    let edges = intent.dependencies.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect();
    TaskGraph::new(nodes, edges, intent.constraints)
}

/// Breadth-first reachability check used by callers that only need a yes/no.
pub fn reaches(graph: &TaskGraph, from: NodeId, to: NodeId) -> bool {
    let (Some(s), Some(t)) = (graph.position(from), graph.position(to)) else {
        return false;
    };
    let mut seen = vec![false; graph.len()];
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        if v == t {
            return true;
        }
        for &w in graph.succs_of(v) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    false
}
