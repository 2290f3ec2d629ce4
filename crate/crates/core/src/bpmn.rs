//! BPMN 2.0 process models: parsing a flat subset, fragment extraction and
//! re-serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use indexmap::IndexMap;
use petgraph::unionfind::UnionFind;
use quick_xml::escape::escape;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BPMN_NS: &str = "http://www.omg.org/spec/BPMN/20100524/MODEL";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BpmnError {
    #[error("XML error: {0}")]
    Xml(String),
    #[error("unsupported BPMN element <{0}>")]
    UnsupportedElement(String),
    #[error("sequence flow {flow} references missing node {missing}")]
    DanglingFlow { flow: String, missing: String },
    #[error("expected exactly one process, found {0}")]
    ProcessCount(usize),
    #[error("process has no start event")]
    MissingStartEvent,
    #[error("process has no end event")]
    MissingEndEvent,
    #[error("<{element}> lacks attribute {attribute}")]
    MissingAttribute { element: String, attribute: String },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("fragment is disconnected: {0:?}")]
    DisconnectedFragment(Vec<Vec<String>>),
    #[error("fragment needs at least one node")]
    EmptyFragment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    StartEvent,
    EndEvent,
    IntermediateEvent,
    Task,
    UserTask,
    ManualTask,
    ServiceTask,
    ExclusiveGateway,
    ParallelGateway,
}

impl NodeKind {
    fn from_element(local: &str) -> Option<Self> {
        Some(match local {
            "startEvent" => Self::StartEvent,
            "endEvent" => Self::EndEvent,
            "intermediateCatchEvent" | "intermediateThrowEvent" => Self::IntermediateEvent,
            "task" => Self::Task,
            "userTask" => Self::UserTask,
            "manualTask" => Self::ManualTask,
            "serviceTask" => Self::ServiceTask,
            "exclusiveGateway" => Self::ExclusiveGateway,
            "parallelGateway" => Self::ParallelGateway,
            _ => return None,
        })
    }

    fn element(self) -> &'static str {
        match self {
            Self::StartEvent => "startEvent",
            Self::EndEvent => "endEvent",
            Self::IntermediateEvent => "intermediateCatchEvent",
            Self::Task => "task",
            Self::UserTask => "userTask",
            Self::ManualTask => "manualTask",
            Self::ServiceTask => "serviceTask",
            Self::ExclusiveGateway => "exclusiveGateway",
            Self::ParallelGateway => "parallelGateway",
        }
    }

    pub fn is_task(self) -> bool {
        matches!(self, Self::Task | Self::UserTask | Self::ManualTask | Self::ServiceTask)
    }
}

/// Process children that carry no flow semantics and are skipped.
const IGNORED: [&str; 4] = ["documentation", "extensionElements", "textAnnotation", "association"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: String,
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceFlow {
    pub id: String,
    pub source: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lane {
    pub id: String,
    pub name: String,
    pub node_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub id: String,
    #[serde(default)]
    pub name: String,
    /// Flow nodes in document order.
    pub nodes: IndexMap<String, FlowNode>,
    pub flows: Vec<SequenceFlow>,
    #[serde(default)]
    pub lanes: Vec<Lane>,
}

/// Connected set of flow nodes tagged with the values it affects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub id: String,
    pub process_ref: String,
    pub node_ids: BTreeSet<String>,
    #[serde(default)]
    pub value_refs: BTreeSet<String>,
}

/// Collapse runs of whitespace to single spaces and trim.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn required(node: roxmltree::Node, attribute: &str) -> Result<String, BpmnError> {
    node.attribute(attribute)
        .map(str::to_string)
        .ok_or_else(|| BpmnError::MissingAttribute { element: node.tag_name().name().to_string(), attribute: attribute.to_string() })
}

fn collect_lanes(lane_set: roxmltree::Node, out: &mut Vec<Lane>) -> Result<(), BpmnError> {
    for lane in lane_set.children().filter(|n| n.is_element() && n.tag_name().name() == "lane") {
        let mut node_ids = BTreeSet::new();
        for child in lane.children().filter(|n| n.is_element()) {
            match child.tag_name().name() {
                "flowNodeRef" => {
                    node_ids.insert(child.text().unwrap_or("").trim().to_string());
                }
                "childLaneSet" => collect_lanes(child, out)?,
                "documentation" | "extensionElements" => {}
                other => return Err(BpmnError::UnsupportedElement(other.to_string())),
            }
        }
        out.push(Lane { id: required(lane, "id")?, name: lane.attribute("name").unwrap_or("").to_string(), node_ids });
    }
    Ok(())
}

pub fn parse_bpmn(xml: &str) -> Result<ProcessModel, BpmnError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| BpmnError::Xml(e.to_string()))?;
    let processes: Vec<_> = doc.descendants().filter(|n| n.is_element() && n.tag_name().name() == "process").collect();
    if processes.len() != 1 {
        return Err(BpmnError::ProcessCount(processes.len()));
    }
    let process = processes[0];
    let mut model = ProcessModel {
        id: required(process, "id")?,
        name: process.attribute("name").unwrap_or("").to_string(),
        nodes: IndexMap::new(),
        flows: Vec::new(),
        lanes: Vec::new(),
    };
    let mut seen = BTreeSet::new();
    for child in process.children().filter(|n| n.is_element()) {
        let local = child.tag_name().name();
        if let Some(kind) = NodeKind::from_element(local) {
            let id = required(child, "id")?;
            if !seen.insert(id.clone()) {
                return Err(BpmnError::DuplicateId(id));
            }
            let name = child.attribute("name").unwrap_or("").to_string();
            model.nodes.insert(id.clone(), FlowNode { id, name, kind });
        } else if local == "sequenceFlow" {
            let id = required(child, "id")?;
            if !seen.insert(id.clone()) {
                return Err(BpmnError::DuplicateId(id));
            }
            model.flows.push(SequenceFlow {
                id,
                source: required(child, "sourceRef")?,
                target: required(child, "targetRef")?,
                name: child.attribute("name").map(str::to_string),
            });
        } else if local == "laneSet" {
            collect_lanes(child, &mut model.lanes)?;
        } else if !IGNORED.contains(&local) {
            return Err(BpmnError::UnsupportedElement(local.to_string()));
        }
    }
    for flow in &model.flows {
        for end in [&flow.source, &flow.target] {
            if !model.nodes.contains_key(end) {
                return Err(BpmnError::DanglingFlow { flow: flow.id.clone(), missing: end.clone() });
            }
        }
    }
    for lane in &model.lanes {
        if let Some(missing) = lane.node_ids.iter().find(|id| !model.nodes.contains_key(*id)) {
            return Err(BpmnError::UnknownNode(missing.clone()));
        }
    }
    if !model.nodes.values().any(|n| n.kind == NodeKind::StartEvent) {
        return Err(BpmnError::MissingStartEvent);
    }
    if !model.nodes.values().any(|n| n.kind == NodeKind::EndEvent) {
        return Err(BpmnError::MissingEndEvent);
    }
    Ok(model)
}

/// Serialize nodes, flows and lanes back to BPMN XML.
pub fn write_bpmn(model: &ProcessModel) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<bpmn:definitions xmlns:bpmn=\"{BPMN_NS}\" id=\"definitions-{}\">", escape(&model.id));
    let _ = writeln!(out, "  <bpmn:process id=\"{}\" name=\"{}\">", escape(&model.id), escape(&model.name));
    if !model.lanes.is_empty() {
        out.push_str("    <bpmn:laneSet>\n");
        for lane in &model.lanes {
            let _ = writeln!(out, "      <bpmn:lane id=\"{}\" name=\"{}\">", escape(&lane.id), escape(&lane.name));
            for id in &lane.node_ids {
                let _ = writeln!(out, "        <bpmn:flowNodeRef>{}</bpmn:flowNodeRef>", escape(id));
            }
            out.push_str("      </bpmn:lane>\n");
        }
        out.push_str("    </bpmn:laneSet>\n");
    }
    for node in model.nodes.values() {
        let _ = writeln!(out, "    <bpmn:{} id=\"{}\" name=\"{}\"/>", node.kind.element(), escape(&node.id), escape(&node.name));
    }
    for flow in &model.flows {
        let name = flow.name.as_ref().map(|n| format!(" name=\"{}\"", escape(n))).unwrap_or_default();
        let _ = writeln!(
            out,
            "    <bpmn:sequenceFlow id=\"{}\" sourceRef=\"{}\" targetRef=\"{}\"{name}/>",
            escape(&flow.id),
            escape(&flow.source),
            escape(&flow.target)
        );
    }
    out.push_str("  </bpmn:process>\n</bpmn:definitions>\n");
    out
}

impl ProcessModel {
    /// Ids of nodes whose normalized name equals the normalized `name`.
    pub fn nodes_named(&self, name: &str) -> Vec<&FlowNode> {
        let wanted = normalize_name(name);
        self.nodes.values().filter(|n| normalize_name(&n.name) == wanted).collect()
    }

    /// Resolve each entry as a node id, or else as a unique node name.
    pub fn resolve_nodes<'a>(&self, refs: impl IntoIterator<Item = &'a str>) -> Result<BTreeSet<String>, BpmnError> {
        refs.into_iter()
            .map(|r| {
                if self.nodes.contains_key(r) {
                    return Ok(r.to_string());
                }
                match self.nodes_named(r).as_slice() {
                    [one] => Ok(one.id.clone()),
                    _ => Err(BpmnError::UnknownNode(r.to_string())),
                }
            })
            .collect()
    }

    pub fn task_names(&self) -> Vec<&str> {
        self.nodes.values().filter(|n| n.kind.is_task()).map(|n| n.name.as_str()).collect()
    }

    /// Connected components of the selection under undirected sequence flows,
    /// each sorted, ordered by first member.
    pub fn components(&self, selection: &BTreeSet<String>) -> Vec<Vec<String>> {
        let ids: Vec<&String> = selection.iter().collect();
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut uf = UnionFind::<usize>::new(ids.len());
        for flow in &self.flows {
            if let (Some(&a), Some(&b)) = (index.get(flow.source.as_str()), index.get(flow.target.as_str())) {
                uf.union(a, b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            groups.entry(uf.find(i)).or_default().push((*id).clone());
        }
        let mut out: Vec<Vec<String>> = groups.into_values().collect();
        out.sort();
        out
    }
}

/// Issues `fragment-1`, `fragment-2`, … skipping ids already taken.
#[derive(Debug, Clone, Default)]
pub struct FragmentIds {
    taken: BTreeSet<String>,
    next: u32,
}

impl FragmentIds {
    pub fn new<'a>(existing: impl IntoIterator<Item = &'a str>) -> Self {
        Self { taken: existing.into_iter().map(str::to_string).collect(), next: 1 }
    }

    pub fn fresh(&mut self) -> String {
        loop {
            let id = format!("fragment-{}", self.next.max(1));
            self.next = self.next.max(1) + 1;
            if self.taken.insert(id.clone()) {
                return id;
            }
        }
    }
}

/// Build a fragment from node ids, which must form one connected region.
pub fn extract_fragment(
    model: &ProcessModel,
    node_ids: &BTreeSet<String>,
    value_refs: &BTreeSet<String>,
    ids: &mut FragmentIds,
) -> Result<Fragment, BpmnError> {
    if node_ids.is_empty() {
        return Err(BpmnError::EmptyFragment);
    }
    if let Some(missing) = node_ids.iter().find(|id| !model.nodes.contains_key(*id)) {
        return Err(BpmnError::UnknownNode(missing.clone()));
    }
    let components = model.components(node_ids);
    if components.len() > 1 {
        return Err(BpmnError::DisconnectedFragment(components));
    }
    Ok(Fragment { id: ids.fresh(), process_ref: model.id.clone(), node_ids: node_ids.clone(), value_refs: value_refs.clone() })
}

/// One single-node fragment per node named `activity_name`, in document order.
pub fn hygiene_fragments(model: &ProcessModel, activity_name: &str) -> Vec<Fragment> {
    let slug: String = normalize_name(activity_name).to_lowercase().replace(' ', "-");
    model
        .nodes_named(activity_name)
        .into_iter()
        .enumerate()
        .map(|(i, node)| Fragment {
            id: format!("{slug}-{}", i + 1),
            process_ref: model.id.clone(),
            node_ids: BTreeSet::from([node.id.clone()]),
            value_refs: BTreeSet::new(),
        })
        .collect()
}
