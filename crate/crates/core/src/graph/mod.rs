//! The workflow graph value: typed nodes, labeled edges and a prompt table.

pub mod ports;
pub mod registry;

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use registry::Registry;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("invalid node id {0:?}: expected a letter or underscore followed by letters, digits or underscores")]
    InvalidId(String),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("dangling endpoint {endpoint} on edge {from}->{to}")]
    DanglingEndpoint { endpoint: NodeId, from: NodeId, to: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} of kind {kind} has no input port {label:?}")]
    UnknownPort { node: NodeId, kind: NodeKind, label: String },
    #[error("node {0} has no output")]
    NoOutput(NodeId),
    #[error("graph has no entry interface node")]
    MissingEntry,
    #[error("graph has no exit interface node")]
    MissingExit,
    #[error("unknown domain {0:?}, expected math or code")]
    UnknownDomain(String),
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => false,
    }
}

/// Symbolic node identifier, `[A-Za-z_][A-Za-z0-9_]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if is_identifier(&value) {
            Ok(NodeId(value))
        } else {
            Err(GraphError::InvalidId(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        NodeId::new(s).map_err(serde::de::Error::custom)
    }
}

impl FromStr for NodeId {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeId::new(s)
    }
}

impl Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for NodeId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Operator type tag. Registry-extensible, so stored as a name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeKind(String);

impl NodeKind {
    pub const INTERFACE: &'static str = "Interface";
    /// Placeholder for nodes that carry no class assignment.
    pub const UNCLASSIFIED: &'static str = "Unclassified";

    pub fn new(name: impl Into<String>) -> Self {
        NodeKind(name.into())
    }

    pub fn interface() -> Self {
        NodeKind(Self::INTERFACE.into())
    }

    pub fn unclassified() -> Self {
        NodeKind(Self::UNCLASSIFIED.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_interface(&self) -> bool {
        self.0 == Self::INTERFACE
    }

    pub fn is_unclassified(&self) -> bool {
        self.0 == Self::UNCLASSIFIED
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for NodeKind {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for NodeKind {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub attributes: BTreeMap<String, String>,
    pub display_label: String,
}

impl Node {
    pub fn new(id: NodeId, kind: NodeKind, display_label: impl Into<String>) -> Self {
        Node { id, kind, attributes: BTreeMap::new(), display_label: display_label.into() }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub label: Option<String>,
}

impl Edge {
    pub fn new(source: NodeId, target: NodeId, label: Option<String>) -> Self {
        Edge { source, target, label }
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "{} --> |{}| {}", self.source, l, self.target),
            None => write!(f, "{} --> {}", self.source, self.target),
        }
    }
}

/// Named prompt texts referenced from node attributes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTable {
    entries: BTreeMap<String, String>,
}

impl PromptTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, text: impl Into<String>) -> Option<String> {
        self.entries.insert(name.into(), text.into())
    }

    pub fn remove(&mut self, name: &str) -> Option<String> {
        self.entries.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Looks a reference up by exact key, then by its upper-case spelling
    /// (`simple_solver_1` finds `SIMPLE_SOLVER_1`).
    pub fn resolve(&self, reference: &str) -> Option<(&str, &str)> {
        if let Some((k, v)) = self.entries.get_key_value(reference) {
            return Some((k.as_str(), v.as_str()));
        }
        let upper = reference.to_ascii_uppercase();
        self.entries.get_key_value(upper.as_str()).map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FromIterator<(String, String)> for PromptTable {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        PromptTable { entries: iter.into_iter().collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Math,
    Code,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Math => "math",
            Domain::Code => "code",
        }
    }
}

impl FromStr for Domain {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "math" => Ok(Domain::Math),
            "code" => Ok(Domain::Code),
            _ => Err(GraphError::UnknownDomain(s.to_string())),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Role an Interface node plays, derived from its degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InterfaceRole {
    Entry,
    Exit,
    /// Has both incoming and outgoing edges; never valid.
    Interior,
}

/// Immutable workflow graph. Every rewrite produces a new value.
///
/// Nodes are keyed by id and edges kept sorted, so two graphs built from the
/// same elements in any order compare equal. The registry is not part of
/// equality.
#[derive(Debug, Clone)]
pub struct WorkflowGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<Edge>,
    prompts: PromptTable,
    domain: Domain,
    registry: Arc<Registry>,
    outgoing: BTreeMap<NodeId, Vec<usize>>,
    incoming: BTreeMap<NodeId, Vec<usize>>,
}

impl PartialEq for WorkflowGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.prompts == other.prompts && self.domain == other.domain
    }
}

impl Eq for WorkflowGraph {}

/// Builds a graph with adjacency indexes. Self-loops and repeated edges are
/// kept so validation can report them.
pub fn build_graph(
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    prompts: PromptTable,
    domain: Domain,
    registry: Arc<Registry>,
) -> Result<WorkflowGraph, GraphError> {
    let mut by_id = BTreeMap::new();
    for node in nodes {
        if by_id.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        by_id.insert(node.id.clone(), node);
    }
    for e in &edges {
        for endpoint in [&e.source, &e.target] {
            if !by_id.contains_key(endpoint) {
                return Err(GraphError::DanglingEndpoint {
                    endpoint: endpoint.clone(),
                    from: e.source.clone(),
                    to: e.target.clone(),
                });
            }
        }
    }
    let mut edges = edges;
    edges.sort();
    let mut outgoing: BTreeMap<NodeId, Vec<usize>> = by_id.keys().map(|k| (k.clone(), Vec::new())).collect();
    let mut incoming = outgoing.clone();
    for (i, e) in edges.iter().enumerate() {
        outgoing.get_mut(&e.source).expect("checked").push(i);
        incoming.get_mut(&e.target).expect("checked").push(i);
    }
    Ok(WorkflowGraph { nodes: by_id, edges, prompts, domain, registry, outgoing, incoming })
}

impl WorkflowGraph {
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, source: &str, target: &str) -> bool {
        self.outgoing
            .get(source)
            .is_some_and(|out| out.iter().any(|&i| self.edges[i].target.as_str() == target))
    }

    pub fn prompts(&self) -> &PromptTable {
        &self.prompts
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn registry_arc(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn in_degree(&self, id: &str) -> usize {
        self.incoming.get(id).map_or(0, Vec::len)
    }

    pub fn out_degree(&self, id: &str) -> usize {
        self.outgoing.get(id).map_or(0, Vec::len)
    }

    pub fn incoming_edges(&self, id: &str) -> impl Iterator<Item = &Edge> {
        self.incoming.get(id).into_iter().flatten().map(move |&i| &self.edges[i])
    }

    pub fn outgoing_edges(&self, id: &str) -> impl Iterator<Item = &Edge> {
        self.outgoing.get(id).into_iter().flatten().map(move |&i| &self.edges[i])
    }

    /// Incoming neighbours with edge labels, sorted by source id then label.
    pub fn predecessors(&self, id: &str) -> Result<Vec<(NodeId, Option<String>)>, GraphError> {
        let idx = self.incoming.get(id).ok_or_else(|| unknown(id))?;
        Ok(idx.iter().map(|&i| (self.edges[i].source.clone(), self.edges[i].label.clone())).collect())
    }

    /// Outgoing neighbours with edge labels, sorted by target id then label.
    pub fn successors(&self, id: &str) -> Result<Vec<(NodeId, Option<String>)>, GraphError> {
        let idx = self.outgoing.get(id).ok_or_else(|| unknown(id))?;
        Ok(idx.iter().map(|&i| (self.edges[i].target.clone(), self.edges[i].label.clone())).collect())
    }

    pub fn interface_role(&self, id: &str) -> Option<InterfaceRole> {
        let node = self.nodes.get(id)?;
        if !node.kind.is_interface() {
            return None;
        }
        let (i, o) = (self.in_degree(id), self.out_degree(id));
        let hinted_exit = self.registry.interface.exit_hints.iter().any(|h| h == id);
        Some(match (i, o) {
            (_, 0) if i > 0 || hinted_exit => InterfaceRole::Exit,
            (0, _) => InterfaceRole::Entry,
            _ => InterfaceRole::Interior,
        })
    }

    /// Interface nodes acting as entries, sorted by id.
    pub fn entries(&self) -> Vec<&NodeId> {
        self.nodes.keys().filter(|id| self.interface_role(id.as_str()) == Some(InterfaceRole::Entry)).collect()
    }

    pub fn exits(&self) -> Vec<&NodeId> {
        self.nodes.keys().filter(|id| self.interface_role(id.as_str()) == Some(InterfaceRole::Exit)).collect()
    }

    /// The entry carrying the problem payload, if exactly identifiable.
    pub fn primary_entry(&self) -> Option<&NodeId> {
        let default = self.registry.interface.default_payload.as_str();
        self.entries().into_iter().find(|id| self.registry.interface.payload_of(id.as_str()) == default)
    }

    pub fn exit(&self) -> Option<&NodeId> {
        let exits = self.exits();
        if exits.len() == 1 {
            Some(exits[0])
        } else {
            None
        }
    }

    /// Payload type delivered by an entry with the given id.
    pub fn entry_payload(&self, id: &str) -> &str {
        self.registry.interface.payload_of(id)
    }

    /// Payload types offered by the graph's entries.
    pub fn available_payloads(&self) -> BTreeSet<&str> {
        self.entries().into_iter().map(|id| self.entry_payload(id.as_str())).collect()
    }

    /// Forward closure from every entry.
    pub fn reachable_from_entry(&self) -> Result<BTreeSet<NodeId>, GraphError> {
        let entries = self.entries();
        if entries.is_empty() {
            return Err(GraphError::MissingEntry);
        }
        Ok(self.closure(entries.into_iter().cloned(), true))
    }

    /// Backward closure from the exit nodes.
    pub fn reaches_exit(&self) -> Result<BTreeSet<NodeId>, GraphError> {
        let exits = self.exits();
        if exits.is_empty() {
            return Err(GraphError::MissingExit);
        }
        Ok(self.closure(exits.into_iter().cloned(), false))
    }

    pub(crate) fn closure(&self, start: impl IntoIterator<Item = NodeId>, forward: bool) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<NodeId> = start.into_iter().collect();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id.clone()) {
                continue;
            }
            let next: Vec<&NodeId> = if forward {
                self.outgoing_edges(id.as_str()).map(|e| &e.target).collect()
            } else {
                self.incoming_edges(id.as_str()).map(|e| &e.source).collect()
            };
            queue.extend(next.into_iter().filter(|n| !seen.contains(*n)).cloned());
        }
        seen
    }

    /// Kahn order with ties broken by id. Returns the order and the ids left
    /// over when the graph has a cycle.
    pub fn topological_order(&self) -> (Vec<NodeId>, Vec<NodeId>) {
        let mut indeg: BTreeMap<&NodeId, usize> = self.nodes.keys().map(|k| (k, self.in_degree(k.as_str()))).collect();
        let mut ready: BTreeSet<&NodeId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_first() {
            order.push(id.clone());
            for e in self.outgoing_edges(id.as_str()) {
                let d = indeg.get_mut(&e.target).expect("indexed");
                *d -= 1;
                if *d == 0 {
                    ready.insert(&e.target);
                }
            }
        }
        let placed: BTreeSet<&NodeId> = order.iter().collect();
        let rest = self.nodes.keys().filter(|k| !placed.contains(k)).cloned().collect();
        (order, rest)
    }

    /// Longest-path depth from any source node; cycles leave nodes unset.
    pub fn depths(&self) -> BTreeMap<NodeId, usize> {
        let (order, _) = self.topological_order();
        let mut depth: BTreeMap<NodeId, usize> = BTreeMap::new();
        for id in order {
            let d = self.incoming_edges(id.as_str()).filter_map(|e| depth.get(&e.source)).map(|d| d + 1).max().unwrap_or(0);
            depth.insert(id, d);
        }
        depth
    }

    /// Semantic type produced by a node, or `None` for exits and unknown kinds.
    pub fn output_type(&self, id: &str) -> Option<&str> {
        let node = self.nodes.get(id)?;
        if node.kind.is_interface() {
            return match self.interface_role(id) {
                Some(InterfaceRole::Exit) => None,
                _ => Some(self.entry_payload(id)),
            };
        }
        self.registry.schema(node.kind.as_str()).map(|s| s.output.as_str())
    }

    /// Checked form of [`output_type`](Self::output_type).
    pub fn type_of_output(&self, id: &str) -> Result<&str, GraphError> {
        if !self.contains(id) {
            return Err(unknown(id));
        }
        self.output_type(id).ok_or_else(|| GraphError::NoOutput(NodeId(id.to_string())))
    }

    /// Input port schema of a node selected by port label or alias.
    pub fn type_of_input(&self, id: &str, label: &str) -> Result<&registry::PortSchema, GraphError> {
        let node = self.nodes.get(id).ok_or_else(|| unknown(id))?;
        let ports = self.registry.input_ports(&node.kind);
        ports.iter().find(|p| p.matches_label(label)).ok_or_else(|| GraphError::UnknownPort {
            node: node.id.clone(),
            kind: node.kind.clone(),
            label: label.to_string(),
        })
    }

    /// Ids of nodes whose kind has no registry schema (interfaces excluded).
    pub fn executable_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| !n.kind.is_interface())
    }

    /// Decomposes the graph back into its parts.
    pub fn to_parts(&self) -> (Vec<Node>, Vec<Edge>, PromptTable) {
        (self.nodes.values().cloned().collect(), self.edges.clone(), self.prompts.clone())
    }

    /// Rebuilds with edited parts, keeping domain and registry.
    pub fn rebuild(&self, nodes: Vec<Node>, edges: Vec<Edge>, prompts: PromptTable) -> Result<WorkflowGraph, GraphError> {
        build_graph(nodes, edges, prompts, self.domain, self.registry.clone())
    }

    pub fn with_domain(&self, domain: Domain) -> WorkflowGraph {
        let mut g = self.clone();
        g.domain = domain;
        g
    }
}

fn unknown(id: &str) -> GraphError {
    GraphError::UnknownNode(NodeId(id.to_string()))
}

/// Guesses the domain from the kinds and payloads present.
pub fn infer_domain<'a>(kinds: impl IntoIterator<Item = &'a str>, ids: impl IntoIterator<Item = &'a str>, registry: &Registry) -> Domain {
    let code_kind = kinds.into_iter().any(|k| registry.schema(k).is_some_and(|s| s.domain == registry::DomainRestriction::Code));
    let code_payload = ids.into_iter().any(|id| registry.interface.payloads.contains_key(id));
    if code_kind || code_payload {
        Domain::Code
    } else {
        Domain::Math
    }
}
