//! Constraint-preserving rewrites over workflow graphs.
//!
//! Every operator checks its own preconditions, builds the product as a new
//! graph and hands it to the closure guard, which re-validates and rejects
//! anything with q = 0. Inputs are never modified.

mod add;
mod crossover;
mod delete;
pub mod library;
mod random;
mod rewire;
mod subgraph;
mod substitute;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use add::{add_node, add_node_with_prompts};
pub use crossover::{crossover, crossover_points, CrossoverPoint};
pub use delete::delete_node;
pub use random::{apply_kind, apply_random, apply_site, enumerate_sites, motif_library, OperatorWeights, Site, DEFAULT_SITE_BUDGET};
pub use rewire::{rewire_edge, RewireDirection};
pub use subgraph::{connected_regions, extract_fragment, mutate_subgraph, BoundaryLabel, Fragment, Motif, RegionBoundary};
pub use substitute::{substitute_node, substitute_node_with_prompts};

use crate::diagnostic::Diagnostic;
use crate::graph::ports::{bind_ports, PortFeed};
use crate::graph::registry::PortSchema;
use crate::graph::{Edge, GraphError, Node, NodeId, NodeKind, PromptTable, Registry, WorkflowGraph};
use crate::validate::{validate_graph, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    Substitution,
    Addition,
    Rewiring,
    Deletion,
    SubgraphMutation,
    Crossover,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [
        OperatorKind::Substitution,
        OperatorKind::Addition,
        OperatorKind::Rewiring,
        OperatorKind::Deletion,
        OperatorKind::SubgraphMutation,
        OperatorKind::Crossover,
    ];

    /// Whether the operator draws two parents.
    pub fn is_binary(self) -> bool {
        matches!(self, OperatorKind::SubgraphMutation | OperatorKind::Crossover)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Substitution => "substitution",
            OperatorKind::Addition => "addition",
            OperatorKind::Rewiring => "rewiring",
            OperatorKind::Deletion => "deletion",
            OperatorKind::SubgraphMutation => "subgraph_mutation",
            OperatorKind::Crossover => "crossover",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        OperatorKind::ALL
            .into_iter()
            .find(|k| k.as_str().replace('_', "") == norm || format!("{k:?}").to_ascii_lowercase() == norm)
            .ok_or_else(|| format!("unknown operator {s:?}; expected one of substitution, addition, rewiring, deletion, subgraph_mutation, crossover"))
    }
}

#[derive(Debug, Clone, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no edge {0}->{1}")]
    NoSuchEdge(NodeId, NodeId),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("type mismatch at {boundary}: {detail}")]
    TypeMismatch { boundary: String, detail: String },
    #[error("boundary signature mismatch: {}", .0.join("; "))]
    BoundaryMismatch(Vec<String>),
    #[error("invalid replacement fragment: {0}")]
    InvalidFragment(String),
    #[error("no crossover point")]
    NoCrossoverPoint,
    #[error("product rejected by the validator: {}", summarize(.diagnostics))]
    Rejected { diagnostics: Vec<Diagnostic> },
    #[error("no applicable rewrite for {kind} after {tried} site(s)")]
    NoApplicableRewrite { kind: OperatorKind, tried: usize },
    #[error("invalid operator weights: {0}")]
    InvalidWeights(String),
}

fn summarize(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// One successful rewrite. Every graph in `graphs` has passed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RewriteOutcome {
    pub graphs: Vec<WorkflowGraph>,
    pub applied: OperatorKind,
    pub description: String,
    pub verdicts: Vec<Verdict>,
}

impl RewriteOutcome {
    pub fn graph(&self) -> &WorkflowGraph {
        &self.graphs[0]
    }

    /// The modification record as a tagged block.
    pub fn modification_record(&self) -> String {
        format!("<modification>{}</modification>", self.description)
    }
}

/// Closure guard: validates every product and rejects the whole rewrite if
/// any of them fails.
pub(crate) fn guard(applied: OperatorKind, graphs: Vec<WorkflowGraph>, description: String) -> Result<RewriteOutcome, OperatorError> {
    let verdicts: Vec<Verdict> = graphs.iter().map(validate_graph).collect();
    if let Some(bad) = verdicts.iter().find(|v| !v.passed()) {
        return Err(OperatorError::Rejected { diagnostics: bad.errors().cloned().collect() });
    }
    Ok(RewriteOutcome { graphs, applied, description, verdicts })
}

pub(crate) fn node_or_err<'a>(g: &'a WorkflowGraph, id: &str) -> Result<&'a Node, OperatorError> {
    g.node(id).ok_or_else(|| OperatorError::Graph(GraphError::UnknownNode(NodeId::new(id).unwrap_or_else(|_| NodeId::new("_").unwrap()))))
}

/// First edge `a -> b` in sorted order.
pub(crate) fn find_edge<'a>(g: &'a WorkflowGraph, a: &str, b: &str) -> Result<&'a Edge, OperatorError> {
    g.outgoing_edges(a).find(|e| e.target.as_str() == b).ok_or_else(|| {
        OperatorError::NoSuchEdge(NodeId::new(a).unwrap_or_else(|_| NodeId::new("_").unwrap()), NodeId::new(b).unwrap_or_else(|_| NodeId::new("_").unwrap()))
    })
}

/// True when the edge leaves its source on a named branch arm.
pub(crate) fn is_arm(g: &WorkflowGraph, e: &Edge) -> bool {
    let Some(label) = e.label() else { return false };
    g.node(e.source.as_str()).and_then(|n| g.registry().schema(n.kind.as_str())).is_some_and(|s| s.is_branch(label))
}

/// Port of `e.target` that `e` is bound to.
pub(crate) fn bound_port(g: &WorkflowGraph, e: &Edge) -> Option<PortSchema> {
    let report = bind_ports(g);
    let binding = report.binding(e.target.as_str())?;
    let label = binding.port_of(e)?;
    binding.ports.iter().find(|(p, _)| p.label == label).map(|(p, _)| p.clone())
}

/// Port of an existing node that can take one more edge of type `ty`.
pub(crate) fn free_port(g: &WorkflowGraph, id: &str, ty: &str) -> Option<PortSchema> {
    let node = g.node(id)?;
    let report = bind_ports(g);
    let binding = report.binding(id);
    let fed = |label: &str| binding.and_then(|b| b.feed(label)).is_some_and(|f| matches!(f, PortFeed::Edges(es) if !es.is_empty()));
    g.registry()
        .input_ports(&node.kind)
        .iter()
        .find(|p| p.accepts(ty) && !node.attributes.contains_key(&p.label) && (p.multi || !fed(&p.label)))
        .cloned()
}

/// Port of a not-yet-connected node that would take an input of type `ty`.
pub(crate) fn port_for<'a>(registry: &'a Registry, node: &Node, ty: &str) -> Option<&'a PortSchema> {
    registry.input_ports(&node.kind).iter().find(|p| p.accepts(ty) && !node.attributes.contains_key(&p.label))
}

/// `prefix` + smallest positive integer not used in `taken`.
pub(crate) fn fresh_id(prefix: &str, taken: &dyn Fn(&str) -> bool) -> NodeId {
    (1..)
        .map(|n| format!("{prefix}{n}"))
        .find(|c| !taken(c))
        .and_then(|c| NodeId::new(c).ok())
        .expect("an unused id exists")
}

/// `id` if free, otherwise `id_2`, `id_3`, ...
pub(crate) fn free_variant(id: &NodeId, taken: &dyn Fn(&str) -> bool) -> NodeId {
    if !taken(id.as_str()) {
        return id.clone();
    }
    (2..).map(|n| format!("{id}_{n}")).find(|c| !taken(c)).and_then(|c| NodeId::new(c).ok()).expect("an unused id exists")
}

pub(crate) fn id_prefix(kind: &NodeKind) -> &'static str {
    match kind.as_str() {
        "CustomOp" | "CustomCodeGenerateOp" => "C",
        "ProgrammerOp" => "P",
        "ScEnsembleOp" => "ENSEMBLE",
        "TestOp" => "T",
        "DecisionOp" => "D",
        _ => "N",
    }
}

/// Prompt names referenced by the given nodes.
pub(crate) fn referenced_prompts<'a>(nodes: impl IntoIterator<Item = &'a Node>, prompts: &PromptTable, registry: &Registry) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for n in nodes {
        let Some(schema) = registry.schema(n.kind.as_str()) else { continue };
        for key in schema.prompt_keys() {
            if let Some((name, _)) = n.attributes.get(key).and_then(|v| prompts.resolve(v)) {
                out.insert(name.to_string());
            }
        }
    }
    out
}

/// Drops prompts that `before` used but the rewritten nodes no longer do.
pub(crate) fn prune_orphans(before: &WorkflowGraph, nodes: &[Node], prompts: &mut PromptTable) {
    let old = referenced_prompts(before.nodes(), before.prompts(), before.registry());
    let new = referenced_prompts(nodes, prompts, before.registry());
    for name in old.difference(&new) {
        prompts.remove(name);
    }
}

fn reference_for(name: &str) -> String {
    if name == name.to_ascii_uppercase() {
        name.to_ascii_lowercase()
    } else {
        name.to_string()
    }
}

/// Copies the prompts referenced by `nodes` from `src` into `dst`. A name
/// already bound to different text is renamed and the referencing attribute
/// rewritten.
pub(crate) fn import_prompts(dst: &mut PromptTable, src: &PromptTable, nodes: &mut [Node], registry: &Registry) {
    for n in nodes.iter_mut() {
        let Some(schema) = registry.schema(n.kind.as_str()) else { continue };
        let keys: Vec<String> = schema.prompt_keys().map(str::to_string).collect();
        for key in keys {
            let Some(value) = n.attributes.get(&key) else { continue };
            let Some((name, text)) = src.resolve(value) else { continue };
            let (name, text) = (name.to_string(), text.to_string());
            let target = if dst.get(&name).is_none_or(|t| t == text) {
                name.clone()
            } else {
                (2..)
                    .map(|k| format!("{name}_{k}"))
                    .find(|c| dst.get(c).is_none_or(|t| t == text) && dst.resolve(&reference_for(c)).is_none_or(|(r, _)| r == c))
                    .expect("a free prompt name exists")
            };
            dst.insert(target.clone(), text);
            if target != name {
                n.attributes.insert(key.clone(), reference_for(&target));
            }
        }
    }
}

/// Summary of a node for modification records: `CustomOp C1 (role: x)`.
pub(crate) fn describe_node(n: &Node) -> String {
    if n.attributes.is_empty() {
        return format!("{} {}", n.kind, n.id);
    }
    let attrs: Vec<String> = n.attributes.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    format!("{} {} ({})", n.kind, n.id, attrs.join(", "))
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_names_parse() {
        for k in OperatorKind::ALL {
            assert_eq!(k.as_str().parse::<OperatorKind>().unwrap(), k);
        }
        assert_eq!("SubgraphMutation".parse::<OperatorKind>().unwrap(), OperatorKind::SubgraphMutation);
        assert_eq!("subgraph-mutation".parse::<OperatorKind>().unwrap(), OperatorKind::SubgraphMutation);
        assert!("swap".parse::<OperatorKind>().is_err());
    }

    #[test]
    fn prompt_import_renames_conflicts() {
        let reg = Registry::default();
        let mut dst = PromptTable::new();
        dst.insert("SOLVER", "one");
        let mut src = PromptTable::new();
        src.insert("SOLVER", "two");
        let mut nodes = vec![Node::new(NodeId::new("C").unwrap(), NodeKind::new("CustomOp"), "Custom").with_attr("role", "solver")];
        import_prompts(&mut dst, &src, &mut nodes, &reg);
        assert_eq!(nodes[0].attributes["role"], "solver_2");
        assert_eq!(dst.get("SOLVER_2"), Some("two"));
        assert_eq!(dst.get("SOLVER"), Some("one"));
    }
}
