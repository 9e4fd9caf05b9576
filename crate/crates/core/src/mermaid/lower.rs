//! Turns a parsed document into a [`WorkflowGraph`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::parse::{MermaidDocument, NodeDecl, NodeShape, Statement};
use crate::diagnostic::{Diagnostic, Rule, SourceSpan, Subject};
use crate::graph::{build_graph, infer_domain, Domain, Edge, Node, NodeId, NodeKind, PromptTable, Registry, WorkflowGraph};

/// Result of lowering: the graph plus document-level findings.
#[derive(Debug, Clone)]
pub struct Lowered {
    pub graph: WorkflowGraph,
    pub diagnostics: Vec<Diagnostic>,
    /// Where each node was first declared or mentioned.
    pub spans: BTreeMap<NodeId, SourceSpan>,
}

/// Binds classes to kinds and builds the graph. `domain` overrides both the
/// `%% domain:` directive and inference from the kinds present.
pub fn lower_to_graph(doc: &MermaidDocument, registry: Arc<Registry>, domain: Option<Domain>) -> Lowered {
    let mut diags = Vec::new();
    let mut decls: BTreeMap<&str, &NodeDecl> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    let mut spans: BTreeMap<&str, SourceSpan> = BTreeMap::new();
    let mut class_of: BTreeMap<&str, (&str, SourceSpan)> = BTreeMap::new();
    let mut class_defs: BTreeMap<&str, usize> = BTreeMap::new();
    let mut assign_spans = Vec::new();

    for st in &doc.statements {
        match st {
            Statement::Node(d) => {
                let replace = decls.get(d.id.as_str()).is_none_or(|prev| prev.shape == NodeShape::Bare);
                if replace {
                    decls.insert(&d.id, d);
                }
                if !spans.contains_key(d.id.as_str()) {
                    spans.insert(&d.id, d.span);
                    order.push(&d.id);
                }
            }
            Statement::Edge(e) => {
                for id in [&e.source, &e.target] {
                    if !spans.contains_key(id.as_str()) {
                        spans.insert(id, e.span);
                        order.push(id);
                    }
                }
            }
            Statement::ClassDef { name, span, .. } => {
                let n = class_defs.entry(name).or_insert(0);
                *n += 1;
                if *n == 2 {
                    diags.push(Diagnostic::warning(Rule::Struct, format!("duplicate classDef {name}")).at(*span));
                }
            }
            Statement::ClassAssign { ids, class, span } => {
                for id in ids {
                    class_of.entry(id.as_str()).or_insert((class.as_str(), *span));
                    assign_spans.push((id.as_str(), *span));
                }
            }
            Statement::Comment { .. } => {}
        }
    }

    for (id, span) in &assign_spans {
        if !spans.contains_key(id) {
            diags.push(Diagnostic::error(Rule::Struct, format!("class assignment to undeclared node {id}")).at(*span));
        }
    }
    let mut warned_classes = BTreeSet::new();
    for (class, span) in class_of.values() {
        if !class_defs.contains_key(class) && !registry.is_known(class) && warned_classes.insert(*class) {
            diags.push(Diagnostic::warning(Rule::Struct, format!("class {class} has no classDef and is not a registered kind")).at(*span));
        }
    }

    let mut nodes = Vec::new();
    let mut node_spans = BTreeMap::new();
    for id in &order {
        let Ok(node_id) = NodeId::new(*id) else { continue };
        let decl = decls.get(id);
        let shape = decl.map_or(NodeShape::Bare, |d| d.shape);
        let kind = match class_of.get(id) {
            Some((class, _)) => match registry.canonical(class) {
                Some(canon) => NodeKind::new(canon),
                None => {
                    diags.push(Diagnostic::error(Rule::W4, format!("unknown node type {class}")).on_node(&node_id));
                    NodeKind::new(*class)
                }
            },
            None if shape == NodeShape::Stadium => NodeKind::interface(),
            None => {
                diags.push(unclassified(&node_id));
                NodeKind::unclassified()
            }
        };
        let display = decl.map_or_else(|| id.to_string(), |d| d.display.clone());
        let mut node = Node::new(node_id.clone(), kind, display);
        if let Some(d) = decl {
            node.attributes = d.attributes.iter().cloned().collect();
        }
        node_spans.insert(node_id, spans[id]);
        nodes.push(node);
    }

    let edges: Vec<Edge> = doc
        .edges()
        .filter_map(|e| {
            let s = NodeId::new(e.source.as_str()).ok()?;
            let t = NodeId::new(e.target.as_str()).ok()?;
            Some(Edge::new(s, t, e.label.clone()))
        })
        .collect();

    let prompts: PromptTable = doc.prompts.iter().flatten().map(|p| (p.name.clone(), p.text.clone())).collect();

    let domain = domain
        .or_else(|| doc.domain_directive().and_then(|d| d.parse().ok()))
        .unwrap_or_else(|| infer_domain(nodes.iter().map(|n| n.kind.as_str()), nodes.iter().map(|n| n.id.as_str()), &registry));

    let graph = build_graph(nodes, edges, prompts, domain, registry).expect("ids are unique and every edge endpoint is a mentioned node");
    Lowered { graph, diagnostics: diags, spans: node_spans }
}

pub(crate) fn unclassified(id: &NodeId) -> Diagnostic {
    Diagnostic::error(Rule::W4, format!("unclassified node {id}")).on(Subject::node(id))
}
