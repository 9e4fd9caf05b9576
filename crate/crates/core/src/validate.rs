//! The validator Q: soft checks W1–W5, structural hygiene, and the combined
//! verdict over text or graphs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostic::{has_errors, Diagnostic, Rule, Subject};
use crate::graph::ports::bind_ports;
use crate::graph::{is_identifier, Domain, InterfaceRole, NodeId, Registry, WorkflowGraph};
use crate::mermaid::{lower_to_graph, parse_workflow};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    /// 1 iff `diagnostics` holds no error.
    pub q: u8,
    pub diagnostics: Vec<Diagnostic>,
}

impl Verdict {
    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        Verdict { q: u8::from(!has_errors(&diagnostics)), diagnostics }
    }

    pub fn passed(&self) -> bool {
        self.q == 1
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }

    /// Rules that produced at least one error.
    pub fn failed_rules(&self) -> BTreeSet<Rule> {
        self.errors().map(|d| d.rule).collect()
    }
}

fn pseudo(id: &str) -> NodeId {
    NodeId::new(id).expect("hint ids are identifiers")
}

fn w1(g: &WorkflowGraph, out: &mut Vec<Diagnostic>) {
    let iface = &g.registry().interface;
    let entries = g.entries();
    let mut by_payload: BTreeMap<&str, Vec<&NodeId>> = BTreeMap::new();
    for id in &entries {
        by_payload.entry(g.entry_payload(id.as_str())).or_default().push(id);
    }
    let default = iface.default_payload.as_str();
    if !by_payload.contains_key(default) {
        let subject = iface.entry_hints.first().map_or("PROBLEM", String::as_str);
        out.push(Diagnostic::error(Rule::W1, format!("missing entry interface node carrying {default}")).on_node(&pseudo(subject)));
    }
    for (payload, ids) in &by_payload {
        for extra in ids.iter().skip(1) {
            out.push(Diagnostic::error(Rule::W1, format!("more than one entry interface node carries {payload}")).on_node(extra));
        }
    }
    let exits = g.exits();
    if exits.is_empty() {
        let subject = iface.exit_hints.first().map_or("RETURN", String::as_str);
        out.push(Diagnostic::error(Rule::W1, "missing exit interface node").on_node(&pseudo(subject)));
    }
    for extra in exits.iter().skip(1) {
        out.push(Diagnostic::error(Rule::W1, "more than one exit interface node").on_node(extra));
    }
}

fn w2(g: &WorkflowGraph, out: &mut Vec<Diagnostic>) {
    let (Ok(fwd), Ok(bwd)) = (g.reachable_from_entry(), g.reaches_exit()) else { return };
    for id in g.node_ids() {
        let msg = match (fwd.contains(id), bwd.contains(id)) {
            (true, true) => continue,
            (false, true) => "not reachable from an entry",
            (true, false) => "has no path to the exit",
            (false, false) => "is disconnected from both entry and exit",
        };
        out.push(Diagnostic::error(Rule::W2, format!("node {id} {msg}")).on_node(id));
    }
}

fn w3(g: &WorkflowGraph, out: &mut Vec<Diagnostic>) {
    let iface = &g.registry().interface;
    for node in g.nodes() {
        let id = node.id.as_str();
        let entry_hint = iface.entry_hints.iter().any(|h| h == id);
        let exit_hint = iface.exit_hints.iter().any(|h| h == id);
        if !node.kind.is_interface() {
            if entry_hint || exit_hint {
                out.push(Diagnostic::error(Rule::W3, format!("{id} must be an Interface node, found {}", node.kind)).on_node(&node.id));
            }
            continue;
        }
        match g.interface_role(id) {
            Some(InterfaceRole::Interior) => {
                out.push(Diagnostic::error(Rule::W3, format!("interface node {id} has both inputs and outputs")).on_node(&node.id))
            }
            Some(InterfaceRole::Exit) if entry_hint => {
                out.push(Diagnostic::error(Rule::W3, format!("{id} is an entry name but acts as an exit")).on_node(&node.id))
            }
            Some(InterfaceRole::Entry) if exit_hint => {
                out.push(Diagnostic::error(Rule::W3, format!("{id} is an exit name but acts as an entry")).on_node(&node.id))
            }
            _ => {}
        }
    }
}

fn w4(g: &WorkflowGraph, out: &mut Vec<Diagnostic>) {
    for node in g.nodes() {
        if node.kind.is_interface() {
            continue;
        }
        if node.kind.is_unclassified() {
            out.push(crate::mermaid::lower::unclassified(&node.id));
            continue;
        }
        match g.registry().schema(node.kind.as_str()) {
            None => out.push(Diagnostic::error(Rule::W4, format!("unknown node type {}", node.kind)).on_node(&node.id)),
            Some(s) if !s.domain.allows(g.domain()) => out.push(
                Diagnostic::error(Rule::W4, format!("{} is not allowed in {} workflows", node.kind, g.domain())).on_node(&node.id),
            ),
            Some(_) => {}
        }
    }
}

/// Minimum fan-in a kind demands, taken from its multi ports.
pub(crate) fn min_fan_in(g: &WorkflowGraph, kind: &str) -> Option<usize> {
    min_fan_in_of(g.registry().schema(kind)?)
}

pub(crate) fn min_fan_in_of(schema: &crate::graph::registry::NodeTypeSchema) -> Option<usize> {
    schema.input.iter().filter(|p| p.multi && p.min_count >= 2).map(|p| p.min_count).max()
}

fn w5(g: &WorkflowGraph, out: &mut Vec<Diagnostic>) {
    for node in g.nodes() {
        let Some(need) = min_fan_in(g, node.kind.as_str()) else { continue };
        let have = g.in_degree(node.id.as_str());
        if have < need {
            out.push(
                Diagnostic::error(Rule::W5, format!("{} {} has {have} incoming connection(s), needs at least {need}", node.kind, node.id))
                    .on_node(&node.id),
            );
        }
    }
}

fn structure(g: &WorkflowGraph, out: &mut Vec<Diagnostic>) {
    let edge_subject = |s: &NodeId, t: &NodeId, l: &Option<String>| Subject::Edge { source: s.clone(), target: t.clone(), label: l.clone() };
    let mut prev: Option<&crate::graph::Edge> = None;
    for e in g.edges() {
        if e.source == e.target {
            out.push(Diagnostic::error(Rule::Struct, format!("self-loop on {}", e.source)).on(edge_subject(&e.source, &e.target, &e.label)));
        }
        if prev == Some(e) {
            out.push(Diagnostic::error(Rule::Struct, format!("duplicate edge {e}")).on(edge_subject(&e.source, &e.target, &e.label)));
        }
        prev = Some(e);
    }
    let (_, cyclic) = g.topological_order();
    if let Some(first) = cyclic.first() {
        let names: Vec<&str> = cyclic.iter().map(NodeId::as_str).collect();
        out.push(Diagnostic::error(Rule::Struct, format!("cycle through {}", names.join(", "))).on_node(first));
    }
    out.extend(bind_ports(g).issues);

    let mut used_prompts = BTreeSet::new();
    for node in g.nodes() {
        let Some(schema) = g.registry().schema(node.kind.as_str()) else { continue };
        for attr in schema.required_attributes() {
            if !node.attributes.contains_key(&attr.key) {
                out.push(
                    Diagnostic::error(Rule::Struct, format!("{} {} is missing required attribute {}", node.kind, node.id, attr.key))
                        .on_node(&node.id),
                );
            }
        }
        for key in schema.prompt_keys() {
            let Some(value) = node.attributes.get(key) else { continue };
            match g.prompts().resolve(value) {
                Some((name, _)) => {
                    used_prompts.insert(name.to_string());
                }
                None if is_identifier(value) => out.push(
                    Diagnostic::error(Rule::Struct, format!("prompt {value} referenced by {}.{key} is not defined", node.id)).on_node(&node.id),
                ),
                None => {}
            }
        }
    }
    for name in g.prompts().names() {
        if !used_prompts.contains(name) {
            out.push(Diagnostic::warning(Rule::Struct, format!("prompt {name} is never referenced")));
        }
    }
}

fn sort_phase(diags: &mut Vec<Diagnostic>) {
    diags.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let mut seen = Vec::with_capacity(diags.len());
    diags.retain(|d| {
        let key = (d.rule, d.severity, d.subject.clone(), d.message.clone());
        if seen.contains(&key) {
            false
        } else {
            seen.push(key);
            true
        }
    });
}

/// Structural checks over a lowered graph, in rule order.
pub fn soft_check(g: &WorkflowGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    w1(g, &mut out);
    w2(g, &mut out);
    w3(g, &mut out);
    w4(g, &mut out);
    w5(g, &mut out);
    structure(g, &mut out);
    sort_phase(&mut out);
    out
}

pub fn validate_graph(g: &WorkflowGraph) -> Verdict {
    Verdict::from_diagnostics(soft_check(g))
}

/// Hard check, lowering and soft check over source text. Diagnostics are the
/// hard findings followed by the soft ones; lowering still runs when the hard
/// check fails so both kinds of finding are reported together.
pub fn validate_text(text: &str, registry: Arc<Registry>, domain: Option<Domain>) -> Verdict {
    let doc = parse_workflow(text);
    let lowered = lower_to_graph(&doc, registry, domain);
    let mut soft = lowered.diagnostics;
    soft.extend(soft_check(&lowered.graph));
    sort_phase(&mut soft);
    for d in &mut soft {
        if d.span.is_none() {
            d.span = d.subject.as_ref().and_then(|s| lowered.spans.get(s.anchor())).copied();
        }
    }
    let mut all = doc.diagnostics;
    all.extend(soft);
    Verdict::from_diagnostics(all)
}

/// [`validate_text`] with the shared default registry.
pub fn validate_str(text: &str) -> Verdict {
    validate_text(text, Registry::shared_default(), None)
}
