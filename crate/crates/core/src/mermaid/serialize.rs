//! Canonical text form of a graph.

use std::fmt::Write as _;

use super::parse::{encode_entities, escape_prompt};
use crate::graph::registry::Shape;
use crate::graph::{infer_domain, Node, NodeId, WorkflowGraph};

/// Node order used by the serializer: problem entry, other entries, interior
/// nodes by id, then exits.
pub fn declaration_order(g: &WorkflowGraph) -> Vec<&NodeId> {
    let entries = g.entries();
    let primary = g.primary_entry();
    let mut out: Vec<&NodeId> = Vec::with_capacity(g.node_count());
    out.extend(primary);
    out.extend(entries.iter().copied().filter(|id| Some(*id) != primary));
    let exits = g.exits();
    out.extend(g.node_ids().filter(|id| !entries.contains(id) && !exits.contains(id)));
    out.extend(exits);
    out
}

fn is_bare_value(v: &str) -> bool {
    !v.is_empty() && v.chars().all(|c| c.is_ascii_alphanumeric() || "_.-/".contains(c))
}

fn quote_value(v: &str) -> String {
    if is_bare_value(v) {
        return v.to_string();
    }
    let mut out = String::with_capacity(v.len() + 2);
    out.push('\'');
    for c in v.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
    out
}

fn label_text(node: &Node, with_attrs: bool) -> String {
    let mut s = encode_entities(&node.display_label);
    if with_attrs {
        s.push_str("<br/>");
        if !node.attributes.is_empty() {
            let items: Vec<String> = node.attributes.iter().map(|(k, v)| format!("{k}: {}", quote_value(v))).collect();
            s.push('(');
            s.push_str(&encode_entities(&items.join(", ")));
            s.push(')');
        }
    }
    s
}

fn raw_safe(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| "[](){}\"|#<>".contains(c)) && s.trim() == s
}

fn declaration(g: &WorkflowGraph, node: &Node) -> String {
    if node.kind.is_interface() {
        if node.attributes.is_empty() && raw_safe(&node.display_label) {
            return format!("{}([{}])", node.id, node.display_label);
        }
        return format!("{}([\"{}\"])", node.id, label_text(node, !node.attributes.is_empty()));
    }
    let decision = g.registry().schema(node.kind.as_str()).is_some_and(|s| s.shape == Shape::Decision);
    let label = label_text(node, true);
    if decision {
        format!("{}{{\"{}\"}}", node.id, label)
    } else {
        format!("{}[\"{}\"]", node.id, label)
    }
}

/// Canonical serialization. Total; invalid graphs serialize too.
pub fn serialize_workflow(g: &WorkflowGraph) -> String {
    let reg = g.registry();
    let mut out = String::from("flowchart TD\n");
    let inferred = infer_domain(g.nodes().map(|n| n.kind.as_str()), g.node_ids().map(NodeId::as_str), reg);
    if inferred != g.domain() {
        let _ = writeln!(out, "  %% domain: {}", g.domain());
    }
    let order = declaration_order(g);
    for id in &order {
        let node = g.node(id.as_str()).expect("ordered ids exist");
        let _ = writeln!(out, "  {}", declaration(g, node));
    }
    let mut classes: Vec<&str> = reg.kinds().filter(|k| !k.optional).map(|k| k.name.as_str()).collect();
    for k in reg.kinds().filter(|k| k.optional) {
        if g.nodes().any(|n| n.kind == k.name.as_str()) {
            classes.push(&k.name);
        }
    }
    classes.push(crate::graph::NodeKind::INTERFACE);
    for name in classes {
        let _ = writeln!(out, "  classDef {name} {};", reg.style_of(name).unwrap_or_default());
    }
    for id in &order {
        let node = g.node(id.as_str()).expect("ordered ids exist");
        if !node.kind.is_unclassified() {
            let _ = writeln!(out, "  class {} {}", node.id, node.kind);
        }
    }
    for e in g.edges() {
        match &e.label {
            Some(l) => {
                let _ = writeln!(out, "  {} --> |{}| {}", e.source, encode_entities(l), e.target);
            }
            None => {
                let _ = writeln!(out, "  {} --> {}", e.source, e.target);
            }
        }
    }
    if !g.prompts().is_empty() {
        out.push_str("<prompt>\n");
        for (name, text) in g.prompts().iter() {
            let _ = writeln!(out, "{name}=\"{}\"", escape_prompt(text));
        }
        out.push_str("</prompt>\n");
    }
    out
}
