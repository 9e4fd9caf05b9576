//! Binding of incoming edges to the input ports declared by a node's schema.
//!
//! Binding runs in three passes per node:
//! 1. edges whose label names a port (or alias) go to that port;
//! 2. remaining edges go to a free port accepting the source's output type,
//!    skipping ports satisfied inline by an attribute of the same key;
//! 3. required ports left empty must be covered by an entry payload fallback.

use std::collections::{BTreeMap, BTreeSet};

use super::registry::PortSchema;
use super::{Edge, InterfaceRole, NodeId, WorkflowGraph};
use crate::diagnostic::{Diagnostic, Rule, Subject};

/// How one port of a node is fed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortFeed {
    Edges(Vec<Edge>),
    Inline(String),
    Fallback(String),
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeBinding {
    pub node: NodeId,
    /// One entry per declared port, in schema order.
    pub ports: Vec<(PortSchema, PortFeed)>,
}

impl NodeBinding {
    pub fn feed(&self, label: &str) -> Option<&PortFeed> {
        self.ports.iter().find(|(p, _)| p.label == label).map(|(_, f)| f)
    }

    /// Port label an edge was bound to.
    pub fn port_of(&self, edge: &Edge) -> Option<&str> {
        self.ports.iter().find_map(|(p, f)| match f {
            PortFeed::Edges(es) if es.contains(edge) => Some(p.label.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct PortReport {
    pub bindings: BTreeMap<NodeId, NodeBinding>,
    pub issues: Vec<Diagnostic>,
    /// Ports with a feed, over ports that were bound at all.
    pub satisfied: usize,
    pub total: usize,
}

impl PortReport {
    pub fn binding(&self, id: &str) -> Option<&NodeBinding> {
        self.bindings.get(id)
    }

    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.total as f64
        }
    }
}

/// True when `first` and `second` are the two arms of one branching node
/// meeting again: `t --arm--> v` and `r --> v` where `r` lies on the other
/// arm of `t` (directly or further downstream).
pub(crate) fn is_branch_merge(g: &WorkflowGraph, target: &NodeId, first: &Edge, second: &Edge) -> bool {
    let check = |t: &Edge, r: &Edge| -> bool {
        let Some(schema) = g.node(t.source.as_str()).and_then(|n| g.registry().schema(n.kind.as_str())) else {
            return false;
        };
        let Some(arm) = t.label().filter(|l| schema.is_branch(l)) else { return false };
        if &t.target != target || &r.target != target {
            return false;
        }
        let other: Vec<NodeId> = g
            .outgoing_edges(t.source.as_str())
            .filter(|e| e.label().is_some_and(|l| l != arm && schema.is_branch(l)))
            .map(|e| e.target.clone())
            .collect();
        !other.is_empty() && g.closure(other, true).contains(&r.source)
    };
    check(first, second) || check(second, first)
}

pub fn bind_ports(g: &WorkflowGraph) -> PortReport {
    let mut report = PortReport::default();
    let payloads = g.available_payloads();
    for node in g.nodes() {
        let ports: &[PortSchema] = if node.kind.is_interface() {
            if g.interface_role(node.id.as_str()) != Some(InterfaceRole::Exit) {
                continue;
            }
            g.registry().input_ports(&node.kind)
        } else {
            match g.registry().schema(node.kind.as_str()) {
                Some(s) => &s.input,
                None => continue,
            }
        };
        let binding = bind_node(g, &node.id, ports, &node.attributes, &payloads, &mut report.issues);
        for (port, feed) in &binding.ports {
            if port.needed() > 0 || !matches!(feed, PortFeed::Empty) {
                report.total += 1;
                let ok = match feed {
                    PortFeed::Edges(es) => es.len() >= port.needed(),
                    PortFeed::Inline(_) | PortFeed::Fallback(_) => true,
                    PortFeed::Empty => false,
                };
                report.satisfied += usize::from(ok);
            }
        }
        report.bindings.insert(node.id.clone(), binding);
    }
    report
}

fn bind_node(
    g: &WorkflowGraph,
    id: &NodeId,
    ports: &[PortSchema],
    attributes: &BTreeMap<String, String>,
    payloads: &BTreeSet<&str>,
    issues: &mut Vec<Diagnostic>,
) -> NodeBinding {
    let mut fed: Vec<Vec<Edge>> = vec![Vec::new(); ports.len()];
    let mut rest = Vec::new();
    let kind = g.node(id.as_str()).map(|n| n.kind.to_string()).unwrap_or_default();
    let edge_subject = |e: &Edge| Subject::Edge { source: e.source.clone(), target: e.target.clone(), label: e.label.clone() };

    for e in g.incoming_edges(id.as_str()) {
        if e.source == e.target {
            // Self-loops are reported on their own.
            continue;
        }
        let by_label = e.label().and_then(|l| ports.iter().position(|p| p.matches_label(l)));
        match by_label {
            Some(i) => {
                if let Some(ty) = g.output_type(e.source.as_str()) {
                    if !ports[i].accepts(ty) {
                        issues.push(
                            Diagnostic::error(
                                Rule::Struct,
                                format!("port {} of {kind} {id} does not accept {ty} from {}", ports[i].label, e.source),
                            )
                            .on(edge_subject(e)),
                        );
                        continue;
                    }
                }
                if !ports[i].multi && !fed[i].is_empty() && !is_branch_merge(g, id, &fed[i][0], e) {
                    issues.push(
                        Diagnostic::error(Rule::Struct, format!("port {} of {id} is fed more than once", ports[i].label))
                            .on(edge_subject(e)),
                    );
                    continue;
                }
                fed[i].push(e.clone());
            }
            None => rest.push(e.clone()),
        }
    }

    let mut untyped = false;
    for e in rest {
        let Some(ty) = g.output_type(e.source.as_str()) else {
            untyped = true;
            continue;
        };
        let free: Vec<usize> = (0..ports.len())
            .filter(|&i| ports[i].accepts(ty) && (ports[i].multi || fed[i].is_empty()) && !attributes.contains_key(&ports[i].label))
            .collect();
        match free.as_slice() {
            [] => {
                let merge = (0..ports.len())
                    .find(|&i| ports[i].accepts(ty) && fed[i].len() == 1 && is_branch_merge(g, id, &fed[i][0], &e));
                match merge {
                    Some(i) => fed[i].push(e),
                    None => issues.push(
                        Diagnostic::error(Rule::Struct, format!("no free input port of {kind} {id} accepts {ty} from {}", e.source))
                            .on(edge_subject(&e)),
                    ),
                }
            }
            [only] => fed[*only].push(e),
            [first, ..] if ports[*first].label_required => {
                let names: Vec<&str> = free.iter().map(|&i| ports[i].label.as_str()).collect();
                issues.push(
                    Diagnostic::error(
                        Rule::Struct,
                        format!("unlabeled edge from {} into {id} is ambiguous between ports {}", e.source, names.join(", ")),
                    )
                    .on(edge_subject(&e)),
                );
            }
            [first, ..] => fed[*first].push(e),
        }
    }

    let mut out = Vec::with_capacity(ports.len());
    for (port, edges) in ports.iter().zip(fed) {
        let feed = if !edges.is_empty() {
            PortFeed::Edges(edges)
        } else if let Some(v) = attributes.get(&port.label) {
            PortFeed::Inline(v.clone())
        } else if let Some(fb) = port.fallback.as_ref().filter(|fb| payloads.contains(fb.as_str())) {
            PortFeed::Fallback(fb.clone())
        } else {
            PortFeed::Empty
        };
        // Fan-in below the minimum is reported by W5.
        let fan_in_rule = port.multi && port.min_count >= 2 && g.in_degree(id.as_str()) < port.min_count;
        if !fan_in_rule {
            match &feed {
                PortFeed::Empty if port.required && !untyped => issues.push(
                    Diagnostic::error(Rule::Struct, format!("required input port {} of {kind} {id} is not fed", port.label)).on_node(id),
                ),
                PortFeed::Edges(es) if port.multi && es.len() < port.min_count => issues.push(
                    Diagnostic::error(
                        Rule::Struct,
                        format!("port {} of {kind} {id} has {} input(s), needs at least {}", port.label, es.len(), port.min_count),
                    )
                    .on_node(id),
                ),
                _ => {}
            }
        }
        out.push((port.clone(), feed));
    }
    NodeBinding { node: id.clone(), ports: out }
}
