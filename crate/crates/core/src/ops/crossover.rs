use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{free_variant, guard, import_prompts, prune_orphans, OperatorError, OperatorKind, RewriteOutcome};
use crate::graph::{Edge, InterfaceRole, Node, NodeId, NodeKind, WorkflowGraph};

/// How the exchange point is chosen.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverPoint {
    /// First shared kind among ScEnsembleOp, TestOp, then any other by name.
    #[default]
    Auto,
    Kind(String),
}

const PRIORITY: [&str; 2] = ["ScEnsembleOp", "TestOp"];

/// Executable kinds present in both graphs, in exchange priority order.
pub fn crossover_points(g1: &WorkflowGraph, g2: &WorkflowGraph) -> Vec<NodeKind> {
    let kinds = |g: &WorkflowGraph| -> BTreeSet<NodeKind> { g.executable_nodes().map(|n| n.kind.clone()).collect() };
    let shared: BTreeSet<NodeKind> = kinds(g1).intersection(&kinds(g2)).cloned().collect();
    let mut out: Vec<NodeKind> = PRIORITY.iter().map(|k| NodeKind::new(*k)).filter(|k| shared.contains(k)).collect();
    out.extend(shared.into_iter().filter(|k| !PRIORITY.contains(&k.as_str())));
    out
}

/// Deepest node of `kind`, ties broken by id.
fn exchange_node(g: &WorkflowGraph, kind: &NodeKind) -> Option<NodeId> {
    let depth = g.depths();
    g.nodes()
        .filter(|n| &n.kind == kind)
        .max_by(|a, b| depth.get(&a.id).cmp(&depth.get(&b.id)).then_with(|| b.id.cmp(&a.id)))
        .map(|n| n.id.clone())
}

/// Interior nodes strictly downstream of `v`.
fn tail(g: &WorkflowGraph, v: &NodeId) -> BTreeSet<NodeId> {
    let mut reach = g.closure(g.outgoing_edges(v.as_str()).map(|e| e.target.clone()), true);
    reach.remove(v);
    reach.retain(|id| g.node(id.as_str()).is_some_and(|n| !n.kind.is_interface()));
    reach
}

/// `ga` up to and including `va`, followed by the tail of `gb` after `vb`.
fn splice(ga: &WorkflowGraph, va: &NodeId, gb: &WorkflowGraph, vb: &NodeId) -> Result<(WorkflowGraph, BTreeSet<NodeId>), OperatorError> {
    let tail_a = tail(ga, va);
    let tail_b = tail(gb, vb);
    let (nodes, edges, mut prompts) = ga.to_parts();
    let mut nodes: Vec<Node> = nodes.into_iter().filter(|n| !tail_a.contains(&n.id)).collect();
    prune_orphans(ga, &nodes, &mut prompts);

    let mut assigned: BTreeSet<String> = nodes.iter().map(|n| n.id.to_string()).collect();
    let mut rename: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut imported: Vec<Node> = Vec::new();
    for id in &tail_b {
        let node = gb.node(id.as_str()).expect("tail ids exist");
        let new = free_variant(id, &|c| assigned.contains(c));
        assigned.insert(new.to_string());
        rename.insert(id.clone(), new.clone());
        imported.push(Node { id: new, ..node.clone() });
    }
    import_prompts(&mut prompts, gb.prompts(), &mut imported, ga.registry());
    let kept: BTreeSet<NodeId> = nodes.iter().map(|n| n.id.clone()).collect();
    let exit_a = ga.exit().cloned().or_else(|| ga.exits().first().map(|e| (*e).clone()));

    let map = |x: &NodeId| -> Option<NodeId> {
        if x == vb {
            return Some(va.clone());
        }
        if let Some(r) = rename.get(x) {
            return Some(r.clone());
        }
        match gb.interface_role(x.as_str()) {
            Some(InterfaceRole::Exit) => {
                return if ga.contains(x.as_str()) && ga.interface_role(x.as_str()) == Some(InterfaceRole::Exit) { Some(x.clone()) } else { exit_a.clone() };
            }
            Some(InterfaceRole::Entry) => {
                let payload = gb.entry_payload(x.as_str());
                return ga.entries().into_iter().find(|e| ga.entry_payload(e.as_str()) == payload).cloned();
            }
            _ => {}
        }
        let same = kept.contains(x) && ga.node(x.as_str()).map(|n| &n.kind) == gb.node(x.as_str()).map(|n| &n.kind);
        same.then(|| x.clone())
    };

    let mut out_edges: Vec<Edge> =
        edges.into_iter().filter(|e| &e.source != va && !tail_a.contains(&e.source) && !tail_a.contains(&e.target)).collect();
    for e in gb.edges() {
        let touches = &e.source == vb || tail_b.contains(&e.source) || tail_b.contains(&e.target);
        if !touches {
            continue;
        }
        if let (Some(s), Some(t)) = (map(&e.source), map(&e.target)) {
            let new = Edge::new(s, t, e.label.clone());
            if !out_edges.contains(&new) {
                out_edges.push(new);
            }
        }
    }
    nodes.extend(imported);
    Ok((ga.rebuild(nodes, out_edges, prompts)?, tail_b))
}

fn names(s: &BTreeSet<NodeId>) -> String {
    let v: Vec<&str> = s.iter().map(NodeId::as_str).collect();
    format!("{{{}}}", v.join(", "))
}

/// Exchanges the parts of two graphs downstream of a node of a shared kind.
/// Returns both children.
pub fn crossover(g1: &WorkflowGraph, g2: &WorkflowGraph, point: &CrossoverPoint) -> Result<RewriteOutcome, OperatorError> {
    let points = crossover_points(g1, g2);
    let kind = match point {
        CrossoverPoint::Auto => points.into_iter().next(),
        CrossoverPoint::Kind(k) => {
            let canonical = g1.registry().canonical(k).unwrap_or(k).to_string();
            points.into_iter().find(|p| p.as_str() == canonical)
        }
    }
    .ok_or(OperatorError::NoCrossoverPoint)?;
    let v1 = exchange_node(g1, &kind).ok_or(OperatorError::NoCrossoverPoint)?;
    let v2 = exchange_node(g2, &kind).ok_or(OperatorError::NoCrossoverPoint)?;
    let (c1, from2) = splice(g1, &v1, g2, &v2)?;
    let (c2, from1) = splice(g2, &v2, g1, &v1)?;
    let description = format!(
        "Crossover at {kind}: the first child keeps the first parent up to {v1} and takes {} from the second parent; the second child keeps the second parent up to {v2} and takes {} from the first.",
        names(&from2),
        names(&from1)
    );
    guard(OperatorKind::Crossover, vec![c1, c2], description)
}
