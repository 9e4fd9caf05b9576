use super::{bound_port, describe_node, guard, is_arm, node_or_err, prune_orphans, OperatorError, OperatorKind, RewriteOutcome};
use crate::graph::{Edge, WorkflowGraph};

/// Removes a node with exactly one input and one output and bridges its
/// neighbours with a direct edge.
pub fn delete_node(g: &WorkflowGraph, id: &str) -> Result<RewriteOutcome, OperatorError> {
    let node = node_or_err(g, id)?;
    if node.kind.is_interface() {
        return Err(OperatorError::Precondition(format!("cannot delete interface node {id}")));
    }
    let (i, o) = (g.in_degree(id), g.out_degree(id));
    if i != 1 || o != 1 {
        return Err(OperatorError::Precondition(format!("{id} has {i} input(s) and {o} output(s); deletion needs exactly one of each")));
    }
    let inbound = g.incoming_edges(id).next().expect("in-degree 1").clone();
    let outbound = g.outgoing_edges(id).next().expect("out-degree 1").clone();
    let (va, vc) = (inbound.source.clone(), outbound.target.clone());
    if va == vc {
        return Err(OperatorError::Precondition(format!("bridging around {id} would create a self-loop on {va}")));
    }
    if g.has_edge(va.as_str(), vc.as_str()) {
        return Err(OperatorError::Precondition(format!("bridge {va}->{vc} duplicates an existing edge")));
    }
    let t = g.type_of_output(va.as_str())?;
    if let Some(p) = bound_port(g, &outbound) {
        if !p.accepts(t) {
            return Err(OperatorError::TypeMismatch {
                boundary: format!("{va}->{vc}"),
                detail: format!("port {} of {vc} does not accept {t}", p.label),
            });
        }
    }
    let label = if is_arm(g, &inbound) { inbound.label.clone() } else { outbound.label.clone() };
    let summary = describe_node(node);

    let (mut nodes, mut edges, mut prompts) = g.to_parts();
    nodes.retain(|n| n.id.as_str() != id);
    edges.retain(|e| e.source.as_str() != id && e.target.as_str() != id);
    edges.push(Edge::new(va.clone(), vc.clone(), label));
    prune_orphans(g, &nodes, &mut prompts);
    let product = g.rebuild(nodes, edges, prompts)?;
    guard(OperatorKind::Deletion, vec![product], format!("Deletion: removed {summary} and connected {va}->{vc}."))
}
