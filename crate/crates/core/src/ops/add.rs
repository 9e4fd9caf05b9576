use super::{bound_port, describe_node, find_edge, guard, is_arm, port_for, OperatorError, OperatorKind, RewriteOutcome};
use crate::graph::{Edge, GraphError, Node, PromptTable, WorkflowGraph};
use crate::validate::min_fan_in_of;

/// Inserts `new_node` on the edge `va -> vb`, replacing it with
/// `va -> new_node -> vb`.
pub fn add_node(g: &WorkflowGraph, edge: (&str, &str), new_node: Node) -> Result<RewriteOutcome, OperatorError> {
    add_node_with_prompts(g, edge, new_node, &PromptTable::new())
}

/// [`add_node`] that also adds `extra` prompts to the table.
pub fn add_node_with_prompts(g: &WorkflowGraph, (va, vb): (&str, &str), new_node: Node, extra: &PromptTable) -> Result<RewriteOutcome, OperatorError> {
    let old = find_edge(g, va, vb)?.clone();
    let x = new_node.id.clone();
    if g.contains(x.as_str()) {
        return Err(GraphError::DuplicateNode(x).into());
    }
    if new_node.kind.is_interface() {
        return Err(OperatorError::Precondition(format!("cannot insert interface node {x}")));
    }
    let reg = g.registry();
    let schema = reg
        .schema(new_node.kind.as_str())
        .ok_or_else(|| OperatorError::Precondition(format!("{} is not a registered kind", new_node.kind)))?;
    if let Some(need) = min_fan_in_of(schema) {
        return Err(OperatorError::Precondition(format!(
            "{} {x} would have 1 incoming connection, needs at least {need}",
            new_node.kind
        )));
    }
    if let Some(missing) = schema.required_attributes().find(|a| !new_node.attributes.contains_key(&a.key)) {
        return Err(OperatorError::Precondition(format!("{} {x} requires attribute {}", new_node.kind, missing.key)));
    }

    let t_in = g.type_of_output(va)?;
    let pin = port_for(reg, &new_node, t_in).ok_or_else(|| OperatorError::TypeMismatch {
        boundary: format!("{va}->{x}"),
        detail: format!("{} has no input port accepting {t_in}", new_node.kind),
    })?;
    let t_out = schema.output.as_str();
    let target_port = bound_port(g, &old).or_else(|| {
        let target = g.node(vb)?;
        reg.input_ports(&target.kind).iter().find(|p| p.accepts(t_in)).cloned()
    });
    if let Some(p) = &target_port {
        if !p.accepts(t_out) {
            return Err(OperatorError::TypeMismatch {
                boundary: format!("{x}->{vb}"),
                detail: format!("port {} of {vb} does not accept {t_out}", p.label),
            });
        }
    }

    let (first, second) = if is_arm(g, &old) {
        (old.label.clone(), target_port.as_ref().and_then(|p| p.edge_label()))
    } else {
        (pin.edge_label(), old.label.clone())
    };
    let summary = describe_node(&new_node);
    let (mut nodes, mut edges, mut prompts) = g.to_parts();
    edges.retain(|e| *e != old);
    edges.push(Edge::new(old.source.clone(), x.clone(), first));
    edges.push(Edge::new(x, old.target.clone(), second));
    nodes.push(new_node);
    for (name, text) in extra.iter() {
        prompts.insert(name, text);
    }
    let product = g.rebuild(nodes, edges, prompts)?;
    guard(OperatorKind::Addition, vec![product], format!("Addition: inserted {summary} on {va}->{vb}."))
}
