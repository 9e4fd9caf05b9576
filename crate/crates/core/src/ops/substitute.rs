use std::collections::BTreeMap;

use super::{guard, node_or_err, prune_orphans, OperatorError, OperatorKind, RewriteOutcome};
use crate::graph::{PromptTable, WorkflowGraph};

/// Replaces the attribute map of node `id`. Kind and topology are unchanged.
pub fn substitute_node(g: &WorkflowGraph, id: &str, attributes: BTreeMap<String, String>) -> Result<RewriteOutcome, OperatorError> {
    substitute_node_with_prompts(g, id, attributes, &PromptTable::new())
}

/// [`substitute_node`] that also adds `extra` prompts to the table. Prompts
/// referenced only by the old attributes are dropped.
pub fn substitute_node_with_prompts(
    g: &WorkflowGraph,
    id: &str,
    attributes: BTreeMap<String, String>,
    extra: &PromptTable,
) -> Result<RewriteOutcome, OperatorError> {
    let node = node_or_err(g, id)?;
    if node.kind.is_interface() {
        return Err(OperatorError::Precondition(format!("interface node {id} has no attributes to substitute")));
    }
    let schema = g
        .registry()
        .schema(node.kind.as_str())
        .ok_or_else(|| OperatorError::Precondition(format!("{} {id} has no registered schema", node.kind)))?;
    for key in attributes.keys() {
        if !schema.attribute.iter().any(|a| &a.key == key) {
            return Err(OperatorError::Precondition(format!("{} does not define attribute {key}", node.kind)));
        }
    }
    if let Some(missing) = schema.required_attributes().find(|a| !attributes.contains_key(&a.key)) {
        return Err(OperatorError::Precondition(format!("{} {id} requires attribute {}", node.kind, missing.key)));
    }

    let mut changes = Vec::new();
    for (k, v) in &attributes {
        match node.attributes.get(k) {
            Some(old) if old == v => {}
            Some(old) => changes.push(format!("{k} of {id} from {old} to {v}")),
            None => changes.push(format!("{k} of {id} to {v}")),
        }
    }
    for k in node.attributes.keys().filter(|k| !attributes.contains_key(*k)) {
        changes.push(format!("removed {k} of {id}"));
    }
    let summary = if changes.is_empty() { format!("kept the attributes of {id}") } else { format!("set {}", changes.join(", ")) };

    let (mut nodes, edges, mut prompts) = g.to_parts();
    for n in nodes.iter_mut().filter(|n| n.id.as_str() == id) {
        n.attributes = attributes.clone();
    }
    for (name, text) in extra.iter() {
        prompts.insert(name, text);
    }
    prune_orphans(g, &nodes, &mut prompts);
    let product = g.rebuild(nodes, edges, prompts)?;
    guard(OperatorKind::Substitution, vec![product], format!("Substitution on {} {id}: {summary}.", node.kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::testing::*;

    fn role(v: &str) -> BTreeMap<String, String> {
        BTreeMap::from([("role".to_string(), v.to_string())])
    }

    #[test]
    fn swaps_prompt_and_drops_the_old_one() {
        let g = gsm8k();
        let mut extra = PromptTable::new();
        extra.insert("SIMPLE_SOLVER_2", "Solve the problem carefully and box the final answer.");
        let out = substitute_node_with_prompts(&g, "C", role("simple_solver_2"), &extra).unwrap();
        let h = out.graph();
        assert_eq!(h.edges(), g.edges());
        assert_eq!(h.node("C").unwrap().attributes["role"], "simple_solver_2");
        assert!(!h.prompts().contains("SIMPLE_SOLVER_1"));
        let changed: Vec<_> = g.nodes().zip(h.nodes()).filter(|(a, b)| a != b).collect();
        assert_eq!(changed.len(), 1);
        assert!(out.description.contains("simple_solver_1") && out.description.contains("simple_solver_2"));
    }

    #[test]
    fn unresolved_prompt_is_rejected() {
        let g = gsm8k();
        let err = substitute_node(&g, "C", role("simple_solver_2")).unwrap_err();
        assert!(matches!(err, OperatorError::Rejected { .. }), "{err}");
    }

    #[test]
    fn missing_required_key_is_a_precondition_error() {
        let g = gsm8k();
        let err = substitute_node(&g, "C", BTreeMap::new()).unwrap_err();
        assert!(matches!(err, OperatorError::Precondition(_)));
        assert!(err.to_string().contains("role"));
        assert!(matches!(substitute_node(&g, "NOPE", role("x")), Err(OperatorError::Graph(_))));
        assert!(matches!(substitute_node(&g, "PROBLEM", role("x")), Err(OperatorError::Precondition(_))));
    }
}
