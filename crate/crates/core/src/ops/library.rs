//! Built-in attribute values and node templates used by random rewrites.

use crate::graph::{Domain, Node, NodeId, NodeKind, PromptTable, Registry};

/// A named prompt text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptSpec {
    pub name: &'static str,
    pub text: &'static str,
}

const fn p(name: &'static str, text: &'static str) -> PromptSpec {
    PromptSpec { name, text }
}

pub const MATH_ROLES: &[PromptSpec] = &[
    p("SIMPLE_SOLVER", "Solve the problem directly and give the final answer inside \\boxed{}."),
    p("STEP_BY_STEP_SOLVER", "Work through the problem one step at a time, writing each intermediate result before moving on."),
    p("ALTERNATIVE_SOLVER", "Solve the problem with a different method from the obvious one and state the final answer."),
    p("DETAILED_OUTLINE", "Write an outline of the quantities involved and the relations between them, then solve."),
    p("VERIFY_SOLUTION", "Check the given solution against the problem statement, fix any arithmetic slip, and restate the answer."),
    p("REFINE_SOLUTION", "Rewrite the solution so the reasoning is clear and the final answer is in the required format."),
    p("CAREFUL_CHECKER", "Recompute every number in the solution and report the corrected final answer."),
];

pub const CODE_ROLES: &[PromptSpec] = &[
    p("REVIEW_CODE", "Read the function, point out logic errors or unhandled inputs, and return a corrected version."),
    p("TIDY_CODE", "Return the same function with clearer names and no change in behaviour."),
];

pub const CODE_INSTRUCTIONS: &[PromptSpec] = &[
    p("SIMPLE_CODER", "Write a Python function that solves the problem and keeps the name from the signature."),
    p("OPTIMIZED_CODER", "Write an efficient Python implementation of the requested function that avoids needless work."),
    p("EDGE_CASE_CODER", "Write the requested Python function, paying attention to empty inputs, limits and unusual values."),
    p("DEFENSIVE_CODER", "Write the function and validate its arguments so that bad input cannot crash it."),
    p("FIX_CODE", "The previous code failed its tests. Locate the fault and return a corrected function."),
];

pub const ANALYSES: &[&str] = &[
    "Calculate step by step",
    "Check each intermediate value",
    "Verify the result numerically",
    "Try an alternative formulation",
    "Simplify the expression before computing",
];

/// One candidate value for an attribute, with the prompt it needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrChoice {
    pub value: String,
    pub prompt: Option<(String, String)>,
}

impl AttrChoice {
    pub fn literal(v: &str) -> Self {
        AttrChoice { value: v.to_string(), prompt: None }
    }

    pub fn prompt(spec: &PromptSpec) -> Self {
        AttrChoice { value: spec.name.to_ascii_lowercase(), prompt: Some((spec.name.to_string(), spec.text.to_string())) }
    }

    /// Adds the prompt to `table` unless the value already resolves there.
    pub fn install(&self, table: &mut PromptTable) {
        if let Some((name, text)) = &self.prompt {
            if table.resolve(&self.value).is_none() {
                table.insert(name.clone(), text.clone());
            }
        }
    }
}

fn prompt_specs(kind: &str, domain: Domain) -> &'static [PromptSpec] {
    match (kind, domain) {
        ("CustomCodeGenerateOp", _) => CODE_INSTRUCTIONS,
        ("CustomOp", Domain::Code) => CODE_ROLES,
        _ => MATH_ROLES,
    }
}

/// Candidate values for attribute `key` on a node of `kind`. Prompt-valued
/// keys draw from the prompt library and from prompts already in `existing`.
pub fn attribute_values(registry: &Registry, kind: &str, key: &str, domain: Domain, existing: &PromptTable) -> Vec<AttrChoice> {
    let Some(schema) = registry.schema(kind) else { return Vec::new() };
    let Some(attr) = schema.attribute.iter().find(|a| a.key == key) else { return Vec::new() };
    if !attr.prompt_ref {
        return ANALYSES.iter().map(|a| AttrChoice::literal(a)).collect();
    }
    let mut out: Vec<AttrChoice> = prompt_specs(kind, domain).iter().map(AttrChoice::prompt).collect();
    for name in existing.names() {
        let value = if name == name.to_ascii_uppercase() { name.to_ascii_lowercase() } else { name.to_string() };
        if !out.iter().any(|c| c.value == value) {
            out.push(AttrChoice::literal(&value));
        }
    }
    out
}

/// A node that addition may insert, before it is given an id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeTemplate {
    pub kind: NodeKind,
    pub attrs: Vec<(String, AttrChoice)>,
}

impl NodeTemplate {
    pub fn instantiate(&self, id: NodeId, registry: &Registry, prompts: &mut PromptTable) -> Node {
        let display = registry.display_of(self.kind.as_str()).unwrap_or(self.kind.as_str()).to_string();
        let mut node = Node::new(id, self.kind.clone(), display);
        for (k, choice) in &self.attrs {
            choice.install(prompts);
            node.attributes.insert(k.clone(), choice.value.clone());
        }
        node
    }
}

/// Kinds addition may insert in a domain, with every library attribute
/// choice. Kinds needing more than one incoming edge are excluded.
pub fn insertable(registry: &Registry, domain: Domain) -> Vec<NodeTemplate> {
    let mut out = Vec::new();
    for schema in registry.kinds() {
        if !schema.executable || !schema.domain.allows(domain) || crate::validate::min_fan_in_of(schema).is_some() {
            continue;
        }
        let kind = schema.kind();
        let keyed: Vec<&str> = schema.attribute.iter().map(|a| a.key.as_str()).collect();
        match keyed.first() {
            None => out.push(NodeTemplate { kind, attrs: Vec::new() }),
            Some(key) => {
                for choice in attribute_values(registry, &schema.name, key, domain, &PromptTable::new()) {
                    out.push(NodeTemplate { kind: kind.clone(), attrs: vec![(key.to_string(), choice)] });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_prompts_are_judge_sized() {
        for spec in MATH_ROLES.iter().chain(CODE_ROLES).chain(CODE_INSTRUCTIONS) {
            let words = spec.text.split_whitespace().count();
            assert!((5..=100).contains(&words), "{}", spec.name);
            assert_eq!(spec.name, spec.name.to_ascii_uppercase());
        }
    }

    #[test]
    fn insertable_respects_domain_and_fan_in() {
        let reg = Registry::default();
        let math = insertable(&reg, Domain::Math);
        assert!(math.iter().all(|t| t.kind != "ScEnsembleOp" && t.kind != "TestOp"));
        assert!(math.iter().any(|t| t.kind == "ProgrammerOp"));
        let code = insertable(&reg, Domain::Code);
        assert!(code.iter().any(|t| t.kind == "TestOp"));
        assert!(code.iter().all(|t| t.kind != "ProgrammerOp" && t.kind != "DecisionOp"));
    }
}
