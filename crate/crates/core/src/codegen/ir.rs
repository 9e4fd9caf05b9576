use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::CodegenError;
use crate::graph::ports::{bind_ports, PortFeed};
use crate::graph::{Edge, InterfaceRole, NodeId, PromptTable, WorkflowGraph};
use crate::validate::validate_graph;

/// A value passed to a call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Operand {
    /// An entry payload, passed in as a parameter of the program.
    Param { name: String },
    /// The result of an earlier call of the given kind; the emitted field
    /// comes from that kind's template.
    Output { binding: String, kind: String },
    /// A variable assigned by a guard.
    Var { name: String },
    Literal { value: String },
    List { items: Vec<Operand> },
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Call {
    pub node: NodeId,
    pub kind: String,
    pub binding: String,
    /// One operand per input port, in schema order.
    pub args: Vec<(String, Operand)>,
    /// Raw attribute values, quotes stripped.
    pub attrs: BTreeMap<String, String>,
    /// Attribute key to prompt-table name, for attributes naming a prompt.
    pub prompts: BTreeMap<String, String>,
}

/// Test, then on failure one repair call and a re-test. `merged` holds the
/// tested solution, replaced by the repair output when the re-test passes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Guard {
    pub test: Call,
    pub merged: String,
    pub repair: Call,
    pub retest: Call,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Call(Call),
    Guard(Guard),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgramIR {
    /// Entry payload names, default payload first.
    pub params: Vec<String>,
    pub steps: Vec<Step>,
    pub terminal: Operand,
    /// Prompts referenced by some call.
    pub prompts: PromptTable,
}

impl ProgramIR {
    /// Every call in emission order, re-tests included.
    pub fn calls(&self) -> Vec<&Call> {
        let mut out = Vec::new();
        for s in &self.steps {
            match s {
                Step::Call(c) => out.push(c),
                Step::Guard(g) => out.extend([&g.test, &g.repair, &g.retest]),
            }
        }
        out
    }

    /// Calls that stand for a graph node, re-tests excluded.
    pub fn node_calls(&self) -> Vec<&Call> {
        let mut out = Vec::new();
        for s in &self.steps {
            match s {
                Step::Call(c) => out.push(c),
                Step::Guard(g) => out.extend([&g.test, &g.repair]),
            }
        }
        out
    }
}

const RESERVED: [&str; 46] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif", "else", "except",
    "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield", "match", "case", "self", "operator", "prompt_custom", "weave", "Literal", "create_llm_instance", "solutions",
    "type", "print",
];

struct Names {
    taken: BTreeSet<String>,
}

impl Names {
    fn new(params: &[String]) -> Self {
        let mut taken: BTreeSet<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        taken.extend(params.iter().cloned());
        Names { taken }
    }

    /// Lowercase snake form, made unique against everything handed out.
    fn claim(&mut self, raw: &str) -> String {
        let mut base: String = raw.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
        if base.is_empty() || base.starts_with(|c: char| c.is_ascii_digit()) {
            base.insert(0, '_');
        }
        if self.taken.contains(&base) {
            base.push('_');
        }
        let mut name = base.clone();
        let mut k = 2;
        while self.taken.contains(&name) {
            name = format!("{base}{k}");
            k += 1;
        }
        self.taken.insert(name.clone());
        name
    }
}

fn unquote(v: &str) -> String {
    let t = v.trim();
    for q in ['\'', '"'] {
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(q) {
            return t[1..t.len() - 1].to_string();
        }
    }
    t.to_string()
}

struct GuardShape {
    test: NodeId,
    repair: NodeId,
}

/// The fail arm must lead to one repair node whose outputs rejoin exactly
/// the pass-arm targets.
fn guard_shape(g: &WorkflowGraph, t: &NodeId) -> Result<Option<GuardShape>, CodegenError> {
    let node = g.node(t.as_str()).expect("ordered ids exist");
    let Some(schema) = g.registry().schema(node.kind.as_str()) else { return Ok(None) };
    let [pass, fail, ..] = schema.branches.as_slice() else { return Ok(None) };
    let arm = |name: &str| -> BTreeSet<NodeId> {
        g.outgoing_edges(t.as_str()).filter(|e| e.label() == Some(name)).map(|e| e.target.clone()).collect()
    };
    let (passes, fails) = (arm(pass), arm(fail));
    if fails.is_empty() {
        return Ok(None);
    }
    let bad = |detail: String| Err(CodegenError::RepairShape { node: t.clone(), detail });
    if passes.is_empty() {
        return bad(format!("the {fail} arm has no matching {pass} arm"));
    }
    if fails.len() > 1 {
        return bad(format!("the {fail} arm leads to {} nodes; one repair node is supported", fails.len()));
    }
    let r = fails.into_iter().next().expect("one");
    let rnode = g.node(r.as_str()).expect("edge targets exist");
    let rschema = g.registry().schema(rnode.kind.as_str());
    if rnode.kind.is_interface() || rschema.is_none_or(|s| !s.branches.is_empty() || !s.executable) {
        return bad(format!("the {fail} arm target {r} is not a plain operator"));
    }
    if g.in_degree(r.as_str()) != 1 {
        return bad(format!("repair node {r} has inputs besides the {fail} arm"));
    }
    let rejoin: BTreeSet<NodeId> = g.outgoing_edges(r.as_str()).map(|e| e.target.clone()).collect();
    if rejoin != passes {
        return bad(format!("repair node {r} must feed exactly the {pass} arm targets; deeper repair chains are not supported"));
    }
    Ok(Some(GuardShape { test: t.clone(), repair: r }))
}

/// Lowers a valid graph to a straight-line call sequence in topological
/// order (ties by id).
pub fn lower_to_ir(g: &WorkflowGraph) -> Result<ProgramIR, CodegenError> {
    if g.nodes().all(|n| n.kind.is_interface()) {
        return Err(CodegenError::NothingToEmit);
    }
    let verdict = validate_graph(g);
    if !verdict.passed() {
        return Err(CodegenError::Invalid(verdict));
    }
    for n in g.nodes().filter(|n| !n.kind.is_interface()) {
        if g.registry().schema(n.kind.as_str()).is_none_or(|s| !s.executable) {
            return Err(CodegenError::Unlowered { kind: n.kind.to_string(), node: n.id.clone() });
        }
    }
    let (order, rest) = g.topological_order();
    if !rest.is_empty() {
        return Err(CodegenError::Cyclic(rest));
    }

    let iface = &g.registry().interface;
    let mut params: Vec<String> = g.entries().iter().map(|e| g.entry_payload(e.as_str()).to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    params.sort_by_key(|p| (p != &iface.default_payload, p.clone()));

    let mut names = Names::new(&params);
    let mut binding: BTreeMap<NodeId, String> = BTreeMap::new();
    for id in order.iter().filter(|id| !g.node(id.as_str()).expect("exists").kind.is_interface()) {
        binding.insert(id.clone(), names.claim(id.as_str()));
    }

    let mut guards: BTreeMap<NodeId, GuardShape> = BTreeMap::new();
    for id in binding.keys() {
        if let Some(shape) = guard_shape(g, id)? {
            guards.insert(id.clone(), shape);
        }
    }
    // Test and repair outputs reach downstream nodes only through the merged variable.
    let mut merged_of: BTreeMap<NodeId, String> = BTreeMap::new();
    let mut merged_names: BTreeMap<NodeId, (String, String)> = BTreeMap::new();
    for (t, shape) in &guards {
        let merged = names.claim(&format!("{}_solution", binding[t]));
        let retest = names.claim(&format!("{}_retest", binding[t]));
        merged_of.insert(t.clone(), merged.clone());
        merged_of.insert(shape.repair.clone(), merged.clone());
        merged_names.insert(t.clone(), (merged, retest));
    }
    let repairs: BTreeMap<&NodeId, &NodeId> = guards.values().map(|s| (&s.repair, &s.test)).collect();

    let kind_of = |id: &NodeId| -> String {
        let n = g.node(id.as_str()).expect("exists");
        g.registry().canonical(n.kind.as_str()).unwrap_or(n.kind.as_str()).to_string()
    };
    let report = bind_ports(g);
    let operand_for = |e: &Edge| -> Operand {
        let src = &e.source;
        if g.interface_role(src.as_str()) == Some(InterfaceRole::Entry) {
            return Operand::Param { name: g.entry_payload(src.as_str()).to_string() };
        }
        let is_repair_input = repairs.get(&e.target).is_some_and(|t| *t == src);
        match merged_of.get(src) {
            Some(m) if !is_repair_input => Operand::Var { name: m.clone() },
            _ => Operand::Output { binding: binding[src].clone(), kind: kind_of(src) },
        }
    };

    let make_call = |id: &NodeId| -> Call {
        let node = g.node(id.as_str()).expect("exists");
        let schema = g.registry().schema(node.kind.as_str()).expect("checked above");
        let nb = report.binding(id.as_str()).expect("every operator is bound");
        let mut args = Vec::with_capacity(nb.ports.len());
        for (port, feed) in &nb.ports {
            let op = match feed {
                PortFeed::Edges(es) => {
                    let mut items: Vec<Operand> = Vec::new();
                    for e in es {
                        let o = operand_for(e);
                        if !items.contains(&o) {
                            items.push(o);
                        }
                    }
                    if port.multi {
                        Operand::List { items }
                    } else {
                        items.into_iter().next().unwrap_or(Operand::None)
                    }
                }
                PortFeed::Inline(v) => Operand::Literal { value: unquote(v) },
                PortFeed::Fallback(p) => Operand::Param { name: p.clone() },
                PortFeed::Empty => Operand::None,
            };
            args.push((port.label.clone(), op));
        }
        let attrs: BTreeMap<String, String> = node.attributes.iter().map(|(k, v)| (k.clone(), unquote(v))).collect();
        let mut prompts = BTreeMap::new();
        for key in schema.prompt_keys() {
            if let Some(v) = node.attributes.get(key) {
                if let Some((name, _)) = g.prompts().resolve(v) {
                    prompts.insert(key.to_string(), name.to_string());
                }
            }
        }
        Call { node: id.clone(), kind: schema.name.clone(), binding: binding[id].clone(), args, attrs, prompts }
    };

    let mut steps = Vec::new();
    for id in &order {
        if !binding.contains_key(id) || repairs.contains_key(id) {
            continue;
        }
        let call = make_call(id);
        match guards.get(id) {
            None => steps.push(Step::Call(call)),
            Some(shape) => {
                let repair = make_call(&shape.repair);
                let (merged, retest_name) = merged_names[id].clone();
                let mut retest = call.clone();
                retest.binding = retest_name;
                for (_, op) in retest.args.iter_mut() {
                    if !matches!(op, Operand::Param { .. } | Operand::Literal { .. } | Operand::None) {
                        *op = Operand::Output { binding: repair.binding.clone(), kind: repair.kind.clone() };
                    }
                }
                steps.push(Step::Guard(Guard { test: call, merged, repair, retest }));
            }
        }
    }

    let exit = g.exit().expect("valid graphs have one exit");
    let mut terminal: Vec<Operand> = Vec::new();
    for e in g.incoming_edges(exit.as_str()) {
        let o = operand_for(e);
        if !terminal.contains(&o) {
            terminal.push(o);
        }
    }
    let terminal = match terminal.len() {
        1 => terminal.pop().expect("one"),
        _ => return Err(CodegenError::Terminal(exit.clone())),
    };

    let mut prompts = PromptTable::new();
    for s in &steps {
        let calls: Vec<&Call> = match s {
            Step::Call(c) => vec![c],
            Step::Guard(gd) => vec![&gd.test, &gd.repair],
        };
        for c in calls {
            for name in c.prompts.values() {
                if let Some(text) = g.prompts().get(name) {
                    prompts.insert(name.clone(), text);
                }
            }
        }
    }
    Ok(ProgramIR { params, steps, terminal, prompts })
}
