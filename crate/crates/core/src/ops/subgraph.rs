//! Region replacement and the fragment library it draws from.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::library::{AttrChoice, ANALYSES, CODE_INSTRUCTIONS, MATH_ROLES};
use super::{fresh_id, free_variant, guard, id_prefix, import_prompts, is_arm, bound_port, port_for, prune_orphans, OperatorError, OperatorKind, RewriteOutcome};
use crate::graph::{Domain, Edge, Node, NodeId, NodeKind, PromptTable, Registry, WorkflowGraph};

/// Label for an edge crossing the region boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryLabel {
    /// Keep a branch arm of the outside node, otherwise use the port
    /// convention of the receiving side.
    Derive,
    Fixed(Option<String>),
}

/// Replacement subgraph with its boundary signature.
///
/// `inputs[i]` lists the fragment nodes fed by the i-th outside source of the
/// region (sources sorted by id); `outputs[j]` lists the fragment nodes that
/// feed the j-th outside target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub prompts: PromptTable,
    pub inputs: Vec<Vec<(NodeId, BoundaryLabel)>>,
    pub outputs: Vec<Vec<(NodeId, BoundaryLabel)>>,
}

/// Edges crossing into and out of a region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionBoundary {
    pub sources: Vec<NodeId>,
    pub targets: Vec<NodeId>,
    pub incoming: Vec<Edge>,
    pub outgoing: Vec<Edge>,
}

impl RegionBoundary {
    pub fn of(g: &WorkflowGraph, region: &BTreeSet<NodeId>) -> Self {
        let incoming: Vec<Edge> = g.edges().iter().filter(|e| !region.contains(&e.source) && region.contains(&e.target)).cloned().collect();
        let outgoing: Vec<Edge> = g.edges().iter().filter(|e| region.contains(&e.source) && !region.contains(&e.target)).cloned().collect();
        let sources: BTreeSet<NodeId> = incoming.iter().map(|e| e.source.clone()).collect();
        let targets: BTreeSet<NodeId> = outgoing.iter().map(|e| e.target.clone()).collect();
        RegionBoundary { sources: sources.into_iter().collect(), targets: targets.into_iter().collect(), incoming, outgoing }
    }
}

fn check_region(g: &WorkflowGraph, region: &BTreeSet<NodeId>) -> Result<(), OperatorError> {
    if region.is_empty() {
        return Err(OperatorError::Precondition("region is empty".into()));
    }
    for id in region {
        let node = super::node_or_err(g, id.as_str())?;
        if node.kind.is_interface() {
            return Err(OperatorError::Precondition(format!("region contains interface node {id}")));
        }
    }
    if !is_connected(g, region) {
        let ids: Vec<&str> = region.iter().map(NodeId::as_str).collect();
        return Err(OperatorError::Precondition(format!("region {{{}}} is not connected", ids.join(", "))));
    }
    Ok(())
}

fn is_connected(g: &WorkflowGraph, region: &BTreeSet<NodeId>) -> bool {
    let Some(start) = region.first() else { return true };
    let mut seen = BTreeSet::from([start.clone()]);
    let mut stack = vec![start.clone()];
    while let Some(id) = stack.pop() {
        let near = g.outgoing_edges(id.as_str()).map(|e| &e.target).chain(g.incoming_edges(id.as_str()).map(|e| &e.source));
        for n in near {
            if region.contains(n) && seen.insert(n.clone()) {
                stack.push(n.clone());
            }
        }
    }
    seen.len() == region.len()
}

/// Connected sets of non-interface nodes with at most `max_size` members,
/// in a deterministic order.
pub fn connected_regions(g: &WorkflowGraph, max_size: usize) -> Vec<BTreeSet<NodeId>> {
    let mut all: BTreeSet<Vec<NodeId>> = BTreeSet::new();
    let mut level: BTreeSet<BTreeSet<NodeId>> = g.executable_nodes().map(|n| BTreeSet::from([n.id.clone()])).collect();
    for size in 1..=max_size {
        all.extend(level.iter().map(|s| s.iter().cloned().collect::<Vec<_>>()));
        if size == max_size {
            break;
        }
        let mut next = BTreeSet::new();
        for set in &level {
            for id in set {
                let near = g.outgoing_edges(id.as_str()).map(|e| &e.target).chain(g.incoming_edges(id.as_str()).map(|e| &e.source));
                for n in near {
                    if set.contains(n) || g.node(n.as_str()).is_none_or(|x| x.kind.is_interface()) {
                        continue;
                    }
                    let mut grown = set.clone();
                    grown.insert(n.clone());
                    next.insert(grown);
                }
            }
        }
        level = next;
    }
    let mut out: Vec<BTreeSet<NodeId>> = all.into_iter().map(|v| v.into_iter().collect()).collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// The region as a fragment whose boundary labels reproduce the original
/// edges exactly.
pub fn extract_fragment(g: &WorkflowGraph, region: &BTreeSet<NodeId>) -> Result<Fragment, OperatorError> {
    check_region(g, region)?;
    let b = RegionBoundary::of(g, region);
    let nodes: Vec<Node> = region.iter().filter_map(|id| g.node(id.as_str()).cloned()).collect();
    let edges = g.edges().iter().filter(|e| region.contains(&e.source) && region.contains(&e.target)).cloned().collect();
    let used = super::referenced_prompts(&nodes, g.prompts(), g.registry());
    let prompts = g.prompts().iter().filter(|(n, _)| used.contains(*n)).map(|(n, t)| (n.to_string(), t.to_string())).collect();
    let inputs = b
        .sources
        .iter()
        .map(|s| b.incoming.iter().filter(|e| &e.source == s).map(|e| (e.target.clone(), BoundaryLabel::Fixed(e.label.clone()))).collect())
        .collect();
    let outputs = b
        .targets
        .iter()
        .map(|t| b.outgoing.iter().filter(|e| &e.target == t).map(|e| (e.source.clone(), BoundaryLabel::Fixed(e.label.clone()))).collect())
        .collect();
    Ok(Fragment { nodes, edges, prompts, inputs, outputs })
}

fn check_fragment(reg: &Registry, f: &Fragment) -> Result<(), OperatorError> {
    let bad = |m: String| Err(OperatorError::InvalidFragment(m));
    if f.nodes.is_empty() {
        return bad("fragment has no nodes".into());
    }
    let mut ids = BTreeSet::new();
    for n in &f.nodes {
        if !ids.insert(&n.id) {
            return bad(format!("duplicate node {}", n.id));
        }
        if n.kind.is_interface() {
            return bad(format!("fragment contains interface node {}", n.id));
        }
        let Some(schema) = reg.schema(n.kind.as_str()) else {
            return bad(format!("{} is not a registered kind", n.kind));
        };
        if let Some(a) = schema.required_attributes().find(|a| !n.attributes.contains_key(&a.key)) {
            return bad(format!("{} {} requires attribute {}", n.kind, n.id, a.key));
        }
    }
    for e in &f.edges {
        if !ids.contains(&e.source) || !ids.contains(&e.target) {
            return bad(format!("edge {}->{} leaves the fragment", e.source, e.target));
        }
    }
    for (id, _) in f.inputs.iter().chain(&f.outputs).flatten() {
        if !ids.contains(id) {
            return bad(format!("boundary slot names unknown node {id}"));
        }
    }
    Ok(())
}

/// Replaces `region` with `replacement`, matching boundary slots by position.
pub fn mutate_subgraph(g: &WorkflowGraph, region: &BTreeSet<NodeId>, replacement: &Fragment) -> Result<RewriteOutcome, OperatorError> {
    check_region(g, region)?;
    let reg = g.registry();
    check_fragment(reg, replacement)?;
    let b = RegionBoundary::of(g, region);
    let mut mismatch = Vec::new();
    if b.sources.len() != replacement.inputs.len() {
        mismatch.push(format!("region has {} input source(s), fragment expects {}", b.sources.len(), replacement.inputs.len()));
    }
    if b.targets.len() != replacement.outputs.len() {
        mismatch.push(format!("region has {} output target(s), fragment provides {}", b.targets.len(), replacement.outputs.len()));
    }
    if !mismatch.is_empty() {
        return Err(OperatorError::BoundaryMismatch(mismatch));
    }

    let mut assigned: BTreeSet<String> = BTreeSet::new();
    let mut rename: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for n in &replacement.nodes {
        let taken = |c: &str| (g.contains(c) && !region.iter().any(|r| r.as_str() == c)) || assigned.contains(c);
        let new = free_variant(&n.id, &taken);
        assigned.insert(new.to_string());
        rename.insert(n.id.clone(), new);
    }
    let by_id: BTreeMap<&NodeId, &Node> = replacement.nodes.iter().map(|n| (&n.id, n)).collect();

    let mut boundary_edges = Vec::new();
    for (i, src) in b.sources.iter().enumerate() {
        let t = g.type_of_output(src.as_str())?;
        let arm = b.incoming.iter().find(|e| &e.source == src && is_arm(g, e)).and_then(|e| e.label.clone());
        for (r, label) in &replacement.inputs[i] {
            let node = by_id[r];
            let Some(port) = port_for(reg, node, t) else {
                mismatch.push(format!("input {i} from {src} carries {t}, which {} {r} does not accept", node.kind));
                continue;
            };
            let label = match label {
                BoundaryLabel::Fixed(l) => l.clone(),
                BoundaryLabel::Derive => arm.clone().or_else(|| port.edge_label()),
            };
            boundary_edges.push(Edge::new(src.clone(), rename[r].clone(), label));
        }
    }
    for (j, dst) in b.targets.iter().enumerate() {
        let original: Vec<&Edge> = b.outgoing.iter().filter(|e| &e.target == dst).collect();
        let expected: BTreeSet<&str> = original.iter().filter_map(|e| g.output_type(e.source.as_str())).collect();
        if replacement.outputs[j].is_empty() {
            mismatch.push(format!("output {j} to {dst} has no emitter"));
        }
        let first = original[0];
        let derived = if is_arm(g, first) { bound_port(g, first).and_then(|p| p.edge_label()) } else { first.label.clone() };
        for (e, label) in &replacement.outputs[j] {
            let node = by_id[e];
            let ty = reg.schema(node.kind.as_str()).map(|s| s.output.as_str()).unwrap_or_default();
            if !expected.contains(ty) {
                mismatch.push(format!("output {j} to {dst} expects {}, {} {e} produces {ty}", join(&expected), node.kind));
            }
            let label = match label {
                BoundaryLabel::Fixed(l) => l.clone(),
                BoundaryLabel::Derive => derived.clone(),
            };
            boundary_edges.push(Edge::new(rename[e].clone(), dst.clone(), label));
        }
    }
    if !mismatch.is_empty() {
        return Err(OperatorError::BoundaryMismatch(mismatch));
    }

    let (nodes, edges, mut prompts) = g.to_parts();
    let mut nodes: Vec<Node> = nodes.into_iter().filter(|n| !region.contains(&n.id)).collect();
    prune_orphans(g, &nodes, &mut prompts);
    let mut added: Vec<Node> = replacement
        .nodes
        .iter()
        .map(|n| Node { id: rename[&n.id].clone(), ..n.clone() })
        .collect();
    import_prompts(&mut prompts, &replacement.prompts, &mut added, reg);
    let summary: Vec<String> = added.iter().map(super::describe_node).collect();
    nodes.extend(added);
    let mut edges: Vec<Edge> = edges.into_iter().filter(|e| !region.contains(&e.source) && !region.contains(&e.target)).collect();
    edges.extend(replacement.edges.iter().map(|e| Edge::new(rename[&e.source].clone(), rename[&e.target].clone(), e.label.clone())));
    edges.extend(boundary_edges);
    let product = g.rebuild(nodes, edges, prompts)?;
    let ids: Vec<&str> = region.iter().map(NodeId::as_str).collect();
    guard(
        OperatorKind::SubgraphMutation,
        vec![product],
        format!("Subgraph mutation: replaced {{{}}} with {}.", ids.join(", "), summary.join(", ")),
    )
}

fn join(s: &BTreeSet<&str>) -> String {
    s.iter().copied().collect::<Vec<_>>().join("|")
}

/// A reusable subgraph shape. `heads` receive every compatible outside
/// input; `tails` feed every outside target, optionally on a branch arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Motif {
    pub name: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub prompts: PromptTable,
    pub heads: Vec<NodeId>,
    pub tails: Vec<(NodeId, Option<String>)>,
    /// Give nodes fresh kind-prefixed ids instead of keeping their own.
    pub fresh_ids: bool,
}

impl Motif {
    /// Fits the motif to the boundary of `region` in `g`.
    pub fn instantiate(&self, g: &WorkflowGraph, region: &BTreeSet<NodeId>) -> Option<Fragment> {
        let reg = g.registry();
        let b = RegionBoundary::of(g, region);
        if b.targets.is_empty() {
            return None;
        }
        let mut rename: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        if self.fresh_ids {
            let mut assigned: BTreeSet<String> = BTreeSet::new();
            for n in &self.nodes {
                let taken = |c: &str| (g.contains(c) && !region.iter().any(|r| r.as_str() == c)) || assigned.contains(c);
                let id = fresh_id(id_prefix(&n.kind), &taken);
                assigned.insert(id.to_string());
                rename.insert(n.id.clone(), id);
            }
        } else {
            rename = self.nodes.iter().map(|n| (n.id.clone(), n.id.clone())).collect();
        }
        let node_of = |id: &NodeId| self.nodes.iter().find(|n| &n.id == id);
        let mut inputs = Vec::with_capacity(b.sources.len());
        for src in &b.sources {
            let t = g.output_type(src.as_str())?;
            let receivers: Vec<(NodeId, BoundaryLabel)> = self
                .heads
                .iter()
                .filter(|h| node_of(h).is_some_and(|n| port_for(reg, n, t).is_some()))
                .map(|h| (rename[h].clone(), BoundaryLabel::Derive))
                .collect();
            let used_elsewhere = g.outgoing_edges(src.as_str()).any(|e| !region.contains(&e.target));
            if receivers.is_empty() && !used_elsewhere {
                return None;
            }
            inputs.push(receivers);
        }
        let tails: Vec<(NodeId, BoundaryLabel)> = self
            .tails
            .iter()
            .map(|(id, arm)| (rename[id].clone(), arm.clone().map_or(BoundaryLabel::Derive, |a| BoundaryLabel::Fixed(Some(a)))))
            .collect();
        Some(Fragment {
            nodes: self.nodes.iter().map(|n| Node { id: rename[&n.id].clone(), ..n.clone() }).collect(),
            edges: self.edges.iter().map(|e| Edge::new(rename[&e.source].clone(), rename[&e.target].clone(), e.label.clone())).collect(),
            prompts: self.prompts.clone(),
            inputs,
            outputs: vec![tails; b.targets.len()],
        })
    }

    /// A motif taken from a region of another graph, keeping its ids.
    pub fn from_region(g: &WorkflowGraph, region: &BTreeSet<NodeId>) -> Result<Motif, OperatorError> {
        let f = extract_fragment(g, region)?;
        let b = RegionBoundary::of(g, region);
        let heads: BTreeSet<NodeId> = b.incoming.iter().map(|e| e.target.clone()).collect();
        let mut tails: Vec<(NodeId, Option<String>)> = Vec::new();
        for e in &b.outgoing {
            let arm = if is_arm(g, e) { e.label.clone() } else { None };
            if !tails.iter().any(|(id, a)| id == &e.source && a == &arm) {
                tails.push((e.source.clone(), arm));
            }
        }
        let ids: Vec<&str> = region.iter().map(NodeId::as_str).collect();
        Ok(Motif {
            name: format!("region {{{}}}", ids.join(", ")),
            nodes: f.nodes,
            edges: f.edges,
            prompts: f.prompts,
            heads: heads.into_iter().collect(),
            tails,
            fresh_ids: false,
        })
    }

    /// Built-in motifs for a domain.
    pub fn builtin(registry: &Registry, domain: Domain) -> Vec<Motif> {
        let mut b = MotifBuilder::new(registry);
        match domain {
            Domain::Math => vec![
                b.start("ensemble_of_solvers")
                    .node("A", "CustomOp", &[("role", role(MATH_ROLES, "STEP_BY_STEP_SOLVER"))])
                    .node("B", "CustomOp", &[("role", role(MATH_ROLES, "ALTERNATIVE_SOLVER"))])
                    .node("P", "ProgrammerOp", &[("analysis", AttrChoice::literal(ANALYSES[0]))])
                    .node("E", "ScEnsembleOp", &[])
                    .edge("A", "E", None)
                    .edge("B", "E", None)
                    .edge("P", "E", None)
                    .heads(&["A", "B", "P"])
                    .tails(&[("E", None)])
                    .finish(),
                b.start("solve_then_refine")
                    .node("A", "CustomOp", &[("role", role(MATH_ROLES, "VERIFY_SOLUTION"))])
                    .node("B", "CustomOp", &[("role", role(MATH_ROLES, "REFINE_SOLUTION"))])
                    .edge("A", "B", None)
                    .heads(&["A"])
                    .tails(&[("B", None)])
                    .finish(),
                b.start("single_solver")
                    .node("A", "CustomOp", &[("role", role(MATH_ROLES, "STEP_BY_STEP_SOLVER"))])
                    .heads(&["A"])
                    .tails(&[("A", None)])
                    .finish(),
            ],
            Domain::Code => vec![
                b.start("ensemble_of_coders")
                    .node("A", "CustomCodeGenerateOp", &[("instruction", role(CODE_INSTRUCTIONS, "SIMPLE_CODER"))])
                    .node("B", "CustomCodeGenerateOp", &[("instruction", role(CODE_INSTRUCTIONS, "EDGE_CASE_CODER"))])
                    .node("E", "ScEnsembleOp", &[])
                    .edge("A", "E", None)
                    .edge("B", "E", None)
                    .heads(&["A", "B"])
                    .tails(&[("E", None)])
                    .finish(),
                b.start("test_and_repair")
                    .node("T", "TestOp", &[])
                    .node("R", "CustomCodeGenerateOp", &[("instruction", role(CODE_INSTRUCTIONS, "FIX_CODE"))])
                    .edge("T", "R", Some("fail"))
                    .heads(&["T"])
                    .tails(&[("T", Some("pass")), ("R", None)])
                    .finish(),
                b.start("single_coder")
                    .node("A", "CustomCodeGenerateOp", &[("instruction", role(CODE_INSTRUCTIONS, "OPTIMIZED_CODER"))])
                    .heads(&["A"])
                    .tails(&[("A", None)])
                    .finish(),
            ],
        }
    }
}

fn role(specs: &[super::library::PromptSpec], name: &str) -> AttrChoice {
    let spec = specs.iter().find(|s| s.name == name).expect("library prompt exists");
    AttrChoice { value: spec.name.to_ascii_lowercase(), prompt: Some((spec.name.to_string(), spec.text.to_string())) }
}

struct MotifBuilder<'r> {
    registry: &'r Registry,
    motif: Option<Motif>,
}

impl<'r> MotifBuilder<'r> {
    fn new(registry: &'r Registry) -> Self {
        MotifBuilder { registry, motif: None }
    }

    fn start(&mut self, name: &str) -> &mut Self {
        self.motif = Some(Motif {
            name: name.to_string(),
            nodes: Vec::new(),
            edges: Vec::new(),
            prompts: PromptTable::new(),
            heads: Vec::new(),
            tails: Vec::new(),
            fresh_ids: true,
        });
        self
    }

    fn m(&mut self) -> &mut Motif {
        self.motif.as_mut().expect("started")
    }

    fn node(&mut self, id: &str, kind: &str, attrs: &[(&str, AttrChoice)]) -> &mut Self {
        let display = self.registry.display_of(kind).unwrap_or(kind).to_string();
        let mut node = Node::new(NodeId::new(id).expect("motif id"), NodeKind::new(kind), display);
        let m = self.m();
        for (k, choice) in attrs {
            choice.install(&mut m.prompts);
            node.attributes.insert(k.to_string(), choice.value.clone());
        }
        m.nodes.push(node);
        self
    }

    fn edge(&mut self, a: &str, b: &str, label: Option<&str>) -> &mut Self {
        let e = Edge::new(NodeId::new(a).expect("motif id"), NodeId::new(b).expect("motif id"), label.map(str::to_string));
        self.m().edges.push(e);
        self
    }

    fn heads(&mut self, ids: &[&str]) -> &mut Self {
        self.m().heads = ids.iter().map(|i| NodeId::new(*i).expect("motif id")).collect();
        self
    }

    fn tails(&mut self, ids: &[(&str, Option<&str>)]) -> &mut Self {
        self.m().tails = ids.iter().map(|(i, a)| (NodeId::new(*i).expect("motif id"), a.map(str::to_string))).collect();
        self
    }

    fn finish(&mut self) -> Motif {
        self.motif.take().expect("started")
    }
}
