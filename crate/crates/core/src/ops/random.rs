//! Weighted random application of the operators.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::library::{attribute_values, insertable, AttrChoice, NodeTemplate};
use super::subgraph::{connected_regions, mutate_subgraph, Motif};
use super::{
    add_node_with_prompts, crossover, delete_node, fresh_id, id_prefix, rewire_edge, substitute_node_with_prompts, CrossoverPoint,
    OperatorError, OperatorKind, RewireDirection, RewriteOutcome,
};
use crate::graph::{NodeId, NodeKind, PromptTable, WorkflowGraph};

/// Sites tried per call before giving up.
pub const DEFAULT_SITE_BUDGET: usize = 64;

/// Largest region subgraph mutation replaces.
const MAX_REGION: usize = 3;
/// Largest donor region taken from the second parent.
const MAX_DONOR_REGION: usize = 2;

/// Selection weights for the six operators. Omitted fields deserialize as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorWeights {
    #[serde(default)]
    pub substitution: f64,
    #[serde(default)]
    pub addition: f64,
    #[serde(default)]
    pub rewiring: f64,
    #[serde(default)]
    pub deletion: f64,
    #[serde(default)]
    pub subgraph_mutation: f64,
    #[serde(default)]
    pub crossover: f64,
}

impl Default for OperatorWeights {
    fn default() -> Self {
        OperatorWeights::with_crossover_rate(0.10)
    }
}

impl OperatorWeights {
    /// `rate` for crossover, the rest split evenly.
    pub fn with_crossover_rate(rate: f64) -> Self {
        let each = (1.0 - rate) / 5.0;
        OperatorWeights { substitution: each, addition: each, rewiring: each, deletion: each, subgraph_mutation: each, crossover: rate }
    }

    /// All weight on one operator.
    pub fn only(kind: OperatorKind) -> Self {
        let mut w = OperatorWeights { substitution: 0.0, addition: 0.0, rewiring: 0.0, deletion: 0.0, subgraph_mutation: 0.0, crossover: 0.0 };
        *w.get_mut(kind) = 1.0;
        w
    }

    pub fn get(&self, kind: OperatorKind) -> f64 {
        match kind {
            OperatorKind::Substitution => self.substitution,
            OperatorKind::Addition => self.addition,
            OperatorKind::Rewiring => self.rewiring,
            OperatorKind::Deletion => self.deletion,
            OperatorKind::SubgraphMutation => self.subgraph_mutation,
            OperatorKind::Crossover => self.crossover,
        }
    }

    fn get_mut(&mut self, kind: OperatorKind) -> &mut f64 {
        match kind {
            OperatorKind::Substitution => &mut self.substitution,
            OperatorKind::Addition => &mut self.addition,
            OperatorKind::Rewiring => &mut self.rewiring,
            OperatorKind::Deletion => &mut self.deletion,
            OperatorKind::SubgraphMutation => &mut self.subgraph_mutation,
            OperatorKind::Crossover => &mut self.crossover,
        }
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        for k in OperatorKind::ALL {
            let w = self.get(k);
            if !w.is_finite() || w < 0.0 {
                return Err(OperatorError::InvalidWeights(format!("weight for {k} is {w}")));
            }
        }
        if OperatorKind::ALL.iter().map(|k| self.get(*k)).sum::<f64>() <= 0.0 {
            return Err(OperatorError::InvalidWeights("all weights are zero".into()));
        }
        Ok(())
    }

    /// Weights normalized to sum to one.
    pub fn probabilities(&self) -> [(OperatorKind, f64); 6] {
        let total: f64 = OperatorKind::ALL.iter().map(|k| self.get(*k)).sum();
        OperatorKind::ALL.map(|k| (k, self.get(k) / total))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<OperatorKind, OperatorError> {
        self.validate()?;
        let dist = WeightedIndex::new(OperatorKind::ALL.map(|k| self.get(k))).map_err(|e| OperatorError::InvalidWeights(e.to_string()))?;
        Ok(OperatorKind::ALL[dist.sample(rng)])
    }
}

/// One concrete place an operator could be applied.
#[derive(Debug, Clone, PartialEq)]
pub enum Site {
    Substitute { node: NodeId, key: String, choice: AttrChoice },
    Add { edge: (NodeId, NodeId), template: NodeTemplate },
    Rewire { edge: (NodeId, NodeId), third: NodeId, direction: RewireDirection },
    Delete { node: NodeId },
    Mutate { region: BTreeSet<NodeId>, motif: usize },
    Cross { kind: NodeKind },
}

/// Built-in motifs for the graph's domain plus small regions of the partner.
pub fn motif_library(g: &WorkflowGraph, partner: Option<&WorkflowGraph>) -> Vec<Motif> {
    let mut out = Motif::builtin(g.registry(), g.domain());
    if let Some(p) = partner {
        out.extend(connected_regions(p, MAX_DONOR_REGION).iter().filter_map(|r| Motif::from_region(p, r).ok()));
    }
    out
}

/// Every candidate site for `kind`, in a deterministic order.
pub fn enumerate_sites(kind: OperatorKind, g: &WorkflowGraph, partner: Option<&WorkflowGraph>, motifs: &[Motif]) -> Vec<Site> {
    let reg = g.registry();
    let mut out = Vec::new();
    match kind {
        OperatorKind::Substitution => {
            for n in g.executable_nodes() {
                let Some(schema) = reg.schema(n.kind.as_str()) else { continue };
                for attr in &schema.attribute {
                    for choice in attribute_values(reg, n.kind.as_str(), &attr.key, g.domain(), g.prompts()) {
                        if n.attributes.get(&attr.key) != Some(&choice.value) {
                            out.push(Site::Substitute { node: n.id.clone(), key: attr.key.clone(), choice });
                        }
                    }
                }
            }
        }
        OperatorKind::Addition => {
            let templates = insertable(reg, g.domain());
            for e in g.edges() {
                for t in &templates {
                    out.push(Site::Add { edge: (e.source.clone(), e.target.clone()), template: t.clone() });
                }
            }
        }
        OperatorKind::Rewiring => {
            for e in g.edges() {
                for third in g.node_ids().filter(|v| **v != e.source && **v != e.target) {
                    for direction in [RewireDirection::ToThird, RewireDirection::FromThird] {
                        out.push(Site::Rewire { edge: (e.source.clone(), e.target.clone()), third: third.clone(), direction });
                    }
                }
            }
        }
        OperatorKind::Deletion => {
            for n in g.executable_nodes() {
                if g.in_degree(n.id.as_str()) == 1 && g.out_degree(n.id.as_str()) == 1 {
                    out.push(Site::Delete { node: n.id.clone() });
                }
            }
        }
        OperatorKind::SubgraphMutation => {
            for region in connected_regions(g, MAX_REGION) {
                for motif in 0..motifs.len() {
                    out.push(Site::Mutate { region: region.clone(), motif });
                }
            }
        }
        OperatorKind::Crossover => {
            if let Some(p) = partner {
                out.extend(super::crossover_points(g, p).into_iter().map(|kind| Site::Cross { kind }));
            }
        }
    }
    out
}

/// Applies one site. Sites that do not fit report a precondition error.
pub fn apply_site(site: &Site, g: &WorkflowGraph, partner: Option<&WorkflowGraph>, motifs: &[Motif]) -> Result<RewriteOutcome, OperatorError> {
    let reg = g.registry();
    match site {
        Site::Substitute { node, key, choice } => {
            let current = g.node(node.as_str()).ok_or_else(|| OperatorError::Precondition(format!("no node {node}")))?;
            let mut attrs = current.attributes.clone();
            attrs.insert(key.clone(), choice.value.clone());
            let mut extra = PromptTable::new();
            if g.prompts().resolve(&choice.value).is_none() {
                choice.install(&mut extra);
            }
            substitute_node_with_prompts(g, node.as_str(), attrs, &extra)
        }
        Site::Add { edge, template } => {
            let id = fresh_id(id_prefix(&template.kind), &|c| g.contains(c));
            let mut extra = g.prompts().clone();
            let node = template.instantiate(id, reg, &mut extra);
            let added: PromptTable = extra.iter().filter(|(n, _)| !g.prompts().contains(n)).map(|(n, t)| (n.to_string(), t.to_string())).collect();
            add_node_with_prompts(g, (edge.0.as_str(), edge.1.as_str()), node, &added)
        }
        Site::Rewire { edge, third, direction } => rewire_edge(g, (edge.0.as_str(), edge.1.as_str()), third.as_str(), *direction),
        Site::Delete { node } => delete_node(g, node.as_str()),
        Site::Mutate { region, motif } => {
            let m = &motifs[*motif];
            let fragment = m.instantiate(g, region).ok_or_else(|| OperatorError::Precondition(format!("motif {} does not fit the region", m.name)))?;
            mutate_subgraph(g, region, &fragment)
        }
        Site::Cross { kind } => {
            let p = partner.ok_or(OperatorError::NoCrossoverPoint)?;
            crossover(g, p, &CrossoverPoint::Kind(kind.to_string()))
        }
    }
}

/// Draws an operator by weight and applies it at up to `budget` randomly
/// ordered sites, returning the first product that passes validation.
pub fn apply_random<R: Rng + ?Sized>(
    g: &WorkflowGraph,
    partner: Option<&WorkflowGraph>,
    weights: &OperatorWeights,
    rng: &mut R,
    budget: usize,
) -> Result<RewriteOutcome, OperatorError> {
    let kind = weights.sample(rng)?;
    apply_kind(kind, g, partner, rng, budget)
}

/// [`apply_random`] with the operator fixed.
pub fn apply_kind<R: Rng + ?Sized>(
    kind: OperatorKind,
    g: &WorkflowGraph,
    partner: Option<&WorkflowGraph>,
    rng: &mut R,
    budget: usize,
) -> Result<RewriteOutcome, OperatorError> {
    let motifs = if kind == OperatorKind::SubgraphMutation { motif_library(g, partner) } else { Vec::new() };
    let mut sites = enumerate_sites(kind, g, partner, &motifs);
    if kind != OperatorKind::Crossover {
        sites.shuffle(rng);
    }
    let mut tried = 0;
    for site in sites.iter().take(budget) {
        tried += 1;
        if let Ok(out) = apply_site(site, g, partner, &motifs) {
            return Ok(out);
        }
    }
    Err(OperatorError::NoApplicableRewrite { kind, tried })
}
