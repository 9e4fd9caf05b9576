use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::diagnostic::Diagnostic;
use crate::graph::WorkflowGraph;
use crate::mermaid::serialize_workflow;
use crate::ops::{apply_kind, OperatorError, OperatorKind, OperatorWeights, DEFAULT_SITE_BUDGET};

/// The previous failed attempt, fed back into the next proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevAttempt {
    pub text: String,
    pub errors: Vec<Diagnostic>,
}

/// Candidate workflow text with its modification record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub text: String,
    pub modification: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorKind>,
}

/// Produces a candidate workflow from one or two parents.
pub trait Proposer: Send + Sync {
    fn propose(&self, parents: &[&WorkflowGraph], prev: Option<&PrevAttempt>, rng: &mut ChaCha8Rng) -> Result<Proposal, EvolveError>;

    /// Whether concurrent calls are safe.
    fn reentrant(&self) -> bool {
        true
    }
}

/// Applies a randomly drawn operator. Unary operators use the first parent;
/// binary ones also use the second when there is one. Its output always
/// validates because every operator product passes the closure guard.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorProposer {
    pub weights: OperatorWeights,
    pub site_budget: usize,
}

impl Default for OperatorProposer {
    fn default() -> Self {
        OperatorProposer { weights: OperatorWeights::default(), site_budget: DEFAULT_SITE_BUDGET }
    }
}

impl OperatorProposer {
    pub fn new(weights: OperatorWeights, site_budget: usize) -> Self {
        OperatorProposer { weights, site_budget }
    }

    /// Drawn kind first, then the others by descending weight, then
    /// substitution as the last resort.
    fn order(&self, first: OperatorKind) -> Vec<OperatorKind> {
        let mut rest: Vec<OperatorKind> = OperatorKind::ALL.into_iter().filter(|k| *k != first && self.weights.get(*k) > 0.0).collect();
        rest.sort_by(|a, b| self.weights.get(*b).total_cmp(&self.weights.get(*a)).then(a.cmp(b)));
        let mut out = vec![first];
        out.extend(rest);
        if !out.contains(&OperatorKind::Substitution) {
            out.push(OperatorKind::Substitution);
        }
        out
    }
}

impl Proposer for OperatorProposer {
    fn propose(&self, parents: &[&WorkflowGraph], _prev: Option<&PrevAttempt>, rng: &mut ChaCha8Rng) -> Result<Proposal, EvolveError> {
        let primary = *parents.first().ok_or_else(|| EvolveError::Proposer("no parent given".into()))?;
        let partner = parents.get(1).copied();
        let first = self.weights.sample(rng).map_err(|e| EvolveError::Proposer(e.to_string()))?;
        let mut last: Option<OperatorError> = None;
        for kind in self.order(first) {
            match apply_kind(kind, primary, partner, rng, self.site_budget) {
                Ok(out) => {
                    let pick = if out.graphs.len() > 1 { rng.gen_range(0..out.graphs.len()) } else { 0 };
                    return Ok(Proposal {
                        text: serialize_workflow(&out.graphs[pick]),
                        modification: out.description,
                        operator: Some(out.applied),
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(EvolveError::Proposer(last.map_or_else(|| "no operator applies".to_string(), |e| e.to_string())))
    }
}
