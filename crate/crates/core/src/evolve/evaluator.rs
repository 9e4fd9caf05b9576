use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::graph::WorkflowGraph;
use crate::validate::min_fan_in;

/// Maps a workflow to a validation score in [0, 1].
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, workflow: &WorkflowGraph) -> Result<f64, EvolveError>;

    fn reentrant(&self) -> bool {
        true
    }
}

/// Always returns the same score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEvaluator(pub f64);

impl Evaluator for ConstantEvaluator {
    fn evaluate(&self, _workflow: &WorkflowGraph) -> Result<f64, EvolveError> {
        Ok(self.0)
    }
}

/// Structural features the synthetic task rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetProfile {
    pub has_ensemble: bool,
    /// Largest in-degree over aggregator nodes, 0 without one.
    pub branch_count: usize,
    /// The exit is fed by a plain executable node that itself consumes
    /// another executable node's output.
    pub has_refine_tail: bool,
    /// Longest path from an entry to the exit, in edges.
    pub depth: usize,
}

impl TargetProfile {
    pub fn of(g: &WorkflowGraph) -> TargetProfile {
        let aggregators: Vec<usize> = g.nodes().filter(|n| min_fan_in(g, n.kind.as_str()).is_some()).map(|n| g.in_degree(n.id.as_str())).collect();
        let executable = |id: &str| {
            g.node(id).and_then(|n| g.registry().schema(n.kind.as_str())).is_some_and(|s| s.executable)
        };
        let exit = g.exit();
        let has_refine_tail = exit.is_some_and(|x| {
            g.incoming_edges(x.as_str()).any(|e| {
                let p = e.source.as_str();
                let plain = g.node(p).is_some_and(|n| min_fan_in(g, n.kind.as_str()).is_none());
                executable(p) && plain && g.incoming_edges(p).any(|f| executable(f.source.as_str()))
            })
        });
        let depth = exit.and_then(|x| g.depths().get(x).copied()).unwrap_or(0);
        TargetProfile {
            has_ensemble: !aggregators.is_empty(),
            branch_count: aggregators.into_iter().max().unwrap_or(0),
            has_refine_tail,
            depth,
        }
    }
}

/// Scores a workflow by how closely its structural profile matches a hidden
/// target. Pure and deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskEvaluator {
    pub target: TargetProfile,
}

fn closeness(a: usize, b: usize) -> f64 {
    1.0 - a.abs_diff(b) as f64 / a.max(b).max(1) as f64
}

impl SyntheticTaskEvaluator {
    pub fn new(target: TargetProfile) -> Self {
        SyntheticTaskEvaluator { target }
    }

    /// Target resembling the published GSM8K workflow: an aggregator over six
    /// branches followed by a refinement step.
    pub fn gsm8k_like() -> Self {
        SyntheticTaskEvaluator::new(TargetProfile { has_ensemble: true, branch_count: 6, has_refine_tail: true, depth: 4 })
    }

    pub fn similarity(&self, p: &TargetProfile) -> f64 {
        let t = &self.target;
        0.3 * f64::from(u8::from(p.has_ensemble == t.has_ensemble))
            + 0.2 * closeness(p.branch_count, t.branch_count)
            + 0.2 * f64::from(u8::from(p.has_refine_tail == t.has_refine_tail))
            + 0.3 * closeness(p.depth, t.depth)
    }
}

impl Evaluator for SyntheticTaskEvaluator {
    fn evaluate(&self, workflow: &WorkflowGraph) -> Result<f64, EvolveError> {
        Ok(self.similarity(&TargetProfile::of(workflow)).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::mermaid::graph_from_str;
    use crate::ops::testing::*;

    #[test]
    fn profiles_of_the_corpus() {
        assert_eq!(TargetProfile::of(&gsm8k()), TargetProfile { has_ensemble: true, branch_count: 6, has_refine_tail: true, depth: 4 });
        let base = graph_from_str(corpus::BASELINE_MATH).unwrap();
        assert_eq!(TargetProfile::of(&base), TargetProfile { has_ensemble: false, branch_count: 0, has_refine_tail: false, depth: 2 });
    }

    #[test]
    fn scores() {
        let e = SyntheticTaskEvaluator::gsm8k_like();
        let base = graph_from_str(corpus::BASELINE_MATH).unwrap();
        // 0.3·0 + 0.2·0 + 0.2·0 + 0.3·(1 - 2/4)
        assert!((e.evaluate(&base).unwrap() - 0.15).abs() < 1e-12);
        assert!((e.evaluate(&gsm8k()).unwrap() - 1.0).abs() < 1e-12);
        let exact = SyntheticTaskEvaluator::new(TargetProfile::of(&math()));
        assert_eq!(exact.evaluate(&math()).unwrap(), 1.0);
        assert_eq!(ConstantEvaluator(0.5).evaluate(&base).unwrap(), 0.5);
    }
}
