use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::history::History;
use super::EvolveError;
use crate::graph::ports::bind_ports;
use crate::graph::{Edge, WorkflowGraph};
use crate::validate::min_fan_in;

/// Five rubric dimensions, each an integer in [1, 10].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RubricScores {
    pub coherence: u8,
    pub innovation: u8,
    pub complexity: u8,
    pub prompt_quality: u8,
    pub rationale: u8,
}

impl RubricScores {
    pub fn dimensions(&self) -> [u8; 5] {
        [self.coherence, self.innovation, self.complexity, self.prompt_quality, self.rationale]
    }

    /// Sum of the five dimensions, in [5, 50] for valid scores.
    pub fn total(&self) -> u32 {
        self.dimensions().iter().map(|d| u32::from(*d)).sum()
    }

    pub fn check(&self) -> Result<(), EvolveError> {
        match self.dimensions().iter().find(|d| !(1..=10).contains(*d)) {
            Some(d) => Err(EvolveError::Judge(format!("rubric score {d} outside [1, 10]"))),
            None => Ok(()),
        }
    }
}

/// Scores one candidate against its parents and the population so far.
pub trait Judge: Send + Sync {
    fn score(&self, candidate: &WorkflowGraph, modification: &str, parents: &[&WorkflowGraph], history: &History) -> Result<RubricScores, EvolveError>;

    fn reentrant(&self) -> bool {
        true
    }
}

/// Index of the highest total (lowest index on ties) and every score vector.
pub fn judge_select(
    candidates: &[(&WorkflowGraph, &str)],
    parents: &[&WorkflowGraph],
    history: &History,
    judge: &dyn Judge,
) -> Result<(usize, Vec<RubricScores>), EvolveError> {
    if candidates.is_empty() {
        return Err(EvolveError::Judge("no candidates to judge".into()));
    }
    let mut table = Vec::with_capacity(candidates.len());
    for (g, m) in candidates {
        let s = judge.score(g, m, parents, history)?;
        s.check()?;
        table.push(s);
    }
    let mut best = 0;
    for (i, s) in table.iter().enumerate() {
        if s.total() > table[best].total() {
            best = i;
        }
    }
    Ok((best, table))
}

/// Deterministic rubric computed from graph structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuralJudge {
    /// Executable-node counts that earn full complexity marks.
    pub band: (usize, usize),
    /// Distance from the band at which the complexity score reaches its floor.
    pub width: usize,
    /// Word-count bounds for a well-formed prompt.
    pub prompt_words: (usize, usize),
}

impl Default for StructuralJudge {
    fn default() -> Self {
        StructuralJudge { band: (5, 9), width: 5, prompt_words: (5, 100) }
    }
}

const OPERATOR_VERBS: [&str; 10] = ["substitut", "insert", "add", "rewir", "remov", "delet", "replac", "swap", "crossover", "mutat"];

/// Maps a value in [0, 1] onto the integer scale 1..=10.
pub fn to_scale(v: f64) -> u8 {
    1 + (9.0 * v.clamp(0.0, 1.0)).round() as u8
}

impl StructuralJudge {
    /// Satisfied-port fraction averaged with the fan-in margin of aggregators.
    pub fn coherence(&self, g: &WorkflowGraph) -> f64 {
        let ratio = bind_ports(g).ratio();
        let margins: Vec<f64> = g
            .nodes()
            .filter_map(|n| {
                let need = min_fan_in(g, n.kind.as_str())?;
                let have = g.in_degree(n.id.as_str());
                Some((have.saturating_sub(need) as f64 / 2.0).min(1.0))
            })
            .collect();
        let margin = if margins.is_empty() { 1.0 } else { margins.iter().sum::<f64>() / margins.len() as f64 };
        0.5 * ratio + 0.5 * margin
    }

    /// Normalized symmetric difference to the closest parent, tripled and capped.
    pub fn innovation(&self, g: &WorkflowGraph, parents: &[&WorkflowGraph]) -> f64 {
        let d = parents.iter().map(|p| distance(g, p)).reduce(f64::min).unwrap_or(1.0);
        (3.0 * d).min(1.0)
    }

    pub fn complexity(&self, g: &WorkflowGraph) -> f64 {
        let n = g.executable_nodes().count();
        let (lo, hi) = self.band;
        let off = if n < lo { lo - n } else { n.saturating_sub(hi) };
        (1.0 - off as f64 / self.width.max(1) as f64).max(0.0)
    }

    /// Resolved-reference coverage, discounted when prompt lengths fall
    /// outside the word bounds.
    pub fn prompt_quality(&self, g: &WorkflowGraph) -> f64 {
        let (mut refs, mut resolved, mut sized) = (0usize, 0usize, 0usize);
        for n in g.nodes() {
            let Some(schema) = g.registry().schema(n.kind.as_str()) else { continue };
            for key in schema.prompt_keys() {
                let Some(value) = n.attributes.get(key) else { continue };
                refs += 1;
                if let Some((_, text)) = g.prompts().resolve(value) {
                    resolved += 1;
                    let words = text.split_whitespace().count();
                    if (self.prompt_words.0..=self.prompt_words.1).contains(&words) {
                        sized += 1;
                    }
                }
            }
        }
        if refs == 0 {
            return 1.0;
        }
        let coverage = resolved as f64 / refs as f64;
        let fit = if resolved == 0 { 0.0 } else { sized as f64 / resolved as f64 };
        coverage * (0.5 + 0.5 * fit)
    }

    pub fn rationale(&self, g: &WorkflowGraph, modification: &str) -> f64 {
        let text = modification.trim();
        if text.is_empty() {
            return 0.0;
        }
        let lower = text.to_lowercase();
        let verb = OPERATOR_VERBS.iter().any(|v| lower.contains(v));
        let words: BTreeSet<&str> = text.split(|c: char| !(c.is_alphanumeric() || c == '_')).collect();
        let names_node = g.node_ids().any(|id| words.contains(id.as_str()));
        0.3 + if verb { 0.3 } else { 0.0 } + if names_node { 0.4 } else { 0.0 }
    }
}

fn distance(a: &WorkflowGraph, b: &WorkflowGraph) -> f64 {
    let nodes = |g: &WorkflowGraph| -> BTreeSet<String> {
        g.nodes().map(|n| format!("{}:{}:{:?}", n.id, n.kind, n.attributes)).collect()
    };
    let edges = |g: &WorkflowGraph| -> BTreeSet<Edge> { g.edges().iter().cloned().collect() };
    let (na, nb, ea, eb) = (nodes(a), nodes(b), edges(a), edges(b));
    let diff = na.symmetric_difference(&nb).count() + ea.symmetric_difference(&eb).count();
    let union = na.union(&nb).count() + ea.union(&eb).count();
    if union == 0 {
        0.0
    } else {
        diff as f64 / union as f64
    }
}

impl Judge for StructuralJudge {
    fn score(&self, g: &WorkflowGraph, modification: &str, parents: &[&WorkflowGraph], _history: &History) -> Result<RubricScores, EvolveError> {
        Ok(RubricScores {
            coherence: to_scale(self.coherence(g)),
            innovation: to_scale(self.innovation(g, parents)),
            complexity: to_scale(self.complexity(g)),
            prompt_quality: to_scale(self.prompt_quality(g)),
            rationale: to_scale(self.rationale(g, modification)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mermaid::graph_from_str;
    use crate::ops::testing::*;

    const FULL: &str = "flowchart TD\nPROBLEM([Problem])\nA[\"Custom<br/>(role: a)\"]\nB[\"Custom<br/>(role: b)\"]\nC[\"Custom<br/>(role: c)\"]\nE[\"ScEnsemble<br/>\"]\nRETURN([Return])\nclass PROBLEM Interface\nclass A CustomOp\nclass B CustomOp\nclass C CustomOp\nclass E ScEnsembleOp\nclass RETURN Interface\nPROBLEM --> |input|A\nPROBLEM --> |input|B\nPROBLEM --> |input|C\nA --> E\nB --> E\nC --> E\nE --> RETURN\n<prompt>\nA=\"Solve the problem carefully and state the answer.\"\nB=\"Solve the problem carefully and state the answer.\"\nC=\"Solve the problem carefully and state the answer.\"\n</prompt>\n";

    fn pair() -> (WorkflowGraph, WorkflowGraph) {
        let full = graph_from_str(FULL).unwrap();
        let thin_text = FULL.replace("C --> E\n", "").replace("PROBLEM --> |input|C\n", "").replace("C[\"Custom<br/>(role: c)\"]\n", "").replace("class C CustomOp\n", "").replace("C=\"Solve the problem carefully and state the answer.\"\n", "");
        let thin = graph_from_str(&thin_text).unwrap();
        assert!(crate::validate::validate_graph(&full).passed() && crate::validate::validate_graph(&thin).passed());
        (full, thin)
    }

    #[test]
    fn fuller_ensemble_is_more_coherent() {
        let (full, thin) = pair();
        let j = StructuralJudge::default();
        let h = History::new();
        let a = j.score(&full, "", &[], &h).unwrap();
        let b = j.score(&thin, "", &[], &h).unwrap();
        // Port ratio 1 in both; fan-in margins 0.5 and 0.
        assert_eq!((a.coherence, b.coherence), (to_scale(0.75), to_scale(0.5)));
        assert_eq!((a.coherence, b.coherence), (8, 6));
    }

    #[test]
    fn scores_stay_on_scale() {
        let j = StructuralJudge::default();
        let h = History::new();
        for g in [gsm8k(), math(), humaneval(), mbpp()] {
            let id = g.executable_nodes().next().unwrap().id.clone();
            let s = j.score(&g, &format!("Substitution on {id}"), &[&g], &h).unwrap();
            s.check().unwrap();
            assert!((5..=50).contains(&s.total()));
            assert_eq!(s.innovation, 1, "identical to its parent");
            assert_eq!(s.rationale, 10);
        }
    }

    #[test]
    fn selection_ties_go_to_the_first() {
        let (full, thin) = pair();
        let j = StructuralJudge::default();
        let h = History::new();
        let (i, table) = judge_select(&[(&full, "x"), (&full, "x")], &[], &h, &j).unwrap();
        assert_eq!((i, table.len()), (0, 2));
        let (i, _) = judge_select(&[(&thin, "x")], &[], &h, &j).unwrap();
        assert_eq!(i, 0);
        assert!(judge_select(&[], &[], &h, &j).is_err());
    }

    #[test]
    fn complexity_band() {
        let j = StructuralJudge::default();
        let (full, _) = pair();
        assert!((j.complexity(&full) - 0.8).abs() < 1e-12);
        assert!((j.complexity(&gsm8k()) - 1.0).abs() < 1e-12);
    }
}
