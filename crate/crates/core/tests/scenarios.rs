mod common;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wfgraph_core::corpus;
use wfgraph_core::evolve::{p_mixed, run_evolution, sample_parent, sample_parent_pair, ConstantEvaluator, EvolutionConfig, OperatorProposer, ParentSelection, StructuralJudge};
use wfgraph_core::mermaid::graph_from_str;
use wfgraph_core::ops::{extract_fragment, mutate_subgraph, rewire_edge, RewireDirection};
use wfgraph_core::{validate_graph, NodeId, WorkflowGraph};

fn id(s: &str) -> NodeId {
    NodeId::new(s).unwrap()
}

fn ids(names: &[&str]) -> BTreeSet<NodeId> {
    names.iter().map(|n| id(n)).collect()
}

/// Forward reachability by repeated relaxation over the edge list.
fn reach(g: &WorkflowGraph, start: &str, forward: bool) -> BTreeSet<String> {
    let mut seen: BTreeSet<String> = [start.to_string()].into();
    loop {
        let before = seen.len();
        for e in g.edges() {
            let (from, to) = if forward { (e.source.as_str(), e.target.as_str()) } else { (e.target.as_str(), e.source.as_str()) };
            if seen.contains(from) {
                seen.insert(to.to_string());
            }
        }
        if seen.len() == before {
            return seen;
        }
    }
}

#[test]
fn gsm8k_every_node_lies_on_an_entry_exit_path() {
    let g = graph_from_str(corpus::GSM8K).unwrap();
    let all: BTreeSet<String> = g.nodes().map(|n| n.id.as_str().to_string()).collect();
    assert_eq!(all.len(), 10);
    assert_eq!(reach(&g, "PROBLEM", true), all);
    assert_eq!(reach(&g, "RETURN", false), all);
    assert!(validate_graph(&g).passed());
}

const TWO_ENSEMBLES: &str = "flowchart TD
PROBLEM([Problem])
A[\"Custom<br/>(role: a)\"]
B[\"Custom<br/>(role: b)\"]
P5[\"Programmer<br/>(analysis: 'alt')\"]
E1[\"ScEnsemble<br/>\"]
E2[\"ScEnsemble<br/>\"]
RETURN([Return])
class PROBLEM Interface
class A CustomOp
class B CustomOp
class P5 ProgrammerOp
class E1 ScEnsembleOp
class E2 ScEnsembleOp
class RETURN Interface
PROBLEM --> |input|A
PROBLEM --> |input|B
PROBLEM --> |problem|P5
A --> E1
B --> E1
P5 --> E1
E1 --> E2
A --> E2
E2 --> RETURN
<prompt>
A=\"Solve it directly.\"
B=\"Solve it another way.\"
</prompt>
";

#[test]
fn moving_one_ensemble_input_elsewhere_keeps_both_valid() {
    let g = graph_from_str(TWO_ENSEMBLES).unwrap();
    assert!(validate_graph(&g).passed());
    assert_eq!(g.in_degree("E1"), 3);
    let out = rewire_edge(&g, ("P5", "E1"), "E2", RewireDirection::ToThird).unwrap();
    let h = out.graph();
    assert!(validate_graph(h).passed());
    assert_eq!(h.in_degree("E1"), 2);
    assert_eq!(h.in_degree("E2"), 3);
    let before: BTreeSet<(String, String)> = g.edges().iter().map(|e| (e.source.as_str().into(), e.target.as_str().into())).collect();
    let after: BTreeSet<(String, String)> = h.edges().iter().map(|e| (e.source.as_str().into(), e.target.as_str().into())).collect();
    assert_eq!(before.difference(&after).cloned().collect::<Vec<_>>(), vec![("P5".into(), "E1".into())]);
    assert_eq!(after.difference(&before).cloned().collect::<Vec<_>>(), vec![("P5".into(), "E2".into())]);
}

#[test]
fn gsm8k_ensemble_inputs_have_nowhere_else_to_go() {
    let g = graph_from_str(corpus::GSM8K).unwrap();
    for p in ["P1", "P2", "P3", "P4", "P5"] {
        for third in ["C", "P1", "P2", "P3", "P4", "P5", "P6", "RETURN"] {
            if third != p {
                assert!(rewire_edge(&g, (p, "ENSEMBLE"), third, RewireDirection::ToThird).is_err(), "{p} -> {third}");
            }
        }
    }
}

const CHAIN_DONOR: &str = "flowchart TD
PROBLEM([Problem])
X1[\"Custom<br/>(role: a)\"]
X2[\"Custom<br/>(role: b)\"]
RETURN([Return])
class PROBLEM Interface
class X1 CustomOp
class X2 CustomOp
class RETURN Interface
PROBLEM --> |input|X1
X1 --> X2
X2 --> RETURN
<prompt>
A=\"Draft a solution to the problem.\"
B=\"Improve the draft solution.\"
</prompt>
";

#[test]
fn single_solver_becomes_a_two_step_chain() {
    let g = graph_from_str(corpus::GSM8K).unwrap();
    let donor = graph_from_str(CHAIN_DONOR).unwrap();
    let fragment = extract_fragment(&donor, &ids(&["X1", "X2"])).unwrap();
    let out = mutate_subgraph(&g, &ids(&["C"]), &fragment).unwrap();
    let h = out.graph();
    assert!(validate_graph(h).passed());
    assert_eq!(h.node_count(), 11);
    assert!(!h.contains("C"));
    // Two CustomOps now sit in series between the entry and the ensemble.
    let custom: Vec<&str> = h.nodes().filter(|n| n.kind.as_str() == "CustomOp").map(|n| n.id.as_str()).collect();
    assert_eq!(custom.len(), 2);
    let series = h.edges().iter().any(|e| custom.contains(&e.source.as_str()) && custom.contains(&e.target.as_str()));
    assert!(series);
    assert_eq!(h.in_degree("ENSEMBLE"), 6);
}

/// Independent evaluation of the mixed selection law.
fn oracle(scores: &[f64], lambda: f64, alpha: f64) -> Vec<f64> {
    let t = scores.len() as f64;
    let w: Vec<f64> = scores.iter().map(|s| (alpha * s).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| lambda / t + (1.0 - lambda) * x / z).collect()
}

fn within_three_sigma(counts: &[usize], probs: &[f64], n: usize) {
    for (i, (&c, &p)) in counts.iter().zip(probs).enumerate() {
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let z = (c as f64 - n as f64 * p) / sigma.max(1e-12);
        assert!(z.abs() < 3.0, "bucket {i}: {c} draws vs expected {:.1} (z {z:.2})", n as f64 * p);
    }
}

#[test]
fn half_mixed_selection_matches_its_law() {
    let scores = [0.1, 0.5, 0.9, 0.2];
    let expected = oracle(&scores, 0.5, 2.0);
    let got = p_mixed(&scores, 0.5, 2.0).unwrap();
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = vec![0; scores.len()];
    for _ in 0..n {
        counts[sample_parent(&scores, 0.5, 2.0, &mut rng).unwrap()] += 1;
    }
    within_three_sigma(&counts, &expected, n);
}

#[test]
fn greedy_selection_pairs_the_top_two() {
    let scores = [0.2, 0.9, 0.5, 0.85, 0.1];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut top = 0;
    for _ in 0..n {
        match sample_parent_pair(&scores, 0.0, 200.0, &mut rng).unwrap() {
            ParentSelection::Pair(a, b) if BTreeSet::from([a, b]) == BTreeSet::from([1, 3]) => top += 1,
            ParentSelection::Pair(..) => {}
            ParentSelection::Single(_) => panic!("five entries give a pair"),
        }
    }
    assert!(top as f64 >= 0.999 * n as f64, "{top} of {n}");
}

#[test]
fn constant_scores_make_selection_uniform() {
    let seeds = vec![graph_from_str(corpus::GSM8K).unwrap(), graph_from_str(corpus::MATH).unwrap()];
    let cfg = EvolutionConfig { max_rounds: 3, seed: 5, ..EvolutionConfig::default() };
    let evo = run_evolution(&seeds, &cfg, &OperatorProposer::default(), &StructuralJudge::default(), &ConstantEvaluator(0.5)).unwrap();
    let scores = evo.history.scores();
    assert!(scores.len() >= 2);
    assert!(scores.iter().all(|s| *s == 0.5));
    let t = scores.len();
    for p in p_mixed(&scores, cfg.lambda, cfg.alpha).unwrap() {
        assert!((p - 1.0 / t as f64).abs() < 1e-12);
    }
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = vec![0; t];
    for _ in 0..n {
        counts[sample_parent(&scores, cfg.lambda, cfg.alpha, &mut rng).unwrap()] += 1;
    }
    within_three_sigma(&counts, &vec![1.0 / t as f64; t], n);
}

#[test]
fn kinds_in_the_case_studies() {
    let census: BTreeMap<&str, usize> = corpus::CASE_STUDIES
        .iter()
        .map(|(name, text)| (*name, graph_from_str(text).unwrap().node_count()))
        .collect();
    assert_eq!(census.values().sum::<usize>(), 38);
    assert_eq!(common::seeds().len(), 5);
}
