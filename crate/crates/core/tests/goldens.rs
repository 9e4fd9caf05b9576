//! Frozen outputs. A missing golden file is written on first run; set
//! `WFGRAPH_BLESS=1` to rewrite them after an intended change.

mod common;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wfgraph_core::corpus;
use wfgraph_core::evolve::{generate_candidates, run_evolution, Checker, OperatorProposer, RoundStatus, StructuralJudge, SyntheticTaskEvaluator};
use wfgraph_core::mermaid::{graph_from_str, serialize_workflow};
use wfgraph_core::ops::{apply_random, OperatorWeights, DEFAULT_SITE_BUDGET};
use wfgraph_core::validate_graph;

fn check_golden(name: &str, actual: &Value) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/goldens").join(format!("{name}.json"));
    let rendered = serde_json::to_string_pretty(actual).unwrap() + "\n";
    if !path.exists() || std::env::var_os("WFGRAPH_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &rendered).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(rendered, expected, "golden {name} differs");
}

#[test]
fn seed_42_mutation() {
    let g = graph_from_str(corpus::GSM8K).unwrap();
    let partner = graph_from_str(corpus::MATH).unwrap();
    let weights = OperatorWeights { substitution: 0.18, addition: 0.18, rewiring: 0.18, deletion: 0.18, subgraph_mutation: 0.18, crossover: 0.10 };
    let run = || apply_random(&g, Some(&partner), &weights, &mut ChaCha8Rng::seed_from_u64(42), DEFAULT_SITE_BUDGET).unwrap();
    let out = run();
    assert_eq!(out, run());
    assert!(out.graphs.iter().all(|h| validate_graph(h).passed()));
    let value = json!({
        "operator": out.applied.as_str(),
        "description": out.description,
        "graphs": out.graphs.iter().map(serialize_workflow).collect::<Vec<_>>(),
    });
    check_golden("seed_42_mutation", &value);
}

#[test]
fn seed_7_candidates() {
    let a = graph_from_str(corpus::GSM8K).unwrap();
    let b = graph_from_str(corpus::MATH).unwrap();
    let cfg = common::demo_config();
    let gen = generate_candidates(&[&a, &b], &cfg, &OperatorProposer::default(), &Checker::for_parent(&a), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let value = json!({
        "resampled": gen.resampled,
        "exhausted": gen.exhausted.len(),
        "candidates": gen.candidates.iter().map(|c| json!({"modification": c.modification, "tries": c.tries(), "text": c.text})).collect::<Vec<_>>(),
    });
    check_golden("seed_7_candidates", &value);
}

#[test]
fn demo_trajectory() {
    let cfg = common::demo_config();
    let seeds = vec![graph_from_str(corpus::BASELINE_MATH).unwrap()];
    let evo = run_evolution(&seeds, &cfg, &OperatorProposer::default(), &StructuralJudge::default(), &SyntheticTaskEvaluator::gsm8k_like()).unwrap();
    let rounds: Vec<Value> = evo
        .rounds
        .iter()
        .map(|r| {
            let score = match &r.status {
                RoundStatus::Accepted { score, .. } => json!(score),
                RoundStatus::Skipped { reason } => json!(reason),
            };
            json!({"round": r.round, "parents": r.parents, "operator": r.operator.map(|k| k.as_str()), "score": score, "best": r.best_score})
        })
        .collect();
    check_golden("demo_trajectory", &json!({"rounds": rounds, "history": evo.history.len()}));
}
