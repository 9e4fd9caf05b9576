#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wfgraph_core::corpus;
use wfgraph_core::evolve::EvolutionConfig;
use wfgraph_core::mermaid::graph_from_str;
use wfgraph_core::ops::{apply_random, OperatorWeights, DEFAULT_SITE_BUDGET};
use wfgraph_core::WorkflowGraph;

/// The four case-study workflows plus the baseline, parsed.
pub fn seeds() -> Vec<(&'static str, WorkflowGraph)> {
    let mut out: Vec<(&str, WorkflowGraph)> = corpus::CASE_STUDIES.iter().map(|(n, t)| (*n, graph_from_str(t).expect("corpus parses"))).collect();
    out.push(("baseline_math", graph_from_str(corpus::BASELINE_MATH).expect("baseline parses")));
    out
}

/// A valid graph reached from seed `seed_index` by `steps` random rewrites.
pub fn random_fixture(seeds: &[(&str, WorkflowGraph)], seed_index: usize, steps: usize, rng_seed: u64) -> WorkflowGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let weights = OperatorWeights::default();
    let mut g = seeds[seed_index % seeds.len()].1.clone();
    for _ in 0..steps {
        let partner = &seeds[rng.gen_range(0..seeds.len())].1;
        if let Ok(out) = apply_random(&g, Some(partner), &weights, &mut rng, DEFAULT_SITE_BUDGET) {
            g = out.graphs[0].clone();
        }
    }
    g
}

/// Hyperparameters of the shipped demo run.
pub fn demo_config() -> EvolutionConfig {
    let text = include_str!("../../../../configs/demo.toml");
    let mut table: toml::Table = toml::from_str(text).expect("demo config parses");
    table.remove("run");
    toml::Value::Table(table).try_into().expect("demo config maps onto EvolutionConfig")
}
