//! Acceptance suite: runs the eight criteria and prints one PASS/FAIL line
//! each. Exits nonzero if any criterion fails or exceeds its time budget.

mod common;

use std::cell::Cell;
use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wfgraph_core::codegen::{generate, lower_to_ir, structural_diff, Operand, Templates};
use wfgraph_core::corpus;
use wfgraph_core::dot::to_dot;
use wfgraph_core::evolve::{
    p_mixed, run_evolution, sample_parent, Evolution, EvolutionConfig, OperatorProposer, Proposer, StructuralJudge, SyntheticTaskEvaluator,
};
use wfgraph_core::graph::{Edge, Node, NodeId, NodeKind};
use wfgraph_core::mermaid::{graph_from_str, hard_check, serialize_workflow};
use wfgraph_core::ops::{
    apply_site, crossover, crossover_points, delete_node, enumerate_sites, motif_library, CrossoverPoint, OperatorError, OperatorKind, OperatorWeights, Site,
};
use wfgraph_core::validate::validate_str;
use wfgraph_core::{build_graph, validate_graph, Domain, PromptTable, Registry, Rule, WorkflowGraph};

const LISTING_GSM8K: &str = include_str!("fixtures/listing_gsm8k.py");

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------------------
// 1. Corpus validity

fn corpus_validity() -> Outcome {
    let mut nodes = 0;
    for (name, text) in corpus::CASE_STUDIES {
        let (ok, d) = hard_check(text);
        ensure!(ok, "{name}: hard check failed: {d:?}");
        let v = validate_str(text);
        ensure!(v.q == 1, "{name}: q=0: {:?}", v.diagnostics);
        let g = graph_from_str(text).map_err(|d| format!("{name}: {d:?}"))?;
        let back = graph_from_str(&serialize_workflow(&g)).map_err(|d| format!("{name} reparse: {d:?}"))?;
        ensure!(back == g, "{name}: serialize then parse is not structurally equal");
        let dot = to_dot(&g, &v.diagnostics);
        ensure!(dot.starts_with("digraph") && dot.matches(" -> ").count() == g.edges().len(), "{name}: DOT export incomplete");
        nodes += g.nodes().count();
    }
    Ok(format!("4 workflows, {nodes} nodes"))
}

// ---------------------------------------------------------------------------
// 2. Validator against a naive oracle

const ORACLE_REGISTRY: &str = r#"
[interface]
kind = "Interface"
display = "Problem"
style = ""
entry_hints = ["PROBLEM", "ENTRY_POINT"]
exit_hints = ["RETURN"]
default_payload = "problem"
exit_accepts = ["solution", "problem"]

[[kind]]
name = "CustomOp"
display = "Custom"
style = ""
domain = "any"
output = "solution"
input = [{ label = "input", accepts = ["problem", "solution"], required = true }]
attribute = [{ key = "role", required = true, prompt_ref = true }]
"#;

/// Rules violated by a graph over {Interface, CustomOp} with unlabeled edges,
/// computed from the definitions with adjacency matrices and a Warshall
/// closure. `iface[i]` marks Interface nodes.
fn oracle(iface: &[bool], edges: &[(usize, usize)]) -> BTreeSet<Rule> {
    let n = iface.len();
    let mut adj = vec![vec![false; n]; n];
    let (mut indeg, mut outdeg) = (vec![0usize; n], vec![0usize; n]);
    for &(a, b) in edges {
        adj[a][b] = true;
        outdeg[a] += 1;
        indeg[b] += 1;
    }
    // Strict transitive closure.
    let mut reach = adj.clone();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let entry: Vec<bool> = (0..n).map(|v| iface[v] && indeg[v] == 0).collect();
    let exit: Vec<bool> = (0..n).map(|v| iface[v] && outdeg[v] == 0 && indeg[v] > 0).collect();
    let interior = (0..n).any(|v| iface[v] && indeg[v] > 0 && outdeg[v] > 0);
    let (ne, nx) = (entry.iter().filter(|b| **b).count(), exit.iter().filter(|b| **b).count());

    let mut out = BTreeSet::new();
    if ne != 1 || nx != 1 {
        out.insert(Rule::W1);
    }
    if ne >= 1 && nx >= 1 {
        let on_path = |v: usize| {
            let from_entry = (0..n).any(|e| entry[e] && (e == v || reach[e][v]));
            let to_exit = (0..n).any(|x| exit[x] && (x == v || reach[v][x]));
            from_entry && to_exit
        };
        if !(0..n).all(on_path) {
            out.insert(Rule::W2);
        }
    }
    if interior {
        out.insert(Rule::W3);
    }
    let cyclic = (0..n).any(|v| reach[v][v]);
    let fed = |v: usize| edges.iter().filter(|&&(a, b)| b == v && a != v).count();
    let ports_bad = (0..n).any(|v| (!iface[v] && fed(v) != 1) || (exit[v] && fed(v) > 1));
    if cyclic || ports_bad {
        out.insert(Rule::Struct);
    }
    out
}

fn oracle_graph(reg: &Arc<Registry>, iface: &[bool], edges: &[(usize, usize)]) -> WorkflowGraph {
    let id = |i: usize| NodeId::new(format!("N{i}")).unwrap();
    let nodes = iface
        .iter()
        .enumerate()
        .map(|(i, &is_iface)| {
            if is_iface {
                Node::new(id(i), NodeKind::new("Interface"), "Problem")
            } else {
                Node::new(id(i), NodeKind::new("CustomOp"), "Custom").with_attr("role", "r")
            }
        })
        .collect();
    let edges = edges.iter().map(|&(a, b)| Edge::new(id(a), id(b), None)).collect();
    let mut prompts = PromptTable::new();
    prompts.insert("R", "Answer the question.");
    build_graph(nodes, edges, prompts, Domain::Math, reg.clone()).expect("well-formed")
}

fn subsets(pairs: &[(usize, usize)], max: usize, start: usize, cur: &mut Vec<(usize, usize)>, f: &mut dyn FnMut(&[(usize, usize)])) {
    f(cur);
    if cur.len() == max {
        return;
    }
    for i in start..pairs.len() {
        cur.push(pairs[i]);
        subsets(pairs, max, i + 1, cur, f);
        cur.pop();
    }
}

fn validator_oracle() -> Outcome {
    let reg = Arc::new(Registry::from_toml_str(ORACLE_REGISTRY).map_err(|e| e.to_string())?);
    let mut checked = 0usize;
    let mut valid = 0usize;
    let mut first_bad: Option<String> = None;
    // Node ids carry no meaning to the validator, so kind vectors are taken
    // with all Interface nodes first; every edge set is enumerated for each.
    for n in 0..=5usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
        for k in 0..=n {
            let iface: Vec<bool> = (0..n).map(|i| i < k).collect();
            subsets(&pairs, 6, 0, &mut Vec::new(), &mut |edges| {
                let g = oracle_graph(&reg, &iface, edges);
                let got: BTreeSet<Rule> = validate_graph(&g).failed_rules();
                let want = oracle(&iface, edges);
                checked += 1;
                valid += usize::from(want.is_empty());
                if got != want && first_bad.is_none() {
                    first_bad = Some(format!("n={n} iface={iface:?} edges={edges:?}: validator {got:?}, oracle {want:?}"));
                }
            });
        }
    }
    if let Some(b) = first_bad {
        return Err(b);
    }
    // Arbitrary kind placement on random graphs, as a check on the ordering argument.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20_000 {
        let n = rng.gen_range(1..=5);
        let iface: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let m = rng.gen_range(0..=6);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        while edges.len() < m.min(n * n) {
            let e = (rng.gen_range(0..n), rng.gen_range(0..n));
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
        let g = oracle_graph(&reg, &iface, &edges);
        ensure!(validate_graph(&g).failed_rules() == oracle(&iface, &edges), "permuted kinds disagree: {iface:?} {edges:?}");
    }
    Ok(format!("{checked} graphs agree ({valid} valid), plus 20000 with permuted kinds"))
}

// ---------------------------------------------------------------------------
// 3. Closure under randomized operator application

fn closure() -> Outcome {
    let seeds = common::seeds();
    let weights = OperatorWeights::default();
    let (mut accepted, mut refused) = (0usize, 0usize);
    for (si, (name, seed)) in seeds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + si as u64);
        let mut g = seed.clone();
        for step in 0..1000 {
            let partner = &seeds[rng.gen_range(0..seeds.len())].1;
            let kind = weights.sample(&mut rng).map_err(|e| e.to_string())?;
            let motifs = if kind == OperatorKind::SubgraphMutation { motif_library(&g, Some(partner)) } else { Vec::new() };
            let sites = enumerate_sites(kind, &g, Some(partner), &motifs);
            if sites.is_empty() {
                refused += 1;
                continue;
            }
            let site = &sites[rng.gen_range(0..sites.len())];
            let before = g.clone();
            let text_before = serialize_workflow(&g);
            let partner_before = partner.clone();
            match apply_site(site, &g, Some(partner), &motifs) {
                Ok(out) => {
                    for child in &out.graphs {
                        let v = validate_graph(child);
                        ensure!(v.q == 1, "{name} step {step}: {kind} produced an invalid graph: {:?}", v.diagnostics);
                    }
                    accepted += 1;
                    g = out.graphs[0].clone();
                }
                Err(_) => {
                    refused += 1;
                    ensure!(
                        g == before && serialize_workflow(&g) == text_before && *partner == partner_before,
                        "{name} step {step}: inputs changed after a refused {kind}"
                    );
                }
            }
        }
    }
    Ok(format!("{accepted} products valid, {refused} refusals left inputs intact"))
}

// ---------------------------------------------------------------------------
// 4. Parent sampling distribution

/// Closed form written out directly, without the max shift.
fn p_closed(scores: &[f64], lambda: f64, alpha: f64) -> Vec<f64> {
    let z: f64 = scores.iter().map(|s| (alpha * s).exp()).sum();
    scores.iter().map(|s| lambda / scores.len() as f64 + (1.0 - lambda) * (alpha * s).exp() / z).collect()
}

fn sampling() -> Outcome {
    let scores = [0.9, 0.8, 0.7];
    let draws = 1_000_000usize;
    let mut worst = 0.0f64;
    for (ci, lambda) in [0.0, 0.3, 0.5, 1.0].into_iter().enumerate() {
        for (cj, alpha) in [0.0, 1.0, 5.0].into_iter().enumerate() {
            let p = p_mixed(&scores, lambda, alpha).map_err(|e| e.to_string())?;
            let sum: f64 = p.iter().sum();
            ensure!((sum - 1.0).abs() <= 1e-12, "λ={lambda} α={alpha}: Σ={sum}");
            for (a, b) in p.iter().zip(p_closed(&scores, lambda, alpha)) {
                ensure!((a - b).abs() <= 1e-12, "λ={lambda} α={alpha}: {a} vs closed form {b}");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(40 + (ci * 3 + cj) as u64);
            let mut counts = [0usize; 3];
            for _ in 0..draws {
                counts[sample_parent(&scores, lambda, alpha, &mut rng).map_err(|e| e.to_string())?] += 1;
            }
            for i in 0..3 {
                let mean = draws as f64 * p[i];
                let sigma = (draws as f64 * p[i] * (1.0 - p[i])).sqrt();
                let z = (counts[i] as f64 - mean).abs() / sigma;
                worst = worst.max(z);
                ensure!(z <= 3.0, "λ={lambda} α={alpha} bucket {i}: {} draws, expected {mean:.0} (|z|={z:.2})", counts[i]);
            }
        }
    }
    Ok(format!("12 settings x 10^6 draws, max |z| = {worst:.2}"))
}

// ---------------------------------------------------------------------------
// 5. Proposer validity rate

fn proposer_validity() -> Outcome {
    let proposer = OperatorProposer::default();
    let mut pool: Vec<WorkflowGraph> = common::seeds().into_iter().map(|(_, g)| g).collect();
    let base = pool.len();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut valid, mut errors) = (0usize, 0usize);
    for i in 0..10_000 {
        let a = rng.gen_range(0..pool.len());
        let b = rng.gen_range(0..pool.len());
        let parents = [&pool[a], &pool[b]];
        match proposer.propose(&parents, None, &mut rng) {
            Ok(p) => {
                let v = validate_str(&p.text);
                ensure!(v.q == 1, "proposal {i} does not validate: {:?}\n{}", v.diagnostics, p.text);
                valid += 1;
                let g = graph_from_str(&p.text).map_err(|d| format!("{d:?}"))?;
                if pool.len() < base + 64 {
                    pool.push(g);
                } else {
                    let slot = base + rng.gen_range(0..64);
                    pool[slot] = g;
                }
            }
            Err(_) => errors += 1,
        }
    }
    ensure!(valid + errors == 10_000, "count mismatch");
    ensure!(errors == 0, "{errors} proposals produced no candidate");
    Ok(format!("{valid}/10000 candidates validate"))
}

// ---------------------------------------------------------------------------
// 6. End-to-end evolution

fn evolve(cfg: &EvolutionConfig, seeds: &[WorkflowGraph]) -> Result<Evolution, String> {
    let proposer = OperatorProposer::new(cfg.weights(), cfg.site_budget);
    run_evolution(seeds, cfg, &proposer, &StructuralJudge::default(), &SyntheticTaskEvaluator::gsm8k_like()).map_err(|e| e.to_string())
}

fn end_to_end() -> Outcome {
    let cfg = common::demo_config();
    ensure!(cfg.max_rounds == 20 && cfg.candidate_pool == 4 && cfg.seed == 3, "demo config drifted: {cfg:?}");
    let seed = graph_from_str(corpus::BASELINE_MATH).map_err(|d| format!("{d:?}"))?;
    let evo = evolve(&cfg, std::slice::from_ref(&seed))?;
    let gained = evo.history.len() - 1;
    ensure!(gained <= 20, "history gained {gained} entries");
    let mut prev = f64::NEG_INFINITY;
    for r in 0..=cfg.max_rounds {
        let best = evo.history.best_through(r).ok_or("empty history")?;
        ensure!(best >= prev, "best score fell at round {r}: {prev} -> {best}");
        prev = best;
    }
    let seed_score = evo.history.get(0).ok_or("no seed entry")?.score;
    let best = evo.history.best_score().ok_or("empty history")?;
    ensure!(best > seed_score, "no improvement: seed {seed_score}, best {best}");

    let manifest = evo.manifest(&cfg);
    let replay_seeds: Vec<WorkflowGraph> = manifest.seeds.iter().map(|t| graph_from_str(t)).collect::<Result<_, _>>().map_err(|d| format!("{d:?}"))?;
    let again = evolve(&manifest.config, &replay_seeds)?;
    ensure!(again.history.to_jsonl() == evo.history.to_jsonl(), "replay differs");
    ensure!(again.manifest(&cfg) == manifest, "replay manifest differs");
    Ok(format!("{gained} entries gained, best {seed_score:.4} -> {best:.4}, replay byte-identical"))
}

// ---------------------------------------------------------------------------
// 7. Codegen fidelity

fn codegen() -> Outcome {
    let t = Templates::default_set();
    for (name, text) in corpus::CASE_STUDIES {
        let g = graph_from_str(text).map_err(|d| format!("{d:?}"))?;
        let out = generate(&g, &t).map_err(|e| format!("{name}: {e}"))?;
        let report = structural_diff(&out.program, &g, &t);
        ensure!(report.is_empty(), "{name}: {report:?}");
        let exec: BTreeSet<String> = g.nodes().filter(|n| !n.kind.is_interface()).map(|n| n.id.to_string()).collect();
        let matched: Vec<String> = report.call_nodes.iter().flatten().cloned().collect();
        let unique: BTreeSet<String> = matched.iter().cloned().collect();
        ensure!(unique.len() == matched.len() && unique == exec, "{name}: call/node bijection broken");
        let ir = lower_to_ir(&g).map_err(|e| e.to_string())?;
        for c in ir.node_calls() {
            if c.kind == "ScEnsembleOp" {
                let Some((_, Operand::List { items })) = c.args.iter().find(|(p, _)| p == "solutions") else {
                    return Err(format!("{name}: ensemble without a solution list"));
                };
                ensure!(items.len() == g.in_degree(c.node.as_str()), "{name}: ensemble arity {} vs in-degree", items.len());
            }
        }
    }
    let g = graph_from_str(corpus::GSM8K).map_err(|d| format!("{d:?}"))?;
    let listing = structural_diff(LISTING_GSM8K, &g, &t);
    ensure!(listing.is_empty(), "listing: {listing:?}");
    let ours = structural_diff(&generate(&g, &t).map_err(|e| e.to_string())?.program, &g, &t);
    ensure!(listing.call_nodes == ours.call_nodes, "call order differs from the listing");
    let ir = lower_to_ir(&g).map_err(|e| e.to_string())?;
    let calls = ir.node_calls();
    let ens = calls.iter().find(|c| c.kind == "ScEnsembleOp").ok_or("no ensemble")?;
    let Some((_, Operand::List { items })) = ens.args.iter().find(|(p, _)| p == "solutions") else { return Err("no solutions".into()) };
    ensure!(items.len() == 6, "ensemble takes {} inputs", items.len());
    let tail = calls.last().ok_or("no calls")?;
    ensure!(tail.kind == "ProgrammerOp", "tail is {}", tail.kind);
    ensure!(
        tail.args.iter().any(|(_, o)| *o == Operand::Output { binding: ens.binding.clone(), kind: ens.kind.clone() }),
        "tail does not refine the ensemble output"
    );
    ensure!(ir.terminal == Operand::Output { binding: tail.binding.clone(), kind: tail.kind.clone() }, "terminal is not the tail");
    Ok("4 workflows audit clean; GSM8K matches the published call graph".into())
}

// ---------------------------------------------------------------------------
// 8. Operator locality and inverse properties

fn sites_of(kind: OperatorKind, g: &WorkflowGraph) -> Vec<Site> {
    enumerate_sites(kind, g, None, &[])
}

fn locality() -> Outcome {
    let seeds = common::seeds();
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 1000, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let counts: [Cell<usize>; 4] = Default::default();
    let strategy = (0..seeds.len(), 0..10usize, any::<u64>(), any::<u64>());
    let result = runner.run(&strategy, |(si, steps, fixture_seed, pick)| {
        let g = common::random_fixture(&seeds, si, steps, fixture_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(pick);

        let subs = sites_of(OperatorKind::Substitution, &g);
        if !subs.is_empty() {
            if let Ok(out) = apply_site(&subs[rng.gen_range(0..subs.len())], &g, None, &[]) {
                let h = out.graph();
                prop_assert_eq!(h.edges(), g.edges());
                let ids_g: Vec<&NodeId> = g.nodes().map(|n| &n.id).collect();
                let ids_h: Vec<&NodeId> = h.nodes().map(|n| &n.id).collect();
                prop_assert_eq!(ids_g, ids_h);
                let changed = g.nodes().zip(h.nodes()).filter(|(a, b)| a != b).collect::<Vec<_>>();
                prop_assert_eq!(changed.len(), 1);
                let (a, b) = changed[0];
                prop_assert!(a.kind == b.kind && a.attributes != b.attributes);
                counts[0].set(counts[0].get() + 1);
            }
        }

        let adds = sites_of(OperatorKind::Addition, &g);
        if !adds.is_empty() {
            if let Ok(out) = apply_site(&adds[rng.gen_range(0..adds.len())], &g, None, &[]) {
                let h = out.graph();
                prop_assert_eq!(h.nodes().count(), g.nodes().count() + 1);
                prop_assert_eq!(h.edges().len(), g.edges().len() + 1);
                let new_id = h.nodes().find(|n| !g.contains(n.id.as_str())).map(|n| n.id.clone()).ok_or_else(|| TestCaseError::fail("no new node"))?;
                let back = delete_node(h, new_id.as_str()).map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert!(back.graph() == &g, "add then delete is not the identity");
                counts[1].set(counts[1].get() + 1);
            }
        }

        let dels = sites_of(OperatorKind::Deletion, &g);
        if !dels.is_empty() {
            if let Ok(out) = apply_site(&dels[rng.gen_range(0..dels.len())], &g, None, &[]) {
                prop_assert_eq!(out.graph().nodes().count() + 1, g.nodes().count());
                prop_assert_eq!(out.graph().edges().len() + 1, g.edges().len());
                counts[2].set(counts[2].get() + 1);
            }
        }

        // Without an executable node there is no crossover point at all.
        if crossover_points(&g, &g).is_empty() {
            prop_assert!(matches!(crossover(&g, &g, &CrossoverPoint::Auto), Err(OperatorError::NoCrossoverPoint)));
            return Ok(());
        }
        let out = crossover(&g, &g, &CrossoverPoint::Auto).map_err(|e| TestCaseError::fail(format!("self-crossover: {e}")))?;
        prop_assert_eq!(out.graphs.len(), 2);
        prop_assert!(out.graphs.iter().all(|c| c == &g), "self-crossover changed the graph");
        counts[3].set(counts[3].get() + 1);
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok(format!(
        "1000 fixtures: {} substitutions local, {} add/delete inverses, {} deletions, {} self-crossovers",
        counts[0].get(), counts[1].get(), counts[2].get(), counts[3].get()
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("corpus validity", Duration::from_secs(1), corpus_validity),
        ("validator oracle equivalence", Duration::from_secs(60), validator_oracle),
        ("closure under operators", Duration::from_secs(120), closure),
        ("sampling distribution", Duration::from_secs(30), sampling),
        ("proposer validity rate", Duration::from_secs(60), proposer_validity),
        ("end-to-end evolution", Duration::from_secs(120), end_to_end),
        ("codegen fidelity", Duration::from_secs(5), codegen),
        ("operator locality and inverses", Duration::from_secs(60), locality),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let (verdict, detail) = match result {
            Ok(d) if took <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {:.2}s, budget {}s", took.as_secs_f64(), budget.as_secs())),
            Err(e) => ("FAIL", e),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("criterion {} {name}: {verdict} ({detail}) [{:.2}s]", i + 1, took.as_secs_f64());
    }
    if failed > 0 {
        eprintln!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
